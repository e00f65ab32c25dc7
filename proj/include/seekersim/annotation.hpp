// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// LLM-backed feature tagging, main-problem summarization, and topic
// filtering, with strict response parsing and a replayable audit trail.
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seekersim/featurizer.hpp"
#include "seekersim/profile.hpp"

namespace seekersim {

// ---------------------------------------------------------------------------
// Backend

struct RetryPolicy {
  int max_attempts = 3;
  int initial_backoff_ms = 1000;
  double backoff_multiplier = 2.0;
};

class TaggerBackend {
 public:
  virtual ~TaggerBackend() = default;
  virtual std::string complete(const std::string& system_prompt,
                               const std::string& user_prompt) = 0;
  virtual std::string model_name() const = 0;
};

// Deterministic mock: replies come from a routing function over the user
// prompt. Used by every test.
class MockBackend : public TaggerBackend {
 public:
  explicit MockBackend(std::function<std::string(const std::string&,
                                                 const std::string&)> reply_fn,
                       std::string name = "mock");
  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt) override;
  std::string model_name() const override { return name_; }
  int calls() const { return calls_; }

 private:
  std::function<std::string(const std::string&, const std::string&)> reply_fn_;
  std::string name_;
  int calls_ = 0;
};

// OpenAI-style chat-completion endpoint. The auth token is read from an
// environment variable, never from configuration files.
struct HttpBackendConfig {
  std::string base_url;  // e.g. http://localhost:8080
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "BACKEND_API_KEY";
  int timeout_seconds = 60;
};

class HttpChatBackend : public TaggerBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  std::string complete(const std::string& system_prompt,
                       const std::string& user_prompt) override;
  std::string model_name() const override { return config_.model; }

 private:
  HttpBackendConfig config_;
};

// ---------------------------------------------------------------------------
// Prompt bank (templates carried verbatim; slots only for dialogue text and
// main problem)

struct PromptBank {
  static const std::string& common_system_instruction();
  // Dialogue-level tagging prompts, one per feature label name.
  static const std::string& dialogue_level_prompt(Feature f);
  // Turn-level tagging prompts (reaction, self-disclosure).
  static const std::string& turn_level_prompt(Feature f);
  static const std::string& summary_system_prompt();
  static const std::string& summary_user_template();  // slot: {OP text}
  static const std::string& supporter_role_prompt();
  static const std::string& topic_filter_prompt();
};

std::string render_dialogue(const Dialogue& d);

// ---------------------------------------------------------------------------
// Audit trail

struct AuditRecord {
  std::string kind;         // dialogue_tag / turn_tag / summary / topic / judge
  std::string feature;
  std::string dialogue_id;
  uint64_t prompt_hash = 0;  // FNV-1a of system + user prompt
  std::string raw_reply;
  std::string parsed_label;
  bool canonicalized = false;  // label arrived via the style mapping
};

class AuditSink {
 public:
  virtual ~AuditSink() = default;
  virtual void record(const AuditRecord& r) = 0;
};

class MemoryAuditSink : public AuditSink {
 public:
  void record(const AuditRecord& r) override { records_.push_back(r); }
  const std::vector<AuditRecord>& records() const { return records_; }

 private:
  std::vector<AuditRecord> records_;
};

class JsonlAuditSink : public AuditSink {
 public:
  explicit JsonlAuditSink(std::filesystem::path path);
  void record(const AuditRecord& r) override;

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Tagging operations

struct AnnotationConfig {
  RetryPolicy retry;
  ExtractionConfig extraction;
  AuditSink* audit = nullptr;  // optional
};

class PartialProfileError : public TaggingError {
 public:
  PartialProfileError(const std::string& what, std::vector<std::string> missing)
      : TaggingError(what), missing_fields(std::move(missing)) {}
  std::vector<std::string> missing_fields;
};

// Parses a reply into exactly one canonical label for `feature`; the six
// style surface forms collapse to the three canonical ones.
struct ParsedLabel {
  std::string label;
  bool canonicalized = false;
};
std::optional<ParsedLabel> parse_label_reply(const std::string& reply, Feature f);

std::string tag_dialogue_level(const Dialogue& d, Feature feature,
                               TaggerBackend& backend, const AnnotationConfig& cfg);

std::string tag_turn_level(const Turn& supporter_turn, const Turn& seeker_turn,
                           const std::string& main_problem, Feature feature,
                           TaggerBackend& backend, const AnnotationConfig& cfg,
                           const std::string& dialogue_id = "");

std::string summarize_main_problem(const std::string& first_post_text,
                                   TaggerBackend& backend,
                                   const AnnotationConfig& cfg,
                                   const std::string& dialogue_id = "");

enum class TopicDecision { Keep, Drop };
// Fail-open: an unparseable reply keeps the dialogue and logs a warning.
TopicDecision topic_filter(const Dialogue& d, TaggerBackend& backend,
                           const AnnotationConfig& cfg,
                           bool* parse_warning = nullptr);

// Composes dialogue-level tags, aggregated turn-level tags, rule-based
// linguistic features, and the summarized main problem into a validated
// profile. With a deterministic backend this is a pure function of the
// dialogue.
SeekerProfile annotate_profile(const Dialogue& d, TaggerBackend& backend,
                               const ProfanityScorer& profanity,
                               const AnnotationConfig& cfg);

// Sentence count used by the summary format check.
int count_sentences(const std::string& text);

}  // namespace seekersim
