// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "seekersim/common.hpp"

namespace seekersim {

// Word-level tokenizer over a fixed vocabulary. The vocabulary file stores
// one token per line; the id is the line number.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::string> vocab);

  static Tokenizer load(const std::filesystem::path& vocab_file);
  void save(const std::filesystem::path& vocab_file) const;

  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  int id(const std::string& token) const;        // unk id when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  // Special tokens; fixed leading slots in every vocabulary.
  static const std::string kPad;
  static const std::string kUnk;
  static const std::string kBos;
  static const std::string kEot;           // end of utterance
  static const std::string kEndOfDialogue; // learned termination token
  static const std::string kSeeker;
  static const std::string kSupporter;
  static const std::string kProfileOpen;
  static const std::string kProfileClose;

  int pad_id() const { return id(kPad); }
  int unk_id() const { return unk_id_; }
  int bos_id() const { return id(kBos); }
  int eot_id() const { return id(kEot); }
  int end_of_dialogue_id() const { return id(kEndOfDialogue); }
  int seeker_id() const { return id(kSeeker); }
  int supporter_id() const { return id(kSupporter); }

  static std::vector<std::string> special_tokens();

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  int unk_id_ = 0;
};

}  // namespace seekersim
