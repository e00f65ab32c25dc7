// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/io.hpp"

#include <fstream>

namespace seekersim {

json profile_to_json(const SeekerProfile& p) {
  json j;
  j["coping_strategy"] = to_string(p.coping_strategy);
  j["utterance_style"] = to_string(p.utterance_style);
  j["resistance_level"] = to_string(p.resistance_level);
  j["engagement_level"] = to_string(p.engagement_level);
  j["self_disclosure_level"] = p.self_disclosure_level;
  j["reaction_proportions"] = {{"positive", p.reaction_proportions.positive},
                               {"neutral", p.reaction_proportions.neutral},
                               {"negative", p.reaction_proportions.negative}};
  j["profanity_flag"] = p.profanity_flag;
  j["verbosity_level"] = to_string(p.verbosity_level);
  j["total_turns_level"] = to_string(p.total_turns_level);
  j["main_problem"] = p.main_problem;
  return j;
}

SeekerProfile profile_from_json(const json& j) {
  SeekerProfile p;
  p.coping_strategy = coping_from_string(j.at("coping_strategy").get<std::string>());
  p.utterance_style = style_from_string(j.at("utterance_style").get<std::string>());
  p.resistance_level =
      level3_from_string(j.at("resistance_level").get<std::string>(), "resistance_level");
  p.engagement_level =
      level3_from_string(j.at("engagement_level").get<std::string>(), "engagement_level");
  p.self_disclosure_level = j.at("self_disclosure_level").get<int>();
  const auto& r = j.at("reaction_proportions");
  p.reaction_proportions = {r.at("positive").get<double>(),
                            r.at("neutral").get<double>(),
                            r.at("negative").get<double>()};
  p.profanity_flag = j.at("profanity_flag").get<bool>();
  p.verbosity_level = verbosity_from_string(j.at("verbosity_level").get<std::string>());
  p.total_turns_level = turns_from_string(j.at("total_turns_level").get<std::string>());
  p.main_problem = j.at("main_problem").get<std::string>();
  return p;
}

json dialogue_to_json(const Dialogue& d) {
  json j;
  j["dialogue_id"] = d.dialogue_id;
  json turns = json::array();
  for (const auto& t : d.turns)
    turns.push_back({{"role", to_string(t.role)}, {"text", t.text}});
  j["turns"] = std::move(turns);
  if (d.profile) j["profile"] = profile_to_json(*d.profile);
  if (d.terminated_by) j["terminated_by"] = to_string(*d.terminated_by);
  if (!d.metadata.empty()) j["metadata"] = d.metadata;
  return j;
}

Dialogue dialogue_from_json(const json& j) {
  Dialogue d;
  d.dialogue_id = j.at("dialogue_id").get<std::string>();
  int index = 0;
  for (const auto& t : j.at("turns")) {
    Turn turn;
    turn.role = role_from_string(t.at("role").get<std::string>());
    turn.text = t.at("text").get<std::string>();
    turn.index = index++;
    d.turns.push_back(std::move(turn));
  }
  if (j.contains("profile")) d.profile = profile_from_json(j.at("profile"));
  if (j.contains("terminated_by"))
    d.terminated_by = termination_from_string(j.at("terminated_by").get<std::string>());
  if (j.contains("metadata"))
    d.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  return d;
}

std::vector<Dialogue> read_dialogues_jsonl(const std::filesystem::path& path) {
  std::vector<Dialogue> out;
  for (const auto& j : read_jsonl(path)) out.push_back(dialogue_from_json(j));
  return out;
}

void write_dialogues_jsonl(const std::filesystem::path& path,
                           const std::vector<Dialogue>& dialogues) {
  std::vector<json> rows;
  rows.reserve(dialogues.size());
  for (const auto& d : dialogues) rows.push_back(dialogue_to_json(d));
  write_jsonl(path, rows);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << "\n";
}

void append_jsonl(const std::filesystem::path& path, const json& row) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << row.dump() << "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace seekersim
