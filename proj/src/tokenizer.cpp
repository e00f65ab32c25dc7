// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/tokenizer.hpp"

#include <fstream>

namespace seekersim {

const std::string Tokenizer::kPad = "<pad>";
const std::string Tokenizer::kUnk = "<unk>";
const std::string Tokenizer::kBos = "<bos>";
const std::string Tokenizer::kEot = "<eot>";
const std::string Tokenizer::kEndOfDialogue = "<|end_of_dialogue|>";
const std::string Tokenizer::kSeeker = "<seeker>";
const std::string Tokenizer::kSupporter = "<supporter>";
const std::string Tokenizer::kProfileOpen = "<profile>";
const std::string Tokenizer::kProfileClose = "</profile>";

std::vector<std::string> Tokenizer::special_tokens() {
  return {kPad, kUnk, kBos, kEot, kEndOfDialogue, kSeeker, kSupporter,
          kProfileOpen, kProfileClose};
}

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (size_t i = 0; i < vocab_.size(); ++i) {
    auto [it, inserted] = index_.emplace(vocab_[i], static_cast<int>(i));
    if (!inserted) throw ValidationError("duplicate vocabulary token '" + vocab_[i] + "'");
  }
  auto it = index_.find(kUnk);
  expect(it != index_.end(), "vocabulary must contain " + kUnk);
  unk_id_ = it->second;
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_file) {
  std::ifstream in(vocab_file);
  if (!in) throw IoError("cannot open vocabulary " + vocab_file.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) vocab.push_back(line);
  }
  return Tokenizer(std::move(vocab));
}

void Tokenizer::save(const std::filesystem::path& vocab_file) const {
  if (vocab_file.has_parent_path())
    std::filesystem::create_directories(vocab_file.parent_path());
  std::ofstream out(vocab_file);
  if (!out) throw IoError("cannot write vocabulary " + vocab_file.string());
  for (const auto& t : vocab_) out << t << "\n";
}

int Tokenizer::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_id_ : it->second;
}

bool Tokenizer::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const std::string& Tokenizer::token(int id) const {
  expect(id >= 0 && id < vocab_size(), "token id out of range");
  return vocab_[static_cast<size_t>(id)];
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& tok : split_whitespace(text)) out.push_back(id(tok));
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

}  // namespace seekersim
