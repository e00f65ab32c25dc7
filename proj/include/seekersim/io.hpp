// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "seekersim/profile.hpp"

namespace seekersim {

using json = nlohmann::json;

// Profile <-> JSON. Field names are the snake_case feature names; values
// round-trip bit-exactly (doubles use shortest-round-trip formatting).
json profile_to_json(const SeekerProfile& p);
SeekerProfile profile_from_json(const json& j);

// Dialogue <-> JSON: {dialogue_id, turns:[{role,text}], profile?, ...}.
json dialogue_to_json(const Dialogue& d);
Dialogue dialogue_from_json(const json& j);

// JSON Lines: one dialogue object per line.
std::vector<Dialogue> read_dialogues_jsonl(const std::filesystem::path& path);
void write_dialogues_jsonl(const std::filesystem::path& path,
                           const std::vector<Dialogue>& dialogues);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);
void append_jsonl(const std::filesystem::path& path, const json& row);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace seekersim
