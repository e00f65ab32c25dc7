// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//   config.json   - model configs, dtype, kind
//   tensors.json  - index: [{name, rows, cols, offset}]
//   tensors.bin   - raw little-endian tensor data, in index order
//   vocab.txt     - tokenizer vocabulary, one token per line
#pragma once

#include <filesystem>
#include <string>

#include "seekersim/model.hpp"
#include "seekersim/tokenizer.hpp"

namespace seekersim {

template <typename S>
struct LoadedModel {
  MolaModel<S> model;
  Tokenizer tokenizer;
  std::string kind;
};

template <typename S>
void save_checkpoint(const std::filesystem::path& dir, MolaModel<S>& model,
                     const Tokenizer& tokenizer, const std::string& kind);

template <typename S>
LoadedModel<S> load_checkpoint(const std::filesystem::path& dir);

// dtype string stored in the manifest ("float32" or "float64").
std::string checkpoint_dtype(const std::filesystem::path& dir);

}  // namespace seekersim
