// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0

#include "seekersim/checkpoint.hpp"

#include <fstream>

#include "seekersim/io.hpp"

namespace seekersim {

namespace {

template <typename S>
const char* dtype_name();
template <>
const char* dtype_name<float>() {
  return "float32";
}
template <>
const char* dtype_name<double>() {
  return "float64";
}

json backbone_config_to_json(const BackboneConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
          {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"ffn_dim", c.ffn_dim},       {"max_context", c.max_context},
          {"specials",
           {{"pad", c.specials.pad},
            {"unk", c.specials.unk},
            {"bos", c.specials.bos},
            {"eot", c.specials.eot},
            {"end_of_dialogue", c.specials.end_of_dialogue},
            {"seeker", c.specials.seeker},
            {"supporter", c.specials.supporter},
            {"profile_open", c.specials.profile_open},
            {"profile_close", c.specials.profile_close}}}};
}

BackboneConfig backbone_config_from_json(const json& j) {
  BackboneConfig c;
  c.vocab_size = j.at("vocab_size");
  c.d_model = j.at("d_model");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.ffn_dim = j.at("ffn_dim");
  c.max_context = j.at("max_context");
  const auto& s = j.at("specials");
  c.specials.pad = s.at("pad");
  c.specials.unk = s.at("unk");
  c.specials.bos = s.at("bos");
  c.specials.eot = s.at("eot");
  c.specials.end_of_dialogue = s.at("end_of_dialogue");
  c.specials.seeker = s.at("seeker");
  c.specials.supporter = s.at("supporter");
  c.specials.profile_open = s.at("profile_open");
  c.specials.profile_close = s.at("profile_close");
  return c;
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& dir, MolaModel<S>& model,
                     const Tokenizer& tokenizer, const std::string& kind) {
  std::filesystem::create_directories(dir);

  json config;
  config["kind"] = kind;
  config["dtype"] = dtype_name<S>();
  config["backbone"] = backbone_config_to_json(model.backbone.config);
  config["router"] = {{"input_dim", model.router.config.input_dim},
                      {"hidden", model.router.config.hidden},
                      {"n_blocks", model.router.config.n_blocks},
                      {"n_experts", model.router.config.n_experts},
                      {"mlp_expansion", model.router.config.mlp_expansion},
                      {"layer_norm_eps", model.router.config.layer_norm_eps}};
  config["projection"] = {{"n_experts", model.head.config.n_experts},
                          {"dim", model.head.config.dim}};
  config["lora"] = {{"rank", model.lora.rank},
                    {"n_experts", model.lora.n_experts},
                    {"alpha", model.lora.alpha},
                    {"use_alpha_over_rank", model.lora.use_alpha_over_rank},
                    {"a_init_std", model.lora.a_init_std}};
  write_text_file(dir / "config.json", config.dump(2) + "\n");

  json index = json::array();
  std::ofstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw IoError("cannot write " + (dir / "tensors.bin").string());
  size_t offset = 0;
  visit_params(model, [&](const std::string& name, Mat<S>& m) {
    index.push_back({{"name", name},
                     {"rows", m.rows()},
                     {"cols", m.cols()},
                     {"offset", offset}});
    size_t bytes = sizeof(S) * static_cast<size_t>(m.size());
    bin.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(bytes));
    offset += bytes;
  });
  write_text_file(dir / "tensors.json", index.dump() + "\n");
  tokenizer.save(dir / "vocab.txt");
}

template <typename S>
LoadedModel<S> load_checkpoint(const std::filesystem::path& dir) {
  json config = json::parse(read_text_file(dir / "config.json"));
  expect(config.at("dtype") == dtype_name<S>(),
         "checkpoint dtype is " + config.at("dtype").get<std::string>() +
             ", expected " + dtype_name<S>());

  LoadedModel<S> out;
  out.kind = config.value("kind", "mola");
  out.tokenizer = Tokenizer::load(dir / "vocab.txt");

  BackboneConfig bb_cfg = backbone_config_from_json(config.at("backbone"));
  RouterConfig r_cfg;
  const auto& rj = config.at("router");
  r_cfg.input_dim = rj.at("input_dim");
  r_cfg.hidden = rj.at("hidden");
  r_cfg.n_blocks = rj.at("n_blocks");
  r_cfg.n_experts = rj.at("n_experts");
  r_cfg.mlp_expansion = rj.at("mlp_expansion");
  r_cfg.layer_norm_eps = rj.at("layer_norm_eps");
  ProjectionConfig p_cfg;
  p_cfg.n_experts = config.at("projection").at("n_experts");
  p_cfg.dim = config.at("projection").at("dim");
  LoraConfig lora;
  const auto& lj = config.at("lora");
  lora.rank = lj.at("rank");
  lora.n_experts = lj.at("n_experts");
  lora.alpha = lj.at("alpha");
  lora.use_alpha_over_rank = lj.at("use_alpha_over_rank");
  lora.a_init_std = lj.at("a_init_std");

  out.model = init_mola<S>(bb_cfg, r_cfg, p_cfg, lora, /*seed=*/0);

  struct Entry {
    Eigen::Index rows, cols;
    size_t offset;
  };
  std::map<std::string, Entry> index;
  for (const auto& e : json::parse(read_text_file(dir / "tensors.json")))
    index[e.at("name")] = {e.at("rows"), e.at("cols"), e.at("offset")};

  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + (dir / "tensors.bin").string());
  size_t loaded = 0;
  visit_params(out.model, [&](const std::string& name, Mat<S>& m) {
    auto it = index.find(name);
    if (it == index.end()) throw IoError("checkpoint missing tensor " + name);
    expect(it->second.rows == m.rows() && it->second.cols == m.cols(),
           "checkpoint tensor shape mismatch for " + name);
    bin.seekg(static_cast<std::streamoff>(it->second.offset));
    bin.read(reinterpret_cast<char*>(m.data()),
             static_cast<std::streamsize>(sizeof(S) * static_cast<size_t>(m.size())));
    if (!bin) throw IoError("truncated checkpoint while reading " + name);
    ++loaded;
  });
  expect(loaded == index.size(), "checkpoint has extra tensors");
  return out;
}

std::string checkpoint_dtype(const std::filesystem::path& dir) {
  json config = json::parse(read_text_file(dir / "config.json"));
  return config.at("dtype");
}

template void save_checkpoint<float>(const std::filesystem::path&, MolaModel<float>&,
                                     const Tokenizer&, const std::string&);
template void save_checkpoint<double>(const std::filesystem::path&, MolaModel<double>&,
                                      const Tokenizer&, const std::string&);
template LoadedModel<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedModel<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace seekersim
