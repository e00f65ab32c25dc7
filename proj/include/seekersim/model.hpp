// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only toy language model with low-rank expert adapters on every
// attention and FFN linear, a shared dialogue-level routing network, and a
// projection head for the routing-contrast loss. Scalar-templated: float for
// training speed, double for gradient checks and equivalence tests.
#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seekersim/autograd.hpp"
#include "seekersim/profile.hpp"
#include "seekersim/tokenizer.hpp"

namespace seekersim {

// ---------------------------------------------------------------------------
// Configuration

struct SpecialTokenIds {
  int pad = 0, unk = 1, bos = 2, eot = 3, end_of_dialogue = 4;
  int seeker = 5, supporter = 6, profile_open = 7, profile_close = 8;
};

struct BackboneConfig {
  int vocab_size = 512;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_dim = 256;
  int max_context = 512;
  SpecialTokenIds specials;

  int head_dim() const { return d_model / n_heads; }
  void check() const {
    expect(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    expect(specials.end_of_dialogue >= 0 && specials.end_of_dialogue < vocab_size,
           "end_of_dialogue token must be in the vocabulary");
    expect(vocab_size > 0 && n_layers > 0 && max_context > 0, "bad config");
  }

  static BackboneConfig toy(const Tokenizer& tok) {
    BackboneConfig c;
    c.vocab_size = tok.vocab_size();
    c.specials.pad = tok.pad_id();
    c.specials.unk = tok.unk_id();
    c.specials.bos = tok.bos_id();
    c.specials.eot = tok.eot_id();
    c.specials.end_of_dialogue = tok.end_of_dialogue_id();
    c.specials.seeker = tok.seeker_id();
    c.specials.supporter = tok.supporter_id();
    c.specials.profile_open = tok.id(Tokenizer::kProfileOpen);
    c.specials.profile_close = tok.id(Tokenizer::kProfileClose);
    c.check();
    return c;
  }
};

struct RouterConfig {
  int input_dim = kFeatureVectorDim;
  int hidden = 64;
  int n_blocks = 3;
  int n_experts = 4;
  int mlp_expansion = 4;
  double layer_norm_eps = 1e-5;
};

struct ProjectionConfig {
  int n_experts = 4;
  int dim = 64;
};

struct LoraConfig {
  int rank = 4;
  int n_experts = 4;
  // The expert delta has no scaling factor by default; the classic
  // alpha/rank convention is available via use_alpha_over_rank.
  double alpha = 0.0;
  bool use_alpha_over_rank = false;
  double a_init_std = 0.02;

  double scale() const { return use_alpha_over_rank ? alpha / rank : 1.0; }
};

// ---------------------------------------------------------------------------
// Parameters

template <typename S>
struct LoraAdapter {
  Mat<S> A;  // [d_in x r], small Gaussian
  Mat<S> B;  // [r x d_out], zero so the delta starts at zero
  S scale = 1;

  int rank() const { return static_cast<int>(A.cols()); }
};

template <typename S>
struct ExpertLinear {
  Mat<S> weight;  // [d_in x d_out]; inputs are rows
  Mat<S> bias;    // [1 x d_out]
  std::vector<LoraAdapter<S>> experts;
};

template <typename S>
struct DecoderLayer {
  Mat<S> ln1_g, ln1_b, ln2_g, ln2_b;
  ExpertLinear<S> wq, wk, wv, wo, w1, w2;
};

template <typename S>
struct Backbone {
  BackboneConfig config;
  Mat<S> tok_embed;  // [V x d]
  Mat<S> pos_embed;  // [max_context x d]
  Mat<S> lnf_g, lnf_b;
  Mat<S> unembed;    // [d x V]
  std::vector<DecoderLayer<S>> layers;
};

template <typename S>
struct RouterBlock {
  Mat<S> w1, b1, w2, b2, ln_g, ln_b;
};

template <typename S>
struct RoutingNetwork {
  RouterConfig config;
  Mat<S> in_w, in_b;  // input_dim -> hidden
  std::vector<RouterBlock<S>> blocks;
  Mat<S> gate_w, gate_b;  // hidden -> n_experts; bias zero-initialized
};

template <typename S>
struct ProjectionHead {
  ProjectionConfig config;
  Mat<S> w1, b1;  // n_experts -> dim
  Mat<S> w2, b2;  // dim -> dim
};

template <typename S>
struct MolaModel {
  Backbone<S> backbone;
  RoutingNetwork<S> router;
  ProjectionHead<S> head;
  LoraConfig lora;
};

// ---------------------------------------------------------------------------
// Initialization

template <typename S>
Mat<S> randn_mat(int rows, int cols, std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  Mat<S> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<S>(dist(rng));
  return m;
}

template <typename S>
LoraAdapter<S> init_adapter(int d_in, int d_out, const LoraConfig& cfg,
                            std::mt19937_64& rng) {
  LoraAdapter<S> a;
  a.A = randn_mat<S>(d_in, cfg.rank, rng, cfg.a_init_std);
  a.B = Mat<S>::Zero(cfg.rank, d_out);
  a.scale = static_cast<S>(cfg.scale());
  return a;
}

template <typename S>
ExpertLinear<S> init_linear(int d_in, int d_out, std::mt19937_64& rng,
                            double w_std = 0.02) {
  ExpertLinear<S> lin;
  lin.weight = randn_mat<S>(d_in, d_out, rng, w_std);
  lin.bias = Mat<S>::Zero(1, d_out);
  return lin;
}

// Attaches fresh zero-delta experts to every attention and FFN linear.
template <typename S>
void attach_experts(Backbone<S>& bb, const LoraConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xada77e75ULL));
  for (auto& layer : bb.layers) {
    for (ExpertLinear<S>* lin :
         {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1, &layer.w2}) {
      expect(lin->experts.empty(), "linear already carries adapters");
      for (int e = 0; e < cfg.n_experts; ++e)
        lin->experts.push_back(init_adapter<S>(
            static_cast<int>(lin->weight.rows()),
            static_cast<int>(lin->weight.cols()), cfg, rng));
    }
  }
}

template <typename S>
Backbone<S> init_backbone(const BackboneConfig& cfg, uint64_t seed) {
  cfg.check();
  std::mt19937_64 rng(derive_seed(seed, 0xbb));
  Backbone<S> bb;
  bb.config = cfg;
  bb.tok_embed = randn_mat<S>(cfg.vocab_size, cfg.d_model, rng, 0.02);
  bb.pos_embed = randn_mat<S>(cfg.max_context, cfg.d_model, rng, 0.02);
  bb.lnf_g = Mat<S>::Ones(1, cfg.d_model);
  bb.lnf_b = Mat<S>::Zero(1, cfg.d_model);
  bb.unembed = randn_mat<S>(cfg.d_model, cfg.vocab_size, rng, 0.02);
  for (int l = 0; l < cfg.n_layers; ++l) {
    DecoderLayer<S> layer;
    layer.ln1_g = Mat<S>::Ones(1, cfg.d_model);
    layer.ln1_b = Mat<S>::Zero(1, cfg.d_model);
    layer.ln2_g = Mat<S>::Ones(1, cfg.d_model);
    layer.ln2_b = Mat<S>::Zero(1, cfg.d_model);
    layer.wq = init_linear<S>(cfg.d_model, cfg.d_model, rng);
    layer.wk = init_linear<S>(cfg.d_model, cfg.d_model, rng);
    layer.wv = init_linear<S>(cfg.d_model, cfg.d_model, rng);
    layer.wo = init_linear<S>(cfg.d_model, cfg.d_model, rng);
    layer.w1 = init_linear<S>(cfg.d_model, cfg.ffn_dim, rng);
    layer.w2 = init_linear<S>(cfg.ffn_dim, cfg.d_model, rng);
    bb.layers.push_back(std::move(layer));
  }
  return bb;
}

template <typename S>
RoutingNetwork<S> init_router(const RouterConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x4077e4ULL));
  RoutingNetwork<S> r;
  r.config = cfg;
  r.in_w = randn_mat<S>(cfg.input_dim, cfg.hidden, rng, 0.05);
  r.in_b = Mat<S>::Zero(1, cfg.hidden);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    RouterBlock<S> blk;
    int wide = cfg.hidden * cfg.mlp_expansion;
    blk.w1 = randn_mat<S>(cfg.hidden, wide, rng, 0.05);
    blk.b1 = Mat<S>::Zero(1, wide);
    blk.w2 = randn_mat<S>(wide, cfg.hidden, rng, 0.05);
    blk.b2 = Mat<S>::Zero(1, cfg.hidden);
    blk.ln_g = Mat<S>::Ones(1, cfg.hidden);
    blk.ln_b = Mat<S>::Zero(1, cfg.hidden);
    r.blocks.push_back(std::move(blk));
  }
  r.gate_w = randn_mat<S>(cfg.hidden, cfg.n_experts, rng, 0.05);
  r.gate_b = Mat<S>::Zero(1, cfg.n_experts);
  return r;
}

template <typename S>
ProjectionHead<S> init_head(const ProjectionConfig& cfg, uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x4ead));
  ProjectionHead<S> h;
  h.config = cfg;
  h.w1 = randn_mat<S>(cfg.n_experts, cfg.dim, rng, 0.1);
  h.b1 = Mat<S>::Zero(1, cfg.dim);
  h.w2 = randn_mat<S>(cfg.dim, cfg.dim, rng, 0.1);
  h.b2 = Mat<S>::Zero(1, cfg.dim);
  return h;
}

template <typename S>
MolaModel<S> init_mola(const BackboneConfig& bb_cfg, const RouterConfig& r_cfg,
                       const ProjectionConfig& p_cfg, const LoraConfig& lora,
                       uint64_t seed) {
  MolaModel<S> m;
  m.backbone = init_backbone<S>(bb_cfg, seed);
  m.router = init_router<S>(r_cfg, seed);
  m.head = init_head<S>(p_cfg, seed);
  m.lora = lora;
  if (lora.n_experts > 0) attach_experts(m.backbone, lora, seed);
  return m;
}

// ---------------------------------------------------------------------------
// Parameter visitation (checkpointing, optimizers, grad checks)

template <typename S, typename F>
void visit_params(ExpertLinear<S>& lin, const std::string& prefix, F&& f) {
  f(prefix + ".weight", lin.weight);
  f(prefix + ".bias", lin.bias);
  for (size_t e = 0; e < lin.experts.size(); ++e) {
    f(prefix + ".experts." + std::to_string(e) + ".A", lin.experts[e].A);
    f(prefix + ".experts." + std::to_string(e) + ".B", lin.experts[e].B);
  }
}

template <typename S, typename F>
void visit_params(Backbone<S>& bb, F&& f) {
  f("backbone.tok_embed", bb.tok_embed);
  f("backbone.pos_embed", bb.pos_embed);
  f("backbone.lnf_g", bb.lnf_g);
  f("backbone.lnf_b", bb.lnf_b);
  f("backbone.unembed", bb.unembed);
  for (size_t l = 0; l < bb.layers.size(); ++l) {
    std::string p = "backbone.layers." + std::to_string(l);
    auto& layer = bb.layers[l];
    f(p + ".ln1_g", layer.ln1_g);
    f(p + ".ln1_b", layer.ln1_b);
    f(p + ".ln2_g", layer.ln2_g);
    f(p + ".ln2_b", layer.ln2_b);
    visit_params(layer.wq, p + ".wq", f);
    visit_params(layer.wk, p + ".wk", f);
    visit_params(layer.wv, p + ".wv", f);
    visit_params(layer.wo, p + ".wo", f);
    visit_params(layer.w1, p + ".w1", f);
    visit_params(layer.w2, p + ".w2", f);
  }
}

template <typename S, typename F>
void visit_params(RoutingNetwork<S>& r, F&& f) {
  f("router.in_w", r.in_w);
  f("router.in_b", r.in_b);
  for (size_t b = 0; b < r.blocks.size(); ++b) {
    std::string p = "router.blocks." + std::to_string(b);
    f(p + ".w1", r.blocks[b].w1);
    f(p + ".b1", r.blocks[b].b1);
    f(p + ".w2", r.blocks[b].w2);
    f(p + ".b2", r.blocks[b].b2);
    f(p + ".ln_g", r.blocks[b].ln_g);
    f(p + ".ln_b", r.blocks[b].ln_b);
  }
  f("router.gate_w", r.gate_w);
  f("router.gate_b", r.gate_b);
}

template <typename S, typename F>
void visit_params(ProjectionHead<S>& h, F&& f) {
  f("head.w1", h.w1);
  f("head.b1", h.b1);
  f("head.w2", h.w2);
  f("head.b2", h.b2);
}

template <typename S, typename F>
void visit_params(MolaModel<S>& m, F&& f) {
  visit_params(m.backbone, f);
  visit_params(m.router, f);
  visit_params(m.head, f);
}

inline bool is_expert_param(const std::string& name) {
  return name.find(".experts.") != std::string::npos;
}
inline bool is_backbone_base_param(const std::string& name) {
  return name.rfind("backbone.", 0) == 0 && !is_expert_param(name);
}

// Hash of the frozen backbone tensors; used to verify the freeze contract
// after expert-stage training.
template <typename S>
uint64_t backbone_hash(Backbone<S>& bb) {
  uint64_t h = 0xcbf29ce484222325ULL;
  visit_params(bb, [&](const std::string& name, Mat<S>& m) {
    if (is_expert_param(name)) return;
    h = fnv1a(name, h);
    h = fnv1a_bytes(m.data(), sizeof(S) * static_cast<size_t>(m.size()), h);
  });
  return h;
}

// ---------------------------------------------------------------------------
// Graph building

// Leaves for a set of model parameters, pushed once per tape. `trainable`
// decides which leaves receive gradients.
template <typename S>
struct GraphParams {
  Tape<S>* tape = nullptr;
  std::unordered_map<std::string, Var<S>> vars;

  Var<S> at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw Error("no graph parameter named '" + name + "'");
    return it->second;
  }
};

template <typename S, typename Module>
GraphParams<S> push_params(Tape<S>& tape, Module& module,
                           const std::function<bool(const std::string&)>& trainable) {
  GraphParams<S> gp;
  gp.tape = &tape;
  visit_params(module, [&](const std::string& name, Mat<S>& m) {
    gp.vars.emplace(name, leaf(tape, m, trainable && trainable(name)));
  });
  return gp;
}

// Observation hook: collects the routing vector seen by every expert layer.
template <typename S>
struct ForwardHooks {
  std::vector<Mat<S>>* alpha_per_expert_layer = nullptr;
};

template <typename S>
Var<S> expert_linear_forward(GraphParams<S>& P, const std::string& prefix,
                             Var<S> x, Var<S> alpha,
                             ForwardHooks<S>* hooks = nullptr) {
  Var<S> y = linear(x, P.at(prefix + ".weight"), P.at(prefix + ".bias"));
  int n_experts = static_cast<int>(alpha.value().cols());
  bool has_experts = P.vars.count(prefix + ".experts.0.A") > 0;
  if (!has_experts) return y;
  std::vector<Var<S>> deltas;
  for (int e = 0; e < n_experts; ++e) {
    std::string ep = prefix + ".experts." + std::to_string(e);
    Var<S> d = matmul(matmul(x, P.at(ep + ".A")), P.at(ep + ".B"));
    deltas.push_back(d);
  }
  if (hooks && hooks->alpha_per_expert_layer)
    hooks->alpha_per_expert_layer->push_back(alpha.value());
  return add(y, weighted_sum(deltas, alpha));
}

// Causal self-attention + FFN stack over a token sequence. `alpha` is the
// dialogue-level routing vector [1 x n_experts] (or [1 x 1] ones for a
// single adapter); it is computed once by the caller and reused here at
// every expert layer.
template <typename S>
Var<S> backbone_forward(GraphParams<S>& P, const BackboneConfig& cfg,
                        const std::vector<int>& tokens, Var<S> alpha,
                        S expert_scale, ForwardHooks<S>* hooks = nullptr) {
  const int T = static_cast<int>(tokens.size());
  expect(T >= 1, "backbone_forward: empty token sequence");
  if (T > cfg.max_context)
    throw Error("context overflow: " + std::to_string(T) + " tokens > max_context " +
                std::to_string(cfg.max_context));
  const S eps = static_cast<S>(1e-5);

  Var<S> alpha_scaled =
      expert_scale == S(1) ? alpha : scale(alpha, expert_scale);

  std::vector<int> positions(static_cast<size_t>(T));
  for (int i = 0; i < T; ++i) positions[static_cast<size_t>(i)] = i;
  Var<S> x = add(gather_rows(P.at("backbone.tok_embed"), tokens),
                 gather_rows(P.at("backbone.pos_embed"), positions));

  const int H = cfg.n_heads, dh = cfg.head_dim();
  const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "backbone.layers." + std::to_string(l);
    Var<S> h = layer_norm_rows(x, P.at(p + ".ln1_g"), P.at(p + ".ln1_b"), eps);
    Var<S> q = expert_linear_forward(P, p + ".wq", h, alpha_scaled, hooks);
    Var<S> k = expert_linear_forward(P, p + ".wk", h, alpha_scaled, hooks);
    Var<S> v = expert_linear_forward(P, p + ".wv", h, alpha_scaled, hooks);
    std::vector<Var<S>> heads;
    for (int hd = 0; hd < H; ++hd) {
      Var<S> qh = slice_cols(q, hd * dh, dh);
      Var<S> kh = slice_cols(k, hd * dh, dh);
      Var<S> vh = slice_cols(v, hd * dh, dh);
      Var<S> att = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt_dh), true);
      heads.push_back(matmul(att, vh));
    }
    Var<S> merged = concat_cols(heads);
    Var<S> attn_out = expert_linear_forward(P, p + ".wo", merged, alpha_scaled, hooks);
    x = add(x, attn_out);

    Var<S> h2 = layer_norm_rows(x, P.at(p + ".ln2_g"), P.at(p + ".ln2_b"), eps);
    Var<S> f1 = gelu(expert_linear_forward(P, p + ".w1", h2, alpha_scaled, hooks));
    Var<S> f2 = expert_linear_forward(P, p + ".w2", f1, alpha_scaled, hooks);
    x = add(x, f2);
  }
  Var<S> xf = layer_norm_rows(x, P.at("backbone.lnf_g"), P.at("backbone.lnf_b"), eps);
  return matmul(xf, P.at("backbone.unembed"));
}

// Routing network forward; rows of `features` are independent samples.
template <typename S>
Var<S> router_forward(GraphParams<S>& P, const RouterConfig& cfg, Var<S> features) {
  expect(static_cast<int>(features.value().cols()) == cfg.input_dim,
         "router_forward: feature dimension mismatch");
  const S eps = static_cast<S>(cfg.layer_norm_eps);
  Var<S> h = linear(features, P.at("router.in_w"), P.at("router.in_b"));
  for (int b = 0; b < cfg.n_blocks; ++b) {
    std::string p = "router.blocks." + std::to_string(b);
    Var<S> m = linear(gelu(linear(h, P.at(p + ".w1"), P.at(p + ".b1"))),
                      P.at(p + ".w2"), P.at(p + ".b2"));
    h = layer_norm_rows(add(h, m), P.at(p + ".ln_g"), P.at(p + ".ln_b"), eps);
  }
  return softmax_rows(linear(h, P.at("router.gate_w"), P.at("router.gate_b")));
}

// Projection phi: routing vectors [B x n_experts] -> latent [B x dim].
template <typename S>
Var<S> head_forward(GraphParams<S>& P, Var<S> alphas) {
  Var<S> z = gelu(linear(alphas, P.at("head.w1"), P.at("head.b1")));
  return linear(z, P.at("head.w2"), P.at("head.b2"));
}

// ---------------------------------------------------------------------------
// Value-only entry points

struct RoutingVector {
  VecD alpha;  // simplex over experts

  void check() const {
    expect(std::abs(alpha.sum() - 1.0) <= 1e-6, "routing vector must sum to 1");
    expect((alpha.array() >= 0).all(), "routing vector must be nonnegative");
  }
};

// Degenerate routing for single-adapter or adapter-free models.
inline RoutingVector unit_routing(int n_adapters) {
  RoutingVector rv;
  rv.alpha = VecD::Zero(std::max(1, n_adapters));
  rv.alpha[0] = 1.0;
  return rv;
}

inline RoutingVector uniform_routing(int n_experts) {
  RoutingVector rv;
  rv.alpha = VecD::Constant(n_experts, 1.0 / n_experts);
  return rv;
}

// alpha = softmax(W_g h_L), computed once per dialogue session.
template <typename S>
RoutingVector route(RoutingNetwork<S>& router, const FeatureVector& fv) {
  expect(fv.values.size() == router.config.input_dim,
         "route: feature vector dimension mismatch");
  Tape<S> tape;
  GraphParams<S> P = push_params(tape, router, nullptr);
  Mat<S> f = fv.values.transpose().template cast<S>();
  Var<S> a = router_forward(P, router.config, leaf(tape, f));
  RoutingVector rv;
  rv.alpha = a.value().row(0).transpose().template cast<double>();
  return rv;
}

// Full-sequence logits without gradient tracking.
template <typename S>
Mat<S> forward_logits(MolaModel<S>& model, const std::vector<int>& tokens,
                      const RoutingVector& alpha,
                      std::vector<Mat<S>>* alpha_log = nullptr) {
  Tape<S> tape;
  GraphParams<S> P = push_params(tape, model.backbone, nullptr);
  Mat<S> a = alpha.alpha.transpose().template cast<S>();
  ForwardHooks<S> hooks;
  hooks.alpha_per_expert_layer = alpha_log;
  Var<S> logits =
      backbone_forward(P, model.backbone.config, tokens, leaf(tape, a),
                       static_cast<S>(model.lora.scale()), &hooks);
  return logits.value();
}

template <typename S>
RoutingVector route(MolaModel<S>& model, const SeekerProfile& profile) {
  return route(model.router, encode_feature_vector(profile));
}

// ---------------------------------------------------------------------------
// Merge

// Folds every adapter delta into the base weight: W' = W + scale * A * B.
// Adapters are discarded; merging is single-shot by construction and a
// second call on the same backbone fails.
template <typename S>
void merge_lora(Backbone<S>& bb, double scale_override = -1.0) {
  bool merged_any = false;
  for (auto& layer : bb.layers) {
    for (ExpertLinear<S>* lin :
         {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1, &layer.w2}) {
      for (auto& adapter : lin->experts) {
        expect(adapter.A.rows() == lin->weight.rows() &&
                   adapter.B.cols() == lin->weight.cols() &&
                   adapter.A.cols() == adapter.B.rows(),
               "merge_lora: adapter/weight shape mismatch");
        S s = scale_override >= 0 ? static_cast<S>(scale_override) : adapter.scale;
        lin->weight.noalias() += s * (adapter.A * adapter.B);
        merged_any = true;
      }
      lin->experts.clear();
    }
  }
  expect(merged_any, "merge_lora: no adapters attached (already merged?)");
}

// ---------------------------------------------------------------------------
// Sampling / generation

struct SamplingConfig {
  double temperature = 0.7;  // 0 = argmax
  int top_k = 0;             // 0 = disabled
  double top_p = 1.0;        // 1 = disabled
  uint64_t seed = 0;
  int max_new_tokens = 160;
};

struct GenerationResult {
  std::vector<int> tokens;  // generated continuation (stop token excluded)
  bool saw_eot = false;
  bool saw_end_of_dialogue = false;
  bool exhausted = false;  // hit max_new_tokens without a stop token
};

// Incremental decoder with per-layer KV caches. One instance serves one
// session; it is not thread-safe.
template <typename S>
class Generator {
 public:
  Generator(MolaModel<S>& model, const RoutingVector& alpha)
      : model_(model), cfg_(model.backbone.config) {
    alpha_ = alpha.alpha.template cast<S>();
    expert_scale_ = static_cast<S>(model.lora.scale());
    kcache_.resize(static_cast<size_t>(cfg_.n_layers));
    vcache_.resize(static_cast<size_t>(cfg_.n_layers));
    for (auto& k : kcache_) k.resize(cfg_.max_context, cfg_.d_model);
    for (auto& v : vcache_) v.resize(cfg_.max_context, cfg_.d_model);
  }

  int position() const { return pos_; }

  // Feeds tokens one position at a time; returns the logits row for the
  // last token fed.
  Vec<S> feed(const std::vector<int>& tokens) {
    expect(!tokens.empty(), "feed: empty token list");
    Vec<S> logits;
    for (int tok : tokens) logits = step(tok);
    return logits;
  }

  Vec<S> step(int token) {
    if (pos_ >= cfg_.max_context) throw Error("context overflow in generation");
    Eigen::Matrix<S, 1, Eigen::Dynamic> x =
        model_.backbone.tok_embed.row(token) + model_.backbone.pos_embed.row(pos_);
    const S eps = static_cast<S>(1e-5);
    const int H = cfg_.n_heads, dh = cfg_.head_dim();
    const S inv_sqrt_dh =
        static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      auto& layer = model_.backbone.layers[static_cast<size_t>(l)];
      auto h = layer_norm_row(x, layer.ln1_g, layer.ln1_b, eps);
      auto q = apply_linear(layer.wq, h);
      kcache_[static_cast<size_t>(l)].row(pos_) = apply_linear(layer.wk, h);
      vcache_[static_cast<size_t>(l)].row(pos_) = apply_linear(layer.wv, h);

      Eigen::Matrix<S, 1, Eigen::Dynamic> merged(1, cfg_.d_model);
      const auto& K = kcache_[static_cast<size_t>(l)];
      const auto& V = vcache_[static_cast<size_t>(l)];
      for (int hd = 0; hd < H; ++hd) {
        auto qh = q.segment(hd * dh, dh);
        Vec<S> scores(pos_ + 1);
        for (int t = 0; t <= pos_; ++t)
          scores[t] = qh.dot(K.row(t).segment(hd * dh, dh)) * inv_sqrt_dh;
        S m = scores.maxCoeff();
        scores = (scores.array() - m).exp().matrix();
        scores /= scores.sum();
        Eigen::Matrix<S, 1, Eigen::Dynamic> out =
            Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(1, dh);
        for (int t = 0; t <= pos_; ++t)
          out += scores[t] * V.row(t).segment(hd * dh, dh);
        merged.segment(hd * dh, dh) = out;
      }
      x += apply_linear(layer.wo, merged);
      auto h2 = layer_norm_row(x, layer.ln2_g, layer.ln2_b, eps);
      auto f1 = gelu_row(apply_linear(layer.w1, h2));
      x += apply_linear(layer.w2, f1);
    }
    auto xf = layer_norm_row(x, model_.backbone.lnf_g, model_.backbone.lnf_b, eps);
    ++pos_;
    return (xf * model_.backbone.unembed).transpose();
  }

 private:
  using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;

  Row apply_linear(const ExpertLinear<S>& lin, const Row& x) const {
    Row y = x * lin.weight + lin.bias;
    for (size_t e = 0; e < lin.experts.size(); ++e) {
      const auto& a = lin.experts[e];
      y += (alpha_[static_cast<int>(e)] * expert_scale_) * ((x * a.A) * a.B);
    }
    return y;
  }

  static Row layer_norm_row(const Row& x, const Mat<S>& g, const Mat<S>& b, S eps) {
    S mu = x.mean();
    Row centered = (x.array() - mu).matrix();
    S var = centered.array().square().mean();
    S inv = S(1) / std::sqrt(var + eps);
    return ((centered * inv).array() * g.row(0).array()).matrix() + b.row(0);
  }

  static Row gelu_row(const Row& x) {
    const S inv_sqrt2 = static_cast<S>(0.7071067811865475244);
    return x.unaryExpr([&](S a) {
      return static_cast<S>(0.5) * a * (S(1) + std::erf(a * inv_sqrt2));
    });
  }

  MolaModel<S>& model_;
  BackboneConfig cfg_;
  Vec<S> alpha_;
  S expert_scale_ = 1;
  std::vector<Mat<S>> kcache_, vcache_;
  int pos_ = 0;
};

// 53-bit uniform in [0,1); reproducible across platforms.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Samples one token id from a logits row under the sampling config.
template <typename S>
int sample_token(const Vec<S>& logits, const SamplingConfig& cfg,
                 std::mt19937_64& rng) {
  const int V = static_cast<int>(logits.size());
  if (cfg.temperature <= 0.0) {
    int best = 0;
    for (int i = 1; i < V; ++i)
      if (logits[i] > logits[best]) best = i;
    return best;
  }
  VecD scaled = logits.template cast<double>() / cfg.temperature;
  std::vector<int> order(static_cast<size_t>(V));
  for (int i = 0; i < V; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scaled[a] > scaled[b]; });
  int keep = V;
  if (cfg.top_k > 0) keep = std::min(keep, cfg.top_k);

  double m = scaled[order[0]];
  VecD probs = VecD::Zero(V);
  double sum = 0;
  for (int r = 0; r < keep; ++r) {
    double p = std::exp(scaled[order[static_cast<size_t>(r)]] - m);
    probs[order[static_cast<size_t>(r)]] = p;
    sum += p;
  }
  probs /= sum;
  if (cfg.top_p < 1.0) {
    double cum = 0;
    int cut = keep;
    for (int r = 0; r < keep; ++r) {
      cum += probs[order[static_cast<size_t>(r)]];
      if (cum >= cfg.top_p) {
        cut = r + 1;
        break;
      }
    }
    double renorm = 0;
    for (int r = 0; r < cut; ++r) renorm += probs[order[static_cast<size_t>(r)]];
    for (int r = cut; r < keep; ++r) probs[order[static_cast<size_t>(r)]] = 0;
    probs /= renorm;
  }
  double u = uniform01(rng);
  double cum = 0;
  for (int r = 0; r < V; ++r) {
    int idx = order[static_cast<size_t>(r)];
    cum += probs[idx];
    if (u < cum) return idx;
  }
  return order[0];
}

// Autoregressive continuation from a prompt. Stops at <eot>, at the
// end-of-dialogue token, or after max_new_tokens. Seeded and reproducible.
template <typename S>
GenerationResult generate(MolaModel<S>& model, const std::vector<int>& prompt,
                          const RoutingVector& alpha, const SamplingConfig& cfg) {
  expect(cfg.temperature >= 0.0, "temperature must be nonnegative");
  alpha.check();
  Generator<S> gen(model, alpha);
  Vec<S> logits = gen.feed(prompt);
  std::mt19937_64 rng(cfg.seed);
  const auto& sp = model.backbone.config.specials;

  GenerationResult out;
  for (int i = 0; i < cfg.max_new_tokens; ++i) {
    if (gen.position() >= model.backbone.config.max_context) {
      out.exhausted = true;
      return out;
    }
    int tok = sample_token(logits, cfg, rng);
    if (tok == sp.end_of_dialogue) {
      out.saw_end_of_dialogue = true;
      return out;
    }
    if (tok == sp.eot) {
      out.saw_eot = true;
      // One lookahead step: does the model close the dialogue here?
      if (gen.position() < model.backbone.config.max_context) {
        Vec<S> next = gen.step(tok);
        int peek = sample_token(next, cfg, rng);
        if (peek == sp.end_of_dialogue) out.saw_end_of_dialogue = true;
      }
      return out;
    }
    out.tokens.push_back(tok);
    logits = gen.step(tok);
  }
  out.exhausted = true;
  return out;
}

}  // namespace seekersim
