// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode autodiff over dense Eigen matrices. A Tape owns the
// nodes; ops are free functions returning Var handles. Backward runs in
// reverse creation order, which is a valid topological order because ops
// only reference earlier nodes.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "seekersim/common.hpp"

namespace seekersim {

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Mat<S>& value() const;
  Mat<S>& grad() const;
  bool requires_grad() const;
  S scalar() const { return value()(0, 0); }
};

template <typename S>
class Tape {
 public:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Mat<S>&)> backprop;  // (tape, out_grad)
  };

  Var<S> push(Mat<S> value, bool requires_grad,
              std::function<void(Tape&, const Mat<S>&)> backprop = {}) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

  // Adds `g` into a node's gradient accumulator (no-op when the node does
  // not require gradients).
  void accumulate(int id, const Mat<S>& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

  void backward(Var<S> loss) {
    expect(loss.value().rows() == 1 && loss.value().cols() == 1,
           "backward() expects a scalar loss node");
    backward_from({{loss, Mat<S>::Ones(1, 1)}});
  }

  // Seeds arbitrary (node, gradient) pairs, then sweeps the whole tape in
  // reverse. Used when part of the gradient comes from outside this tape.
  void backward_from(const std::vector<std::pair<Var<S>, Mat<S>>>& seeds) {
    for (auto& n : nodes_) n.grad.resize(0, 0);
    for (const auto& [var, g] : seeds) {
      expect(var.tape == this, "seed variable belongs to another tape");
      accumulate(var.id, g);
    }
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backprop) continue;
      n.backprop(*this, n.grad);
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <typename S>
const Mat<S>& Var<S>::value() const {
  return tape->node(id).value;
}
template <typename S>
Mat<S>& Var<S>::grad() const {
  return tape->node(id).grad;
}
template <typename S>
bool Var<S>::requires_grad() const {
  return tape->node(id).requires_grad;
}

// Gradient of a node after backward; zero matrix when none was accumulated.
template <typename S>
Mat<S> grad_or_zero(Var<S> v) {
  const Mat<S>& g = v.grad();
  if (g.size() == 0) return Mat<S>::Zero(v.value().rows(), v.value().cols());
  return g;
}

// ---------------------------------------------------------------------------
// Leaves

template <typename Derived>
Var<typename Derived::Scalar> leaf(Tape<typename Derived::Scalar>& t,
                                   const Eigen::MatrixBase<Derived>& value,
                                   bool requires_grad = false) {
  using S = typename Derived::Scalar;
  return t.push(Mat<S>(value), requires_grad);
}

// ---------------------------------------------------------------------------
// Arithmetic

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  expect(a.value().rows() == b.value().rows() &&
             a.value().cols() == b.value().cols(),
         "add: shape mismatch");
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), rg, [ia, ib](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

// y = x + broadcast(row), row is [1 x d].
template <typename S>
Var<S> add_rowvec(Var<S> x, Var<S> row) {
  Tape<S>& t = *x.tape;
  expect(row.value().rows() == 1 && row.value().cols() == x.value().cols(),
         "add_rowvec: row must be [1 x cols(x)]");
  Mat<S> v = x.value();
  v.rowwise() += row.value().row(0);
  bool rg = x.requires_grad() || row.requires_grad();
  int ix = x.id, ir = row.id;
  return t.push(std::move(v), rg, [ix, ir](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(ix, g);
    tp.accumulate(ir, g.colwise().sum());
  });
}

template <typename S>
Var<S> scale(Var<S> x, S factor) {
  Tape<S>& t = *x.tape;
  int ix = x.id;
  return t.push(x.value() * factor, x.requires_grad(),
                [ix, factor](Tape<S>& tp, const Mat<S>& g) {
                  tp.accumulate(ix, g * factor);
                });
}

// Elementwise product with a constant mask (no gradient through the mask).
template <typename S>
Var<S> mul_mask(Var<S> x, Mat<S> mask) {
  Tape<S>& t = *x.tape;
  expect(mask.rows() == x.value().rows() && mask.cols() == x.value().cols(),
         "mul_mask: shape mismatch");
  int ix = x.id;
  Mat<S> v = x.value().cwiseProduct(mask);
  return t.push(std::move(v), x.requires_grad(),
                [ix, mask = std::move(mask)](Tape<S>& tp, const Mat<S>& g) {
                  tp.accumulate(ix, g.cwiseProduct(mask));
                });
}

// y = sum_i entries(i) * xs[i], where entries is a [1 x n] Var of mixture
// weights. Gradients flow into both the weights and the summands.
template <typename S>
Var<S> weighted_sum(const std::vector<Var<S>>& xs, Var<S> weights) {
  expect(!xs.empty(), "weighted_sum: empty term list");
  Tape<S>& t = *xs.front().tape;
  expect(weights.value().rows() == 1 &&
             weights.value().cols() == static_cast<int>(xs.size()),
         "weighted_sum: weights must be [1 x n]");
  Mat<S> v = Mat<S>::Zero(xs[0].value().rows(), xs[0].value().cols());
  bool rg = weights.requires_grad();
  std::vector<int> ids;
  for (size_t i = 0; i < xs.size(); ++i) {
    expect(xs[i].value().rows() == v.rows() && xs[i].value().cols() == v.cols(),
           "weighted_sum: shape mismatch");
    v += weights.value()(0, static_cast<int>(i)) * xs[i].value();
    rg = rg || xs[i].requires_grad();
    ids.push_back(xs[i].id);
  }
  int iw = weights.id;
  return t.push(std::move(v), rg, [ids, iw](Tape<S>& tp, const Mat<S>& g) {
    const Mat<S>& w = tp.node(iw).value;
    Mat<S> wgrad = Mat<S>::Zero(1, static_cast<int>(ids.size()));
    for (size_t i = 0; i < ids.size(); ++i) {
      tp.accumulate(ids[i], g * w(0, static_cast<int>(i)));
      wgrad(0, static_cast<int>(i)) =
          g.cwiseProduct(tp.node(ids[i]).value).sum();
    }
    tp.accumulate(iw, wgrad);
  });
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  expect(a.value().cols() == b.value().rows(), "matmul: inner dim mismatch");
  Mat<S> v;
  v.noalias() = a.value() * b.value();
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.id, ib = b.id;
  return t.push(std::move(v), rg, [ia, ib](Tape<S>& tp, const Mat<S>& g) {
    if (tp.node(ia).requires_grad) {
      Mat<S> ga;
      ga.noalias() = g * tp.node(ib).value.transpose();
      tp.accumulate(ia, ga);
    }
    if (tp.node(ib).requires_grad) {
      Mat<S> gb;
      gb.noalias() = tp.node(ia).value.transpose() * g;
      tp.accumulate(ib, gb);
    }
  });
}

// y = a * b^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  expect(a.value().cols() == b.value().cols(), "matmul_nt: inner dim mismatch");
  Mat<S> v;
  v.noalias() = a.value() * b.value().transpose();
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.id, ib = b.id;
  return t.push(std::move(v), rg, [ia, ib](Tape<S>& tp, const Mat<S>& g) {
    if (tp.node(ia).requires_grad) {
      Mat<S> ga;
      ga.noalias() = g * tp.node(ib).value;
      tp.accumulate(ia, ga);
    }
    if (tp.node(ib).requires_grad) {
      Mat<S> gb;
      gb.noalias() = g.transpose() * tp.node(ia).value;
      tp.accumulate(ib, gb);
    }
  });
}

// x [n x d_in] * W [d_in x d_out] + bias [1 x d_out]
template <typename S>
Var<S> linear(Var<S> x, Var<S> weight, Var<S> bias) {
  return add_rowvec(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------
// Slicing / stacking

template <typename S>
Var<S> slice_cols(Var<S> x, int offset, int n) {
  Tape<S>& t = *x.tape;
  expect(offset >= 0 && offset + n <= x.value().cols(), "slice_cols: out of range");
  int ix = x.id;
  Mat<S> v = x.value().middleCols(offset, n);
  return t.push(std::move(v), x.requires_grad(),
                [ix, offset, n](Tape<S>& tp, const Mat<S>& g) {
                  auto& nd = tp.node(ix);
                  if (!nd.requires_grad) return;
                  Mat<S> full = Mat<S>::Zero(nd.value.rows(), nd.value.cols());
                  full.middleCols(offset, n) = g;
                  tp.accumulate(ix, full);
                });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& xs) {
  expect(!xs.empty(), "concat_cols: empty list");
  Tape<S>& t = *xs.front().tape;
  int rows = static_cast<int>(xs[0].value().rows());
  int cols = 0;
  bool rg = false;
  for (const auto& x : xs) {
    expect(x.value().rows() == rows, "concat_cols: row mismatch");
    cols += static_cast<int>(x.value().cols());
    rg = rg || x.requires_grad();
  }
  Mat<S> v(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int off = 0;
  for (const auto& x : xs) {
    int c = static_cast<int>(x.value().cols());
    v.middleCols(off, c) = x.value();
    ids.push_back(x.id);
    offsets.push_back(off);
    off += c;
  }
  return t.push(std::move(v), rg, [ids, offsets](Tape<S>& tp, const Mat<S>& g) {
    for (size_t i = 0; i < ids.size(); ++i) {
      int c = static_cast<int>(tp.node(ids[i]).value.cols());
      tp.accumulate(ids[i], g.middleCols(offsets[i], c));
    }
  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& xs) {
  expect(!xs.empty(), "concat_rows: empty list");
  Tape<S>& t = *xs.front().tape;
  int cols = static_cast<int>(xs[0].value().cols());
  int rows = 0;
  bool rg = false;
  for (const auto& x : xs) {
    expect(x.value().cols() == cols, "concat_rows: column mismatch");
    rows += static_cast<int>(x.value().rows());
    rg = rg || x.requires_grad();
  }
  Mat<S> v(rows, cols);
  std::vector<int> ids, offsets;
  int off = 0;
  for (const auto& x : xs) {
    int r = static_cast<int>(x.value().rows());
    v.middleRows(off, r) = x.value();
    ids.push_back(x.id);
    offsets.push_back(off);
    off += r;
  }
  return t.push(std::move(v), rg, [ids, offsets](Tape<S>& tp, const Mat<S>& g) {
    for (size_t i = 0; i < ids.size(); ++i) {
      int r = static_cast<int>(tp.node(ids[i]).value.rows());
      tp.accumulate(ids[i], g.middleRows(offsets[i], r));
    }
  });
}

// Gathers scalar nodes into a [1 x n] row.
template <typename S>
Var<S> concat_scalars(const std::vector<Var<S>>& xs) {
  expect(!xs.empty(), "concat_scalars: empty list");
  Tape<S>& t = *xs.front().tape;
  Mat<S> v(1, static_cast<int>(xs.size()));
  bool rg = false;
  std::vector<int> ids;
  for (size_t i = 0; i < xs.size(); ++i) {
    expect(xs[i].value().size() == 1, "concat_scalars: non-scalar input");
    v(0, static_cast<int>(i)) = xs[i].value()(0, 0);
    rg = rg || xs[i].requires_grad();
    ids.push_back(xs[i].id);
  }
  return t.push(std::move(v), rg, [ids](Tape<S>& tp, const Mat<S>& g) {
    for (size_t i = 0; i < ids.size(); ++i) {
      Mat<S> gi(1, 1);
      gi(0, 0) = g(0, static_cast<int>(i));
      tp.accumulate(ids[i], gi);
    }
  });
}

// Rows of `table` selected by ids; scatter-add on backward.
template <typename S>
Var<S> gather_rows(Var<S> table, std::vector<int> ids) {
  Tape<S>& t = *table.tape;
  Mat<S> v(static_cast<int>(ids.size()), table.value().cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    expect(ids[i] >= 0 && ids[i] < table.value().rows(),
           "gather_rows: id out of range");
    v.row(static_cast<int>(i)) = table.value().row(ids[i]);
  }
  int it = table.id;
  return t.push(std::move(v), table.requires_grad(),
                [it, ids = std::move(ids)](Tape<S>& tp, const Mat<S>& g) {
                  auto& nd = tp.node(it);
                  if (!nd.requires_grad) return;
                  Mat<S> full = Mat<S>::Zero(nd.value.rows(), nd.value.cols());
                  for (size_t i = 0; i < ids.size(); ++i)
                    full.row(ids[i]) += g.row(static_cast<int>(i));
                  tp.accumulate(it, full);
                });
}

// ---------------------------------------------------------------------------
// Nonlinearities

// Exact GELU: x * Phi(x).
template <typename S>
Var<S> gelu(Var<S> x) {
  Tape<S>& t = *x.tape;
  const S inv_sqrt2 = static_cast<S>(0.7071067811865475244);
  const S inv_sqrt2pi = static_cast<S>(0.3989422804014326779);
  Mat<S> v = x.value().unaryExpr([&](S a) {
    return static_cast<S>(0.5) * a * (S(1) + std::erf(a * inv_sqrt2));
  });
  int ix = x.id;
  return t.push(std::move(v), x.requires_grad(),
                [ix, inv_sqrt2, inv_sqrt2pi](Tape<S>& tp, const Mat<S>& g) {
                  const Mat<S>& xv = tp.node(ix).value;
                  Mat<S> dv = xv.unaryExpr([&](S a) {
                    S phi = std::exp(S(-0.5) * a * a) * inv_sqrt2pi;
                    S Phi = S(0.5) * (S(1) + std::erf(a * inv_sqrt2));
                    return Phi + a * phi;
                  });
                  tp.accumulate(ix, g.cwiseProduct(dv));
                });
}

// Row-wise layer norm with affine parameters gamma/beta [1 x d].
template <typename S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
  Tape<S>& t = *x.tape;
  const int rows = static_cast<int>(x.value().rows());
  const int cols = static_cast<int>(x.value().cols());
  expect(gamma.value().rows() == 1 && gamma.value().cols() == cols &&
             beta.value().rows() == 1 && beta.value().cols() == cols,
         "layer_norm_rows: affine params must be [1 x d]");

  Mat<S> xhat(rows, cols);
  Vec<S> inv_std(rows);
  for (int i = 0; i < rows; ++i) {
    S mu = x.value().row(i).mean();
    auto centered = x.value().row(i).array() - mu;
    S var = centered.square().mean();
    S is = S(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    xhat.row(i) = (centered * is).matrix();
  }
  Mat<S> v = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  v.rowwise() += beta.value().row(0);

  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  int ix = x.id, ig = gamma.id, ib = beta.id;
  return t.push(std::move(v), rg,
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 cols](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(ib, g.colwise().sum());
    if (tp.node(ig).requires_grad)
      tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
    if (tp.node(ix).requires_grad) {
      const Mat<S>& gm = tp.node(ig).value;
      Mat<S> gx(g.rows(), g.cols());
      for (int i = 0; i < g.rows(); ++i) {
        // dy scaled by gamma, then the two mean-corrections of layer norm.
        Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
            g.row(i).cwiseProduct(gm.row(0));
        S m1 = dxhat.mean();
        S m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        gx.row(i) =
            ((dxhat.array() - m1 - xhat.row(i).array() * m2) * inv_std[i])
                .matrix();
      }
      tp.accumulate(ix, gx);
    }
    (void)cols;
  });
}

// Row-wise softmax; optionally with a causal mask (entry (i,j) masked for
// j > i) applied before normalization.
template <typename S>
Var<S> softmax_rows(Var<S> x, bool causal = false) {
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value();
  const int rows = static_cast<int>(v.rows());
  const int cols = static_cast<int>(v.cols());
  for (int i = 0; i < rows; ++i) {
    int limit = causal ? std::min(i + 1, cols) : cols;
    auto row = v.row(i).head(limit);
    S m = row.maxCoeff();
    row = (row.array() - m).exp();
    S sum = row.sum();
    row /= sum;
    if (limit < cols) v.row(i).tail(cols - limit).setZero();
  }
  int ix = x.id;
  Mat<S> y = v;
  return t.push(std::move(v), x.requires_grad(),
                [ix, y = std::move(y)](Tape<S>& tp, const Mat<S>& g) {
                  Mat<S> gx(g.rows(), g.cols());
                  for (int i = 0; i < g.rows(); ++i) {
                    S dot = g.row(i).cwiseProduct(y.row(i)).sum();
                    gx.row(i) = (g.row(i).array() - dot).matrix().cwiseProduct(
                        y.row(i));
                  }
                  tp.accumulate(ix, gx);
                });
}

// Rows normalized to unit L2 norm.
template <typename S>
Var<S> l2_normalize_rows(Var<S> x, S eps = static_cast<S>(1e-12)) {
  Tape<S>& t = *x.tape;
  const int rows = static_cast<int>(x.value().rows());
  Vec<S> inv_norm(rows);
  Mat<S> v = x.value();
  for (int i = 0; i < rows; ++i) {
    S n = std::sqrt(v.row(i).squaredNorm() + eps);
    inv_norm[i] = S(1) / n;
    v.row(i) *= inv_norm[i];
  }
  int ix = x.id;
  Mat<S> y = v;
  return t.push(std::move(v), x.requires_grad(),
                [ix, y = std::move(y), inv_norm = std::move(inv_norm)](
                    Tape<S>& tp, const Mat<S>& g) {
                  Mat<S> gx(g.rows(), g.cols());
                  for (int i = 0; i < g.rows(); ++i) {
                    S dot = g.row(i).cwiseProduct(y.row(i)).sum();
                    gx.row(i) = (g.row(i) - dot * y.row(i)) * inv_norm[i];
                  }
                  tp.accumulate(ix, gx);
                });
}

// Inverted dropout with a caller-provided RNG; identity when p == 0.
template <typename S>
Var<S> dropout(Var<S> x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  expect(p < 1.0, "dropout: p must be < 1");
  Mat<S> mask(x.value().rows(), x.value().cols());
  std::bernoulli_distribution keep(1.0 - p);
  const S inv_keep = static_cast<S>(1.0 / (1.0 - p));
  for (int i = 0; i < mask.rows(); ++i)
    for (int j = 0; j < mask.cols(); ++j)
      mask(i, j) = keep(rng) ? inv_keep : S(0);
  return mul_mask(x, std::move(mask));
}

// ---------------------------------------------------------------------------
// Losses

// Mean negative log-likelihood of `targets[t]` under row t of `logits`,
// restricted to positions with mask[t] != 0.
template <typename S>
Var<S> cross_entropy_masked(Var<S> logits, std::vector<int> targets,
                            std::vector<uint8_t> mask) {
  Tape<S>& t = *logits.tape;
  const int rows = static_cast<int>(logits.value().rows());
  expect(static_cast<int>(targets.size()) == rows &&
             static_cast<int>(mask.size()) == rows,
         "cross_entropy_masked: target/mask length mismatch");
  int n_masked = 0;
  for (uint8_t m : mask) n_masked += m != 0;
  expect(n_masked > 0, "cross_entropy_masked: empty mask");

  // Save probabilities for the backward pass.
  Mat<S> probs(rows, logits.value().cols());
  S total = 0;
  for (int i = 0; i < rows; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    auto row = logits.value().row(i);
    S m = row.maxCoeff();
    Eigen::Matrix<S, 1, Eigen::Dynamic> e = (row.array() - m).exp();
    S sum = e.sum();
    probs.row(i) = e / sum;
    total -= std::log(probs(i, targets[static_cast<size_t>(i)]) +
                      std::numeric_limits<S>::min());
  }
  Mat<S> v(1, 1);
  v(0, 0) = total / static_cast<S>(n_masked);

  int il = logits.id;
  return t.push(std::move(v), logits.requires_grad(),
                [il, probs = std::move(probs), targets = std::move(targets),
                 mask = std::move(mask), n_masked](Tape<S>& tp, const Mat<S>& g) {
    auto& nd = tp.node(il);
    if (!nd.requires_grad) return;
    S scale = g(0, 0) / static_cast<S>(n_masked);
    Mat<S> gx = Mat<S>::Zero(nd.value.rows(), nd.value.cols());
    for (int i = 0; i < gx.rows(); ++i) {
      if (!mask[static_cast<size_t>(i)]) continue;
      gx.row(i) = probs.row(i) * scale;
      gx(i, targets[static_cast<size_t>(i)]) -= scale;
    }
    tp.accumulate(il, gx);
  });
}

// -log softmax(x)[0] for a [1 x k] row: logsumexp(x) - x(0). Used by the
// likelihood-contrast loss, where x holds log-probabilities.
template <typename S>
Var<S> neg_log_first_softmax(Var<S> x) {
  Tape<S>& t = *x.tape;
  expect(x.value().rows() == 1, "neg_log_first_softmax: expects a row");
  auto row = x.value().row(0);
  S m = row.maxCoeff();
  Eigen::Matrix<S, 1, Eigen::Dynamic> e = (row.array() - m).exp();
  S lse = m + std::log(e.sum());
  Mat<S> v(1, 1);
  v(0, 0) = lse - row(0);
  Eigen::Matrix<S, 1, Eigen::Dynamic> sm = e / e.sum();
  int ix = x.id;
  return t.push(std::move(v), x.requires_grad(),
                [ix, sm = std::move(sm)](Tape<S>& tp, const Mat<S>& g) {
                  Mat<S> gx = sm * g(0, 0);
                  gx(0, 0) -= g(0, 0);
                  tp.accumulate(ix, gx);
                });
}

// Supervised-contrastive loss over a similarity matrix. For each feature
// (a label column over the batch) and each anchor i with a non-empty
// positive set P(i) = {j != i : label_j == label_i}:
//   term(i) = -log( sum_{j in P(i)} exp(sim_ij) / sum_{k != i} exp(sim_ik) )
// Feature loss is the mean over valid anchors; the result is the mean over
// features that have at least one valid anchor.
template <typename S>
Var<S> supcon_from_sim(Var<S> sim, const std::vector<std::vector<int>>& label_sets) {
  Tape<S>& t = *sim.tape;
  const int B = static_cast<int>(sim.value().rows());
  expect(sim.value().cols() == B, "supcon_from_sim: similarity must be square");
  expect(B >= 2, "supcon_from_sim: batch must have at least 2 samples");
  for (const auto& labels : label_sets)
    expect(static_cast<int>(labels.size()) == B,
           "supcon_from_sim: label column length mismatch");

  // exp with per-row max subtracted; diagonal excluded everywhere.
  Mat<S> ex(B, B);
  for (int i = 0; i < B; ++i) {
    S m = -std::numeric_limits<S>::infinity();
    for (int k = 0; k < B; ++k)
      if (k != i) m = std::max(m, sim.value()(i, k));
    for (int k = 0; k < B; ++k)
      ex(i, k) = k == i ? S(0) : std::exp(sim.value()(i, k) - m);
  }

  struct AnchorTerm {
    int feature;
    int anchor;
    S num, den;
  };
  std::vector<AnchorTerm> terms;
  std::vector<int> anchors_per_feature(label_sets.size(), 0);
  S loss = 0;
  int valid_features = 0;
  for (size_t f = 0; f < label_sets.size(); ++f) {
    const auto& labels = label_sets[f];
    S feature_loss = 0;
    int valid = 0;
    for (int i = 0; i < B; ++i) {
      S num = 0, den = 0;
      for (int k = 0; k < B; ++k) {
        if (k == i) continue;
        den += ex(i, k);
        if (labels[static_cast<size_t>(k)] == labels[static_cast<size_t>(i)])
          num += ex(i, k);
      }
      if (num <= S(0)) continue;  // empty positive set: excluded
      feature_loss += std::log(den) - std::log(num);
      terms.push_back({static_cast<int>(f), i, num, den});
      ++valid;
    }
    anchors_per_feature[f] = valid;
    if (valid > 0) {
      loss += feature_loss / static_cast<S>(valid);
      ++valid_features;
    }
  }
  expect(valid_features > 0, "supcon_from_sim: no feature has a valid anchor");
  Mat<S> v(1, 1);
  v(0, 0) = loss / static_cast<S>(valid_features);

  int is = sim.id;
  return t.push(
      std::move(v), sim.requires_grad(),
      [is, ex = std::move(ex), terms = std::move(terms),
       anchors_per_feature = std::move(anchors_per_feature), label_sets,
       valid_features, B](Tape<S>& tp, const Mat<S>& g) {
        auto& nd = tp.node(is);
        if (!nd.requires_grad) return;
        Mat<S> gx = Mat<S>::Zero(B, B);
        for (const auto& term : terms) {
          const auto& labels = label_sets[static_cast<size_t>(term.feature)];
          S w = g(0, 0) /
                (static_cast<S>(valid_features) *
                 static_cast<S>(anchors_per_feature[static_cast<size_t>(
                     term.feature)]));
          int i = term.anchor;
          for (int k = 0; k < B; ++k) {
            if (k == i) continue;
            S d = ex(i, k) / term.den;
            if (labels[static_cast<size_t>(k)] == labels[static_cast<size_t>(i)])
              d -= ex(i, k) / term.num;
            gx(i, k) += w * d;
          }
        }
        tp.accumulate(is, gx);
      });
}

}  // namespace seekersim
