// Copyright 2026 The seekersim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Every op is validated against central finite differences in double
// precision before anything downstream is allowed to trust it.

#include <doctest.h>

#include <functional>
#include <random>

#include "seekersim/autograd.hpp"

using namespace seekersim;

namespace {

MatD randn(int r, int c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  MatD m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

// Central finite difference of f with respect to every entry of p, compared
// against the analytic gradient.
void check_against_fd(MatD& p, const std::function<double()>& f,
                      const MatD& analytic, double tol = 5e-6) {
  const double h = 1e-6;
  REQUIRE(analytic.rows() == p.rows());
  REQUIRE(analytic.cols() == p.cols());
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j) {
      double orig = p(i, j);
      p(i, j) = orig + h;
      double fp = f();
      p(i, j) = orig - h;
      double fm = f();
      p(i, j) = orig;
      double fd = (fp - fm) / (2 * h);
      double denom = std::max({1.0, std::abs(fd), std::abs(analytic(i, j))});
      CHECK(std::abs(fd - analytic(i, j)) / denom < tol);
    }
}

// Reduces a graph output to a scalar via a fixed random projection so we can
// gradient-check non-scalar ops.
struct Harness {
  MatD probe;
  explicit Harness(int rows, int cols, uint64_t seed = 999)
      : probe(randn(rows, cols, seed)) {}

  double reduce(Tape<double>& t, Var<double> out, bool backward = false) {
    Var<double> pr = leaf(t, probe, false);
    // sum(out .* probe) as a scalar via trace(out^T probe) = sum of products
    Var<double> prod = mul_mask(out, probe);
    MatD ones = MatD::Ones(1, 1);
    // accumulate all entries: multiply by ones from both sides
    Var<double> left = leaf(t, MatD::Ones(1, prod.value().rows()), false);
    Var<double> right = leaf(t, MatD::Ones(prod.value().cols(), 1), false);
    Var<double> s = matmul(matmul(left, prod), right);
    if (backward) t.backward(s);
    return s.scalar();
  }
};

}  // namespace

TEST_CASE("matmul gradients") {
  MatD a = randn(3, 4, 1), b = randn(4, 5, 2);
  Harness h(3, 5);
  auto run = [&](bool bw, MatD* ga, MatD* gb) {
    Tape<double> t;
    auto va = leaf(t, a, true), vb = leaf(t, b, true);
    auto y = matmul(va, vb);
    double s = h.reduce(t, y, bw);
    if (bw) {
      *ga = va.grad();
      *gb = vb.grad();
    }
    return s;
  };
  MatD ga, gb;
  run(true, &ga, &gb);
  check_against_fd(a, [&] { return run(false, nullptr, nullptr); }, ga);
  check_against_fd(b, [&] { return run(false, nullptr, nullptr); }, gb);
}

TEST_CASE("matmul_nt gradients") {
  MatD a = randn(3, 4, 3), b = randn(5, 4, 4);
  Harness h(3, 5);
  auto run = [&](bool bw, MatD* ga, MatD* gb) {
    Tape<double> t;
    auto va = leaf(t, a, true), vb = leaf(t, b, true);
    double s = h.reduce(t, matmul_nt(va, vb), bw);
    if (bw) {
      *ga = va.grad();
      *gb = vb.grad();
    }
    return s;
  };
  MatD ga, gb;
  run(true, &ga, &gb);
  check_against_fd(a, [&] { return run(false, nullptr, nullptr); }, ga);
  check_against_fd(b, [&] { return run(false, nullptr, nullptr); }, gb);
}

TEST_CASE("add, add_rowvec, scale gradients") {
  MatD x = randn(4, 3, 5), y = randn(4, 3, 6), r = randn(1, 3, 7);
  Harness h(4, 3);
  auto run = [&](bool bw, MatD* gx, MatD* gy, MatD* gr) {
    Tape<double> t;
    auto vx = leaf(t, x, true), vy = leaf(t, y, true), vr = leaf(t, r, true);
    auto out = scale(add_rowvec(add(vx, vy), vr), 1.7);
    double s = h.reduce(t, out, bw);
    if (bw) {
      *gx = vx.grad();
      *gy = vy.grad();
      *gr = vr.grad();
    }
    return s;
  };
  MatD gx, gy, gr;
  run(true, &gx, &gy, &gr);
  check_against_fd(x, [&] { return run(false, nullptr, nullptr, nullptr); }, gx);
  check_against_fd(y, [&] { return run(false, nullptr, nullptr, nullptr); }, gy);
  check_against_fd(r, [&] { return run(false, nullptr, nullptr, nullptr); }, gr);
}

TEST_CASE("weighted_sum gradients flow to weights and terms") {
  MatD x0 = randn(2, 3, 8), x1 = randn(2, 3, 9), w = randn(1, 2, 10);
  Harness h(2, 3);
  auto run = [&](bool bw, MatD* g0, MatD* g1, MatD* gw) {
    Tape<double> t;
    auto v0 = leaf(t, x0, true), v1 = leaf(t, x1, true), vw = leaf(t, w, true);
    double s = h.reduce(t, weighted_sum<double>({v0, v1}, vw), bw);
    if (bw) {
      *g0 = v0.grad();
      *g1 = v1.grad();
      *gw = vw.grad();
    }
    return s;
  };
  MatD g0, g1, gw;
  run(true, &g0, &g1, &gw);
  check_against_fd(x0, [&] { return run(false, nullptr, nullptr, nullptr); }, g0);
  check_against_fd(x1, [&] { return run(false, nullptr, nullptr, nullptr); }, g1);
  check_against_fd(w, [&] { return run(false, nullptr, nullptr, nullptr); }, gw);
}

TEST_CASE("slice/concat/gather gradients") {
  MatD x = randn(4, 6, 11);
  MatD table = randn(5, 3, 12);
  Harness h(4, 5);
  Harness h2(3, 3);
  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vx = leaf(t, x, true);
    auto a = slice_cols(vx, 0, 2);
    auto b = slice_cols(vx, 2, 3);
    auto joined = concat_cols<double>({a, b});
    double s = h.reduce(t, joined, bw);
    if (bw) *gx = vx.grad();
    return s;
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(x, [&] { return run(false, nullptr); }, gx);

  auto run2 = [&](bool bw, MatD* gt) {
    Tape<double> t;
    auto vt = leaf(t, table, true);
    auto rows = gather_rows(vt, {0, 2, 2});  // repeated index exercises scatter-add
    double s = h2.reduce(t, rows, bw);
    if (bw) *gt = vt.grad();
    return s;
  };
  MatD gt;
  run2(true, &gt);
  check_against_fd(table, [&] { return run2(false, nullptr); }, gt);
}

TEST_CASE("concat_rows and concat_scalars gradients") {
  MatD a = randn(2, 3, 13), b = randn(3, 3, 14);
  Harness h(5, 3);
  auto run = [&](bool bw, MatD* ga, MatD* gb) {
    Tape<double> t;
    auto va = leaf(t, a, true), vb = leaf(t, b, true);
    double s = h.reduce(t, concat_rows<double>({va, vb}), bw);
    if (bw) {
      *ga = va.grad();
      *gb = vb.grad();
    }
    return s;
  };
  MatD ga, gb;
  run(true, &ga, &gb);
  check_against_fd(a, [&] { return run(false, nullptr, nullptr); }, ga);
  check_against_fd(b, [&] { return run(false, nullptr, nullptr); }, gb);
}

TEST_CASE("gelu gradient") {
  MatD x = randn(3, 4, 15);
  Harness h(3, 4);
  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vx = leaf(t, x, true);
    double s = h.reduce(t, gelu(vx), bw);
    if (bw) *gx = vx.grad();
    return s;
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(x, [&] { return run(false, nullptr); }, gx);
}

TEST_CASE("layer_norm_rows value and gradients") {
  MatD x = randn(4, 6, 16);
  MatD gamma = randn(1, 6, 17).array() + 2.0;
  MatD beta = randn(1, 6, 18);

  // An all-equal row with unit affine normalizes to zero.
  {
    Tape<double> t;
    MatD same = MatD::Constant(1, 6, 3.25);
    auto v = layer_norm_rows(leaf(t, same), leaf(t, MatD::Ones(1, 6)),
                             leaf(t, MatD::Zero(1, 6)), 1e-5);
    CHECK(v.value().cwiseAbs().maxCoeff() < 1e-9);
  }

  Harness h(4, 6);
  auto run = [&](bool bw, MatD* gx, MatD* gg, MatD* gb) {
    Tape<double> t;
    auto vx = leaf(t, x, true), vg = leaf(t, gamma, true), vb = leaf(t, beta, true);
    double s = h.reduce(t, layer_norm_rows(vx, vg, vb, 1e-5), bw);
    if (bw) {
      *gx = vx.grad();
      *gg = vg.grad();
      *gb = vb.grad();
    }
    return s;
  };
  MatD gx, gg, gb;
  run(true, &gx, &gg, &gb);
  check_against_fd(x, [&] { return run(false, nullptr, nullptr, nullptr); }, gx);
  check_against_fd(gamma, [&] { return run(false, nullptr, nullptr, nullptr); }, gg);
  check_against_fd(beta, [&] { return run(false, nullptr, nullptr, nullptr); }, gb);
}

TEST_CASE("softmax_rows gradients, plain and causal") {
  MatD x = randn(4, 4, 19);
  for (bool causal : {false, true}) {
    Harness h(4, 4);
    auto run = [&](bool bw, MatD* gx) {
      Tape<double> t;
      auto vx = leaf(t, x, true);
      double s = h.reduce(t, softmax_rows(vx, causal), bw);
      if (bw) *gx = vx.grad();
      return s;
    };
    MatD gx;
    run(true, &gx);
    check_against_fd(x, [&] { return run(false, nullptr); }, gx);
  }

  // Causal rows are normalized over the visible prefix.
  Tape<double> t;
  auto y = softmax_rows(leaf(t, x), true);
  for (int i = 0; i < 4; ++i) {
    double s = y.value().row(i).head(i + 1).sum();
    CHECK(s == doctest::Approx(1.0));
    for (int j = i + 1; j < 4; ++j) CHECK(y.value()(i, j) == 0.0);
  }
}

TEST_CASE("l2_normalize_rows gradient and unit norm") {
  MatD x = randn(3, 5, 20);
  Harness h(3, 5);
  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vx = leaf(t, x, true);
    auto y = l2_normalize_rows(vx);
    for (int i = 0; i < 3; ++i)
      CHECK(y.value().row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
    double s = h.reduce(t, y, bw);
    if (bw) *gx = vx.grad();
    return s;
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(x, [&] { return run(false, nullptr); }, gx);
}

TEST_CASE("cross_entropy_masked value and gradient") {
  const int T = 5, V = 7;
  MatD logits = randn(T, V, 21);
  std::vector<int> targets = {1, 3, 0, 6, 2};
  std::vector<uint8_t> mask = {0, 1, 1, 0, 1};

  // Uniform logits give ln V.
  {
    Tape<double> t;
    auto l = leaf(t, MatD::Zero(T, V));
    auto loss = cross_entropy_masked(l, targets, mask);
    CHECK(loss.scalar() == doctest::Approx(std::log(double(V))));
  }
  // Perturbing a masked-out row leaves the loss unchanged.
  {
    Tape<double> t1, t2;
    MatD pert = logits;
    pert.row(0).array() += 3.0;
    auto a = cross_entropy_masked(leaf(t1, logits), targets, mask);
    auto b = cross_entropy_masked(leaf(t2, pert), targets, mask);
    CHECK(a.scalar() == b.scalar());
  }

  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vl = leaf(t, logits, true);
    auto loss = cross_entropy_masked(vl, targets, mask);
    if (bw) t.backward(loss);
    if (bw) *gx = vl.grad();
    return loss.scalar();
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(logits, [&] { return run(false, nullptr); }, gx);
}

TEST_CASE("neg_log_first_softmax value and gradient") {
  MatD x = randn(1, 4, 22);
  {
    // Equal entries: -log(1/4) = ln 4.
    Tape<double> t;
    auto v = neg_log_first_softmax(leaf(t, MatD::Zero(1, 4)));
    CHECK(v.scalar() == doctest::Approx(std::log(4.0)));
  }
  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vx = leaf(t, x, true);
    auto loss = neg_log_first_softmax(vx);
    if (bw) t.backward(loss);
    if (bw) *gx = vx.grad();
    return loss.scalar();
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(x, [&] { return run(false, nullptr); }, gx);
}

TEST_CASE("supcon_from_sim analytic cases") {
  // Two samples sharing every label: numerator equals denominator.
  {
    Tape<double> t;
    MatD sim = randn(2, 2, 23);
    auto loss = supcon_from_sim(leaf(t, sim), {{0, 0}, {1, 1}});
    CHECK(loss.scalar() == doctest::Approx(0.0));
  }
  // Three identical embeddings, one positive and one negative per anchor for
  // anchors 0 and 1; anchor 2 has no positives and is excluded.
  {
    Tape<double> t;
    MatD sim = MatD::Constant(3, 3, 0.37);
    auto loss = supcon_from_sim(leaf(t, sim), {{0, 0, 1}});
    CHECK(loss.scalar() == doctest::Approx(std::log(2.0)));
  }
  // Batch of one valid feature plus one all-distinct feature: the latter is
  // skipped, loss stays finite.
  {
    Tape<double> t;
    MatD sim = randn(3, 3, 24);
    auto loss = supcon_from_sim(leaf(t, sim), {{0, 0, 0}, {0, 1, 2}});
    CHECK(std::isfinite(loss.scalar()));
  }
  CHECK_THROWS_AS(
      [] {
        Tape<double> t;
        MatD sim = MatD::Zero(1, 1);
        supcon_from_sim(leaf(t, sim), {{0}});
      }(),
      Error);
}

TEST_CASE("supcon_from_sim gradient") {
  MatD sim = randn(5, 5, 25);
  std::vector<std::vector<int>> labels = {{0, 1, 0, 1, 0}, {2, 2, 2, 3, 3}};
  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vs = leaf(t, sim, true);
    auto loss = supcon_from_sim(vs, labels);
    if (bw) t.backward(loss);
    if (bw) *gx = vs.grad();
    return loss.scalar();
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(sim, [&] { return run(false, nullptr); }, gx);
}

TEST_CASE("full contrastive pipeline gradient: normalize -> sim -> supcon") {
  MatD omega = randn(4, 6, 26);
  std::vector<std::vector<int>> labels = {{0, 0, 1, 1}};
  const double tau = 0.07;
  auto run = [&](bool bw, MatD* gx) {
    Tape<double> t;
    auto vo = leaf(t, omega, true);
    auto n = l2_normalize_rows(vo);
    auto sim = scale(matmul_nt(n, n), 1.0 / tau);
    auto loss = supcon_from_sim(sim, labels);
    if (bw) t.backward(loss);
    if (bw) *gx = vo.grad();
    return loss.scalar();
  };
  MatD gx;
  run(true, &gx);
  check_against_fd(omega, [&] { return run(false, nullptr); }, gx, 2e-5);
}

TEST_CASE("dropout scales kept entries and zeroes the rest") {
  MatD x = MatD::Ones(20, 20);
  Tape<double> t;
  std::mt19937_64 rng(42);
  auto y = dropout(leaf(t, x, true), 0.25, rng);
  int zeros = 0, scaled = 0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      double v = y.value()(i, j);
      if (v == 0.0) ++zeros;
      else {
        CHECK(v == doctest::Approx(1.0 / 0.75));
        ++scaled;
      }
    }
  CHECK(zeros > 40);
  CHECK(scaled > 200);

  // p = 0 is the identity (same node).
  std::mt19937_64 rng2(1);
  auto z = dropout(y, 0.0, rng2);
  CHECK(z.id == y.id);
}

TEST_CASE("backward_from seeds external gradients") {
  // d(3a + 2b)/da = 3 via two seeds on intermediate nodes.
  Tape<double> t;
  MatD a0 = MatD::Constant(1, 1, 2.0);
  auto a = leaf(t, a0, true);
  auto x = scale(a, 3.0);
  auto y = scale(a, 2.0);
  t.backward_from({{x, MatD::Ones(1, 1)}, {y, MatD::Ones(1, 1)}});
  CHECK(a.grad()(0, 0) == doctest::Approx(5.0));
}
