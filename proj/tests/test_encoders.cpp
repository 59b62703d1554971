#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <milqt/dataset.hpp>
#include <milqt/encoders.hpp>
#include <milqt/error.hpp>
#include <milqt/ops.hpp>
#include <milqt/tape.hpp>
#include <milqt/tensor.hpp>
#include <milqt/util.hpp>

#include "checks.hpp"

using namespace milqt;

namespace {

// Scalar-loop GRU reimplementation of the documented cell equations. No
// tensors, no shared code with the library path.
std::vector<double> scalar_gru(const std::vector<std::vector<double>>& xs,
                               const GruParams& g) {
  std::size_t D_h = g.state_width();
  std::size_t D_w = xs.empty() ? 0 : xs[0].size();
  auto matvec = [&](const Tensor& w, const std::vector<double>& v, std::size_t in) {
    std::vector<double> out(D_h, 0.0);
    for (std::size_t i = 0; i < D_h; ++i) {
      for (std::size_t j = 0; j < in; ++j) out[i] += w.at(i, j) * v[j];
    }
    return out;
  };
  std::vector<double> h(D_h, 0.0);
  for (const auto& x : xs) {
    std::vector<double> wzx = matvec(g.w_z, x, D_w), uzh = matvec(g.u_z, h, D_h);
    std::vector<double> wrx = matvec(g.w_r, x, D_w), urh = matvec(g.u_r, h, D_h);
    std::vector<double> z(D_h), r(D_h);
    for (std::size_t i = 0; i < D_h; ++i) {
      z[i] = 1.0 / (1.0 + std::exp(-(wzx[i] + uzh[i] + g.b_z[i])));
      r[i] = 1.0 / (1.0 + std::exp(-(wrx[i] + urh[i] + g.b_r[i])));
    }
    std::vector<double> rh(D_h);
    for (std::size_t i = 0; i < D_h; ++i) rh[i] = r[i] * h[i];
    std::vector<double> whx = matvec(g.w_h, x, D_w), uhr = matvec(g.u_h, rh, D_h);
    for (std::size_t i = 0; i < D_h; ++i) {
      double hc = std::tanh(whx[i] + uhr[i] + g.b_h[i]);
      h[i] = (1.0 - z[i]) * h[i] + z[i] * hc;
    }
  }
  return h;
}

}  // namespace

TEST_CASE("xavier bounds and determinism") {
  Rng rng(3);
  Tensor w = xavier_uniform(5, 7, rng);
  REQUIRE((w.shape() == Shape{5, 7}));
  double bound = std::sqrt(6.0 / (5 + 7));
  bool nonzero = false;
  for (double v : w.values()) {
    CHECK(std::abs(v) <= bound);
    if (v != 0.0) nonzero = true;
  }
  CHECK(nonzero);

  Rng rng2(3);
  CHECK(xavier_uniform(5, 7, rng2).values() == w.values());
}

TEST_CASE("embedding lookup") {
  Tensor table = Tensor::from_rows(
      {{0.0, 0.0}, {9.0, 9.0}, {1.0, 2.0}, {3.0, 4.0}}, true);

  SUBCASE("rows are copied in token order; padding rows are zero") {
    Tape tape;
    std::vector<int> toks = {2, 3, Vocabulary::kPad, 2};
    Tensor f_w = embed_question(tape, table, toks);
    REQUIRE((f_w.shape() == Shape{4, 2}));
    CHECK(f_w.values() == std::vector<double>{1, 2, 3, 4, 0, 0, 1, 2});
  }

  SUBCASE("gradient scatters to used rows only; padding gets none") {
    Tape tape;
    std::vector<int> toks = {2, 3, Vocabulary::kPad, 2};
    Tensor f_w = embed_question(tape, table, toks);
    tape.backward(reduce(tape, f_w, Red::Sum));
    tape.accumulate_leaf_grads();
    // Row 2 appears twice, row 3 once, pad row 0 and unused row 1 never.
    CHECK(table.grad() == std::vector<double>{0, 0, 0, 0, 2, 2, 1, 1});
  }

  SUBCASE("all-padding question embeds to zeros") {
    Tape tape;
    std::vector<int> toks(3, Vocabulary::kPad);
    Tensor f_w = embed_question(tape, table, toks);
    CHECK(f_w.values() == std::vector<double>(6, 0.0));
  }
}

TEST_CASE("gru matches a scalar-loop reimplementation") {
  Rng rng(17);
  const std::size_t D_w = 4, D_h = 5, T = 3;
  GruParams g = GruParams::init(D_w, D_h, rng);
  CHECK(g.state_width() == D_h);

  std::vector<std::vector<double>> xs;
  std::vector<double> flat;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> row;
    for (std::size_t j = 0; j < D_w; ++j) row.push_back(rng.uniform(-1.0, 1.0));
    flat.insert(flat.end(), row.begin(), row.end());
    xs.push_back(std::move(row));
  }

  Tape tape;
  Tensor h = gru_encode(tape, Tensor({T, D_w}, flat), g);
  std::vector<double> want = scalar_gru(xs, g);
  REQUIRE(h.size() == D_h);
  for (std::size_t i = 0; i < D_h; ++i) {
    CHECK(h[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("gru with zero weights keeps a zero state") {
  GruParams g;
  g.w_z = Tensor::zeros({3, 2});
  g.u_z = Tensor::zeros({3, 3});
  g.b_z = Tensor::zeros({3});
  g.w_r = g.w_z; g.u_r = g.u_z; g.b_r = g.b_z;
  g.w_h = g.w_z; g.u_h = g.u_z; g.b_h = g.b_z;
  Tape tape;
  Tensor h = gru_encode(tape, Tensor::from_rows({{1.0, -2.0}, {0.5, 0.25}}), g);
  // Every gate is sigmoid(0) = 1/2 and the candidate is tanh(0) = 0, so the
  // state halves from zero and stays exactly zero.
  CHECK(h.values() == std::vector<double>(3, 0.0));
}

TEST_CASE("gru gradients agree with finite differences") {
  Rng rng(29);
  const std::size_t D_w = 4, D_h = 5, T = 3;
  GruParams g = GruParams::init(D_w, D_h, rng);
  // Re-wrap as trainable leaves.
  auto leaf = [](const Tensor& t) { return Tensor(t.shape(), t.values(), true); };
  g.w_z = leaf(g.w_z); g.u_z = leaf(g.u_z); g.b_z = leaf(g.b_z);
  g.w_r = leaf(g.w_r); g.u_r = leaf(g.u_r); g.b_r = leaf(g.b_r);
  g.w_h = leaf(g.w_h); g.u_h = leaf(g.u_h); g.b_h = leaf(g.b_h);

  std::vector<double> flat;
  for (std::size_t i = 0; i < T * D_w; ++i) flat.push_back(rng.uniform(-1.0, 1.0));
  Tensor x({T, D_w}, flat, true);

  std::vector<Tensor*> params = {&x,      &g.w_z, &g.u_z, &g.b_z, &g.w_r,
                                 &g.u_r,  &g.b_r, &g.w_h, &g.u_h, &g.b_h};
  double err = testing::fd_max_rel_err(params, [&](Tape& tape) {
    return reduce(tape, gru_encode(tape, x, g), Red::Sum);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("qtype head") {
  SUBCASE("zero weights give a uniform distribution") {
    QTypeHead head;
    head.fc1_w = Tensor::zeros({4, 3});
    head.fc1_b = Tensor::zeros({4});
    head.fc2_w = Tensor::zeros({5, 4});
    head.fc2_b = Tensor::zeros({5});
    Tape tape;
    QTypeOut out = qtype_forward(tape, Tensor({3}, {1.0, -1.0, 0.5}), head);
    REQUIRE(out.h.size() == 5);
    for (std::size_t p = 0; p < 5; ++p) {
      CHECK(out.h[p] == doctest::Approx(0.2).epsilon(1e-15));
    }
    CHECK(out.f_qt.values() == std::vector<double>(4, 0.0));
  }

  SUBCASE("random head emits a distribution and a rectified feature") {
    Rng rng(41);
    QTypeHead head = QTypeHead::init(6, 4, 3, rng);
    Tape tape;
    std::vector<double> xs;
    for (int i = 0; i < 6; ++i) xs.push_back(rng.uniform(-1.0, 1.0));
    QTypeOut out = qtype_forward(tape, Tensor({6}, xs), head);
    double sum = 0.0;
    for (std::size_t p = 0; p < 3; ++p) {
      CHECK(out.h[p] > 0.0);
      sum += out.h[p];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : out.f_qt.values()) CHECK(v >= 0.0);  // relu output
  }

  SUBCASE("gradients agree with finite differences") {
    Rng rng(43);
    QTypeHead head = QTypeHead::init(4, 3, 3, rng);
    auto leaf = [](const Tensor& t) { return Tensor(t.shape(), t.values(), true); };
    head.fc1_w = leaf(head.fc1_w);
    head.fc1_b = leaf(head.fc1_b);
    head.fc2_w = leaf(head.fc2_w);
    head.fc2_b = leaf(head.fc2_b);
    Tensor x({4}, {0.3, -0.7, 1.1, 0.4}, true);
    std::vector<Tensor*> params = {&x, &head.fc1_w, &head.fc1_b, &head.fc2_w, &head.fc2_b};
    double err = testing::fd_max_rel_err(params, [&](Tape& tape) {
      QTypeOut out = qtype_forward(tape, x, head);
      // Scalar probe mixing both outputs.
      return add(tape, dot(tape, out.h, out.h),
                 reduce(tape, out.f_qt, Red::Sum));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("visual features are frozen constants") {
  testing::TempDir dir("vis");
  write_file(dir.path() / "feat.txt", "shape: 2 3\n1 2 3\n4 5 6\n");
  FeatureStore store(dir.path());

  SUBCASE("file-backed lookup") {
    FeatureRef ref;
    ref.path = "feat.txt";
    ref.row = 0;
    Tensor f_v = load_visual(store, ref, 2, 3);
    CHECK(f_v.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK_FALSE(f_v.requires_grad());
  }

  SUBCASE("inline lookup") {
    FeatureRef ref;
    ref.inline_features = Tensor::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    Tensor f_v = load_visual(store, ref, 2, 3);
    CHECK(f_v.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK_FALSE(f_v.requires_grad());
  }

  SUBCASE("no gradient reaches the constant") {
    FeatureRef ref;
    ref.inline_features = Tensor::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    Tape tape;
    Tensor f_v = load_visual(store, ref, 2, 3);
    Tensor w = Tensor::ones({2, 3});
    // ones() is not trainable either, so the whole product is constant.
    Tensor loss = reduce(tape, mul(tape, f_v, w), Red::Sum);
    tape.backward(loss);
    tape.accumulate_leaf_grads();
    CHECK_FALSE(f_v.has_grad());
  }

  SUBCASE("shape mismatch is rejected") {
    FeatureRef ref;
    ref.path = "feat.txt";
    ref.row = 0;
    CHECK_THROWS_AS(load_visual(store, ref, 4, 8), ShapeError);
  }

  SUBCASE("missing file and block are distinct errors") {
    FeatureRef missing;
    missing.path = "nope.txt";
    missing.row = 0;
    CHECK_THROWS_AS(load_visual(store, missing, 2, 3), IoError);
    FeatureRef bad_row;
    bad_row.path = "feat.txt";
    bad_row.row = 5;
    CHECK_THROWS_AS(load_visual(store, bad_row, 2, 3), IoError);
  }
}
