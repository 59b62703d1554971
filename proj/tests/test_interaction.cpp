#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include <milqt/error.hpp>
#include <milqt/interaction.hpp>
#include <milqt/ops.hpp>
#include <milqt/prior.hpp>
#include <milqt/tape.hpp>
#include <milqt/tensor.hpp>
#include <milqt/util.hpp>

#include "checks.hpp"

using namespace milqt;

TEST_CASE("mixing weights start at the uniform mixture") {
  InteractionWeights w = InteractionWeights::init(3, 4);
  REQUIRE((w.w_mil.shape() == Shape{3, 4}));
  CHECK(w.w_mil.requires_grad());
  CHECK(w.w_mil.values() == std::vector<double>(12, 0.25));
}

TEST_CASE("worked mixing fixture") {
  // Identity co-occurrence and identity mixing table: answer a listens only
  // to hypothesis a.
  Tensor prior_t = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});  // [A x P]
  Tensor w_mil = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}}, true);
  Tensor g = Tensor::from_rows({{0.8, 0.2}, {0.1, 0.9}});
  Tape tape;
  Tensor s = mixing_table(tape, prior_t, w_mil, false);
  CHECK(s.values() == std::vector<double>{1.0, 0.0, 0.0, 1.0});
  Tensor rho = mix_hypotheses(tape, s, g);
  CHECK(rho.values() == std::vector<double>{0.8, 0.9});
}

TEST_CASE("single hypothesis with unit weight is an exact pass-through") {
  // Any exactly column-stochastic matrix works; this one has a closing row.
  DatasetBundle b;
  b.qtype_names = {"t0", "t1", "t2"};
  b.answers.add("a0");
  b.answers.add("a1");
  b.answers.add("a2");
  b.answers.add("a3");
  int n = 0;
  for (int qt : {0, 0, 1, 1, 1, 2}) {
    SampleRecord r;
    r.id = "q" + std::to_string(n);
    r.qtype = qt;
    r.answer_scores = {{n % 4, 1.0}};
    b.samples.push_back(std::move(r));
    ++n;
  }
  PriorMatrix prior = compute_prior(b);

  Tensor w_mil = Tensor::ones({3, 1});
  Tensor g({4}, {0.123456789, -3.25, 17.0, -0.0078125});
  Tape tape;
  Tensor s = mixing_table(tape, prior.transposed(), w_mil, false);
  // Every S entry is a full column sum of the prior: exactly one.
  CHECK(s.values() == std::vector<double>(4, 1.0));
  Tensor rho = mix_hypotheses(tape, s, reshape(tape, g, {4, 1}));
  CHECK(rho.values() == g.values());  // bitwise
}

TEST_CASE("uniform prior with constant per-hypothesis weights is a weighted sum") {
  PriorMatrix u = PriorMatrix::uniform({"t0", "t1"}, {"a0", "a1", "a2"});
  Tensor w_mil = Tensor::from_rows({{0.25, 0.75}, {0.25, 0.75}}, true);
  Tensor g = Tensor::from_rows({{1.0, 2.0}, {-1.0, 0.5}, {4.0, 0.0}});
  Tape tape;
  Tensor rho = mix_hypotheses(tape, mixing_table(tape, u.transposed(), w_mil, false), g);
  for (std::size_t a = 0; a < 3; ++a) {
    double want = 0.25 * g.at(a, 0) + 0.75 * g.at(a, 1);
    CHECK(rho[a] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("mixing is linear in the logits") {
  Rng rng(7);
  std::vector<double> sv(5 * 2), gv(5 * 2);
  for (double& v : sv) v = rng.uniform(-1.0, 1.0);
  for (double& v : gv) v = rng.uniform(-2.0, 2.0);
  Tensor s({5, 2}, sv);
  Tape tape;
  Tensor g({5, 2}, gv);
  Tensor rho = mix_hypotheses(tape, s, g);

  std::vector<double> g3(gv);
  for (double& v : g3) v *= 3.0;
  Tensor rho3 = mix_hypotheses(tape, s, Tensor({5, 2}, g3));
  for (std::size_t a = 0; a < 5; ++a) {
    CHECK(rho3[a] == doctest::Approx(3.0 * rho[a]).epsilon(1e-12));
  }

  Tensor rho0 = mix_hypotheses(tape, s, Tensor::zeros({5, 2}));
  CHECK(rho0.values() == std::vector<double>(5, 0.0));
}

TEST_CASE("averaging baseline") {
  Tape tape;
  Tensor g = Tensor::from_rows({{0.8, 0.2}, {0.1, 0.9}});
  Tensor rho = average_hypotheses(tape, g);
  CHECK(rho.values() == std::vector<double>{0.5, 0.5});

  // One hypothesis: averaging is also a pass-through.
  Tensor g1 = Tensor::from_rows({{0.7}, {-0.3}});
  CHECK(average_hypotheses(tape, g1).values() == std::vector<double>{0.7, -0.3});
}

TEST_CASE("row softmax turns mixing rows into distributions") {
  Tensor prior_t = Tensor::from_rows({{0.9, 0.1}, {0.4, 0.6}, {0.5, 0.5}});
  Tensor w_mil = Tensor::from_rows({{2.0, -1.0}, {0.0, 1.0}}, true);
  Tape tape;
  Tensor s = mixing_table(tape, prior_t, w_mil, true);
  REQUIRE((s.shape() == Shape{3, 2}));
  for (std::size_t a = 0; a < 3; ++a) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(s.at(a, j) > 0.0);
      sum += s.at(a, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradients agree with finite differences") {
  Rng rng(11);
  const std::size_t P = 3, A = 5, J = 2;
  std::vector<double> pv(A * P), wv(P * J), gv(A * J);
  for (double& v : pv) v = rng.uniform(0.0, 1.0);
  for (double& v : wv) v = rng.uniform(-1.0, 1.0);
  for (double& v : gv) v = rng.uniform(-2.0, 2.0);
  Tensor prior_t({A, P}, pv);  // constant
  Tensor w_mil({P, J}, wv, true);
  Tensor g({A, J}, gv, true);

  for (bool softmax_rows : {false, true}) {
    CAPTURE(softmax_rows);
    double err = testing::fd_max_rel_err({&w_mil, &g}, [&](Tape& tape) {
      Tensor rho =
          mix_hypotheses(tape, mixing_table(tape, prior_t, w_mil, softmax_rows), g);
      return dot(tape, rho, rho);
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("shape contracts") {
  Tape tape;
  Tensor s = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  CHECK_THROWS_AS(mix_hypotheses(tape, s, Tensor::from_rows({{1.0}, {2.0}})), ShapeError);
  CHECK_THROWS_AS(
      mixing_table(tape, Tensor::from_rows({{1.0, 0.0}}), Tensor::ones({3, 2}), false),
      ShapeError);
}

TEST_CASE("readout table lists one row per type") {
  Tensor w_mil = Tensor::from_rows({{0.25, 0.75}, {0.5, 0.5}});
  std::string csv = interaction_csv(w_mil, {"color", "count"}, {"h0_topdown", "h1_stacked2"});
  CHECK(csv ==
        "qtype,h0_topdown,h1_stacked2\n"
        "color,0.25,0.75\n"
        "count,0.5,0.5\n");

  // Values are written with round-trip precision.
  Tensor awkward = Tensor::from_rows({{1.0 / 3.0, 2.0 / 3.0}});
  std::string csv2 = interaction_csv(awkward, {"t"}, {"a", "b"});
  std::vector<std::string> lines = split(csv2, '\n');
  std::vector<std::string> cells = split(lines[1], ',');
  CHECK(parse_double(cells[1]) == 1.0 / 3.0);
  CHECK(parse_double(cells[2]) == 2.0 / 3.0);
}
