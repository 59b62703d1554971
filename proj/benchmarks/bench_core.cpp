// Microbenchmarks for the hot paths: dense matmul (forward and with the
// backward sweep), the GRU question encoder, prior computation, and a full
// sample forward/backward through the model. Numbers here are for spotting
// regressions, not for publication -- fixtures are toy-sized on purpose.
#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include <milqt/dataset.hpp>
#include <milqt/encoders.hpp>
#include <milqt/model.hpp>
#include <milqt/ops.hpp>
#include <milqt/prior.hpp>
#include <milqt/synthetic.hpp>
#include <milqt/tape.hpp>
#include <milqt/tensor.hpp>
#include <milqt/trainer.hpp>
#include <milqt/util.hpp>

using namespace milqt;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, bool param = false) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor({rows, cols}, std::move(v), param);
}

void bm_matmul_forward(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_matrix(n, n, rng);
  Tensor b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor c = matmul(tape, a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}

void bm_matmul_backward(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_matrix(n, n, rng, true);
  Tensor b = random_matrix(n, n, rng, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    Tape tape;
    Tensor loss = reduce(tape, matmul(tape, a, b), Red::Sum);
    tape.backward(loss);
    tape.accumulate_leaf_grads();
    benchmark::DoNotOptimize(a.grad().data());
  }
}

void bm_gru_encode(benchmark::State& state) {
  Rng rng(2);
  GruParams gru = GruParams::init(32, 48, rng);
  Tensor embedded = random_matrix(12, 32, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor q = gru_encode(tape, embedded, gru);
    benchmark::DoNotOptimize(q.values().data());
  }
}

void bm_compute_prior(benchmark::State& state) {
  DatasetBundle data = gen_synthetic(1, 1000, 3, 6, 4, 8);
  for (auto _ : state) {
    PriorMatrix prior = compute_prior(data);
    benchmark::DoNotOptimize(prior.m.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(data.samples.size()));
}

struct SampleFixture {
  DatasetBundle data = gen_synthetic(3, 32, 3, 6, 4, 8);
  ModelParams params;
  ModelOptions options;
  FeatureStore store{""};

  SampleFixture() {
    ModelDims dims;
    dims.vocab = data.vocab.size();
    dims.embed = 16;
    dims.hidden = 24;
    dims.fused = 24;
    dims.regions = 4;
    dims.region_width = 8;
    dims.num_types = data.num_types();
    dims.num_answers = data.num_answers();
    dims.att_hidden = 24;
    dims.lowrank = 8;
    dims.stacked_hidden = 24;
    std::vector<HypKind> kinds = {HypKind::TopDown, HypKind::BilinearLowRank};
    Rng rng(7);
    params = ModelParams::init(dims, kinds, compute_prior(data), rng);
  }
};

void bm_sample_forward(benchmark::State& state) {
  SampleFixture fx;
  const SampleRecord& rec = fx.data.samples.front();
  for (auto _ : state) {
    Tape tape;
    SampleForward fwd = model_forward(tape, fx.params, rec, fx.store, fx.options);
    benchmark::DoNotOptimize(fwd.scores.data());
  }
}

void bm_sample_backward(benchmark::State& state) {
  SampleFixture fx;
  const SampleRecord& rec = fx.data.samples.front();
  LossWeights weights;
  for (auto _ : state) {
    Tape tape;
    SampleForward fwd = model_forward(tape, fx.params, rec, fx.store, fx.options);
    SampleLossTerms terms =
        sample_losses(tape, fwd, rec, fx.data.num_answers(), fx.options);
    Tensor total = combine_loss(tape, terms, weights, 1.0);
    tape.backward(total);
    tape.accumulate_leaf_grads();
    benchmark::DoNotOptimize(total.item());
  }
}

BENCHMARK(bm_matmul_forward)->Arg(16)->Arg(64)->Arg(128);
BENCHMARK(bm_matmul_backward)->Arg(16)->Arg(64);
BENCHMARK(bm_gru_encode);
BENCHMARK(bm_compute_prior);
BENCHMARK(bm_sample_forward);
BENCHMARK(bm_sample_backward);

}  // namespace

BENCHMARK_MAIN();
