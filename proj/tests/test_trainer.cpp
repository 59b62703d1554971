// Training driver: config parsing, the epoch loop, determinism across
// runs and worker counts, evaluation accounting, and the divergence path.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "checks.hpp"
#include "milqt/checkpoint.hpp"
#include "milqt/error.hpp"
#include "milqt/synthetic.hpp"
#include "milqt/trainer.hpp"
#include "milqt/util.hpp"

using namespace milqt;

namespace {

// A config that trains a small model fast and passes validate().
TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.max_q_len = 12;
  cfg.log_every = 3;
  cfg.threads = 1;
  cfg.kinds = {HypKind::TopDown, HypKind::BilinearLowRank};
  cfg.dims.embed = 8;
  cfg.dims.hidden = 10;
  cfg.dims.fused = 12;
  cfg.dims.regions = 4;
  cfg.dims.region_width = 8;
  cfg.dims.att_hidden = 10;
  cfg.dims.lowrank = 6;
  cfg.dims.stacked_hidden = 10;
  return cfg;
}

DatasetBundle toy_data(std::uint64_t seed, std::size_t n) {
  return gen_synthetic(seed, n, 3, 6, 4, 8);
}

bool params_equal(ModelParams& a, ModelParams& b) {
  auto na = a.named_params();
  auto nb = b.named_params();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (na[i].first != nb[i].first) return false;
    if (na[i].second->values() != nb[i].second->values()) return false;
  }
  return true;
}

// Relative path -> contents for every regular file under root.
std::string slurp_tree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::vector<std::string> rel;
  rel.reserve(files.size());
  for (const auto& f : files) rel.push_back(f.lexically_relative(root).generic_string());
  std::sort(rel.begin(), rel.end());
  std::string out;
  for (const auto& r : rel) {
    out += r;
    out += '\0';
    out += read_file(root / r);
    out += '\0';
  }
  return out;
}

}  // namespace

TEST_CASE("config json round trip covers every field") {
  TrainConfig cfg;
  cfg.seed = 99;
  cfg.epochs = 7;
  cfg.batch_size = 5;
  cfg.max_q_len = 9;
  cfg.log_every = 2;
  cfg.threads = 3;
  cfg.optim.lr = 0.5;
  cfg.optim.beta1 = 0.8;
  cfg.optim.beta2 = 0.9;
  cfg.optim.eps = 1e-6;
  cfg.optim.clip_norm = 2.5;
  cfg.loss_weights = {0.5, 2.0, 0.25};
  cfg.kinds = {HypKind::Stacked2};
  cfg.dims.embed = 3;
  cfg.dims.hidden = 5;
  cfg.dims.fused = 7;
  cfg.dims.regions = 2;
  cfg.dims.region_width = 9;
  cfg.dims.att_hidden = 11;
  cfg.dims.lowrank = 13;
  cfg.dims.stacked_hidden = 15;
  cfg.options.prior_on = false;
  cfg.options.inference_weighting = false;
  cfg.options.stop_gradient_h = true;
  cfg.options.h_mode = HMode::Groundtruth;
  cfg.options.fusion = FusionOp::EWA;
  cfg.options.interaction = InteractionMode::Averaging;
  cfg.options.interaction_softmax = true;

  std::string text = train_config_to_json(cfg);
  TrainConfig back = train_config_from_json(text);

  CHECK(back.seed == 99);
  CHECK(back.epochs == 7);
  CHECK(back.batch_size == 5);
  CHECK(back.max_q_len == 9);
  CHECK(back.log_every == 2);
  CHECK(back.threads == 3);
  CHECK(back.optim.lr == 0.5);
  CHECK(back.optim.beta1 == 0.8);
  CHECK(back.optim.beta2 == 0.9);
  CHECK(back.optim.eps == 1e-6);
  CHECK(back.optim.clip_norm == 2.5);
  CHECK(back.loss_weights.hyp == 0.5);
  CHECK(back.loss_weights.vqa == 2.0);
  CHECK(back.loss_weights.qt == 0.25);
  CHECK(kinds_csv(back.kinds) == "stacked2");
  CHECK(back.dims.embed == 3);
  CHECK(back.dims.stacked_hidden == 15);
  CHECK(back.options.prior_on == false);
  CHECK(back.options.inference_weighting == false);
  CHECK(back.options.stop_gradient_h == true);
  CHECK(back.options.h_mode == HMode::Groundtruth);
  CHECK(back.options.fusion == FusionOp::EWA);
  CHECK(back.options.interaction == InteractionMode::Averaging);
  CHECK(back.options.interaction_softmax == true);
  // Serializing again reproduces the exact same text.
  CHECK(train_config_to_json(back) == text);
}

TEST_CASE("config json applies onto a base without clearing other fields") {
  TrainConfig base;
  base.optim.lr = 0.25;
  base.epochs = 4;

  TrainConfig cfg = train_config_from_json("{\"epochs\": 9}", base);
  CHECK(cfg.epochs == 9);
  CHECK(cfg.optim.lr == 0.25);

  // An empty object changes nothing.
  TrainConfig same = train_config_from_json("{}", base);
  CHECK(train_config_to_json(same) == train_config_to_json(base));
}

TEST_CASE("config json rejects unknown keys and bad values") {
  CHECK_THROWS_AS(train_config_from_json("{\"epochz\": 3}"), ValidationError);
  CHECK_THROWS_AS(train_config_from_json("{\"epochs\": \"three\"}"), ParseError);
  CHECK_THROWS_AS(train_config_from_json("{\"lr\": []}"), ParseError);
  CHECK_THROWS_AS(train_config_from_json("not json"), ParseError);
  CHECK_THROWS_AS(train_config_from_json("[1, 2]"), ParseError);
  CHECK_THROWS_AS(train_config_from_json("{\"prior\": \"maybe\"}"), ValidationError);
  CHECK_THROWS_AS(train_config_from_json("{\"hypotheses\": \"topdown,nosuch\"}"),
                  ValidationError);
  CHECK_THROWS_AS(train_config_from_json("{\"h_mode\": \"psychic\"}"), ValidationError);
}

TEST_CASE("config validation rejects degenerate settings") {
  TrainConfig good = toy_config();
  CHECK_NOTHROW(good.validate());

  auto broken = [&](auto mutate) {
    TrainConfig c = toy_config();
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ValidationError);
  };
  broken([](TrainConfig& c) { c.epochs = 0; });
  broken([](TrainConfig& c) { c.batch_size = 0; });
  broken([](TrainConfig& c) { c.max_q_len = 0; });
  broken([](TrainConfig& c) { c.threads = 0; });
  broken([](TrainConfig& c) { c.kinds.clear(); });
  broken([](TrainConfig& c) { c.loss_weights.vqa = -1.0; });
  broken([](TrainConfig& c) { c.loss_weights.qt = std::nan(""); });
  broken([](TrainConfig& c) { c.loss_weights = {0.0, 0.0, 0.0}; });
  broken([](TrainConfig& c) { c.options.interaction = InteractionMode::Single; });
  broken([](TrainConfig& c) { c.dims.embed = 0; });
  broken([](TrainConfig& c) { c.dims.lowrank = 0; });
}

TEST_CASE("thread count comes from the environment variable") {
  const char* saved = std::getenv("MILQT_THREADS");
  std::string saved_copy = saved ? saved : "";

  unsetenv("MILQT_THREADS");
  CHECK(threads_from_env() == 1);
  setenv("MILQT_THREADS", "4", 1);
  CHECK(threads_from_env() == 4);
  setenv("MILQT_THREADS", "0", 1);
  CHECK(threads_from_env() == 1);
  setenv("MILQT_THREADS", "", 1);
  CHECK(threads_from_env() == 1);
  setenv("MILQT_THREADS", "two", 1);
  CHECK_THROWS_AS(threads_from_env(), ParseError);

  if (saved) {
    setenv("MILQT_THREADS", saved_copy.c_str(), 1);
  } else {
    unsetenv("MILQT_THREADS");
  }
}

TEST_CASE("two epochs of training produce stats and log lines") {
  DatasetBundle train = toy_data(11, 160);
  DatasetBundle eval_set = toy_data(12, 48);
  TrainConfig cfg = toy_config();

  std::vector<std::string> lines;
  std::vector<std::size_t> cb_epochs;
  std::vector<std::size_t> cb_steps;
  TrainResult res = train_model(
      cfg, train, &eval_set, [&](const std::string& s) { lines.push_back(s); },
      [&](std::size_t epoch, ModelParams&, const Adamax& opt) {
        cb_epochs.push_back(epoch);
        cb_steps.push_back(opt.step_count());
      });

  REQUIRE(res.epochs.size() == 2);
  CHECK(res.epochs[0].epoch == 1);
  CHECK(res.epochs[1].epoch == 2);
  for (const EpochStats& es : res.epochs) {
    REQUIRE(es.losses.hyp.size() == 2);
    CHECK(std::isfinite(es.losses.total));
    CHECK(es.losses.total > 0.0);
    CHECK(es.losses.vqa > 0.0);
    CHECK(es.losses.qt > 0.0);
    CHECK(es.mean_grad_norm > 0.0);
    CHECK(es.eval_answer_acc >= 0.0);
    CHECK(es.eval_answer_acc <= 1.0);
  }

  // 160 samples / batch 16 = 10 steps per epoch; log_every=3 prints at
  // steps 3,6,9,12,15,18, plus one summary line per epoch.
  std::size_t step_lines = 0, epoch_lines = 0;
  for (const std::string& l : lines) {
    if (l.rfind("step=", 0) == 0) {
      ++step_lines;
      CHECK(l.find(" l_H0=") != std::string::npos);
      CHECK(l.find(" l_H1=") != std::string::npos);
      CHECK(l.find(" l_vqa=") != std::string::npos);
      CHECK(l.find(" l_qt=") != std::string::npos);
      CHECK(l.find(" total=") != std::string::npos);
      CHECK(l.find(" gnorm=") != std::string::npos);
    } else if (l.rfind("epoch=", 0) == 0) {
      ++epoch_lines;
      CHECK(l.find(" total=") != std::string::npos);
      CHECK(l.find(" eval_acc=") != std::string::npos);
    }
  }
  CHECK(step_lines == 6);
  CHECK(epoch_lines == 2);
  CHECK(lines.front().rfind("step=3 epoch=1 ", 0) == 0);

  // The callback fired once per epoch with a stepped optimizer.
  CHECK(cb_epochs == std::vector<std::size_t>{1, 2});
  CHECK(cb_steps == std::vector<std::size_t>{10, 20});
}

TEST_CASE("log_every zero silences step lines but keeps epoch summaries") {
  DatasetBundle train = toy_data(3, 32);
  TrainConfig cfg = toy_config();
  cfg.epochs = 1;
  cfg.log_every = 0;

  std::vector<std::string> lines;
  TrainResult res =
      train_model(cfg, train, nullptr, [&](const std::string& s) { lines.push_back(s); });
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].rfind("epoch=1 ", 0) == 0);
  CHECK(lines[0].find("eval_acc") == std::string::npos);
  CHECK(res.epochs[0].eval_answer_acc == -1.0);
}

TEST_CASE("same seed trains to identical parameters and checkpoints") {
  DatasetBundle train = toy_data(21, 96);
  TrainConfig cfg = toy_config();
  cfg.seed = 77;

  TrainResult a = train_model(cfg, train);
  TrainResult b = train_model(cfg, train);

  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].losses.total == b.epochs[e].losses.total);
    CHECK(a.epochs[e].losses.vqa == b.epochs[e].losses.vqa);
    CHECK(a.epochs[e].losses.qt == b.epochs[e].losses.qt);
    CHECK(a.epochs[e].losses.hyp == b.epochs[e].losses.hyp);
    CHECK(a.epochs[e].mean_grad_norm == b.epochs[e].mean_grad_norm);
  }
  CHECK(params_equal(a.params, b.params));

  // Saved snapshots of the two runs are byte-identical.
  testing::TempDir dir("train_det");
  save_checkpoint(dir.path() / "a", a.params, cfg.options);
  save_checkpoint(dir.path() / "b", b.params, cfg.options);
  CHECK(slurp_tree(dir.path() / "a") == slurp_tree(dir.path() / "b"));

  // A different seed moves the parameters.
  TrainConfig other = cfg;
  other.seed = 78;
  TrainResult c = train_model(other, train);
  CHECK_FALSE(params_equal(a.params, c.params));
}

TEST_CASE("worker count does not change the arithmetic") {
  DatasetBundle train = toy_data(31, 96);
  TrainConfig cfg = toy_config();
  cfg.epochs = 1;

  TrainConfig quad = cfg;
  quad.threads = 4;

  TrainResult serial = train_model(cfg, train);
  TrainResult threaded = train_model(quad, train);

  CHECK(serial.epochs[0].losses.total == threaded.epochs[0].losses.total);
  CHECK(serial.epochs[0].mean_grad_norm == threaded.epochs[0].mean_grad_norm);
  CHECK(params_equal(serial.params, threaded.params));

  // Evaluation is forward-only and equally schedule-independent.
  MetricsReport r1 = evaluate_model(serial.params, cfg.options, train, 1);
  MetricsReport r3 = evaluate_model(serial.params, cfg.options, train, 3);
  CHECK(r1.answer_accuracy == r3.answer_accuracy);
  CHECK(r1.type_accuracy == r3.type_accuracy);
  CHECK(r1.to_csv() == r3.to_csv());
}

TEST_CASE("evaluation counts reconcile with the dataset") {
  DatasetBundle data = toy_data(41, 60);
  TrainConfig cfg = toy_config();
  ModelDims dims = cfg.dims;
  dims.vocab = data.vocab.size();
  dims.num_types = data.num_types();
  dims.num_answers = data.num_answers();
  Rng rng(5);
  ModelParams params = ModelParams::init(dims, cfg.kinds, compute_prior(data), rng);

  MetricsReport rep = evaluate_model(params, cfg.options, data, 2);
  CHECK(rep.num_samples == 60);
  CHECK(rep.qtype_names == data.qtype_names);
  std::vector<std::size_t> hist = data.type_histogram();
  REQUIRE(rep.per_type.size() == hist.size());
  std::size_t total = 0;
  for (std::size_t t = 0; t < hist.size(); ++t) {
    CHECK(rep.per_type[t].count == hist[t]);
    total += rep.per_type[t].count;
  }
  CHECK(total == 60);
  CHECK(rep.answer_accuracy >= 0.0);
  CHECK(rep.answer_accuracy <= 1.0);
  CHECK(rep.mpt_harmonic <= rep.mpt_arithmetic + 1e-12);
}

TEST_CASE("run_sample matches a manual forward pass") {
  DatasetBundle data = toy_data(51, 8);
  TrainConfig cfg = toy_config();
  ModelDims dims = cfg.dims;
  dims.vocab = data.vocab.size();
  dims.num_types = data.num_types();
  dims.num_answers = data.num_answers();
  Rng rng(9);
  ModelParams params = ModelParams::init(dims, cfg.kinds, compute_prior(data), rng);
  FeatureStore store(data.base_dir);

  SampleForward got = run_sample(params, data.samples[0], store, cfg.options);
  Tape tape;
  SampleForward want = model_forward(tape, params, data.samples[0], store, cfg.options);
  CHECK(got.scores == want.scores);
  CHECK(got.mixed.values() == want.mixed.values());
  CHECK(got.predicted_answer() == want.predicted_answer());
  CHECK(got.predicted_type() == want.predicted_type());
}

TEST_CASE("training refuses bad inputs") {
  DatasetBundle train = toy_data(61, 32);
  TrainConfig cfg = toy_config();
  cfg.epochs = 1;

  SUBCASE("empty training split") {
    DatasetBundle empty = train;
    empty.samples.clear();
    CHECK_THROWS_AS(train_model(cfg, empty), ValidationError);
  }
  SUBCASE("eval split with renamed question types") {
    DatasetBundle eval_set = train;
    eval_set.qtype_names[0] = "renamed";
    CHECK_THROWS_AS(train_model(cfg, train, &eval_set), ValidationError);
  }
  SUBCASE("eval split with a different answer list") {
    DatasetBundle eval_set = train;
    eval_set.answers.add("extra_answer");
    CHECK_THROWS_AS(train_model(cfg, train, &eval_set), ValidationError);
  }
  SUBCASE("config validation runs before any work") {
    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train_model(bad, train), ValidationError);
  }
}

TEST_CASE("a runaway learning rate raises a divergence error") {
  DatasetBundle train = toy_data(71, 32);
  TrainConfig cfg = toy_config();
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.kinds = {HypKind::TopDown};
  // One sane step, then the parameters sit near 1e160 and the next
  // forward pass overflows into non-finite territory.
  cfg.optim.lr = 1e160;
  cfg.optim.clip_norm = 0.0;
  CHECK_THROWS_AS(train_model(cfg, train), DivergenceError);
}
