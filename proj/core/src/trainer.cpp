#include "milqt/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

namespace {

using nlohmann::json;

// fn(i) for i in [0, n), on up to `threads` workers. Indices are handed
// out dynamically; callers must make fn(i) independent of schedule (write
// only to slot i) so results do not depend on the worker count.
void run_indexed(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::scoped_lock lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(n);  // drain remaining work
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  std::size_t count = std::min(threads, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// Parse every external feature block once, before any parallel section.
void warm_features(const FeatureStore& store, const DatasetBundle& bundle) {
  for (const SampleRecord& rec : bundle.samples) {
    if (!rec.feature.is_inline()) store.block(rec.feature.path, rec.feature.row);
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void require_same_vocabularies(const DatasetBundle& train, const DatasetBundle& eval_set) {
  if (train.vocab.digest() != eval_set.vocab.digest()) {
    throw ValidationError("eval split uses a different token vocabulary than the training split");
  }
  if (train.answers.digest() != eval_set.answers.digest()) {
    throw ValidationError("eval split uses a different answer list than the training split");
  }
  if (train.qtype_names != eval_set.qtype_names) {
    throw ValidationError("eval split uses different question types than the training split");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs must be at least 1");
  if (batch_size == 0) throw ValidationError("batch size must be at least 1");
  if (max_q_len == 0) throw ValidationError("max question length must be at least 1");
  if (threads == 0) throw ValidationError("thread count must be at least 1");
  if (kinds.empty()) throw ValidationError("hypothesis list is empty");
  auto weight_ok = [](double w) { return std::isfinite(w) && w >= 0.0; };
  if (!weight_ok(loss_weights.hyp) || !weight_ok(loss_weights.vqa) ||
      !weight_ok(loss_weights.qt)) {
    throw ValidationError("loss weights must be finite and non-negative");
  }
  if (loss_weights.hyp == 0.0 && loss_weights.vqa == 0.0 && loss_weights.qt == 0.0) {
    throw ValidationError("at least one loss weight must be positive");
  }
  if (options.interaction == InteractionMode::Single && kinds.size() != 1) {
    throw ValidationError("interaction mode 'single' needs exactly one hypothesis");
  }
  auto need = [](std::size_t v, const char* what) {
    if (v == 0) throw ValidationError(std::string(what) + " must be positive");
  };
  need(dims.embed, "embed width");
  need(dims.hidden, "hidden width");
  need(dims.fused, "fused width");
  need(dims.regions, "region count");
  need(dims.region_width, "region width");
  need(dims.att_hidden, "attention width");
  need(dims.lowrank, "rank");
  need(dims.stacked_hidden, "stacked width");
}

TrainConfig train_config_from_json(std::string_view text, TrainConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config must be a JSON object");

  TrainConfig cfg = std::move(base);
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
      else if (key == "max_q_len") cfg.max_q_len = value.get<std::size_t>();
      else if (key == "log_every") cfg.log_every = value.get<std::size_t>();
      else if (key == "threads") cfg.threads = value.get<std::size_t>();
      else if (key == "lr") cfg.optim.lr = value.get<double>();
      else if (key == "beta1") cfg.optim.beta1 = value.get<double>();
      else if (key == "beta2") cfg.optim.beta2 = value.get<double>();
      else if (key == "eps") cfg.optim.eps = value.get<double>();
      else if (key == "clip_norm") cfg.optim.clip_norm = value.get<double>();
      else if (key == "alpha_hyp") cfg.loss_weights.hyp = value.get<double>();
      else if (key == "alpha_vqa") cfg.loss_weights.vqa = value.get<double>();
      else if (key == "alpha_qt") cfg.loss_weights.qt = value.get<double>();
      else if (key == "hypotheses") cfg.kinds = parse_kinds(value.get<std::string>());
      else if (key == "embed") cfg.dims.embed = value.get<std::size_t>();
      else if (key == "hidden") cfg.dims.hidden = value.get<std::size_t>();
      else if (key == "fused") cfg.dims.fused = value.get<std::size_t>();
      else if (key == "regions") cfg.dims.regions = value.get<std::size_t>();
      else if (key == "region_width") cfg.dims.region_width = value.get<std::size_t>();
      else if (key == "att_hidden") cfg.dims.att_hidden = value.get<std::size_t>();
      else if (key == "lowrank") cfg.dims.lowrank = value.get<std::size_t>();
      else if (key == "stacked_hidden") cfg.dims.stacked_hidden = value.get<std::size_t>();
      else if (key == "prior") {
        std::string mode = value.get<std::string>();
        if (mode != "on" && mode != "off") {
          throw ValidationError("config key 'prior' must be \"on\" or \"off\"");
        }
        cfg.options.prior_on = mode == "on";
      } else if (key == "inference_weighting")
        cfg.options.inference_weighting = value.get<bool>();
      else if (key == "stop_gradient_h") cfg.options.stop_gradient_h = value.get<bool>();
      else if (key == "h_mode") cfg.options.h_mode = h_mode_from(value.get<std::string>());
      else if (key == "fusion") cfg.options.fusion = fusion_from(value.get<std::string>());
      else if (key == "interaction")
        cfg.options.interaction = interaction_from(value.get<std::string>());
      else if (key == "interaction_softmax")
        cfg.options.interaction_softmax = value.get<bool>();
      else throw ValidationError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config value has the wrong type: ") + e.what());
  }
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j{{"seed", cfg.seed},
         {"epochs", cfg.epochs},
         {"batch_size", cfg.batch_size},
         {"max_q_len", cfg.max_q_len},
         {"log_every", cfg.log_every},
         {"threads", cfg.threads},
         {"lr", cfg.optim.lr},
         {"beta1", cfg.optim.beta1},
         {"beta2", cfg.optim.beta2},
         {"eps", cfg.optim.eps},
         {"clip_norm", cfg.optim.clip_norm},
         {"alpha_hyp", cfg.loss_weights.hyp},
         {"alpha_vqa", cfg.loss_weights.vqa},
         {"alpha_qt", cfg.loss_weights.qt},
         {"hypotheses", kinds_csv(cfg.kinds)},
         {"embed", cfg.dims.embed},
         {"hidden", cfg.dims.hidden},
         {"fused", cfg.dims.fused},
         {"regions", cfg.dims.regions},
         {"region_width", cfg.dims.region_width},
         {"att_hidden", cfg.dims.att_hidden},
         {"lowrank", cfg.dims.lowrank},
         {"stacked_hidden", cfg.dims.stacked_hidden},
         {"prior", cfg.options.prior_on ? "on" : "off"},
         {"inference_weighting", cfg.options.inference_weighting},
         {"stop_gradient_h", cfg.options.stop_gradient_h},
         {"h_mode", h_mode_name(cfg.options.h_mode)},
         {"fusion", fusion_name(cfg.options.fusion)},
         {"interaction", interaction_name(cfg.options.interaction)},
         {"interaction_softmax", cfg.options.interaction_softmax}};
  return j.dump(2) + "\n";
}

std::size_t threads_from_env() {
  const char* raw = std::getenv("MILQT_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  std::size_t n = parse_size(raw);
  return n == 0 ? 1 : n;
}

TrainResult train_model(const TrainConfig& cfg, const DatasetBundle& train,
                        const DatasetBundle* eval_set, const LogFn& log,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  train.validate();
  if (train.samples.empty()) throw ValidationError("training split has no samples");
  if (eval_set != nullptr) require_same_vocabularies(train, *eval_set);

  ModelDims dims = cfg.dims;
  dims.vocab = train.vocab.size();
  dims.num_types = train.num_types();
  dims.num_answers = train.num_answers();

  TrainResult result;
  Rng rng(cfg.seed);
  result.params = ModelParams::init(dims, cfg.kinds, compute_prior(train), rng);
  ModelParams& params = result.params;
  Adamax optimizer(params.named_params(), cfg.optim);

  FeatureStore store(train.base_dir);
  warm_features(store, train);

  std::vector<std::size_t> order(train.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = rng.fork(0x51u);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochStats es;
    es.epoch = epoch;
    double norm_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t b = std::min(cfg.batch_size, order.size() - start);
      std::vector<Tape> tapes(b);
      std::vector<SampleLossTerms> terms(b);
      run_indexed(b, cfg.threads, [&](std::size_t bi) {
        const SampleRecord& rec = train.samples[order[start + bi]];
        Tape& tape = tapes[bi];
        SampleForward fwd = model_forward(tape, params, rec, store, cfg.options);
        terms[bi] = sample_losses(tape, fwd, rec, dims.num_answers, cfg.options);
        Tensor total = combine_loss(tape, terms[bi], cfg.loss_weights,
                                    1.0 / static_cast<double>(b));
        tape.backward(total);
      });
      // Index-order merge keeps gradients independent of the worker count.
      for (std::size_t bi = 0; bi < b; ++bi) tapes[bi].accumulate_leaf_grads();

      LossBreakdown batch_bd;
      for (std::size_t bi = 0; bi < b; ++bi) {
        es.losses.add(terms[bi], cfg.loss_weights);
        batch_bd.add(terms[bi], cfg.loss_weights);
      }
      batch_bd.finish();

      double norm = optimizer.step();
      norm_sum += norm;
      ++batches;
      ++step;
      if (log && cfg.log_every > 0 && step % cfg.log_every == 0) {
        std::string line = "step=" + std::to_string(step) + " epoch=" + std::to_string(epoch);
        for (std::size_t j = 0; j < batch_bd.hyp.size(); ++j) {
          line += " l_H" + std::to_string(j) + "=" + num(batch_bd.hyp[j]);
        }
        line += " l_vqa=" + num(batch_bd.vqa) + " l_qt=" + num(batch_bd.qt) +
                " total=" + num(batch_bd.total) + " gnorm=" + num(norm);
        log(line);
      }
    }

    es.losses.finish();
    es.mean_grad_norm = batches ? norm_sum / static_cast<double>(batches) : 0.0;
    if (eval_set != nullptr) {
      MetricsReport rep = evaluate_model(params, cfg.options, *eval_set, cfg.threads);
      es.eval_answer_acc = rep.answer_accuracy;
    }
    if (log) {
      std::string line = "epoch=" + std::to_string(epoch) + " total=" + num(es.losses.total) +
                         " l_vqa=" + num(es.losses.vqa) + " l_qt=" + num(es.losses.qt) +
                         " gnorm=" + num(es.mean_grad_norm);
      if (es.eval_answer_acc >= 0.0) line += " eval_acc=" + num(es.eval_answer_acc);
      log(line);
    }
    result.epochs.push_back(std::move(es));
    if (on_epoch) on_epoch(epoch, params, optimizer);
  }
  return result;
}

MetricsReport evaluate_model(const ModelParams& params, const ModelOptions& opt,
                             const DatasetBundle& data, std::size_t threads) {
  data.validate();
  FeatureStore store(data.base_dir);
  warm_features(store, data);
  std::size_t n = data.samples.size();
  std::vector<std::pair<int, std::size_t>> preds(n);
  run_indexed(n, threads == 0 ? 1 : threads, [&](std::size_t i) {
    Tape tape;
    SampleForward fwd = model_forward(tape, params, data.samples[i], store, opt);
    preds[i] = {fwd.predicted_answer(), fwd.predicted_type()};
  });
  MetricsAccum accum(data.qtype_names);
  for (std::size_t i = 0; i < n; ++i) {
    accum.add(data.samples[i], preds[i].first, preds[i].second);
  }
  return accum.finalize();
}

SampleForward run_sample(const ModelParams& params, const SampleRecord& rec,
                         const FeatureStore& store, const ModelOptions& opt) {
  Tape tape;
  return model_forward(tape, params, rec, store, opt);
}

}  // namespace milqt
