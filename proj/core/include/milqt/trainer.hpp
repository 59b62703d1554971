#pragma once

// Training and evaluation drivers. One optimizer step per minibatch; each
// sample in the batch gets its own tape, so forward/backward passes are
// independent and can run on worker threads. Gradients are then merged
// into the parameters in sample-index order, which keeps updates bitwise
// identical for any worker count.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "milqt/checkpoint.hpp"
#include "milqt/dataset.hpp"
#include "milqt/metrics.hpp"
#include "milqt/model.hpp"
#include "milqt/optimizer.hpp"

namespace milqt {

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::size_t max_q_len = 12;
  std::size_t log_every = 10;  // steps between loss lines; 0 silences them
  std::size_t threads = 1;
  AdamaxConfig optim;
  LossWeights loss_weights;
  std::vector<HypKind> kinds = {HypKind::TopDown, HypKind::BilinearLowRank,
                                HypKind::Stacked2};
  ModelDims dims;  // vocab/num_types/num_answers are taken from the data
  ModelOptions options;

  void validate() const;
};

// Applies the keys present in `text` onto `base`. Unknown keys are
// rejected so a typo cannot silently fall back to a default.
TrainConfig train_config_from_json(std::string_view text, TrainConfig base = {});
std::string train_config_to_json(const TrainConfig& cfg);

// Worker count from the MILQT_THREADS environment variable; 1 when unset.
std::size_t threads_from_env();

struct EpochStats {
  std::size_t epoch = 0;
  LossBreakdown losses;        // per-sample means over the epoch
  double mean_grad_norm = 0.0;
  double eval_answer_acc = -1.0;  // -1 when no eval split was given
};

using LogFn = std::function<void(const std::string&)>;
using EpochCallback = std::function<void(std::size_t epoch, ModelParams&, const Adamax&)>;

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> epochs;
};

// Computes the co-occurrence prior from `train`, initializes a model from
// cfg.seed and runs cfg.epochs of minibatch updates. Throws
// DivergenceError when the optimizer meets non-finite numbers.
TrainResult train_model(const TrainConfig& cfg, const DatasetBundle& train,
                        const DatasetBundle* eval_set = nullptr, const LogFn& log = {},
                        const EpochCallback& on_epoch = {});

// Forward-only pass; prediction per sample, then metric accounting.
MetricsReport evaluate_model(const ModelParams& params, const ModelOptions& opt,
                             const DatasetBundle& data, std::size_t threads = 1);

// One sample through the model on a throwaway tape.
SampleForward run_sample(const ModelParams& params, const SampleRecord& rec,
                         const FeatureStore& store, const ModelOptions& opt);

}  // namespace milqt
