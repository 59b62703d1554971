#pragma once

// On-disk model snapshots. A checkpoint is a directory:
//
//   manifest.json     dims, hypothesis kinds, forward options, tensor
//                     index with content digests, optimizer step count
//   prior.csv         the frozen co-occurrence matrix
//   tensors/<name>.txt one file per parameter (and, when saved mid-run,
//                     per optimizer moment, prefixed "opt.")
//
// Content is deterministic for identical state: tensors use shortest
// round-trip decimals and the manifest has sorted keys and no timestamps,
// so re-saving an unchanged model is byte-identical.

#include <filesystem>
#include <map>
#include <string>

#include "milqt/model.hpp"
#include "milqt/optimizer.hpp"

namespace milqt {

struct Checkpoint {
  ModelParams params;
  ModelOptions options;
  std::size_t opt_step = 0;
  std::map<std::string, Tensor> opt_state;  // empty when saved without one
  int epoch = -1;                           // -1 when not a training snapshot
};

void save_checkpoint(const std::filesystem::path& dir, ModelParams& params,
                     const ModelOptions& options, const Adamax* optimizer = nullptr,
                     int epoch = -1);

// Validates digests, shapes and dims; problems raise IoError or
// ValidationError with the offending file in the message.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace milqt
