// milqt -- batch front end for the question-type-aware VQA library.
//
// Five subcommands cover the whole experiment loop:
//
//   gen-synth      write a seeded synthetic dataset directory
//   compute-prior  dump the type/answer co-occurrence matrix as CSV
//   train          fit a model, leaving checkpoints + logs in a run dir
//   eval           score a checkpoint against a dataset
//   predict        one prediction line per question
//
// Every command is deterministic given its inputs and seed. Exit codes:
// 0 success (predict may mark individual samples and still exit 0), 2 for
// rejected input -- bad flags, malformed files, incompatible checkpoints --
// and 3 when training diverges.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <milqt/checkpoint.hpp>
#include <milqt/dataset.hpp>
#include <milqt/error.hpp>
#include <milqt/interaction.hpp>
#include <milqt/metrics.hpp>
#include <milqt/model.hpp>
#include <milqt/prior.hpp>
#include <milqt/synthetic.hpp>
#include <milqt/trainer.hpp>
#include <milqt/util.hpp>

namespace fs = std::filesystem;
using namespace milqt;

namespace {

std::string iso8601_now() {
  std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// A dataset argument may point at the directory or at its records file.
fs::path dataset_dir(const std::string& arg) {
  fs::path p(arg);
  return fs::is_directory(p) ? p : p.parent_path();
}

// Content digests for every file the dataset directory contributes.
nlohmann::json dataset_digests(const fs::path& dir) {
  nlohmann::json out = nlohmann::json::object();
  for (const char* name : {"records.tsv", "vocab.txt", "answers.txt", "features.txt"}) {
    fs::path p = dir / name;
    if (fs::exists(p)) out[name] = fnv1a_hex(read_file(p));
  }
  return out;
}

SignalKind signal_from(std::string_view name) {
  if (name == "indicator") return SignalKind::Indicator;
  if (name == "signed_magnitude") return SignalKind::SignedMagnitude;
  throw ValidationError("unknown signal kind '" + std::string(name) +
                        "' (expected indicator or signed_magnitude)");
}

bool on_off(const std::string& value, const char* flag) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw ValidationError(std::string(flag) + " must be 'on' or 'off'");
}

// The checkpoint fixes the model extents; the dataset must supply exactly
// the token, type and answer spaces the parameters were trained against.
void require_compatible(const ModelParams& params, const DatasetBundle& data) {
  const ModelDims& d = params.dims;
  if (d.num_types != data.num_types() || d.num_answers != data.num_answers() ||
      d.vocab != data.vocab.size()) {
    throw ValidationError(
        "checkpoint/dataset mismatch: checkpoint expects vocab=" +
        std::to_string(d.vocab) + " types=" + std::to_string(d.num_types) +
        " answers=" + std::to_string(d.num_answers) + ", dataset has vocab=" +
        std::to_string(data.vocab.size()) + " types=" +
        std::to_string(data.num_types()) + " answers=" +
        std::to_string(data.num_answers()));
  }
}

// ---------------------------------------------------------------------------
// gen-synth

struct GenArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t num = 200;
  std::size_t types = 3;
  std::size_t answers = 6;
  std::size_t regions = 4;
  std::size_t region_width = 8;
  std::string signals;  // comma list, one kind per type
  SynthRule rule;
  bool no_beacon = false;
  bool externalize = false;
};

void run_gen(const GenArgs& a) {
  SynthRule rule = a.rule;
  rule.beacon = !a.no_beacon;
  if (!a.signals.empty()) {
    for (const std::string& s : split(a.signals, ',')) {
      rule.signals.push_back(signal_from(trim(s)));
    }
  }
  DatasetBundle bundle = gen_synthetic(a.seed, a.num, a.types, a.answers,
                                       a.regions, a.region_width, rule);
  write_dataset(bundle, a.out, a.externalize);
  std::printf("wrote %zu samples (%zu types, %zu answers) to %s\n",
              bundle.samples.size(), bundle.num_types(), bundle.num_answers(),
              a.out.c_str());
}

// ---------------------------------------------------------------------------
// compute-prior

void run_prior(const std::string& data, const std::string& out) {
  DatasetBundle bundle = load_dataset(data);
  std::string csv = prior_to_csv(compute_prior(bundle));
  if (out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file(out, csv);
    std::printf("wrote %s\n", out.c_str());
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, eval_data, config, out;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, batch_size = 0, log_every = 0, threads = 0, max_q_len = 0;
  double lr = 0.0, clip_norm = 0.0;
  double alpha_hyp = 0.0, alpha_vqa = 0.0, alpha_qt = 0.0;
  std::string hypotheses, interaction, prior, fusion, h_mode;
};

// Default config <- MILQT_THREADS <- --config file <- explicit flags; the
// resolved snapshot lands in manifest.json and is the record of what ran.
TrainConfig resolve_config(const CLI::App& cmd, const TrainArgs& a) {
  TrainConfig cfg;
  cfg.threads = threads_from_env();
  if (!a.config.empty()) cfg = train_config_from_json(read_file(a.config), cfg);
  if (cmd.count("--seed")) cfg.seed = a.seed;
  if (cmd.count("--epochs")) cfg.epochs = a.epochs;
  if (cmd.count("--batch-size")) cfg.batch_size = a.batch_size;
  if (cmd.count("--log-every")) cfg.log_every = a.log_every;
  if (cmd.count("--threads")) cfg.threads = a.threads;
  if (cmd.count("--max-q-len")) cfg.max_q_len = a.max_q_len;
  if (cmd.count("--lr")) cfg.optim.lr = a.lr;
  if (cmd.count("--clip-norm")) cfg.optim.clip_norm = a.clip_norm;
  if (cmd.count("--alpha-hyp")) cfg.loss_weights.hyp = a.alpha_hyp;
  if (cmd.count("--alpha-vqa")) cfg.loss_weights.vqa = a.alpha_vqa;
  if (cmd.count("--alpha-qt")) cfg.loss_weights.qt = a.alpha_qt;
  if (cmd.count("--hypotheses")) cfg.kinds = parse_kinds(a.hypotheses);
  if (cmd.count("--interaction")) cfg.options.interaction = interaction_from(a.interaction);
  if (cmd.count("--prior")) cfg.options.prior_on = on_off(a.prior, "--prior");
  if (cmd.count("--fusion")) cfg.options.fusion = fusion_from(a.fusion);
  if (cmd.count("--h-mode")) cfg.options.h_mode = h_mode_from(a.h_mode);
  cfg.validate();
  return cfg;
}

void run_train(const CLI::App& cmd, const TrainArgs& a) {
  TrainConfig cfg = resolve_config(cmd, a);
  DatasetBundle train_data = load_dataset(a.data, cfg.max_q_len);
  std::optional<DatasetBundle> eval_data;
  if (!a.eval_data.empty()) eval_data = load_dataset(a.eval_data, cfg.max_q_len);

  fs::path out(a.out);
  fs::create_directories(out);
  bool learned = cfg.options.interaction == InteractionMode::Learned;

  // The manifest goes down before any training: a run directory always
  // states what it was asked to do, even if the run then dies.
  nlohmann::json manifest;
  manifest["command"] = "train";
  manifest["started"] = iso8601_now();
  manifest["config"] = nlohmann::json::parse(train_config_to_json(cfg));
  nlohmann::json inputs;
  inputs[a.data] = dataset_digests(dataset_dir(a.data));
  if (!a.eval_data.empty()) inputs[a.eval_data] = dataset_digests(dataset_dir(a.eval_data));
  if (!a.config.empty()) inputs[a.config] = fnv1a_hex(read_file(a.config));
  manifest["inputs"] = inputs;
  nlohmann::json outputs = {{"run_log", "run.log"},
                            {"checkpoint", "checkpoint"},
                            {"checkpoint_last", "checkpoint-last"},
                            {"prior", "prior.csv"}};
  if (learned) {
    outputs["correlation"] = "correlation.csv";
  } else {
    manifest["note"] = "combiner is " + interaction_name(cfg.options.interaction) +
                       "; no learned mixing table, correlation.csv omitted";
  }
  manifest["outputs"] = outputs;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream log_stream(out / "run.log");
  if (!log_stream) throw IoError("cannot open " + (out / "run.log").string());
  LogFn log = [&](const std::string& line) {
    log_stream << line << '\n';
    log_stream.flush();  // divergence aborts mid-run; keep the log current
    std::printf("%s\n", line.c_str());
  };
  EpochCallback on_epoch = [&](std::size_t epoch, ModelParams& params,
                               const Adamax& opt) {
    save_checkpoint(out / "checkpoint-last", params, cfg.options, &opt,
                    static_cast<int>(epoch));
  };

  TrainResult res = train_model(cfg, train_data,
                                eval_data ? &*eval_data : nullptr, log, on_epoch);

  save_checkpoint(out / "checkpoint", res.params, cfg.options);
  write_file(out / "prior.csv", prior_to_csv(res.params.prior));
  if (learned) {
    write_file(out / "correlation.csv",
               interaction_csv(res.params.interaction.w_mil,
                               train_data.qtype_names, res.params.hyp_names()));
  }
  std::printf("trained %zu epochs; run directory: %s\n", res.epochs.size(),
              a.out.c_str());
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint, data, out;
  std::size_t max_q_len = 12;  // must match the training config
  std::size_t threads = 0;
  bool no_weighting = false;
  bool by_type = false;
};

void run_eval(const CLI::App& cmd, const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  DatasetBundle data = load_dataset(a.data, a.max_q_len);
  require_compatible(ck.params, data);
  if (a.no_weighting) ck.options.inference_weighting = false;

  std::size_t threads = cmd.count("--threads") ? a.threads : threads_from_env();
  MetricsReport rep = evaluate_model(ck.params, ck.options, data, threads);

  std::string text = rep.to_text();
  if (!a.by_type) text = text.substr(0, text.find("per type:"));
  std::fputs(text.c_str(), stdout);

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "report.txt", rep.to_text());
    write_file(fs::path(a.out) / "report.csv", rep.to_csv());
  }
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string checkpoint, data, out;
  std::size_t max_q_len = 12;
};

// One TSV line per question: id, predicted answer, predicted type, then
// the top five answers as alternating name/score fields. Scores print as
// shortest round-trip decimals, so lines parse back to the exact doubles.
// A sample whose features cannot be loaded gets  <id>  ERROR  <reason>
// instead; the command still exits 0 and reports the count on stderr.
void run_predict(const PredictArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  DatasetBundle data = load_dataset(a.data, a.max_q_len);
  require_compatible(ck.params, data);
  FeatureStore store(data.base_dir);

  std::string lines;
  std::size_t warnings = 0;
  for (const SampleRecord& rec : data.samples) {
    try {
      SampleForward fwd = run_sample(ck.params, rec, store, ck.options);
      std::vector<std::size_t> order(fwd.scores.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      // Ties keep the lower answer index, matching predicted_answer().
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return fwd.scores[x] > fwd.scores[y];
      });
      std::string line = rec.id;
      line += '\t';
      line += data.answers.names[static_cast<std::size_t>(fwd.predicted_answer())];
      line += '\t';
      line += data.qtype_names[fwd.predicted_type()];
      for (std::size_t i = 0; i < std::min<std::size_t>(5, order.size()); ++i) {
        line += '\t';
        line += data.answers.names[order[i]];
        line += '\t';
        line += fmt_double(fwd.scores[order[i]]);
      }
      lines += line + '\n';
    } catch (const Error& e) {
      ++warnings;
      std::string msg = e.what();
      for (char& c : msg) {
        if (c == '\t' || c == '\n') c = ' ';
      }
      lines += rec.id + "\tERROR\t" + msg + '\n';
    }
  }

  if (a.out.empty()) {
    std::fputs(lines.c_str(), stdout);
  } else {
    write_file(a.out, lines);
  }
  if (warnings) {
    std::fprintf(stderr, "predict: %zu of %zu samples failed and were marked ERROR\n",
                 warnings, data.samples.size());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"question-type aware multi-hypothesis VQA toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-synth", "Generate a seeded synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "Dataset directory to create")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--num", gen.num, "Number of questions");
  gen_cmd->add_option("--types", gen.types, "Number of question types");
  gen_cmd->add_option("--answers", gen.answers, "Number of answers");
  gen_cmd->add_option("--regions", gen.regions, "Visual regions per sample");
  gen_cmd->add_option("--region-width", gen.region_width, "Feature width per region");
  gen_cmd->add_option("--noise", gen.rule.noise, "Background noise amplitude");
  gen_cmd->add_option("--magnitude", gen.rule.magnitude, "Planted signature strength");
  gen_cmd->add_option("--signals", gen.signals,
                      "Comma list, one per type: indicator|signed_magnitude");
  gen_cmd->add_option("--indicator-col", gen.rule.indicator_col,
                      "First column used by indicator signatures");
  gen_cmd->add_option("--magnitude-col", gen.rule.magnitude_col,
                      "First column used by magnitude signatures");
  gen_cmd->add_flag("--region-coded", gen.rule.region_coded,
                    "Encode magnitude slots as regions with marker columns");
  gen_cmd->add_option("--marker-col", gen.rule.marker_col,
                      "First marker column (region-coded layouts)");
  gen_cmd->add_flag("--overlap", gen.rule.overlap, "Answer blocks overlap across types");
  gen_cmd->add_flag("--no-beacon", gen.no_beacon, "Drop the landmark region");
  gen_cmd->add_flag("--externalize-features", gen.externalize,
                    "Write features.txt instead of inline feature tensors");

  std::string prior_data, prior_out;
  CLI::App* prior_cmd =
      app.add_subcommand("compute-prior", "Write the type/answer co-occurrence matrix");
  prior_cmd->add_option("--data", prior_data, "Dataset directory or records file")->required();
  prior_cmd->add_option("--out", prior_out, "Output CSV path (stdout when omitted)");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Fit a model into a run directory");
  train_cmd->add_option("--data", tr.data, "Training dataset directory")->required();
  train_cmd->add_option("--eval", tr.eval_data, "Held-out dataset for per-epoch accuracy");
  train_cmd->add_option("--config", tr.config, "JSON config; flags override its values");
  train_cmd->add_option("--out", tr.out, "Run directory to create")->required();
  train_cmd->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--epochs", tr.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "Samples per optimizer step");
  train_cmd->add_option("--log-every", tr.log_every, "Steps between loss lines (0 silences)");
  train_cmd->add_option("--threads", tr.threads, "Worker threads (default from MILQT_THREADS)");
  train_cmd->add_option("--max-q-len", tr.max_q_len, "Token count questions are padded to");
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  train_cmd->add_option("--clip-norm", tr.clip_norm, "Gradient norm clip (<= 0 disables)");
  train_cmd->add_option("--alpha-hyp", tr.alpha_hyp, "Weight of the per-hypothesis losses");
  train_cmd->add_option("--alpha-vqa", tr.alpha_vqa, "Weight of the weighted answer loss");
  train_cmd->add_option("--alpha-qt", tr.alpha_qt, "Weight of the type classification loss");
  train_cmd->add_option("--hypotheses", tr.hypotheses,
                        "Comma list: topdown|bilinear_lowrank|stacked2");
  train_cmd->add_option("--interaction", tr.interaction,
                        "Hypothesis combiner: learned|averaging|single");
  train_cmd->add_option("--prior", tr.prior, "Answer-space constraint: on|off");
  train_cmd->add_option("--fusion", tr.fusion, "Question/vision fusion: ewm|ewa");
  train_cmd->add_option("--h-mode", tr.h_mode, "Awareness source: predicted|groundtruth");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory or records file")->required();
  eval_cmd->add_option("--out", ev.out, "Directory for report.txt / report.csv");
  eval_cmd->add_option("--max-q-len", ev.max_q_len,
                       "Token count questions are padded to (match training)");
  eval_cmd->add_option("--threads", ev.threads, "Worker threads (default from MILQT_THREADS)");
  eval_cmd->add_flag("--no-inference-weighting", ev.no_weighting,
                     "Rank raw answer scores, skipping the awareness weighting");
  eval_cmd->add_flag("--by-type", ev.by_type, "Also print the per-type table");

  PredictArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "One prediction line per question");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint directory")->required();
  predict_cmd->add_option("--data", pr.data, "Dataset directory or records file")->required();
  predict_cmd->add_option("--out", pr.out, "Output file (stdout when omitted)");
  predict_cmd->add_option("--max-q-len", pr.max_q_len,
                          "Token count questions are padded to (match training)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits 0; any flag misuse is 2
  }

  try {
    if (gen_cmd->parsed()) run_gen(gen);
    else if (prior_cmd->parsed()) run_prior(prior_data, prior_out);
    else if (train_cmd->parsed()) run_train(*train_cmd, tr);
    else if (eval_cmd->parsed()) run_eval(*eval_cmd, ev);
    else if (predict_cmd->parsed()) run_predict(pr);
    return 0;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
