#include "milqt/checkpoint.hpp"

#include <json.hpp>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json dims_to_json(const ModelDims& d) {
  return json{{"vocab", d.vocab},
              {"embed", d.embed},
              {"hidden", d.hidden},
              {"fused", d.fused},
              {"regions", d.regions},
              {"region_width", d.region_width},
              {"num_types", d.num_types},
              {"num_answers", d.num_answers},
              {"att_hidden", d.att_hidden},
              {"lowrank", d.lowrank},
              {"stacked_hidden", d.stacked_hidden}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.vocab = j.at("vocab").get<std::size_t>();
  d.embed = j.at("embed").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.fused = j.at("fused").get<std::size_t>();
  d.regions = j.at("regions").get<std::size_t>();
  d.region_width = j.at("region_width").get<std::size_t>();
  d.num_types = j.at("num_types").get<std::size_t>();
  d.num_answers = j.at("num_answers").get<std::size_t>();
  d.att_hidden = j.at("att_hidden").get<std::size_t>();
  d.lowrank = j.at("lowrank").get<std::size_t>();
  d.stacked_hidden = j.at("stacked_hidden").get<std::size_t>();
  return d;
}

json options_to_json(const ModelOptions& o) {
  return json{{"prior", o.prior_on ? "on" : "off"},
              {"inference_weighting", o.inference_weighting},
              {"stop_gradient_h", o.stop_gradient_h},
              {"h_mode", h_mode_name(o.h_mode)},
              {"fusion", fusion_name(o.fusion)},
              {"interaction", interaction_name(o.interaction)},
              {"interaction_softmax", o.interaction_softmax}};
}

ModelOptions options_from_json(const json& j) {
  ModelOptions o;
  std::string prior = j.at("prior").get<std::string>();
  if (prior != "on" && prior != "off") {
    throw ValidationError("checkpoint prior mode must be 'on' or 'off'");
  }
  o.prior_on = prior == "on";
  o.inference_weighting = j.at("inference_weighting").get<bool>();
  o.stop_gradient_h = j.at("stop_gradient_h").get<bool>();
  o.h_mode = h_mode_from(j.at("h_mode").get<std::string>());
  o.fusion = fusion_from(j.at("fusion").get<std::string>());
  o.interaction = interaction_from(j.at("interaction").get<std::string>());
  o.interaction_softmax = j.at("interaction_softmax").get<bool>();
  return o;
}

std::string tensor_file(const std::string& name) { return name + ".txt"; }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, ModelParams& params,
                     const ModelOptions& options, const Adamax* optimizer, int epoch) {
  std::filesystem::create_directories(dir / "tensors");

  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["dims"] = dims_to_json(params.dims);
  json kinds = json::array();
  for (HypKind k : params.kinds) kinds.push_back(hyp_kind_name(k));
  manifest["hypotheses"] = kinds;
  manifest["options"] = options_to_json(options);
  manifest["epoch"] = epoch;
  manifest["prior"] = "prior.csv";

  json index = json::array();
  auto put_tensor = [&](const std::string& name, const Tensor& t) {
    std::string text = tensor_to_text(t);
    write_file(dir / "tensors" / tensor_file(name), text);
    index.push_back(json{{"name", name},
                         {"shape", t.shape()},
                         {"digest", fnv1a_hex(text)}});
  };
  for (auto& [name, tensor] : params.named_params()) put_tensor(name, *tensor);

  if (optimizer != nullptr) {
    manifest["optimizer"] = json{{"step_count", optimizer->step_count()}};
    for (const auto& [name, tensor] : optimizer->state()) put_tensor("opt." + name, tensor);
  }
  manifest["tensors"] = index;

  save_prior(dir / "prior.csv", params.prior);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("checkpoint manifest " + (dir / "manifest.json").string() +
                  " is not valid JSON: " + e.what());
  }
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      throw ValidationError("checkpoint " + dir.string() + " has an unsupported format version");
    }

    Checkpoint ck;
    ModelDims dims = dims_from_json(manifest.at("dims"));
    std::vector<HypKind> kinds;
    for (const auto& k : manifest.at("hypotheses")) {
      kinds.push_back(hyp_kind_from(k.get<std::string>()));
    }
    ck.options = options_from_json(manifest.at("options"));
    ck.epoch = manifest.at("epoch").get<int>();

    PriorMatrix prior =
        load_prior(dir / manifest.at("prior").get<std::string>());

    // Stored tensors, digest-checked.
    std::map<std::string, Tensor> stored;
    for (const auto& entry : manifest.at("tensors")) {
      std::string name = entry.at("name").get<std::string>();
      std::filesystem::path path = dir / "tensors" / tensor_file(name);
      std::string text = read_file(path);
      if (fnv1a_hex(text) != entry.at("digest").get<std::string>()) {
        throw IoError("checkpoint tensor " + path.string() + " does not match its digest");
      }
      Tensor t = tensor_from_text(text);
      Shape expect = entry.at("shape").get<Shape>();
      if (!same_shape(t.shape(), expect)) {
        throw ValidationError("checkpoint tensor " + path.string() + " has shape " +
                              shape_str(t.shape()) + ", manifest says " + shape_str(expect));
      }
      stored.emplace(std::move(name), std::move(t));
    }

    // Build a model of the right arity, then overwrite every parameter.
    Rng scratch(0);
    ck.params = ModelParams::init(dims, kinds, std::move(prior), scratch);
    for (auto& [name, tensor] : ck.params.named_params()) {
      auto it = stored.find(name);
      if (it == stored.end()) {
        throw ValidationError("checkpoint " + dir.string() + " is missing tensor '" + name + "'");
      }
      if (!same_shape(it->second.shape(), tensor->shape())) {
        throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                         shape_str(it->second.shape()) + ", model expects " +
                         shape_str(tensor->shape()));
      }
      *tensor = Tensor(it->second.shape(), it->second.values(), true);
    }

    if (manifest.contains("optimizer")) {
      ck.opt_step = manifest.at("optimizer").at("step_count").get<std::size_t>();
      for (auto& [name, tensor] : stored) {
        if (name.rfind("opt.", 0) == 0) ck.opt_state.emplace(name.substr(4), tensor);
      }
    }
    return ck;
  } catch (const json::exception& e) {
    throw IoError("checkpoint manifest " + (dir / "manifest.json").string() +
                  " is malformed: " + e.what());
  }
}

}  // namespace milqt
