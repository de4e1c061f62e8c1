// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/config.hpp"

#include <fstream>
#include <set>

#include "pseudobound/error.hpp"

namespace pseudobound {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Key-checked view of one JSON object; every diagnostic carries the key path.
class Section {
public:
  Section(const json &j, std::string path, std::set<std::string> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError(where() + " must be an object");
    for (const auto &[key, _] : j_.items())
      if (!allowed.count(key))
        throw ConfigError("unknown key '" + join(key) + "'");
  }

  bool has(const std::string &key) const { return j_.contains(key); }
  const json &at(const std::string &key) const { return j_.at(key); }
  std::string join(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <typename T> void get(const std::string &key, T &field) const {
    if (!has(key))
      return;
    try {
      j_.at(key).get_to(field);
    } catch (const json::exception &) {
      throw ConfigError("'" + join(key) + "' has the wrong type (got " +
                        j_.at(key).dump() + ")");
    }
  }

private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json &j_;
  std::string path_;
};

template <typename Fn> auto rethrow_at(const std::string &where, Fn &&fn) {
  try {
    return fn();
  } catch (const ConfigError &e) {
    throw ConfigError(where + ": " + e.what());
  }
}

} // namespace

json pseudo_spec_to_json(const PseudoSpec &spec) {
  json j{{"kind", to_string(spec.kind())}, {"p", spec.probability}};
  std::visit(
      [&](const auto &p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SkipParams>)
          j["s"] = p.strides;
        else if constexpr (std::is_same_v<P, RepeatParams>)
          j["r"] = p.repeats;
        else if constexpr (std::is_same_v<P, PatchParams>) {
          j["alpha"] = p.alpha;
          j["beta"] = p.beta;
          j["technique"] = to_string(p.technique);
          j["intruder"] = {{"kind", to_string(p.intruder.kind)},
                           {"location", p.intruder.location}};
        } else if constexpr (std::is_same_v<P, NoiseParams>)
          j["sigma"] = p.sigma;
      },
      spec.params);
  return j;
}

PseudoSpec parse_pseudo_spec(const json &j, const std::string &where) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError("'" + where + "' needs a string 'kind'");
  const PseudoKind kind =
      rethrow_at(where, [&] { return parse_pseudo_kind(j.at("kind").get<std::string>()); });
  PseudoSpec spec = PseudoSpec::make(kind);
  std::set<std::string> allowed{"kind", "p"};
  switch (kind) {
  case PseudoKind::skip: allowed.insert("s"); break;
  case PseudoKind::repeat: allowed.insert("r"); break;
  case PseudoKind::patch: allowed.insert({"alpha", "beta", "technique", "intruder"}); break;
  case PseudoKind::fusion: break;
  case PseudoKind::noise: allowed.insert("sigma"); break;
  }
  const Section s(j, where, allowed);
  s.get("p", spec.probability);
  if (auto *skip = std::get_if<SkipParams>(&spec.params))
    s.get("s", skip->strides);
  if (auto *rep = std::get_if<RepeatParams>(&spec.params))
    s.get("r", rep->repeats);
  if (auto *noise = std::get_if<NoiseParams>(&spec.params))
    s.get("sigma", noise->sigma);
  if (auto *patch = std::get_if<PatchParams>(&spec.params)) {
    s.get("alpha", patch->alpha);
    s.get("beta", patch->beta);
    std::string technique = to_string(patch->technique);
    s.get("technique", technique);
    patch->technique = rethrow_at(where, [&] { return parse_patch_technique(technique); });
    if (s.has("intruder")) {
      const Section in(s.at("intruder"), where + ".intruder", {"kind", "location"});
      std::string ik = to_string(patch->intruder.kind);
      in.get("kind", ik);
      patch->intruder.kind = rethrow_at(where, [&] { return parse_intruder_kind(ik); });
      in.get("location", patch->intruder.location);
    }
  }
  rethrow_at(where, [&] { spec.validate(); });
  return spec;
}

fs::path RunConfig::ground_truth_dir() const {
  return eval.ground_truth.empty() ? dataset.root / "testing" / "labels" : eval.ground_truth;
}

void RunConfig::validate() const {
  rethrow_at("model", [&] { model.validate(); });
  if (train.batch_size < 1)
    throw ConfigError("train.batch_size must be at least 1");
  if (!(train.learning_rate > 0.0))
    throw ConfigError("train.lr must be positive");
  rethrow_at("pseudo", [&] { validate_specs(pseudo); });
  if (score.batch_size < 1)
    throw ConfigError("score.batch_size must be at least 1");
}

json RunConfig::to_json() const {
  json pseudo_j = json::array();
  for (const auto &s : pseudo)
    pseudo_j.push_back(pseudo_spec_to_json(s));
  json model_j{{"preset", model_preset},
               {"encoder_channels", model.encoder_channels},
               {"temporal_strides", model.temporal_strides},
               {"spatial_strides", model.spatial_strides},
               {"leaky_slope", model.leaky_slope}};
  json train_j{{"lr", train.learning_rate},
               {"batch_size", train.batch_size},
               {"iterations", train.iterations},
               {"checkpoint_every", train.checkpoint_every}};
  if (train.pseudo_loss_floor)
    train_j["pseudo_loss_floor"] = *train.pseudo_loss_floor;
  return {{"seed", seed},
          {"output_dir", output_dir.string()},
          {"dataset",
           {{"root", dataset.root.string()},
            {"image_size", {model.height, model.width}},
            {"channels", model.channels},
            {"T", model.frames},
            {"cache", dataset.cache_capacity}}},
          {"model", model_j},
          {"train", train_j},
          {"pseudo", pseudo_j},
          {"score",
           {{"split", score.split},
            {"mode", to_string(score.mode)},
            {"edge_pad", score.edge_pad},
            {"heatmaps", score.heatmaps},
            {"batch_size", score.batch_size}}},
          {"eval", {{"gt", eval.ground_truth.string()}, {"edge_pad", eval.edge_pad}}}};
}

RunConfig parse_config(const json &j) {
  const Section top(j, "",
                    {"seed", "output_dir", "dataset", "model", "train", "pseudo", "score",
                     "eval"});
  RunConfig c;
  top.get("seed", c.seed);
  std::string out = c.output_dir.string();
  top.get("output_dir", out);
  c.output_dir = out;

  const json empty = json::object();
  {
    const Section m(top.has("model") ? top.at("model") : empty, "model",
                    {"preset", "encoder_channels", "temporal_strides", "spatial_strides",
                     "leaky_slope"});
    m.get("preset", c.model_preset);
    if (c.model_preset == "reference-default")
      c.model = AutoencoderConfig::reference_default();
    else if (c.model_preset == "toy")
      c.model = AutoencoderConfig::toy();
    else
      throw ConfigError("model.preset must be 'reference-default' or 'toy' (got '" +
                        c.model_preset + "')");
    m.get("encoder_channels", c.model.encoder_channels);
    m.get("temporal_strides", c.model.temporal_strides);
    m.get("spatial_strides", c.model.spatial_strides);
    m.get("leaky_slope", c.model.leaky_slope);
  }
  {
    const Section d(top.has("dataset") ? top.at("dataset") : empty, "dataset",
                    {"root", "image_size", "channels", "T", "cache"});
    std::string root;
    d.get("root", root);
    c.dataset.root = root;
    if (d.has("image_size")) {
      const json &size = d.at("image_size");
      if (size.is_number_unsigned()) {
        c.model.height = c.model.width = size.get<std::size_t>();
      } else if (size.is_array() && size.size() == 2 && size[0].is_number_unsigned() &&
                 size[1].is_number_unsigned()) {
        c.model.height = size[0].get<std::size_t>();
        c.model.width = size[1].get<std::size_t>();
      } else {
        throw ConfigError("'dataset.image_size' must be N or [H, W]");
      }
    }
    d.get("channels", c.model.channels);
    d.get("T", c.model.frames);
    d.get("cache", c.dataset.cache_capacity);
  }
  {
    const Section t(top.has("train") ? top.at("train") : empty, "train",
                    {"lr", "batch_size", "iterations", "checkpoint_every",
                     "pseudo_loss_floor"});
    t.get("lr", c.train.learning_rate);
    t.get("batch_size", c.train.batch_size);
    t.get("iterations", c.train.iterations);
    t.get("checkpoint_every", c.train.checkpoint_every);
    if (t.has("pseudo_loss_floor") && !t.at("pseudo_loss_floor").is_null()) {
      double floor = 0.0;
      t.get("pseudo_loss_floor", floor);
      c.train.pseudo_loss_floor = floor;
    }
  }
  if (top.has("pseudo")) {
    const json &p = top.at("pseudo");
    if (!p.is_array())
      throw ConfigError("'pseudo' must be a list of specs");
    for (std::size_t i = 0; i < p.size(); ++i)
      c.pseudo.push_back(parse_pseudo_spec(p[i], "pseudo[" + std::to_string(i) + "]"));
  }
  {
    const Section s(top.has("score") ? top.at("score") : empty, "score",
                    {"split", "mode", "edge_pad", "heatmaps", "batch_size"});
    s.get("split", c.score.split);
    std::string mode = to_string(c.score.mode);
    s.get("mode", mode);
    c.score.mode = rethrow_at("score.mode", [&] { return parse_score_mode(mode); });
    s.get("edge_pad", c.score.edge_pad);
    s.get("heatmaps", c.score.heatmaps);
    s.get("batch_size", c.score.batch_size);
  }
  {
    const Section e(top.has("eval") ? top.at("eval") : empty, "eval", {"gt", "edge_pad"});
    std::string gt;
    e.get("gt", gt);
    c.eval.ground_truth = gt;
    e.get("edge_pad", c.eval.edge_pad);
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig parse_config_file(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

} // namespace pseudobound
