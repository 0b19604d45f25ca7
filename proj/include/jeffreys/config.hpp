#pragma once

// Experiment configuration: one JSON document, validated strictly against the
// defaults below (unknown keys and wrong types are rejected). Command-line
// overrides address the same paths, e.g. --train.loss-kind=ce_jeffreys or
// --data.spread=0.2; dashes in path segments are read as underscores.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "jeffreys/errors.hpp"
#include "jeffreys/loss_core.hpp"
#include "jeffreys/synth_data.hpp"
#include "jeffreys/trainer.hpp"

namespace jeffreys {

using json = nlohmann::json;

// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "JEFFREYS_LAB_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "jeffreys_out";

struct Variant {
  LossKind loss_kind = LossKind::ce;
  bool weight_decay = false;

  std::string name() const { return std::string(to_string(loss_kind)) + (weight_decay ? "+wd" : ""); }
  bool operator==(const Variant&) const = default;
};

struct DomainSpec {
  std::string tag;
  ShiftSeverity severity;
};

struct DataConfig {
  int n_speakers_train = 50;
  int n_speakers_eval = 20;
  int per_speaker = 40;
  double spread = 0.2;
  // Speaker prototypes are uniform on the unit sphere of this many leading
  // input coordinates (0 = the full input space).
  int speaker_dim = 4;
};

struct TrialConfig {
  std::size_t n_target = 4000;
  std::size_t n_nontarget = 16000;
  bool same_class_balance = false;
};

struct ExperimentConfig {
  NetworkSpec network;
  TrainConfig train;
  std::vector<Variant> variants;
  DataConfig data;
  std::vector<DomainSpec> domains;
  TrialConfig trials;
  double tau = 0.9;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
};

// The default desk-scale benchmark.
inline json default_config_json() {
  return json{
      {"network", {{"input_dim", 20}, {"hidden_dims", {64}}, {"embed_dim", 16}, {"activation", "relu"}}},
      {"train",
       {{"loss_kind", "ce_jeffreys"},
        {"alpha", 0.1},
        {"beta", 0.025},
        {"aam", {{"scale", 30.0}, {"margin", 0.2}}},
        {"epochs", 30},
        {"batch_size", 64},
        {"learning_rate", 0.05},
        {"momentum", 0.9},
        {"weight_decay", 2e-4},
        {"weight_decay_enabled", false},
        {"lr_schedule", {{"kind", "step_decay"}, {"factor", 0.5}, {"every_n_epochs", 10}}}}},
      {"experiment",
       {{"variants",
         json::array({json{{"loss_kind", "ce"}, {"weight_decay", true}},
                      json{{"loss_kind", "ce_ls"}, {"weight_decay", true}},
                      json{{"loss_kind", "ce_ls"}, {"weight_decay", false}},
                      json{{"loss_kind", "ce_jeffreys"}, {"weight_decay", false}}})}}},
      {"data",
       {{"n_speakers_train", 50}, {"n_speakers_eval", 20}, {"per_speaker", 40}, {"spread", 0.2}, {"speaker_dim", 4}}},
      {"domains", json::array({json{{"tag", "in_domain"}, {"max_angle", 0.0}, {"noise_scale", 1.0}, {"bias_norm", 0.0}},
                               json{{"tag", "mild"}, {"max_angle", 0.5}, {"noise_scale", 1.25}, {"bias_norm", 0.15}},
                               json{{"tag", "strong"}, {"max_angle", 1.0}, {"noise_scale", 1.5}, {"bias_norm", 0.3}}})},
      {"trials", {{"n_target", 4000}, {"n_nontarget", 16000}, {"same_class_balance", false}}},
      {"probe", {{"tau", 0.9}}},
      {"seeds", {1, 2, 3, 4, 5}},
      {"output_dir", ""},
  };
}

namespace detail {

inline bool same_kind(const json& want, const json& got) {
  if (want.is_number_float()) return got.is_number();
  if (want.is_number_integer()) return got.is_number_integer();
  if (want.is_boolean()) return got.is_boolean();
  if (want.is_string()) return got.is_string();
  if (want.is_array()) return got.is_array();
  if (want.is_object()) return got.is_object();
  return want.type() == got.type();
}

inline const char* kind_name(const json& j) {
  if (j.is_number_float()) return "number";
  if (j.is_number_integer()) return "integer";
  return j.type_name();
}

// Overlays `src` onto `dst`, which defines the schema.
inline void merge_strict(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError(path.empty() ? "config must be a JSON object" : path + " must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key '" + p + "'");
    json& slot = dst[key];
    if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + p + "' must be " + kind_name(slot) + ", got " + value.type_name());
    }
    if (slot.is_object()) {
      merge_strict(slot, value, p);
    } else {
      slot = value;
    }
  }
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + " entries must be objects");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown config key '" + path + "." + key + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + "." + key + "' is missing or has the wrong type");
  }
}

inline LossKind loss_kind_from(const json& j, const std::string& path) {
  const auto s = j.get<std::string>();
  const auto k = parse_loss_kind(s);
  if (!k) throw ConfigError(path + ": unknown loss kind '" + s + "'");
  return *k;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& user) {
  json j = default_config_json();
  detail::merge_strict(j, user, "");

  ExperimentConfig c;
  try {
    const json& n = j["network"];
    c.network.input_dim = n["input_dim"].get<int>();
    c.network.hidden_dims = n["hidden_dims"].get<std::vector<int>>();
    c.network.embed_dim = n["embed_dim"].get<int>();
    const auto act = parse_activation(n["activation"].get<std::string>());
    if (!act) throw ConfigError("network.activation must be relu or tanh");
    c.network.activation = *act;

    const json& t = j["train"];
    c.train.loss_kind = detail::loss_kind_from(t["loss_kind"], "train.loss_kind");
    c.train.weights = {t["alpha"].get<double>(), t["beta"].get<double>()};
    c.train.aam = {t["aam"]["scale"].get<double>(), t["aam"]["margin"].get<double>()};
    c.train.epochs = t["epochs"].get<int>();
    c.train.batch_size = t["batch_size"].get<int>();
    c.train.optimizer = {t["learning_rate"].get<double>(), t["momentum"].get<double>(),
                         t["weight_decay"].get<double>(), t["weight_decay_enabled"].get<bool>()};
    const json& sched = t["lr_schedule"];
    const auto kind = sched["kind"].get<std::string>();
    if (kind == "constant") {
      c.train.lr_schedule.kind = LrSchedule::Kind::constant;
    } else if (kind == "step_decay") {
      c.train.lr_schedule.kind = LrSchedule::Kind::step_decay;
    } else {
      throw ConfigError("train.lr_schedule.kind must be constant or step_decay");
    }
    c.train.lr_schedule.factor = sched["factor"].get<double>();
    c.train.lr_schedule.every_n_epochs = sched["every_n_epochs"].get<int>();

    for (const json& v : j["experiment"]["variants"]) {
      detail::check_keys(v, {"loss_kind", "weight_decay"}, "experiment.variants[]");
      Variant var;
      var.loss_kind = detail::loss_kind_from(v.at("loss_kind"), "experiment.variants[].loss_kind");
      var.weight_decay = detail::get<bool>(v, "weight_decay", "experiment.variants[]");
      for (const auto& prev : c.variants) {
        if (prev == var) throw ConfigError("duplicate variant " + var.name());
      }
      c.variants.push_back(var);
    }

    const json& d = j["data"];
    c.data = {d["n_speakers_train"].get<int>(), d["n_speakers_eval"].get<int>(), d["per_speaker"].get<int>(),
              d["spread"].get<double>(), d["speaker_dim"].get<int>()};

    for (const json& dom : j["domains"]) {
      detail::check_keys(dom, {"tag", "max_angle", "noise_scale", "bias_norm", "angle_min_fraction"}, "domains[]");
      DomainSpec ds;
      ds.tag = detail::get<std::string>(dom, "tag", "domains[]");
      ds.severity.max_angle = detail::get<double>(dom, "max_angle", "domains[]");
      ds.severity.noise_scale = detail::get<double>(dom, "noise_scale", "domains[]");
      ds.severity.bias_norm = detail::get<double>(dom, "bias_norm", "domains[]");
      if (dom.contains("angle_min_fraction")) {
        ds.severity.angle_min_fraction = detail::get<double>(dom, "angle_min_fraction", "domains[]");
      }
      for (const auto& prev : c.domains) {
        if (prev.tag == ds.tag) throw ConfigError("duplicate domain tag " + ds.tag);
      }
      if (ds.tag.empty() || ds.tag.find_first_of("/\\,") != std::string::npos) {
        throw ConfigError("domain tags must be non-empty and free of '/', '\\' and ','");
      }
      c.domains.push_back(ds);
    }

    c.trials = {j["trials"]["n_target"].get<std::size_t>(), j["trials"]["n_nontarget"].get<std::size_t>(),
                j["trials"]["same_class_balance"].get<bool>()};
    c.tau = j["probe"]["tau"].get<double>();
    c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  c.network.num_classes = c.data.n_speakers_train;
  try {
    c.network.validate();
    c.train.weights.validate();
    c.train.aam.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (c.train.epochs < 0 || c.train.batch_size < 1) throw ConfigError("train.epochs >= 0 and train.batch_size >= 1 required");
  if (!(c.train.optimizer.learning_rate >= 0.0) || !(c.train.optimizer.momentum >= 0.0 && c.train.optimizer.momentum < 1.0) ||
      !(c.train.optimizer.weight_decay >= 0.0)) {
    throw ConfigError("invalid optimizer settings");
  }
  if (c.data.n_speakers_eval < 2 || c.data.per_speaker < 2 || !(c.data.spread >= 0.0)) {
    throw ConfigError("data needs >= 2 eval speakers, >= 2 utterances per speaker, spread >= 0");
  }
  if (c.data.speaker_dim < 0 || c.data.speaker_dim > c.network.input_dim) {
    throw ConfigError("data.speaker_dim must lie in [0, network.input_dim]");
  }
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ConfigError("probe.tau must lie in (0, 1]");
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.domains.empty()) throw ConfigError("domains must not be empty");
  for (const auto& d : c.domains) {
    if (!(d.severity.noise_scale > 0.0) || !(d.severity.max_angle >= 0.0) || !(d.severity.bias_norm >= 0.0) ||
        !(d.severity.angle_min_fraction >= 0.0 && d.severity.angle_min_fraction <= 1.0)) {
      throw ConfigError("invalid severity for domain " + d.tag);
    }
  }
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json variants = json::array();
  for (const auto& v : c.variants) variants.push_back({{"loss_kind", to_string(v.loss_kind)}, {"weight_decay", v.weight_decay}});
  json domains = json::array();
  for (const auto& d : c.domains) {
    domains.push_back({{"tag", d.tag},
                       {"max_angle", d.severity.max_angle},
                       {"noise_scale", d.severity.noise_scale},
                       {"bias_norm", d.severity.bias_norm},
                       {"angle_min_fraction", d.severity.angle_min_fraction}});
  }
  const auto& t = c.train;
  return json{
      {"network",
       {{"input_dim", c.network.input_dim},
        {"hidden_dims", c.network.hidden_dims},
        {"embed_dim", c.network.embed_dim},
        {"activation", to_string(c.network.activation)}}},
      {"train",
       {{"loss_kind", to_string(t.loss_kind)},
        {"alpha", t.weights.alpha},
        {"beta", t.weights.beta},
        {"aam", {{"scale", t.aam.scale}, {"margin", t.aam.margin}}},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.optimizer.learning_rate},
        {"momentum", t.optimizer.momentum},
        {"weight_decay", t.optimizer.weight_decay},
        {"weight_decay_enabled", t.optimizer.weight_decay_enabled},
        {"lr_schedule",
         {{"kind", t.lr_schedule.kind == LrSchedule::Kind::constant ? "constant" : "step_decay"},
          {"factor", t.lr_schedule.factor},
          {"every_n_epochs", t.lr_schedule.every_n_epochs}}}}},
      {"experiment", {{"variants", variants}}},
      {"data",
       {{"n_speakers_train", c.data.n_speakers_train},
        {"n_speakers_eval", c.data.n_speakers_eval},
        {"per_speaker", c.data.per_speaker},
        {"spread", c.data.spread},
        {"speaker_dim", c.data.speaker_dim}}},
      {"domains", domains},
      {"trials",
       {{"n_target", c.trials.n_target}, {"n_nontarget", c.trials.n_nontarget}, {"same_class_balance", c.trials.same_class_balance}}},
      {"probe", {{"tau", c.tau}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
  };
}

inline ExperimentConfig default_config() { return parse_config(json::object()); }

inline json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

// Applies "--a.b-c=value" style overrides onto a user config document. The
// value is read as JSON when it parses (numbers, booleans, arrays), otherwise
// as a plain string.
inline void apply_override(json& doc, const std::string& arg) {
  std::string s = arg;
  if (s.rfind("--", 0) == 0) s = s.substr(2);
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + arg + "' must look like --path.to.key=value");
  std::string path = s.substr(0, eq);
  const std::string raw = s.substr(eq + 1);
  for (char& ch : path) {
    if (ch == '-') ch = '_';
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + arg + "' has an empty path segment");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline std::string resolve_output_dir(const ExperimentConfig& c, const std::string& cli_value = {}) {
  if (!cli_value.empty()) return cli_value;
  if (!c.output_dir.empty()) return c.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return kDefaultOutputDir;
}

}  // namespace jeffreys
