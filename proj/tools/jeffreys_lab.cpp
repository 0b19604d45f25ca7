// jeffreys_lab: command-line front end for the loss laboratory.
//
// Any argument of the form --section.key=value (e.g. --train.loss-kind=ce_ls)
// overrides the matching field of the JSON config; dashes in keys become
// underscores.
//
// Exit codes: 0 ok, 1 other error, 2 config error, 3 numerical divergence,
// 4 self-test failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "jeffreys/config.hpp"
#include "jeffreys/errors.hpp"
#include "jeffreys/experiment.hpp"
#include "jeffreys/io.hpp"
#include "jeffreys/probe.hpp"
#include "jeffreys/scoring.hpp"
#include "jeffreys/selftest.hpp"
#include "jeffreys/synth_data.hpp"
#include "jeffreys/trainer.hpp"

namespace fs = std::filesystem;
using namespace jeffreys;

namespace {

enum Exit { kOk = 0, kError = 1, kConfig = 2, kDiverged = 3, kSelfTestFailed = 4 };

// --a.b=value, or --key=value for a top-level config key that is not also a
// command option (e.g. --seeds=[1,2,3]).
bool is_override(const std::string& a) {
  if (a.rfind("--", 0) != 0) return false;
  const auto eq = a.find('=');
  if (eq == std::string::npos) return false;
  std::string key = a.substr(2, eq - 2);
  if (key.find('.') != std::string::npos) return true;
  for (char& ch : key) {
    if (ch == '-') ch = '_';
  }
  static const std::set<std::string> options{"config", "out", "seed", "data", "params", "train", "eval", "trials", "dir"};
  return !options.count(key) && default_config_json().contains(key);
}

struct Common {
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;

  ExperimentConfig load() const {
    json doc = config_path.empty() ? json::object() : load_config_json(config_path);
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_config(doc);
  }
};

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::uint64_t pick_seed(const ExperimentConfig& cfg, long long seed) {
  return seed >= 0 ? static_cast<std::uint64_t>(seed) : cfg.seeds.front();
}

int cmd_generate(const Common& c, long long seed_arg) {
  const ExperimentConfig cfg = c.load();
  const fs::path out = resolve_output_dir(cfg, c.out);
  const std::uint64_t seed = pick_seed(cfg, seed_arg);
  const SeedData d = make_seed_data(cfg, seed);
  io::write_file(out / "train.csv", io::write_dataset_csv, d.train);
  json files = json::array({(out / "train.csv").string()});
  for (std::size_t i = 0; i < cfg.domains.size(); ++i) {
    const std::string& tag = cfg.domains[i].tag;
    io::write_file(out / ("eval_" + tag + ".csv"), io::write_dataset_csv, d.eval[i]);
    io::write_file(out / ("trials_" + tag + ".csv"), io::write_trials_csv, d.trials[i]);
    files.push_back((out / ("eval_" + tag + ".csv")).string());
    files.push_back((out / ("trials_" + tag + ".csv")).string());
  }
  print({{"seed", seed}, {"files", files}});
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_path, long long seed_arg) {
  const ExperimentConfig cfg = c.load();
  const fs::path out = resolve_output_dir(cfg, c.out);
  const std::uint64_t seed = pick_seed(cfg, seed_arg);
  const LabeledSet train =
      data_path.empty() ? make_seed_data(cfg, seed).train : io::read_file(data_path, io::read_dataset_csv);
  NetworkSpec spec = cfg.network;
  spec.num_classes = 0;
  for (int l : train.labels) spec.num_classes = std::max(spec.num_classes, l + 1);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const FitResult fr = fit(spec, train, tc);
  io::save_params(out / "params.txt", fr.params);
  io::write_file(out / "loss.csv", io::write_loss_csv, fr.history);
  const auto& last = fr.history.empty() ? LossBreakdown{} : fr.history.back().loss;
  print({{"params", (out / "params.txt").string()},
         {"loss_kind", to_string(tc.loss_kind)},
         {"epochs", tc.epochs},
         {"final_loss", last.total},
         {"train_accuracy", accuracy(fr.params, train)}});
  return kOk;
}

int cmd_evaluate(const Common& c, const std::string& params_path, const std::string& train_path,
                 const std::string& eval_path, const std::string& trials_path) {
  const ExperimentConfig cfg = c.load();
  const fs::path out = resolve_output_dir(cfg, c.out);
  const NetworkParams params = io::load_params(params_path);
  const LabeledSet train = io::read_file(train_path, io::read_dataset_csv);
  const LabeledSet eval = io::read_file(eval_path, io::read_dataset_csv);
  const TrialList trials = io::read_file(trials_path, io::read_trials_csv);
  const Vector mean = mean_embedding(forward_embed(params, train.features));
  const ScoreSet scores = score_trials(trials, forward_embed(params, eval.features), mean);
  const MetricsReport m = evaluate_scores(scores);
  io::write_file(out / ("scores_" + eval.domain + ".csv"), io::write_scores_csv, scores);
  const DetCurve curve = compute_det(scores);
  io::write_file(out / ("det_" + eval.domain + ".csv"), io::write_det_csv, curve);
  json j = {{"eer", m.eer},
            {"min_dcf", m.min_dcf},
            {"n_target", m.n_target},
            {"n_nontarget", m.n_nontarget},
            {"domain_tag", eval.domain}};
  write_json(out / ("metrics_" + eval.domain + ".json"), j);
  print(j);
  return kOk;
}

int cmd_probe(const Common& c, const std::string& params_path, const std::string& data_path) {
  const ExperimentConfig cfg = c.load();
  const fs::path out = resolve_output_dir(cfg, c.out);
  const NetworkParams params = io::load_params(params_path);
  const LabeledSet data = io::read_file(data_path, io::read_dataset_csv);
  const auto post = class_posteriors(params, data.features, cfg.train.aam.scale);
  const ProbeResult r = probe_dataset(post, cfg.tau, data.domain);
  const json j = probe_json(r, cfg.tau);
  write_json(out / ("probe_" + data.domain + ".json"), j);
  print({{"mean_top_count", r.mean_top_count}, {"domain_tag", r.domain_tag}, {"tau", cfg.tau}});
  return kOk;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = c.load();
  const fs::path out = resolve_output_dir(cfg, c.out);
  const ExperimentReport r = run_experiment(cfg, out);
  json summary = json::object();
  for (const auto& [variant, by_domain] : r.summary) {
    for (const auto& [domain, s] : by_domain) {
      summary[variant][domain] = {{"median_eer", s.median_eer},
                                  {"median_min_dcf", s.median_min_dcf},
                                  {"median_mean_top_count", s.median_mean_top_count}};
    }
  }
  print({{"report", (out / "report.json").string()}, {"summary", summary}});
  return kOk;
}

int cmd_emit_det(const Common& c, const std::string& dir, long long seed_arg) {
  fs::path root = dir;
  if (root.empty()) root = resolve_output_dir(c.load(), c.out);
  if (seed_arg < 0) throw ConfigError("emit-det needs --seed");
  const auto files = emit_det_data(root, static_cast<std::uint64_t>(seed_arg));
  json j = json::array();
  for (const auto& f : files) j.push_back(f.string());
  print({{"files", j}});
  return kOk;
}

int cmd_self_test(bool mutate) {
  selftest::Options o;
  o.mutate_entropy_sign = mutate;
  const auto results = selftest::run_all(o);
  print(selftest::to_json(results));
  return selftest::all_passed(results) ? kOk : kSelfTestFailed;
}

}  // namespace

int main(int argc, char** argv) {
  Common common;
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (is_override(a)) {
      common.overrides.push_back(a);
    } else {
      args.push_back(a);
    }
  }
  std::reverse(args.begin(), args.end());

  CLI::App app{"Jeffreys-divergence loss laboratory"};
  app.require_subcommand(1);
  app.add_option("-c,--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-o,--out", common.out, std::string("output directory (default: config, then $") + kOutputDirEnv + ")");

  long long seed = -1;
  std::string data;
  std::string params;
  std::string train;
  std::string eval;
  std::string trials;
  std::string dir;
  bool mutate = false;

  auto* gen = app.add_subcommand("generate", "write a synthetic train set and per-domain eval sets and trials");
  gen->add_option("--seed", seed, "data seed (default: first config seed)");

  auto* tr = app.add_subcommand("train", "train one network with the configured loss");
  tr->add_option("--data", data, "training CSV (default: generate from config)");
  tr->add_option("--seed", seed, "data and init seed (default: first config seed)");

  auto* ev = app.add_subcommand("evaluate", "score a trial list and report EER / minDCF");
  ev->add_option("--params", params)->required();
  ev->add_option("--train", train, "training CSV, for the centering mean")->required();
  ev->add_option("--eval", eval)->required();
  ev->add_option("--trials", trials)->required();

  auto* pr = app.add_subcommand("probe", "count top training speakers per utterance");
  pr->add_option("--params", params)->required();
  pr->add_option("--data", data)->required();

  auto* run = app.add_subcommand("run-experiment", "train and evaluate every variant on every seed");

  auto* det = app.add_subcommand("emit-det", "write DET curves for one seed of a finished experiment");
  det->add_option("--dir", dir, "experiment directory (default: output directory)");
  det->add_option("--seed", seed)->required();

  auto* st = app.add_subcommand("self-test", "run the invariant suite");
  st->add_flag("--mutate-entropy-sign", mutate, "flip the entropy term sign to show the equivalence check failing");

  for (auto* sub : {gen, tr, ev, pr, run, det, st}) sub->fallthrough();

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_generate(common, seed);
    if (*tr) return cmd_train(common, data, seed);
    if (*ev) return cmd_evaluate(common, params, train, eval, trials);
    if (*pr) return cmd_probe(common, params, data);
    if (*run) return cmd_run(common);
    if (*det) return cmd_emit_det(common, dir, seed);
    if (*st) return cmd_self_test(mutate);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kOk;
}
