#pragma once

// End-to-end comparison of loss variants: for every seed, generate speakers
// and domains, train each variant, score every domain's trial list, probe the
// output distributions, then aggregate medians over seeds into a report.
//
// Output layout under the experiment directory:
//   report.json
//   runs/<variant>/seed-<seed>/params.txt
//   runs/<variant>/seed-<seed>/loss.csv
//   runs/<variant>/seed-<seed>/scores_<domain>.csv
//   runs/<variant>/seed-<seed>/metrics_<domain>.json
//   runs/<variant>/seed-<seed>/probe_<domain>.json
//   det/seed-<seed>/<variant>__<domain>.csv (+ .json sidecar)   via emit_det_data

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "jeffreys/config.hpp"
#include "jeffreys/errors.hpp"
#include "jeffreys/io.hpp"
#include "jeffreys/probe.hpp"
#include "jeffreys/scoring.hpp"
#include "jeffreys/synth_data.hpp"
#include "jeffreys/trainer.hpp"

namespace jeffreys {

inline constexpr const char* kReportSchema = "jeffreys-lab/report/v1";

struct RunRow {
  std::string variant;
  LossKind loss_kind = LossKind::ce;
  bool weight_decay = false;
  std::uint64_t seed = 0;
  std::string domain;
  MetricsReport metrics;
  double mean_top_count = 0.0;
  double train_accuracy = 0.0;
  LossBreakdown final_loss;
};

struct DomainSummary {
  double median_eer = 0.0;
  double median_min_dcf = 0.0;
  double median_mean_top_count = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RunRow> rows;
  // summary[variant][domain]
  std::map<std::string, std::map<std::string, DomainSummary>> summary;
  bool completed = false;
  std::string error;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Data shared by every variant trained under one seed.
struct SeedData {
  LabeledSet train;
  std::vector<LabeledSet> eval;  // one per configured domain
  std::vector<TrialList> trials;
};

// Train speakers get class ids 0..n_train-1, eval speakers the ids after.
// Each domain draws its own eval utterances and trial pairs.
inline SeedData make_seed_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  const int dim = cfg.network.input_dim;
  const auto speakers = generate_speakers(cfg.data.n_speakers_train + cfg.data.n_speakers_eval, dim, cfg.data.spread, seed,
                                          0, cfg.data.speaker_dim);
  const std::span<const SpeakerPrototype> all(speakers);
  const auto train_spk = all.first(static_cast<std::size_t>(cfg.data.n_speakers_train));
  const auto eval_spk = all.subspan(static_cast<std::size_t>(cfg.data.n_speakers_train));

  SeedData d;
  d.train = sample_utterances(train_spk, cfg.data.per_speaker, DomainShift::identity(dim), seed, "train");
  for (std::size_t i = 0; i < cfg.domains.size(); ++i) {
    const DomainShift shift = make_shift(dim, cfg.domains[i].severity, mix_seed(seed, 100 + i));
    d.eval.push_back(
        sample_utterances(eval_spk, cfg.data.per_speaker, shift, mix_seed(seed, 200 + i), cfg.domains[i].tag));
    d.trials.push_back(make_trials(d.eval.back().labels, cfg.trials.n_target, cfg.trials.n_nontarget,
                                   mix_seed(seed, 300 + i), cfg.trials.same_class_balance));
  }
  return d;
}

inline TrainConfig variant_train_config(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.loss_kind = v.loss_kind;
  t.optimizer.weight_decay_enabled = v.weight_decay;
  t.seed = seed;
  return t;
}

inline std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& variant, std::uint64_t seed) {
  return root / "runs" / variant / ("seed-" + std::to_string(seed));
}

inline json metrics_json(const MetricsReport& m, LossKind kind, const std::string& domain, std::uint64_t seed) {
  return {{"eer", m.eer},
          {"min_dcf", m.min_dcf},
          {"n_target", m.n_target},
          {"n_nontarget", m.n_nontarget},
          {"loss_kind", to_string(kind)},
          {"domain_tag", domain},
          {"seed", seed}};
}

inline json probe_json(const ProbeResult& r, double tau) {
  return {{"per_utterance_top_counts", r.per_utterance_top_counts},
          {"mean_top_count", r.mean_top_count},
          {"domain_tag", r.domain_tag},
          {"tau", tau}};
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto out = io::open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

inline json read_json(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void summarize(ExperimentReport& r) {
  std::map<std::string, std::map<std::string, std::vector<const RunRow*>>> groups;
  for (const auto& row : r.rows) groups[row.variant][row.domain].push_back(&row);
  r.summary.clear();
  for (const auto& [variant, by_domain] : groups) {
    for (const auto& [domain, rows] : by_domain) {
      std::vector<double> eer;
      std::vector<double> dcf;
      std::vector<double> top;
      for (const RunRow* row : rows) {
        eer.push_back(row->metrics.eer);
        dcf.push_back(row->metrics.min_dcf);
        top.push_back(row->mean_top_count);
      }
      r.summary[variant][domain] = {median(eer), median(dcf), median(top)};
    }
  }
}

// Report document. `generated_at` is the only non-deterministic field.
inline json report_json(const ExperimentReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"variant", row.variant},
                    {"loss_kind", to_string(row.loss_kind)},
                    {"weight_decay", row.weight_decay},
                    {"seed", row.seed},
                    {"domain_tag", row.domain},
                    {"eer", row.metrics.eer},
                    {"min_dcf", row.metrics.min_dcf},
                    {"n_target", row.metrics.n_target},
                    {"n_nontarget", row.metrics.n_nontarget},
                    {"mean_top_count", row.mean_top_count},
                    {"train_accuracy", row.train_accuracy},
                    {"final_loss",
                     {{"ce", row.final_loss.ce},
                      {"ls_term", row.final_loss.ls_term},
                      {"entropy_term", row.final_loss.entropy_term},
                      {"total", row.final_loss.total}}}});
  }

  json summary = json::object();
  for (const auto& [variant, by_domain] : r.summary) {
    for (const auto& [domain, s] : by_domain) {
      summary[variant][domain] = {{"median_eer", s.median_eer},
                                  {"median_min_dcf", s.median_min_dcf},
                                  {"median_mean_top_count", s.median_mean_top_count}};
    }
  }

  // Relative gains of every variant against the first configured one.
  json gains = json::object();
  json correlation = json::object();
  if (!r.config.variants.empty() && r.summary.count(r.config.variants.front().name())) {
    const std::string base = r.config.variants.front().name();
    for (const auto& v : r.config.variants) {
      const auto it = r.summary.find(v.name());
      if (it == r.summary.end()) continue;
      std::vector<double> tops;
      std::vector<double> eers;
      for (const auto& d : r.config.domains) {
        const auto ds = it->second.find(d.tag);
        if (ds == it->second.end()) continue;
        tops.push_back(ds->second.median_mean_top_count);
        eers.push_back(ds->second.median_eer);
        if (v.name() == base) continue;
        const auto& b = r.summary.at(base).at(d.tag);
        auto gain = [](double base_value, double value) { return base_value > 0.0 ? (base_value - value) / base_value : 0.0; };
        gains[d.tag][v.name() + "_vs_" + base] = {{"eer", gain(b.median_eer, ds->second.median_eer)},
                                                  {"min_dcf", gain(b.median_min_dcf, ds->second.median_min_dcf)}};
      }
      if (tops.size() >= 2) correlation[v.name()] = spearman(tops, eers);
    }
  }

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));

  return {{"schema", kReportSchema},
          {"status", r.completed ? "completed" : "aborted"},
          {"error", r.error},
          {"generated_at", stamp},
          {"config", to_json(r.config)},
          {"runs", rows},
          {"summary", summary},
          {"relative_gains", gains},
          {"probe_rank_correlation", correlation}};
}

// Trains one variant on one seed's data and evaluates it on every domain,
// writing the run's artifacts under `dir` when it is non-empty.
inline std::vector<RunRow> run_variant(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed, const SeedData& data,
                                       const std::filesystem::path& dir) {
  NetworkSpec spec = cfg.network;
  spec.num_classes = cfg.data.n_speakers_train;
  const FitResult fr = fit(spec, data.train, variant_train_config(cfg, v, seed));
  const Vector train_mean = mean_embedding(forward_embed(fr.params, data.train.features));
  const double acc = accuracy(fr.params, data.train);
  if (!dir.empty()) {
    io::save_params(dir / "params.txt", fr.params);
    io::write_file(dir / "loss.csv", io::write_loss_csv, fr.history);
  }

  std::vector<RunRow> rows;
  for (std::size_t d = 0; d < cfg.domains.size(); ++d) {
    const std::string& tag = cfg.domains[d].tag;
    const Matrix emb = forward_embed(fr.params, data.eval[d].features);
    const ScoreSet scores = score_trials(data.trials[d], emb, train_mean);
    const MetricsReport m = evaluate_scores(scores);
    const auto post = class_posteriors(fr.params, data.eval[d].features, cfg.train.aam.scale);
    const ProbeResult pr = probe_dataset(post, cfg.tau, tag);
    if (!dir.empty()) {
      io::write_file(dir / ("scores_" + tag + ".csv"), io::write_scores_csv, scores);
      write_json(dir / ("metrics_" + tag + ".json"), metrics_json(m, v.loss_kind, tag, seed));
      write_json(dir / ("probe_" + tag + ".json"), probe_json(pr, cfg.tau));
    }
    RunRow row;
    row.variant = v.name();
    row.loss_kind = v.loss_kind;
    row.weight_decay = v.weight_decay;
    row.seed = seed;
    row.domain = tag;
    row.metrics = m;
    row.mean_top_count = pr.mean_top_count;
    row.train_accuracy = acc;
    row.final_loss = fr.history.empty() ? LossBreakdown{} : fr.history.back().loss;
    rows.push_back(row);
  }
  return rows;
}

// Runs every (seed, variant) pair. With an empty `out_dir` nothing is written.
// On failure, the partial report is flushed before the error propagates.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {}) {
  if (cfg.variants.empty()) throw ConfigError("experiment.variants must not be empty");
  ExperimentReport report;
  report.config = cfg;
  auto flush = [&]() {
    summarize(report);
    if (!out_dir.empty()) write_json(out_dir / "report.json", report_json(report));
  };
  try {
    for (std::uint64_t seed : cfg.seeds) {
      const SeedData data = make_seed_data(cfg, seed);
      for (const Variant& v : cfg.variants) {
        const auto dir = out_dir.empty() ? std::filesystem::path{} : run_dir(out_dir, v.name(), seed);
        auto rows = run_variant(cfg, v, seed, data, dir);
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      }
    }
  } catch (const std::exception& e) {
    report.error = e.what();
    flush();
    throw;
  }
  report.completed = true;
  flush();
  return report;
}

// Writes one DET CSV plus a JSON sidecar per (variant, domain) of the given
// seed, from the score files of a finished experiment. Idempotent.
inline std::vector<std::filesystem::path> emit_det_data(const std::filesystem::path& exp_dir, std::uint64_t seed,
                                                        const DcfParams& dcf = {}) {
  const auto report_path = exp_dir / "report.json";
  if (!std::filesystem::exists(report_path)) throw UnknownRun("no report.json under " + exp_dir.string());
  const json report = read_json(report_path);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& row : report.at("runs")) {
    if (row.at("seed").get<std::uint64_t>() != seed) continue;
    pairs.emplace_back(row.at("variant").get<std::string>(), row.at("domain_tag").get<std::string>());
  }
  if (pairs.empty()) throw UnknownRun("no runs for seed " + std::to_string(seed) + " in " + report_path.string());

  std::vector<std::filesystem::path> written;
  const auto det_dir = exp_dir / "det" / ("seed-" + std::to_string(seed));
  for (const auto& [variant, domain] : pairs) {
    const auto scores_path = run_dir(exp_dir, variant, seed) / ("scores_" + domain + ".csv");
    if (!std::filesystem::exists(scores_path)) throw UnknownRun("missing " + scores_path.string());
    const ScoreSet scores = io::read_file(scores_path, io::read_scores_csv);
    const DetCurve curve = compute_det(scores);
    const double eer = compute_eer(curve);
    const std::size_t arg = min_dcf_index(curve, dcf);
    const auto& p = curve.points[arg];
    const auto base = det_dir / (variant + "__" + domain);
    io::write_file(base.string() + ".csv", io::write_det_csv, curve);
    write_json(base.string() + ".json",
               {{"variant", variant},
                {"domain_tag", domain},
                {"seed", seed},
                {"eer", eer},
                {"eer_point", {{"p_fa", eer}, {"p_miss", eer}}},
                {"min_dcf", normalized_dcf(p, dcf)},
                {"min_dcf_point", {{"threshold", io::format_double(p.threshold)}, {"p_fa", p.p_fa}, {"p_miss", p.p_miss}}},
                {"p_target", dcf.p_target},
                {"c_miss", dcf.c_miss},
                {"c_fa", dcf.c_fa}});
    written.emplace_back(base.string() + ".csv");
  }
  return written;
}

}  // namespace jeffreys
