#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jeffreys/experiment.hpp"

using namespace jeffreys;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  json doc = json::object();
  apply_override(doc, "--data.n_speakers_train=8");
  apply_override(doc, "--data.n_speakers_eval=6");
  apply_override(doc, "--data.per_speaker=6");
  apply_override(doc, "--trials.n_target=40");
  apply_override(doc, "--trials.n_nontarget=120");
  apply_override(doc, "--train.epochs=2");
  apply_override(doc, "--train.batch_size=16");
  apply_override(doc, "--network.hidden_dims=[8]");
  apply_override(doc, "--network.embed_dim=4");
  apply_override(doc, "--seeds=[1]");
  return parse_config(doc);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Experiment, OneRowPerDomain) {
  auto cfg = small_config();
  cfg.variants = {Variant{LossKind::ce, false}};
  const auto r = run_experiment(cfg);
  EXPECT_TRUE(r.completed);
  ASSERT_EQ(r.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.rows[i].domain, cfg.domains[i].tag);
    EXPECT_GE(r.rows[i].metrics.eer, 0.0);
    EXPECT_LE(r.rows[i].metrics.min_dcf, 1.0);
    EXPECT_GE(r.rows[i].mean_top_count, 1.0);
  }
  EXPECT_EQ(r.summary.size(), 1u);
}

TEST(Experiment, Deterministic) {
  const auto cfg = small_config();
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].metrics.eer, b.rows[i].metrics.eer);
    EXPECT_EQ(a.rows[i].metrics.min_dcf, b.rows[i].metrics.min_dcf);
    EXPECT_EQ(a.rows[i].mean_top_count, b.rows[i].mean_top_count);
  }
}

TEST(Experiment, Median) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(Experiment, ReportAndArtifacts) {
  const fs::path dir = fresh_dir("jeffreys_exp_report");
  auto cfg = small_config();
  cfg.variants = {Variant{LossKind::ce, true}, Variant{LossKind::ce_jeffreys, false}};
  run_experiment(cfg, dir);
  const json r = read_json(dir / "report.json");
  EXPECT_EQ(r.at("schema"), kReportSchema);
  EXPECT_EQ(r.at("status"), "completed");
  EXPECT_EQ(r.at("runs").size(), 6u);
  EXPECT_TRUE(r.at("relative_gains").at("strong").contains("ce_jeffreys_vs_ce+wd"));
  for (const auto& v : cfg.variants) {
    const auto rd = run_dir(dir, v.name(), 1);
    EXPECT_TRUE(fs::exists(rd / "params.txt"));
    EXPECT_TRUE(fs::exists(rd / "loss.csv"));
    for (const auto& d : cfg.domains) {
      EXPECT_TRUE(fs::exists(rd / ("scores_" + d.tag + ".csv")));
      EXPECT_TRUE(fs::exists(rd / ("metrics_" + d.tag + ".json")));
      EXPECT_TRUE(fs::exists(rd / ("probe_" + d.tag + ".json")));
    }
  }
  fs::remove_all(dir);
}

TEST(Experiment, FailureWritesAbortedReport) {
  const fs::path dir = fresh_dir("jeffreys_exp_abort");
  auto cfg = small_config();
  cfg.seeds = {1, 2};
  cfg.variants = {Variant{LossKind::ce, false}};
  cfg.trials.n_target = 10000;
  EXPECT_THROW(run_experiment(cfg, dir), InsufficientData);
  const json r = read_json(dir / "report.json");
  EXPECT_EQ(r.at("status"), "aborted");
  EXPECT_FALSE(r.at("error").get<std::string>().empty());
  fs::remove_all(dir);
}

TEST(EmitDet, WritesOneFilePerVariantDomain) {
  const fs::path dir = fresh_dir("jeffreys_exp_det");
  auto cfg = small_config();
  cfg.variants = {Variant{LossKind::ce, false}, Variant{LossKind::ce_jeffreys, false}};
  cfg.domains.resize(2);
  const auto rep = run_experiment(cfg, dir);
  const auto files = emit_det_data(dir, 1);
  ASSERT_EQ(files.size(), 4u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f));
  const std::string first = slurp(files[0]);
  emit_det_data(dir, 1);
  EXPECT_EQ(slurp(files[0]), first);

  const auto sidecar = read_json(fs::path(files[0]).replace_extension(".json"));
  EXPECT_NEAR(sidecar.at("eer").get<double>(), rep.rows[0].metrics.eer, 1e-15);
  EXPECT_NEAR(sidecar.at("min_dcf").get<double>(), rep.rows[0].metrics.min_dcf, 1e-15);

  EXPECT_THROW(emit_det_data(dir, 99), UnknownRun);
  EXPECT_THROW(emit_det_data(dir / "nope", 1), UnknownRun);
  fs::remove_all(dir);
}
