#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "jeffreys/config.hpp"
#include "jeffreys/io.hpp"
#include "jeffreys/synth_data.hpp"

using namespace jeffreys;
namespace fs = std::filesystem;

TEST(Config, Defaults) {
  const auto c = default_config();
  EXPECT_EQ(c.train.loss_kind, LossKind::ce_jeffreys);
  EXPECT_DOUBLE_EQ(c.train.weights.alpha, 0.1);
  EXPECT_DOUBLE_EQ(c.train.weights.beta, 0.025);
  EXPECT_DOUBLE_EQ(c.train.aam.scale, 30.0);
  EXPECT_DOUBLE_EQ(c.train.aam.margin, 0.2);
  EXPECT_EQ(c.variants.size(), 4u);
  EXPECT_EQ(c.domains.size(), 3u);
  EXPECT_EQ(c.network.num_classes, c.data.n_speakers_train);
  EXPECT_EQ(c.seeds.size(), 5u);
}

TEST(Config, RoundTripThroughJson) {
  const auto c = default_config();
  const auto again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, UnknownKeyAndBadTypeRejected) {
  EXPECT_THROW(parse_config(json{{"trian", json::object()}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"train", {{"epochs", "ten"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"train", {{"loss_kind", "focal"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"probe", {{"tau", 0.0}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"seeds", json::array()}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"train", {{"aam", {{"margin", 2.0}}}}}}), ConfigError);
}

TEST(Config, Overrides) {
  json doc = json::object();
  apply_override(doc, "--train.loss-kind=ce_ls");
  apply_override(doc, "--train.epochs=3");
  apply_override(doc, "--seeds=[7,8]");
  apply_override(doc, "--train.aam.margin=0.1");
  const auto c = parse_config(doc);
  EXPECT_EQ(c.train.loss_kind, LossKind::ce_ls);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 8}));
  EXPECT_DOUBLE_EQ(c.train.aam.margin, 0.1);
  EXPECT_THROW(apply_override(doc, "--train.epochs"), ConfigError);
  EXPECT_THROW(apply_override(doc, "--train..x=1"), ConfigError);
}

TEST(Config, OutputDirResolution) {
  auto c = default_config();
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output_dir(c), kDefaultOutputDir);
  ::setenv(kOutputDirEnv, "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_dir(c), "/tmp/from_env");
  c.output_dir = "cfg";
  EXPECT_EQ(resolve_output_dir(c), "cfg");
  EXPECT_EQ(resolve_output_dir(c, "cli"), "cli");
  ::unsetenv(kOutputDirEnv);
}

TEST(Io, DoubleFormatRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0}) EXPECT_EQ(io::parse_double(io::format_double(v)), v);
  EXPECT_TRUE(std::isinf(io::parse_double(io::format_double(-INFINITY))));
  EXPECT_THROW(io::parse_double("1.0x"), IoError);
}

TEST(Io, ParamsRoundTrip) {
  NetworkSpec spec;
  spec.num_classes = 5;
  const auto p = init_params(spec, 3);
  std::stringstream s;
  io::write_params(s, p);
  EXPECT_TRUE(io::read_params(s) == p);
  std::stringstream bad("not-params 1\n");
  EXPECT_THROW(io::read_params(bad), IoError);
}

TEST(Io, DatasetAndTrialsRoundTrip) {
  const auto sp = generate_speakers(3, 5, 0.2, 1);
  const auto d = sample_utterances(sp, 4, DomainShift::identity(5), 2, "mild");
  std::stringstream s;
  io::write_dataset_csv(s, d);
  const auto back = io::read_dataset_csv(s);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  const auto t = make_trials(d.labels, 10, 20, 3);
  std::stringstream ts;
  io::write_trials_csv(ts, t);
  EXPECT_EQ(io::read_trials_csv(ts).trials, t.trials);
}

TEST(Io, ScoresAndDetRoundTrip) {
  const ScoreSet s{{0.9, 0.8, 0.4}, {0.5, 0.2, 0.1}};
  std::stringstream ss;
  io::write_scores_csv(ss, s);
  const auto back = io::read_scores_csv(ss);
  EXPECT_EQ(back.target_scores, s.target_scores);
  EXPECT_EQ(back.nontarget_scores, s.nontarget_scores);
  const auto c = compute_det(s);
  std::stringstream ds;
  io::write_det_csv(ds, c);
  const auto d = io::read_det_csv(ds);
  ASSERT_EQ(d.points.size(), c.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    EXPECT_EQ(d.points[i].threshold, c.points[i].threshold);
    EXPECT_EQ(d.points[i].p_fa, c.points[i].p_fa);
    EXPECT_EQ(d.points[i].p_miss, c.points[i].p_miss);
  }
}

TEST(Io, FilesCreateParents) {
  const fs::path dir = fs::temp_directory_path() / "jeffreys_io_test";
  fs::remove_all(dir);
  const ScoreSet s{{1.0}, {0.0}};
  io::write_file(dir / "a" / "b" / "scores.csv", io::write_scores_csv, s);
  EXPECT_EQ(io::read_file(dir / "a" / "b" / "scores.csv", io::read_scores_csv).target_scores, s.target_scores);
  EXPECT_THROW(io::read_file(dir / "missing.csv", io::read_scores_csv), IoError);
  fs::remove_all(dir);
}
