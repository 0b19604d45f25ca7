#include <gtest/gtest.h>

#include <set>
#include <utility>

#include "jeffreys/synth_data.hpp"

using namespace jeffreys;

TEST(Speakers, UnitDirectionsAndDeterminism) {
  const auto a = generate_speakers(2, 7, 0.1, 3);
  ASSERT_EQ(a.size(), 2u);
  for (const auto& s : a) EXPECT_NEAR(s.mean_direction.norm(), 1.0, 1e-12);
  const auto b = generate_speakers(2, 7, 0.1, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mean_direction, b[i].mean_direction);
  const auto c = generate_speakers(2, 7, 0.1, 4);
  EXPECT_NE(a[0].mean_direction, c[0].mean_direction);
}

TEST(Speakers, IdsAndSubspace) {
  const auto s = generate_speakers(5, 10, 0.2, 1, 100, 3);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(s[i].id, 100 + i);
    EXPECT_NEAR(s[i].mean_direction.norm(), 1.0, 1e-12);
    EXPECT_EQ(s[i].mean_direction.tail(7).norm(), 0.0);
    EXPECT_EQ(s[i].within_spread, 0.2);
  }
  EXPECT_THROW(generate_speakers(1, 4, 0.1, 1), DomainError);
  EXPECT_THROW(generate_speakers(3, 4, 0.1, 1, 0, 5), DomainError);
}

TEST(Shift, RotationIsOrthogonal) {
  for (int dim : {1, 2, 5, 20}) {
    for (std::uint64_t seed = 1; seed < 6; ++seed) {
      const auto s = make_shift(dim, {1.0, 1.5, 0.3}, seed);
      const Matrix e = s.rotation.transpose() * s.rotation - Matrix::Identity(dim, dim);
      EXPECT_LE(e.cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_NEAR(s.bias.norm(), 0.3, 1e-12);
      EXPECT_EQ(s.noise_scale, 1.5);
    }
  }
}

TEST(Shift, IdentitySeverity) {
  const auto s = make_shift(6, {}, 9);
  EXPECT_EQ(s.rotation, Matrix::Identity(6, 6));
  EXPECT_EQ(s.bias, Vector::Zero(6));
  EXPECT_EQ(s.noise_scale, 1.0);
}

TEST(Shift, AngleGrowsWithSeverity) {
  // Mean cosine between a vector and its image shrinks as the angle grows.
  auto mean_cos = [](double angle) {
    const auto s = make_shift(20, {angle, 1.0, 0.0}, 2);
    return s.rotation.trace() / 20.0;
  };
  EXPECT_GT(mean_cos(0.2), mean_cos(0.6));
  EXPECT_GT(mean_cos(0.6), mean_cos(1.2));
}

TEST(Shift, HaarMatrixIsDeterministic) {
  Rng a = make_rng(5, stream::kShift);
  Rng b = make_rng(5, stream::kShift);
  EXPECT_EQ(random_orthogonal(6, a), random_orthogonal(6, b));
}

TEST(Utterances, ZeroSpreadGivesMeans) {
  const auto sp = generate_speakers(3, 4, 0.0, 1);
  const auto d = sample_utterances(sp, 5, DomainShift::identity(4), 2);
  ASSERT_EQ(d.size(), 15u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& s = sp[i / 5];
    EXPECT_EQ(d.labels[i], s.id);
    EXPECT_LE((d.features.row(static_cast<Eigen::Index>(i)).transpose() - s.mean_direction).norm(), 1e-15);
  }
}

TEST(Utterances, ShiftAppliesRotationAndBias) {
  const auto sp = generate_speakers(2, 4, 0.0, 1);
  const auto shift = make_shift(4, {0.8, 1.0, 0.5}, 3);
  const auto d = sample_utterances(sp, 1, shift, 2, "strong");
  EXPECT_EQ(d.domain, "strong");
  const Vector expect = shift.rotation * sp[0].mean_direction + shift.bias;
  EXPECT_LE((d.features.row(0).transpose() - expect).norm(), 1e-12);
}

TEST(Utterances, NoiseScaleInflatesSpread) {
  const auto sp = generate_speakers(2, 8, 0.3, 1);
  auto spread = [&](double scale) {
    DomainShift s = DomainShift::identity(8);
    s.noise_scale = scale;
    const auto d = sample_utterances(sp, 400, s, 5);
    double v = 0.0;
    for (Eigen::Index i = 0; i < 400; ++i) v += (d.features.row(i).transpose() - sp[0].mean_direction).squaredNorm();
    return std::sqrt(v / 400.0 / 8.0);
  };
  EXPECT_NEAR(spread(1.0), 0.3, 0.02);
  EXPECT_NEAR(spread(2.0), 0.6, 0.04);
}

TEST(Utterances, Deterministic) {
  const auto sp = generate_speakers(3, 4, 0.2, 1);
  EXPECT_EQ(sample_utterances(sp, 4, DomainShift::identity(4), 8).features,
            sample_utterances(sp, 4, DomainShift::identity(4), 8).features);
  EXPECT_THROW(sample_utterances(sp, 4, DomainShift::identity(5), 8), DimensionMismatch);
}

namespace {

std::vector<int> labels_for(int speakers, int per) {
  std::vector<int> l;
  for (int s = 0; s < speakers; ++s) {
    for (int u = 0; u < per; ++u) l.push_back(s);
  }
  return l;
}

void check_trials(const TrialList& t, const std::vector<int>& labels) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& x : t.trials) {
    EXPECT_NE(x.a, x.b);
    EXPECT_EQ(labels[x.a] == labels[x.b], x.is_target);
    EXPECT_TRUE(seen.insert({std::min(x.a, x.b), std::max(x.a, x.b)}).second);
  }
}

}  // namespace

TEST(Trials, CountsAndValidity) {
  const auto l = labels_for(10, 8);
  const auto t = make_trials(l, 200, 800, 1);
  EXPECT_EQ(t.size(), 1000u);
  EXPECT_EQ(t.target_count(), 200u);
  check_trials(t, l);
}

TEST(Trials, EnumerationPathWhenPoolIsSmall) {
  const auto l = labels_for(3, 3);  // 9 target pairs, 27 non-target
  const auto t = make_trials(l, 9, 27, 2);
  EXPECT_EQ(t.target_count(), 9u);
  EXPECT_EQ(t.size(), 36u);
  check_trials(t, l);
}

TEST(Trials, OnlyNonTargets) {
  const auto l = labels_for(4, 3);
  const auto t = make_trials(l, 0, 20, 3);
  EXPECT_EQ(t.target_count(), 0u);
  check_trials(t, l);
}

TEST(Trials, BalancedTargets) {
  const auto l = labels_for(6, 10);
  const auto t = make_trials(l, 100, 100, 4, true);
  EXPECT_EQ(t.target_count(), 100u);
  check_trials(t, l);
}

TEST(Trials, InsufficientData) {
  const auto l = labels_for(2, 2);  // 2 target pairs, 4 non-target
  EXPECT_THROW(make_trials(l, 3, 0, 1), InsufficientData);
  EXPECT_THROW(make_trials(l, 0, 5, 1), InsufficientData);
}

TEST(Trials, DefaultRatioAndDeterminism) {
  const auto l = labels_for(10, 10);
  const auto a = make_trials(l, 500, 7);
  EXPECT_EQ(a.target_count(), 100u);
  EXPECT_EQ(a.trials, make_trials(l, 500, 7).trials);
  EXPECT_NE(a.trials, make_trials(l, 500, 8).trials);
}
