#pragma once

// Verification back-end: mean-centered cosine scoring, the empirical DET
// curve, EER and normalized minimum detection cost.
//
// Threshold convention: a trial is accepted when score >= threshold, so
//   P_miss(t) = #{target < t} / n_target
//   P_fa(t)   = #{non-target >= t} / n_nontarget

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "jeffreys/dataset.hpp"
#include "jeffreys/errors.hpp"
#include "jeffreys/synth_data.hpp"

namespace jeffreys {

struct ScoreSet {
  std::vector<double> target_scores;
  std::vector<double> nontarget_scores;
};

struct OperatingPoint {
  double threshold = 0.0;
  double p_fa = 0.0;
  double p_miss = 0.0;
};

// Points ordered by increasing threshold, from (-inf: P_fa = 1, P_miss = 0)
// to (+inf: P_fa = 0, P_miss = 1), with one point per distinct score between.
struct DetCurve {
  std::vector<OperatingPoint> points;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

inline constexpr double kZeroNorm = 1e-12;

inline double center_and_cosine_score(std::span<const double> enroll, std::span<const double> test,
                                      std::span<const double> train_mean) {
  if (enroll.size() != test.size() || enroll.size() != train_mean.size()) {
    throw DimensionMismatch("embedding dimensions differ");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < enroll.size(); ++i) {
    const double a = enroll[i] - train_mean[i];
    const double b = test[i] - train_mean[i];
    dot += a * b;
    na += a * a;
    nb += b * b;
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kZeroNorm || nb < kZeroNorm) throw ZeroVector("centered embedding has zero norm");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

inline Vector mean_embedding(const Matrix& embeddings) {
  if (embeddings.rows() == 0) throw EmptyDataset("cannot take the mean of zero embeddings");
  return embeddings.colwise().mean().transpose();
}

// Scores every trial on centered embeddings (one row per utterance).
inline ScoreSet score_trials(const TrialList& trials, const Matrix& embeddings, const Vector& train_mean) {
  if (train_mean.size() != embeddings.cols()) throw DimensionMismatch("train mean width mismatch");
  const auto n = static_cast<std::size_t>(embeddings.rows());
  const auto dim = static_cast<std::size_t>(embeddings.cols());
  ScoreSet out;
  for (const Trial& t : trials.trials) {
    if (t.a >= n || t.b >= n) throw MissingEmbedding("trial references utterance beyond the embedding table");
    const double s = center_and_cosine_score({embeddings.row(static_cast<Eigen::Index>(t.a)).data(), dim},
                                             {embeddings.row(static_cast<Eigen::Index>(t.b)).data(), dim},
                                             {train_mean.data(), dim});
    (t.is_target ? out.target_scores : out.nontarget_scores).push_back(s);
  }
  return out;
}

// Single merged sweep over sorted scores, O(n log n).
inline DetCurve compute_det(const ScoreSet& scores) {
  if (scores.target_scores.empty() || scores.nontarget_scores.empty()) {
    throw EmptyScores("DET curve needs both target and non-target scores");
  }
  std::vector<double> tar = scores.target_scores;
  std::vector<double> non = scores.nontarget_scores;
  for (double s : tar) {
    if (std::isnan(s)) throw DomainError("NaN score");
  }
  for (double s : non) {
    if (std::isnan(s)) throw DomainError("NaN score");
  }
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());

  DetCurve c;
  c.n_target = tar.size();
  c.n_nontarget = non.size();
  c.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t ti = 0;  // targets strictly below the current threshold
  std::size_t ni = 0;  // non-targets strictly below the current threshold
  while (ti < tar.size() || ni < non.size()) {
    double t = std::numeric_limits<double>::infinity();
    if (ti < tar.size()) t = tar[ti];
    if (ni < non.size()) t = std::min(t, non[ni]);
    c.points.push_back({t, static_cast<double>(non.size() - ni) / nn, static_cast<double>(ti) / nt});
    while (ti < tar.size() && tar[ti] == t) ++ti;
    while (ni < non.size() && non[ni] == t) ++ni;
  }
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return c;
}

// Linear interpolation between the first pair of adjacent points where
// P_miss - P_fa goes from negative to nonnegative.
inline double compute_eer(const DetCurve& curve) {
  const auto& pts = curve.points;
  if (pts.empty()) throw EmptyScores("empty DET curve");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].p_miss - pts[i].p_fa;
    if (d == 0.0) return pts[i].p_miss;
    if (d > 0.0) {
      if (i == 0) return pts[i].p_miss;
      const double d0 = pts[i - 1].p_miss - pts[i - 1].p_fa;
      const double t = -d0 / (d - d0);
      return pts[i - 1].p_fa + t * (pts[i].p_fa - pts[i - 1].p_fa);
    }
  }
  return pts.back().p_miss;
}

inline double dcf_normalizer(const DcfParams& dcf) {
  return std::min(dcf.c_miss * dcf.p_target, dcf.c_fa * (1.0 - dcf.p_target));
}

inline double normalized_dcf(const OperatingPoint& p, const DcfParams& dcf) {
  return (dcf.c_miss * dcf.p_target * p.p_miss + dcf.c_fa * (1.0 - dcf.p_target) * p.p_fa) / dcf_normalizer(dcf);
}

inline double compute_min_dcf(const DetCurve& curve, const DcfParams& dcf = {}) {
  if (curve.points.empty()) throw EmptyScores("empty DET curve");
  if (!(dcf.p_target > 0.0 && dcf.p_target < 1.0) || !(dcf.c_miss > 0.0) || !(dcf.c_fa > 0.0)) {
    throw DomainError("invalid DCF parameters");
  }
  double best = std::numeric_limits<double>::infinity();
  for (const OperatingPoint& p : curve.points) best = std::min(best, normalized_dcf(p, dcf));
  return best;
}

// Index of the operating point achieving the minimum DCF (first on ties).
inline std::size_t min_dcf_index(const DetCurve& curve, const DcfParams& dcf = {}) {
  std::size_t arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double v = normalized_dcf(curve.points[i], dcf);
    if (v < best) {
      best = v;
      arg = i;
    }
  }
  return arg;
}

inline bool det_is_monotone(const DetCurve& curve) {
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    if (!(a.threshold < b.threshold) || b.p_fa > a.p_fa || b.p_miss < a.p_miss) return false;
  }
  return true;
}

struct MetricsReport {
  double eer = 0.0;
  double min_dcf = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

inline MetricsReport evaluate_scores(const ScoreSet& scores, const DcfParams& dcf = {}) {
  const DetCurve c = compute_det(scores);
  return {compute_eer(c), compute_min_dcf(c, dcf), c.n_target, c.n_nontarget};
}

}  // namespace jeffreys
