#pragma once

// Independent reference computations used by the test suites and by the
// `self-test` command. Each one takes a deliberately naive route (two-pass
// softmax, central differences, brute-force threshold sweep) so that it shares
// no code path with the production implementation it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "jeffreys/loss_core.hpp"
#include "jeffreys/rng.hpp"
#include "jeffreys/scoring.hpp"

namespace jeffreys::oracle {

// exp(z_i) / sum_j exp(z_j) without max subtraction.
inline std::vector<double> naive_softmax(std::span<const double> z) {
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i]);
    s += e[i];
  }
  for (double& x : e) x /= s;
  return e;
}

inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::span<const double> x, double step = 1e-5) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + step;
    const double up = f(probe);
    probe[i] = keep - step;
    const double down = f(probe);
    probe[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return std::sqrt(diff);
  return std::sqrt(diff) / denom;
}

// Total combined loss evaluated from scratch (naive softmax, explicit sums).
inline double combined_loss_reference(std::span<const double> scores, std::size_t target, const LossWeights& w,
                                      const std::optional<AamConfig>& aam, Penalty penalty) {
  std::vector<double> z(scores.begin(), scores.end());
  if (aam) {
    for (double& v : z) v *= aam->scale;
    z[target] = aam->scale * std::cos(std::acos(std::clamp(scores[target], -1.0, 1.0)) + aam->margin);
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  for (double& v : z) v -= zmax;
  std::vector<double> p = naive_softmax(z);
  bool moved = false;
  for (double& v : p) {
    const double c = std::clamp(v, kProbFloor, 1.0 - kProbFloor);
    moved = moved || c != v;
    v = c;
  }
  if (moved) {
    double t = 0.0;
    for (double v : p) t += v;
    for (double& v : p) v /= t;
  }
  const std::size_t n = p.size();
  double ls = 0.0;
  double a = 0.0;
  double s = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c += p[i] * std::log(p[i]);
    if (i == target) continue;
    ls += std::log(p[i]);
    a += p[i] * std::log(p[i]);
    s += p[i];
  }
  const double third = penalty == Penalty::nontarget_entropy ? a / s : c;
  return -std::log(p[target]) - w.alpha * ls / static_cast<double>(n - 1) + w.beta * third;
}

// Random point on the simplex. Mixes flat, moderately peaked and sharply
// peaked draws so that sweeps cover both interior and near-boundary cases.
inline PosteriorDistribution random_posterior(std::size_t k, Rng& rng) {
  std::uniform_int_distribution<int> mode(0, 2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(0.1, 8.0);
  std::vector<double> z(k);
  const int m = mode(rng);
  const double scale = m == 0 ? 0.2 : (m == 1 ? 2.0 : scale_dist(rng));
  for (double& v : z) v = scale * g(rng);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  return softmax(z, pick(rng));
}

struct SweepMetrics {
  double eer = 0.0;
  double min_dcf = 0.0;
  std::vector<OperatingPoint> points;
};

// Exhaustive O(n^2) sweep: every distinct score and +-inf as a threshold, with
// error rates counted by a full scan at each threshold.
inline SweepMetrics sweep_metrics(const ScoreSet& s, const DcfParams& dcf = {}) {
  std::vector<double> thr{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  thr.insert(thr.end(), s.target_scores.begin(), s.target_scores.end());
  thr.insert(thr.end(), s.nontarget_scores.begin(), s.nontarget_scores.end());
  std::sort(thr.begin(), thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());

  SweepMetrics out;
  for (double t : thr) {
    std::size_t miss = 0;
    std::size_t fa = 0;
    for (double x : s.target_scores) miss += x < t ? 1 : 0;
    for (double x : s.nontarget_scores) fa += x >= t ? 1 : 0;
    out.points.push_back({t, static_cast<double>(fa) / static_cast<double>(s.nontarget_scores.size()),
                          static_cast<double>(miss) / static_cast<double>(s.target_scores.size())});
  }

  out.eer = out.points.back().p_miss;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    const auto& b = out.points[i];
    const double db = b.p_miss - b.p_fa;
    if (db < 0.0) continue;
    if (db == 0.0 || i == 0) {
      out.eer = b.p_miss;
    } else {
      const auto& a = out.points[i - 1];
      const double da = a.p_miss - a.p_fa;
      out.eer = a.p_fa + (-da / (db - da)) * (b.p_fa - a.p_fa);
    }
    break;
  }

  const double norm = std::min(dcf.c_miss * dcf.p_target, dcf.c_fa * (1.0 - dcf.p_target));
  out.min_dcf = std::numeric_limits<double>::infinity();
  for (const auto& p : out.points) {
    out.min_dcf = std::min(out.min_dcf, (dcf.c_miss * dcf.p_target * p.p_miss + dcf.c_fa * (1.0 - dcf.p_target) * p.p_fa) / norm);
  }
  return out;
}

}  // namespace jeffreys::oracle
