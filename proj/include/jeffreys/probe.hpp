#pragma once

// Output-distribution diagnostics: how many training classes ("top training
// speakers") an utterance's posterior needs to cover a mass tau, and the
// expected KL divergence of a posterior set against reference outputs.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jeffreys/errors.hpp"
#include "jeffreys/loss_core.hpp"

namespace jeffreys {

inline constexpr double kDefaultTau = 0.9;

// Cumulative sums within this slack of tau count as reaching it, so that e.g.
// nine masses of 0.1 reach 0.9 despite rounding.
inline constexpr double kMassSlack = 1e-12;

struct ProbeResult {
  std::vector<int> per_utterance_top_counts;
  double mean_top_count = 0.0;
  std::string domain_tag;
};

// Size of the smallest prefix of labels, sorted by decreasing probability
// (ties: lower index first), whose mass reaches tau.
inline int top_training_speakers(const PosteriorDistribution& p, double tau = kDefaultTau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("tau must lie in (0, 1]");
  const auto probs = p.probs();
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    mass += probs[order[i]];
    if (mass >= tau - kMassSlack) return static_cast<int>(i + 1);
  }
  return static_cast<int>(order.size());
}

inline ProbeResult probe_dataset(std::span<const PosteriorDistribution> posteriors, double tau,
                                 std::string domain_tag) {
  if (posteriors.empty()) throw EmptyDataset("probe needs at least one posterior");
  ProbeResult r;
  r.domain_tag = std::move(domain_tag);
  r.per_utterance_top_counts.reserve(posteriors.size());
  double sum = 0.0;
  for (const auto& p : posteriors) {
    const int c = top_training_speakers(p, tau);
    r.per_utterance_top_counts.push_back(c);
    sum += c;
  }
  r.mean_top_count = sum / static_cast<double>(posteriors.size());
  return r;
}

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionMismatch("KL operands differ in size");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  return s;
}

// (E_p[KL(p || q1)], E_p[KL(p || q2)]) over the posterior set.
inline std::pair<double, double> mean_kl_gap(std::span<const PosteriorDistribution> set,
                                             const PosteriorDistribution& q1, const PosteriorDistribution& q2) {
  if (set.empty()) throw EmptyDataset("mean_kl_gap needs at least one posterior");
  if (q1.size() != q2.size()) throw DimensionMismatch("reference distributions differ in size");
  double a = 0.0;
  double b = 0.0;
  for (const auto& p : set) {
    if (p.size() != q1.size()) throw DimensionMismatch("posterior size differs from references");
    a += kl_divergence(p.probs(), q1.probs());
    b += kl_divergence(p.probs(), q2.probs());
  }
  const double n = static_cast<double>(set.size());
  return {a / n, b / n};
}

// E_p[p] . (log q2 - log q1), which equals the difference of the two
// expectations returned by mean_kl_gap.
inline double expected_log_ratio(std::span<const PosteriorDistribution> set, const PosteriorDistribution& q1,
                                 const PosteriorDistribution& q2) {
  if (set.empty()) throw EmptyDataset("expected_log_ratio needs at least one posterior");
  std::vector<double> mean(q1.size(), 0.0);
  for (const auto& p : set) {
    if (p.size() != mean.size()) throw DimensionMismatch("posterior size differs from references");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
  }
  double s = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    s += mean[i] / static_cast<double>(set.size()) * (std::log(q2[i]) - std::log(q1[i]));
  }
  return s;
}

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either side is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionMismatch("spearman needs two equal series of length >= 2");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace jeffreys
