#pragma once

// Classification losses over a softmax output distribution: cross-entropy,
// label smoothing, and the Jeffreys (symmetric KL) divergence between the
// normalized non-target distribution and the uniform distribution.
//
// Every loss here consumes a PosteriorDistribution, which is always clamped
// into [kProbFloor, 1 - kProbFloor]. Gradients are analytic and taken with
// respect to the softmax inputs (logits) or, when an AamConfig is supplied,
// with respect to the cosines feeding the additive angular margin transform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jeffreys/errors.hpp"

namespace jeffreys {

inline constexpr double kProbFloor = 1e-12;

// Slack accepted on |cos| > 1 before a cosine is treated as coming from an
// unnormalized embedding.
inline constexpr double kCosineSlack = 1e-9;

struct LossWeights {
  double alpha = 0.1;
  double beta = 0.025;

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0) {
      throw DomainError("loss weights must be finite and nonnegative");
    }
  }
};

// Additive angular margin head: target logit s*cos(theta + m), others s*cos.
struct AamConfig {
  double scale = 30.0;
  double margin = 0.2;

  void validate() const {
    if (!std::isfinite(scale) || scale <= 0.0) throw DomainError("AAM scale must be positive");
    if (!std::isfinite(margin) || margin < 0.0 || margin >= std::numbers::pi / 2) {
      throw DomainError("AAM margin must lie in [0, pi/2)");
    }
  }
};

// Selects the third loss term. `nontarget_entropy` is the second Jeffreys term
// sum_{i!=k} p_i log p_i / (1 - p_k); `confidence` is the plain negative
// entropy sum_i p_i log p_i over all labels (no denominator, target included).
enum class Penalty { nontarget_entropy, confidence };

struct LossBreakdown {
  double ce = 0.0;
  double ls_term = 0.0;
  double entropy_term = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    ce += o.ce;
    ls_term += o.ls_term;
    entropy_term += o.entropy_term;
    total += o.total;
    return *this;
  }
  LossBreakdown& operator*=(double f) {
    ce *= f;
    ls_term *= f;
    entropy_term *= f;
    total *= f;
    return *this;
  }
  LossBreakdown& operator/=(double d) {
    ce /= d;
    ls_term /= d;
    entropy_term /= d;
    total /= d;
    return *this;
  }
  bool finite() const {
    return std::isfinite(ce) && std::isfinite(ls_term) && std::isfinite(entropy_term) &&
           std::isfinite(total);
  }
};

// A point on the K-simplex with a designated target label.
//
// Construction clamps every probability into [kProbFloor, 1 - kProbFloor] and
// renormalizes, but only when clamping actually moved a value, so in-range
// inputs are stored bit-for-bit.
class PosteriorDistribution {
 public:
  PosteriorDistribution(std::vector<double> probs, std::size_t target)
      : probs_(std::move(probs)), target_(target) {
    if (probs_.size() < 2) throw DomainError("posterior needs at least two labels");
    if (target_ >= probs_.size()) throw DomainError("target index out of range");
    bool moved = false;
    for (double& p : probs_) {
      if (!std::isfinite(p) || p < 0.0) throw DomainError("probabilities must be finite and >= 0");
      const double c = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
      moved = moved || c != p;
      p = c;
    }
    if (moved) {
      double sum = 0.0;
      for (double p : probs_) sum += p;
      for (double& p : probs_) p /= sum;
    }
  }

  std::span<const double> probs() const { return probs_; }
  std::size_t target() const { return target_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  double target_prob() const { return probs_[target_]; }

  // 1 - p_k, evaluated as the sum of the non-target probabilities so that it
  // keeps full relative precision when p_k is close to one.
  double nontarget_mass() const {
    double s = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (i != target_) s += probs_[i];
    }
    return s;
  }

  // q_i = p_i / (1 - p_k) for i != k, in label order with the target removed.
  std::vector<double> nontarget_distribution() const {
    const double mass = nontarget_mass();
    std::vector<double> q;
    q.reserve(probs_.size() - 1);
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (i != target_) q.push_back(probs_[i] / mass);
    }
    return q;
  }

 private:
  std::vector<double> probs_;
  std::size_t target_;
};

namespace detail {

inline void check_scores(std::span<const double> v, std::size_t target) {
  if (v.size() < 2) throw DomainError("need at least two classes");
  if (target >= v.size()) throw DomainError("target index out of range");
  for (double x : v) {
    if (!std::isfinite(x)) throw DomainError("non-finite logit");
  }
}

}  // namespace detail

inline PosteriorDistribution softmax(std::span<const double> logits, std::size_t target) {
  detail::check_scores(logits, target);
  const double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return PosteriorDistribution(std::move(p), target);
}

// Rejects |cos| beyond 1 + kCosineSlack and clamps anything inside the slack.
inline std::vector<double> aam_transform(std::span<const double> cosines, std::size_t target,
                                         const AamConfig& cfg) {
  detail::check_scores(cosines, target);
  cfg.validate();
  std::vector<double> z(cosines.size());
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    const double c = cosines[i];
    if (std::abs(c) > 1.0 + kCosineSlack) {
      throw DomainError("cosine outside [-1, 1]; embeddings are not normalized");
    }
    z[i] = cfg.scale * c;
  }
  const double ct = std::clamp(cosines[target], -1.0, 1.0);
  if (cfg.margin != 0.0) {
    z[target] = cfg.scale * std::cos(std::acos(ct) + cfg.margin);
  } else {
    z[target] = cfg.scale * ct;
  }
  return z;
}

inline double cross_entropy(const PosteriorDistribution& p) { return -std::log(p.target_prob()); }

// -(1/(K-1)) sum_{i!=k} log p_i
inline double label_smoothing_term(const PosteriorDistribution& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != p.target()) s += std::log(p[i]);
  }
  return -s / static_cast<double>(p.size() - 1);
}

// sum_{i!=k} p_i log p_i / (1 - p_k)
inline double entropy_term(const PosteriorDistribution& p) {
  const double mass = p.nontarget_mass();
  if (!(mass >= kProbFloor)) throw DegenerateTarget("non-target mass below probability floor");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != p.target()) s += p[i] * std::log(p[i]);
  }
  return s / mass;
}

// KL(u || q) + KL(q || u) with q the normalized non-target distribution and
// u uniform over the K-1 non-target labels. Zero for K = 2.
inline double jeffreys_direct(const PosteriorDistribution& p) {
  if (p.size() == 2) return 0.0;
  if (!(p.nontarget_mass() >= kProbFloor)) {
    throw DegenerateTarget("non-target mass below probability floor");
  }
  const std::vector<double> q = p.nontarget_distribution();
  const double u = 1.0 / static_cast<double>(q.size());
  const double log_u = std::log(u);
  double kl_uq = 0.0;
  double kl_qu = 0.0;
  for (double qi : q) {
    const double log_q = std::log(qi);
    kl_uq += u * (log_u - log_q);
    kl_qu += qi * (log_q - log_u);
  }
  return kl_uq + kl_qu;
}

// Simplified closed form of jeffreys_direct: label_smoothing_term + entropy_term.
inline double jeffreys_loss(const PosteriorDistribution& p) {
  if (p.size() == 2) return 0.0;
  return label_smoothing_term(p) + entropy_term(p);
}

// sum_i p_i log p_i over all labels, target included.
inline double confidence_penalty(const PosteriorDistribution& p) {
  double s = 0.0;
  for (double x : p.probs()) s += x * std::log(x);
  return s;
}

inline LossBreakdown combined_loss(const PosteriorDistribution& p, const LossWeights& w,
                                   Penalty penalty = Penalty::nontarget_entropy) {
  LossBreakdown out;
  out.ce = cross_entropy(p);
  out.ls_term = label_smoothing_term(p);
  out.entropy_term =
      penalty == Penalty::nontarget_entropy ? entropy_term(p) : confidence_penalty(p);
  out.total = out.ce + w.alpha * out.ls_term + w.beta * out.entropy_term;
  return out;
}

// Maps raw scores to logits: identity without a margin config, aam_transform
// with one.
inline std::vector<double> scores_to_logits(std::span<const double> scores, std::size_t target,
                                            const std::optional<AamConfig>& aam) {
  if (aam) return aam_transform(scores, target, *aam);
  detail::check_scores(scores, target);
  return {scores.begin(), scores.end()};
}

struct LossAndGrad {
  LossBreakdown loss;
  std::vector<double> grad;
};

// Loss and its gradient with respect to `scores`. Without `aam` the scores are
// the logits; with it they are the cosines fed to aam_transform.
//
// With p = softmax(z), S = 1 - p_k, A = sum_{i!=k} p_i log p_i, [j] = [j != k]:
//   dCE/dz_j = p_j - [j==k]
//   dLS/dz_j = p_j - [j]/(K-1)
//   dA/dz_j  = [j] p_j (log p_j + 1) - p_j (A + S)
//   dS/dz_j  = [j] p_j - p_j S
//   d(A/S)   = (dA S - A dS) / S^2
//   dC/dz_j  = p_j (log p_j - C)  for C = sum_i p_i log p_i
// The clamp on p is ignored (zero-measure away from the floor).
inline LossAndGrad combined_loss_and_grad(std::span<const double> scores, std::size_t target,
                                          const LossWeights& w, const std::optional<AamConfig>& aam,
                                          Penalty penalty = Penalty::nontarget_entropy) {
  const std::vector<double> z = scores_to_logits(scores, target, aam);
  const PosteriorDistribution p = softmax(z, target);
  const std::size_t n = p.size();
  const std::size_t k = target;

  LossAndGrad out;
  out.loss = combined_loss(p, w, penalty);
  std::vector<double>& g = out.grad;
  g.assign(n, 0.0);

  const double inv_km1 = 1.0 / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    const double pj = p[j];
    const double nt = j == k ? 0.0 : 1.0;
    g[j] = (pj - (1.0 - nt)) + w.alpha * (pj - nt * inv_km1);
  }

  if (w.beta != 0.0) {
    if (penalty == Penalty::nontarget_entropy) {
      const double s = p.nontarget_mass();
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i != k) a += p[i] * std::log(p[i]);
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double pj = p[j];
        const double nt = j == k ? 0.0 : 1.0;
        const double da = nt * pj * (std::log(pj) + 1.0) - pj * (a + s);
        const double ds = nt * pj - pj * s;
        g[j] += w.beta * (da * s - a * ds) / (s * s);
      }
    } else {
      const double c = out.loss.entropy_term;
      for (std::size_t j = 0; j < n; ++j) g[j] += w.beta * p[j] * (std::log(p[j]) - c);
    }
  }

  if (aam) {
    for (std::size_t j = 0; j < n; ++j) g[j] *= aam->scale;
    if (aam->margin != 0.0) {
      // d cos(acos(c) + m)/dc = cos m + c sin m / sqrt(1 - c^2); the root is
      // floored so |c| -> 1 stays finite.
      const double c = std::clamp(scores[k], -1.0, 1.0);
      const double root = std::max(std::sqrt(std::max(0.0, 1.0 - c * c)), 1e-6);
      g[k] *= std::cos(aam->margin) + c * std::sin(aam->margin) / root;
    }
  }
  return out;
}

inline std::vector<double> combined_loss_grad(std::span<const double> scores, std::size_t target,
                                              const LossWeights& w,
                                              const std::optional<AamConfig>& aam,
                                              Penalty penalty = Penalty::nontarget_entropy) {
  return combined_loss_and_grad(scores, target, w, aam, penalty).grad;
}

// Loss variants compared by the trainer and experiment harness.
enum class LossKind { ce, ce_ls, ce_jeffreys, ce_pereyra };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::ce: return "ce";
    case LossKind::ce_ls: return "ce_ls";
    case LossKind::ce_jeffreys: return "ce_jeffreys";
    case LossKind::ce_pereyra: return "ce_pereyra";
  }
  return "?";
}

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
  for (LossKind k : {LossKind::ce, LossKind::ce_ls, LossKind::ce_jeffreys, LossKind::ce_pereyra}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

// Effective weights for a loss kind: ce drops both regularizers, ce_ls drops
// the entropy term, ce_jeffreys and ce_pereyra keep (alpha, beta).
inline LossWeights effective_weights(LossKind kind, const LossWeights& w) {
  switch (kind) {
    case LossKind::ce: return {0.0, 0.0};
    case LossKind::ce_ls: return {w.alpha, 0.0};
    default: return w;
  }
}

inline Penalty penalty_for(LossKind kind) {
  return kind == LossKind::ce_pereyra ? Penalty::confidence : Penalty::nontarget_entropy;
}

}  // namespace jeffreys
