#pragma once

// Invariant suite behind the `self-test` command. Every check compares the
// production code against an independent oracle or an exact identity and
// reports its worst observed error next to the tolerance it was held to.

#include <chrono>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "jeffreys/loss_core.hpp"
#include "jeffreys/oracles.hpp"
#include "jeffreys/probe.hpp"
#include "jeffreys/rng.hpp"
#include "jeffreys/scoring.hpp"
#include "jeffreys/trainer.hpp"

namespace jeffreys::selftest {

struct CheckResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;      // largest observed error
  double tolerance = 0.0;  // bound it is held to (0 when the check is exact)
  double seconds = 0.0;
};

struct Options {
  std::uint64_t seed = 2024;
  std::size_t posterior_samples = 10000;
  std::size_t uniform_samples = 1000;
  std::size_t loss_grad_cases = 160;
  std::size_t network_grad_cases = 32;
  std::size_t metric_sets = 100;
  std::size_t kl_cases = 200;
  // Flips the sign of the entropy term inside the Jeffreys check. Used to show
  // that the equivalence check can fail.
  bool mutate_entropy_sign = false;
};

inline constexpr std::size_t kSizes[] = {2, 3, 10, 100, 512};

namespace detail {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline double jeffreys_under_test(const PosteriorDistribution& p, bool mutate) {
  if (!mutate) return jeffreys_loss(p);
  if (p.size() == 2) return 0.0;
  return label_smoothing_term(p) - entropy_term(p);
}

inline void note(CheckResult& r, double err) {
  if (!(err <= r.worst)) r.worst = err;  // NaN sticks
}

inline std::size_t pick_size(Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, std::size(kSizes) - 1);
  return kSizes[d(rng)];
}

}  // namespace detail

// jeffreys_direct and jeffreys_loss agree to 1e-9 + 1e-9 |value|. `worst` is
// the largest error expressed as a fraction of that bound.
inline CheckResult check_jeffreys_equivalence(const Options& o) {
  detail::Timer t;
  CheckResult r{"jeffreys_equivalence"};
  r.tolerance = 1.0;
  Rng rng = make_rng(o.seed, 101);
  for (std::size_t i = 0; i < o.posterior_samples; ++i) {
    const auto p = oracle::random_posterior(kSizes[i % std::size(kSizes)], rng);
    const double direct = jeffreys_direct(p);
    const double loss = detail::jeffreys_under_test(p, o.mutate_entropy_sign);
    detail::note(r, std::abs(direct - loss) / (1e-9 + 1e-9 * std::abs(direct)));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

// jeffreys_loss >= -1e-12 on random posteriors.
inline CheckResult check_jeffreys_nonnegative(const Options& o) {
  detail::Timer t;
  CheckResult r{"jeffreys_nonnegative"};
  r.tolerance = 1e-12;
  Rng rng = make_rng(o.seed, 102);
  for (std::size_t i = 0; i < o.posterior_samples; ++i) {
    const auto p = oracle::random_posterior(kSizes[i % std::size(kSizes)], rng);
    detail::note(r, std::max(0.0, -jeffreys_loss(p)));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

// |jeffreys_loss| <= 1e-10 whenever the non-target labels share their mass
// equally, whatever the target probability.
inline CheckResult check_jeffreys_uniform_zero(const Options& o) {
  detail::Timer t;
  CheckResult r{"jeffreys_uniform_zero"};
  r.tolerance = 1e-10;
  Rng rng = make_rng(o.seed, 103);
  std::uniform_real_distribution<double> pk_dist(1e-6, 1.0 - 1e-6);
  for (std::size_t i = 0; i < o.uniform_samples; ++i) {
    const std::size_t k = detail::pick_size(rng);
    const double pk = pk_dist(rng);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    const std::size_t target = pick(rng);
    std::vector<double> probs(k, (1.0 - pk) / static_cast<double>(k - 1));
    probs[target] = pk;
    detail::note(r, std::abs(jeffreys_loss(PosteriorDistribution(probs, target))));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

inline constexpr LossKind kAllKinds[] = {LossKind::ce, LossKind::ce_ls, LossKind::ce_jeffreys, LossKind::ce_pereyra};

// Central differences are only a usable oracle where the loss is smooth at
// the probe scale: away from the probability clamp and from saturation, where
// a gradient near 1e-8 drowns in the rounding of an O(1) loss.
inline bool smooth_posterior(const PosteriorDistribution& p) {
  for (double v : p.probs()) {
    if (v < 1e-9 || v > 1.0 - 1e-6) return false;
  }
  return true;
}

// Analytic gradient of the combined loss against central differences, for
// every loss kind, with raw logits and with AAM cosines (margin on and off).
inline CheckResult check_loss_gradient(const Options& o) {
  detail::Timer t;
  CheckResult r{"loss_gradient"};
  r.tolerance = 1e-6;
  Rng rng = make_rng(o.seed, 104);
  std::uniform_int_distribution<std::size_t> kdist(3, 12);
  std::uniform_real_distribution<double> cosd(-0.9, 0.9);
  std::normal_distribution<double> logit(0.0, 2.0);
  const LossWeights base{0.1, 0.025};
  constexpr double kScales[] = {5.0, 10.0, 30.0};
  for (std::size_t i = 0; i < o.loss_grad_cases; ++i) {
    const LossKind kind = kAllKinds[i % 4];
    const int mode = static_cast<int>((i / 4) % 3);  // 0 raw logits, 1 AAM no margin, 2 AAM margin
    std::optional<AamConfig> aam;
    if (mode != 0) aam = AamConfig{kScales[(i / 12) % 3], mode == 1 ? 0.0 : 0.2};
    std::vector<double> x;
    std::size_t target = 0;
    do {
      x.assign(kdist(rng), 0.0);
      std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
      target = pick(rng);
      for (double& v : x) v = mode == 0 ? logit(rng) : cosd(rng);
    } while (!smooth_posterior(softmax(scores_to_logits(x, target, aam), target)));
    const LossWeights w = effective_weights(kind, base);
    const Penalty pen = penalty_for(kind);
    const auto analytic = combined_loss_grad(x, target, w, aam, pen);
    const auto numeric = oracle::central_difference(
        [&](std::span<const double> v) { return combined_loss_and_grad(v, target, w, aam, pen).loss.total; }, x);
    detail::note(r, oracle::relative_error(analytic, numeric));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

// Full backprop through the network against central differences on every
// parameter of a small network.
inline CheckResult check_network_gradient(const Options& o) {
  detail::Timer t;
  CheckResult r{"network_gradient"};
  r.tolerance = 1e-5;
  Rng rng = make_rng(o.seed, 105);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < o.network_grad_cases; ++i) {
    NetworkSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {4};
    spec.embed_dim = 3;
    spec.num_classes = 4;
    spec.activation = i % 2 == 0 ? Activation::tanh : Activation::relu;
    TrainConfig cfg;
    cfg.loss_kind = kAllKinds[i % 4];
    cfg.aam = AamConfig{10.0, (i / 4) % 2 == 0 ? 0.2 : 0.0};
    // Random biases keep the point generic: with the zero init biases a row
    // whose ReLU units are all dead has a zero embedding, where the
    // normalization has no derivative. Target cosines near +-1 sit on the
    // acos singularity of the margin and are redrawn as well.
    NetworkParams params = init_params(spec, o.seed + i);
    Matrix x(5, spec.input_dim);
    std::vector<int> labels(5);
    std::uniform_int_distribution<int> lab(0, spec.num_classes - 1);
    bool generic = false;
    while (!generic) {
      for (auto& l : params.layers) {
        for (Eigen::Index a = 0; a < l.bias.size(); ++a) l.bias[a] = 0.5 * g(rng);
      }
      for (Eigen::Index a = 0; a < x.size(); ++a) x.data()[a] = g(rng);
      for (int& l : labels) l = lab(rng);
      const Matrix cos = forward_cosines(params, forward_embed(params, x));
      generic = true;
      for (Eigen::Index a = 0; a < x.rows(); ++a) generic = generic && std::abs(cos(a, labels[a])) <= 0.99;
    }

    const Gradients analytic = compute_gradients(params, x, labels, cfg);
    std::vector<double> a_flat;
    for (const auto& b : analytic.grad.blocks()) a_flat.insert(a_flat.end(), b.data(), b.data() + b.size());
    std::vector<double> theta;
    for (const auto& b : params.blocks()) theta.insert(theta.end(), b.data(), b.data() + b.size());

    NetworkParams probe = params;
    auto loss_at = [&](std::span<const double> v) {
      std::size_t off = 0;
      for (auto& b : probe.blocks()) {
        for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = v[off++];
      }
      return compute_gradients(probe, x, labels, cfg).mean_loss.total;
    };
    const auto numeric = oracle::central_difference(loss_at, theta);
    detail::note(r, oracle::relative_error(a_flat, numeric));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

// (alpha, beta) = (a, a) gives CE + a J, and beta = 0 gives CE + alpha LS.
inline CheckResult check_reductions(const Options& o) {
  detail::Timer t;
  CheckResult r{"reduction_identities"};
  r.tolerance = 1e-12;
  Rng rng = make_rng(o.seed, 106);
  std::uniform_real_distribution<double> ad(0.0, 2.0);
  for (std::size_t i = 0; i < o.posterior_samples / 10; ++i) {
    const auto p = oracle::random_posterior(kSizes[1 + i % (std::size(kSizes) - 1)], rng);
    const double a = ad(rng);
    const double ce = cross_entropy(p);
    const double both = combined_loss(p, {a, a}).total;
    const double expect_both = ce + a * jeffreys_loss(p);
    detail::note(r, std::abs(both - expect_both) / std::max(1.0, std::abs(expect_both)));
    const double ls_only = combined_loss(p, {a, 0.0}).total;
    const double expect_ls = ce + a * label_smoothing_term(p);
    detail::note(r, std::abs(ls_only - expect_ls) / std::max(1.0, std::abs(expect_ls)));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

// Stable softmax against the naive two-pass formula, and total mass 1.
inline CheckResult check_softmax(const Options& o) {
  detail::Timer t;
  CheckResult r{"softmax"};
  r.tolerance = 1e-12;
  Rng rng = make_rng(o.seed, 107);
  std::normal_distribution<double> g(0.0, 3.0);
  for (std::size_t i = 0; i < o.posterior_samples / 10; ++i) {
    std::vector<double> z(detail::pick_size(rng));
    for (double& v : z) v = g(rng);
    const auto p = softmax(z, 0);
    const auto q = oracle::naive_softmax(z);
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      sum += p[j];
      if (q[j] > 1e-10) detail::note(r, std::abs(p[j] - q[j]) / q[j]);
    }
    detail::note(r, std::abs(sum - 1.0));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

inline ScoreSet worked_score_example() { return {{0.9, 0.8, 0.4}, {0.5, 0.2, 0.1}}; }

// compute_eer / compute_min_dcf against the exhaustive sweep, on random score
// sets (some with heavy ties) and on the worked 6-score example.
inline CheckResult check_metrics(const Options& o) {
  detail::Timer t;
  CheckResult r{"metric_oracle"};
  r.tolerance = 1e-12;
  Rng rng = make_rng(o.seed, 108);
  std::uniform_int_distribution<std::size_t> nd(1, 100);
  std::normal_distribution<double> g(0.0, 1.0);
  auto compare = [&](const ScoreSet& s) {
    const DetCurve c = compute_det(s);
    const auto ref = oracle::sweep_metrics(s);
    detail::note(r, std::abs(compute_eer(c) - ref.eer));
    detail::note(r, std::abs(compute_min_dcf(c) - ref.min_dcf));
    ++r.cases;
  };
  const ScoreSet ex = worked_score_example();
  compare(ex);
  const DetCurve ex_curve = compute_det(ex);
  detail::note(r, std::abs(compute_eer(ex_curve) - 1.0 / 3.0));
  detail::note(r, std::abs(compute_min_dcf(ex_curve) - 1.0 / 3.0));
  for (std::size_t i = 0; i < o.metric_sets; ++i) {
    ScoreSet s;
    const std::size_t nt = nd(rng);
    const std::size_t nn = nd(rng);
    const bool ties = i % 3 == 0;
    const double shift = 1.5 * g(rng);
    auto draw = [&](double mu) {
      const double v = mu + g(rng);
      return ties ? std::round(v * 4.0) / 4.0 : v;
    };
    for (std::size_t j = 0; j < nt; ++j) s.target_scores.push_back(draw(shift));
    for (std::size_t j = 0; j < nn; ++j) s.nontarget_scores.push_back(draw(0.0));
    compare(s);
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

// Difference of the two mean KL divergences equals E[p] . (log q2 - log q1).
inline CheckResult check_kl_gap(const Options& o) {
  detail::Timer t;
  CheckResult r{"kl_gap_identity"};
  r.tolerance = 1e-10;
  Rng rng = make_rng(o.seed, 109);
  std::uniform_int_distribution<std::size_t> nd(1, 20);
  for (std::size_t i = 0; i < o.kl_cases; ++i) {
    const std::size_t k = detail::pick_size(rng);
    std::vector<PosteriorDistribution> set;
    const std::size_t n = nd(rng);
    for (std::size_t j = 0; j < n; ++j) set.push_back(oracle::random_posterior(k, rng));
    const auto q1 = oracle::random_posterior(k, rng);
    const auto q2 = oracle::random_posterior(k, rng);
    const auto [a, b] = mean_kl_gap(set, q1, q2);
    detail::note(r, std::abs((a - b) - expected_log_ratio(set, q1, q2)));
    ++r.cases;
  }
  r.passed = r.worst <= r.tolerance;
  r.seconds = t.seconds();
  return r;
}

inline std::vector<CheckResult> run_all(const Options& o = {}) {
  return {check_jeffreys_equivalence(o), check_jeffreys_nonnegative(o), check_jeffreys_uniform_zero(o),
          check_loss_gradient(o),        check_network_gradient(o),     check_reductions(o),
          check_softmax(o),              check_metrics(o),              check_kl_gap(o)};
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

inline nlohmann::json to_json(const std::vector<CheckResult>& results) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& r : results) {
    checks.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"cases", r.cases},
                      {"worst", std::isfinite(r.worst) ? nlohmann::json(r.worst) : nlohmann::json("nan")},
                      {"tolerance", r.tolerance},
                      {"seconds", r.seconds}});
  }
  return {{"passed", all_passed(results)}, {"checks", checks}};
}

}  // namespace jeffreys::selftest
