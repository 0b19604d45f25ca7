#pragma once

// Synthetic "speakers": unit-norm prototype directions with isotropic Gaussian
// within-speaker noise. Out-of-domain conditions are modeled by a DomainShift
// (rotation + bias + noise inflation) applied to every utterance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "jeffreys/dataset.hpp"
#include "jeffreys/errors.hpp"
#include "jeffreys/rng.hpp"

namespace jeffreys {

struct SpeakerPrototype {
  int id = 0;
  Vector mean_direction;  // unit norm
  double within_spread = 0.0;
};

struct DomainShift {
  Matrix rotation;  // orthogonal
  Vector bias;
  double noise_scale = 1.0;

  static DomainShift identity(int dim) { return {Matrix::Identity(dim, dim), Vector::Zero(dim), 1.0}; }
};

// Severity knob for make_shift. Each of the floor(dim/2) rotation planes gets
// an angle drawn uniformly from [angle_min_fraction * max_angle, max_angle].
struct ShiftSeverity {
  double max_angle = 0.0;  // radians
  double noise_scale = 1.0;
  double bias_norm = 0.0;
  double angle_min_fraction = 0.5;

  bool is_identity() const { return max_angle == 0.0 && noise_scale == 1.0 && bias_norm == 0.0; }
};

struct Trial {
  std::size_t a = 0;
  std::size_t b = 0;
  bool is_target = false;

  bool operator==(const Trial&) const = default;
};

struct TrialList {
  std::vector<Trial> trials;

  std::size_t size() const { return trials.size(); }
  std::size_t target_count() const {
    return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.is_target; }));
  }
};

namespace detail {

inline Vector gaussian_vector(int dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = g(rng);
  return v;
}

}  // namespace detail

// Prototype directions are normalized Gaussian draws, i.e. uniform on the unit
// sphere. With 0 < speaker_dim < input_dim the draw is confined to the leading
// speaker_dim coordinates (uniform on the sphere of that subspace) and the
// remaining coordinates carry only within-speaker noise. Ids run first_id,
// first_id + 1, ...
inline std::vector<SpeakerPrototype> generate_speakers(int n, int input_dim, double spread, std::uint64_t seed,
                                                       int first_id = 0, int speaker_dim = 0) {
  if (n < 2) throw DomainError("need at least two speakers");
  if (input_dim < 1) throw DomainError("input_dim must be >= 1");
  if (!(spread >= 0.0)) throw DomainError("spread must be nonnegative");
  if (speaker_dim < 0 || speaker_dim > input_dim) throw DomainError("speaker_dim must lie in [0, input_dim]");
  const int active = speaker_dim == 0 ? input_dim : speaker_dim;
  Rng rng = make_rng(seed, stream::kSpeakers);
  std::vector<SpeakerPrototype> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vector v = detail::gaussian_vector(active, rng);
    double norm = v.norm();
    while (norm < 1e-12) {
      v = detail::gaussian_vector(active, rng);
      norm = v.norm();
    }
    Vector dir = Vector::Zero(input_dim);
    dir.head(active) = v / norm;
    out.push_back({first_id + i, std::move(dir), spread});
  }
  return out;
}

// Haar-random orthogonal matrix: QR of a Gaussian matrix, columns of Q
// sign-corrected by sign(diag R).
inline Matrix random_orthogonal(int dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) a(i, j) = g(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

// R = Q G Q^T where Q is a random orthonormal basis and G rotates each
// consecutive coordinate plane of that basis by its own angle.
inline DomainShift make_shift(int dim, const ShiftSeverity& sev, std::uint64_t seed) {
  if (dim < 1) throw DomainError("dim must be >= 1");
  if (!(sev.noise_scale > 0.0) || !(sev.max_angle >= 0.0) || !(sev.bias_norm >= 0.0)) {
    throw DomainError("invalid shift severity");
  }
  if (sev.is_identity()) return DomainShift::identity(dim);
  Rng rng = make_rng(seed, stream::kShift);
  const Matrix q = random_orthogonal(dim, rng);
  Matrix givens = Matrix::Identity(dim, dim);
  std::uniform_real_distribution<double> angle(sev.angle_min_fraction * sev.max_angle, sev.max_angle);
  for (int p = 0; p + 1 < dim; p += 2) {
    const double t = sev.max_angle > 0.0 ? angle(rng) : 0.0;
    givens(p, p) = std::cos(t);
    givens(p, p + 1) = -std::sin(t);
    givens(p + 1, p) = std::sin(t);
    givens(p + 1, p + 1) = std::cos(t);
  }
  DomainShift s;
  s.rotation = q * givens * q.transpose();
  Vector dir = detail::gaussian_vector(dim, rng);
  s.bias = dir.norm() > 0.0 ? Vector(dir * (sev.bias_norm / dir.norm())) : Vector(Vector::Zero(dim));
  s.noise_scale = sev.noise_scale;
  return s;
}

// x = R (mean + spread * noise_scale * g) + bias, g ~ N(0, I); labels are the
// speaker ids. Rows are grouped by speaker in input order.
inline LabeledSet sample_utterances(std::span<const SpeakerPrototype> speakers, int per_speaker,
                                    const DomainShift& shift, std::uint64_t seed, std::string domain = "in_domain") {
  if (per_speaker < 1) throw DomainError("per_speaker must be >= 1");
  if (speakers.empty()) throw DomainError("no speakers");
  const auto dim = speakers.front().mean_direction.size();
  if (shift.rotation.rows() != dim || shift.rotation.cols() != dim || shift.bias.size() != dim) {
    throw DimensionMismatch("domain shift does not match speaker dimension");
  }
  Rng rng = make_rng(seed, stream::kUtterances);
  LabeledSet out;
  out.domain = std::move(domain);
  out.features.resize(static_cast<Eigen::Index>(speakers.size()) * per_speaker, dim);
  out.labels.reserve(speakers.size() * static_cast<std::size_t>(per_speaker));
  Eigen::Index row = 0;
  for (const SpeakerPrototype& s : speakers) {
    const double sigma = s.within_spread * shift.noise_scale;
    for (int u = 0; u < per_speaker; ++u) {
      const Vector g = detail::gaussian_vector(static_cast<int>(dim), rng);
      const Vector clean = s.mean_direction + sigma * g;
      out.features.row(row++) = (shift.rotation * clean + shift.bias).transpose();
      out.labels.push_back(s.id);
    }
  }
  return out;
}

namespace detail {

inline std::uint64_t pair_key(std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

}  // namespace detail

// Distinct unordered pairs: target pairs share a label, non-target pairs do
// not. Never pairs an utterance with itself. Output order is shuffled.
//
// With same_class_balance, target pairs first pick a speaker uniformly, then
// two of its utterances; otherwise speakers are hit in proportion to their
// utterance count.
inline TrialList make_trials(std::span<const int> labels, std::size_t n_target, std::size_t n_nontarget,
                             std::uint64_t seed, bool same_class_balance = false) {
  const std::size_t n = labels.size();
  if (n >= (std::size_t{1} << 32)) throw InsufficientData("too many utterances for pair encoding");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < n; ++i) by_label[labels[i]].push_back(i);

  std::vector<const std::vector<std::size_t>*> groups;  // groups with >= 2 members
  std::vector<std::size_t> in_group;                    // utterances belonging to such groups
  std::vector<std::size_t> group_of(n, 0);
  std::uint64_t avail_target = 0;
  for (const auto& [label, idx] : by_label) {
    if (idx.size() < 2) continue;
    for (std::size_t i : idx) {
      group_of[i] = groups.size();
      in_group.push_back(i);
    }
    groups.push_back(&idx);
    avail_target += static_cast<std::uint64_t>(idx.size()) * (idx.size() - 1) / 2;
  }
  const std::uint64_t all_pairs = static_cast<std::uint64_t>(n) * (n > 0 ? n - 1 : 0) / 2;
  const std::uint64_t avail_nontarget = all_pairs - avail_target;
  if (n_target > avail_target) {
    throw InsufficientData("requested " + std::to_string(n_target) + " target pairs, only " +
                           std::to_string(avail_target) + " exist");
  }
  if (n_nontarget > avail_nontarget) {
    throw InsufficientData("requested " + std::to_string(n_nontarget) + " non-target pairs, only " +
                           std::to_string(avail_nontarget) + " exist");
  }

  Rng rng = make_rng(seed, stream::kTrials);
  TrialList out;
  out.trials.reserve(n_target + n_nontarget);

  auto enumerate_and_take = [&](bool target, std::size_t count) {
    std::vector<Trial> all;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if ((labels[a] == labels[b]) == target) all.push_back({a, b, target});
      }
    }
    std::shuffle(all.begin(), all.end(), rng);
    out.trials.insert(out.trials.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  };

  // Rejection sampling while the request is at most half the pool; enumeration
  // otherwise, or when rejection stalls.
  auto sample = [&](bool target, std::size_t count, std::uint64_t avail) {
    if (count == 0) return;
    if (2 * static_cast<std::uint64_t>(count) > avail) {
      enumerate_and_take(target, count);
      return;
    }
    std::unordered_set<std::uint64_t> seen;
    std::vector<Trial> picked;
    picked.reserve(count);
    const std::size_t max_attempts = 50 * count + 1000;
    std::size_t attempts = 0;
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    while (picked.size() < count && attempts++ < max_attempts) {
      std::size_t a = 0;
      std::size_t b = 0;
      if (target) {
        const std::vector<std::size_t>* g = nullptr;
        if (same_class_balance) {
          g = groups[std::uniform_int_distribution<std::size_t>(0, groups.size() - 1)(rng)];
          std::uniform_int_distribution<std::size_t> member(0, g->size() - 1);
          a = (*g)[member(rng)];
          b = (*g)[member(rng)];
        } else {
          a = in_group[std::uniform_int_distribution<std::size_t>(0, in_group.size() - 1)(rng)];
          g = groups[group_of[a]];
          b = (*g)[std::uniform_int_distribution<std::size_t>(0, g->size() - 1)(rng)];
        }
      } else {
        a = any(rng);
        b = any(rng);
        if (labels[a] == labels[b]) continue;
      }
      if (a == b) continue;
      if (!seen.insert(detail::pair_key(a, b)).second) continue;
      picked.push_back({std::min(a, b), std::max(a, b), target});
    }
    if (picked.size() < count) {
      enumerate_and_take(target, count);
      return;
    }
    out.trials.insert(out.trials.end(), picked.begin(), picked.end());
  };

  sample(true, n_target, avail_target);
  sample(false, n_nontarget, avail_nontarget);
  std::shuffle(out.trials.begin(), out.trials.end(), rng);
  return out;
}

// Splits `total` trials 1:4 target:non-target.
inline TrialList make_trials(std::span<const int> labels, std::size_t total, std::uint64_t seed) {
  const std::size_t n_target = total / 5;
  return make_trials(labels, n_target, total - n_target, seed, false);
}

}  // namespace jeffreys
