#pragma once

// Exact joint model averaging over the hierarchy
//
//   G0 --eta--> G --lambda--> G^1 ... G^J --> data
//
// with SHD Gibbs priors normalized over the in-degree restricted parent-set
// space. Everything factorizes over target vertices p, and for each p:
//
//   Phase I    f_j(G_p)   = log sum_{H} score_j(H) p(H | G_p)
//   latent     w(G_p)     = -eta shd(G_p, G0_p) + sum_j f_j(G_p)
//   Phase II   q_j(H)     = score_j(H) + log sum_{G_p} p(H | G_p) exp(
//                             -eta shd(G_p, G0_p) + sum_{k != j} f_k(G_p))
//   Phase III  edge marginals from the normalized w and q_j.
//
// All accumulation is in log space. An infinite eta or lambda is a mode flag
// that collapses the corresponding prior to a point mass.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jointnet/errors.hpp"
#include "jointnet/graph.hpp"
#include "jointnet/likelihood.hpp"
#include "jointnet/parallel.hpp"

namespace jointnet {

// Non-negative inverse temperature, or the symbolic infinite limit.
struct Strength {
  double value = 0.0;
  bool infinite = false;

  static Strength finite(double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("inverse temperature must be finite and >= 0");
    return {v, false};
  }
  static Strength infinity() { return {0.0, true}; }

  std::string to_string() const { return infinite ? "inf" : std::to_string(value); }
  friend bool operator==(const Strength&, const Strength&) = default;
};

struct Hyperparameters {
  Strength eta = Strength::finite(1.0);
  Strength lambda = Strength::finite(4.0);
  int max_parents = 3;
  PhiPolicy phi = PhiPolicy::empirical_bayes();
};

// Matrices are indexed (source i, target p).
struct EdgePosterior {
  Eigen::MatrixXd latent;
  std::vector<Eigen::MatrixXd> individual;
  std::vector<Eigen::MatrixXd> features;
};

// Exponentiated SHD kernel exp(-tau shd(g, h)) over a parent space.
class GibbsKernel {
 public:
  GibbsKernel(const ParentSpace& space, double tau) : space_(&space), tau_(tau) {
    if (!(tau >= 0.0)) throw InvalidArgument("inverse temperature must be >= 0");
    for (int d = 0; d <= kMaxVertices; ++d) {
      log_lut_[d] = tau == 0.0 ? 0.0 : -tau * d;
      lut_[d] = std::exp(log_lut_[d]);
    }
    const auto M = static_cast<Eigen::Index>(space.size());
    if (space.size() <= kDenseLimit) {
      dense_.resize(M, M);
      for (Eigen::Index g = 0; g < M; ++g)
        for (Eigen::Index h = 0; h < M; ++h) dense_(g, h) = lut_[shd(space[g], space[h])];
    }
    std::vector<double> zero(space.size(), 0.0);
    log_normalizer_.resize(space.size());
    apply(zero, log_normalizer_);
  }

  double tau() const { return tau_; }

  // out[g] = log sum_h exp(-tau shd(g, h) + v[h]).
  void apply(std::span<const double> v, std::span<double> out) const {
    const std::size_t M = space_->size();
    double top = -std::numeric_limits<double>::infinity();
    for (double x : v) top = std::max(top, x);
    if (top == -std::numeric_limits<double>::infinity()) {
      std::fill(out.begin(), out.end(), top);
      return;
    }
    Eigen::VectorXd scaled(static_cast<Eigen::Index>(M));
    for (std::size_t h = 0; h < M; ++h) scaled[h] = std::exp(v[h] - top);

    Eigen::VectorXd sums;
    if (dense_.size() > 0) {
      sums.noalias() = dense_ * scaled;
    } else {
      sums.resize(static_cast<Eigen::Index>(M));
      const auto& sets = space_->sets();
      for (std::size_t g = 0; g < M; ++g) {
        double s = 0.0;
        for (std::size_t h = 0; h < M; ++h) s += lut_[shd(sets[g], sets[h])] * scaled[h];
        sums[g] = s;
      }
    }
    for (std::size_t g = 0; g < M; ++g) {
      // Rows that would lose precision to underflow are re-summed with
      // their own maximum.
      out[g] = sums[g] > kUnderflowGuard ? top + std::log(sums[g]) : exact_row(v, g);
    }
  }

  // log sum_h exp(-tau shd(g, h))
  double log_normalizer(std::size_t g) const { return log_normalizer_[g]; }
  std::span<const double> log_normalizers() const { return log_normalizer_; }

 private:
  static constexpr std::size_t kDenseLimit = 2048;
  static constexpr double kUnderflowGuard = 1e-250;

  double exact_row(std::span<const double> v, std::size_t g) const {
    const auto& sets = space_->sets();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < sets.size(); ++h)
      top = std::max(top, v[h] + log_lut_[shd(sets[g], sets[h])]);
    if (top == -std::numeric_limits<double>::infinity()) return top;
    double s = 0.0;
    for (std::size_t h = 0; h < sets.size(); ++h) s += std::exp(v[h] + log_lut_[shd(sets[g], sets[h])] - top);
    return top + std::log(s);
  }

  const ParentSpace* space_;
  double tau_;
  std::array<double, kMaxVertices + 1> lut_{};
  std::array<double, kMaxVertices + 1> log_lut_{};
  Eigen::MatrixXd dense_;
  std::vector<double> log_normalizer_;
};

// Wall-clock seconds spent in each phase of one inference call.
struct PhaseTimings {
  double phase1 = 0.0;
  double latent = 0.0;
  double phase2 = 0.0;
};

// Per-target caches. phase1 is laid out [p][j][latent set], phase2 holds the
// normalized log posterior of each individual parent set, [p][j][set].
struct PhaseCache {
  int P = 0;
  int J = 0;
  std::size_t M = 0;
  std::vector<double> phase1;
  std::vector<double> phase2;

  std::size_t offset(int p, int j) const {
    return (static_cast<std::size_t>(p) * J + static_cast<std::size_t>(j)) * M;
  }
  std::span<const double> phase1_row(int p, int j) const { return {phase1.data() + offset(p, j), M}; }
  std::span<const double> phase2_row(int p, int j) const { return {phase2.data() + offset(p, j), M}; }
};

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (top == -std::numeric_limits<double>::infinity()) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

// Normalizes log weights in place and writes edge marginals for one target
// into column `p` of `out`.
inline void normalize_and_marginalize(std::span<double> log_weights, const ParentSpace& space,
                                      Eigen::MatrixXd& out, int p) {
  const double total = log_sum_exp(log_weights);
  if (!std::isfinite(total))
    throw NumericalDegeneracy("posterior over parent sets of vertex " + std::to_string(p + 1) +
                              " has no finite mass");
  out.col(p).setZero();
  for (std::size_t g = 0; g < space.size(); ++g) {
    log_weights[g] -= total;
    const double w = std::exp(log_weights[g]);
    for (std::uint64_t b = space[g].bits(); b; b &= b - 1) out(std::countr_zero(b), p) += w;
  }
}

inline Eigen::MatrixXd indicator(const Network& g) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g.size(), g.size());
  for (int p = 0; p < g.size(); ++p)
    for (int i : g.parents[p].members()) m(i, p) = 1.0;
  return m;
}

inline void check_inputs(const ScoreTable& scores, const ParentSpace& space, const Network& prior) {
  if (scores.variables() != space.num_vertices() || scores.sets() != space.size())
    throw InvalidArgument("score table does not match the parent space");
  if (prior.size() != space.num_vertices())
    throw InvalidArgument("prior network size does not match the parent space");
  prior.validate();
  for (double v : scores.values())
    if (!std::isfinite(v)) throw NumericalDegeneracy("score table contains non-finite entries");
}

// Individual j's posterior over its own parent sets of p when the latent
// network is pinned to the prior (eta infinite): score_j(H) - lambda shd(H, G0_p).
inline void independent_log_posterior(const ScoreTable& scores, const ParentSpace& space, Strength lambda,
                                      const Network& prior, int j, int p, std::span<double> out) {
  const ParentSet anchor = prior.parents[p];
  for (std::size_t h = 0; h < space.size(); ++h) {
    if (lambda.infinite)
      out[h] = space[h] == anchor ? scores.at(j, p, h) : -std::numeric_limits<double>::infinity();
    else
      out[h] = scores.at(j, p, h) + log_prior_weight(space[h], anchor, lambda.value);
  }
}

}  // namespace detail

// Joint inference for one configuration. Immutable after construction;
// `workers` only affects wall-clock time, never the numbers.
class JointEngine {
 public:
  JointEngine(const ParentSpace& space, Hyperparameters hp, int workers = 1)
      : space_(&space), hp_(std::move(hp)), workers_(std::max(1, workers)) {
    if (!hp_.lambda.infinite) lambda_kernel_.emplace(space, hp_.lambda.value);
  }

  const Hyperparameters& hyperparameters() const { return hp_; }

  // Phase I: log sum over individual sets of score times p(H | G_p).
  PhaseCache phase1(const ScoreTable& scores) const {
    PhaseCache cache{scores.variables(), scores.individuals(), space_->size(), {}, {}};
    cache.phase1.resize(static_cast<std::size_t>(cache.P) * cache.J * cache.M);
    parallel_for(static_cast<std::size_t>(cache.P) * cache.J, workers_, [&](std::size_t cell) {
      const int p = static_cast<int>(cell / cache.J);
      const int j = static_cast<int>(cell % cache.J);
      std::span<double> out(cache.phase1.data() + cache.offset(p, j), cache.M);
      const auto row = scores.row(j, p);
      if (hp_.lambda.infinite) {
        std::copy(row.begin(), row.end(), out.begin());
        return;
      }
      lambda_kernel_->apply(row, out);
      const auto z = lambda_kernel_->log_normalizers();
      for (std::size_t g = 0; g < cache.M; ++g) out[g] -= z[g];
    });
    return cache;
  }

  EdgePosterior infer(const ScoreTable& scores, const Network& prior, PhaseCache* keep = nullptr,
                      PhaseTimings* timings = nullptr) const {
    using clock = std::chrono::steady_clock;
    auto mark = clock::now();
    auto lap = [&](double PhaseTimings::*field) {
      const auto now = clock::now();
      if (timings) timings->*field = std::chrono::duration<double>(now - mark).count();
      mark = now;
    };
    detail::check_inputs(scores, *space_, prior);
    const int P = scores.variables();
    const int J = scores.individuals();
    const std::size_t M = space_->size();

    EdgePosterior post;
    post.individual.assign(J, Eigen::MatrixXd::Zero(P, P));

    if (hp_.eta.infinite) {
      post.latent = detail::indicator(prior);
      if (hp_.lambda.infinite) {
        for (auto& m : post.individual) m = post.latent;
      } else {
        independent(scores, prior, post);
      }
      lap(&PhaseTimings::phase2);
      post.features = feature_matrices(post);
      return post;
    }

    PhaseCache cache = phase1(scores);
    lap(&PhaseTimings::phase1);
    post.latent = Eigen::MatrixXd::Zero(P, P);
    std::vector<double> latent_log(static_cast<std::size_t>(P) * M);
    parallel_for(static_cast<std::size_t>(P), workers_, [&](std::size_t pi) {
      const int p = static_cast<int>(pi);
      std::span<double> w(latent_log.data() + pi * M, M);
      prior_log_weights(prior.parents[p], w);
      for (int j = 0; j < J; ++j) {
        const auto f = cache.phase1_row(p, j);
        for (std::size_t g = 0; g < M; ++g) w[g] += f[g];
      }
      std::vector<double> scratch(w.begin(), w.end());
      detail::normalize_and_marginalize(scratch, *space_, post.latent, p);
    });
    lap(&PhaseTimings::latent);

    cache.phase2.resize(cache.phase1.size());
    if (hp_.lambda.infinite) {
      for (auto& m : post.individual) m = post.latent;
    } else {
      // Phase II/III per (p, j). Each cell writes its own column. The product
      // over k != j is summed directly rather than by subtracting f_j from
      // the total.
      parallel_for(static_cast<std::size_t>(P) * J, workers_, [&](std::size_t cell) {
        const int p = static_cast<int>(cell / J);
        const int j = static_cast<int>(cell % J);
        std::vector<double> a(M);
        prior_log_weights(prior.parents[p], a);
        const auto z = lambda_kernel_->log_normalizers();
        for (std::size_t g = 0; g < M; ++g) {
          double others = 0.0;
          for (int k = 0; k < J; ++k)
            if (k != j) others += cache.phase1[cache.offset(p, k) + g];
          a[g] += others - z[g];
        }
        std::span<double> q(cache.phase2.data() + cache.offset(p, j), M);
        lambda_kernel_->apply(a, q);
        for (std::size_t h = 0; h < M; ++h) q[h] += scores.at(j, p, h);
        detail::normalize_and_marginalize(q, *space_, post.individual[j], p);
      });
    }
    lap(&PhaseTimings::phase2);
    post.features = feature_matrices(post);
    if (keep) *keep = std::move(cache);
    return post;
  }

  static std::vector<Eigen::MatrixXd> feature_matrices(const EdgePosterior& post) {
    std::vector<Eigen::MatrixXd> f;
    f.reserve(post.individual.size());
    for (const auto& m : post.individual) f.push_back((m - post.latent).cwiseAbs());
    return f;
  }

 private:
  // -eta shd(G_p, G0_p); the normalizer is constant in G_p and cancels.
  void prior_log_weights(ParentSet anchor, std::span<double> out) const {
    for (std::size_t g = 0; g < space_->size(); ++g)
      out[g] = log_prior_weight((*space_)[g], anchor, hp_.eta.value);
  }

  void independent(const ScoreTable& scores, const Network& prior, EdgePosterior& post) const {
    const int P = scores.variables();
    const int J = scores.individuals();
    parallel_for(static_cast<std::size_t>(P) * J, workers_, [&](std::size_t cell) {
      const int p = static_cast<int>(cell / J);
      const int j = static_cast<int>(cell % J);
      std::vector<double> q(space_->size());
      detail::independent_log_posterior(scores, *space_, hp_.lambda, prior, j, p, q);
      detail::normalize_and_marginalize(q, *space_, post.individual[j], p);
    });
  }

  const ParentSpace* space_;
  Hyperparameters hp_;
  int workers_;
  std::optional<GibbsKernel> lambda_kernel_;
};

inline PhaseCache phase1(const ScoreTable& scores, const ParentSpace& space, const Hyperparameters& hp) {
  return JointEngine(space, hp).phase1(scores);
}

inline Eigen::MatrixXd latent_edge_marginals(const ScoreTable& scores, const ParentSpace& space,
                                             const Hyperparameters& hp, const Network& prior) {
  return JointEngine(space, hp).infer(scores, prior).latent;
}

inline std::vector<Eigen::MatrixXd> individual_edge_marginals(const ScoreTable& scores, const ParentSpace& space,
                                                              const Hyperparameters& hp, const Network& prior) {
  return JointEngine(space, hp).infer(scores, prior).individual;
}

// F^j = |individual_j - latent|
inline std::vector<Eigen::MatrixXd> feature_statistics(const EdgePosterior& posterior) {
  return JointEngine::feature_matrices(posterior);
}

// Both sides of sum_{x_1..x_I} prod_i f_i(x_i) = prod_i sum_x f_i(x), the
// left by explicit enumeration of the product domain.
inline std::pair<double, double> sum_product_identity_check(const std::vector<std::vector<double>>& factors) {
  double right = 1.0;
  for (const auto& f : factors) {
    double s = 0.0;
    for (double x : f) s += x;
    right *= s;
  }

  double left = 0.0;
  std::vector<std::size_t> idx(factors.size(), 0);
  for (const auto& f : factors)
    if (f.empty()) return {0.0, right};
  while (true) {
    double term = 1.0;
    for (std::size_t i = 0; i < factors.size(); ++i) term *= factors[i][idx[i]];
    left += term;
    std::size_t i = 0;
    while (i < factors.size() && ++idx[i] == factors[i].size()) idx[i++] = 0;
    if (i == factors.size()) break;
  }
  return {left, right};
}

}  // namespace jointnet
