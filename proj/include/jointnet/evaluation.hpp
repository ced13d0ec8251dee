#pragma once

// ROC areas against ground truth for the latent, individual and feature
// detection tasks, and deterministic regime sweeps.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jointnet/errors.hpp"
#include "jointnet/estimators.hpp"
#include "jointnet/parallel.hpp"
#include "jointnet/timecourse.hpp"

namespace jointnet {

enum class Task { latent, individual, feature };
inline constexpr std::array kAllTasks = {Task::latent, Task::individual, Task::feature};

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::latent: return "latent";
    case Task::individual: return "individual";
    case Task::feature: return "feature";
  }
  return "?";
}

// Mann-Whitney area: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half. O(N log N) via midranks.
inline double aur(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi < n && scores[order[hi]] == scores[order[lo]]) ++hi;
    const double midrank = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t k = lo; k < hi; ++k)
      if (labels[order[k]]) {
        positive_rank_sum += midrank;
        ++positives;
      }
    lo = hi;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw UndefinedAur("AUR needs both positive and negative labels");
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

namespace detail {

inline void append_slots(const Eigen::MatrixXd& scores, const Network& truth, std::vector<double>& s,
                         std::vector<std::uint8_t>& l) {
  for (int p = 0; p < truth.size(); ++p)
    for (int i = 0; i < truth.size(); ++i) {
      s.push_back(scores(i, p));
      l.push_back(truth.has_edge(i, p));
    }
}

}  // namespace detail

inline double network_aur(const Eigen::MatrixXd& scores, const Network& truth) {
  if (scores.rows() != truth.size() || scores.cols() != truth.size())
    throw InvalidArgument("score matrix does not match network size");
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  detail::append_slots(scores, truth, s, l);
  return aur(s, l);
}

enum class FeaturePooling { pooled, per_individual_mean };

// Latent: latent marginals vs G. Individual: mean over j of AUR vs G^j,
// skipping individuals whose network is empty or complete. Feature: F^j
// against the slots where G^j and G disagree.
inline double task_aur(const EdgePosterior& post, const GroundTruth& truth, Task task,
                       FeaturePooling pooling = FeaturePooling::pooled) {
  const int J = static_cast<int>(truth.individuals.size());
  if (task != Task::latent && static_cast<int>(post.individual.size()) != J)
    throw InvalidArgument("posterior and truth disagree on the number of individuals");
  switch (task) {
    case Task::latent: return network_aur(post.latent, truth.latent);
    case Task::individual: {
      double total = 0.0;
      int used = 0;
      for (int j = 0; j < J; ++j) {
        try {
          total += network_aur(post.individual[j], truth.individuals[j]);
          ++used;
        } catch (const UndefinedAur&) {
        }
      }
      if (used == 0) throw UndefinedAur("no individual network has both edges and non-edges");
      return total / used;
    }
    case Task::feature: {
      std::vector<double> s;
      std::vector<std::uint8_t> l;
      double total = 0.0;
      int used = 0;
      for (int j = 0; j < J; ++j) {
        Network diff(truth.latent.size());
        for (int p = 0; p < diff.size(); ++p)
          diff.parents[p] = ParentSet(truth.individuals[j].parents[p].bits() ^ truth.latent.parents[p].bits());
        if (pooling == FeaturePooling::pooled) {
          detail::append_slots(post.features[j], diff, s, l);
        } else {
          try {
            total += network_aur(post.features[j], diff);
            ++used;
          } catch (const UndefinedAur&) {
          }
        }
      }
      if (pooling == FeaturePooling::pooled) return aur(s, l);
      if (used == 0) throw UndefinedAur("no individual differs from the latent network");
      return total / used;
    }
  }
  throw InvalidArgument("unhandled task");
}

// Expected AUR of prior-only inference: h_eta for the latent task and
// 1 - h_eta - h_lambda + 2 h_eta h_lambda for individuals; none for features.
inline std::optional<double> analytic_prior_baseline(double h_eta, double h_lambda, Task task) {
  switch (task) {
    case Task::latent: return h_eta;
    case Task::individual: return 1.0 - h_eta - h_lambda + 2.0 * h_eta * h_lambda;
    case Task::feature: return std::nullopt;
  }
  return std::nullopt;
}

struct AurReport {
  std::size_t regime = 0;
  EstimatorKind estimator = EstimatorKind::JNI;
  Task task = Task::latent;
  double mean_aur = 0.0;
  double std_error = 0.0;
  int replicates = 0;  // replicates with a defined AUR
  int failures = 0;    // estimator failures plus undefined AURs
};

struct LedgerRow {
  std::size_t regime = 0;
  EstimatorKind estimator = EstimatorKind::JNI;
  Task task = Task::latent;
  int replicate = 0;
  double aur = 0.0;
};

struct RegimeSweep {
  std::vector<GenerationRegime> regimes;  // regime seeds are ignored; replicate seeds derive from master_seed
  std::vector<EstimatorKind> estimators;
  int replicates = 50;
  std::uint64_t master_seed = 1;
  Hyperparameters hp;
  double eni_threshold = 0.5;
  bool contaminate = false;
  FeaturePooling pooling = FeaturePooling::pooled;
  int workers = 1;
};

struct SweepResult {
  std::vector<LedgerRow> ledger;
  std::vector<AurReport> reports;
  std::vector<std::string> warnings;
};

inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t regime, int replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(regime), static_cast<std::uint32_t>(replicate)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline double standard_error(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (x.size() - 1)) / std::sqrt(static_cast<double>(x.size()));
}

// Optional callback receives (finished replicate count, total).
inline SweepResult run_sweep(const RegimeSweep& sweep,
                             const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  const std::size_t R = sweep.regimes.size();
  const std::size_t E = sweep.estimators.size();
  const std::size_t T = kAllTasks.size();
  const std::size_t reps = static_cast<std::size_t>(std::max(0, sweep.replicates));

  // slot (regime, replicate, estimator, task); NaN marks undefined or failed
  struct Cell {
    double value = std::nan("");
    bool failed = false;
    std::string note;
  };
  std::vector<Cell> cells(R * reps * E * T);
  auto at = [&](std::size_t r, std::size_t k, std::size_t e, std::size_t t) -> Cell& {
    return cells[((r * reps + k) * E + e) * T + t];
  };

  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(R * reps, sweep.workers, [&](std::size_t job) {
    const std::size_t r = job / reps;
    const std::size_t k = job % reps;
    GenerationRegime regime = sweep.regimes[r];
    regime.seed = replicate_seed(sweep.master_seed, r, static_cast<int>(k));
    auto [data, truth] = generate_population(regime);
    if (sweep.contaminate) data = contaminate(std::move(data), regime.seed ^ 0x9e3779b97f4a7c15ull);

    const ParentSpace space(regime.P, std::min(sweep.hp.max_parents, regime.P));
    std::optional<ScoreTable> scores;
    EstimatorOptions opt{sweep.hp, sweep.eni_threshold, 1};
    for (std::size_t e = 0; e < E; ++e) {
      const EstimatorKind kind = sweep.estimators[e];
      EdgePosterior post;
      try {
        if (needs_score_table(kind) && !scores) scores = build_score_table(data, space, sweep.hp.phi);
        post = run_estimator(kind, data, scores ? *scores : ScoreTable{}, space, truth.prior, opt);
      } catch (const std::exception& ex) {
        for (std::size_t t = 0; t < T; ++t) {
          at(r, k, e, t).failed = true;
          at(r, k, e, t).note = ex.what();
        }
        continue;
      }
      for (std::size_t t = 0; t < T; ++t) {
        try {
          at(r, k, e, t).value = task_aur(post, truth, kAllTasks[t], sweep.pooling);
        } catch (const UndefinedAur& ex) {
          at(r, k, e, t).note = ex.what();
        }
      }
    }
    const std::size_t finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(finished, R * reps);
    }
  });

  SweepResult result;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> values;
        int failures = 0;
        for (std::size_t k = 0; k < reps; ++k) {
          const Cell& c = at(r, k, e, t);
          if (std::isnan(c.value)) {
            ++failures;
            result.warnings.push_back("regime " + std::to_string(r + 1) + ", replicate " + std::to_string(k + 1) +
                                      ", " + std::string(to_string(sweep.estimators[e])) + ", " +
                                      std::string(to_string(kAllTasks[t])) + ": " +
                                      (c.failed ? "estimator failed: " : "excluded: ") + c.note);
            continue;
          }
          values.push_back(c.value);
          result.ledger.push_back({r, sweep.estimators[e], kAllTasks[t], static_cast<int>(k), c.value});
        }
        AurReport rep;
        rep.regime = r;
        rep.estimator = sweep.estimators[e];
        rep.task = kAllTasks[t];
        rep.replicates = static_cast<int>(values.size());
        rep.failures = failures;
        rep.mean_aur = values.empty() ? std::nan("") : std::accumulate(values.begin(), values.end(), 0.0) / values.size();
        rep.std_error = standard_error(values);
        result.reports.push_back(rep);
      }
  return result;
}

}  // namespace jointnet
