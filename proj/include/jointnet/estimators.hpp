#pragma once

// The estimators compared by the evaluation harness. All return an
// EdgePosterior; only Correlation produces rank scores that are not
// posterior probabilities.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "jointnet/engine.hpp"
#include "jointnet/errors.hpp"
#include "jointnet/graph.hpp"
#include "jointnet/likelihood.hpp"
#include "jointnet/timecourse.hpp"

namespace jointnet {

enum class EstimatorKind { JNI, ANI, INI, ENI, Monolithic, Correlation, PriorOnly };

inline constexpr std::array kAllEstimators = {EstimatorKind::JNI,        EstimatorKind::ANI,
                                              EstimatorKind::INI,        EstimatorKind::ENI,
                                              EstimatorKind::Monolithic, EstimatorKind::Correlation,
                                              EstimatorKind::PriorOnly};

inline std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::JNI: return "jni";
    case EstimatorKind::ANI: return "ani";
    case EstimatorKind::INI: return "ini";
    case EstimatorKind::ENI: return "eni";
    case EstimatorKind::Monolithic: return "monolithic";
    case EstimatorKind::Correlation: return "correlation";
    case EstimatorKind::PriorOnly: return "prior";
  }
  return "?";
}

inline EstimatorKind parse_estimator(std::string_view name) {
  for (auto k : kAllEstimators)
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

namespace detail {

inline void average_latent(EdgePosterior& post) {
  post.latent = Eigen::MatrixXd::Zero(post.individual.front().rows(), post.individual.front().cols());
  for (const auto& m : post.individual) post.latent += m;
  post.latent /= static_cast<double>(post.individual.size());
  post.features = feature_statistics(post);
}

}  // namespace detail

inline EdgePosterior run_jni(const ScoreTable& scores, const ParentSpace& space, const Network& prior,
                             const Hyperparameters& hp, int workers = 1) {
  return JointEngine(space, hp, workers).infer(scores, prior);
}

// One shared network with individual parameters: the lambda -> infinity mode.
inline EdgePosterior run_ani(const ScoreTable& scores, const ParentSpace& space, const Network& prior,
                             Hyperparameters hp, int workers = 1) {
  hp.lambda = Strength::infinity();
  return JointEngine(space, hp, workers).infer(scores, prior);
}

// Separate inference per individual against the prior network with strength
// lambda (the eta -> infinity mode); the latent estimate is the unweighted
// average of the individual marginals.
inline EdgePosterior run_ini(const ScoreTable& scores, const ParentSpace& space, const Network& prior,
                             Hyperparameters hp, int workers = 1) {
  hp.eta = Strength::infinity();
  EdgePosterior post = JointEngine(space, hp, workers).infer(scores, prior);
  detail::average_latent(post);
  return post;
}

inline Network threshold_network(const Eigen::MatrixXd& marginals, double threshold) {
  Network g(static_cast<int>(marginals.cols()));
  for (int p = 0; p < g.size(); ++p)
    for (int i = 0; i < g.size(); ++i)
      if (marginals(i, p) > threshold) g.add_edge(i, p);
  return g;
}

// ANI estimate of the latent network, thresholded, then reused as the prior
// network for INI.
inline EdgePosterior run_eni(const ScoreTable& scores, const ParentSpace& space, const Network& prior,
                             const Hyperparameters& hp, double threshold = 0.5, int workers = 1) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("ENI threshold must lie in (0, 1)");
  const EdgePosterior aggregated = run_ani(scores, space, prior, hp, workers);
  return run_ini(scores, space, threshold_network(aggregated.latent, threshold), hp, workers);
}

// All courses pooled into one individual with one parameter set; a single
// network inferred against the prior with strength eta.
inline EdgePosterior run_monolithic(const PopulationDataset& data, const ParentSpace& space, const Network& prior,
                                    const Hyperparameters& hp, int workers = 1) {
  PopulationDataset pooled;
  pooled.num_variables = data.num_variables;
  pooled.individuals.push_back(data.pooled());
  const ScoreTable table = build_score_table(pooled, space, hp.phi, workers);

  Hyperparameters single = hp;
  single.eta = Strength::infinity();
  single.lambda = hp.eta;
  const EdgePosterior one = JointEngine(space, single, workers).infer(table, prior);

  EdgePosterior post;
  post.latent = one.individual.front();
  post.individual.assign(data.individuals.size(), post.latent);
  post.features = feature_statistics(post);
  return post;
}

// |Pearson correlation| between y_i(t-1) and y_p(t) over an individual's
// transitions; zero when either side has no variance.
inline Eigen::MatrixXd lagged_correlation(const IndividualData& ind, int P) {
  Eigen::Index transitions = 0;
  for (const auto& c : ind.courses) {
    if (c.length() < 3) throw InvalidArgument("correlation estimator needs courses of length >= 3");
    transitions += c.length() - 1;
  }
  Eigen::MatrixXd lagged(transitions, P), current(transitions, P);
  Eigen::Index row = 0;
  for (const auto& c : ind.courses) {
    const Eigen::Index m = c.length() - 1;
    lagged.middleRows(row, m) = c.values.topRows(m);
    current.middleRows(row, m) = c.values.bottomRows(m);
    row += m;
  }
  lagged.rowwise() -= lagged.colwise().mean();
  current.rowwise() -= current.colwise().mean();
  const Eigen::VectorXd lagged_norm = lagged.colwise().norm();
  const Eigen::VectorXd current_norm = current.colwise().norm();
  const Eigen::MatrixXd cross = lagged.transpose() * current;

  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(P, P);
  constexpr double kFlat = 1e-12;
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < P; ++i) {
      const double scale = lagged_norm[i] * current_norm[p];
      if (lagged_norm[i] > kFlat && current_norm[p] > kFlat)
        r(i, p) = std::min(1.0, std::abs(cross(i, p)) / scale);
    }
  return r;
}

inline EdgePosterior run_correlation(const PopulationDataset& data) {
  data.validate();
  EdgePosterior post;
  for (const auto& ind : data.individuals) post.individual.push_back(lagged_correlation(ind, data.num_variables));
  detail::average_latent(post);
  return post;
}

// Prior marginals only: the engine on a constant score table.
inline EdgePosterior run_prior_only(const ParentSpace& space, const Network& prior, const Hyperparameters& hp,
                                    int individuals, int workers = 1) {
  const ScoreTable flat(individuals, space.num_vertices(), space.size());
  return JointEngine(space, hp, workers).infer(flat, prior);
}

struct EstimatorOptions {
  Hyperparameters hp;
  double eni_threshold = 0.5;
  int workers = 1;
};

// `scores` must be the per-individual table of `data` over `space`.
inline EdgePosterior run_estimator(EstimatorKind kind, const PopulationDataset& data, const ScoreTable& scores,
                                   const ParentSpace& space, const Network& prior, const EstimatorOptions& opt) {
  switch (kind) {
    case EstimatorKind::JNI: return run_jni(scores, space, prior, opt.hp, opt.workers);
    case EstimatorKind::ANI: return run_ani(scores, space, prior, opt.hp, opt.workers);
    case EstimatorKind::INI: return run_ini(scores, space, prior, opt.hp, opt.workers);
    case EstimatorKind::ENI: return run_eni(scores, space, prior, opt.hp, opt.eni_threshold, opt.workers);
    case EstimatorKind::Monolithic: return run_monolithic(data, space, prior, opt.hp, opt.workers);
    case EstimatorKind::Correlation: return run_correlation(data);
    case EstimatorKind::PriorOnly: return run_prior_only(space, prior, opt.hp, data.size(), opt.workers);
  }
  throw InvalidArgument("unhandled estimator");
}

inline bool needs_score_table(EstimatorKind k) {
  return k == EstimatorKind::JNI || k == EstimatorKind::ANI || k == EstimatorKind::INI || k == EstimatorKind::ENI;
}

}  // namespace jointnet
