#pragma once

#include <Eigen/Dense>

#include <random>

#include "jointnet/graph.hpp"
#include "jointnet/likelihood.hpp"
#include "jointnet/timecourse.hpp"

namespace jointnet::fixtures {

// Scores spread over a few nats so posteriors are neither flat nor degenerate.
inline ScoreTable random_scores(int J, const ParentSpace& space, std::uint64_t seed, double spread = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, spread);
  ScoreTable t(J, space.num_vertices(), space.size());
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline Network random_network(int P, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(density);
  Network g(P);
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < P; ++i)
      if (edge(rng)) g.add_edge(i, p);
  return g;
}

inline TimeCourse random_course(int n, int P, std::mt19937_64& rng, std::optional<int> target = std::nullopt) {
  std::normal_distribution<double> z(0.0, 1.0);
  TimeCourse c;
  c.values.resize(n, P);
  for (int t = 0; t < n; ++t)
    for (int v = 0; v < P; ++v) c.values(t, v) = z(rng);
  c.intervention_target = target;
  return c;
}

inline GenerationRegime small_regime(std::uint64_t seed) {
  GenerationRegime r;
  r.J = 3;
  r.n = 8;
  r.E = 2;
  r.P = 4;
  r.seed = seed;
  return r;
}

// Random view of up to 4 parents over 1-3 short courses, optionally with a
// duplicated predictor column.
inline RegressionView random_view(std::mt19937_64& rng, bool interventions, bool duplicate) {
  std::uniform_int_distribution<int> courses_d(1, 3), len_d(4, 10), p_d(2, 5);
  const int P = p_d(rng);
  const int E = courses_d(rng);
  IndividualData ind{"r", {}};
  std::uniform_int_distribution<int> var(0, P - 1);
  for (int e = 0; e < E; ++e) {
    std::optional<int> target;
    if (interventions) target = var(rng);
    ind.courses.push_back(fixtures::random_course(len_d(rng), P, rng, target));
  }
  const int target = var(rng);
  ParentSet parents;
  std::bernoulli_distribution pick(0.5);
  for (int i = 0; i < P && parents.size() < (duplicate ? 3 : 4); ++i)
    if (pick(rng)) parents.insert(i);
  RegressionView view = build_regression_view(ind, target, parents);
  if (duplicate) {
    const auto b = view.model_design.cols();
    Eigen::MatrixXd extended(view.n(), b + 1);
    extended.leftCols(b) = view.model_design;
    // duplicate an existing column, or the post-initial intercept when empty
    extended.col(b) = b > 0 ? Eigen::VectorXd(view.model_design.col(0)) : Eigen::VectorXd(view.common_design.col(1));
    view.model_design = extended;
  }
  return view;
}

}  // namespace jointnet::fixtures
