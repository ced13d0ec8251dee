#pragma once

// Interventional multi-individual time-course data and the autoregressive
// population simulator.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jointnet/errors.hpp"
#include "jointnet/graph.hpp"

namespace jointnet {

// Rows are time points, columns are variables.
struct TimeCourse {
  Eigen::MatrixXd values;
  std::optional<int> intervention_target;  // 0-based vertex inhibited for the whole course

  int length() const { return static_cast<int>(values.rows()); }
  int num_variables() const { return static_cast<int>(values.cols()); }
};

struct IndividualData {
  std::string id;
  std::vector<TimeCourse> courses;

  int sample_count() const {
    int n = 0;
    for (const auto& c : courses) n += c.length();
    return n;
  }
};

struct PopulationDataset {
  std::vector<IndividualData> individuals;
  int num_variables = 0;
  std::vector<std::string> variable_names;

  int size() const { return static_cast<int>(individuals.size()); }

  void validate() const {
    if (num_variables <= 0) throw InvalidArgument("dataset has no variables");
    if (individuals.empty()) throw InvalidArgument("dataset has no individuals");
    for (const auto& ind : individuals) {
      if (ind.courses.empty()) throw InvalidArgument("individual " + ind.id + " has no courses");
      for (const auto& c : ind.courses) {
        if (c.num_variables() != num_variables)
          throw InvalidArgument("individual " + ind.id + " has inconsistent variable count");
        if (c.length() < 2)
          throw InvalidArgument("individual " + ind.id + " has a course shorter than 2");
        if (!c.values.allFinite())
          throw InvalidArgument("individual " + ind.id + " has non-finite values");
        if (c.intervention_target && (*c.intervention_target < 0 || *c.intervention_target >= num_variables))
          throw InvalidArgument("individual " + ind.id + " has an out-of-range intervention target");
      }
    }
  }

  // Every course of every individual stacked into one pseudo-individual.
  IndividualData pooled() const {
    IndividualData all{"pooled", {}};
    for (const auto& ind : individuals)
      all.courses.insert(all.courses.end(), ind.courses.begin(), ind.courses.end());
    return all;
  }
};

struct GenerationRegime {
  int J = 10;
  int n = 5;
  int E = 1;
  int P = 10;
  double sigma = 0.2;
  double rho = 1.0;
  double h_eta = 0.73;
  double h_lambda = 0.98;
  bool interventions = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (J <= 0 || n < 2 || E <= 0 || P <= 0 || P > kMaxVertices)
      throw InvalidArgument("regime sizes must be positive (n >= 2, P <= 64)");
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be >= 0");
    if (!(rho > 0.0) || rho / P > 1.0) throw InvalidArgument("rho must satisfy 0 < rho/P <= 1");
    if (!(h_eta >= 0.5 && h_eta <= 1.0) || !(h_lambda >= 0.5 && h_lambda <= 1.0))
      throw InvalidArgument("h_eta and h_lambda must lie in [0.5, 1]");
  }
};

// betas[j](i, p) is the coefficient of y_i(t-1) in y_p(t).
struct GroundTruth {
  Network latent;
  std::vector<Network> individuals;
  Network prior;
  std::vector<Eigen::MatrixXd> betas;
  std::vector<Eigen::VectorXd> alphas;
};

inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw NumericalDegeneracy("eigenvalue solver failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

// One child stream per individual, derived from the master seed.
inline std::mt19937_64 child_stream(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x6a4e49u};
  return std::mt19937_64(seq);
}

// Keep each of the P*P slot statuses of `source` with probability `keep`.
template <class Rng>
Network perturb_slots(const Network& source, double keep, Rng& rng) {
  std::bernoulli_distribution flip(1.0 - keep);
  Network out = source;
  for (int p = 0; p < source.size(); ++p)
    for (int i = 0; i < source.size(); ++i)
      if (flip(rng)) {
        if (out.parents[p].contains(i))
          out.parents[p].erase(i);
        else
          out.parents[p].insert(i);
      }
  return out;
}

}  // namespace detail

// Draw order: latent edges, prior edges (master stream); then per individual
// from its child stream: edges, betas, alpha, initial states, noise, targets.
inline std::pair<PopulationDataset, GroundTruth> generate_population(const GenerationRegime& regime) {
  regime.validate();
  const int P = regime.P;

  std::mt19937_64 master(regime.seed);
  GroundTruth truth;
  truth.latent = Network(P);
  {
    std::bernoulli_distribution edge(regime.rho / P);
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < P; ++i)
        if (edge(master)) truth.latent.add_edge(i, p);
  }
  truth.prior = detail::perturb_slots(truth.latent, regime.h_eta, master);

  PopulationDataset data;
  data.num_variables = P;
  for (int v = 0; v < P; ++v) data.variable_names.push_back("v" + std::to_string(v + 1));

  for (int j = 0; j < regime.J; ++j) {
    auto rng = detail::child_stream(regime.seed, static_cast<std::uint64_t>(j));
    Network g = detail::perturb_slots(truth.latent, regime.h_lambda, rng);

    std::bernoulli_distribution sign(0.5);
    std::normal_distribution<double> magnitude(1.0, 0.1);
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(P, P);
    for (int p = 0; p < P; ++p)
      for (int i : g.parents[p].members()) beta(i, p) = (sign(rng) ? -1.0 : 1.0) * magnitude(rng);
    const double radius = spectral_radius(beta);
    if (radius > 0.0) beta /= radius;

    std::normal_distribution<double> standard(0.0, 1.0);
    Eigen::VectorXd alpha(P);
    for (int v = 0; v < P; ++v) alpha(v) = standard(rng);

    std::vector<Eigen::RowVectorXd> initial(regime.E, Eigen::RowVectorXd(P));
    for (auto& y0 : initial)
      for (int v = 0; v < P; ++v) y0(v) = standard(rng);

    std::vector<Eigen::MatrixXd> noise(regime.E, Eigen::MatrixXd::Zero(regime.n, P));
    for (auto& eps : noise)
      for (int t = 1; t < regime.n; ++t)
        for (int v = 0; v < P; ++v) eps(t, v) = regime.sigma * standard(rng);

    std::vector<std::optional<int>> targets(regime.E);
    if (regime.interventions) {
      std::uniform_int_distribution<int> pick(0, P - 1);
      for (auto& t : targets) t = pick(rng);
    }

    IndividualData ind{"ind" + std::to_string(j + 1), {}};
    for (int e = 0; e < regime.E; ++e) {
      // Perfect-out: the inhibited variable's outgoing coefficients vanish
      // for the whole course; its own readout follows the model unchanged.
      Eigen::MatrixXd effective = beta;
      if (targets[e]) effective.row(*targets[e]).setZero();

      TimeCourse course;
      course.intervention_target = targets[e];
      course.values.resize(regime.n, P);
      course.values.row(0) = initial[e];
      for (int t = 1; t < regime.n; ++t)
        course.values.row(t) =
            alpha.transpose() + course.values.row(t - 1) * effective + noise[e].row(t);
      ind.courses.push_back(std::move(course));
    }

    data.individuals.push_back(std::move(ind));
    truth.individuals.push_back(std::move(g));
    truth.betas.push_back(std::move(beta));
    truth.alphas.push_back(std::move(alpha));
  }
  return {std::move(data), std::move(truth)};
}

// Adds 0.95 N(0, 0.1^2) + 0.05 N(0, 10^2) noise to every observation, then
// replaces one uniformly chosen individual by standard Gaussian white noise.
inline PopulationDataset contaminate(PopulationDataset data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution outlier(0.05);
  std::normal_distribution<double> narrow(0.0, 0.1);
  std::normal_distribution<double> wide(0.0, 10.0);
  for (auto& ind : data.individuals)
    for (auto& course : ind.courses)
      for (Eigen::Index r = 0; r < course.values.rows(); ++r)
        for (Eigen::Index c = 0; c < course.values.cols(); ++c)
          course.values(r, c) += outlier(rng) ? wide(rng) : narrow(rng);

  if (data.individuals.empty()) return data;
  std::uniform_int_distribution<std::size_t> pick(0, data.individuals.size() - 1);
  auto& victim = data.individuals[pick(rng)];
  std::normal_distribution<double> white(0.0, 1.0);
  for (auto& course : victim.courses)
    for (Eigen::Index r = 0; r < course.values.rows(); ++r)
      for (Eigen::Index c = 0; c < course.values.cols(); ++c) course.values(r, c) = white(rng);
  return data;
}

}  // namespace jointnet
