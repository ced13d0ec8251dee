#pragma once

// Local scores for the linear autoregressive DBN: regression design
// construction with perfect-out fixed-effect interventions, the closed-form
// g-prior marginal likelihood, conditional empirical-Bayes selection of the
// g-prior scale, and the cached score table.
//
// log score = -(b/2) log(phi + 1) - ((n - a)/2) log(Q - phi/(phi + 1) R)
//   Q = y'(I - P0) y            residual after the common design X0
//   R = y' PG y                 PG projects onto (I - P0) XG
// with a and b the effective column ranks of X0 and (I - P0) XG.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "jointnet/errors.hpp"
#include "jointnet/graph.hpp"
#include "jointnet/parallel.hpp"
#include "jointnet/timecourse.hpp"

namespace jointnet {

inline constexpr double kRankTolerance = 1e-10;

struct PhiPolicy {
  enum class Mode { empirical_bayes, fixed };

  Mode mode = Mode::empirical_bayes;
  double fixed_value = 1.0;
  double phi_min = 1e-6;
  double phi_max = 1e6;

  static PhiPolicy empirical_bayes() { return {}; }
  static PhiPolicy fixed(double value) {
    if (!(value > 0.0)) throw InvalidArgument("fixed phi must be positive");
    PhiPolicy p;
    p.mode = Mode::fixed;
    p.fixed_value = value;
    return p;
  }
};

struct RegressionView {
  Eigen::VectorXd response;
  Eigen::MatrixXd common_design;  // X0: initial and post-initial intercepts, then fixed effects
  Eigen::MatrixXd model_design;   // XG: lagged parents, initial rows zero

  int n() const { return static_cast<int>(response.size()); }
  int a() const { return static_cast<int>(common_design.cols()); }
  int b() const { return static_cast<int>(model_design.cols()); }
};

// Sufficient quantities of the marginal likelihood for one model.
struct ProjectionStats {
  int n = 0;
  int a = 0;  // effective rank of X0
  int b = 0;  // effective rank of (I - P0) XG
  double Q = 0.0;
  double R = 0.0;
  double yy = 0.0;  // squared norm of the response, the scale for degeneracy checks
};

namespace detail {

// Lagged predictors of all P variables for one individual: row (course e,
// time t > 1) holds y(t-1) with the inhibited variable's column zeroed.
inline Eigen::MatrixXd lagged_design(const IndividualData& data, int P) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(data.sample_count(), P);
  Eigen::Index row = 0;
  for (const auto& course : data.courses) {
    for (int t = 1; t < course.length(); ++t) x.row(row + t) = course.values.row(t - 1);
    if (course.intervention_target) x.block(row, *course.intervention_target, course.length(), 1).setZero();
    row += course.length();
  }
  return x;
}

inline Eigen::MatrixXd common_design(const IndividualData& data, int target) {
  const int n = data.sample_count();
  int fixed_effects = 0;
  for (const auto& course : data.courses)
    if (course.intervention_target == target) ++fixed_effects;

  Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(n, 2 + fixed_effects);
  Eigen::Index row = 0;
  int fe = 2;
  for (const auto& course : data.courses) {
    x0(row, 0) = 1.0;
    x0.block(row + 1, 1, course.length() - 1, 1).setOnes();
    if (course.intervention_target == target) x0.block(row + 1, fe++, course.length() - 1, 1).setOnes();
    row += course.length();
  }
  return x0;
}

inline Eigen::VectorXd response(const IndividualData& data, int target) {
  Eigen::VectorXd y(data.sample_count());
  Eigen::Index row = 0;
  for (const auto& course : data.courses) {
    y.segment(row, course.length()) = course.values.col(target);
    row += course.length();
  }
  return y;
}

inline double max_column_norm(const Eigen::MatrixXd& x) {
  return x.cols() == 0 ? 0.0 : x.colwise().norm().maxCoeff();
}

// Orthonormal basis for the numerical column space of x. Columns whose
// pivoted-QR diagonal falls below tol * max(1, largest column norm of
// `reference`) are treated as dependent.
inline Eigen::MatrixXd column_basis(const Eigen::MatrixXd& x, const Eigen::MatrixXd& reference) {
  if (x.cols() == 0) return Eigen::MatrixXd(x.rows(), 0);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  const double tol = kRankTolerance * std::max(1.0, max_column_norm(reference));
  const auto& r = qr.matrixQR();
  const Eigen::Index k = std::min(r.rows(), r.cols());
  Eigen::Index rank = 0;
  while (rank < k && std::abs(r(rank, rank)) > tol) ++rank;
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), rank);
  return q;
}

}  // namespace detail

inline RegressionView build_regression_view(const IndividualData& data, int target, ParentSet parents) {
  if (data.courses.empty()) throw InvalidArgument("individual has no courses");
  const int P = data.courses.front().num_variables();
  if (target < 0 || target >= P) throw InvalidArgument("target vertex out of range");
  if (parents.span() > P) throw InvalidArgument("parent set contains out-of-range vertices");

  const Eigen::MatrixXd lagged = detail::lagged_design(data, P);
  RegressionView view;
  view.response = detail::response(data, target);
  view.common_design = detail::common_design(data, target);
  const auto members = parents.members();
  view.model_design.resize(lagged.rows(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t k = 0; k < members.size(); ++k) view.model_design.col(k) = lagged.col(members[k]);
  return view;
}

inline ProjectionStats projection_stats(const RegressionView& view) {
  ProjectionStats s;
  s.n = view.n();
  const Eigen::MatrixXd q0 = detail::column_basis(view.common_design, view.common_design);
  s.a = static_cast<int>(q0.cols());
  const Eigen::VectorXd r0 = view.response - q0 * (q0.transpose() * view.response);
  s.Q = r0.squaredNorm();
  s.yy = view.response.squaredNorm();
  const Eigen::MatrixXd xo = view.model_design - q0 * (q0.transpose() * view.model_design);
  const Eigen::MatrixXd qg = detail::column_basis(xo, view.model_design);
  s.b = static_cast<int>(qg.cols());
  s.R = s.b == 0 ? 0.0 : (qg.transpose() * r0).squaredNorm();
  return s;
}

inline double log_marginal_likelihood(const ProjectionStats& s, double phi) {
  if (!(phi > 0.0)) throw InvalidArgument("phi must be positive");
  if (s.n <= s.a) throw NumericalDegeneracy("no residual degrees of freedom (n <= a)");
  const double shrink = phi / (phi + 1.0);
  const double residual = s.b == 0 ? s.Q : s.Q - shrink * s.R;
  if (!(residual > kRankTolerance * kRankTolerance * s.yy) || !std::isfinite(residual))
    throw NumericalDegeneracy("non-positive residual quadratic form");
  return -0.5 * s.b * std::log1p(phi) - 0.5 * (s.n - s.a) * std::log(residual);
}

inline double log_marginal_likelihood(const RegressionView& view, double phi) {
  return log_marginal_likelihood(projection_stats(view), phi);
}

// Maximizer of the marginal likelihood over phi in [phi_min, phi_max].
inline double select_phi(const ProjectionStats& s, const PhiPolicy& policy) {
  if (policy.mode == PhiPolicy::Mode::fixed) return policy.fixed_value;
  if (s.b == 0) return policy.phi_min;
  const double m = s.n - s.a;
  const double denom = (m - s.b) * s.R;
  if (!(denom > 0.0)) return policy.phi_min;
  const double u = (m * s.R - s.b * s.Q) / denom;
  if (!(u > 0.0)) return policy.phi_min;
  if (u >= 1.0) return policy.phi_max;
  return std::clamp(u / (1.0 - u), policy.phi_min, policy.phi_max);
}

inline double select_phi(const RegressionView& view, const PhiPolicy& policy) {
  return select_phi(projection_stats(view), policy);
}

inline double score(const ProjectionStats& s, const PhiPolicy& policy) {
  return log_marginal_likelihood(s, select_phi(s, policy));
}

// Log scores indexed (individual, target, parent-set index).
class ScoreTable {
 public:
  ScoreTable() = default;
  ScoreTable(int individuals, int variables, std::size_t sets)
      : J_(individuals), P_(variables), M_(sets),
        values_(static_cast<std::size_t>(individuals) * variables * sets, 0.0) {}

  int individuals() const { return J_; }
  int variables() const { return P_; }
  std::size_t sets() const { return M_; }

  double& at(int j, int p, std::size_t s) { return values_[offset(j, p) + s]; }
  double at(int j, int p, std::size_t s) const { return values_[offset(j, p) + s]; }

  std::span<double> row(int j, int p) { return {values_.data() + offset(j, p), M_}; }
  std::span<const double> row(int j, int p) const { return {values_.data() + offset(j, p), M_}; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;

 private:
  std::size_t offset(int j, int p) const {
    return (static_cast<std::size_t>(j) * P_ + static_cast<std::size_t>(p)) * M_;
  }

  int J_ = 0;
  int P_ = 0;
  std::size_t M_ = 0;
  std::vector<double> values_;
};

namespace detail {

// Shared per-(individual, target) state so each parent set only costs one
// small QR of its orthogonalized columns.
struct TargetContext {
  TargetContext(const IndividualData& data, const Eigen::MatrixXd& lagged, int target) {
    const Eigen::MatrixXd x0 = common_design(data, target);
    const Eigen::MatrixXd q0 = column_basis(x0, x0);
    const Eigen::VectorXd y = response(data, target);
    n = static_cast<int>(y.size());
    a = static_cast<int>(q0.cols());
    residual = y - q0 * (q0.transpose() * y);
    Q = residual.squaredNorm();
    yy = y.squaredNorm();
    raw = &lagged;
    orthogonal = lagged - q0 * (q0.transpose() * lagged);
  }

  ProjectionStats stats(ParentSet parents) const {
    ProjectionStats s{n, a, 0, Q, 0.0, yy};
    const auto members = parents.members();
    if (members.empty()) return s;
    Eigen::MatrixXd xo(orthogonal.rows(), static_cast<Eigen::Index>(members.size()));
    Eigen::MatrixXd xg(orthogonal.rows(), static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) {
      xo.col(k) = orthogonal.col(members[k]);
      xg.col(k) = raw->col(members[k]);
    }
    const Eigen::MatrixXd qg = column_basis(xo, xg);
    s.b = static_cast<int>(qg.cols());
    s.R = s.b == 0 ? 0.0 : (qg.transpose() * residual).squaredNorm();
    return s;
  }

  int n = 0;
  int a = 0;
  double Q = 0.0;
  double yy = 0.0;
  Eigen::VectorXd residual;
  Eigen::MatrixXd orthogonal;
  const Eigen::MatrixXd* raw = nullptr;
};

}  // namespace detail

inline ScoreTable build_score_table(const PopulationDataset& data, const ParentSpace& space,
                                    const PhiPolicy& policy, int workers = 1) {
  data.validate();
  if (data.num_variables != space.num_vertices())
    throw InvalidArgument("dataset and parent space disagree on the number of variables");
  const int J = data.size();
  const int P = data.num_variables;
  ScoreTable table(J, P, space.size());

  std::vector<Eigen::MatrixXd> lagged(J);
  for (int j = 0; j < J; ++j) lagged[j] = detail::lagged_design(data.individuals[j], P);

  parallel_for(static_cast<std::size_t>(J) * P, workers, [&](std::size_t cell) {
    const int j = static_cast<int>(cell / P);
    const int p = static_cast<int>(cell % P);
    const detail::TargetContext ctx(data.individuals[j], lagged[j], p);
    auto out = table.row(j, p);
    for (std::size_t s = 0; s < space.size(); ++s) {
      try {
        out[s] = score(ctx.stats(space[s]), policy);
      } catch (const NumericalDegeneracy& e) {
        throw NumericalDegeneracy("individual " + std::to_string(j + 1) + ", target " +
                                  std::to_string(p + 1) + ", parent set " + std::to_string(s) + ": " +
                                  e.what());
      }
    }
  });
  return table;
}

// Binary cache: magic "JNSCORE1", int32 P, J, c, uint64 order hash, uint64 M,
// then J*P*M little-endian float64 in (j, p, set) order.
namespace detail {

template <class T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParseError("truncated score cache");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline constexpr char kCacheMagic[8] = {'J', 'N', 'S', 'C', 'O', 'R', 'E', '1'};

}  // namespace detail

inline void save_score_cache(const ScoreTable& table, const ParentSpace& space, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kCacheMagic, sizeof(detail::kCacheMagic));
  detail::write_le<std::int32_t>(out, table.variables());
  detail::write_le<std::int32_t>(out, table.individuals());
  detail::write_le<std::int32_t>(out, space.max_parents());
  detail::write_le<std::uint64_t>(out, space.order_hash());
  detail::write_le<std::uint64_t>(out, table.sets());
  for (double v : table.values()) detail::write_le<double>(out, v);
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Rejects caches whose shape or canonical order differs from `space`.
inline ScoreTable load_score_cache(const ParentSpace& space, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open score cache " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kCacheMagic, 8) != 0)
    throw ParseError("not a score cache: " + path);
  const auto P = detail::read_le<std::int32_t>(in);
  const auto J = detail::read_le<std::int32_t>(in);
  const auto c = detail::read_le<std::int32_t>(in);
  const auto hash = detail::read_le<std::uint64_t>(in);
  const auto M = detail::read_le<std::uint64_t>(in);
  if (P != space.num_vertices() || c != space.max_parents() || hash != space.order_hash() ||
      M != space.size() || J <= 0)
    throw ParseError("score cache does not match the requested parent space");
  ScoreTable table(J, P, static_cast<std::size_t>(M));
  for (double& v : table.values()) v = detail::read_le<double>(in);
  return table;
}

// j,p,set_index,log_score with 1-based j and p and 0-based canonical set index.
inline void write_score_csv(const ScoreTable& table, std::ostream& out) {
  out << "j,p,set_index,log_score\n" << std::setprecision(17);
  for (int j = 0; j < table.individuals(); ++j)
    for (int p = 0; p < table.variables(); ++p)
      for (std::size_t s = 0; s < table.sets(); ++s)
        out << j + 1 << ',' << p + 1 << ',' << s << ',' << table.at(j, p, s) << '\n';
}

}  // namespace jointnet
