#pragma once

// File formats. Vertex indices are 1-based on disk.
//
//   network JSON     {"P": int, "parents": [[int, ...], ...]}
//   edge list CSV    source,target
//   dataset CSV      individual,course,time,intervention_target,v1,...,vP
//                    (time 1-based and contiguous per course, target 0 = none)
//   truth JSON       {"latent", "prior", "individuals": [network...],
//                     "betas": [[[row]...]...], "alphas": [[...]...]}
//   posterior JSON   {"estimator", "latent", "individual", "features",
//                     "hyperparameters", "score_cache_hash"}
//   posterior CSV    scope,individual,source,target,probability

#include <Eigen/Dense>
#include <json.hpp>

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jointnet/engine.hpp"
#include "jointnet/errors.hpp"
#include "jointnet/estimators.hpp"
#include "jointnet/evaluation.hpp"
#include "jointnet/graph.hpp"
#include "jointnet/timecourse.hpp"

namespace jointnet::io {

using nlohmann::json;

inline json to_json(const Network& g) {
  json parents = json::array();
  for (auto s : g.parents) {
    json members = json::array();
    for (int v : s.members()) members.push_back(v + 1);
    parents.push_back(std::move(members));
  }
  return {{"P", g.size()}, {"parents", std::move(parents)}};
}

inline Network network_from_json(const json& j) {
  try {
    const int P = j.at("P").get<int>();
    Network g(P);
    const auto& parents = j.at("parents");
    if (!parents.is_array() || static_cast<int>(parents.size()) != P)
      throw ParseError("network JSON needs exactly P parent lists");
    for (int p = 0; p < P; ++p)
      for (const auto& m : parents[p]) {
        const int v = m.get<int>();
        if (v < 1 || v > P) throw ParseError("parent index " + std::to_string(v) + " outside 1..P");
        if (g.parents[p].contains(v - 1)) throw ParseError("duplicate parent " + std::to_string(v));
        g.parents[p].insert(v - 1);
      }
    return g;
  } catch (const json::exception& e) {
    throw ParseError(std::string("network JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("network JSON: ") + e.what());
  }
}

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (!rows.is_array()) throw ParseError("matrix JSON must be an array of rows");
  const auto R = static_cast<Eigen::Index>(rows.size());
  const auto C = R == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(R, C);
  for (Eigen::Index r = 0; r < R; ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != C) throw ParseError("ragged matrix JSON");
    for (Eigen::Index c = 0; c < C; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

template <class T>
void write_file(const std::string& path, const T& writer) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  writer(out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void save_network(const Network& g, const std::string& path) {
  write_file(path, [&](std::ostream& out) { out << to_json(g).dump(1) << '\n'; });
}

inline Network load_network(const std::string& path) { return network_from_json(read_json_file(path)); }

inline void write_edge_list(const Network& g, std::ostream& out) {
  out << "source,target\n";
  for (int p = 0; p < g.size(); ++p)
    for (int i : g.parents[p].members()) out << i + 1 << ',' << p + 1 << '\n';
}

// ---- dataset CSV --------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return fields;
}

inline long parse_int(std::string_view s, long row, const char* what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(std::string("invalid ") + what + " '" + std::string(s) + "'", row);
  return v;
}

inline double parse_double(std::string_view s, long row) {
  std::string copy(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(copy.c_str(), &end);
  if (copy.empty() || end != copy.c_str() + copy.size() || errno == ERANGE || !std::isfinite(v))
    throw ParseError("invalid value '" + copy + "'", row);
  return v;
}

}  // namespace detail

inline PopulationDataset read_dataset_csv(std::istream& in) {
  std::string line;
  long row = 0;
  if (!std::getline(in, line)) throw ParseError("no data rows");
  ++row;
  const auto header = detail::split_csv(line);
  if (header.size() < 5 || header[0] != "individual" || header[1] != "course" || header[2] != "time" ||
      header[3] != "intervention_target")
    throw ParseError("header must start with individual,course,time,intervention_target", row);

  PopulationDataset data;
  data.num_variables = static_cast<int>(header.size()) - 4;
  if (data.num_variables > kMaxVertices) throw ParseError("more than 64 variables", row);
  for (std::size_t k = 4; k < header.size(); ++k) data.variable_names.emplace_back(header[k]);

  struct Pending {
    std::vector<std::vector<double>> rows;
    int target = 0;
  };
  std::map<std::string, std::size_t> individual_index;
  std::vector<std::vector<std::pair<std::string, Pending>>> courses;  // per individual, in order
  std::vector<std::string> individual_ids;
  std::pair<std::string, std::string> last_key;
  bool any = false;

  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (static_cast<int>(f.size()) != data.num_variables + 4)
      throw ParseError("expected " + std::to_string(data.num_variables + 4) + " fields, found " +
                           std::to_string(f.size()),
                       row);
    const std::string id(f[0]);
    const std::string course(f[1]);
    if (id.empty() || course.empty()) throw ParseError("empty individual or course label", row);
    const long t = detail::parse_int(f[2], row, "time");
    const long target = detail::parse_int(f[3], row, "intervention_target");
    if (target < 0 || target > data.num_variables) throw ParseError("intervention_target outside 0..P", row);

    auto [it, inserted] = individual_index.emplace(id, courses.size());
    if (inserted) {
      courses.emplace_back();
      individual_ids.push_back(id);
    }
    auto& list = courses[it->second];
    const bool continuing = any && last_key == std::pair{id, course};
    if (!continuing) {
      for (const auto& c : list)
        if (c.first == course) throw ParseError("course '" + course + "' of '" + id + "' is not contiguous", row);
      if (t != 1) throw ParseError("course must start at time 1", row);
      list.push_back({course, Pending{{}, static_cast<int>(target)}});
    }
    Pending& pending = list.back().second;
    if (t != static_cast<long>(pending.rows.size()) + 1) throw ParseError("non-contiguous time index", row);
    if (static_cast<int>(target) != pending.target)
      throw ParseError("intervention_target changes within a course", row);
    std::vector<double> values(static_cast<std::size_t>(data.num_variables));
    for (int v = 0; v < data.num_variables; ++v) values[v] = detail::parse_double(f[4 + v], row);
    pending.rows.push_back(std::move(values));
    last_key = {id, course};
    any = true;
  }
  if (!any) throw ParseError("no data rows");

  for (std::size_t j = 0; j < courses.size(); ++j) {
    IndividualData ind{individual_ids[j], {}};
    for (auto& [label, pending] : courses[j]) {
      if (pending.rows.size() < 2)
        throw ParseError("course '" + label + "' of '" + individual_ids[j] + "' has fewer than 2 time points");
      TimeCourse tc;
      tc.values.resize(static_cast<Eigen::Index>(pending.rows.size()), data.num_variables);
      for (std::size_t r = 0; r < pending.rows.size(); ++r)
        for (int v = 0; v < data.num_variables; ++v) tc.values(static_cast<Eigen::Index>(r), v) = pending.rows[r][v];
      if (pending.target > 0) tc.intervention_target = pending.target - 1;
      ind.courses.push_back(std::move(tc));
    }
    data.individuals.push_back(std::move(ind));
  }
  return data;
}

inline void write_dataset_csv(const PopulationDataset& data, std::ostream& out) {
  out << "individual,course,time,intervention_target";
  for (int v = 0; v < data.num_variables; ++v)
    out << ',' << (v < static_cast<int>(data.variable_names.size()) ? data.variable_names[v] : "v" + std::to_string(v + 1));
  out << '\n' << std::setprecision(17);
  for (const auto& ind : data.individuals)
    for (std::size_t e = 0; e < ind.courses.size(); ++e) {
      const auto& c = ind.courses[e];
      for (int t = 0; t < c.length(); ++t) {
        out << ind.id << ',' << e + 1 << ',' << t + 1 << ',' << (c.intervention_target ? *c.intervention_target + 1 : 0);
        for (int v = 0; v < c.num_variables(); ++v) out << ',' << c.values(t, v);
        out << '\n';
      }
    }
}

inline PopulationDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_dataset_csv(in);
}

inline void save_dataset(const PopulationDataset& data, const std::string& path) {
  write_file(path, [&](std::ostream& out) { write_dataset_csv(data, out); });
}

inline json to_json(const PopulationDataset& data) {
  json inds = json::array();
  for (const auto& ind : data.individuals) {
    json courses = json::array();
    for (const auto& c : ind.courses)
      courses.push_back({{"intervention_target", c.intervention_target ? *c.intervention_target + 1 : 0},
                         {"values", to_json(c.values)}});
    inds.push_back({{"id", ind.id}, {"courses", std::move(courses)}});
  }
  return {{"P", data.num_variables}, {"variable_names", data.variable_names}, {"individuals", std::move(inds)}};
}

// ---- ground truth ---------------------------------------------------------

inline json to_json(const GroundTruth& truth) {
  json inds = json::array(), betas = json::array(), alphas = json::array();
  for (const auto& g : truth.individuals) inds.push_back(to_json(g));
  for (const auto& b : truth.betas) betas.push_back(to_json(b));
  for (const auto& a : truth.alphas) alphas.push_back(std::vector<double>(a.data(), a.data() + a.size()));
  return {{"latent", to_json(truth.latent)},
          {"prior", to_json(truth.prior)},
          {"individuals", std::move(inds)},
          {"betas", std::move(betas)},
          {"alphas", std::move(alphas)}};
}

inline GroundTruth truth_from_json(const json& j) {
  try {
    GroundTruth t;
    t.latent = network_from_json(j.at("latent"));
    t.prior = network_from_json(j.at("prior"));
    for (const auto& g : j.at("individuals")) t.individuals.push_back(network_from_json(g));
    if (j.contains("betas"))
      for (const auto& b : j.at("betas")) t.betas.push_back(matrix_from_json(b));
    if (j.contains("alphas"))
      for (const auto& a : j.at("alphas")) {
        const auto v = a.get<std::vector<double>>();
        t.alphas.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("ground truth JSON: ") + e.what());
  }
}

inline GroundTruth load_truth(const std::string& path) { return truth_from_json(read_json_file(path)); }

// ---- posteriors -----------------------------------------------------------

inline json to_json(const Strength& s) { return s.infinite ? json("inf") : json(s.value); }

inline json to_json(const Hyperparameters& hp) {
  json phi = hp.phi.mode == PhiPolicy::Mode::fixed ? json(hp.phi.fixed_value) : json("empirical_bayes");
  return {{"eta", to_json(hp.eta)}, {"lambda", to_json(hp.lambda)}, {"c", hp.max_parents}, {"phi", phi}};
}

inline json posterior_to_json(const EdgePosterior& post, EstimatorKind kind, const Hyperparameters& hp,
                              const std::string& score_cache_hash) {
  json ind = json::array(), feat = json::array();
  for (const auto& m : post.individual) ind.push_back(to_json(m));
  for (const auto& m : post.features) feat.push_back(to_json(m));
  return {{"estimator", std::string(to_string(kind))},
          {"latent", to_json(post.latent)},
          {"individual", std::move(ind)},
          {"features", std::move(feat)},
          {"hyperparameters", to_json(hp)},
          {"score_cache_hash", score_cache_hash}};
}

inline EdgePosterior posterior_from_json(const json& j) {
  try {
    EdgePosterior post;
    post.latent = matrix_from_json(j.at("latent"));
    for (const auto& m : j.at("individual")) post.individual.push_back(matrix_from_json(m));
    if (j.contains("features"))
      for (const auto& m : j.at("features")) post.features.push_back(matrix_from_json(m));
    else
      post.features = feature_statistics(post);
    return post;
  } catch (const json::exception& e) {
    throw ParseError(std::string("posterior JSON: ") + e.what());
  }
}

inline void write_posterior_csv(const EdgePosterior& post, std::ostream& out) {
  out << "scope,individual,source,target,probability\n" << std::setprecision(17);
  auto dump = [&](const char* scope, int j, const Eigen::MatrixXd& m) {
    for (Eigen::Index p = 0; p < m.cols(); ++p)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        out << scope << ',' << j << ',' << i + 1 << ',' << p + 1 << ',' << m(i, p) << '\n';
  };
  dump("latent", 0, post.latent);
  for (std::size_t j = 0; j < post.individual.size(); ++j) dump("individual", static_cast<int>(j + 1), post.individual[j]);
  for (std::size_t j = 0; j < post.features.size(); ++j) dump("feature", static_cast<int>(j + 1), post.features[j]);
}

// ---- sweep ledgers --------------------------------------------------------

// Regime parameters are inputs, so they are echoed at default precision.
inline void write_regime_fields(std::ostream& out, const GenerationRegime& r) {
  std::ostringstream s;
  s << r.J << ',' << r.n << ',' << r.E << ',' << r.P << ',' << r.sigma << ',' << r.rho << ',' << r.h_eta << ','
    << r.h_lambda << ',' << (r.interventions ? 1 : 0);
  out << s.str();
}

inline constexpr const char* kRegimeHeader = "J,n,E,P,sigma,rho,h_eta,h_lambda,interventions";

inline void write_ledger_csv(const RegimeSweep& sweep, const SweepResult& result, std::ostream& out) {
  out << kRegimeHeader << ",estimator,task,replicate,aur\n" << std::setprecision(17);
  for (const auto& row : result.ledger) {
    write_regime_fields(out, sweep.regimes[row.regime]);
    out << ',' << to_string(row.estimator) << ',' << to_string(row.task) << ',' << row.replicate + 1 << ','
        << row.aur << '\n';
  }
}

inline void write_summary_csv(const RegimeSweep& sweep, const SweepResult& result, std::ostream& out) {
  out << kRegimeHeader << ",estimator,task,mean_aur,std_error,replicates,excluded\n" << std::setprecision(17);
  for (const auto& rep : result.reports) {
    write_regime_fields(out, sweep.regimes[rep.regime]);
    out << ',' << to_string(rep.estimator) << ',' << to_string(rep.task) << ',' << rep.mean_aur << ','
        << rep.std_error << ',' << rep.replicates << ',' << rep.failures << '\n';
  }
}

}  // namespace jointnet::io
