// jointnet: simulate populations, infer networks, score and sweep estimators.
#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jointnet/elicitation.hpp"
#include "jointnet/engine.hpp"
#include "jointnet/estimators.hpp"
#include "jointnet/evaluation.hpp"
#include "jointnet/io.hpp"

namespace fs = std::filesystem;
using namespace jointnet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Input files that fail validation are data errors, not usage errors.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Strength parse_strength(const std::string& text, const char* name) {
  if (text == "inf" || text == "Inf" || text == "infinity") return Strength::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw InvalidArgument(std::string(name) + " must be a number or 'inf', got " + text);
  return Strength::finite(v);
}

PhiPolicy parse_phi(const std::string& text) {
  if (text == "eb" || text == "empirical_bayes") return PhiPolicy::empirical_bayes();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw InvalidArgument("--phi must be 'eb' or a positive number");
  return PhiPolicy::fixed(v);
}

int env_workers() {
  if (const char* env = std::getenv("JOINTNET_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return 1;
}

template <class F>
auto load(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw DataError(e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(e.what());
  }
}

// FNV-1a over the canonical order hash and the raw score bits.
std::string score_hash(const ScoreTable& t, const ParentSpace& space) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(space.order_hash());
  for (double v : t.values()) mix(std::bit_cast<std::uint64_t>(v));
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

void add_regime_options(CLI::App* cmd, GenerationRegime& r) {
  cmd->add_option("--J", r.J, "individuals")->capture_default_str();
  cmd->add_option("--n", r.n, "time points per course")->capture_default_str();
  cmd->add_option("--E", r.E, "courses per individual")->capture_default_str();
  cmd->add_option("--P", r.P, "variables")->capture_default_str();
  cmd->add_option("--sigma", r.sigma, "noise standard deviation")->capture_default_str();
  cmd->add_option("--rho", r.rho, "expected in-degree of the prior network")->capture_default_str();
  cmd->add_option("--h-eta", r.h_eta, "latent/prior slot agreement")->capture_default_str();
  cmd->add_option("--h-lambda", r.h_lambda, "individual/latent slot agreement")->capture_default_str();
  cmd->add_flag("--interventions,!--no-interventions", r.interventions, "knock out one vertex per course")
      ->capture_default_str();
}

struct HyperOptions {
  std::string eta = "1";
  std::string lambda = "4";
  int c = 3;
  std::string phi = "eb";
  double threshold = 0.5;

  void add(CLI::App* cmd) {
    cmd->add_option("--eta", eta, "latent/prior strength, number or inf")->capture_default_str();
    cmd->add_option("--lambda", lambda, "individual/latent strength, number or inf")->capture_default_str();
    cmd->add_option("--c", c, "maximum in-degree")->capture_default_str();
    cmd->add_option("--phi", phi, "g-prior scale: eb or a positive number")->capture_default_str();
    cmd->add_option("--threshold", threshold, "ENI threshold on ANI latent marginals")->capture_default_str();
  }

  Hyperparameters build() const {
    Hyperparameters hp;
    hp.eta = parse_strength(eta, "--eta");
    hp.lambda = parse_strength(lambda, "--lambda");
    hp.max_parents = c;
    hp.phi = parse_phi(phi);
    return hp;
  }
};

std::vector<EstimatorKind> parse_estimators(const std::vector<std::string>& names) {
  std::vector<EstimatorKind> out;
  for (const auto& n : names) {
    if (n == "all") {
      out.assign(kAllEstimators.begin(), kAllEstimators.end());
      continue;
    }
    out.push_back(parse_estimator(n));
  }
  if (out.empty()) throw InvalidArgument("no estimators requested");
  return out;
}

std::vector<std::string> ignored_parameters(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ANI: return {"lambda"};
    case EstimatorKind::INI: return {"eta"};
    case EstimatorKind::Monolithic: return {"lambda"};
    case EstimatorKind::Correlation: return {"eta", "lambda", "c", "phi", "prior"};
    case EstimatorKind::PriorOnly: return {"phi", "data values"};
    default: return {};
  }
}

// ---- simulate

struct SimulateArgs {
  GenerationRegime regime;
  std::uint64_t seed = 1;
  bool contaminate = false;
  std::string out_dir;
};

int run_simulate(const SimulateArgs& a) {
  GenerationRegime r = a.regime;
  r.seed = a.seed;
  auto [data, truth] = generate_population(r);
  if (a.contaminate) data = contaminate(std::move(data), a.seed);

  fs::create_directories(a.out_dir);
  io::save_dataset(data, (fs::path(a.out_dir) / "data.csv").string());
  io::write_file((fs::path(a.out_dir) / "truth.json").string(),
                 [&](std::ostream& o) { o << io::to_json(truth).dump(1) << '\n'; });
  io::save_network(truth.prior, (fs::path(a.out_dir) / "prior.json").string());

  double individual_edges = 0.0;
  for (const auto& g : truth.individuals) individual_edges += g.edge_count();
  std::cout << std::setprecision(4) << "J=" << r.J << " P=" << r.P << " n_j=" << data.individuals[0].sample_count()
            << " courses=" << r.E << "\nedges: prior " << truth.prior.edge_count() << ", latent "
            << truth.latent.edge_count() << ", individual mean " << individual_edges / r.J << '\n';
  if (a.contaminate) std::cout << "contaminated one individual\n";
  return kOk;
}

// ---- infer

struct InferArgs {
  std::string data, prior, out_dir = ".", score_cache;
  std::vector<std::string> estimators{"jni"};
  HyperOptions hyper;
  bool write_scores = false;
  int workers = 1;
};

int run_infer(const InferArgs& a) {
  const Hyperparameters hp = a.hyper.build();
  const auto kinds = parse_estimators(a.estimators);
  const PopulationDataset data = load([&] { return io::load_dataset(a.data); });
  const Network prior = load([&] { return io::load_network(a.prior); });
  if (prior.size() != data.num_variables)
    throw DataError("prior network has " + std::to_string(prior.size()) + " vertices, data has " +
                    std::to_string(data.num_variables));
  const ParentSpace space(data.num_variables, hp.max_parents);
  std::cerr << "parent space: " << space.size() << " sets per vertex\n";

  bool need_scores = false;
  for (auto k : kinds) need_scores = need_scores || needs_score_table(k);
  ScoreTable scores(data.size(), data.num_variables, space.size());
  std::string hash = "none";
  if (need_scores) {
    const auto t0 = Clock::now();
    if (!a.score_cache.empty() && fs::exists(a.score_cache)) {
      scores = load([&] { return load_score_cache(space, a.score_cache); });
      if (scores.individuals() != data.size()) throw DataError("score cache was built for a different population");
      std::cerr << "scores: loaded " << a.score_cache << " in " << seconds_since(t0) << " s\n";
    } else {
      scores = build_score_table(data, space, hp.phi, a.workers);
      std::cerr << "scores: " << seconds_since(t0) << " s\n";
      if (!a.score_cache.empty()) save_score_cache(scores, space, a.score_cache);
    }
    hash = score_hash(scores, space);
  }

  fs::create_directories(a.out_dir);
  if (a.write_scores && need_scores)
    io::write_file((fs::path(a.out_dir) / "scores.csv").string(), [&](std::ostream& o) { write_score_csv(scores, o); });

  EstimatorOptions opt{hp, a.hyper.threshold, a.workers};
  for (auto k : kinds) {
    const auto ignored = ignored_parameters(k);
    if (!ignored.empty()) {
      std::cerr << "warning: " << to_string(k) << " ignores";
      for (const auto& p : ignored) std::cerr << ' ' << p;
      std::cerr << '\n';
    }
    const auto t0 = Clock::now();
    EdgePosterior post;
    if (k == EstimatorKind::JNI) {
      PhaseTimings times;
      post = JointEngine(space, hp, a.workers).infer(scores, prior, nullptr, &times);
      std::cerr << "jni: phase I " << times.phase1 << " s, latent " << times.latent << " s, phase II " << times.phase2
                << " s\n";
    } else {
      post = run_estimator(k, data, scores, space, prior, opt);
    }
    std::cerr << to_string(k) << ": " << seconds_since(t0) << " s\n";

    const std::string stem = (fs::path(a.out_dir) / std::string(to_string(k))).string();
    io::write_file(stem + ".json", [&](std::ostream& o) {
      o << io::posterior_to_json(post, k, hp, needs_score_table(k) ? hash : "none").dump(1) << '\n';
    });
    io::write_file(stem + ".csv", [&](std::ostream& o) { io::write_posterior_csv(post, o); });
  }
  return kOk;
}

// ---- evaluate

struct EvaluateArgs {
  std::vector<std::string> posteriors;
  std::string truth, pooling = "pooled";
};

int run_evaluate(const EvaluateArgs& a) {
  const GroundTruth truth = load([&] { return io::load_truth(a.truth); });
  const auto pooling = a.pooling == "mean" ? FeaturePooling::per_individual_mean : FeaturePooling::pooled;
  std::cout << "posterior,estimator,task,aur\n" << std::setprecision(17);
  for (const auto& path : a.posteriors) {
    const auto doc = load([&] { return io::read_json_file(path); });
    const EdgePosterior post = load([&] { return io::posterior_from_json(doc); });
    const std::string name = doc.value("estimator", "unknown");
    for (Task t : kAllTasks) {
      std::cout << path << ',' << name << ',' << to_string(t) << ',';
      try {
        std::cout << task_aur(post, truth, t, pooling) << '\n';
      } catch (const UndefinedAur&) {
        std::cout << "NA\n";
      }
    }
  }
  return kOk;
}

// ---- sweep

struct SweepArgs {
  GenerationRegime base;
  std::vector<std::string> regimes;  // "key=value,key=value" overrides of the base regime
  std::vector<std::string> estimators{"all"};
  std::vector<double> eta_grid, lambda_grid;
  HyperOptions hyper;
  int replicates = 50;
  std::uint64_t master_seed = 1;
  bool contaminate = false;
  std::string pooling = "pooled", out_dir = ".";
  int workers = 1;
};

GenerationRegime apply_overrides(GenerationRegime r, const std::string& spec) {
  std::stringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("regime override must be key=value: " + item);
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      if (key == "J") r.J = std::stoi(value);
      else if (key == "n") r.n = std::stoi(value);
      else if (key == "E") r.E = std::stoi(value);
      else if (key == "P") r.P = std::stoi(value);
      else if (key == "sigma") r.sigma = std::stod(value);
      else if (key == "rho") r.rho = std::stod(value);
      else if (key == "h_eta") r.h_eta = std::stod(value);
      else if (key == "h_lambda") r.h_lambda = std::stod(value);
      else if (key == "interventions") r.interventions = value == "1" || value == "true";
      else throw InvalidArgument("unknown regime key " + key);
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const InvalidArgument*>(&e)) throw;
      throw InvalidArgument("bad value for " + key + ": " + value);
    }
  }
  return r;
}

void print_reports(const RegimeSweep& sweep, const SweepResult& result) {
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& rep : result.reports) {
    std::cout << "regime " << rep.regime + 1 << "  " << std::left << std::setw(12) << to_string(rep.estimator)
              << std::setw(11) << to_string(rep.task) << std::right << rep.mean_aur << " +/- " << rep.std_error
              << "  (n=" << rep.replicates;
    if (rep.failures) std::cout << ", failed " << rep.failures;
    std::cout << ")\n";
  }
  for (std::size_t r = 0; r < sweep.regimes.size(); ++r)
    for (Task t : kAllTasks)
      if (auto b = analytic_prior_baseline(sweep.regimes[r].h_eta, sweep.regimes[r].h_lambda, t))
        std::cout << "regime " << r + 1 << "  analytic prior baseline " << to_string(t) << ' ' << *b << '\n';
  std::cout.unsetf(std::ios::floatfield);
}

int run_sweep_cmd(const SweepArgs& a) {
  RegimeSweep sweep;
  if (a.regimes.empty()) sweep.regimes = {a.base};
  for (const auto& spec : a.regimes) sweep.regimes.push_back(apply_overrides(a.base, spec));
  for (const auto& r : sweep.regimes) r.validate();
  sweep.estimators = parse_estimators(a.estimators);
  sweep.replicates = a.replicates;
  sweep.master_seed = a.master_seed;
  sweep.hp = a.hyper.build();
  sweep.eni_threshold = a.hyper.threshold;
  sweep.contaminate = a.contaminate;
  sweep.pooling = a.pooling == "mean" ? FeaturePooling::per_individual_mean : FeaturePooling::pooled;
  sweep.workers = a.workers;
  if (sweep.replicates <= 0) throw InvalidArgument("--replicates must be positive");

  fs::create_directories(a.out_dir);
  auto progress = [](std::size_t done, std::size_t total) {
    if (done == total || done % std::max<std::size_t>(1, total / 10) == 0)
      std::cerr << "replicates " << done << '/' << total << '\n';
  };

  if (a.eta_grid.empty() != a.lambda_grid.empty())
    throw InvalidArgument("--eta-grid and --lambda-grid must be given together");

  if (a.eta_grid.empty()) {
    const auto result = run_sweep(sweep, progress);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    io::write_file((fs::path(a.out_dir) / "ledger.csv").string(),
                   [&](std::ostream& o) { io::write_ledger_csv(sweep, result, o); });
    io::write_file((fs::path(a.out_dir) / "summary.csv").string(),
                   [&](std::ostream& o) { io::write_summary_csv(sweep, result, o); });
    print_reports(sweep, result);
    return kOk;
  }

  // Sensitivity grid: one gnuplot block per eta value, one line per lambda.
  std::ofstream dat(fs::path(a.out_dir) / "sensitivity.dat");
  if (!dat) throw std::runtime_error("cannot write sensitivity.dat");
  dat << std::setprecision(17) << "# regime estimator eta lambda latent individual feature\n";
  for (double eta : a.eta_grid) {
    for (double lambda : a.lambda_grid) {
      RegimeSweep cell = sweep;
      cell.hp.eta = Strength::finite(eta);
      cell.hp.lambda = Strength::finite(lambda);
      std::cerr << "eta " << eta << " lambda " << lambda << '\n';
      const auto result = run_sweep(cell);
      std::map<std::tuple<std::size_t, int, int>, double> mean;
      for (const auto& rep : result.reports)
        mean[{rep.regime, static_cast<int>(rep.estimator), static_cast<int>(rep.task)}] = rep.mean_aur;
      for (std::size_t r = 0; r < cell.regimes.size(); ++r)
        for (auto k : cell.estimators) {
          dat << r + 1 << ' ' << to_string(k) << ' ' << eta << ' ' << lambda;
          for (Task t : kAllTasks) dat << ' ' << mean[{r, static_cast<int>(k), static_cast<int>(t)}];
          dat << '\n';
        }
    }
    dat << '\n';
  }
  std::cerr << "wrote " << (fs::path(a.out_dir) / "sensitivity.dat").string() << '\n';
  return kOk;
}

// ---- elicit

struct ElicitArgs {
  std::optional<double> lambda, h_lambda, expected_shd, eta, h_eta, s1, s2;
  std::optional<int> P;
};

int run_elicit(const ElicitArgs& a) {
  ElicitationResult r;
  if (a.s1 || a.s2) {
    if (!a.s1 || !a.s2) throw InvalidArgument("--s1 and --s2 must be given together");
    r = two_step_elicitation(*a.s1, *a.s2);
  } else {
    int given = (a.lambda ? 1 : 0) + (a.h_lambda ? 1 : 0) + (a.expected_shd ? 1 : 0);
    if (given > 1) throw InvalidArgument("give only one of --lambda, --h-lambda, --expected-shd");
    if (a.lambda) r.lambda = *a.lambda;
    if (a.h_lambda) r.h_lambda = *a.h_lambda;
    if (a.expected_shd) {
      if (!a.P) throw InvalidArgument("--expected-shd needs --P");
      r.h_lambda = h_from_expected_shd(*a.P, *a.expected_shd);
    }
    if (a.eta && a.h_eta) throw InvalidArgument("give only one of --eta, --h-eta");
    if (a.eta) r.eta = *a.eta;
    if (a.h_eta) r.h_eta = *a.h_eta;
    if (!given && !a.eta && !a.h_eta) throw InvalidArgument("nothing to elicit");
  }
  r = complete(r, a.P);
  io::json out = io::json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (!v) return;
    if (std::isinf(*v)) out[key] = "inf";
    else out[key] = *v;
  };
  put("h_eta", r.h_eta);
  put("h_lambda", r.h_lambda);
  put("eta", r.eta);
  put("lambda", r.lambda);
  put("expected_shd_latent", r.expected_shd_latent);
  put("expected_shd_individual", r.expected_shd_individual);
  std::cout << out.dump(1) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint Bayesian inference of individual dynamic networks"};
  app.set_config("--config", "", "key = value configuration file; command-line flags win");
  app.require_subcommand(1);
  int workers = env_workers();
  app.add_option("--workers", workers, "worker threads (default $JOINTNET_WORKERS or 1)");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic population");
  add_regime_options(simulate, sim.regime);
  simulate->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  simulate->add_flag("--contaminate", sim.contaminate, "add a heavy-tailed outlier individual");
  simulate->add_option("--out-dir", sim.out_dir, "output directory")->required();

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "posterior edge probabilities");
  infer->add_option("--data", inf.data, "dataset CSV")->required();
  infer->add_option("--prior", inf.prior, "prior network JSON")->required();
  infer->add_option("--estimator", inf.estimators, "jni ani ini eni monolithic correlation prior, or all")
      ->capture_default_str();
  inf.hyper.add(infer);
  infer->add_option("--score-cache", inf.score_cache, "binary score cache, reused when it matches");
  infer->add_flag("--write-scores", inf.write_scores, "also write scores.csv");
  infer->add_option("--out-dir", inf.out_dir, "output directory")->capture_default_str();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "area under the ROC curve against a known truth");
  evaluate->add_option("--posterior", ev.posteriors, "posterior JSON files")->required();
  evaluate->add_option("--truth", ev.truth, "truth JSON from simulate")->required();
  evaluate->add_option("--pooling", ev.pooling, "feature task pooling")
      ->check(CLI::IsMember({"pooled", "mean"}))
      ->capture_default_str();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "replicated simulation study");
  add_regime_options(sweep, sw.base);
  sweep->add_option("--regime", sw.regimes, "regime overrides such as J=5,h_lambda=0.9 (repeatable)");
  sweep->add_option("--estimator", sw.estimators, "estimators, or all")->capture_default_str();
  sw.hyper.add(sweep);
  sweep->add_option("--replicates", sw.replicates, "replicates per regime")->capture_default_str();
  sweep->add_option("--master-seed", sw.master_seed, "master seed")->capture_default_str();
  sweep->add_flag("--contaminate", sw.contaminate, "contaminate one individual per replicate");
  sweep->add_option("--pooling", sw.pooling, "feature task pooling")
      ->check(CLI::IsMember({"pooled", "mean"}))
      ->capture_default_str();
  sweep->add_option("--eta-grid", sw.eta_grid, "eta values for a sensitivity grid");
  sweep->add_option("--lambda-grid", sw.lambda_grid, "lambda values for a sensitivity grid");
  sweep->add_option("--out-dir", sw.out_dir, "output directory")->capture_default_str();

  ElicitArgs el;
  auto* elicit = app.add_subcommand("elicit", "translate beliefs into prior strengths");
  elicit->add_option("--lambda", el.lambda);
  elicit->add_option("--h-lambda", el.h_lambda);
  elicit->add_option("--expected-shd", el.expected_shd, "expected individual/latent SHD");
  elicit->add_option("--eta", el.eta);
  elicit->add_option("--h-eta", el.h_eta);
  elicit->add_option("--P", el.P, "number of variables");
  elicit->add_option("--s1", el.s1, "agreement between two individuals");
  elicit->add_option("--s2", el.s2, "agreement between an individual and the prior");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (workers <= 0) {
    std::cerr << "error: --workers must be positive\n";
    return kUsage;
  }
  inf.workers = sw.workers = workers;

  try {
    if (*simulate) return run_simulate(sim);
    if (*infer) return run_infer(inf);
    if (*evaluate) return run_evaluate(ev);
    if (*sweep) return run_sweep_cmd(sw);
    if (*elicit) return run_elicit(el);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalDegeneracy& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TooLarge& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
