// Command-line front end: synthetic data generation, base-model training,
// parity post-processing, evaluation and epsilon sweeps.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "fairgrid/fairgrid.hpp"

namespace fs = std::filesystem;
using namespace fairgrid;

namespace {

std::vector<std::string> split_names(const std::string& joined) {
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= joined.size()) {
    const std::size_t comma = joined.find(',', start);
    if (comma == std::string::npos) {
      if (start < joined.size()) names.push_back(joined.substr(start));
      break;
    }
    names.push_back(joined.substr(start, comma - start));
    start = comma + 1;
  }
  return names;
}

Eigen::VectorXd parse_eps(const std::string& joined) {
  const std::vector<std::string> cells = split_names(joined);
  if (cells.empty()) throw invalid_parameter("--eps: empty value");
  Eigen::VectorXd eps(Eigen::Index(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i)
    eps[Eigen::Index(i)] = std::stod(cells[i]);
  return eps;
}

Method parse_method(const std::string& name) {
  if (name == "sgd3_acsa") return Method::sgd3_acsa;
  if (name == "sgd3_acsa2") return Method::sgd3_acsa2;
  if (name == "acsa") return Method::acsa;
  if (name == "acsa2") return Method::acsa2;
  if (name == "sgd") return Method::sgd;
  throw invalid_parameter("unknown method '" + name + "'");
}

struct Meta {
  CsvSchema schema;
  double f_train = 0.4;
  double f_pool = 0.4;
  std::uint64_t split_seed = 0;
  double bound = 1.0;
  std::string eta_model;
  std::string tau_model;
};

void save_meta(const std::string& path, const Meta& meta) {
  nlohmann::json j;
  j["features"] = meta.schema.features;
  j["sensitive"] = meta.schema.sensitive;
  j["target"] = meta.schema.target;
  j["f_train"] = meta.f_train;
  j["f_pool"] = meta.f_pool;
  j["split_seed"] = meta.split_seed;
  j["bound"] = meta.bound;
  j["eta_model"] = meta.eta_model;
  j["tau_model"] = meta.tau_model;
  detail::atomic_write(path, j.dump(2) + "\n");
}

Meta load_meta(const std::string& path) {
  const nlohmann::json j = detail::read_json_file(path);
  Meta meta;
  meta.schema.features = j.at("features").get<std::vector<std::string>>();
  meta.schema.sensitive = j.at("sensitive").get<std::string>();
  meta.schema.target = j.at("target").get<std::string>();
  meta.f_train = j.at("f_train").get<double>();
  meta.f_pool = j.at("f_pool").get<double>();
  meta.split_seed = j.at("split_seed").get<std::uint64_t>();
  meta.bound = j.at("bound").get<double>();
  meta.eta_model = j.at("eta_model").get<std::string>();
  meta.tau_model = j.at("tau_model").get<std::string>();
  return meta;
}

Predictors make_predictors(const LinearModel& eta, const MulticlassLogistic& tau) {
  Predictors pred;
  pred.eta = [eta](const Eigen::VectorXd& x) { return eta.predict(x); };
  pred.tau = [tau](const Eigen::VectorXd& x) { return tau.predict_proba(x).values(); };
  pred.plug_in = true;
  return pred;
}

// Multiplicative recalibration of the group posterior toward the marginals:
// scale component s by p_s over its pool mean, then renormalize.
Predictors calibrate_tau(const Predictors& pred, const Eigen::MatrixXd& pool_X,
                         const SimplexVector& p) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p.size());
  for (Eigen::Index i = 0; i < pool_X.rows(); ++i)
    mean += pred.tau(pool_X.row(i).transpose());
  mean /= double(pool_X.rows());
  Eigen::VectorXd scale(p.size());
  for (Eigen::Index s = 0; s < p.size(); ++s) {
    if (!(mean[s] > 0.0)) throw degenerate_group("calibrate-tau: component with zero mean");
    scale[s] = p[s] / mean[s];
  }
  Predictors out = pred;
  const auto base = pred.tau;
  out.tau = [base, scale](const Eigen::VectorXd& x) {
    Eigen::VectorXd q = base(x).cwiseProduct(scale);
    return Eigen::VectorXd(q / q.sum());
  };
  return out;
}

std::string resolve_ref(const std::string& ref, const std::string& anchor_file) {
  const fs::path p(ref);
  if (p.is_absolute()) return ref;
  return (fs::path(anchor_file).parent_path() / p).string();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  return z;
}

int run(int argc, char** argv) {
  CLI::App app{"demographic parity post-processing for regression"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
  long synth_n = 2000;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  synth->add_option("--n", synth_n, "number of rows");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV path")->required();
  synth->callback([&]() {
    write_csv(synth_out, generate_synthetic(synth_n, synth_seed));
    std::cout << "wrote " << synth_n << " rows to " << synth_out << "\n";
  });

  // shared data/schema flags
  std::string data_path;
  std::string features = "x1,x2,x3";
  std::string sensitive = "s";
  std::string target = "y";
  auto add_schema = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_path, "input CSV")->required();
    cmd->add_option("--features", features, "comma-separated feature columns");
    cmd->add_option("--sensitive", sensitive, "sensitive column");
    cmd->add_option("--target", target, "target column");
  };

  // ---- train-base ----
  auto* train = app.add_subcommand("train-base", "fit the regression and group models");
  std::string out_dir;
  double f_train = 0.4, f_pool = 0.4;
  std::uint64_t split_seed = 0;
  double ridge = 0.0, l2 = 1e-4, bound = 0.0;
  int logit_iters = 500;
  add_schema(train);
  train->add_option("--out-dir", out_dir, "directory for model files")->required();
  train->add_option("--train-frac", f_train, "training fraction");
  train->add_option("--pool-frac", f_pool, "unlabeled pool fraction");
  train->add_option("--seed", split_seed, "split seed");
  train->add_option("--ridge", ridge, "ridge weight for the regression");
  train->add_option("--l2", l2, "l2 weight for the group model");
  train->add_option("--iters", logit_iters, "group model iterations");
  train->add_option("--bound", bound, "prediction clamp bound; 0 derives max(1, max |y|)");
  train->callback([&]() {
    const CsvSchema schema{split_names(features), sensitive, target};
    const Dataset data = load_csv(data_path, schema);
    const SplitResult parts = split(data, f_train, f_pool, split_seed);
    const double b =
        bound > 0.0 ? bound : std::max(1.0, parts.train.y.cwiseAbs().maxCoeff());
    const LinearModel eta =
        fit_least_squares(parts.train.X, parts.train.y, ridge, b);
    const MulticlassLogistic tau =
        fit_logistic(parts.train.X, parts.train.s, data.groups(), l2, logit_iters);
    fs::create_directories(out_dir);
    save_linear_model((fs::path(out_dir) / "eta.json").string(), eta);
    save_logistic_model((fs::path(out_dir) / "tau.json").string(), tau);
    Meta meta{schema, f_train, f_pool, split_seed, b, "eta.json", "tau.json"};
    save_meta((fs::path(out_dir) / "meta.json").string(), meta);
    std::cout << "trained on " << parts.train.rows() << " rows, bound " << b << ", models in "
              << out_dir << "\n";
  });

  // ---- postprocess ----
  auto* post = app.add_subcommand("postprocess", "fit the parity policy on the unlabeled pool");
  std::string models_dir, out_policy, out_history;
  long T = 10000, iterations = 0, record_every = 0;
  int half_size = 0;
  double beta = 0.0;
  std::string eps_text = "0.00390625";
  std::string method_name = "sgd3_acsa2";
  std::uint64_t opt_seed = 0;
  bool calibrate = false;
  post->add_option("--data", data_path, "input CSV")->required();
  post->add_option("--models-dir", models_dir, "directory from train-base")->required();
  post->add_option("--T", T, "oracle budget driving the defaults");
  post->add_option("--iterations", iterations, "oracle calls; 0 means T");
  post->add_option("--eps", eps_text, "parity slack; one value or one per group");
  post->add_option("--method", method_name, "sgd3_acsa | sgd3_acsa2 | acsa | acsa2 | sgd");
  post->add_option("--seed", opt_seed, "optimizer seed");
  post->add_option("--record-every", record_every, "history cadence in oracle calls");
  post->add_option("--half-size", half_size, "grid half-size L; 0 means floor(sqrt(T))");
  post->add_option("--beta", beta, "temperature; 0 means T/(8 log2 T)");
  post->add_flag("--calibrate-tau", calibrate, "recalibrate the group posterior on the pool");
  post->add_option("--out-policy", out_policy, "policy JSON path")->required();
  post->add_option("--history", out_history, "metric history CSV path");
  post->callback([&]() {
    const Meta meta = load_meta((fs::path(models_dir) / "meta.json").string());
    const Dataset data = load_csv(data_path, meta.schema);
    const SplitResult parts = split(data, meta.f_train, meta.f_pool, meta.split_seed);
    const SimplexVector p = estimate_marginals(parts.train.s, data.groups());
    const LinearModel eta =
        load_linear_model((fs::path(models_dir) / meta.eta_model).string());
    const MulticlassLogistic tau =
        load_logistic_model((fs::path(models_dir) / meta.tau_model).string());
    Predictors pred = make_predictors(eta, tau);
    if (calibrate) pred = calibrate_tau(pred, parts.unlabeled.X, p);

    PostprocessConfig cfg;
    cfg.budget = T;
    cfg.iterations = iterations;
    cfg.bound = meta.bound;
    cfg.half_size = half_size;
    cfg.beta = beta;
    cfg.eps = parse_eps(eps_text);
    cfg.method = parse_method(method_name);
    cfg.seed = opt_seed;
    cfg.record_every = record_every;
    PostprocessResult result = dp_postprocess(cfg, p, pred, parts.unlabeled.X);
    for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";

    result.policy.eta_ref = (fs::path(models_dir) / meta.eta_model).string();
    result.policy.tau_ref = (fs::path(models_dir) / meta.tau_model).string();
    save_policy(out_policy, result.policy);
    if (!out_history.empty()) {
      const std::vector<MetricsReport> history =
          metric_history(result, parts.test.X, parts.test.s, parts.test.y, data.groups());
      write_metrics_csv(out_history, history);
    }
    const Eigen::VectorXd ks =
        ks_unfairness(result.policy, parts.test.X, parts.test.s, data.groups());
    std::cout << "policy " << out_policy << ": test risk "
              << empirical_risk(result.policy, parts.test.X, parts.test.y) << ", max KS gap "
              << ks.maxCoeff() << "\n";
  });

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "risk and KS report for a policy on a labeled CSV");
  std::string policy_path, out_report;
  add_schema(eval);
  eval->add_option("--policy", policy_path, "policy JSON")->required();
  eval->add_option("--out", out_report, "report JSON path");
  eval->callback([&]() {
    const CsvSchema schema{split_names(features), sensitive, target};
    const Dataset data = load_csv(data_path, schema);
    FairPolicy policy = load_policy(policy_path);
    const LinearModel eta = load_linear_model(resolve_ref(policy.eta_ref, policy_path));
    const MulticlassLogistic tau = load_logistic_model(resolve_ref(policy.tau_ref, policy_path));
    attach_predictors(policy, eta, tau);
    const double risk = empirical_risk(policy, data.X, data.y);
    const Eigen::VectorXd ks = ks_unfairness(policy, data.X, data.s, data.groups());
    Eigen::VectorXd base_pred(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      base_pred[i] = eta.predict(data.X.row(i).transpose());
    const Eigen::VectorXd base_ks = ks_deterministic(base_pred, data.s, data.groups());
    const double base_risk = (base_pred - data.y).squaredNorm() / double(data.rows());
    std::cout << "risk " << risk << " (base " << base_risk << "), max KS gap " << ks.maxCoeff()
              << " (base " << base_ks.maxCoeff() << ")\n";
    if (!out_report.empty()) {
      nlohmann::json j;
      j["risk"] = risk;
      j["base_risk"] = base_risk;
      j["ks"] = detail::to_std(ks);
      j["base_ks"] = detail::to_std(base_ks);
      j["groups"] = data.group_names;
      detail::atomic_write(out_report, j.dump(2) + "\n");
    }
  });

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "risk/unfairness trade-off over a slack range");
  std::string eps_list = "0.5,0.25,0.125,0.0625";
  long reps = 3;
  std::string sweep_out;
  std::uint64_t sweep_seed = 0;
  long sweep_T = 10000;
  std::string sweep_method = "sgd3_acsa2";
  double sweep_bound = 0.0;
  add_schema(sweep);
  sweep->add_option("--eps-list", eps_list, "comma-separated slack values");
  sweep->add_option("--reps", reps, "repetitions per slack value");
  sweep->add_option("--T", sweep_T, "oracle budget");
  sweep->add_option("--method", sweep_method, "optimizer");
  sweep->add_option("--seed", sweep_seed, "base seed; per-run seeds are derived");
  sweep->add_option("--bound", sweep_bound, "clamp bound; 0 derives max(1, max |y|)");
  sweep->add_option("--out", sweep_out, "output CSV")->required();
  sweep->callback([&]() {
    const CsvSchema schema{split_names(features), sensitive, target};
    const Dataset data = load_csv(data_path, schema);
    const std::vector<std::string> eps_values = split_names(eps_list);
    std::string content = "eps,reps,mean_risk,std_risk,mean_ks,std_ks\n";
    char buf[160];
    for (std::size_t e = 0; e < eps_values.size(); ++e) {
      const double eps = std::stod(eps_values[e]);
      std::vector<double> risks, gaps;
      for (long rep = 0; rep < reps; ++rep) {
        const std::uint64_t seed = derive_seed(sweep_seed, e, std::uint64_t(rep));
        const SplitResult parts = split(data, 0.4, 0.4, seed);
        const double b =
            sweep_bound > 0.0 ? sweep_bound
                              : std::max(1.0, parts.train.y.cwiseAbs().maxCoeff());
        const LinearModel eta = fit_least_squares(parts.train.X, parts.train.y, 0.0, b);
        const MulticlassLogistic tau =
            fit_logistic(parts.train.X, parts.train.s, data.groups(), 1e-4, 500);
        const SimplexVector p = estimate_marginals(parts.train.s, data.groups());
        PostprocessConfig cfg;
        cfg.budget = sweep_T;
        cfg.bound = b;
        cfg.eps = Eigen::VectorXd::Constant(1, eps);
        cfg.method = parse_method(sweep_method);
        cfg.seed = seed;
        const PostprocessResult result =
            dp_postprocess(cfg, p, make_predictors(eta, tau), parts.unlabeled.X);
        risks.push_back(empirical_risk(result.policy, parts.test.X, parts.test.y));
        gaps.push_back(ks_unfairness(result.policy, parts.test.X, parts.test.s, data.groups())
                           .maxCoeff());
      }
      auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= double(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var = v.size() > 1 ? var / double(v.size() - 1) : 0.0;
        return std::pair<double, double>(mean, std::sqrt(var));
      };
      const auto [mr, sr] = stats(risks);
      const auto [mk, sk] = stats(gaps);
      std::snprintf(buf, sizeof(buf), "%.17g,%ld,%.17g,%.17g,%.17g,%.17g\n", eps, reps, mr, sr,
                    mk, sk);
      content += buf;
      std::cout << "eps " << eps << ": risk " << mr << " +- " << sr << ", KS " << mk << " +- "
                << sk << "\n";
    }
    detail::atomic_write(sweep_out, content);
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
