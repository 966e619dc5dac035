// Command-line front end. Everything goes through the C interface.
#include "mfgp/mfgp.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using nlohmann::json;

namespace {

struct RunFlags {
  std::string config_path;
  std::optional<std::string> family, objective, density, data, test_data, inducing, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<int> samples_train, samples_predict, stage_iters, dense_m;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config_path, "JSON run config; flags override its keys");
  app->add_option("--family", f.family, "lmc | lmc-grad | dgp | dgp-grad | gp-single");
  app->add_option("--objective", f.objective, "elbo | pll | mll");
  app->add_option("--density", f.density, "Branin data: sparse | medium | dense");
  app->add_option("--data", f.data, "training CSV (fidelity,x1..xd,y[,g1..gd])");
  app->add_option("--test-data", f.test_data, "CSV whose highest fidelity is the test truth");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--beta", f.beta, "KL weight");
  app->add_option("--samples-train", f.samples_train, "Monte Carlo samples per training step");
  app->add_option("--samples-predict", f.samples_predict, "Monte Carlo samples at prediction");
  app->add_option("--stage-iters", f.stage_iters, "iterations in each of the schedule stages");
  app->add_option("--inducing", f.inducing, "auto | full | dense");
  app->add_option("--dense-m", f.dense_m, "inducing points per layer in the dense regime");
  app->add_option("--out", f.out, "output directory");
}

json read_file_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config '" + path + "'");
  return json::parse(in);
}

json build_config(const RunFlags& f) {
  json c = f.config_path.empty() ? json::object() : read_file_json(f.config_path);
  if (f.family) c["family"] = *f.family;
  if (f.objective) c["objective"] = *f.objective;
  if (f.density && f.data) throw std::runtime_error("--density and --data are exclusive");
  if (f.density) c["source"] = "branin:" + *f.density;
  if (f.data) c["source"] = "csv:" + *f.data;
  if (f.test_data) c["test_source"] = "csv:" + *f.test_data;
  if (f.seed) c["seed"] = *f.seed;
  if (f.beta) c["beta"] = *f.beta;
  if (f.samples_train) c["samples_train"] = *f.samples_train;
  if (f.samples_predict) c["samples_predict"] = *f.samples_predict;
  if (f.inducing) c["inducing"] = *f.inducing;
  if (f.dense_m) c["dense_m"] = *f.dense_m;
  if (f.out) c["output_dir"] = *f.out;
  if (f.stage_iters) {
    json st = json::array();
    for (double r : {0.03, 0.01, 0.003, 0.001}) st.push_back({*f.stage_iters, r});
    c["schedule"] = st;
  }
  return c;
}

int report(mfgp_status s) {
  if (s != MFGP_OK)
    std::cerr << "error (" << mfgp_status_name(s) << "): " << mfgp_last_error() << '\n';
  return mfgp_exit_code(s);
}

void print_and_free(char* s) {
  if (!s) return;
  std::cout << s << '\n';
  mfgp_string_free(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multifidelity Gaussian process surrogates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mfgp_version()));

  auto* gen = app.add_subcommand("gen-data", "write a Branin multifidelity dataset as CSV");
  std::string gen_density = "medium", gen_out;
  std::uint64_t gen_seed = 0;
  bool gen_nograd = false;
  gen->add_option("--density", gen_density, "sparse | medium | dense");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_flag("--no-gradients", gen_nograd, "omit gradient columns");
  gen->add_option("--out", gen_out, "output CSV")->required();

  auto* train = app.add_subcommand("train", "train one model");
  RunFlags train_flags;
  add_run_flags(train, train_flags);

  auto* predict = app.add_subcommand("predict", "predict mean and std at points");
  std::string pred_model, pred_points, pred_out;
  predict->add_option("--model", pred_model, "model.json from train")->required();
  predict->add_option("--points", pred_points, "CSV with columns x1..xd")->required();
  predict->add_option("--out", pred_out, "output CSV (default predictions.csv beside the model)");

  auto* bench = app.add_subcommand("benchmark", "family x objective matrix over seeds");
  RunFlags bench_flags;
  add_run_flags(bench, bench_flags);
  int bench_seeds = 5, bench_jobs = 1;
  std::string bench_models;
  bool bench_quiet = false;
  std::optional<double> bench_gbeta;
  bench->add_option("--seeds", bench_seeds, "runs per model with seeds seed+0..k-1");
  bench->add_option("--models", bench_models,
                    "comma list, e.g. lmc,lmc-grad,dgp-elbo,dgp-grad-pll (default: all six)");
  bench->add_option("--jobs", bench_jobs, "concurrent runs");
  bench->add_flag("--quiet", bench_quiet, "no per-run progress");
  bench->add_option("--grad-dgp-beta", bench_gbeta,
                    "KL weight for gradient deep GPs (default 2 for --data, else --beta)");

  auto* sl = app.add_subcommand("slice", "1-D sweep of a trained model");
  std::string sl_model, sl_out, sl_sweep;
  std::vector<std::string> sl_fix;
  std::optional<double> sl_lo, sl_hi;
  int sl_points = 200;
  sl->add_option("--model", sl_model, "model.json from train")->required();
  sl->add_option("--fix", sl_fix, "fixed coordinate, e.g. x1=2.5 (repeatable)");
  sl->add_option("--sweep", sl_sweep, "swept coordinate, e.g. x2");
  sl->add_option("--lo", sl_lo, "sweep start");
  sl->add_option("--hi", sl_hi, "sweep end");
  sl->add_option("--points", sl_points, "sweep resolution");
  sl->add_option("--out", sl_out, "output CSV (default slice.csv beside the model)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto beside = [](const std::string& model, const char* name) {
    const auto slash = model.find_last_of('/');
    return slash == std::string::npos ? std::string(name) : model.substr(0, slash + 1) + name;
  };

  try {
    if (*gen) {
      return report(mfgp_gen_data(("branin:" + gen_density).c_str(), gen_seed, gen_nograd ? 0 : 1,
                                  gen_out.c_str()));
    }
    if (*train) {
      const std::string cfg = build_config(train_flags).dump();
      char* metrics = nullptr;
      const mfgp_status s = mfgp_train(cfg.c_str(), &metrics);
      print_and_free(metrics);
      return report(s);
    }
    if (*predict) {
      const std::string out = pred_out.empty() ? beside(pred_model, "predictions.csv") : pred_out;
      return report(mfgp_predict_file(pred_model.c_str(), pred_points.c_str(), out.c_str()));
    }
    if (*bench) {
      json opt;
      opt["config"] = build_config(bench_flags);
      opt["seeds"] = bench_seeds;
      opt["jobs"] = bench_jobs;
      opt["progress"] = !bench_quiet;
      if (!bench_models.empty()) opt["models"] = bench_models;
      if (bench_gbeta) opt["grad_dgp_beta"] = *bench_gbeta;
      const std::string text = opt.dump();
      char* table = nullptr;
      const mfgp_status s = mfgp_benchmark(text.c_str(), &table);
      print_and_free(table);
      return report(s);
    }
    if (*sl) {
      json opt;
      if (!sl_sweep.empty()) opt["sweep"] = sl_sweep;
      opt["fix"] = sl_fix;
      if (sl_lo) opt["lo"] = *sl_lo;
      if (sl_hi) opt["hi"] = *sl_hi;
      opt["points"] = sl_points;
      const std::string out = sl_out.empty() ? beside(sl_model, "slice.csv") : sl_out;
      return report(mfgp_slice(sl_model.c_str(), opt.dump().c_str(), out.c_str()));
    }
  } catch (const std::exception& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return 2;
  }
  return 2;
}
