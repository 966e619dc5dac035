#pragma once

// Run orchestration shared by the C API and the command-line tool: data
// sources, model families, training, prediction, slices and benchmarks.

#include "mfgp/data.hpp"
#include "mfgp/deep_gp.hpp"
#include "mfgp/lmc.hpp"
#include "mfgp/optim.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mfgp {

enum class Family { kLmc, kLmcGrad, kDgp, kDgpGrad, kGpSingle };

Family parse_family(const std::string& s);
const char* to_string(Family f);

struct RunConfig {
  Family family = Family::kDgpGrad;
  std::string objective;  // elbo | pll | mll; empty picks the family default
  Schedule schedule = Schedule::standard();
  double beta = 1.0;
  int samples_train = 30;
  int samples_predict = 300;
  std::uint64_t seed = 0;
  std::string source = "branin:medium";  // branin:<density> | csv:<path>
  std::string test_source;               // csv:<path>; empty = Branin test set
  std::string inducing = "auto";         // auto | full | dense
  int dense_m = 40;
  std::string output_dir;

  std::string resolved_objective() const;
  bool dense_inducing() const;
  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from `j` keep the values already in `base`.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  static RunConfig from_json(const nlohmann::json& j);
};

// Training data in original units for a configured source and seed.
Datasets load_source(const std::string& source, std::uint64_t seed);

struct TestSet {
  MatrixXd X;
  VectorXd y;
};
// Highest-fidelity truth: Branin f3 at 100 uniform points, or the top level of a CSV.
TestSet load_test_set(const RunConfig& cfg);

struct Prediction {
  MatrixXd X;
  VectorXd mean;
  VectorXd std;  // total standard deviation
};

class TrainedModel {
 public:
  TrainedModel(RunConfig cfg, Datasets raw);

  const RunConfig& config() const { return cfg_; }
  const Normalizer& normalizer() const { return norm_; }
  const Datasets& raw_data() const { return raw_; }
  int dim() const { return static_cast<int>(norm_.x_shift.size()); }
  bool trained() const { return trained_; }
  const LossTrace& trace() const { return trace_; }

  void train();
  // Predictions in original units at the highest fidelity.
  Prediction predict(const MatrixXd& x) const;

  nlohmann::json to_json() const;
  static std::unique_ptr<TrainedModel> from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static std::unique_ptr<TrainedModel> load(const std::string& path);

  const LMCModel* lmc() const { return lmc_.get(); }
  const DeepGPModel* dgp() const { return dgp_.get(); }

 private:
  RunConfig cfg_;
  Datasets raw_;
  Normalizer norm_;
  std::unique_ptr<LMCModel> lmc_;
  std::unique_ptr<DeepGPModel> dgp_;
  LossTrace trace_;
  bool trained_ = false;
};

struct RunResult {
  Metrics metrics;
  LossTrace trace;
  double seconds = 0.0;
};

// Trains one model and scores it on the configured test set.
RunResult run_single(const RunConfig& cfg, std::unique_ptr<TrainedModel>* keep = nullptr);

// Full train command: writes model.json, loss.csv, metrics.json and manifest.json.
nlohmann::json train_command(const RunConfig& cfg);

struct BenchmarkEntry {
  Family family;
  std::string objective;
};

// Default rows: lmc, lmc-grad, dgp x {elbo, pll}, dgp-grad x {elbo, pll}.
std::vector<BenchmarkEntry> default_benchmark_entries();
std::vector<BenchmarkEntry> parse_benchmark_entries(const std::string& list);

struct BenchmarkOptions {
  RunConfig base;
  std::vector<BenchmarkEntry> entries = default_benchmark_entries();
  int seeds = 5;
  int jobs = 1;
  // KL weight for gradient deep GPs only; unset keeps base.beta.
  std::optional<double> grad_dgp_beta;
  // Called after every finished run.
  std::function<void(const BenchmarkEntry&, std::uint64_t, const RunResult&)> on_run;
};

// Profile defaults for a data source: CSV data gets grad_dgp_beta = 2.
void apply_source_profile(BenchmarkOptions& opt);

// Runs entries x seeds (seed base+0..k-1). The returned table has no timing in it.
nlohmann::json benchmark(const BenchmarkOptions& opt);
// Writes metrics.json, metrics.csv and manifest.json to base.output_dir.
nlohmann::json benchmark_command(const BenchmarkOptions& opt);

struct SliceSpec {
  int sweep_dim = 1;  // 0-based
  std::vector<std::pair<int, double>> fixed;
  double lo = 0.0, hi = 0.0;  // empty range picks the data bounds
  int points = 200;
};

struct SliceTable {
  VectorXd sweep;
  VectorXd mean, lo, hi;
  std::optional<VectorXd> truth;
};

// Parses "x1=2.5" style assignments (1-based names).
std::pair<int, double> parse_fix(const std::string& s, int dim);
SliceTable slice(const TrainedModel& model, const SliceSpec& spec);
void write_slice_csv(const std::string& path, const SliceTable& t, int sweep_dim);
void write_predictions_csv(const std::string& path, const Prediction& p);
void write_loss_csv(const std::string& path, const LossTrace& trace);
MatrixXd read_points_csv(const std::string& path, int dim);

nlohmann::json manifest(const std::string& command, const nlohmann::json& config,
                        double wall_seconds);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);
const char* version_string();

}  // namespace mfgp
