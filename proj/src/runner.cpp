#include "mfgp/runner.hpp"

#include "mfgp/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <mutex>
#include <sstream>

namespace mfgp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

json datasets_to_json(const Datasets& data) {
  json arr = json::array();
  for (const auto& ds : data) {
    json j;
    j["level"] = ds.level;
    json xs = json::array();
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < ds.X.cols(); ++c) row.push_back(ds.X(i, c));
      xs.push_back(row);
    }
    j["X"] = xs;
    j["Y"] = std::vector<double>(ds.Y.data(), ds.Y.data() + ds.Y.size());
    if (ds.has_gradients()) {
      json gs = json::array();
      for (Eigen::Index i = 0; i < ds.size(); ++i) {
        std::vector<double> row;
        for (Eigen::Index c = 0; c < ds.G.cols(); ++c) row.push_back(ds.G(i, c));
        gs.push_back(row);
      }
      j["G"] = gs;
    }
    arr.push_back(j);
  }
  return arr;
}

MatrixXd rows_to_matrix(const json& rows, const char* what) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) return MatrixXd();
  const auto d = static_cast<Eigen::Index>(rows.at(0).size());
  MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = rows.at(i).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != d)
      throw SchemaError(std::string("ragged rows in saved ") + what);
    for (Eigen::Index c = 0; c < d; ++c) m(i, c) = r[c];
  }
  return m;
}

Datasets datasets_from_json(const json& arr) {
  Datasets out;
  for (const auto& j : arr) {
    FidelityDataset ds;
    ds.level = j.at("level").get<int>();
    ds.X = rows_to_matrix(j.at("X"), "inputs");
    const auto y = j.at("Y").get<std::vector<double>>();
    ds.Y = Eigen::Map<const VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    if (j.contains("G")) ds.G = rows_to_matrix(j.at("G"), "gradients");
    out.push_back(std::move(ds));
  }
  validate_datasets(out);
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string density_of(const std::string& source) {
  return starts_with(source, "branin:") ? source.substr(7) : std::string();
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw InvalidArgument("an output directory is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << std::setprecision(17);
  return out;
}

}  // namespace

Family parse_family(const std::string& s) {
  if (s == "lmc") return Family::kLmc;
  if (s == "lmc-grad") return Family::kLmcGrad;
  if (s == "dgp") return Family::kDgp;
  if (s == "dgp-grad") return Family::kDgpGrad;
  if (s == "gp-single") return Family::kGpSingle;
  throw InvalidArgument("unknown model family '" + s + "' (lmc|lmc-grad|dgp|dgp-grad|gp-single)");
}

const char* to_string(Family f) {
  switch (f) {
    case Family::kLmc: return "lmc";
    case Family::kLmcGrad: return "lmc-grad";
    case Family::kDgp: return "dgp";
    case Family::kDgpGrad: return "dgp-grad";
    case Family::kGpSingle: return "gp-single";
  }
  return "?";
}

static bool is_dgp(Family f) { return f == Family::kDgp || f == Family::kDgpGrad; }

std::string RunConfig::resolved_objective() const {
  if (!objective.empty()) return objective;
  return is_dgp(family) ? "elbo" : "mll";
}

bool RunConfig::dense_inducing() const {
  if (inducing == "dense") return true;
  if (inducing == "full") return false;
  return source == "branin:dense";
}

void RunConfig::validate() const {
  const std::string obj = resolved_objective();
  if (obj != "elbo" && obj != "pll" && obj != "mll")
    throw InvalidArgument("unknown objective '" + obj + "' (elbo|pll|mll)");
  if (is_dgp(family) && obj == "mll")
    throw InvalidArgument("objective mll applies to lmc, lmc-grad and gp-single only");
  if (!is_dgp(family) && obj != "mll")
    throw InvalidArgument(std::string("objective ") + obj + " applies to dgp and dgp-grad only");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  if (samples_train < 1 || samples_predict < 1)
    throw InvalidArgument("sample counts must be >= 1");
  schedule.validate();
  if (inducing != "auto" && inducing != "full" && inducing != "dense")
    throw InvalidArgument("inducing must be auto, full or dense");
  if (dense_m < 1) throw InvalidArgument("dense inducing count must be >= 1");
  if (!starts_with(source, "branin:") && !starts_with(source, "csv:"))
    throw InvalidArgument("data source must be branin:<density> or csv:<path>");
  if (starts_with(source, "branin:")) parse_density(density_of(source));
  if (!test_source.empty() && !starts_with(test_source, "csv:"))
    throw InvalidArgument("test source must be csv:<path>");
}

json RunConfig::to_json() const {
  json j;
  j["family"] = to_string(family);
  j["objective"] = resolved_objective();
  json st = json::array();
  for (const auto& s : schedule.stages) st.push_back({s.iterations, s.rate});
  j["schedule"] = st;
  j["beta"] = beta;
  j["samples_train"] = samples_train;
  j["samples_predict"] = samples_predict;
  j["seed"] = seed;
  j["source"] = source;
  j["test_source"] = test_source;
  j["inducing"] = inducing;
  j["dense_m"] = dense_m;
  j["output_dir"] = output_dir;
  return j;
}

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw SchemaError("run config must be a JSON object");
  static const std::vector<std::string> known = {
      "family", "objective", "schedule", "beta", "samples_train", "samples_predict", "seed",
      "source", "test_source", "inducing", "dense_m", "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw SchemaError("unknown config key '" + it.key() + "'");
  try {
    if (j.contains("family")) c.family = parse_family(j["family"].get<std::string>());
    if (j.contains("objective")) c.objective = j["objective"].get<std::string>();
    if (j.contains("schedule")) {
      c.schedule.stages.clear();
      for (const auto& s : j["schedule"]) {
        if (!s.is_array() || s.size() != 2)
          throw SchemaError("schedule stages are [iterations, rate] pairs");
        c.schedule.stages.push_back({s[0].get<int>(), s[1].get<double>()});
      }
    }
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("samples_train")) c.samples_train = j["samples_train"].get<int>();
    if (j.contains("samples_predict")) c.samples_predict = j["samples_predict"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("source")) c.source = j["source"].get<std::string>();
    if (j.contains("test_source")) c.test_source = j["test_source"].get<std::string>();
    if (j.contains("inducing")) c.inducing = j["inducing"].get<std::string>();
    if (j.contains("dense_m")) c.dense_m = j["dense_m"].get<int>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig()); }

Datasets load_source(const std::string& source, std::uint64_t seed) {
  if (starts_with(source, "branin:"))
    return branin_datasets(parse_density(density_of(source)), seed, true);
  if (starts_with(source, "csv:")) return load_csv(source.substr(4));
  throw InvalidArgument("data source must be branin:<density> or csv:<path>");
}

TestSet load_test_set(const RunConfig& cfg) {
  TestSet t;
  if (!cfg.test_source.empty()) {
    Datasets d = load_csv(cfg.test_source.substr(4));
    const FidelityDataset& top = d.back();
    t.X = top.X;
    t.y = top.Y;
    return t;
  }
  if (!starts_with(cfg.source, "branin:"))
    throw InvalidArgument("csv sources need a test_source to be scored");
  t.X = uniform_box(100, kBraninTestSeed);
  t.y.resize(t.X.rows());
  for (Eigen::Index i = 0; i < t.X.rows(); ++i)
    t.y[i] = branin_eval(t.X.row(i).transpose(), 3).value;
  return t;
}

TrainedModel::TrainedModel(RunConfig cfg, Datasets raw) : cfg_(std::move(cfg)), raw_(std::move(raw)) {
  cfg_.validate();
  validate_datasets(raw_);
  Datasets train = raw_;
  if (cfg_.family == Family::kGpSingle) {
    FidelityDataset top = train.back();
    top.level = 1;
    train = {top};
  }
  const bool grad = cfg_.family == Family::kLmcGrad || cfg_.family == Family::kDgpGrad;
  if (grad && !all_have_gradients(train))
    throw InvalidArgument(std::string(to_string(cfg_.family)) +
                          " needs gradient columns at every fidelity");
  if (!grad)
    for (auto& ds : train) ds.G.resize(0, 0);
  auto [norm, data] = normalize(train);
  norm_ = norm;
  if (is_dgp(cfg_.family)) {
    DeepGPConfig c;
    c.grad_enhanced = grad;
    c.objective = parse_dgp_objective(cfg_.resolved_objective());
    c.beta = cfg_.beta;
    c.samples_train = cfg_.samples_train;
    c.samples_predict = cfg_.samples_predict;
    c.inducing = cfg_.dense_inducing() ? InducingRegime::kDense : InducingRegime::kFullRank;
    c.dense_m = cfg_.dense_m;
    c.seed = cfg_.seed;
    dgp_ = std::make_unique<DeepGPModel>(std::move(data), c);
  } else {
    LMCConfig c;
    c.grad_enhanced = grad;
    c.seed = cfg_.seed;
    lmc_ = std::make_unique<LMCModel>(std::move(data), c);
  }
}

void TrainedModel::train() {
  Schedule s = cfg_.schedule;
  s.seed = cfg_.seed;
  if (dgp_)
    trace_ = run_schedule(*dgp_, s);
  else
    trace_ = train_lmc(*lmc_, s);
  trained_ = true;
}

Prediction TrainedModel::predict(const MatrixXd& x) const {
  if (x.cols() != dim())
    throw InvalidArgument("prediction inputs have " + std::to_string(x.cols()) +
                          " columns, model expects " + std::to_string(dim()));
  Prediction p;
  p.X = x;
  const MatrixXd xn = norm_.to_x(x);
  VectorXd mean, var;
  if (dgp_) {
    MixturePosterior mp =
        dgp_->predict(xn, cfg_.samples_predict, derive_seed(cfg_.seed, 0x9e37ULL));
    const VectorXd m = mp.mean(), v = mp.variance();
    const int w = mp.width;
    mean.resize(x.rows());
    var.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      mean[i] = m[i * w];
      var[i] = v[i * w];
    }
  } else {
    PosteriorGaussian g = lmc_->predict(xn);
    mean = g.mean;
    var = g.variance();
  }
  p.mean = norm_.from_y(mean);
  p.std = var.cwiseMax(0.0).cwiseSqrt() * norm_.y_scale;
  return p;
}

json TrainedModel::to_json() const {
  json j;
  j["format"] = "mfgp-model";
  j["version"] = kVersion;
  j["config"] = cfg_.to_json();
  j["data"] = datasets_to_json(raw_);
  j["trained"] = trained_;
  j["params"] = dgp_ ? dgp_->params().to_json() : lmc_->params().to_json();
  return j;
}

std::unique_ptr<TrainedModel> TrainedModel::from_json(const json& j) {
  try {
    if (j.value("format", "") != "mfgp-model") throw SchemaError("not a saved model");
    RunConfig cfg = RunConfig::from_json(j.at("config"));
    auto m = std::make_unique<TrainedModel>(cfg, datasets_from_json(j.at("data")));
    if (m->dgp_)
      m->dgp_->load_params(j.at("params"));
    else
      m->lmc_->params().from_json(j.at("params"));
    m->trained_ = j.at("trained").get<bool>();
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("saved model: ") + e.what());
  }
}

void TrainedModel::save(const std::string& path) const { write_json(path, to_json()); }

std::unique_ptr<TrainedModel> TrainedModel::load(const std::string& path) {
  return from_json(read_json(path));
}

RunResult run_single(const RunConfig& cfg, std::unique_ptr<TrainedModel>* keep) {
  const auto t0 = std::chrono::steady_clock::now();
  auto model = std::make_unique<TrainedModel>(cfg, load_source(cfg.source, cfg.seed));
  const TestSet test = load_test_set(cfg);
  model->train();
  RunResult r;
  r.metrics = metrics(model->predict(test.X).mean, test.y);
  r.trace = model->trace();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (keep) *keep = std::move(model);
  return r;
}

json train_command(const RunConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  auto model = std::make_unique<TrainedModel>(cfg, load_source(cfg.source, cfg.seed));
  model->train();
  const fs::path dir(cfg.output_dir);
  model->save((dir / "model.json").string());
  write_loss_csv((dir / "loss.csv").string(), model->trace());
  json m;
  m["family"] = to_string(cfg.family);
  m["objective"] = cfg.resolved_objective();
  m["seed"] = cfg.seed;
  m["final_loss"] = model->trace().empty() ? 0.0 : model->trace().back().loss;
  if (starts_with(cfg.source, "branin:") || !cfg.test_source.empty()) {
    const TestSet test = load_test_set(cfg);
    const Metrics mt = metrics(model->predict(test.X).mean, test.y);
    m["rmse"] = mt.rmse;
    m["mae"] = mt.mae;
  }
  write_json((dir / "metrics.json").string(), m);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json((dir / "manifest.json").string(), manifest("train", cfg.to_json(), wall));
  return m;
}

std::vector<BenchmarkEntry> default_benchmark_entries() {
  return {{Family::kLmc, "mll"},      {Family::kLmcGrad, "mll"},  {Family::kDgp, "elbo"},
          {Family::kDgp, "pll"},      {Family::kDgpGrad, "elbo"}, {Family::kDgpGrad, "pll"}};
}

std::vector<BenchmarkEntry> parse_benchmark_entries(const std::string& list) {
  std::vector<BenchmarkEntry> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    BenchmarkEntry e;
    std::string fam = item, obj;
    for (const char* o : {"elbo", "pll", "mll"}) {
      const std::string suf = std::string("-") + o;
      if (item.size() > suf.size() && item.compare(item.size() - suf.size(), suf.size(), suf) == 0) {
        fam = item.substr(0, item.size() - suf.size());
        obj = o;
      }
    }
    e.family = parse_family(fam);
    e.objective = obj.empty() ? (is_dgp(e.family) ? "elbo" : "mll") : obj;
    out.push_back(e);
  }
  if (out.empty()) throw InvalidArgument("benchmark needs at least one model");
  return out;
}

void apply_source_profile(BenchmarkOptions& opt) {
  if (starts_with(opt.base.source, "csv:")) opt.grad_dgp_beta = 2.0;
}

json benchmark(const BenchmarkOptions& opt) {
  if (opt.seeds < 1) throw InvalidArgument("benchmark needs --seeds >= 1");
  if (opt.jobs < 1) throw InvalidArgument("benchmark needs --jobs >= 1");
  if (opt.grad_dgp_beta && !(*opt.grad_dgp_beta > 0.0))
    throw InvalidArgument("grad_dgp_beta must be positive");
  struct Task {
    std::size_t entry;
    int k;
    RunConfig cfg;
  };
  std::vector<Task> tasks;
  for (std::size_t e = 0; e < opt.entries.size(); ++e) {
    for (int k = 0; k < opt.seeds; ++k) {
      RunConfig c = opt.base;
      c.family = opt.entries[e].family;
      c.objective = opt.entries[e].objective;
      c.seed = opt.base.seed + static_cast<std::uint64_t>(k);
      if (c.family == Family::kDgpGrad && opt.grad_dgp_beta) c.beta = *opt.grad_dgp_beta;
      c.output_dir.clear();
      c.validate();
      tasks.push_back({e, k, c});
    }
  }
  std::vector<RunResult> results(tasks.size());
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= tasks.size()) return;
        i = next++;
      }
      results[i] = run_single(tasks[i].cfg);
      if (opt.on_run) {
        std::lock_guard<std::mutex> lock(mu);
        opt.on_run(opt.entries[tasks[i].entry], tasks[i].cfg.seed, results[i]);
      }
    }
  };
  if (opt.jobs == 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    for (int j = 0; j < opt.jobs; ++j) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }

  json out;
  out["source"] = opt.base.source;
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < opt.seeds; ++k) seeds.push_back(opt.base.seed + static_cast<std::uint64_t>(k));
  out["seeds"] = seeds;
  json cfg = opt.base.to_json();
  if (opt.grad_dgp_beta) cfg["grad_dgp_beta"] = *opt.grad_dgp_beta;
  cfg.erase("family");
  cfg.erase("objective");
  cfg.erase("seed");
  cfg.erase("output_dir");
  out["config"] = cfg;
  json rows = json::array();
  for (std::size_t e = 0; e < opt.entries.size(); ++e) {
    std::vector<double> rmse, mae;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].entry != e) continue;
      rmse.push_back(results[i].metrics.rmse);
      mae.push_back(results[i].metrics.mae);
    }
    json r;
    r["model"] = to_string(opt.entries[e].family);
    r["objective"] = opt.entries[e].objective;
    r["rmse"] = rmse;
    r["mae"] = mae;
    r["median_rmse"] = median(rmse);
    r["median_mae"] = median(mae);
    rows.push_back(r);
  }
  out["rows"] = rows;
  return out;
}

json benchmark_command(const BenchmarkOptions& opt) {
  ensure_dir(opt.base.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  json table = benchmark(opt);
  const fs::path dir(opt.base.output_dir);
  write_json((dir / "metrics.json").string(), table);
  {
    std::ofstream out = open_out((dir / "metrics.csv").string());
    out << "model,objective,seed,rmse,mae\n";
    const auto seeds = table["seeds"].get<std::vector<std::uint64_t>>();
    for (const auto& r : table["rows"]) {
      const auto rmse = r["rmse"].get<std::vector<double>>();
      const auto mae = r["mae"].get<std::vector<double>>();
      const std::string m = r["model"], o = r["objective"];
      for (std::size_t k = 0; k < rmse.size(); ++k)
        out << m << ',' << o << ',' << seeds[k] << ',' << rmse[k] << ',' << mae[k] << '\n';
      out << m << ',' << o << ",median," << r["median_rmse"].get<double>() << ','
          << r["median_mae"].get<double>() << '\n';
    }
  }
  json cfg = opt.base.to_json();
  cfg["seeds"] = opt.seeds;
  if (opt.grad_dgp_beta) cfg["grad_dgp_beta"] = *opt.grad_dgp_beta;
  json models = json::array();
  for (const auto& e : opt.entries) models.push_back(std::string(to_string(e.family)) + "-" + e.objective);
  cfg["models"] = models;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json((dir / "manifest.json").string(), manifest("benchmark", cfg, wall));
  return table;
}

std::pair<int, double> parse_fix(const std::string& s, int dim) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq < 2 || s[0] != 'x')
    throw InvalidArgument("fixed coordinate must look like x1=2.5, got '" + s + "'");
  int k = 0;
  double v = 0.0;
  try {
    std::size_t used = 0;
    k = std::stoi(s.substr(1, eq - 1), &used);
    if (used != eq - 1) throw std::invalid_argument("index");
    const std::string rhs = s.substr(eq + 1);
    v = std::stod(rhs, &used);
    if (used != rhs.size()) throw std::invalid_argument("value");
  } catch (const std::exception&) {
    throw InvalidArgument("cannot parse fixed coordinate '" + s + "'");
  }
  if (k < 1 || k > dim)
    throw InvalidArgument("fixed coordinate x" + std::to_string(k) + " out of range 1.." +
                          std::to_string(dim));
  return {k - 1, v};
}

SliceTable slice(const TrainedModel& model, const SliceSpec& spec) {
  const int d = model.dim();
  if (spec.sweep_dim < 0 || spec.sweep_dim >= d) throw InvalidArgument("sweep dimension out of range");
  if (spec.points < 2) throw InvalidArgument("slice needs at least 2 points");
  const bool branin = starts_with(model.config().source, "branin:") && d == 2;
  VectorXd lo(d), hi(d);
  if (branin) {
    lo << kBraninLower[0], kBraninLower[1];
    hi << kBraninUpper[0], kBraninUpper[1];
  } else {
    lo = VectorXd::Constant(d, std::numeric_limits<double>::infinity());
    hi = -lo;
    for (const auto& ds : model.raw_data()) {
      lo = lo.cwiseMin(ds.X.colwise().minCoeff().transpose());
      hi = hi.cwiseMax(ds.X.colwise().maxCoeff().transpose());
    }
  }
  VectorXd base = 0.5 * (lo + hi);
  for (const auto& [k, v] : spec.fixed) {
    if (k == spec.sweep_dim) throw InvalidArgument("the sweep coordinate cannot also be fixed");
    base[k] = v;
  }
  double a = lo[spec.sweep_dim], b = hi[spec.sweep_dim];
  if (spec.hi > spec.lo) {
    a = spec.lo;
    b = spec.hi;
  }
  MatrixXd x = base.transpose().replicate(spec.points, 1);
  x.col(spec.sweep_dim) = VectorXd::LinSpaced(spec.points, a, b);
  const Prediction p = model.predict(x);
  SliceTable t;
  t.sweep = x.col(spec.sweep_dim);
  t.mean = p.mean;
  t.lo = p.mean - 2.0 * p.std;
  t.hi = p.mean + 2.0 * p.std;
  if (branin) {
    VectorXd truth(spec.points);
    for (int i = 0; i < spec.points; ++i) truth[i] = branin_eval(x.row(i).transpose(), 3).value;
    t.truth = truth;
  }
  return t;
}

void write_slice_csv(const std::string& path, const SliceTable& t, int sweep_dim) {
  std::ofstream out = open_out(path);
  out << 'x' << sweep_dim + 1 << ",mean,lo,hi" << (t.truth ? ",truth" : "") << '\n';
  for (Eigen::Index i = 0; i < t.sweep.size(); ++i) {
    out << t.sweep[i] << ',' << t.mean[i] << ',' << t.lo[i] << ',' << t.hi[i];
    if (t.truth) out << ',' << (*t.truth)[i];
    out << '\n';
  }
}

void write_predictions_csv(const std::string& path, const Prediction& p) {
  std::ofstream out = open_out(path);
  for (Eigen::Index c = 0; c < p.X.cols(); ++c) out << 'x' << c + 1 << ',';
  out << "mean,std\n";
  for (Eigen::Index i = 0; i < p.X.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.X.cols(); ++c) out << p.X(i, c) << ',';
    out << p.mean[i] << ',' << p.std[i] << '\n';
  }
}

void write_loss_csv(const std::string& path, const LossTrace& trace) {
  std::ofstream out = open_out(path);
  out << "iteration,stage,rate,loss\n";
  for (const auto& r : trace)
    out << r.iteration << ',' << r.stage << ',' << r.rate << ',' << r.loss << '\n';
}

MatrixXd read_points_csv(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      header.push_back(cell);
    }
  }
  std::vector<int> cols(dim);
  for (int k = 0; k < dim; ++k) {
    auto it = std::find(header.begin(), header.end(), "x" + std::to_string(k + 1));
    if (it == header.end())
      throw SchemaError("points file needs columns x1..x" + std::to_string(dim));
    cols[k] = static_cast<int>(it - header.begin());
  }
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw ParseError("wrong number of fields", lineno);
    std::vector<double> r(dim);
    for (int k = 0; k < dim; ++k) {
      try {
        std::size_t used = 0;
        r[k] = std::stod(cells[cols[k]], &used);
      } catch (const std::exception&) {
        throw ParseError("not a number: '" + cells[cols[k]] + "'", lineno);
      }
    }
    rows.push_back(r);
  }
  MatrixXd x(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int k = 0; k < dim; ++k) x(static_cast<Eigen::Index>(i), k) = rows[i][k];
  return x;
}

json manifest(const std::string& command, const json& config, double wall_seconds) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = config.value("seed", json(nullptr));
  m["version"] = kVersion;
  m["compiler"] = __VERSION__;
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
               "." + std::to_string(EIGEN_MINOR_VERSION);
  m["sampling_plans_nested"] = false;
  m["wall_time_seconds"] = wall_seconds;
  return m;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON in '") + path + "': " + e.what(), 0);
  }
}

const char* version_string() { return kVersion; }

}  // namespace mfgp
