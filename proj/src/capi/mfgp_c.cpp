#include "mfgp/mfgp.h"

#include "mfgp/error.hpp"
#include "mfgp/runner.hpp"

#include <cstring>
#include <iostream>

using nlohmann::json;

struct mfgp_model {
  std::unique_ptr<mfgp::TrainedModel> impl;
};

namespace {

thread_local std::string g_last_error;

mfgp_status from_code(mfgp::ErrorCode c) {
  switch (c) {
    case mfgp::ErrorCode::kInvalidArgument: return MFGP_ERR_INVALID_ARGUMENT;
    case mfgp::ErrorCode::kNumericalFailure: return MFGP_ERR_NUMERICAL;
    case mfgp::ErrorCode::kDomainError: return MFGP_ERR_DOMAIN;
    case mfgp::ErrorCode::kParseError: return MFGP_ERR_PARSE;
    case mfgp::ErrorCode::kSchemaError: return MFGP_ERR_SCHEMA;
    case mfgp::ErrorCode::kIoError: return MFGP_ERR_IO;
    case mfgp::ErrorCode::kStateError: return MFGP_ERR_STATE;
  }
  return MFGP_ERR_INTERNAL;
}

template <class F>
mfgp_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return MFGP_OK;
  } catch (const mfgp::Error& e) {
    g_last_error = e.what();
    return from_code(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("JSON: ") + e.what();
    return MFGP_ERR_SCHEMA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MFGP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return MFGP_ERR_INTERNAL;
  }
}

json parse(const char* text, const char* what) {
  if (!text) throw mfgp::InvalidArgument(std::string(what) + " is null");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw mfgp::ParseError(std::string(what) + ": " + e.what(), 1);
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void need(const void* p, const char* what) {
  if (!p) throw mfgp::InvalidArgument(std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* mfgp_version(void) { return mfgp::version_string(); }

const char* mfgp_last_error(void) { return g_last_error.c_str(); }

const char* mfgp_status_name(mfgp_status s) {
  switch (s) {
    case MFGP_OK: return "ok";
    case MFGP_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case MFGP_ERR_NUMERICAL: return "numerical-failure";
    case MFGP_ERR_DOMAIN: return "domain-error";
    case MFGP_ERR_PARSE: return "parse-error";
    case MFGP_ERR_SCHEMA: return "schema-error";
    case MFGP_ERR_IO: return "io-error";
    case MFGP_ERR_STATE: return "state-error";
    case MFGP_ERR_INTERNAL: return "internal-error";
  }
  return "unknown";
}

int mfgp_exit_code(mfgp_status s) {
  if (s == MFGP_OK) return 0;
  if (s == MFGP_ERR_NUMERICAL || s == MFGP_ERR_DOMAIN) return 3;
  return 2;
}

void mfgp_string_free(char* s) { std::free(s); }

mfgp_status mfgp_gen_data(const char* source, uint64_t seed, int with_gradients,
                          const char* path) {
  return guarded([&] {
    need(source, "source");
    need(path, "path");
    mfgp::Datasets d = mfgp::load_source(source, seed);
    if (!with_gradients)
      for (auto& ds : d) ds.G.resize(0, 0);
    mfgp::save_csv(path, d);
  });
}

mfgp_status mfgp_model_create(const char* config_json, mfgp_model** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    mfgp::RunConfig cfg = mfgp::RunConfig::from_json(parse(config_json, "config"));
    auto m = std::make_unique<mfgp_model>();
    m->impl = std::make_unique<mfgp::TrainedModel>(cfg, mfgp::load_source(cfg.source, cfg.seed));
    *out = m.release();
  });
}

mfgp_status mfgp_model_train(mfgp_model* model) {
  return guarded([&] {
    need(model, "model");
    model->impl->train();
  });
}

mfgp_status mfgp_model_load(const char* path, mfgp_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<mfgp_model>();
    m->impl = mfgp::TrainedModel::load(path);
    *out = m.release();
  });
}

mfgp_status mfgp_model_save(const mfgp_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->impl->save(path);
  });
}

void mfgp_model_free(mfgp_model* model) { delete model; }

mfgp_status mfgp_model_dim(const mfgp_model* model, int* dim) {
  return guarded([&] {
    need(model, "model");
    need(dim, "dim");
    *dim = model->impl->dim();
  });
}

mfgp_status mfgp_model_is_trained(const mfgp_model* model, int* trained) {
  return guarded([&] {
    need(model, "model");
    need(trained, "trained");
    *trained = model->impl->trained() ? 1 : 0;
  });
}

mfgp_status mfgp_model_predict(const mfgp_model* model, const double* x, size_t n, size_t d,
                               double* mean, double* std) {
  return guarded([&] {
    need(model, "model");
    if (n > 0) {
      need(x, "x");
      need(mean, "mean");
      need(std, "std");
    }
    if (!model->impl->trained()) throw mfgp::StateError("model has not been trained");
    if (static_cast<int>(d) != model->impl->dim())
      throw mfgp::InvalidArgument("input dimension " + std::to_string(d) + " does not match model");
    mfgp::MatrixXd xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (size_t i = 0; i < n; ++i)
      for (size_t c = 0; c < d; ++c) xs(i, c) = x[i * d + c];
    const mfgp::Prediction p = model->impl->predict(xs);
    for (size_t i = 0; i < n; ++i) {
      mean[i] = p.mean[i];
      std[i] = p.std[i];
    }
  });
}

mfgp_status mfgp_model_loss_json(const mfgp_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    json arr = json::array();
    for (const auto& r : model->impl->trace()) arr.push_back({r.iteration, r.stage, r.rate, r.loss});
    *out = dup(arr.dump());
  });
}

mfgp_status mfgp_train(const char* config_json, char** metrics_json) {
  return guarded([&] {
    mfgp::RunConfig cfg = mfgp::RunConfig::from_json(parse(config_json, "config"));
    json m = mfgp::train_command(cfg);
    if (metrics_json) *metrics_json = dup(m.dump(2));
  });
}

mfgp_status mfgp_predict_file(const char* model_path, const char* points_csv,
                              const char* out_csv) {
  return guarded([&] {
    need(model_path, "model path");
    need(points_csv, "points file");
    need(out_csv, "output path");
    auto m = mfgp::TrainedModel::load(model_path);
    if (!m->trained()) throw mfgp::StateError("model at '" + std::string(model_path) + "' is untrained");
    const mfgp::MatrixXd x = mfgp::read_points_csv(points_csv, m->dim());
    mfgp::write_predictions_csv(out_csv, m->predict(x));
  });
}

mfgp_status mfgp_benchmark(const char* options_json, char** table_json) {
  return guarded([&] {
    json j = parse(options_json, "benchmark options");
    mfgp::BenchmarkOptions opt;
    opt.base = mfgp::RunConfig::from_json(j.value("config", json::object()));
    if (j.contains("models")) opt.entries = mfgp::parse_benchmark_entries(j["models"].get<std::string>());
    opt.seeds = j.value("seeds", 5);
    opt.jobs = j.value("jobs", 1);
    mfgp::apply_source_profile(opt);
    if (j.contains("grad_dgp_beta")) {
      if (j["grad_dgp_beta"].is_null())
        opt.grad_dgp_beta.reset();
      else
        opt.grad_dgp_beta = j["grad_dgp_beta"].get<double>();
    }
    if (j.value("progress", false))
      opt.on_run = [](const mfgp::BenchmarkEntry& e, std::uint64_t seed, const mfgp::RunResult& r) {
        std::cerr << mfgp::to_string(e.family) << '-' << e.objective << " seed " << seed
                  << " rmse " << r.metrics.rmse << " mae " << r.metrics.mae << " (" << r.seconds
                  << " s)\n";
      };
    json t = mfgp::benchmark_command(opt);
    if (table_json) *table_json = dup(t.dump(2));
  });
}

mfgp_status mfgp_slice(const char* model_path, const char* options_json, const char* out_csv) {
  return guarded([&] {
    need(model_path, "model path");
    need(out_csv, "output path");
    json j = parse(options_json ? options_json : "{}", "slice options");
    auto m = mfgp::TrainedModel::load(model_path);
    if (!m->trained()) throw mfgp::StateError("model at '" + std::string(model_path) + "' is untrained");
    mfgp::SliceSpec spec;
    std::vector<int> fixed;
    for (const auto& f : j.value("fix", json::array())) {
      spec.fixed.push_back(mfgp::parse_fix(f.get<std::string>(), m->dim()));
      fixed.push_back(spec.fixed.back().first);
    }
    if (j.contains("sweep")) {
      const std::string s = j["sweep"].get<std::string>();
      spec.sweep_dim = mfgp::parse_fix(s + "=0", m->dim()).first;
    } else {
      spec.sweep_dim = -1;
      for (int k = m->dim() - 1; k >= 0 && spec.sweep_dim < 0; --k)
        if (std::find(fixed.begin(), fixed.end(), k) == fixed.end()) spec.sweep_dim = k;
      if (spec.sweep_dim < 0) throw mfgp::InvalidArgument("every coordinate is fixed");
    }
    spec.lo = j.value("lo", 0.0);
    spec.hi = j.value("hi", 0.0);
    spec.points = j.value("points", 200);
    mfgp::write_slice_csv(out_csv, mfgp::slice(*m, spec), spec.sweep_dim);
  });
}

}  // extern "C"
