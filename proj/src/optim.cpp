#include "mfgp/optim.hpp"

#include "mfgp/error.hpp"

#include <cmath>

namespace mfgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

const char* kind_name(Constraint k) {
  switch (k) {
    case Constraint::kFree: return "free";
    case Constraint::kPositive: return "positive";
    case Constraint::kLowerFactor: return "lower_factor";
    case Constraint::kUpperTriangular: return "upper_triangular";
  }
  return "free";
}

ad::Var constrain_var(const ad::Var& raw, Constraint kind, double lower) {
  switch (kind) {
    case Constraint::kFree: return raw;
    case Constraint::kPositive: return lower > 0.0 ? ad::exp(raw) + lower : ad::exp(raw);
    case Constraint::kLowerFactor: return ad::tril_factor(raw);
    case Constraint::kUpperTriangular: return ad::triu(raw);
  }
  return raw;
}

// Coordinates of a raw matrix that the optimizer may move.
bool active_entry(Constraint kind, Eigen::Index i, Eigen::Index j) {
  if (kind == Constraint::kLowerFactor) return i >= j;
  if (kind == Constraint::kUpperTriangular) return i <= j;
  return true;
}

}  // namespace

MatrixXd constrain(const MatrixXd& raw, Constraint kind, double lower) {
  switch (kind) {
    case Constraint::kFree: return raw;
    case Constraint::kPositive: return (raw.array().exp() + lower).matrix();
    case Constraint::kLowerFactor: {
      MatrixXd out = raw.triangularView<Eigen::StrictlyLower>();
      out.diagonal() = raw.diagonal().array().exp().matrix();
      return out;
    }
    case Constraint::kUpperTriangular: return raw.triangularView<Eigen::Upper>();
  }
  return raw;
}

MatrixXd unconstrain(const MatrixXd& value, Constraint kind, double lower) {
  switch (kind) {
    case Constraint::kFree: return value;
    case Constraint::kPositive:
      if (((value.array() - lower) <= 0.0).any())
        throw InvalidArgument("positive parameter at or below its lower bound");
      return (value.array() - lower).log().matrix();
    case Constraint::kLowerFactor: {
      if (value.rows() != value.cols()) throw InvalidArgument("factor must be square");
      if ((value.diagonal().array() <= 0.0).any())
        throw InvalidArgument("factor diagonal must be positive");
      MatrixXd out = value.triangularView<Eigen::StrictlyLower>();
      out.diagonal() = value.diagonal().array().log().matrix();
      return out;
    }
    case Constraint::kUpperTriangular: return value.triangularView<Eigen::Upper>();
  }
  return value;
}

int ParamRegistry::add(const std::string& name, const MatrixXd& value, Constraint kind,
                       double lower) {
  if (contains(name)) throw InvalidArgument("parameter '" + name + "' registered twice");
  Entry e;
  e.name = name;
  e.kind = kind;
  e.lower = lower;
  e.raw = unconstrain(value, kind, lower);
  entries_.push_back(std::move(e));
  return count() - 1;
}

int ParamRegistry::id(const std::string& name) const {
  for (int i = 0; i < count(); ++i)
    if (entries_[i].name == name) return i;
  throw InvalidArgument("unknown parameter '" + name + "'");
}

bool ParamRegistry::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

MatrixXd ParamRegistry::value(int i) const {
  const Entry& e = entries_.at(i);
  return constrain(e.raw, e.kind, e.lower);
}

double ParamRegistry::scalar(const std::string& name) const {
  MatrixXd v = value(name);
  if (v.size() != 1) throw InvalidArgument("parameter '" + name + "' is not a scalar");
  return v(0, 0);
}

void ParamRegistry::set_value(int i, const MatrixXd& value) {
  Entry& e = entries_.at(i);
  if (value.rows() != e.raw.rows() || value.cols() != e.raw.cols())
    throw InvalidArgument("parameter '" + e.name + "': shape change on set_value");
  e.raw = unconstrain(value, e.kind, e.lower);
}

void ParamRegistry::set_trainable(const std::string& name, bool trainable) {
  entries_[id(name)].trainable = trainable;
}

Eigen::Index ParamRegistry::size() const {
  Eigen::Index n = 0;
  for (const auto& e : entries_)
    if (e.trainable)
      for (Eigen::Index j = 0; j < e.raw.cols(); ++j)
        for (Eigen::Index i = 0; i < e.raw.rows(); ++i) n += active_entry(e.kind, i, j);
  return n;
}

VectorXd ParamRegistry::unconstrained() const {
  VectorXd out(size());
  Eigen::Index k = 0;
  for (const auto& e : entries_) {
    if (!e.trainable) continue;
    for (Eigen::Index j = 0; j < e.raw.cols(); ++j)
      for (Eigen::Index i = 0; i < e.raw.rows(); ++i)
        if (active_entry(e.kind, i, j)) out[k++] = e.raw(i, j);
  }
  return out;
}

void ParamRegistry::set_unconstrained(const VectorXd& flat) {
  if (flat.size() != size()) throw InvalidArgument("flat parameter vector has wrong length");
  Eigen::Index k = 0;
  for (auto& e : entries_) {
    if (!e.trainable) continue;
    for (Eigen::Index j = 0; j < e.raw.cols(); ++j)
      for (Eigen::Index i = 0; i < e.raw.rows(); ++i)
        if (active_entry(e.kind, i, j)) e.raw(i, j) = flat[k++];
  }
}

std::string ParamRegistry::name_of(Eigen::Index idx) const {
  Eigen::Index k = 0;
  for (const auto& e : entries_) {
    if (!e.trainable) continue;
    for (Eigen::Index j = 0; j < e.raw.cols(); ++j)
      for (Eigen::Index i = 0; i < e.raw.rows(); ++i)
        if (active_entry(e.kind, i, j)) {
          if (k == idx) {
            if (e.raw.size() == 1) return e.name;
            return e.name + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
          }
          ++k;
        }
  }
  return "?";
}

ParamRegistry::Bound ParamRegistry::bind(ad::Tape& tape) const {
  Bound b;
  for (const auto& e : entries_) {
    ad::Var raw = e.trainable ? tape.variable(e.raw) : tape.constant(e.raw);
    b.raw.push_back(raw);
    b.value.push_back(constrain_var(raw, e.kind, e.lower));
  }
  return b;
}

VectorXd ParamRegistry::gradient(const ad::Tape& tape, const Bound& bound) const {
  VectorXd out(size());
  Eigen::Index k = 0;
  for (int p = 0; p < count(); ++p) {
    const Entry& e = entries_[p];
    if (!e.trainable) continue;
    MatrixXd g = tape.gradient(bound.raw[p]);
    for (Eigen::Index j = 0; j < e.raw.cols(); ++j)
      for (Eigen::Index i = 0; i < e.raw.rows(); ++i)
        if (active_entry(e.kind, i, j)) out[k++] = g(i, j);
  }
  return out;
}

json ParamRegistry::to_json() const {
  json arr = json::array();
  for (const auto& e : entries_) {
    json j;
    j["name"] = e.name;
    j["kind"] = kind_name(e.kind);
    j["lower"] = e.lower;
    j["trainable"] = e.trainable;
    j["rows"] = e.raw.rows();
    j["cols"] = e.raw.cols();
    j["raw"] = std::vector<double>(e.raw.data(), e.raw.data() + e.raw.size());
    j["value"] = [&] {
      MatrixXd v = constrain(e.raw, e.kind, e.lower);
      return std::vector<double>(v.data(), v.data() + v.size());
    }();
    arr.push_back(std::move(j));
  }
  return arr;
}

void ParamRegistry::from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("parameter block must be an array");
  for (const auto& item : j) {
    const std::string name = item.at("name").get<std::string>();
    if (!contains(name)) throw SchemaError("unknown parameter '" + name + "' in saved state");
    Entry& e = entries_[id(name)];
    const auto rows = item.at("rows").get<Eigen::Index>();
    const auto cols = item.at("cols").get<Eigen::Index>();
    if (rows != e.raw.rows() || cols != e.raw.cols())
      throw SchemaError("parameter '" + name + "' has a different shape in saved state");
    const auto raw = item.at("raw").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(raw.size()) != rows * cols)
      throw SchemaError("parameter '" + name + "' raw size mismatch");
    e.raw = Eigen::Map<const MatrixXd>(raw.data(), rows, cols);
    if (item.contains("trainable")) e.trainable = item["trainable"].get<bool>();
  }
}

ObjectiveValue objective_gradient(Objective& objective, std::uint64_t seed) {
  ParamRegistry& reg = objective.params();
  ad::Tape tape;
  auto bound = reg.bind(tape);
  ad::Var out = objective.evaluate(tape, bound, seed);
  ObjectiveValue r;
  r.value = out.scalar();
  if (!std::isfinite(r.value)) throw NumericalFailure("objective is not finite");
  tape.backward(out);
  r.gradient = reg.gradient(tape, bound);
  for (Eigen::Index i = 0; i < r.gradient.size(); ++i)
    if (!std::isfinite(r.gradient[i]))
      throw NumericalFailure("non-finite gradient for parameter " + reg.name_of(i));
  return r;
}

void adam_step(ParamRegistry& registry, const VectorXd& grad, AdamState& s, double rate) {
  const Eigen::Index n = registry.size();
  if (grad.size() != n) throw InvalidArgument("adam: gradient length mismatch");
  if (s.m.size() != n) {
    s.m = VectorXd::Zero(n);
    s.v = VectorXd::Zero(n);
    s.step = 0;
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  VectorXd mhat = s.m / c1;
  VectorXd vhat = s.v / c2;
  VectorXd x = registry.unconstrained();
  x.array() -= rate * mhat.array() / (vhat.array().sqrt() + s.eps);
  registry.set_unconstrained(x);
}

Schedule Schedule::standard(std::uint64_t seed) {
  Schedule s;
  s.stages = {{800, 0.03}, {800, 0.01}, {800, 0.003}, {800, 0.001}};
  s.seed = seed;
  return s;
}

int Schedule::total_iterations() const {
  int n = 0;
  for (const auto& st : stages) n += st.iterations;
  return n;
}

void Schedule::validate() const {
  for (const auto& st : stages) {
    if (st.iterations <= 0) throw InvalidArgument("schedule stage needs iterations > 0");
    if (!(st.rate > 0.0)) throw InvalidArgument("schedule stage needs rate > 0");
  }
}

LossTrace run_schedule(Objective& objective, const Schedule& schedule, AdamState* state,
                       const std::function<void(const LossRecord&)>& on_step) {
  schedule.validate();
  AdamState local;
  AdamState& st = state ? *state : local;
  LossTrace trace;
  trace.reserve(schedule.total_iterations());
  int it = 0;
  for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
    const Stage& stage = schedule.stages[s];
    for (int k = 0; k < stage.iterations; ++k, ++it) {
      ObjectiveValue ov = objective_gradient(objective, derive_seed(schedule.seed, it));
      LossRecord rec{it, static_cast<int>(s), stage.rate, -ov.value};
      trace.push_back(rec);
      if (on_step) on_step(rec);
      adam_step(objective.params(), -ov.gradient, st, stage.rate);
    }
  }
  return trace;
}

GradientCheck check_gradient(Objective& objective, std::uint64_t seed, double step,
                             double floor) {
  ParamRegistry& reg = objective.params();
  GradientCheck out;
  out.analytic = objective_gradient(objective, seed).gradient;
  const VectorXd x0 = reg.unconstrained();
  out.numeric.resize(x0.size());
  auto value_at = [&](const VectorXd& x) {
    reg.set_unconstrained(x);
    ad::Tape tape;
    auto bound = reg.bind(tape);
    return objective.evaluate(tape, bound, seed).scalar();
  };
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    VectorXd xp = x0, xm = x0;
    xp[i] += step;
    xm[i] -= step;
    out.numeric[i] = (value_at(xp) - value_at(xm)) / (2.0 * step);
  }
  reg.set_unconstrained(x0);
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double a = out.analytic[i], n = out.numeric[i];
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (rel > out.max_rel_error || out.worst < 0) {
      out.max_rel_error = std::max(out.max_rel_error, rel);
      if (rel >= out.max_rel_error) {
        out.worst = i;
        out.worst_name = reg.name_of(i);
      }
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mfgp
