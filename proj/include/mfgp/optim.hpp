#pragma once

#include "mfgp/autodiff.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mfgp {

enum class Constraint {
  kFree,
  kPositive,         // value = lower + exp(raw)
  kLowerFactor,      // strict lower part free, diagonal exp(raw)
  kUpperTriangular,  // upper part including the diagonal, free
};

// Named parameters stored in unconstrained form. Constrained values are
// derived on demand, so they stay valid after any update of the raw vector.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Constraint kind = Constraint::kFree;
    double lower = 0.0;
    bool trainable = true;
    Eigen::MatrixXd raw;
  };

  // Bound views of every parameter on one tape.
  struct Bound {
    std::vector<ad::Var> raw;
    std::vector<ad::Var> value;
    const ad::Var& operator[](int id) const { return value[id]; }
  };

  int add(const std::string& name, const Eigen::MatrixXd& value, Constraint kind,
          double lower = 0.0);
  int id(const std::string& name) const;
  bool contains(const std::string& name) const;
  const Entry& entry(int id) const { return entries_[id]; }
  int count() const { return static_cast<int>(entries_.size()); }

  Eigen::MatrixXd value(int id) const;
  Eigen::MatrixXd value(const std::string& name) const { return value(id(name)); }
  double scalar(const std::string& name) const;
  void set_value(int id, const Eigen::MatrixXd& value);
  void set_value(const std::string& name, const Eigen::MatrixXd& value) {
    set_value(id(name), value);
  }

  void set_trainable(const std::string& name, bool trainable);

  // Flat view over the raw entries of trainable parameters.
  Eigen::Index size() const;
  Eigen::VectorXd unconstrained() const;
  void set_unconstrained(const Eigen::VectorXd& flat);
  // Name of the parameter owning flat coordinate i.
  std::string name_of(Eigen::Index i) const;

  Bound bind(ad::Tape& tape) const;
  Eigen::VectorXd gradient(const ad::Tape& tape, const Bound& bound) const;

  nlohmann::json to_json() const;
  // Replaces raw values of matching names; shapes must agree.
  void from_json(const nlohmann::json& j);

 private:
  std::vector<Entry> entries_;
};

Eigen::MatrixXd constrain(const Eigen::MatrixXd& raw, Constraint kind, double lower);
Eigen::MatrixXd unconstrain(const Eigen::MatrixXd& value, Constraint kind, double lower);

// Something to maximize. evaluate() builds the objective on the tape from the
// bound parameters; the seed fixes every Monte Carlo draw.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual ParamRegistry& params() = 0;
  virtual ad::Var evaluate(ad::Tape& tape, const ParamRegistry::Bound& bound,
                           std::uint64_t seed) = 0;
};

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d unconstrained
};

// Throws NumericalFailure naming the parameter if any gradient entry is non-finite.
ObjectiveValue objective_gradient(Objective& objective, std::uint64_t seed);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam update of the raw parameters; grad is the gradient of a loss.
void adam_step(ParamRegistry& registry, const Eigen::VectorXd& grad, AdamState& state,
               double rate);

struct Stage {
  int iterations = 0;
  double rate = 0.0;
};

struct Schedule {
  std::vector<Stage> stages;
  std::uint64_t seed = 0;

  static Schedule standard(std::uint64_t seed = 0);
  int total_iterations() const;
  void validate() const;
};

struct LossRecord {
  int iteration = 0;
  int stage = 0;
  double rate = 0.0;
  double loss = 0.0;
};

using LossTrace = std::vector<LossRecord>;

// Minimizes -objective. Iteration t draws its Monte Carlo noise from a seed
// derived from schedule.seed and t.
LossTrace run_schedule(Objective& objective, const Schedule& schedule, AdamState* state = nullptr,
                       const std::function<void(const LossRecord&)>& on_step = {});

struct GradientCheck {
  double max_rel_error = 0.0;
  Eigen::Index worst = -1;
  std::string worst_name;
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
};

// Central differences in unconstrained space with common random numbers.
// rel error per coordinate: |a - n| / max(|a|, |n|, floor).
GradientCheck check_gradient(Objective& objective, std::uint64_t seed, double step = 1e-5,
                             double floor = 1e-6);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace mfgp
