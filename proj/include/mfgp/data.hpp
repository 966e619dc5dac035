#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct FidelityDataset {
  int level = 1;
  MatrixXd X;  // n x d
  VectorXd Y;  // n
  MatrixXd G;  // n x d, or empty
  std::vector<std::string> meta;

  Eigen::Index size() const { return X.rows(); }
  int dim() const { return static_cast<int>(X.cols()); }
  bool has_gradients() const { return G.size() > 0; }
  void validate() const;
};

using Datasets = std::vector<FidelityDataset>;

// Sorted by level; levels must be 1..L without gaps.
void validate_datasets(const Datasets& data);
int max_level(const Datasets& data);
bool all_have_gradients(const Datasets& data);

// Multifidelity Branin: level 3 is the high-fidelity function.
struct BraninValue {
  double value = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
};
BraninValue branin_eval(const Eigen::Vector2d& x, int level);

inline constexpr double kBraninLower[2] = {-5.0, 0.0};
inline constexpr double kBraninUpper[2] = {10.0, 15.0};

enum class Density { kSparse, kMedium, kDense };
Density parse_density(const std::string& s);
const char* to_string(Density d);
// Point counts for levels 1, 2, 3.
std::array<int, 3> plan_counts(Density d);

// Entry l-1 holds the inputs of level l: corners and centre, then uniform draws.
std::vector<MatrixXd> sample_plan(Density d, std::uint64_t seed);
Datasets branin_datasets(Density d, std::uint64_t seed, bool with_gradients = true);
MatrixXd uniform_box(int n, std::uint64_t seed);
inline constexpr std::uint64_t kBraninTestSeed = 20201;

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
};
Metrics metrics(const VectorXd& pred, const VectorXd& truth);

struct Normalizer {
  VectorXd x_shift;
  VectorXd x_scale;
  double y_shift = 0.0;
  double y_scale = 1.0;

  // Pooled statistics over every input point and every output value.
  static Normalizer fit(const Datasets& data);
  static Normalizer identity(int dim);

  MatrixXd to_x(const MatrixXd& x) const;
  MatrixXd from_x(const MatrixXd& x) const;
  VectorXd to_y(const VectorXd& y) const;
  VectorXd from_y(const VectorXd& y) const;
  // Row-wise gradient rescaling by x_scale / y_scale and its inverse.
  MatrixXd to_g(const MatrixXd& g) const;
  MatrixXd from_g(const MatrixXd& g) const;

  Datasets apply(const Datasets& data) const;
  Datasets invert(const Datasets& data) const;
};

std::pair<Normalizer, Datasets> normalize(const Datasets& data);

// CSV with header fidelity,x1..xd,y[,g1..gd].
Datasets read_csv(std::istream& in);
Datasets load_csv(const std::string& path);
void write_csv(std::ostream& out, const Datasets& data);
void save_csv(const std::string& path, const Datasets& data);

}  // namespace mfgp
