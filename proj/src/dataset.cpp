#include "mfgp/data.hpp"
#include "mfgp/error.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace mfgp {

void FidelityDataset::validate() const {
  if (level < 1) throw InvalidArgument("dataset level must be >= 1");
  if (Y.size() != X.rows())
    throw InvalidArgument("dataset level " + std::to_string(level) + ": " +
                          std::to_string(X.rows()) + " inputs but " +
                          std::to_string(Y.size()) + " outputs");
  if (has_gradients() && (G.rows() != X.rows() || G.cols() != X.cols()))
    throw InvalidArgument("dataset level " + std::to_string(level) +
                          ": gradient block shape does not match inputs");
}

void validate_datasets(const Datasets& data) {
  if (data.empty()) throw InvalidArgument("no datasets");
  const int d = data.front().dim();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].validate();
    if (data[i].level != static_cast<int>(i) + 1)
      throw InvalidArgument("datasets must be ordered by level 1..L without gaps");
    if (data[i].dim() != d) throw InvalidArgument("datasets disagree on input dimension");
  }
}

int max_level(const Datasets& data) { return data.empty() ? 0 : data.back().level; }

bool all_have_gradients(const Datasets& data) {
  for (const auto& ds : data)
    if (!ds.has_gradients() && ds.size() > 0) return false;
  return !data.empty();
}

Normalizer Normalizer::identity(int dim) {
  Normalizer n;
  n.x_shift = VectorXd::Zero(dim);
  n.x_scale = VectorXd::Ones(dim);
  return n;
}

Normalizer Normalizer::fit(const Datasets& data) {
  validate_datasets(data);
  const int d = data.front().dim();
  Eigen::Index n = 0;
  for (const auto& ds : data) n += ds.size();
  if (n == 0) throw InvalidArgument("normalize: no data");
  MatrixXd x(n, d);
  VectorXd y(n);
  Eigen::Index r = 0;
  for (const auto& ds : data) {
    x.middleRows(r, ds.size()) = ds.X;
    y.segment(r, ds.size()) = ds.Y;
    r += ds.size();
  }
  Normalizer out;
  out.x_shift = x.colwise().mean().transpose();
  out.x_scale.resize(d);
  for (int a = 0; a < d; ++a) {
    const double s = std::sqrt((x.col(a).array() - out.x_shift[a]).square().mean());
    if (!(s > 0.0))
      throw InvalidArgument("normalize: input dimension " + std::to_string(a + 1) +
                            " has zero variance");
    out.x_scale[a] = s;
  }
  out.y_shift = y.mean();
  out.y_scale = std::sqrt((y.array() - out.y_shift).square().mean());
  if (!(out.y_scale > 0.0)) throw InvalidArgument("normalize: outputs have zero variance");
  return out;
}

MatrixXd Normalizer::to_x(const MatrixXd& x) const {
  return ((x.rowwise() - x_shift.transpose()).array().rowwise() / x_scale.transpose().array())
      .matrix();
}

MatrixXd Normalizer::from_x(const MatrixXd& x) const {
  return ((x.array().rowwise() * x_scale.transpose().array()).matrix().rowwise() +
          x_shift.transpose());
}

VectorXd Normalizer::to_y(const VectorXd& y) const {
  return ((y.array() - y_shift) / y_scale).matrix();
}

VectorXd Normalizer::from_y(const VectorXd& y) const {
  return (y.array() * y_scale + y_shift).matrix();
}

MatrixXd Normalizer::to_g(const MatrixXd& g) const {
  return (g.array().rowwise() * (x_scale.transpose().array() / y_scale)).matrix();
}

MatrixXd Normalizer::from_g(const MatrixXd& g) const {
  return (g.array().rowwise() * (y_scale / x_scale.transpose().array())).matrix();
}

Datasets Normalizer::apply(const Datasets& data) const {
  Datasets out = data;
  for (auto& ds : out) {
    ds.X = to_x(ds.X);
    ds.Y = to_y(ds.Y);
    if (ds.has_gradients()) ds.G = to_g(ds.G);
  }
  return out;
}

Datasets Normalizer::invert(const Datasets& data) const {
  Datasets out = data;
  for (auto& ds : out) {
    ds.X = from_x(ds.X);
    ds.Y = from_y(ds.Y);
    if (ds.has_gradients()) ds.G = from_g(ds.G);
  }
  return out;
}

std::pair<Normalizer, Datasets> normalize(const Datasets& data) {
  Normalizer n = Normalizer::fit(data);
  return {n, n.apply(data)};
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, long line, const std::string& column) {
  if (s.empty()) throw ParseError("empty value in column '" + column + "'", line);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw ParseError("cannot parse '" + s + "' in column '" + column + "'", line);
  return v;
}

}  // namespace

Datasets read_csv(std::istream& in) {
  std::string line;
  long lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split(line);
    break;
  }
  if (header.empty()) throw SchemaError("csv: missing header row");
  if (header[0] != "fidelity") throw SchemaError("csv: first column must be 'fidelity'");
  int d = 0;
  while (1 + d < static_cast<int>(header.size()) && header[1 + d] == "x" + std::to_string(d + 1))
    ++d;
  if (d == 0) throw SchemaError("csv: expected input columns x1..xd");
  if (static_cast<int>(header.size()) < d + 2 || header[1 + d] != "y")
    throw SchemaError("csv: expected column 'y' after x1..x" + std::to_string(d));
  const int extra = static_cast<int>(header.size()) - (d + 2);
  if (extra != 0 && extra != d)
    throw SchemaError("csv: gradient columns must be g1..g" + std::to_string(d) +
                      " or absent, found " + std::to_string(extra) + " extra columns");
  const bool grads = extra == d;
  for (int a = 0; a < extra; ++a)
    if (header[d + 2 + a] != "g" + std::to_string(a + 1))
      throw SchemaError("csv: expected column g" + std::to_string(a + 1) + ", found '" +
                        header[d + 2 + a] + "'");

  struct Row {
    VectorXd x, g;
    double y;
  };
  std::map<int, std::vector<Row>> groups;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       lineno);
    const double lv = parse_double(cells[0], lineno, "fidelity");
    if (lv < 1.0 || lv != std::floor(lv) || lv > std::numeric_limits<int>::max())
      throw ParseError("fidelity must be a positive integer, got '" + cells[0] + "'", lineno);
    Row r;
    r.x.resize(d);
    for (int a = 0; a < d; ++a) r.x[a] = parse_double(cells[1 + a], lineno, header[1 + a]);
    r.y = parse_double(cells[1 + d], lineno, "y");
    if (grads) {
      r.g.resize(d);
      for (int a = 0; a < d; ++a)
        r.g[a] = parse_double(cells[d + 2 + a], lineno, header[d + 2 + a]);
    }
    groups[static_cast<int>(lv)].push_back(std::move(r));
  }
  if (groups.empty()) throw SchemaError("csv: no data rows");

  Datasets out;
  const int top = groups.rbegin()->first;
  for (int l = 1; l <= top; ++l) {
    FidelityDataset ds;
    ds.level = l;
    auto it = groups.find(l);
    const std::size_t n = it == groups.end() ? 0 : it->second.size();
    ds.X.resize(static_cast<Eigen::Index>(n), d);
    ds.Y.resize(static_cast<Eigen::Index>(n));
    if (grads) ds.G.resize(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
      const Row& r = it->second[i];
      ds.X.row(static_cast<Eigen::Index>(i)) = r.x.transpose();
      ds.Y[static_cast<Eigen::Index>(i)] = r.y;
      if (grads) ds.G.row(static_cast<Eigen::Index>(i)) = r.g.transpose();
    }
    if (n == 0 && grads) ds.G.resize(0, d);
    out.push_back(std::move(ds));
  }
  return out;
}

Datasets load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  Datasets out = read_csv(in);
  for (auto& ds : out) ds.meta.push_back("csv:" + path);
  return out;
}

void write_csv(std::ostream& out, const Datasets& data) {
  validate_datasets(data);
  const int d = data.front().dim();
  const bool grads = all_have_gradients(data);
  out << "fidelity";
  for (int a = 1; a <= d; ++a) out << ",x" << a;
  out << ",y";
  if (grads)
    for (int a = 1; a <= d; ++a) out << ",g" << a;
  out << "\n";
  out << std::setprecision(17);
  for (const auto& ds : data) {
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      out << ds.level;
      for (int a = 0; a < d; ++a) out << "," << ds.X(i, a);
      out << "," << ds.Y[i];
      if (grads)
        for (int a = 0; a < d; ++a) out << "," << ds.G(i, a);
      out << "\n";
    }
  }
}

void save_csv(const std::string& path, const Datasets& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, data);
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace mfgp
