#include "tulip/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "tulip/errors.hpp"
#include "tulip/format.hpp"
#include "tulip/rng.hpp"

namespace tulip {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test_id: return "test-id";
    case Split::test_ood: return "test-ood";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test-id") return Split::test_id;
  if (name == "test-ood") return Split::test_ood;
  throw DomainError("unknown split '" + std::string(name) + "'");
}

void Dataset::validate() const {
  if (is_classification()) {
    if (!labels.empty() && labels.size() != size()) {
      throw DomainError("dataset has " + std::to_string(size()) + " rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
      if (y < 0 || y >= num_classes) {
        throw DomainError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
      }
    }
  } else if (targets.size() != 0 && targets.rows() != inputs.rows()) {
    throw DomainError("regression targets do not match the number of inputs");
  }
}

bool Dataset::has_duplicate_rows() const {
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(inputs.cols()));
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) row[static_cast<std::size_t>(j)] = inputs(i, j);
    if (!seen.insert(std::move(row)).second) return true;
  }
  return false;
}

std::string dataset_to_csv(const Dataset& data) {
  data.validate();
  std::string out = "split";
  for (int j = 0; j < data.input_dim(); ++j) out += ",x" + std::to_string(j);
  if (data.is_classification()) {
    out += ",label:" + std::to_string(data.num_classes);
  } else {
    for (Eigen::Index j = 0; j < data.targets.cols(); ++j) out += ",y" + std::to_string(j);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
    out += to_string(data.split);
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) {
      out += ',';
      append_double(out, data.inputs(i, j));
    }
    if (data.is_classification()) {
      out += ',';
      out += data.has_labels() ? std::to_string(data.labels[static_cast<std::size_t>(i)]) : "";
    } else {
      for (Eigen::Index j = 0; j < data.targets.cols(); ++j) {
        out += ',';
        append_double(out, data.targets(i, j));
      }
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw IoError("dataset CSV is empty");
  const auto header = split_fields(lines.front());
  if (header.empty() || header.front() != "split") throw IoError("dataset CSV must start with 'split'");
  int d = 0;
  int o = 0;
  Dataset data;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const std::string_view h = header[k];
    if (h.starts_with("x")) {
      ++d;
    } else if (h.starts_with("y")) {
      ++o;
    } else if (h.starts_with("label:")) {
      data.num_classes = static_cast<int>(parse_double(h.substr(6)));
    } else {
      throw IoError("unexpected dataset column '" + std::string(h) + "'");
    }
  }
  if (d == 0) throw IoError("dataset CSV has no feature columns");
  const auto rows = static_cast<Eigen::Index>(lines.size() - 1);
  data.inputs.resize(rows, d);
  if (!data.is_classification()) data.targets.resize(rows, o);
  bool any_label = false;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto fields = split_fields(lines[static_cast<std::size_t>(i) + 1]);
    if (fields.size() != header.size()) {
      throw IoError("dataset row " + std::to_string(i + 1) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(header.size()));
    }
    const Split s = parse_split(fields[0]);
    if (i == 0) data.split = s;
    for (int j = 0; j < d; ++j) data.inputs(i, j) = parse_double(fields[static_cast<std::size_t>(1 + j)]);
    if (data.is_classification()) {
      const std::string_view lab = fields[static_cast<std::size_t>(1 + d)];
      if (!lab.empty()) {
        any_label = true;
        data.labels.push_back(static_cast<int>(parse_double(lab)));
      }
    } else {
      for (int j = 0; j < o; ++j) data.targets(i, j) = parse_double(fields[static_cast<std::size_t>(1 + d + j)]);
    }
  }
  if (any_label && data.labels.size() != static_cast<std::size_t>(rows)) {
    throw IoError("dataset has labels on some rows only");
  }
  data.validate();
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  write_text_file(path, dataset_to_csv(data));
}

Dataset read_dataset_csv(const std::string& path) { return dataset_from_csv(read_text_file(path)); }

namespace {

struct NaturalSpline {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> m;  // second derivatives at the knots

  NaturalSpline(std::vector<double> xs, std::vector<double> ys) : x(std::move(xs)), y(std::move(ys)) {
    const std::size_t n = x.size();
    m.assign(n, 0.0);
    // Tridiagonal system for the interior second derivatives (Thomas algorithm).
    std::vector<double> diag(n, 1.0), upper(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x[i] - x[i - 1];
      const double h1 = x[i + 1] - x[i];
      const double lower = h0 / 6.0;
      diag[i] = (h0 + h1) / 3.0;
      upper[i] = h1 / 6.0;
      rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
      const double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 1; i-- > 1;) m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
  }

  [[nodiscard]] double operator()(double t) const {
    const std::size_t n = x.size();
    std::size_t k = 0;
    if (t >= x[n - 1]) {
      k = n - 2;
    } else if (t > x[0]) {
      k = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), t) - x.begin()) - 1;
    }
    const double h = x[k + 1] - x[k];
    const double a = (x[k + 1] - t) / h;
    const double b = (t - x[k]) / h;
    return a * y[k] + b * y[k + 1] + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0;
  }
};

const NaturalSpline& toy_spline() {
  static const NaturalSpline spline({-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0},
                                    {0.0, 0.8, -0.4, 0.5, 1.0, -0.6, 0.2});
  return spline;
}

}  // namespace

double spline_target(double x) { return toy_spline()(x); }

double ClusteredSupport::mass(double a, double b) const {
  double total = 0.0;
  for (std::size_t k = 0; k < lo.size(); ++k) {
    const double left = std::max(a, lo[k]);
    const double right = std::min(b, hi[k]);
    if (right > left) total += weight[k] * (right - left) / (hi[k] - lo[k]);
  }
  return total;
}

Dataset gen_spline_regression(std::size_t n, double noise, std::uint64_t seed,
                              const ClusteredSupport& support, Split split) {
  if (support.lo.size() != support.hi.size() || support.lo.size() != support.weight.size() ||
      support.lo.empty()) {
    throw DomainError("clustered support needs matching, nonempty interval lists");
  }
  auto engine = rng::make_engine(seed, "data.spline");
  std::discrete_distribution<std::size_t> pick(support.weight.begin(), support.weight.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.split = split;
  data.inputs.resize(static_cast<Eigen::Index>(n), 1);
  data.targets.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(engine);
    const double x = support.lo[k] + (support.hi[k] - support.lo[k]) * unit(engine);
    const double eps = normal(engine);
    data.inputs(static_cast<Eigen::Index>(i), 0) = x;
    data.targets(static_cast<Eigen::Index>(i), 0) = spline_target(x) + noise * eps;
  }
  return data;
}

Dataset gen_two_moons(std::size_t n, double spread, std::uint64_t seed, Split split) {
  auto engine = rng::make_engine(seed, "data.two_moons");
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.split = split;
  data.num_classes = 2;
  data.inputs.resize(static_cast<Eigen::Index>(n), 2);
  data.labels.resize(n);
  const std::size_t upper = (n + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = angle(engine);
    const double nx = normal(engine);
    const double ny = normal(engine);
    const bool first = i < upper;
    const double x = first ? std::cos(t) : 1.0 - std::cos(t);
    const double y = first ? std::sin(t) : 0.5 - std::sin(t);
    data.inputs(static_cast<Eigen::Index>(i), 0) = x + spread * nx;
    data.inputs(static_cast<Eigen::Index>(i), 1) = y + spread * ny;
    data.labels[i] = first ? 0 : 1;
  }
  return data;
}

Dataset gen_gauss_clusters(std::size_t n, double spread, std::uint64_t seed, Split split) {
  auto engine = rng::make_engine(seed, "data.gauss_clusters");
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.split = split;
  data.num_classes = 2;
  data.inputs.resize(static_cast<Eigen::Index>(n), 2);
  data.labels.resize(n);
  const std::size_t upper = (n + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = i < upper;
    const double nx = normal(engine);
    const double ny = normal(engine);
    data.inputs(static_cast<Eigen::Index>(i), 0) = (first ? -1.5 : 1.5) + spread * nx;
    data.inputs(static_cast<Eigen::Index>(i), 1) = spread * ny;
    data.labels[i] = first ? 0 : 1;
  }
  return data;
}

Eigen::Vector2d two_moons_centroid() { return {0.5, 0.25}; }

double two_moons_radius() {
  // Farthest noiseless points are the arc ends (-1, 0) and (2, 0.5).
  return std::hypot(1.5, 0.25);
}

Dataset gen_ood_ring(std::size_t n, double radius, std::uint64_t seed, const Eigen::Vector2d& center) {
  auto engine = rng::make_engine(seed, "data.ood_ring");
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  Dataset data;
  data.split = Split::test_ood;
  data.num_classes = 2;
  data.inputs.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = angle(engine);
    data.inputs(static_cast<Eigen::Index>(i), 0) = center.x() + radius * std::cos(t);
    data.inputs(static_cast<Eigen::Index>(i), 1) = center.y() + radius * std::sin(t);
  }
  return data;
}

Dataset gen_uniform_box(std::size_t n, double radius, std::uint64_t seed, const Eigen::Vector2d& center) {
  if (!(radius > 0.0)) throw DomainError("box radius must be positive");
  auto engine = rng::make_engine(seed, "data.uniform_box");
  std::uniform_real_distribution<double> coord(-2.0 * radius, 2.0 * radius);
  Dataset data;
  data.split = Split::test_ood;
  data.num_classes = 2;
  data.inputs.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n;) {
    const double dx = coord(engine);
    const double dy = coord(engine);
    if (std::hypot(dx, dy) < radius) continue;
    data.inputs(static_cast<Eigen::Index>(i), 0) = center.x() + dx;
    data.inputs(static_cast<Eigen::Index>(i), 1) = center.y() + dy;
    ++i;
  }
  return data;
}

}  // namespace tulip
