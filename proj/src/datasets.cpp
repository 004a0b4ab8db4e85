#include "linearizer/datasets.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "linearizer/errors.hpp"

namespace linearizer {

Tensor two_moons(std::size_t count, RngStream& rng, double noise) {
  Tensor x = Tensor::zeros(count, 2);
  for (std::size_t i = 0; i < count; ++i) {
    const double theta = std::numbers::pi * rng.uniform();
    double a, b;
    if (i % 2 == 0) {
      a = std::cos(theta);
      b = std::sin(theta);
    } else {
      a = 1.0 - std::cos(theta);
      b = 0.5 - std::sin(theta);
    }
    // Centre the pair of moons at the origin.
    x(i, 0) = a - 0.5 + noise * rng.normal();
    x(i, 1) = b - 0.25 + noise * rng.normal();
  }
  return x;
}

Tensor eight_gaussian_centers(double radius) {
  Tensor c = Tensor::zeros(8, 2);
  for (std::size_t k = 0; k < 8; ++k) {
    const double angle = std::numbers::pi * static_cast<double>(k) / 4.0;
    c(k, 0) = radius * std::cos(angle);
    c(k, 1) = radius * std::sin(angle);
  }
  return c;
}

Tensor eight_gaussians(std::size_t count, RngStream& rng, double radius, double stddev) {
  const Tensor centers = eight_gaussian_centers(radius);
  Tensor x = Tensor::zeros(count, 2);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = rng.below(8);
    x(i, 0) = centers(k, 0) + stddev * rng.normal();
    x(i, 1) = centers(k, 1) + stddev * rng.normal();
  }
  return x;
}

Tensor checkerboard(std::size_t count, RngStream& rng) {
  Tensor x = Tensor::zeros(count, 2);
  for (std::size_t i = 0; i < count; ++i) {
    const double a = rng.uniform(-2.0, 2.0);
    const double shift = rng.below(2) == 0 ? 0.0 : -2.0;
    const double b = rng.uniform() + shift + static_cast<double>(static_cast<long>(std::floor(a)) & 1);
    x(i, 0) = a;
    x(i, 1) = b;
  }
  return x;
}

const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names{"two-moons", "8-gaussians", "checkerboard"};
  return names;
}

Tensor make_dataset(const std::string& name, std::size_t count, std::uint64_t seed) {
  RngStream rng(seed);
  if (name == "two-moons") return two_moons(count, rng);
  if (name == "8-gaussians") return eight_gaussians(count, rng);
  if (name == "checkerboard") return checkerboard(count, rng);
  throw ConfigError("dataset", "unknown dataset '" + name + "'");
}

namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Tensor ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_cells(line);
    std::vector<double> row;
    row.reserve(cells.size());
    bool any_numeric = false;
    bool all_numeric = true;
    for (const auto& c : cells) {
      double v = 0.0;
      if (parse_double(c, v)) {
        any_numeric = true;
        row.push_back(v);
      } else {
        all_numeric = false;
      }
    }
    if (rows == 0 && cols == 0 && !any_numeric) {
      cols = cells.size();  // header
      continue;
    }
    if (!all_numeric) throw IoError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
    if (cols == 0) cols = row.size();
    if (row.size() != cols) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                    " columns, found " + std::to_string(row.size()));
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw IoError(path.string() + ":" + std::to_string(lineno) + ": non-finite value");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (in.bad()) throw IoError("read error on " + path.string());
  if (rows == 0) throw IoError(path.string() + ": no data rows");
  return Tensor({rows, cols}, std::move(values));
}

Tensor embed(const Tensor& x, std::size_t dim) {
  if (x.cols() > dim) throw DimensionError("cannot embed " + x.shape_string() + " into dimension " + std::to_string(dim));
  Tensor out = Tensor::zeros(x.rows(), dim);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c);
  return out;
}

Tensor truncate_cols(const Tensor& x, std::size_t dim) {
  if (x.cols() < dim) throw DimensionError("cannot keep " + std::to_string(dim) + " columns of " + x.shape_string());
  Tensor out = Tensor::zeros(x.rows(), dim);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < dim; ++c) out(r, c) = x(r, c);
  return out;
}

}  // namespace linearizer
