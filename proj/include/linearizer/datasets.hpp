#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "linearizer/rng.hpp"
#include "linearizer/tensor.hpp"

namespace linearizer {

Tensor two_moons(std::size_t count, RngStream& rng, double noise = 0.05);
Tensor eight_gaussians(std::size_t count, RngStream& rng, double radius = 2.0, double stddev = 0.15);
Tensor eight_gaussian_centers(double radius = 2.0);
Tensor checkerboard(std::size_t count, RngStream& rng);

const std::vector<std::string>& dataset_names();
// Throws ConfigError for an unknown name.
Tensor make_dataset(const std::string& name, std::size_t count, std::uint64_t seed);

// Numeric CSV; an optional first line without any numeric cell is a header.
// Errors name the offending line.
Tensor ingest_csv(const std::filesystem::path& path);

// Zero-pads columns up to `dim`.
Tensor embed(const Tensor& x, std::size_t dim);
// Keeps the first `dim` columns.
Tensor truncate_cols(const Tensor& x, std::size_t dim);

}  // namespace linearizer
