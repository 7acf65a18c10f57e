#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet {

/// Images [n, channels, height, width] in [0, 1] with integer labels.
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::string split;

    std::size_t size() const noexcept { return labels.size(); }
    Shape image_shape() const;
    std::span<const double> image(std::size_t i) const { return images.row(i); }
    Tensor one_hot() const;
    std::vector<std::size_t> class_counts() const;
};

/// Reads an IDX image/label pair (magic 0x803 / 0x801, big-endian sizes) and
/// scales pixel bytes by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Rows of `label,p0,...,pn` with pixels already in [0, 1]. Without an explicit
/// image shape a square pixel count becomes [1, s, s], anything else [1, 1, n].
Dataset load_csv(const std::filesystem::path& path, std::optional<Shape> image_shape = std::nullopt);

/// Samples in the given index order.
Dataset take(const Dataset& dataset, std::span<const std::size_t> indices);

/// Seeded draw of n samples without replacement. Stratified draws allocate
/// per-class counts by largest remainder. Result keeps the original order.
std::vector<std::size_t> sample_indices(const Dataset& dataset, std::size_t n, std::uint64_t seed, bool stratified);

Dataset subset(const Dataset& dataset, std::size_t n, std::uint64_t seed, bool stratified);

/// Disjoint (first, rest) partition with `first_size` samples drawn as in `subset`.
std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t first_size, std::uint64_t seed, bool stratified);

/// $ADVARTIFACT_DATA_DIR when set, otherwise `fallback`.
std::filesystem::path data_dir(const std::filesystem::path& fallback = "data");

}  // namespace advdet
