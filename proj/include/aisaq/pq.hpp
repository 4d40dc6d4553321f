// Copyright 2026-present the aisaq project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "aisaq/core.hpp"

namespace aisaq::pq {

inline constexpr std::size_t kCentroids = 256;

/// m sub-quantizers of 256 centroids each over contiguous coordinate ranges.
/// The first (d mod m) subspaces get the extra coordinate.
class Codebook {
public:
    Codebook() = default;
    /// `centroids` is laid out subspace-major: for subspace j, 256 rows of
    /// subdim(j) floats, subspaces concatenated in order.
    Codebook(std::size_t dim, std::size_t m, Metric metric, std::vector<float> centroids);

    std::size_t dim() const { return dim_; }
    std::size_t m() const { return subdims_.size(); }
    Metric metric() const { return metric_; }
    std::size_t subdim(std::size_t j) const { return subdims_[j]; }
    std::size_t offset(std::size_t j) const { return offsets_[j]; }
    const std::vector<std::uint32_t>& subdims() const { return subdims_; }

    std::span<const float> centroid(std::size_t j, std::size_t c) const {
        return {centroids_.data() + kCentroids * offsets_[j] + c * subdims_[j], subdims_[j]};
    }
    const std::vector<float>& centroids() const { return centroids_; }

    /// Little-endian "PQCB" image: header, subdims, centroids.
    std::vector<std::uint8_t> serialize() const;
    static Codebook deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static Codebook load(const std::filesystem::path& path);

    /// FNV-1a 64 over the serialized image.
    std::uint64_t content_hash() const;
    std::size_t serialized_size() const;

    friend bool operator==(const Codebook&, const Codebook&) = default;

private:
    std::size_t dim_ = 0;
    Metric metric_ = Metric::SquaredEuclidean;
    std::vector<std::uint32_t> subdims_;
    std::vector<std::uint32_t> offsets_;
    std::vector<float> centroids_;
};

/// Contiguous split of `dim` coordinates into `m` ranges.
std::vector<std::uint32_t> split_subspaces(std::size_t dim, std::size_t m);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

struct TrainParams {
    std::size_t m = 8;
    std::size_t iterations = 12;
    std::uint64_t seed = 0;
};

/// Initial centroids of one subspace: 256 samples drawn by a seeded partial
/// Fisher-Yates shuffle, skipping values already chosen. When fewer than 256
/// distinct values exist, the remaining slots repeat the first pick.
/// `points` is n rows of `subdim` floats.
std::vector<float> initial_centroids(std::span<const float> points, std::size_t subdim,
                                     std::uint64_t seed);

/// Seed used for subspace j under a training seed.
std::uint64_t subspace_seed(std::uint64_t seed, std::size_t j);

/// Lloyd iterations from `centroids` with empty-cluster repair; stops early
/// once assignments are unchanged. Returns the number of iterations run.
std::size_t lloyd(std::span<const float> points, std::size_t subdim,
                  std::vector<float>& centroids, std::size_t iterations);

/// Per-subspace k-means with k = 256 over the dataset (Euclidean, whatever
/// the dataset metric; the metric only affects query-time tables).
Codebook train(const Dataset& data, const TrainParams& params);

using Code = std::vector<std::uint8_t>;

/// Nearest centroid per subspace, ties to the lowest index.
Code encode(std::span<const float> vec, const Codebook& codebook);
void encode_into(std::span<const float> vec, const Codebook& codebook,
                 std::span<std::uint8_t> out);

/// All rows encoded, node-major (N * m bytes).
std::vector<std::uint8_t> encode_all(const Dataset& data, const Codebook& codebook);

std::vector<float> decode(std::span<const std::uint8_t> code, const Codebook& codebook);

/// m x 256 partial distances from one query to every centroid.
class DistanceTable {
public:
    DistanceTable(std::span<const float> query, const Codebook& codebook);
    /// A table with explicit entries, m rows of 256.
    DistanceTable(std::size_t m, std::vector<double> entries);

    std::size_t m() const { return m_; }
    double entry(std::size_t j, std::size_t c) const { return entries_[j * kCentroids + c]; }

    double distance(std::span<const std::uint8_t> code) const;

private:
    std::size_t m_ = 0;
    std::vector<double> entries_;
};

inline double pq_distance(std::span<const std::uint8_t> code, const DistanceTable& table) {
    return table.distance(code);
}

}  // namespace aisaq::pq
