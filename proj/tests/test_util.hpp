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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "aisaq/core.hpp"
#include "aisaq/graph.hpp"
#include "aisaq/layout.hpp"
#include "aisaq/pq.hpp"

namespace aisaq::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "aisaq") {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed,
                              Metric metric = Metric::SquaredEuclidean, float lo = 0.0f,
                              float hi = 1.0f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> values(n * d);
    for (auto& v : values) {
        v = dist(rng);
    }
    return Dataset(d, ElementKind::Float32, metric, std::move(values));
}

inline Dataset random_byte_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dist(0, 255);
    std::vector<float> values(n * d);
    for (auto& v : values) {
        v = static_cast<float>(dist(rng));
    }
    return Dataset(d, ElementKind::UInt8, Metric::SquaredEuclidean, std::move(values));
}

/// A dataset whose subvectors in every subspace take exactly 256 distinct
/// integer values, and the codebook made of exactly those values. Every row
/// decodes to itself, so PQ distances equal exact distances.
struct GridData {
    Dataset data;
    pq::Codebook codebook;
};

inline GridData grid_dataset(std::size_t n, std::size_t d, std::size_t m, std::uint64_t seed,
                             int coord_range = 1000) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coord(0, coord_range - 1);
    std::uniform_int_distribution<std::size_t> pick(0, pq::kCentroids - 1);
    const auto subdims = pq::split_subspaces(d, m);
    std::vector<float> centroids;
    std::vector<std::size_t> offsets;
    for (std::size_t j = 0; j < m; ++j) {
        offsets.push_back(centroids.size());
        std::set<std::vector<int>> used;
        while (used.size() < pq::kCentroids) {
            std::vector<int> v(subdims[j]);
            for (auto& x : v) {
                x = coord(rng);
            }
            if (used.insert(v).second) {
                for (int x : v) {
                    centroids.push_back(static_cast<float>(x));
                }
            }
        }
    }
    std::vector<float> values;
    values.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t c = i < pq::kCentroids ? i : pick(rng);
            const float* p = centroids.data() + offsets[j] + c * subdims[j];
            values.insert(values.end(), p, p + subdims[j]);
        }
    }
    Dataset data(d, ElementKind::Float32, Metric::SquaredEuclidean, std::move(values));
    pq::Codebook cb(d, m, Metric::SquaredEuclidean, std::move(centroids));
    return {std::move(data), std::move(cb)};
}

/// Random out-neighbor lists of exactly min(R, N-1) distinct ids, no self loops.
inline graph::VamanaGraph random_graph(std::size_t n, std::size_t R, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    graph::VamanaGraph g;
    g.max_degree = R;
    g.out_neighbors.resize(n);
    g.entrypoints = {0};
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t degree = std::min(R, n - 1);
    for (std::size_t v = 0; v < n; ++v) {
        std::set<node_id> adj;
        while (adj.size() < degree) {
            const auto u = static_cast<node_id>(pick(rng));
            if (u != v) {
                adj.insert(u);
            }
        }
        g.out_neighbors[v].assign(adj.begin(), adj.end());
        std::shuffle(g.out_neighbors[v].begin(), g.out_neighbors[v].end(), rng);
    }
    return g;
}

/// A codebook of random centroids.
inline pq::Codebook random_codebook(std::size_t d, std::size_t m, std::uint64_t seed,
                                    Metric metric = Metric::SquaredEuclidean) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> c(pq::kCentroids * d);
    for (auto& v : c) {
        v = dist(rng);
    }
    return pq::Codebook(d, m, metric, std::move(c));
}

inline std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace aisaq::testing
