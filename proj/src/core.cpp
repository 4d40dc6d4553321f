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

#include "aisaq/core.hpp"

#include <algorithm>
#include <numeric>

namespace aisaq {

std::size_t element_size(ElementKind kind) {
    switch (kind) {
        case ElementKind::Float32:
            return sizeof(float);
        case ElementKind::UInt8:
            return 1;
    }
    throw std::invalid_argument("unknown element kind");
}

std::string_view to_string(ElementKind kind) {
    return kind == ElementKind::UInt8 ? "uint8" : "float";
}

std::string_view to_string(Metric metric) {
    return metric == Metric::MaxInnerProduct ? "mips" : "l2";
}

Metric parse_metric(std::string_view name) {
    if (name == "l2" || name == "euclid" || name == "squared_euclidean") {
        return Metric::SquaredEuclidean;
    }
    if (name == "mips" || name == "ip" || name == "inner_product") {
        return Metric::MaxInnerProduct;
    }
    throw std::invalid_argument("unknown metric: " + std::string(name));
}

Dataset::Dataset(std::size_t dim, ElementKind kind, Metric metric, std::vector<float> values)
    : dim_(dim), kind_(kind), metric_(metric), values_(std::move(values)) {
    if (dim_ == 0) {
        throw std::invalid_argument("dataset dimensionality must be positive");
    }
    if (values_.size() % dim_ != 0) {
        throw DimensionMismatch("dataset values are not a multiple of the dimensionality");
    }
    if (kind_ == ElementKind::UInt8) {
        for (float v : values_) {
            if (v < 0.0f || v > 255.0f || v != static_cast<float>(static_cast<int>(v))) {
                throw std::invalid_argument("uint8 dataset holds a non-byte value");
            }
        }
    }
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    if (first + count > size()) {
        throw std::out_of_range("dataset slice out of range");
    }
    std::vector<float> out(values_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                           values_.begin() + static_cast<std::ptrdiff_t>((first + count) * dim_));
    return Dataset(dim_, kind_, metric_, std::move(out));
}

double distance(std::span<const float> a, std::span<const float> b, Metric metric) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("distance: vectors of dimension " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()));
    }
    double acc = 0.0;
    if (metric == Metric::SquaredEuclidean) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            acc += diff * diff;
        }
        return acc;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return -acc;
}

std::vector<Neighbor> brute_force_knn(const Dataset& data, std::span<const float> query,
                                      std::size_t k) {
    if (k == 0 || k > data.size()) {
        throw std::invalid_argument("brute_force_knn: k must be in [1, N]");
    }
    if (query.size() != data.dim()) {
        throw DimensionMismatch("brute_force_knn: query dimension does not match dataset");
    }
    std::vector<Neighbor> all(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        all[i] = {static_cast<node_id>(i), distance(data.row(i), query, data.metric())};
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                      closer);
    all.resize(k);
    return all;
}

double recall_at_k(std::span<const node_id> result, std::span<const node_id> truth,
                   std::size_t k) {
    if (k == 0 || result.size() < k || truth.size() < k) {
        throw std::invalid_argument("recall_at_k: lists shorter than k");
    }
    std::vector<node_id> a(result.begin(), result.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<node_id> b(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    std::vector<node_id> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(k);
}

std::vector<std::vector<node_id>> compute_groundtruth(const Dataset& data,
                                                      const Dataset& queries, std::size_t k) {
    std::vector<std::vector<node_id>> out(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto nn = brute_force_knn(data, queries.row(q), k);
        out[q].reserve(k);
        for (const auto& n : nn) {
            out[q].push_back(n.id);
        }
    }
    return out;
}

}  // namespace aisaq
