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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aisaq {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written with memcpy");

using node_id = std::uint32_t;

enum class ElementKind : std::uint8_t { Float32 = 0, UInt8 = 1 };

/// Smaller key means closer, for both metrics. SquaredEuclidean is never
/// square-rooted; MaxInnerProduct is the negated dot product.
enum class Metric : std::uint8_t { SquaredEuclidean = 0, MaxInnerProduct = 1 };

std::size_t element_size(ElementKind kind);
std::string_view to_string(ElementKind kind);
std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

/// Raised on shape mismatches between vectors, datasets and codebooks.
class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// N x d row-major vectors with implicit ids 0..N-1.
///
/// Elements are held as float regardless of kind. UInt8 datasets hold
/// integral values in [0, 255]; the kind decides the on-disk width of a
/// full-precision vector.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t dim, ElementKind kind, Metric metric, std::vector<float> values);

    std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    ElementKind kind() const { return kind_; }
    Metric metric() const { return metric_; }
    bool empty() const { return size() == 0; }

    std::span<const float> row(std::size_t i) const {
        return {values_.data() + i * dim_, dim_};
    }
    const std::vector<float>& values() const { return values_; }

    /// Bytes of one full-precision vector as stored on disk.
    std::size_t vector_bytes() const { return dim_ * element_size(kind_); }

    /// Rows [first, first + count) as a new dataset with the same kind and metric.
    Dataset slice(std::size_t first, std::size_t count) const;

private:
    std::size_t dim_ = 0;
    ElementKind kind_ = ElementKind::Float32;
    Metric metric_ = Metric::SquaredEuclidean;
    std::vector<float> values_;
};

/// Ordering key between two vectors, accumulated in double.
double distance(std::span<const float> a, std::span<const float> b, Metric metric);

struct Neighbor {
    node_id id = 0;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Total order used everywhere: distance ascending, then id ascending.
inline bool closer(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

/// Exact k nearest neighbors by exhaustive scan.
std::vector<Neighbor> brute_force_knn(const Dataset& data, std::span<const float> query,
                                      std::size_t k);

/// |top-k(result) ∩ top-k(truth)| / k.
double recall_at_k(std::span<const node_id> result, std::span<const node_id> truth,
                   std::size_t k);

/// Exhaustive groundtruth for every row of `queries`, k ids per row.
std::vector<std::vector<node_id>> compute_groundtruth(const Dataset& data,
                                                      const Dataset& queries, std::size_t k);

}  // namespace aisaq
