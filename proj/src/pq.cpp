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

#include "aisaq/pq.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>

#include "bytes.hpp"

namespace aisaq::pq {

namespace {

constexpr char kMagic[4] = {'P', 'Q', 'C', 'B'};
constexpr std::uint32_t kVersion = 1;

double sq_dist(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

std::uint32_t nearest_centroid(const float* point, const float* centroids, std::size_t subdim,
                               double* best_out = nullptr) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kCentroids; ++c) {
        const double d = sq_dist(point, centroids + c * subdim, subdim);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(c);
        }
    }
    if (best_out != nullptr) {
        *best_out = best_d;
    }
    return best;
}

}  // namespace

std::vector<std::uint32_t> split_subspaces(std::size_t dim, std::size_t m) {
    if (m == 0 || m > dim) {
        throw std::invalid_argument("PQ subvector count must be in [1, d], got m=" +
                                    std::to_string(m) + " d=" + std::to_string(dim));
    }
    std::vector<std::uint32_t> out(m, static_cast<std::uint32_t>(dim / m));
    for (std::size_t j = 0; j < dim % m; ++j) {
        ++out[j];
    }
    return out;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Codebook::Codebook(std::size_t dim, std::size_t m, Metric metric, std::vector<float> centroids)
    : dim_(dim), metric_(metric), subdims_(split_subspaces(dim, m)), centroids_(std::move(centroids)) {
    if (centroids_.size() != kCentroids * dim_) {
        throw DimensionMismatch("codebook needs 256 * d centroid floats, got " +
                                std::to_string(centroids_.size()));
    }
    offsets_.resize(subdims_.size());
    std::uint32_t acc = 0;
    for (std::size_t j = 0; j < subdims_.size(); ++j) {
        offsets_[j] = acc;
        acc += subdims_[j];
    }
}

std::size_t Codebook::serialized_size() const {
    return 4 + 4 + 4 + 4 + 1 + 4 * m() + sizeof(float) * centroids_.size();
}

std::vector<std::uint8_t> Codebook::serialize() const {
    detail::ByteWriter w;
    w.put(kMagic);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(dim_));
    w.put(static_cast<std::uint32_t>(m()));
    w.put(static_cast<std::uint8_t>(metric_));
    w.put_span(std::span<const std::uint32_t>(subdims_));
    w.put_span(std::span<const float>(centroids_));
    return std::move(w.bytes());
}

Codebook Codebook::deserialize(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "codebook");
    auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
        throw std::runtime_error("codebook: bad magic");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw std::runtime_error("codebook: unsupported version " + std::to_string(version));
    }
    const auto dim = r.get<std::uint32_t>();
    const auto m = r.get<std::uint32_t>();
    const auto metric = r.get<std::uint8_t>();
    if (metric > 1) {
        throw std::runtime_error("codebook: unknown metric tag " + std::to_string(metric));
    }
    if (m == 0 || m > dim) {
        throw std::runtime_error("codebook: invalid shape d=" + std::to_string(dim) +
                                 " m=" + std::to_string(m));
    }
    auto subdims = r.get_vector<std::uint32_t>(m);
    if (subdims != split_subspaces(dim, m)) {
        throw std::runtime_error("codebook: subspace split does not match d and m");
    }
    auto centroids = r.get_vector<float>(static_cast<std::size_t>(dim) * kCentroids);
    if (r.remaining() != 0) {
        throw std::runtime_error("codebook: " + std::to_string(r.remaining()) +
                                 " trailing bytes");
    }
    return Codebook(dim, m, static_cast<Metric>(metric), std::move(centroids));
}

void Codebook::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(reinterpret_cast<const char*>(bytes.data()),
                           static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("cannot write codebook " + path.string());
    }
}

Codebook Codebook::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw std::runtime_error("cannot open codebook " + path.string());
    }
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return deserialize(bytes);
}

std::uint64_t Codebook::content_hash() const { return fnv1a64(serialize()); }

std::uint64_t subspace_seed(std::uint64_t seed, std::size_t j) {
    return seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL * (j + 1);
}

std::vector<float> initial_centroids(std::span<const float> points, std::size_t subdim,
                                     std::uint64_t seed) {
    const std::size_t n = points.size() / subdim;
    if (n == 0) {
        throw std::invalid_argument("k-means needs at least one point");
    }
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = static_cast<std::uint32_t>(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<float> centroids;
    centroids.reserve(kCentroids * subdim);
    std::size_t chosen = 0;
    for (std::size_t i = 0; i < n && chosen < kCentroids; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
        const float* p = points.data() + static_cast<std::size_t>(order[i]) * subdim;
        bool duplicate = false;
        for (std::size_t c = 0; c < chosen && !duplicate; ++c) {
            duplicate = std::equal(p, p + subdim, centroids.data() + c * subdim);
        }
        if (!duplicate) {
            centroids.insert(centroids.end(), p, p + subdim);
            ++chosen;
        }
    }
    while (chosen < kCentroids) {
        centroids.insert(centroids.end(), centroids.begin(),
                         centroids.begin() + static_cast<std::ptrdiff_t>(subdim));
        ++chosen;
    }
    return centroids;
}

std::size_t lloyd(std::span<const float> points, std::size_t subdim,
                  std::vector<float>& centroids, std::size_t iterations) {
    const std::size_t n = points.size() / subdim;
    std::vector<std::uint32_t> assign(n, 0);
    std::vector<std::uint32_t> previous;
    std::vector<double> dist(n, 0.0);
    std::vector<std::size_t> counts(kCentroids);
    std::vector<double> sums(kCentroids * subdim);

    std::size_t it = 0;
    for (; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = nearest_centroid(points.data() + i * subdim, centroids.data(), subdim,
                                         &dist[i]);
        }
        if (assign == previous) {
            break;
        }

        std::fill(counts.begin(), counts.end(), 0);
        for (auto a : assign) {
            ++counts[a];
        }
        // Empty-cluster repair: the point farthest from its centroid moves in.
        for (std::size_t c = 0; c < kCentroids; ++c) {
            if (counts[c] != 0) {
                continue;
            }
            std::size_t far = n;
            double far_d = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assign[i]] > 1 && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            if (far == n) {
                break;  // every point sits on its centroid
            }
            --counts[assign[far]];
            assign[far] = static_cast<std::uint32_t>(c);
            dist[far] = 0.0;
            ++counts[c];
        }
        previous = assign;

        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const float* p = points.data() + i * subdim;
            double* s = sums.data() + static_cast<std::size_t>(assign[i]) * subdim;
            for (std::size_t t = 0; t < subdim; ++t) {
                s[t] += p[t];
            }
        }
        for (std::size_t c = 0; c < kCentroids; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            for (std::size_t t = 0; t < subdim; ++t) {
                centroids[c * subdim + t] =
                    static_cast<float>(sums[c * subdim + t] / static_cast<double>(counts[c]));
            }
        }
    }
    return it;
}

Codebook train(const Dataset& data, const TrainParams& params) {
    if (data.empty()) {
        throw std::invalid_argument("cannot train PQ on an empty dataset");
    }
    const auto subdims = split_subspaces(data.dim(), params.m);
    const std::size_t n = data.size();
    std::vector<float> all;
    all.reserve(kCentroids * data.dim());
    std::size_t offset = 0;
    for (std::size_t j = 0; j < subdims.size(); ++j) {
        const std::size_t sd = subdims[j];
        std::vector<float> points(n * sd);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = data.row(i);
            std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(offset), sd,
                        points.begin() + static_cast<std::ptrdiff_t>(i * sd));
        }
        auto centroids = initial_centroids(points, sd, subspace_seed(params.seed, j));
        lloyd(points, sd, centroids, params.iterations);
        all.insert(all.end(), centroids.begin(), centroids.end());
        offset += sd;
    }
    return Codebook(data.dim(), params.m, data.metric(), std::move(all));
}

void encode_into(std::span<const float> vec, const Codebook& codebook,
                 std::span<std::uint8_t> out) {
    if (vec.size() != codebook.dim() || out.size() != codebook.m()) {
        throw DimensionMismatch("encode: vector of dimension " + std::to_string(vec.size()) +
                                " against codebook of dimension " +
                                std::to_string(codebook.dim()));
    }
    for (std::size_t j = 0; j < codebook.m(); ++j) {
        out[j] = static_cast<std::uint8_t>(nearest_centroid(
            vec.data() + codebook.offset(j), codebook.centroid(j, 0).data(), codebook.subdim(j)));
    }
}

Code encode(std::span<const float> vec, const Codebook& codebook) {
    Code code(codebook.m());
    encode_into(vec, codebook, code);
    return code;
}

std::vector<std::uint8_t> encode_all(const Dataset& data, const Codebook& codebook) {
    const std::size_t m = codebook.m();
    std::vector<std::uint8_t> codes(data.size() * m);
    for (std::size_t i = 0; i < data.size(); ++i) {
        encode_into(data.row(i), codebook, std::span<std::uint8_t>(codes).subspan(i * m, m));
    }
    return codes;
}

std::vector<float> decode(std::span<const std::uint8_t> code, const Codebook& codebook) {
    if (code.size() != codebook.m()) {
        throw DimensionMismatch("decode: code length does not match codebook");
    }
    std::vector<float> out;
    out.reserve(codebook.dim());
    for (std::size_t j = 0; j < codebook.m(); ++j) {
        auto c = codebook.centroid(j, code[j]);
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

DistanceTable::DistanceTable(std::span<const float> query, const Codebook& codebook)
    : m_(codebook.m()), entries_(codebook.m() * kCentroids) {
    if (query.size() != codebook.dim()) {
        throw DimensionMismatch("distance table: query of dimension " +
                                std::to_string(query.size()) + " against codebook of dimension " +
                                std::to_string(codebook.dim()));
    }
    for (std::size_t j = 0; j < m_; ++j) {
        auto sub = query.subspan(codebook.offset(j), codebook.subdim(j));
        for (std::size_t c = 0; c < kCentroids; ++c) {
            entries_[j * kCentroids + c] = aisaq::distance(sub, codebook.centroid(j, c),
                                                           codebook.metric());
        }
    }
}

DistanceTable::DistanceTable(std::size_t m, std::vector<double> entries)
    : m_(m), entries_(std::move(entries)) {
    if (entries_.size() != m_ * kCentroids) {
        throw DimensionMismatch("distance table needs m * 256 entries");
    }
}

double DistanceTable::distance(std::span<const std::uint8_t> code) const {
    if (code.size() != m_) {
        throw DimensionMismatch("pq_distance: code length " + std::to_string(code.size()) +
                                " against table with m=" + std::to_string(m_));
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < m_; ++j) {
        acc += entries_[j * kCentroids + code[j]];
    }
    return acc;
}

}  // namespace aisaq::pq
