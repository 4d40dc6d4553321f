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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aisaq/core.hpp"
#include "aisaq/layout.hpp"

namespace aisaq::search {

struct SearchParams {
    std::size_t k = 10;
    std::size_t list_size = 64;  // L, at least k
    std::size_t beamwidth = 4;   // w

    void validate() const;
};

struct SearchStats {
    std::uint64_t hops = 0;  // beam iterations
    std::uint64_t io_requests = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t pq_distance_computations = 0;
    std::uint64_t full_distance_computations = 0;
    /// Most PQ codes materialized in memory at once. AiSAQ counts the
    /// entrypoint codes plus every code slot of the chunks in flight;
    /// DiskANN counts the resident array plus the entrypoint codes.
    std::uint64_t peak_resident_pq_codes = 0;
    double latency_us = 0.0;
};

struct SearchOutcome {
    std::vector<Neighbor> results;  // by full-precision key, ties by id
    SearchStats stats;
    /// Fewer than k nodes were expanded; `results` holds all of them.
    bool incomplete = false;

    std::vector<node_id> ids() const;
};

/// Thrown when a chunk read fails mid-search; carries the stats so far.
class SearchError : public std::runtime_error {
public:
    SearchError(const std::string& what, SearchStats partial)
        : std::runtime_error(what), partial_(partial) {}
    const SearchStats& partial() const { return partial_; }

private:
    SearchStats partial_;
};

/// Beam search with re-ranking. Candidates are scored with PQ codes taken
/// from the RAM array (DiskANN mode) or from the inline slots of the chunk
/// just read (AiSAQ mode); the expanded set is re-ranked by full-precision
/// distance.
SearchOutcome beam_search(const layout::IndexHandle& index, std::span<const float> query,
                          const SearchParams& params);

/// Instrumented working set of one search: peak resident PQ codes times m
/// plus the codebook.
std::uint64_t working_set_bytes(const layout::IndexHandle& index, const SearchOutcome& outcome);

struct Divergence {
    std::size_t query = 0;
    std::string what;
};

struct IdentityReport {
    std::size_t queries = 0;
    std::vector<Divergence> divergences;
    std::uint64_t bytes_read_a = 0;
    std::uint64_t bytes_read_b = 0;

    bool identical() const { return divergences.empty(); }
};

/// Runs every query on both indices and compares returned ids, hop counts
/// and I/O request counts. The indices must share a codebook.
IdentityReport search_identity_check(const layout::IndexHandle& a, const layout::IndexHandle& b,
                                     const Dataset& queries, const SearchParams& params);

struct BatchResult {
    std::vector<SearchOutcome> outcomes;
    std::vector<std::string> errors;  // per query, empty when it succeeded
    double wall_seconds = 0.0;
    double qps = 0.0;
    double mean_latency_us = 0.0;
    double p50_latency_us = 0.0;
    double p95_latency_us = 0.0;
    double p99_latency_us = 0.0;
    double mean_hops = 0.0;
    double mean_io_requests = 0.0;
    double mean_bytes_read = 0.0;
    std::uint64_t max_peak_resident_pq_codes = 0;
    std::optional<double> recall;  // mean recall@k against the groundtruth
    layout::IoPath io_path = layout::IoPath::Direct;
};

/// Searches every row of `queries` with `concurrency` worker threads. Result
/// sets do not depend on the thread count.
BatchResult batch_search(const layout::IndexHandle& index, const Dataset& queries,
                         const SearchParams& params, std::size_t concurrency,
                         const std::vector<std::vector<node_id>>* groundtruth = nullptr);

/// recall@k of one result list, treating missing entries as misses.
double query_recall(const SearchOutcome& outcome, std::span<const node_id> truth, std::size_t k);

/// Per-query CSV: ids and keys space separated, stats columns, no timings.
void write_outcomes_csv(std::ostream& out, const std::vector<SearchOutcome>& outcomes);

}  // namespace aisaq::search
