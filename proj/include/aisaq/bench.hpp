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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aisaq/core.hpp"
#include "aisaq/graph.hpp"
#include "aisaq/layout.hpp"
#include "aisaq/pq.hpp"
#include "aisaq/search.hpp"

namespace aisaq::bench {

// ---------------------------------------------------------------------------
// Cost model: DRAM vs SSD for n search servers sharing one index store.

struct CostModelInput {
    double num_vectors = 0;
    double pq_bytes = 0;
    double max_degree = 0;
    double full_bytes = 0;
    std::size_t servers = 1;
    double dram_usd_per_gb = 1.8;
    double ssd_usd_per_gb = 0.054;
    /// Charge the shared base index (vectors + adjacency) once per server.
    bool base_ssd_per_server = false;
    double id_bytes = 4;
};

struct SystemCost {
    double dram_gb = 0;
    double ssd_gb = 0;
    double usd = 0;
};

struct CostEstimate {
    SystemCost diskann;
    SystemCost aisaq;
    double diskann_dram_per_server_gb = 0;
    /// Smallest server count at which AiSAQ is strictly cheaper.
    std::optional<std::size_t> crossover_servers;
};

/// DiskANN holds N * b_PQ bytes of DRAM per server; AiSAQ stores R * N * b_PQ
/// extra bytes once on shared SSD. Both pay the same base index.
CostEstimate estimate_cost(const CostModelInput& input);

// ---------------------------------------------------------------------------
// Synthetic Gaussian-mixture datasets.

struct SyntheticSpec {
    std::size_t num_base = 10'000;
    std::size_t num_queries = 1'000;
    std::size_t dim = 16;
    std::size_t clusters = 10;
    std::uint64_t seed = 0;
    ElementKind kind = ElementKind::Float32;
    Metric metric = Metric::SquaredEuclidean;
    std::size_t groundtruth_k = 100;
};

struct SyntheticData {
    Dataset base;
    Dataset queries;
    std::vector<std::vector<node_id>> groundtruth;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

struct SyntheticFiles {
    std::filesystem::path base;
    std::filesystem::path queries;
    std::filesystem::path groundtruth;
};

/// Writes <prefix>_base, <prefix>_query (fvecs or bvecs) and <prefix>_gt.ivecs.
SyntheticFiles write_synthetic(const std::filesystem::path& prefix, const SyntheticData& data);

// ---------------------------------------------------------------------------
// Build pipeline: codebook, codes, graph, index file.

struct BuildConfig {
    graph::BuildParams graph;
    pq::TrainParams pq;
    layout::SerializeOptions layout;
    /// Load this codebook if it exists, otherwise train and save it there.
    /// The index then references it instead of carrying it inline.
    std::optional<std::filesystem::path> shared_codebook;
    /// Train the codebook on these vectors instead of the indexed ones.
    std::optional<Dataset> pq_training;
};

struct BuildSummary {
    layout::SerializeReport layout;
    bool codebook_trained = false;
    std::uint64_t codebook_hash = 0;
    double build_seconds = 0;
};

BuildSummary build_index(const Dataset& data, const std::filesystem::path& output,
                         const BuildConfig& config);

// ---------------------------------------------------------------------------
// Reports.

struct BenchRow {
    std::string dataset;
    layout::Mode mode = layout::Mode::AiSAQ;
    std::size_t pq_bytes = 0;
    std::size_t max_degree = 0;
    search::SearchParams params;
    std::size_t concurrency = 1;
    std::uint64_t seed = 0;
    std::optional<double> recall;
    double mean_latency_us = 0;
    double p95_latency_us = 0;
    double qps = 0;
    double io_per_query = 0;
    double bytes_read_per_query = 0;
    std::uint64_t peak_resident_pq_codes = 0;
    std::uint64_t working_set_bytes = 0;
    std::uint64_t bytes_loaded_at_open = 0;
    double load_ms = 0;
    layout::IoPath io_path = layout::IoPath::Direct;
};

BenchRow make_row(const std::string& dataset, const layout::IndexHandle& index,
                  const search::SearchParams& params, std::size_t concurrency,
                  std::uint64_t seed, const search::BatchResult& batch);

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const BenchRow& row);

// ---------------------------------------------------------------------------
// Index switching.

struct SwitchRecord {
    std::size_t step = 0;
    std::filesystem::path from;
    std::filesystem::path to;
    std::uint64_t bytes_loaded = 0;
    double wall_ms = 0;
    bool fast_path = false;
    bool probe_ok = false;
    std::string error;
};

/// Opens paths[0], then switches round-robin through the list `repetitions`
/// times, running one probe query after every switch.
std::vector<SwitchRecord> switch_bench(const std::vector<std::filesystem::path>& paths,
                                       std::size_t repetitions,
                                       const layout::OpenOptions& options);

void write_switch_csv(std::ostream& out, const std::vector<SwitchRecord>& records);

}  // namespace aisaq::bench
