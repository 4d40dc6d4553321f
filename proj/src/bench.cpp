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

#include "aisaq/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "aisaq/vecs.hpp"

namespace aisaq::bench {

namespace {

constexpr double kBytesPerGB = 1e9;
constexpr std::size_t kMaxServers = 1'000'000;

SystemCost price(double dram_bytes, double ssd_bytes, const CostModelInput& in) {
    SystemCost c;
    c.dram_gb = dram_bytes / kBytesPerGB;
    c.ssd_gb = ssd_bytes / kBytesPerGB;
    c.usd = c.dram_gb * in.dram_usd_per_gb + c.ssd_gb * in.ssd_usd_per_gb;
    return c;
}

std::pair<SystemCost, SystemCost> costs_at(const CostModelInput& in, std::size_t servers) {
    const double n = static_cast<double>(servers);
    const double base = in.num_vectors * (in.full_bytes + in.id_bytes * (in.max_degree + 1));
    const double base_total = in.base_ssd_per_server ? base * n : base;
    const double pq_array = in.num_vectors * in.pq_bytes;
    return {price(n * pq_array, base_total, in),
            price(0.0, base_total + in.max_degree * pq_array, in)};
}

}  // namespace

CostEstimate estimate_cost(const CostModelInput& input) {
    if (input.num_vectors <= 0 || input.pq_bytes <= 0 || input.full_bytes <= 0 ||
        input.max_degree < 0 || input.servers == 0) {
        throw std::invalid_argument("cost model inputs must be positive");
    }
    CostEstimate est;
    std::tie(est.diskann, est.aisaq) = costs_at(input, input.servers);
    est.diskann_dram_per_server_gb = input.num_vectors * input.pq_bytes / kBytesPerGB;
    for (std::size_t n = 1; n <= kMaxServers; ++n) {
        const auto [d, a] = costs_at(input, n);
        if (a.usd < d.usd) {
            est.crossover_servers = n;
            break;
        }
    }
    return est;
}

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    if (spec.num_base == 0 || spec.dim == 0 || spec.clusters == 0) {
        throw std::invalid_argument("synthetic dataset parameters must be positive");
    }
    std::mt19937_64 rng(spec.seed);
    const bool bytes = spec.kind == ElementKind::UInt8;
    std::uniform_real_distribution<double> center_dist(bytes ? 40.0 : -10.0, bytes ? 215.0 : 10.0);
    std::normal_distribution<double> noise(0.0, bytes ? 10.0 : 1.0);
    std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.clusters - 1);

    std::vector<double> centers(spec.clusters * spec.dim);
    for (auto& c : centers) {
        c = center_dist(rng);
    }
    auto sample = [&](std::size_t count) {
        std::vector<float> values(count * spec.dim);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t c = pick_cluster(rng);
            for (std::size_t t = 0; t < spec.dim; ++t) {
                double v = centers[c * spec.dim + t] + noise(rng);
                if (bytes) {
                    v = std::clamp(std::round(v), 0.0, 255.0);
                }
                values[i * spec.dim + t] = static_cast<float>(v);
            }
        }
        return Dataset(spec.dim, spec.kind, spec.metric, std::move(values));
    };

    SyntheticData out;
    out.base = sample(spec.num_base);
    if (spec.num_queries > 0) {
        out.queries = sample(spec.num_queries);
        const std::size_t k = std::min(spec.groundtruth_k, spec.num_base);
        out.groundtruth = compute_groundtruth(out.base, out.queries, k);
    }
    return out;
}

SyntheticFiles write_synthetic(const std::filesystem::path& prefix, const SyntheticData& data) {
    const bool bytes = data.base.kind() == ElementKind::UInt8;
    const std::string ext = bytes ? ".bvecs" : ".fvecs";
    SyntheticFiles files;
    files.base = prefix.string() + "_base" + ext;
    files.queries = prefix.string() + "_query" + ext;
    files.groundtruth = prefix.string() + "_gt.ivecs";
    auto write = [&](const std::filesystem::path& p, const Dataset& d) {
        if (bytes) {
            write_bvecs(p, d);
        } else {
            write_fvecs(p, d);
        }
    };
    write(files.base, data.base);
    if (!data.queries.empty()) {
        write(files.queries, data.queries);
        write_ivecs(files.groundtruth, data.groundtruth);
    }
    return files;
}

BuildSummary build_index(const Dataset& data, const std::filesystem::path& output,
                         const BuildConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    BuildSummary summary;
    pq::Codebook codebook;
    auto layout_options = config.layout;
    if (config.shared_codebook && std::filesystem::exists(*config.shared_codebook)) {
        codebook = pq::Codebook::load(*config.shared_codebook);
        if (codebook.dim() != data.dim()) {
            throw DimensionMismatch("shared codebook dimension " +
                                    std::to_string(codebook.dim()) + " does not match dataset " +
                                    std::to_string(data.dim()));
        }
        if (codebook.metric() != data.metric()) {
            throw std::invalid_argument("shared codebook was trained for a different metric");
        }
    } else {
        codebook = pq::train(config.pq_training ? *config.pq_training : data, config.pq);
        summary.codebook_trained = true;
        if (config.shared_codebook) {
            codebook.save(*config.shared_codebook);
        }
    }
    if (config.shared_codebook) {
        layout_options.external_codebook = config.shared_codebook;
    }
    summary.codebook_hash = codebook.content_hash();

    const auto codes = pq::encode_all(data, codebook);
    const auto g = graph::build_vamana(data, config.graph);
    summary.layout = layout::serialize_index(output, g, data, codebook, codes, layout_options);
    summary.build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

BenchRow make_row(const std::string& dataset, const layout::IndexHandle& index,
                  const search::SearchParams& params, std::size_t concurrency,
                  std::uint64_t seed, const search::BatchResult& batch) {
    BenchRow row;
    row.dataset = dataset;
    row.mode = index.mode();
    row.pq_bytes = index.metadata().m();
    row.max_degree = index.geometry().max_degree;
    row.params = params;
    row.concurrency = concurrency;
    row.seed = seed;
    row.recall = batch.recall;
    row.mean_latency_us = batch.mean_latency_us;
    row.p95_latency_us = batch.p95_latency_us;
    row.qps = batch.qps;
    row.io_per_query = batch.mean_io_requests;
    row.bytes_read_per_query = batch.mean_bytes_read;
    row.peak_resident_pq_codes = batch.max_peak_resident_pq_codes;
    row.working_set_bytes = row.peak_resident_pq_codes * row.pq_bytes +
                            index.codebook().centroids().size() * sizeof(float);
    row.bytes_loaded_at_open = index.load_stats().bytes_loaded;
    row.load_ms = index.load_stats().wall_ms;
    row.io_path = batch.io_path;
    return row;
}

void write_report_header(std::ostream& out) {
    out << "dataset,mode,b_pq,R,L,w,k,recall,mean_latency_us,p95_latency_us,qps,"
           "io_per_query,bytes_read_per_query,peak_resident_pq_codes,working_set_bytes,"
           "bytes_loaded_at_open,load_ms,io_path,concurrency,seed\n";
}

void write_report_row(std::ostream& out, const BenchRow& r) {
    out << r.dataset << ',' << layout::to_string(r.mode) << ',' << r.pq_bytes << ','
        << r.max_degree << ',' << r.params.list_size << ',' << r.params.beamwidth << ','
        << r.params.k << ',';
    if (r.recall) {
        out << *r.recall;
    }
    out << ',' << r.mean_latency_us << ',' << r.p95_latency_us << ',' << r.qps << ','
        << r.io_per_query << ',' << r.bytes_read_per_query << ',' << r.peak_resident_pq_codes
        << ',' << r.working_set_bytes << ',' << r.bytes_loaded_at_open << ',' << r.load_ms << ','
        << layout::to_string(r.io_path) << ',' << r.concurrency << ',' << r.seed << '\n';
}

std::vector<SwitchRecord> switch_bench(const std::vector<std::filesystem::path>& paths,
                                       std::size_t repetitions,
                                       const layout::OpenOptions& options) {
    if (paths.size() < 2) {
        throw std::invalid_argument("switch bench needs at least two indices");
    }
    std::vector<SwitchRecord> records;
    auto current = layout::open_index(paths.front(), options);
    std::size_t at = 0;
    const search::SearchParams probe{1, 10, 4};
    for (std::size_t step = 0; step < repetitions * paths.size(); ++step) {
        const std::size_t next = (at + 1) % paths.size();
        SwitchRecord rec;
        rec.step = step;
        rec.from = paths[at];
        rec.to = paths[next];
        try {
            current = layout::switch_index(std::move(current), paths[next], options);
            rec.bytes_loaded = current.load_stats().bytes_loaded;
            rec.wall_ms = current.load_stats().wall_ms;
            rec.fast_path = current.load_stats().codebook_reused;
            const auto ep = current.read_node_chunk(current.metadata().entrypoints.front());
            rec.probe_ok = !search::beam_search(current, ep.full_vector, probe).results.empty();
        } catch (const std::exception& e) {
            rec.error = e.what();
            current = layout::open_index(paths[next], layout::OpenOptions{{}, options.mode,
                                                                          options.io_path});
        }
        records.push_back(std::move(rec));
        at = next;
    }
    return records;
}

void write_switch_csv(std::ostream& out, const std::vector<SwitchRecord>& records) {
    out << "step,from,to,bytes_loaded,wall_ms,fast_path,probe_ok,error\n";
    for (const auto& r : records) {
        out << r.step << ',' << r.from.string() << ',' << r.to.string() << ',' << r.bytes_loaded
            << ',' << r.wall_ms << ',' << (r.fast_path ? 1 : 0) << ',' << (r.probe_ok ? 1 : 0)
            << ',' << r.error << '\n';
    }
}

}  // namespace aisaq::bench
