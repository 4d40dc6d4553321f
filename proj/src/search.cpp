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

#include "aisaq/search.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>
#include <unordered_set>

namespace aisaq::search {

namespace {

struct PoolEntry {
    Neighbor n;
    bool expanded = false;
};

bool entry_closer(const PoolEntry& a, const PoolEntry& b) { return closer(a.n, b.n); }

double percentile(std::vector<double> sorted_values, double p) {
    if (sorted_values.empty()) {
        return 0.0;
    }
    std::sort(sorted_values.begin(), sorted_values.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(p / 100.0 * static_cast<double>(sorted_values.size())));
    return sorted_values[std::clamp<std::size_t>(rank, 1, sorted_values.size()) - 1];
}

std::string format_key(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void SearchParams::validate() const {
    if (k == 0) {
        throw std::invalid_argument("k must be positive");
    }
    if (list_size < k) {
        throw std::invalid_argument("search list size L must be >= k");
    }
    if (beamwidth == 0) {
        throw std::invalid_argument("beamwidth must be >= 1");
    }
}

std::vector<node_id> SearchOutcome::ids() const {
    std::vector<node_id> out;
    out.reserve(results.size());
    for (const auto& r : results) {
        out.push_back(r.id);
    }
    return out;
}

SearchOutcome beam_search(const layout::IndexHandle& index, std::span<const float> query,
                          const SearchParams& params) {
    params.validate();
    if (query.size() != index.dim()) {
        throw DimensionMismatch("query of dimension " + std::to_string(query.size()) +
                                " against index of dimension " + std::to_string(index.dim()));
    }
    const auto start = std::chrono::steady_clock::now();
    const bool inline_codes = index.mode() == layout::Mode::AiSAQ;
    const std::size_t m = index.metadata().m();
    const std::size_t n_ep = index.metadata().entrypoints.size();
    const std::size_t read_length = index.geometry().read_length();
    const pq::DistanceTable table(query, index.codebook());

    SearchOutcome outcome;
    SearchStats& stats = outcome.stats;
    // DiskANN mode holds the whole array for the life of the handle.
    const std::uint64_t baseline_codes = inline_codes ? n_ep : index.size() + n_ep;
    stats.peak_resident_pq_codes = baseline_codes;

    std::vector<PoolEntry> pool;
    std::unordered_set<node_id> seen;
    for (std::size_t i = 0; i < n_ep; ++i) {
        const node_id ep = index.metadata().entrypoints[i];
        if (seen.insert(ep).second) {
            pool.push_back({{ep, table.distance(index.entrypoint_code(i))}});
            ++stats.pq_distance_computations;
        }
    }
    std::sort(pool.begin(), pool.end(), entry_closer);

    std::vector<Neighbor> expanded;
    std::vector<node_id> beam;
    std::vector<layout::NodeChunk> chunks;
    std::vector<PoolEntry> fresh;
    while (true) {
        beam.clear();
        for (auto& e : pool) {
            if (!e.expanded) {
                e.expanded = true;
                beam.push_back(e.n.id);
                if (beam.size() == params.beamwidth) {
                    break;
                }
            }
        }
        if (beam.empty()) {
            break;
        }
        ++stats.hops;

        chunks.clear();
        for (node_id id : beam) {
            try {
                chunks.push_back(index.read_node_chunk(id));
            } catch (const std::exception& e) {
                throw SearchError(e.what(), stats);
            }
            ++stats.io_requests;
            stats.bytes_read += read_length;
        }
        std::uint64_t resident = baseline_codes;
        for (const auto& c : chunks) {
            expanded.push_back({c.id, distance(query, c.full_vector, index.metric())});
            ++stats.full_distance_computations;
            if (inline_codes) {
                resident += c.pq_slots;
            }
        }
        stats.peak_resident_pq_codes = std::max(stats.peak_resident_pq_codes, resident);

        // Score neighbors in id order of the expanded chunks so completion
        // order of the reads never matters.
        std::sort(chunks.begin(), chunks.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
        fresh.clear();
        for (const auto& c : chunks) {
            for (std::size_t j = 0; j < c.neighbors.size(); ++j) {
                const node_id u = c.neighbors[j];
                if (!seen.insert(u).second) {
                    continue;
                }
                const auto code = inline_codes
                                      ? std::span<const std::uint8_t>(c.inline_pq).subspan(j * m, m)
                                      : index.pq_code(u);
                fresh.push_back({{u, table.distance(code)}});
                ++stats.pq_distance_computations;
            }
        }
        // The chunks, and their inline codes, are dropped here.
        chunks.clear();

        pool.insert(pool.end(), fresh.begin(), fresh.end());
        std::sort(pool.begin(), pool.end(), entry_closer);
        if (pool.size() > params.list_size) {
            pool.resize(params.list_size);
        }
    }

    std::sort(expanded.begin(), expanded.end(), closer);
    if (expanded.size() < params.k) {
        outcome.incomplete = true;
    } else {
        expanded.resize(params.k);
    }
    outcome.results = std::move(expanded);
    stats.latency_us = std::chrono::duration<double, std::micro>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    return outcome;
}

std::uint64_t working_set_bytes(const layout::IndexHandle& index, const SearchOutcome& outcome) {
    return outcome.stats.peak_resident_pq_codes * index.metadata().m() +
           index.codebook().centroids().size() * sizeof(float);
}

IdentityReport search_identity_check(const layout::IndexHandle& a, const layout::IndexHandle& b,
                                     const Dataset& queries, const SearchParams& params) {
    if (a.codebook_hash() != b.codebook_hash()) {
        throw std::invalid_argument("identity check needs indices built from the same codebook");
    }
    if (a.size() != b.size() || a.metadata().entrypoints != b.metadata().entrypoints) {
        throw std::invalid_argument("identity check needs indices built from the same graph");
    }
    IdentityReport report;
    report.queries = queries.size();
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto ra = beam_search(a, queries.row(q), params);
        const auto rb = beam_search(b, queries.row(q), params);
        report.bytes_read_a += ra.stats.bytes_read;
        report.bytes_read_b += rb.stats.bytes_read;
        if (ra.ids() != rb.ids()) {
            report.divergences.push_back({q, "returned ids differ"});
        }
        if (ra.stats.hops != rb.stats.hops) {
            report.divergences.push_back({q, "hops " + std::to_string(ra.stats.hops) + " vs " +
                                                 std::to_string(rb.stats.hops)});
        }
        if (ra.stats.io_requests != rb.stats.io_requests) {
            report.divergences.push_back(
                {q, "io requests " + std::to_string(ra.stats.io_requests) + " vs " +
                        std::to_string(rb.stats.io_requests)});
        }
    }
    return report;
}

double query_recall(const SearchOutcome& outcome, std::span<const node_id> truth, std::size_t k) {
    auto ids = outcome.ids();
    // Pad short lists with an id that can never match.
    ids.resize(std::max(ids.size(), k), static_cast<node_id>(-1));
    return recall_at_k(ids, truth, k);
}

BatchResult batch_search(const layout::IndexHandle& index, const Dataset& queries,
                         const SearchParams& params, std::size_t concurrency,
                         const std::vector<std::vector<node_id>>* groundtruth) {
    if (concurrency == 0) {
        throw std::invalid_argument("concurrency must be >= 1");
    }
    params.validate();
    if (groundtruth != nullptr && groundtruth->size() < queries.size()) {
        throw std::invalid_argument("groundtruth has fewer rows than there are queries");
    }
    const std::size_t nq = queries.size();
    BatchResult out;
    out.outcomes.resize(nq);
    out.errors.resize(nq);
    out.io_path = index.io_path();

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t q = next.fetch_add(1); q < nq; q = next.fetch_add(1)) {
            try {
                out.outcomes[q] = beam_search(index, queries.row(q), params);
            } catch (const SearchError& e) {
                out.outcomes[q].stats = e.partial();
                out.errors[q] = e.what();
            } catch (const std::exception& e) {
                out.errors[q] = e.what();
            }
        }
    };
    const auto start = std::chrono::steady_clock::now();
    const std::size_t threads = std::min(concurrency, std::max<std::size_t>(nq, 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::vector<double> latencies;
    double recall_sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t q = 0; q < nq; ++q) {
        const auto& o = out.outcomes[q];
        out.max_peak_resident_pq_codes =
            std::max(out.max_peak_resident_pq_codes, o.stats.peak_resident_pq_codes);
        if (!out.errors[q].empty()) {
            continue;
        }
        ++ok;
        latencies.push_back(o.stats.latency_us);
        out.mean_hops += static_cast<double>(o.stats.hops);
        out.mean_io_requests += static_cast<double>(o.stats.io_requests);
        out.mean_bytes_read += static_cast<double>(o.stats.bytes_read);
        if (groundtruth != nullptr) {
            recall_sum += query_recall(o, (*groundtruth)[q], params.k);
        }
    }
    if (ok > 0) {
        const auto n = static_cast<double>(ok);
        double total = 0.0;
        for (double l : latencies) {
            total += l;
        }
        out.mean_latency_us = total / n;
        out.mean_hops /= n;
        out.mean_io_requests /= n;
        out.mean_bytes_read /= n;
        out.p50_latency_us = percentile(latencies, 50.0);
        out.p95_latency_us = percentile(latencies, 95.0);
        out.p99_latency_us = percentile(latencies, 99.0);
    }
    if (groundtruth != nullptr && nq > 0) {
        out.recall = recall_sum / static_cast<double>(nq);
    }
    out.qps = out.wall_seconds > 0.0 ? static_cast<double>(nq) / out.wall_seconds : 0.0;
    return out;
}

void write_outcomes_csv(std::ostream& out, const std::vector<SearchOutcome>& outcomes) {
    out << "query,ids,distances,hops,io_requests,bytes_read,pq_distance_computations,"
           "peak_resident_pq_codes,incomplete\n";
    for (std::size_t q = 0; q < outcomes.size(); ++q) {
        const auto& o = outcomes[q];
        out << q << ',';
        for (std::size_t i = 0; i < o.results.size(); ++i) {
            out << (i ? " " : "") << o.results[i].id;
        }
        out << ',';
        for (std::size_t i = 0; i < o.results.size(); ++i) {
            out << (i ? " " : "") << format_key(o.results[i].distance);
        }
        out << ',' << o.stats.hops << ',' << o.stats.io_requests << ',' << o.stats.bytes_read
            << ',' << o.stats.pq_distance_computations << ',' << o.stats.peak_resident_pq_codes
            << ',' << (o.incomplete ? 1 : 0) << '\n';
    }
}

}  // namespace aisaq::search
