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

#include "aisaq/graph.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <random>
#include <string>
#include <unordered_set>

namespace aisaq::graph {

namespace {

constexpr std::size_t kExactMedoidLimit = 20'000;
constexpr std::size_t kMedoidSample = 10'000;

double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

// Sorted candidate pool of bounded size with an expanded flag per entry.
class Pool {
public:
    explicit Pool(std::size_t capacity) : capacity_(capacity) {}

    void insert(const Neighbor& n) {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), n,
                                   [](const Entry& e, const Neighbor& v) { return closer(e.n, v); });
        if (entries_.size() >= capacity_ && it == entries_.end()) {
            return;
        }
        entries_.insert(it, Entry{n, false});
        if (entries_.size() > capacity_) {
            entries_.pop_back();
        }
    }

    // Closest unexpanded entry, marked expanded; nullptr when none remain.
    const Neighbor* next() {
        for (auto& e : entries_) {
            if (!e.expanded) {
                e.expanded = true;
                return &e.n;
            }
        }
        return nullptr;
    }

    std::vector<Neighbor> sorted() const {
        std::vector<Neighbor> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) {
            out.push_back(e.n);
        }
        return out;
    }

private:
    struct Entry {
        Neighbor n;
        bool expanded;
    };
    std::size_t capacity_;
    std::vector<Entry> entries_;
};

}  // namespace

void VamanaGraph::validate() const {
    if (entrypoints.empty() && !out_neighbors.empty()) {
        throw std::logic_error("graph has no entrypoint");
    }
    for (node_id ep : entrypoints) {
        if (ep >= size()) {
            throw std::logic_error("entrypoint " + std::to_string(ep) + " out of range");
        }
    }
    for (std::size_t v = 0; v < size(); ++v) {
        const auto& adj = out_neighbors[v];
        if (adj.size() > max_degree) {
            throw std::logic_error("node " + std::to_string(v) + " has degree " +
                                   std::to_string(adj.size()) + " > R=" +
                                   std::to_string(max_degree));
        }
        std::unordered_set<node_id> seen;
        for (node_id u : adj) {
            if (u >= size()) {
                throw std::logic_error("node " + std::to_string(v) + " links to out-of-range id " +
                                       std::to_string(u));
            }
            if (u == v) {
                throw std::logic_error("node " + std::to_string(v) + " has a self loop");
            }
            if (!seen.insert(u).second) {
                throw std::logic_error("node " + std::to_string(v) + " lists " +
                                       std::to_string(u) + " twice");
            }
        }
    }
}

node_id medoid(const Dataset& data, std::uint64_t seed) {
    const std::size_t n = data.size();
    if (n == 0) {
        throw std::invalid_argument("medoid of an empty dataset");
    }
    std::vector<node_id> reference;
    if (n <= kExactMedoidLimit) {
        reference.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            reference[i] = static_cast<node_id>(i);
        }
    } else {
        std::vector<node_id> all(n);
        for (std::size_t i = 0; i < n; ++i) {
            all[i] = static_cast<node_id>(i);
        }
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < kMedoidSample; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        reference.assign(all.begin(), all.begin() + kMedoidSample);
    }

    // Summed distances in closed form: for squared Euclidean,
    // sum_j |x - y_j|^2 = r |x|^2 - 2 <x, S> + sum_j |y_j|^2 ; for the inner
    // product key, -<x, S>. Self terms are excluded for MIPS.
    const std::size_t d = data.dim();
    std::vector<double> sum(d, 0.0);
    double sum_sq = 0.0;
    std::vector<char> in_reference(n, 0);
    for (node_id j : reference) {
        in_reference[j] = 1;
        auto row = data.row(j);
        for (std::size_t t = 0; t < d; ++t) {
            sum[t] += row[t];
        }
        sum_sq += dot(row, row);
    }
    const double r = static_cast<double>(reference.size());
    node_id best = 0;
    double best_total = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        auto row = data.row(i);
        double xs = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            xs += static_cast<double>(row[t]) * sum[t];
        }
        const double xx = dot(row, row);
        double total = 0.0;
        if (data.metric() == Metric::SquaredEuclidean) {
            total = r * xx - 2.0 * xs + sum_sq;
        } else {
            total = -xs + (in_reference[i] ? xx : 0.0);
        }
        if (total < best_total) {
            best_total = total;
            best = static_cast<node_id>(i);
        }
    }
    return best;
}

GreedyResult greedy_search(const VamanaGraph& g, const Dataset& data,
                           std::span<const float> query, std::size_t list_size) {
    GreedyResult result;
    if (g.size() == 0) {
        return result;
    }
    Pool pool(std::max<std::size_t>(list_size, 1));
    std::unordered_set<node_id> seen;
    for (node_id ep : g.entrypoints) {
        if (seen.insert(ep).second) {
            pool.insert({ep, distance(data.row(ep), query, data.metric())});
        }
    }
    while (const Neighbor* cur = pool.next()) {
        const Neighbor expanded = *cur;
        result.visited.push_back(expanded);
        for (node_id u : g.out_neighbors[expanded.id]) {
            if (seen.insert(u).second) {
                pool.insert({u, distance(data.row(u), query, data.metric())});
            }
        }
    }
    result.candidates = pool.sorted();
    return result;
}

std::vector<node_id> robust_prune(node_id node, std::span<const node_id> candidates,
                                  double alpha, std::size_t max_degree, const Dataset& data) {
    std::vector<Neighbor> pool;
    pool.reserve(candidates.size());
    std::unordered_set<node_id> seen;
    for (node_id c : candidates) {
        if (c != node && seen.insert(c).second) {
            pool.push_back({c, distance(data.row(node), data.row(c), data.metric())});
        }
    }
    std::sort(pool.begin(), pool.end(), closer);

    std::vector<node_id> kept;
    std::vector<char> removed(pool.size(), 0);
    for (std::size_t i = 0; i < pool.size() && kept.size() < max_degree; ++i) {
        if (removed[i]) {
            continue;
        }
        const node_id c = pool[i].id;
        kept.push_back(c);
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            if (removed[j]) {
                continue;
            }
            const double dcx = distance(data.row(c), data.row(pool[j].id), data.metric());
            if (alpha * dcx <= pool[j].distance) {
                removed[j] = 1;
            }
        }
    }
    return kept;
}

std::vector<node_id> unreachable_nodes(const VamanaGraph& g) {
    std::vector<char> reached(g.size(), 0);
    std::deque<node_id> queue;
    for (node_id ep : g.entrypoints) {
        if (!reached[ep]) {
            reached[ep] = 1;
            queue.push_back(ep);
        }
    }
    while (!queue.empty()) {
        const node_id v = queue.front();
        queue.pop_front();
        for (node_id u : g.out_neighbors[v]) {
            if (!reached[u]) {
                reached[u] = 1;
                queue.push_back(u);
            }
        }
    }
    std::vector<node_id> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!reached[i]) {
            out.push_back(static_cast<node_id>(i));
        }
    }
    return out;
}

namespace {

// Links each unreachable node u from its nearest reachable node v. A full v
// gets u spliced in front of its last edge (v -> u -> w), so every node that
// was reachable stays reachable and the reachable set grows each round.
void repair_reachability(VamanaGraph& g, const Dataset& data) {
    for (auto missing = unreachable_nodes(g); !missing.empty(); missing = unreachable_nodes(g)) {
        const node_id u = missing.front();
        std::vector<char> unreachable(g.size(), 0);
        for (node_id m : missing) {
            unreachable[m] = 1;
        }
        Neighbor best{0, std::numeric_limits<double>::infinity()};
        for (std::size_t v = 0; v < g.size(); ++v) {
            if (unreachable[v]) {
                continue;
            }
            const Neighbor cand{static_cast<node_id>(v),
                                distance(data.row(v), data.row(u), data.metric())};
            if (closer(cand, best)) {
                best = cand;
            }
        }
        auto& from = g.out_neighbors[best.id];
        if (from.size() < g.max_degree) {
            from.push_back(u);
            continue;
        }
        const node_id w = from.back();
        from.back() = u;
        auto& adj = g.out_neighbors[u];
        if (std::find(adj.begin(), adj.end(), w) != adj.end()) {
            continue;
        }
        if (adj.size() < g.max_degree) {
            adj.push_back(w);
        } else {
            adj.back() = w;
        }
    }
}

}  // namespace

VamanaGraph build_vamana(const Dataset& data, const BuildParams& params) {
    const std::size_t n = data.size();
    if (n == 0) {
        throw std::invalid_argument("cannot build a graph over an empty dataset");
    }
    if (params.alpha < 1.0) {
        throw std::invalid_argument("alpha must be >= 1.0");
    }
    if (params.build_list_size < params.max_degree) {
        throw std::invalid_argument("L_build must be >= R");
    }
    if (params.num_entrypoints == 0 || params.num_entrypoints > n) {
        throw std::invalid_argument("entrypoint count must be in [1, N]");
    }

    VamanaGraph g;
    g.max_degree = params.max_degree;
    g.out_neighbors.resize(n);
    g.entrypoints = {medoid(data, params.seed)};
    if (n == 1 || params.max_degree == 0) {
        return g;
    }

    std::vector<node_id> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = static_cast<node_id>(i);
    }
    std::mt19937_64 rng(params.seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t R = params.max_degree;
    for (double alpha : {1.0, params.alpha}) {
        for (node_id p : order) {
            auto search = greedy_search(g, data, data.row(p), params.build_list_size);
            std::vector<node_id> candidates;
            candidates.reserve(search.visited.size() + g.out_neighbors[p].size());
            for (const auto& v : search.visited) {
                candidates.push_back(v.id);
            }
            candidates.insert(candidates.end(), g.out_neighbors[p].begin(),
                              g.out_neighbors[p].end());
            g.out_neighbors[p] = robust_prune(p, candidates, alpha, R, data);

            for (node_id j : g.out_neighbors[p]) {
                auto& adj = g.out_neighbors[j];
                if (std::find(adj.begin(), adj.end(), p) != adj.end()) {
                    continue;
                }
                if (adj.size() < R) {
                    adj.push_back(p);
                } else {
                    std::vector<node_id> merged(adj);
                    merged.push_back(p);
                    adj = robust_prune(j, merged, alpha, R, data);
                }
            }
        }
    }

    repair_reachability(g, data);

    if (params.num_entrypoints > 1) {
        std::vector<node_id> rest;
        rest.reserve(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (i != g.entrypoints.front()) {
                rest.push_back(static_cast<node_id>(i));
            }
        }
        std::mt19937_64 ep_rng(params.seed ^ 0x5bd1e995ULL);
        for (std::size_t i = 0; i + 1 < params.num_entrypoints; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
            std::swap(rest[i], rest[pick(ep_rng)]);
            g.entrypoints.push_back(rest[i]);
        }
    }
    return g;
}

}  // namespace aisaq::graph
