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
#include <span>
#include <vector>

#include "aisaq/core.hpp"

namespace aisaq::graph {

/// Flat directed graph with bounded out-degree and designated entrypoints.
struct VamanaGraph {
    std::size_t max_degree = 0;
    std::vector<std::vector<node_id>> out_neighbors;
    std::vector<node_id> entrypoints;

    std::size_t size() const { return out_neighbors.size(); }

    /// Throws std::logic_error naming the first violated invariant
    /// (degree bound, self loop, duplicate, id range, empty entrypoints).
    void validate() const;

    friend bool operator==(const VamanaGraph&, const VamanaGraph&) = default;
};

struct BuildParams {
    std::size_t max_degree = 32;
    std::size_t build_list_size = 64;
    double alpha = 1.2;
    std::uint64_t seed = 0;
    std::size_t num_entrypoints = 1;
};

/// Node minimizing the summed distance to all points. Above 20,000 points
/// the sum runs over a seeded sample of 10,000 points.
node_id medoid(const Dataset& data, std::uint64_t seed = 0);

struct GreedyResult {
    std::vector<Neighbor> candidates;  // best-L pool, sorted
    std::vector<Neighbor> visited;     // expanded nodes, in expansion order
};

/// Best-first search with exact distances from the graph entrypoints,
/// expanding one node per step until every pool entry is expanded.
GreedyResult greedy_search(const VamanaGraph& g, const Dataset& data,
                           std::span<const float> query, std::size_t list_size);

/// Keeps the closest remaining candidate c and drops every x with
/// alpha * d(c, x) <= d(node, x), until `max_degree` are kept.
std::vector<node_id> robust_prune(node_id node, std::span<const node_id> candidates,
                                  double alpha, std::size_t max_degree, const Dataset& data);

/// Two passes (alpha = 1, then params.alpha) over a seeded node order,
/// followed by a reachability repair from the entrypoint.
VamanaGraph build_vamana(const Dataset& data, const BuildParams& params);

/// Nodes not reachable from the entrypoints by BFS.
std::vector<node_id> unreachable_nodes(const VamanaGraph& g);

}  // namespace aisaq::graph
