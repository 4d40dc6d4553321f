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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "aisaq/search.hpp"
#include "test_util.hpp"

using namespace aisaq;
using namespace aisaq::search;
using aisaq::testing::grid_dataset;
using aisaq::testing::random_dataset;
using aisaq::testing::TempDir;

namespace {

Dataset clustered(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> center(-10, 10);
    std::normal_distribution<float> noise(0, 1);
    std::vector<float> centers(10 * d);
    for (auto& c : centers) c = center(rng);
    std::vector<float> v(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng() % 10;
        for (std::size_t t = 0; t < d; ++t) v[i * d + t] = centers[c * d + t] + noise(rng);
    }
    return Dataset(d, ElementKind::Float32, Metric::SquaredEuclidean, v);
}

struct Built {
    Dataset data;
    pq::Codebook codebook;
    std::vector<std::uint8_t> codes;
    graph::VamanaGraph graph;
};

Built build(Dataset data, std::size_t m, std::size_t R, std::size_t n_ep = 1,
            std::uint64_t seed = 1) {
    Built b;
    b.data = std::move(data);
    b.codebook = pq::train(b.data, pq::TrainParams{m, 8, seed});
    b.codes = pq::encode_all(b.data, b.codebook);
    b.graph = graph::build_vamana(b.data, graph::BuildParams{R, 2 * R, 1.2, seed, n_ep});
    return b;
}

void write(const Built& b, const std::filesystem::path& p, layout::Mode mode, bool sidecar = false) {
    layout::SerializeOptions o;
    o.mode = mode;
    o.write_sidecar = sidecar;
    layout::serialize_index(p, b.graph, b.data, b.codebook, b.codes, o);
}

struct TraceResult {
    std::vector<node_id> ids;
    std::size_t hops = 0;
    std::size_t expanded = 0;
};

// Beam search with re-ranking over the in-memory graph and code array,
// ordered by `key`.
template <typename Key>
TraceResult reference_search(const Built& b, std::span<const float> q, std::size_t k,
                             std::size_t L, std::size_t w, Key key) {
    struct Entry {
        double d;
        node_id id;
        bool done;
    };
    auto less = [](const Entry& x, const Entry& y) {
        return x.d < y.d || (x.d == y.d && x.id < y.id);
    };
    std::vector<Entry> pool;
    std::set<node_id> seen;
    for (node_id ep : b.graph.entrypoints) {
        if (seen.insert(ep).second) pool.push_back({key(ep), ep, false});
    }
    std::sort(pool.begin(), pool.end(), less);
    std::vector<Neighbor> visited;
    TraceResult t;
    while (true) {
        std::vector<node_id> beam;
        for (auto& e : pool) {
            if (!e.done && beam.size() < w) {
                e.done = true;
                beam.push_back(e.id);
            }
        }
        if (beam.empty()) break;
        ++t.hops;
        std::sort(beam.begin(), beam.end());
        for (node_id p : beam) {
            ++t.expanded;
            visited.push_back({p, distance(q, b.data.row(p), b.data.metric())});
            for (node_id u : b.graph.out_neighbors[p]) {
                if (seen.insert(u).second) pool.push_back({key(u), u, false});
            }
        }
        std::sort(pool.begin(), pool.end(), less);
        if (pool.size() > L) pool.resize(L);
    }
    std::sort(visited.begin(), visited.end(), closer);
    for (std::size_t i = 0; i < std::min(k, visited.size()); ++i) t.ids.push_back(visited[i].id);
    return t;
}

}  // namespace

TEST(BeamSearch, SingleNodeIndex) {
    TempDir dir;
    Built b;
    b.data = Dataset(4, ElementKind::Float32, Metric::SquaredEuclidean, {1, 2, 3, 4});
    b.codebook = aisaq::testing::random_codebook(4, 2, 1);
    b.codes = pq::encode_all(b.data, b.codebook);
    b.graph = graph::build_vamana(b.data, graph::BuildParams{4, 8, 1.2, 0, 1});
    write(b, dir / "one.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "one.idx");
    const std::vector<float> q{9, 9, 9, 9};
    const auto out = beam_search(h, q, SearchParams{1, 1, 4});
    ASSERT_EQ(out.results.size(), 1u);
    EXPECT_EQ(out.results[0].id, 0u);
    EXPECT_EQ(out.stats.hops, 1u);
    EXPECT_EQ(out.stats.io_requests, 1u);
    EXPECT_FALSE(out.incomplete);
}

TEST(BeamSearch, ParamAndShapeErrors) {
    TempDir dir;
    const auto b = build(random_dataset(50, 4, 1), 2, 4);
    write(b, dir / "e.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "e.idx");
    const std::vector<float> q{0, 0, 0, 0}, bad{0, 0};
    EXPECT_THROW(beam_search(h, q, SearchParams{0, 4, 1}), std::invalid_argument);
    EXPECT_THROW(beam_search(h, q, SearchParams{5, 4, 1}), std::invalid_argument);
    EXPECT_THROW(beam_search(h, q, SearchParams{1, 4, 0}), std::invalid_argument);
    EXPECT_THROW(beam_search(h, bad, SearchParams{1, 4, 1}), DimensionMismatch);
}

TEST(BeamSearch, MatchesReferenceTraceInBothModes) {
    TempDir dir;
    const auto b = build(clustered(2000, 8, 3), 4, 16, 2);
    write(b, dir / "a.idx", layout::Mode::AiSAQ, true);
    const auto a = layout::open_index(dir / "a.idx");
    const auto d = layout::open_index(dir / "a.idx", {{}, layout::Mode::DiskANN, {}});
    const auto queries = clustered(60, 8, 4);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const pq::DistanceTable table(queries.row(q), b.codebook);
        auto key = [&](node_id u) {
            return table.distance({b.codes.data() + u * 4, 4});
        };
        const std::size_t L = 10 + q % 5 * 10, w = 1 + q % 4;
        const auto ref = reference_search(b, queries.row(q), 5, L, w, key);
        for (const auto* h : {&a, &d}) {
            const auto out = beam_search(*h, queries.row(q), SearchParams{5, L, w});
            EXPECT_EQ(out.ids(), ref.ids);
            EXPECT_EQ(out.stats.hops, ref.hops);
            EXPECT_EQ(out.stats.io_requests, ref.expanded);
        }
    }
}

TEST(BeamSearch, ZeroDistortionEqualsExactKeySearch) {
    TempDir dir;
    auto grid = grid_dataset(1500, 8, 4, 5, 200);
    Built b;
    b.data = grid.data;
    b.codebook = grid.codebook;
    b.codes = pq::encode_all(b.data, b.codebook);
    b.graph = graph::build_vamana(b.data, graph::BuildParams{12, 24, 1.2, 2, 1});
    write(b, dir / "z.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "z.idx");
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<float> q(8);
        for (auto& x : q) x = float(rng() % 200);
        const std::size_t k = 1 + rng() % 10;
        const std::size_t L = k + rng() % 40;
        const std::size_t w = 1 + rng() % 6;
        auto exact = [&](node_id u) { return distance(q, b.data.row(u), b.data.metric()); };
        const auto ref = reference_search(b, q, k, L, w, exact);
        const auto out = beam_search(h, q, SearchParams{k, L, w});
        EXPECT_EQ(out.ids(), ref.ids);
        EXPECT_EQ(out.stats.hops, ref.hops);
    }
}

TEST(BeamSearch, ZeroDistortionLargeListMatchesBruteForce) {
    TempDir dir;
    auto grid = grid_dataset(2000, 8, 4, 7, 300);
    Built b;
    b.data = grid.data;
    b.codebook = grid.codebook;
    b.codes = pq::encode_all(b.data, b.codebook);
    b.graph = graph::build_vamana(b.data, graph::BuildParams{16, 32, 1.2, 3, 1});
    write(b, dir / "z.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "z.idx");
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<float> q(8);
        for (auto& x : q) x = float(rng() % 300);
        const auto out = beam_search(h, q, SearchParams{10, 128, 4});
        std::vector<node_id> truth;
        for (const auto& n : brute_force_knn(b.data, q, 10)) truth.push_back(n.id);
        EXPECT_EQ(out.ids(), truth);
    }
}

TEST(BeamSearch, RecallOnClusteredData) {
    TempDir dir;
    const auto b = build(clustered(3000, 16, 9), 8, 32);
    write(b, dir / "r.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "r.idx");
    const auto queries = clustered(300, 16, 10);
    const auto gt = compute_groundtruth(b.data, queries, 1);
    const auto res = batch_search(h, queries, SearchParams{1, 64, 4}, 1, &gt);
    ASSERT_TRUE(res.recall);
    EXPECT_GE(*res.recall, 0.95);
}

TEST(BeamSearch, InvariantsPerQuery) {
    TempDir dir;
    const std::size_t R = 12;
    const auto b = build(clustered(1500, 8, 11), 4, R, 3);
    write(b, dir / "i.idx", layout::Mode::AiSAQ, true);
    const auto a = layout::open_index(dir / "i.idx");
    const auto d = layout::open_index(dir / "i.idx", {{}, layout::Mode::DiskANN, {}});
    const auto queries = clustered(100, 8, 12);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t w : {1u, 2u, 4u, 8u}) {
            const auto out = beam_search(a, queries.row(q), SearchParams{10, 40, w});
            EXPECT_LE(out.stats.peak_resident_pq_codes, w * R + 3);
            EXPECT_GE(out.stats.peak_resident_pq_codes, R + 3);
            EXPECT_EQ(out.stats.io_requests, out.stats.full_distance_computations);
            EXPECT_LE(out.stats.hops, a.size());
            EXPECT_GE(out.stats.io_requests, out.stats.hops);
            EXPECT_LE(out.stats.io_requests, out.stats.hops * w);
            EXPECT_EQ(out.stats.bytes_read, out.stats.io_requests * 4096);
            for (std::size_t i = 1; i < out.results.size(); ++i) {
                EXPECT_TRUE(closer(out.results[i - 1], out.results[i]));
            }
            for (const auto& r : out.results) {
                EXPECT_EQ(r.distance, distance(queries.row(q), b.data.row(r.id), b.data.metric()));
            }
            const auto dd = beam_search(d, queries.row(q), SearchParams{10, 40, w});
            EXPECT_EQ(dd.stats.peak_resident_pq_codes, a.size() + 3);
        }
    }
}

TEST(BeamSearch, FewerThanKFlagged) {
    TempDir dir;
    const auto b = build(random_dataset(3, 4, 2), 2, 2);
    write(b, dir / "f.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "f.idx");
    const std::vector<float> q{0, 0, 0, 0};
    const auto out = beam_search(h, q, SearchParams{5, 5, 1});
    EXPECT_TRUE(out.incomplete);
    EXPECT_EQ(out.results.size(), 3u);
    EXPECT_DOUBLE_EQ(query_recall(out, std::vector<node_id>{0, 1, 2, 7, 8}, 5), 0.6);
}

TEST(BeamSearch, ReadFailureCarriesPartialStats) {
    TempDir dir;
    const auto b = build(random_dataset(400, 8, 3), 4, 8);
    write(b, dir / "p.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "p.idx");
    std::filesystem::resize_file(dir / "p.idx", 4096 + 4096);
    const std::vector<float> q(8, 0.5f);
    try {
        beam_search(h, q, SearchParams{5, 20, 1});
        FAIL() << "expected a SearchError";
    } catch (const SearchError& e) {
        EXPECT_LE(e.partial().io_requests, 400u);
        EXPECT_GE(e.partial().pq_distance_computations, 1u);
    }
}

TEST(BeamSearch, InnerProductIndex) {
    TempDir dir;
    const auto b = build(random_dataset(800, 8, 4, Metric::MaxInnerProduct, -1, 1), 4, 16);
    write(b, dir / "mips.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "mips.idx");
    EXPECT_EQ(h.metric(), Metric::MaxInnerProduct);
    const auto q = random_dataset(1, 8, 5, Metric::MaxInnerProduct, -1, 1);
    const auto out = beam_search(h, q.row(0), SearchParams{5, 100, 4});
    for (const auto& r : out.results) {
        double dot = 0;
        for (std::size_t t = 0; t < 8; ++t) dot += double(q.row(0)[t]) * b.data.row(r.id)[t];
        EXPECT_DOUBLE_EQ(r.distance, -dot);
    }
    EXPECT_EQ(out.results[0].id, brute_force_knn(b.data, q.row(0), 1)[0].id);
}

TEST(Identity, ModesAgreeAndBytesFollowBlocks) {
    TempDir dir;
    for (std::size_t m : {4u, 128u}) {
        const auto b = build(clustered(1000, 128, 13), m, 32);
        write(b, dir / "a.idx", layout::Mode::AiSAQ);
        write(b, dir / "d.idx", layout::Mode::DiskANN);
        const auto a = layout::open_index(dir / "a.idx");
        const auto d = layout::open_index(dir / "d.idx");
        const auto queries = clustered(50, 128, 14);
        const auto rep = search_identity_check(d, a, queries, SearchParams{10, 64, 4});
        EXPECT_TRUE(rep.identical());
        const bool larger = a.geometry().blocks_per_chunk() > d.geometry().blocks_per_chunk();
        EXPECT_EQ(larger, m == 128u);
        if (larger) {
            EXPECT_GT(rep.bytes_read_b, rep.bytes_read_a);
        } else {
            EXPECT_EQ(rep.bytes_read_b, rep.bytes_read_a);
        }
    }
}

TEST(Identity, SameFileBothModesByteIdenticalOutcomes) {
    TempDir dir;
    const auto b = build(clustered(800, 8, 15), 4, 16);
    write(b, dir / "s.idx", layout::Mode::AiSAQ, true);
    const auto a = layout::open_index(dir / "s.idx");
    const auto d = layout::open_index(dir / "s.idx", {{}, layout::Mode::DiskANN, {}});
    const auto queries = clustered(40, 8, 16);
    const auto ra = batch_search(a, queries, SearchParams{10, 50, 4}, 1);
    const auto rd = batch_search(d, queries, SearchParams{10, 50, 4}, 1);
    // The residency column differs by design; compare everything else.
    auto strip = [](std::vector<SearchOutcome> v) {
        for (auto& o : v) o.stats.peak_resident_pq_codes = 0;
        std::ostringstream s;
        write_outcomes_csv(s, v);
        return s.str();
    };
    EXPECT_EQ(strip(ra.outcomes), strip(rd.outcomes));
}

TEST(Identity, MismatchedProvenanceRejected) {
    TempDir dir;
    const auto b1 = build(random_dataset(200, 8, 1), 4, 8, 1, 1);
    const auto b2 = build(random_dataset(200, 8, 1), 4, 8, 1, 2);
    write(b1, dir / "1.idx", layout::Mode::AiSAQ);
    write(b2, dir / "2.idx", layout::Mode::DiskANN);
    const auto h1 = layout::open_index(dir / "1.idx");
    const auto h2 = layout::open_index(dir / "2.idx");
    EXPECT_THROW(search_identity_check(h1, h2, b1.data.slice(0, 5), SearchParams{}),
                 std::invalid_argument);
}

TEST(Batch, ConcurrencyDoesNotChangeResults) {
    TempDir dir;
    const auto b = build(clustered(1500, 8, 17), 4, 16);
    write(b, dir / "c.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "c.idx");
    const auto queries = clustered(200, 8, 18);
    const auto one = batch_search(h, queries, SearchParams{10, 40, 4}, 1);
    const auto eight = batch_search(h, queries, SearchParams{10, 40, 4}, 8);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        EXPECT_EQ(one.outcomes[q].ids(), eight.outcomes[q].ids());
        EXPECT_EQ(one.outcomes[q].stats.io_requests, eight.outcomes[q].stats.io_requests);
    }
    EXPECT_EQ(one.io_path, h.io_path());
}

TEST(Batch, RecallIsMeanOfPerQueryRecall) {
    TempDir dir;
    const auto b = build(clustered(1000, 8, 19), 4, 8);
    write(b, dir / "m.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "m.idx");
    const auto queries = clustered(100, 8, 20);
    const auto gt = compute_groundtruth(b.data, queries, 10);
    const auto res = batch_search(h, queries, SearchParams{10, 12, 1}, 2, &gt);
    double sum = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        sum += recall_at_k(res.outcomes[q].ids(), gt[q], 10);
    }
    EXPECT_DOUBLE_EQ(*res.recall, sum / 100.0);
}

TEST(Batch, ListSizeSweepIsMonotone) {
    TempDir dir;
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const auto b = build(clustered(2000, 12, seed), 6, 12, 1, seed);
        write(b, dir / "l.idx", layout::Mode::AiSAQ);
        const auto h = layout::open_index(dir / "l.idx");
        const auto queries = clustered(200, 12, seed + 100);
        const auto gt = compute_groundtruth(b.data, queries, 10);
        double prev = -1;
        for (std::size_t L : {10u, 20u, 40u, 80u}) {
            const auto r = batch_search(h, queries, SearchParams{10, L, 4}, 1, &gt);
            EXPECT_GE(*r.recall, prev) << "seed " << seed << " L " << L;
            prev = *r.recall;
        }
    }
}

TEST(Batch, ErrorsAreNonFatal) {
    TempDir dir;
    const auto b = build(random_dataset(300, 8, 3), 4, 8);
    write(b, dir / "x.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "x.idx");
    std::filesystem::resize_file(dir / "x.idx", 4096 + 4096 + 4096);
    const auto res = batch_search(h, random_dataset(10, 8, 4), SearchParams{5, 20, 1}, 2);
    std::size_t failed = 0;
    for (const auto& e : res.errors) failed += !e.empty();
    EXPECT_GT(failed, 0u);
    EXPECT_EQ(res.outcomes.size(), 10u);
}

TEST(Outcomes, CsvLayout) {
    SearchOutcome o;
    o.results = {{3, 0.1}, {7, 2.0}};
    o.stats.hops = 2;
    o.stats.io_requests = 5;
    o.stats.bytes_read = 20480;
    o.stats.pq_distance_computations = 40;
    o.stats.peak_resident_pq_codes = 33;
    std::ostringstream s;
    write_outcomes_csv(s, {o});
    EXPECT_EQ(s.str(),
              "query,ids,distances,hops,io_requests,bytes_read,pq_distance_computations,"
              "peak_resident_pq_codes,incomplete\n"
              "0,3 7,0.10000000000000001 2,2,5,20480,40,33,0\n");
}

TEST(WorkingSet, CodesTimesMPlusCodebook) {
    TempDir dir;
    const auto b = build(random_dataset(300, 8, 3), 4, 8);
    write(b, dir / "w.idx", layout::Mode::AiSAQ);
    const auto h = layout::open_index(dir / "w.idx");
    const auto out = beam_search(h, b.data.row(0), SearchParams{5, 20, 2});
    EXPECT_EQ(working_set_bytes(h, out), out.stats.peak_resident_pq_codes * 4 + 256 * 8 * 4);
}
