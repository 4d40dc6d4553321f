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

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "aisaq/bench.hpp"
#include "aisaq/vecs.hpp"

namespace {

using namespace aisaq;

struct Globals {
    std::uint64_t seed = 0;
    std::size_t block_size = layout::kDefaultBlockSize;
    std::string io_path = "direct";
};

std::string hex(std::span<const std::uint8_t> bytes) {
    std::ostringstream s;
    s << std::hex << std::setfill('0');
    for (auto b : bytes) {
        s << std::setw(2) << static_cast<int>(b);
    }
    return s.str();
}

std::string hash_string(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Writes to the named file, or stdout when the name is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_.open(path);
            if (!file_) {
                throw std::runtime_error("cannot write " + path);
            }
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string prefix;
    std::size_t num_base = 10'000;
    std::size_t num_queries = 1'000;
    std::size_t dim = 16;
    std::size_t clusters = 10;
    std::string format = "fvecs";
    std::string metric = "l2";
    std::size_t gt_k = 100;
};

int run_gen(const GenArgs& a, const Globals& g) {
    bench::SyntheticSpec spec;
    spec.num_base = a.num_base;
    spec.num_queries = a.num_queries;
    spec.dim = a.dim;
    spec.clusters = a.clusters;
    spec.seed = g.seed;
    spec.kind = a.format == "bvecs" ? ElementKind::UInt8 : ElementKind::Float32;
    spec.metric = parse_metric(a.metric);
    spec.groundtruth_k = a.gt_k;
    const auto data = bench::make_synthetic(spec);
    const auto files = bench::write_synthetic(a.prefix, data);
    std::cout << "base " << files.base.string() << " (" << data.base.size() << " x "
              << data.base.dim() << ")\n";
    if (a.num_queries > 0) {
        std::cout << "queries " << files.queries.string() << " (" << data.queries.size()
                  << ")\n";
        std::cout << "groundtruth " << files.groundtruth.string() << " (k="
                  << std::min(a.gt_k, a.num_base) << ")\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
    std::string data;
    std::string output;
    std::string metric = "l2";
    std::size_t max_degree = 32;
    std::size_t build_list = 64;
    double alpha = 1.2;
    std::size_t m = 8;
    std::size_t iterations = 12;
    std::string mode = "aisaq";
    std::string shared_codebook;
    std::string pq_train;
    bool sidecar = false;
    std::size_t n_ep = 1;
};

void print_geometry(std::ostream& out, const layout::ChunkGeometry& g) {
    const bool aisaq = g.mode == layout::Mode::AiSAQ;
    out << "chunk_size = ";
    if (aisaq) {
        out << "b_full + b_num + R(b_num + b_PQ) = " << g.full_bytes << " + " << g.id_bytes
            << " + " << g.max_degree << "(" << g.id_bytes << " + " << g.pq_bytes << ")";
    } else {
        out << "b_full + b_num(R + 1) = " << g.full_bytes << " + " << g.id_bytes << "("
            << g.max_degree << " + 1)";
    }
    out << " = " << g.chunk_size() << "\n";
    out << "blocks_per_chunk = ceil(" << g.chunk_size() << " / " << g.block_size
        << ") = " << g.blocks_per_chunk() << "\n";
    if (g.chunks_per_block() > 0) {
        out << "chunks_per_block = floor(" << g.block_size << " / " << g.chunk_size()
            << ") = " << g.chunks_per_block() << "\n";
    } else {
        out << "chunks_per_block = 0 (chunk spans several blocks)\n";
    }
    out << "read_length = " << g.read_length() << "\n";
}

int run_build(const BuildArgs& a, const Globals& g) {
    const auto data = read_vecs(a.data, parse_metric(a.metric));
    bench::BuildConfig cfg;
    cfg.graph = graph::BuildParams{a.max_degree, a.build_list, a.alpha, g.seed, a.n_ep};
    cfg.pq = pq::TrainParams{a.m, a.iterations, g.seed};
    cfg.layout.mode = layout::parse_mode(a.mode);
    cfg.layout.block_size = g.block_size;
    cfg.layout.write_sidecar = a.sidecar;
    if (!a.shared_codebook.empty()) {
        cfg.shared_codebook = a.shared_codebook;
    }
    if (!a.pq_train.empty()) {
        cfg.pq_training = read_vecs(a.pq_train, parse_metric(a.metric));
    }
    const auto s = bench::build_index(data, a.output, cfg);
    const auto& rep = s.layout;
    std::cout << "index " << a.output << " (" << rep.file_bytes << " bytes)\n";
    std::cout << "N " << data.size() << "  d " << data.dim() << "  R " << a.max_degree
              << "  m " << a.m << "  n_ep " << rep.metadata.entrypoints.size() << "  mode "
              << a.mode << "  seed " << g.seed << "\n";
    print_geometry(std::cout, rep.geometry);
    std::cout << "degree check: " << (rep.advice.ok ? "ok" : "warning") << " ("
              << rep.advice.message << ")\n";
    std::cout << "codebook " << (s.codebook_trained ? "trained" : "loaded") << ", hash "
              << hash_string(s.codebook_hash);
    if (cfg.shared_codebook) {
        std::cout << ", shared file " << cfg.shared_codebook->string();
    }
    std::cout << "\n";
    if (rep.sidecar) {
        std::cout << "pq sidecar " << rep.sidecar->string() << "\n";
    }
    std::cout << "build seconds " << s.build_seconds << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
    std::vector<std::string> indices;
    std::string queries;
    std::string groundtruth;
    std::size_t k = 1;
    std::vector<std::size_t> list_sizes;
    std::size_t beamwidth = 4;
    std::size_t concurrency = 1;
    std::string mode;
    std::string report;
    std::string per_query;
    std::string dataset;
};

std::string per_query_path(const std::string& base, std::size_t L, bool several) {
    if (!several) {
        return base;
    }
    const std::filesystem::path p(base);
    return (p.parent_path() / (p.stem().string() + "_L" + std::to_string(L) +
                               p.extension().string()))
        .string();
}

int run_search(const SearchArgs& a, const Globals& g) {
    layout::OpenOptions open;
    open.io_path = layout::parse_io_path(g.io_path);
    if (!a.mode.empty()) {
        open.mode = layout::parse_mode(a.mode);
    }
    std::optional<std::vector<std::vector<node_id>>> gt;
    if (!a.groundtruth.empty()) {
        gt = read_ivecs(a.groundtruth);
    }
    Output report(a.report);
    bench::write_report_header(report.stream());
    for (const auto& path : a.indices) {
        const auto index = layout::open_index(path, open);
        const auto queries = read_vecs(a.queries, index.metric());
        const std::string label =
            a.dataset.empty() ? std::filesystem::path(path).stem().string() : a.dataset;
        for (std::size_t L : a.list_sizes) {
            const search::SearchParams params{a.k, L, a.beamwidth};
            const auto batch = search::batch_search(index, queries, params, a.concurrency,
                                                    gt ? &*gt : nullptr);
            bench::write_report_row(report.stream(),
                                    bench::make_row(label, index, params, a.concurrency, g.seed,
                                                    batch));
            if (!a.per_query.empty()) {
                std::ofstream out(per_query_path(a.per_query, L, a.list_sizes.size() > 1));
                search::write_outcomes_csv(out, batch.outcomes);
            }
            std::size_t failed = 0;
            for (std::size_t q = 0; q < batch.errors.size(); ++q) {
                if (!batch.errors[q].empty()) {
                    if (failed++ == 0) {
                        std::cerr << "query " << q << ": " << batch.errors[q] << "\n";
                    }
                }
            }
            if (failed > 0) {
                std::cerr << failed << " of " << queries.size() << " queries failed at L=" << L
                          << "\n";
            }
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct SwitchArgs {
    std::vector<std::string> indices;
    std::size_t repetitions = 10;
    std::string mode;
    std::string out;
};

int run_switch(const SwitchArgs& a, const Globals& g) {
    layout::OpenOptions open;
    open.io_path = layout::parse_io_path(g.io_path);
    if (!a.mode.empty()) {
        open.mode = layout::parse_mode(a.mode);
    }
    std::vector<std::filesystem::path> paths(a.indices.begin(), a.indices.end());
    const auto records = bench::switch_bench(paths, a.repetitions, open);
    Output out(a.out);
    bench::write_switch_csv(out.stream(), records);

    std::size_t hits = 0, errors = 0;
    std::vector<double> ms, fast_ms, slow_ms;
    std::uint64_t min_bytes = ~0ULL, max_bytes = 0;
    for (const auto& r : records) {
        hits += r.fast_path;
        errors += !r.error.empty();
        ms.push_back(r.wall_ms);
        (r.fast_path ? fast_ms : slow_ms).push_back(r.wall_ms);
        min_bytes = std::min(min_bytes, r.bytes_loaded);
        max_bytes = std::max(max_bytes, r.bytes_loaded);
    }
    std::ostream& summary = a.out.empty() || a.out == "-" ? std::cerr : std::cout;
    summary << "switches " << records.size() << ", fast-path hits " << hits << ", errors "
            << errors << ", bytes_loaded " << min_bytes << ".." << max_bytes
            << ", median ms " << median(ms) << ", io " << g.io_path << "\n";
    return errors == 0 ? 0 : 2;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
    std::string index;
    std::vector<std::size_t> nodes;
};

int run_inspect(const InspectArgs& a, const Globals& g) {
    const auto size = std::filesystem::file_size(a.index);
    std::cout << "file " << a.index << " (" << size << " bytes)\n";
    const auto meta = layout::read_metadata(a.index);
    const auto& geo = meta.geometry;
    std::cout << "magic AISQ  version " << meta.version << "\n";
    std::cout << "mode " << layout::to_string(meta.mode) << "  kind " << to_string(meta.kind)
              << "  metric " << to_string(meta.metric) << "\n";
    std::cout << "N " << meta.num_nodes << "  d " << meta.dim << "  R " << geo.max_degree
              << "  m " << meta.m() << "  n_ep " << meta.entrypoints.size() << "  B "
              << geo.block_size << "\n";
    print_geometry(std::cout, geo);
    std::cout << "degree check: " << layout::validate_degree(geo).message << "\n";
    if (meta.codebook_placement == layout::CodebookPlacement::Inline) {
        std::cout << "codebook inline at offset " << meta.codebook_offset << ", "
                  << meta.codebook_size << " bytes, hash " << hash_string(meta.codebook_hash)
                  << "\n";
    } else {
        std::cout << "codebook external \"" << meta.codebook_path << "\", "
                  << meta.codebook_size << " bytes, hash " << hash_string(meta.codebook_hash)
                  << "\n";
    }
    std::cout << "node region at offset " << meta.node_region_offset << ", "
              << geo.region_bytes(meta.num_nodes) << " bytes, file expected "
              << meta.expected_file_size() << " bytes\n";
    for (std::size_t i = 0; i < meta.entrypoints.size(); ++i) {
        std::cout << "entrypoint " << meta.entrypoints[i] << " code "
                  << hex({meta.entrypoint_codes.data() + i * meta.m(), meta.m()}) << "\n";
    }

    layout::OpenOptions open;
    open.io_path = layout::parse_io_path(g.io_path);
    const auto index = layout::open_index(a.index, open);
    for (std::size_t id : a.nodes) {
        const auto loc = layout::node_offset(static_cast<node_id>(id), geo,
                                             meta.node_region_offset, meta.num_nodes);
        const auto chunk = index.read_node_chunk(static_cast<node_id>(id));
        std::cout << "node " << id << ": chunk at offset " << loc.read_offset + loc.offset_in_read
                  << " (read " << loc.read_length << " bytes at " << loc.read_offset << ")\n";
        std::cout << "  full_vector [";
        for (std::size_t t = 0; t < chunk.full_vector.size(); ++t) {
            std::cout << (t ? " " : "") << chunk.full_vector[t];
        }
        std::cout << "]\n  neighbor_count " << chunk.neighbors.size() << "\n  neighbors [";
        for (std::size_t j = 0; j < chunk.neighbors.size(); ++j) {
            std::cout << (j ? " " : "") << chunk.neighbors[j];
        }
        std::cout << "]\n";
        if (meta.mode == layout::Mode::AiSAQ) {
            std::cout << "  inline_pq";
            for (std::size_t j = 0; j < chunk.neighbors.size(); ++j) {
                std::cout << " " << chunk.neighbors[j] << ":"
                          << hex({chunk.inline_pq.data() + j * meta.m(), meta.m()});
            }
            std::cout << "\n";
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

int run_cost(const bench::CostModelInput& in) {
    const auto est = bench::estimate_cost(in);
    std::cout << std::setprecision(10);
    std::cout << "servers " << in.servers << "\n";
    std::cout << "system,dram_gb,ssd_gb,usd\n";
    std::cout << "diskann," << est.diskann.dram_gb << "," << est.diskann.ssd_gb << ","
              << est.diskann.usd << "\n";
    std::cout << "aisaq," << est.aisaq.dram_gb << "," << est.aisaq.ssd_gb << ","
              << est.aisaq.usd << "\n";
    std::cout << "diskann dram per server " << est.diskann_dram_per_server_gb << " GB\n";
    if (est.crossover_servers) {
        std::cout << "aisaq cheaper from " << *est.crossover_servers << " servers\n";
    } else {
        std::cout << "aisaq never cheaper\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disk-resident graph ANN index with inline PQ codes"};
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--seed", globals.seed, "Seed for data generation and builds");
    app.add_option("--block-size", globals.block_size, "Storage block size B in bytes")
        ->check(CLI::PositiveNumber);
    app.add_option("--io-path", globals.io_path, "Chunk read path")
        ->check(CLI::IsMember({"direct", "buffered"}));

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic Gaussian-mixture dataset");
    gen_cmd->add_option("--out", gen.prefix, "Output prefix")->required();
    gen_cmd->add_option("-n,--num-base", gen.num_base);
    gen_cmd->add_option("--num-queries", gen.num_queries);
    gen_cmd->add_option("--dim", gen.dim);
    gen_cmd->add_option("--clusters", gen.clusters);
    gen_cmd->add_option("--format", gen.format)->check(CLI::IsMember({"fvecs", "bvecs"}));
    gen_cmd->add_option("--metric", gen.metric)->check(CLI::IsMember({"l2", "mips"}));
    gen_cmd->add_option("--gt-k", gen.gt_k);

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "Build an index file from fvecs/bvecs");
    build_cmd->add_option("--data", build.data, "Base vectors")->required()->check(CLI::ExistingFile);
    build_cmd->add_option("-o,--output", build.output, "Index file")->required();
    build_cmd->add_option("--metric", build.metric)->check(CLI::IsMember({"l2", "mips"}));
    build_cmd->add_option("-R,--max-degree", build.max_degree);
    build_cmd->add_option("-L,--build-list", build.build_list);
    build_cmd->add_option("--alpha", build.alpha);
    build_cmd->add_option("-m,--pq-bytes", build.m);
    build_cmd->add_option("--iterations", build.iterations, "k-means iterations");
    build_cmd->add_option("--mode", build.mode)->check(CLI::IsMember({"aisaq", "diskann"}));
    build_cmd->add_option("--shared-codebook", build.shared_codebook,
                          "Codebook file to load, or to train and save when missing");
    build_cmd->add_option("--pq-train", build.pq_train, "Vectors to train the codebook on")
        ->check(CLI::ExistingFile);
    build_cmd->add_flag("--sidecar", build.sidecar, "Also write the PQ array sidecar");
    build_cmd->add_option("--n-ep", build.n_ep, "Entrypoint count");

    SearchArgs search;
    search.list_sizes = {64};
    auto* search_cmd = app.add_subcommand("search", "Run queries against an index");
    search_cmd->add_option("--index", search.indices)->required()->expected(1);
    search_cmd->add_option("--queries", search.queries)->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--gt", search.groundtruth)->check(CLI::ExistingFile);
    search_cmd->add_option("-k", search.k);
    search_cmd->add_option("-L,--list-size", search.list_sizes, "One or more L values");
    search_cmd->add_option("-w,--beamwidth", search.beamwidth);
    search_cmd->add_option("--concurrency", search.concurrency);
    search_cmd->add_option("--mode", search.mode)->check(CLI::IsMember({"aisaq", "diskann"}));
    search_cmd->add_option("--report", search.report, "Report CSV (default stdout)");
    search_cmd->add_option("--per-query", search.per_query, "Per-query outcome CSV");
    search_cmd->add_option("--dataset", search.dataset, "Dataset label for report rows");

    SearchArgs sweep;
    sweep.list_sizes = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    auto* sweep_cmd = app.add_subcommand("sweep", "L sweep over one or more indices");
    sweep_cmd->add_option("--index", sweep.indices)->required();
    sweep_cmd->add_option("--queries", sweep.queries)->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--gt", sweep.groundtruth)->check(CLI::ExistingFile);
    sweep_cmd->add_option("-k", sweep.k);
    sweep_cmd->add_option("-L,--list-size", sweep.list_sizes);
    sweep_cmd->add_option("-w,--beamwidth", sweep.beamwidth);
    sweep_cmd->add_option("--concurrency", sweep.concurrency);
    sweep_cmd->add_option("--mode", sweep.mode)->check(CLI::IsMember({"aisaq", "diskann"}));
    sweep_cmd->add_option("--report", sweep.report);
    sweep_cmd->add_option("--dataset", sweep.dataset);

    SwitchArgs sw;
    auto* switch_cmd = app.add_subcommand("switch-bench", "Round-robin index switching");
    switch_cmd->add_option("--index", sw.indices)->required();
    switch_cmd->add_option("--reps", sw.repetitions);
    switch_cmd->add_option("--mode", sw.mode)->check(CLI::IsMember({"aisaq", "diskann"}));
    switch_cmd->add_option("--out", sw.out, "Per-switch CSV (default stdout)");

    InspectArgs inspect;
    auto* inspect_cmd = app.add_subcommand("inspect", "Dump metadata and node chunks");
    inspect_cmd->add_option("index", inspect.index)->required();
    inspect_cmd->add_option("--node", inspect.nodes, "Node ids to dump");

    bench::CostModelInput cost;
    auto* cost_cmd = app.add_subcommand("cost", "DRAM vs SSD cost of n search servers");
    cost_cmd->add_option("-N,--num-vectors", cost.num_vectors)->required();
    cost_cmd->add_option("--b-pq", cost.pq_bytes)->required();
    cost_cmd->add_option("-R,--max-degree", cost.max_degree)->required();
    cost_cmd->add_option("--b-full", cost.full_bytes)->required();
    cost_cmd->add_option("--servers", cost.servers);
    cost_cmd->add_option("--dram-usd-per-gb", cost.dram_usd_per_gb);
    cost_cmd->add_option("--ssd-usd-per-gb", cost.ssd_usd_per_gb);
    cost_cmd->add_flag("--base-per-server", cost.base_ssd_per_server,
                       "Charge the base index SSD once per server");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd) return run_gen(gen, globals);
        if (*build_cmd) return run_build(build, globals);
        if (*search_cmd) return run_search(search, globals);
        if (*sweep_cmd) return run_search(sweep, globals);
        if (*switch_cmd) {
            if (sw.indices.size() < 2) {
                std::cerr << "error: switch-bench needs at least two --index values\n";
                return 1;
            }
            return run_switch(sw, globals);
        }
        if (*inspect_cmd) return run_inspect(inspect, globals);
        if (*cost_cmd) return run_cost(cost);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
