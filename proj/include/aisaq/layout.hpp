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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aisaq/core.hpp"
#include "aisaq/graph.hpp"
#include "aisaq/pq.hpp"

namespace aisaq::layout {

/// DiskANN keeps every PQ code in RAM; AiSAQ inlines each node's neighbor
/// codes into its chunk and keeps only the entrypoint codes in RAM.
enum class Mode : std::uint8_t { DiskANN = 0, AiSAQ = 1 };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

inline constexpr std::size_t kIdBytes = 4;
inline constexpr std::size_t kDefaultBlockSize = 4096;
inline constexpr std::size_t kMetadataBytes = 4096;

struct ChunkGeometry {
    std::size_t full_bytes = 0;  // one full-precision vector
    std::size_t id_bytes = kIdBytes;
    std::size_t max_degree = 0;
    std::size_t pq_bytes = 0;  // one PQ code, m
    std::size_t block_size = kDefaultBlockSize;
    Mode mode = Mode::AiSAQ;

    /// DiskANN: full + id(R + 1). AiSAQ: full + id + R(id + pq).
    std::size_t chunk_size() const;
    std::size_t blocks_per_chunk() const;
    /// Zero when a chunk spans more than one block.
    std::size_t chunks_per_block() const;
    /// Bytes of one chunk read, always whole blocks.
    std::size_t read_length() const { return blocks_per_chunk() * block_size; }
    /// Bytes of the node region holding `num_nodes` chunks.
    std::uint64_t region_bytes(std::size_t num_nodes) const;

    friend bool operator==(const ChunkGeometry&, const ChunkGeometry&) = default;
};

inline std::size_t chunk_size(const ChunkGeometry& g) { return g.chunk_size(); }

struct DegreeAdvice {
    bool ok = true;
    std::size_t chunk_size = 0;
    std::size_t blocks = 0;  // blocks spanned by one chunk (1 when chunks share a block)
    std::size_t slack = 0;   // unused bytes in the chunk's slot or block span
    /// Largest R that fills the current slot or block span.
    std::size_t fill_degree = 0;
    /// Largest R fitting one block fewer, for chunks spanning several blocks.
    std::optional<std::size_t> shrink_degree;
    std::string message;
};

/// Checks the recommended fit of a chunk to blocks: a chunk no larger than
/// a block always fits B/n for n = floor(B / chunk); a chunk spanning n
/// blocks is fine when it wastes at most 1% of them. Otherwise suggests
/// the degree that fills the span.
DegreeAdvice validate_degree(const ChunkGeometry& g);

/// Where one node's chunk lives: a block-aligned read and the chunk's
/// position inside that read.
struct ChunkLocation {
    std::uint64_t read_offset = 0;
    std::size_t read_length = 0;
    std::size_t offset_in_read = 0;
};

ChunkLocation node_offset(node_id id, const ChunkGeometry& g, std::uint64_t node_region_offset,
                          std::size_t num_nodes);

enum class CodebookPlacement : std::uint8_t { Inline = 0, External = 1 };

struct IndexMetadata {
    std::uint32_t version = 1;
    Mode mode = Mode::AiSAQ;
    ElementKind kind = ElementKind::Float32;
    Metric metric = Metric::SquaredEuclidean;
    std::uint32_t num_nodes = 0;
    std::uint32_t dim = 0;
    ChunkGeometry geometry;
    std::vector<node_id> entrypoints;
    std::vector<std::uint8_t> entrypoint_codes;  // entrypoints.size() * m
    CodebookPlacement codebook_placement = CodebookPlacement::Inline;
    std::uint64_t codebook_offset = 0;
    std::uint64_t codebook_size = 0;
    std::uint64_t codebook_hash = 0;
    std::string codebook_path;  // external placement, relative to the index directory
    std::uint64_t node_region_offset = 0;

    std::size_t m() const { return geometry.pq_bytes; }
    /// Bytes reserved for metadata at the start of the file.
    std::size_t region_bytes() const;
    std::uint64_t expected_file_size() const;

    /// The metadata image, zero padded to kMetadataBytes.
    std::vector<std::uint8_t> encode() const;
    static IndexMetadata decode(std::span<const std::uint8_t> bytes);

    friend bool operator==(const IndexMetadata&, const IndexMetadata&) = default;
};

struct SerializeOptions {
    Mode mode = Mode::AiSAQ;
    std::size_t block_size = kDefaultBlockSize;
    /// When set, the index references this already-saved codebook file
    /// instead of carrying the codebook inline.
    std::optional<std::filesystem::path> external_codebook;
    /// AiSAQ indices may also carry the PQ sidecar so they can be opened in
    /// DiskANN mode; DiskANN indices always get one.
    bool write_sidecar = false;
};

struct SerializeReport {
    ChunkGeometry geometry;
    DegreeAdvice advice;
    IndexMetadata metadata;
    std::uint64_t file_bytes = 0;
    std::optional<std::filesystem::path> sidecar;
};

/// Sidecar holding the raw node-major N * m PQ array.
std::filesystem::path sidecar_path(const std::filesystem::path& index_path);

/// One encoded chunk image of exactly geometry.chunk_size() bytes.
std::vector<std::uint8_t> encode_chunk(const ChunkGeometry& g, const Dataset& data, node_id id,
                                       std::span<const node_id> neighbors,
                                       std::span<const std::uint8_t> codes);

SerializeReport serialize_index(const std::filesystem::path& path, const graph::VamanaGraph& g,
                                const Dataset& data, const pq::Codebook& codebook,
                                std::span<const std::uint8_t> codes,
                                const SerializeOptions& options);

/// Raised when an index or sidecar file is malformed or truncated.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class IoPath : std::uint8_t { Direct = 0, Buffered = 1 };
std::string_view to_string(IoPath path);
IoPath parse_io_path(std::string_view name);

struct NodeChunk {
    node_id id = 0;
    std::vector<float> full_vector;
    std::vector<node_id> neighbors;       // neighbor_count entries
    std::vector<std::uint8_t> inline_pq;  // AiSAQ: neighbors.size() * m
    std::size_t pq_slots = 0;             // AiSAQ: R slots materialized by the read
};

struct OpenOptions {
    /// An already-loaded codebook to reuse; must match the index's hash.
    std::shared_ptr<const pq::Codebook> shared_codebook;
    /// Open an AiSAQ index in DiskANN mode through its sidecar.
    std::optional<Mode> mode;
    IoPath io_path = IoPath::Direct;
};

struct LoadStats {
    std::uint64_t bytes_loaded = 0;
    double wall_ms = 0.0;
    bool codebook_reused = false;
    IoPath io_path = IoPath::Direct;
};

struct IoCounters {
    std::atomic<std::uint64_t> requests{0};
    std::atomic<std::uint64_t> bytes{0};
};

/// An open index. Chunk reads are safe from many threads; metadata,
/// codebook and (DiskANN mode) the PQ array are immutable after open.
class IndexHandle {
public:
    IndexHandle(IndexHandle&&) noexcept;
    IndexHandle& operator=(IndexHandle&&) noexcept;
    ~IndexHandle();

    const std::filesystem::path& path() const { return path_; }
    const IndexMetadata& metadata() const { return meta_; }
    const ChunkGeometry& geometry() const { return meta_.geometry; }
    /// Effective search mode.
    Mode mode() const { return mode_; }
    std::size_t size() const { return meta_.num_nodes; }
    std::size_t dim() const { return meta_.dim; }
    Metric metric() const { return meta_.metric; }

    const pq::Codebook& codebook() const { return *codebook_; }
    std::shared_ptr<const pq::Codebook> shared_codebook() const { return codebook_; }
    std::uint64_t codebook_hash() const { return meta_.codebook_hash; }

    std::span<const std::uint8_t> entrypoint_code(std::size_t i) const;
    /// DiskANN mode only: the RAM-resident code of any node.
    std::span<const std::uint8_t> pq_code(node_id id) const;
    bool has_pq_array() const { return !pq_array_.empty(); }

    /// One block-aligned read of the node's chunk.
    NodeChunk read_node_chunk(node_id id) const;

    const LoadStats& load_stats() const { return load_; }
    IoPath io_path() const { return io_path_; }
    const IoCounters& counters() const { return *counters_; }

    /// Bytes this handle keeps in memory: codebook, entrypoint codes and, in
    /// DiskANN mode, the full PQ array.
    std::uint64_t resident_bytes() const;

private:
    friend struct IndexOpener;
    IndexHandle() = default;

    std::filesystem::path path_;
    int fd_ = -1;
    IoPath io_path_ = IoPath::Direct;
    IndexMetadata meta_;
    Mode mode_ = Mode::AiSAQ;
    std::shared_ptr<const pq::Codebook> codebook_;
    std::vector<std::uint8_t> pq_array_;
    LoadStats load_;
    std::unique_ptr<IoCounters> counters_;
};

IndexHandle open_index(const std::filesystem::path& path, const OpenOptions& options = {});

/// Reads only the metadata of an index file.
IndexMetadata read_metadata(const std::filesystem::path& path);

/// Closes `current` and opens `path`. An AiSAQ target whose codebook hash
/// equals the current one reuses the loaded codebook and reads only the
/// metadata block.
IndexHandle switch_index(IndexHandle&& current, const std::filesystem::path& path,
                         const OpenOptions& options = {});

}  // namespace aisaq::layout
