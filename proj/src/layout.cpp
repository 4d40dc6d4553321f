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

#include "aisaq/layout.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "bytes.hpp"

namespace aisaq::layout {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'S', 'Q'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kDirectAlignment = 4096;

std::uint64_t round_up(std::uint64_t value, std::uint64_t multiple) {
    return (value + multiple - 1) / multiple * multiple;
}

std::size_t pq_step(const ChunkGeometry& g) {
    return g.mode == Mode::AiSAQ ? g.id_bytes + g.pq_bytes : g.id_bytes;
}

struct AlignedFree {
    void operator()(std::uint8_t* p) const { std::free(p); }
};
using AlignedBuffer = std::unique_ptr<std::uint8_t[], AlignedFree>;

AlignedBuffer make_aligned(std::size_t bytes) {
    void* p = std::aligned_alloc(kDirectAlignment, round_up(std::max<std::size_t>(bytes, 1),
                                                            kDirectAlignment));
    if (p == nullptr) {
        throw std::bad_alloc();
    }
    return AlignedBuffer(static_cast<std::uint8_t*>(p));
}

void pread_exact(int fd, std::uint8_t* buf, std::size_t length, std::uint64_t offset,
                 const std::filesystem::path& path) {
    std::size_t done = 0;
    while (done < length) {
        const ssize_t got = ::pread(fd, buf + done, length - done,
                                    static_cast<off_t>(offset + done));
        if (got < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw std::runtime_error(path.string() + ": read of " + std::to_string(length) +
                                     " bytes at offset " + std::to_string(offset) +
                                     " failed: " + std::strerror(errno));
        }
        if (got == 0) {
            throw FormatError(path.string() + ": unexpected end of file at offset " +
                              std::to_string(offset + done));
        }
        done += static_cast<std::size_t>(got);
    }
}

std::vector<std::uint8_t> read_whole_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("short read on " + path.string());
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(reinterpret_cast<const char*>(bytes.data()),
                           static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::AiSAQ ? "aisaq" : "diskann"; }

Mode parse_mode(std::string_view name) {
    if (name == "aisaq") {
        return Mode::AiSAQ;
    }
    if (name == "diskann") {
        return Mode::DiskANN;
    }
    throw std::invalid_argument("unknown index mode: " + std::string(name));
}

std::string_view to_string(IoPath path) {
    return path == IoPath::Direct ? "direct" : "buffered";
}

IoPath parse_io_path(std::string_view name) {
    if (name == "direct") {
        return IoPath::Direct;
    }
    if (name == "buffered") {
        return IoPath::Buffered;
    }
    throw std::invalid_argument("unknown io path: " + std::string(name));
}

std::size_t ChunkGeometry::chunk_size() const {
    if (mode == Mode::DiskANN) {
        return full_bytes + id_bytes * (max_degree + 1);
    }
    return full_bytes + id_bytes + max_degree * (id_bytes + pq_bytes);
}

std::size_t ChunkGeometry::blocks_per_chunk() const {
    return (chunk_size() + block_size - 1) / block_size;
}

std::size_t ChunkGeometry::chunks_per_block() const {
    const auto cs = chunk_size();
    return cs <= block_size ? block_size / cs : 0;
}

std::uint64_t ChunkGeometry::region_bytes(std::size_t num_nodes) const {
    if (const auto per_block = chunks_per_block(); per_block > 0) {
        return (num_nodes + per_block - 1) / per_block * static_cast<std::uint64_t>(block_size);
    }
    return static_cast<std::uint64_t>(num_nodes) * blocks_per_chunk() * block_size;
}

DegreeAdvice validate_degree(const ChunkGeometry& g) {
    DegreeAdvice a;
    a.chunk_size = g.chunk_size();
    const std::size_t step = pq_step(g);
    const std::size_t base = a.chunk_size - g.max_degree * step;
    const std::size_t B = g.block_size;
    std::ostringstream msg;
    if (a.chunk_size <= B) {
        const std::size_t per_block = B / a.chunk_size;
        const std::size_t slot = B / per_block;
        a.blocks = 1;
        a.slack = slot - a.chunk_size;
        a.fill_degree = (slot - base) / step;
        a.ok = true;
        msg << "chunk " << a.chunk_size << " B fits " << per_block << " per " << B
            << " B block (slot " << slot << " B, R up to " << a.fill_degree << ")";
    } else {
        a.blocks = g.blocks_per_chunk();
        const std::size_t span = a.blocks * B;
        a.slack = span - a.chunk_size;
        a.fill_degree = (span - base) / step;
        if ((a.blocks - 1) * B >= base + step) {
            a.shrink_degree = ((a.blocks - 1) * B - base) / step;
        }
        a.ok = a.slack * 100 <= span;
        msg << "chunk " << a.chunk_size << " B spans " << a.blocks << " blocks with "
            << a.slack << " B unused";
        if (!a.ok) {
            msg << "; R=" << a.fill_degree << " fills " << span << " B";
            if (a.shrink_degree) {
                msg << ", R=" << *a.shrink_degree << " fits " << (a.blocks - 1) * B << " B";
            }
        }
    }
    a.message = msg.str();
    return a;
}

ChunkLocation node_offset(node_id id, const ChunkGeometry& g, std::uint64_t node_region_offset,
                          std::size_t num_nodes) {
    if (id >= num_nodes) {
        throw std::out_of_range("node id " + std::to_string(id) + " out of range (N=" +
                                std::to_string(num_nodes) + ")");
    }
    ChunkLocation loc;
    if (const auto per_block = g.chunks_per_block(); per_block > 0) {
        loc.read_offset = node_region_offset + static_cast<std::uint64_t>(id / per_block) *
                                                   g.block_size;
        loc.read_length = g.block_size;
        loc.offset_in_read = (id % per_block) * g.chunk_size();
    } else {
        loc.read_length = g.blocks_per_chunk() * g.block_size;
        loc.read_offset = node_region_offset + static_cast<std::uint64_t>(id) * loc.read_length;
        loc.offset_in_read = 0;
    }
    return loc;
}

std::size_t IndexMetadata::region_bytes() const {
    return round_up(kMetadataBytes, geometry.block_size);
}

std::uint64_t IndexMetadata::expected_file_size() const {
    return node_region_offset + geometry.region_bytes(num_nodes);
}

// Layout of the metadata block (little-endian):
//   0  magic "AISQ"             4  version u32
//   8  mode u8, kind u8, metric u8, codebook placement u8
//  12  N u32  16  d u32  20  R u32  24  m u32  28  n_ep u32
//  32  block size u32  36  chunk size u32  40  blocks/chunk u32  44  chunks/block u32
//  48  node region offset u64  56  codebook offset u64
//  64  codebook size u64       72  codebook hash u64
//  80  codebook path length u16, path bytes
//  then n_ep entrypoint ids (u32) and n_ep entrypoint codes (m bytes each)
std::vector<std::uint8_t> IndexMetadata::encode() const {
    detail::ByteWriter w;
    w.put(kMagic);
    w.put(version);
    w.put(static_cast<std::uint8_t>(mode));
    w.put(static_cast<std::uint8_t>(kind));
    w.put(static_cast<std::uint8_t>(metric));
    w.put(static_cast<std::uint8_t>(codebook_placement));
    w.put(num_nodes);
    w.put(dim);
    w.put(static_cast<std::uint32_t>(geometry.max_degree));
    w.put(static_cast<std::uint32_t>(geometry.pq_bytes));
    w.put(static_cast<std::uint32_t>(entrypoints.size()));
    w.put(static_cast<std::uint32_t>(geometry.block_size));
    w.put(static_cast<std::uint32_t>(geometry.chunk_size()));
    w.put(static_cast<std::uint32_t>(geometry.blocks_per_chunk()));
    w.put(static_cast<std::uint32_t>(geometry.chunks_per_block()));
    w.put(node_region_offset);
    w.put(codebook_offset);
    w.put(codebook_size);
    w.put(codebook_hash);
    if (codebook_path.size() > 0xffff) {
        throw std::invalid_argument("codebook path too long for the metadata block");
    }
    w.put(static_cast<std::uint16_t>(codebook_path.size()));
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(codebook_path.data()),
                 codebook_path.size()});
    w.put_span(std::span<const node_id>(entrypoints));
    w.put_bytes(entrypoint_codes);
    if (w.size() > kMetadataBytes) {
        throw std::invalid_argument(
            "index metadata needs " + std::to_string(w.size()) + " bytes, more than the " +
            std::to_string(kMetadataBytes) + "-byte metadata block (n_ep=" +
            std::to_string(entrypoints.size()) + ", m=" + std::to_string(geometry.pq_bytes) + ")");
    }
    w.pad_to(kMetadataBytes);
    return std::move(w.bytes());
}

IndexMetadata IndexMetadata::decode(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "index metadata");
    auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
        throw FormatError("index metadata: bad magic at offset 0");
    }
    IndexMetadata m;
    m.version = r.get<std::uint32_t>();
    if (m.version != kVersion) {
        throw FormatError("index metadata: unsupported version " + std::to_string(m.version) +
                          " at offset 4");
    }
    const auto mode = r.get<std::uint8_t>();
    const auto kind = r.get<std::uint8_t>();
    const auto metric = r.get<std::uint8_t>();
    const auto placement = r.get<std::uint8_t>();
    if (mode > 1 || kind > 1 || metric > 1 || placement > 1) {
        throw FormatError("index metadata: invalid enum tag in bytes 8..11");
    }
    m.mode = static_cast<Mode>(mode);
    m.kind = static_cast<ElementKind>(kind);
    m.metric = static_cast<Metric>(metric);
    m.codebook_placement = static_cast<CodebookPlacement>(placement);
    m.num_nodes = r.get<std::uint32_t>();
    m.dim = r.get<std::uint32_t>();
    m.geometry.max_degree = r.get<std::uint32_t>();
    m.geometry.pq_bytes = r.get<std::uint32_t>();
    const auto n_ep = r.get<std::uint32_t>();
    m.geometry.block_size = r.get<std::uint32_t>();
    m.geometry.mode = m.mode;
    m.geometry.full_bytes = static_cast<std::size_t>(m.dim) * element_size(m.kind);
    const auto chunk = r.get<std::uint32_t>();
    const auto bpc = r.get<std::uint32_t>();
    const auto cpb = r.get<std::uint32_t>();
    if (m.geometry.block_size == 0 || m.dim == 0 || m.num_nodes == 0 || n_ep == 0 ||
        m.geometry.pq_bytes == 0) {
        throw FormatError("index metadata: zero-valued shape field in bytes 12..35");
    }
    if (chunk != m.geometry.chunk_size() || bpc != m.geometry.blocks_per_chunk() ||
        cpb != m.geometry.chunks_per_block()) {
        throw FormatError("index metadata: stored chunk geometry (" + std::to_string(chunk) +
                          " B) disagrees with its parameters (" +
                          std::to_string(m.geometry.chunk_size()) + " B)");
    }
    m.node_region_offset = r.get<std::uint64_t>();
    m.codebook_offset = r.get<std::uint64_t>();
    m.codebook_size = r.get<std::uint64_t>();
    m.codebook_hash = r.get<std::uint64_t>();
    const auto path_len = r.get<std::uint16_t>();
    auto path = r.get_bytes(path_len);
    m.codebook_path.assign(reinterpret_cast<const char*>(path.data()), path.size());
    m.entrypoints = r.get_vector<node_id>(n_ep);
    for (node_id ep : m.entrypoints) {
        if (ep >= m.num_nodes) {
            throw FormatError("index metadata: entrypoint " + std::to_string(ep) +
                              " out of range");
        }
    }
    auto codes = r.get_bytes(static_cast<std::size_t>(n_ep) * m.geometry.pq_bytes);
    m.entrypoint_codes.assign(codes.begin(), codes.end());
    if (m.node_region_offset % m.geometry.block_size != 0) {
        throw FormatError("index metadata: node region offset " +
                          std::to_string(m.node_region_offset) + " is not block aligned");
    }
    return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& index_path) {
    auto p = index_path;
    p += ".pq";
    return p;
}

std::vector<std::uint8_t> encode_chunk(const ChunkGeometry& g, const Dataset& data, node_id id,
                                       std::span<const node_id> neighbors,
                                       std::span<const std::uint8_t> codes) {
    if (neighbors.size() > g.max_degree) {
        throw std::invalid_argument("node " + std::to_string(id) + " exceeds max degree");
    }
    std::vector<std::uint8_t> chunk(g.chunk_size(), 0);
    std::uint8_t* p = chunk.data();
    auto row = data.row(id);
    if (data.kind() == ElementKind::Float32) {
        std::memcpy(p, row.data(), row.size_bytes());
    } else {
        for (std::size_t i = 0; i < row.size(); ++i) {
            p[i] = static_cast<std::uint8_t>(row[i]);
        }
    }
    p += g.full_bytes;
    const auto count = static_cast<std::uint32_t>(neighbors.size());
    std::memcpy(p, &count, sizeof(count));
    p += g.id_bytes;
    std::memcpy(p, neighbors.data(), neighbors.size_bytes());
    p += g.max_degree * g.id_bytes;
    if (g.mode == Mode::AiSAQ) {
        for (std::size_t j = 0; j < neighbors.size(); ++j) {
            std::memcpy(p + j * g.pq_bytes, codes.data() + neighbors[j] * g.pq_bytes, g.pq_bytes);
        }
    }
    return chunk;
}

SerializeReport serialize_index(const std::filesystem::path& path, const graph::VamanaGraph& g,
                                const Dataset& data, const pq::Codebook& codebook,
                                std::span<const std::uint8_t> codes,
                                const SerializeOptions& options) {
    const std::size_t n = data.size();
    const std::size_t m = codebook.m();
    if (n == 0 || g.size() != n) {
        throw std::invalid_argument("graph and dataset sizes differ");
    }
    if (codebook.dim() != data.dim()) {
        throw DimensionMismatch("codebook and dataset dimensions differ");
    }
    if (codes.size() != n * m) {
        throw std::invalid_argument("PQ code array must hold N * m bytes");
    }
    if (options.block_size == 0) {
        throw std::invalid_argument("block size must be positive");
    }
    g.validate();

    SerializeReport report;
    ChunkGeometry& geo = report.geometry;
    geo.full_bytes = data.vector_bytes();
    geo.max_degree = g.max_degree;
    geo.pq_bytes = m;
    geo.block_size = options.block_size;
    geo.mode = options.mode;
    report.advice = validate_degree(geo);

    IndexMetadata& meta = report.metadata;
    meta.mode = options.mode;
    meta.kind = data.kind();
    meta.metric = data.metric();
    meta.num_nodes = static_cast<std::uint32_t>(n);
    meta.dim = static_cast<std::uint32_t>(data.dim());
    meta.geometry = geo;
    meta.entrypoints = g.entrypoints;
    for (node_id ep : g.entrypoints) {
        meta.entrypoint_codes.insert(meta.entrypoint_codes.end(), codes.begin() + ep * m,
                                     codes.begin() + (ep + 1) * m);
    }
    const auto codebook_bytes = codebook.serialize();
    meta.codebook_size = codebook_bytes.size();
    meta.codebook_hash = pq::fnv1a64(codebook_bytes);
    std::uint64_t codebook_region = 0;
    if (options.external_codebook) {
        const auto on_disk = pq::Codebook::load(*options.external_codebook);
        if (on_disk.content_hash() != meta.codebook_hash) {
            throw std::invalid_argument("external codebook " +
                                        options.external_codebook->string() +
                                        " differs from the codebook used for encoding");
        }
        meta.codebook_placement = CodebookPlacement::External;
        const auto index_dir = std::filesystem::absolute(path).parent_path();
        meta.codebook_path = std::filesystem::relative(
                                 std::filesystem::absolute(*options.external_codebook), index_dir)
                                 .generic_string();
        meta.codebook_offset = 0;
    } else {
        meta.codebook_placement = CodebookPlacement::Inline;
        meta.codebook_offset = meta.region_bytes();
        codebook_region = round_up(meta.codebook_size, geo.block_size);
    }
    meta.node_region_offset = meta.region_bytes() + codebook_region;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot create " + path.string());
    }
    auto write = [&](std::span<const std::uint8_t> bytes) {
        if (!out.write(reinterpret_cast<const char*>(bytes.data()),
                       static_cast<std::streamsize>(bytes.size()))) {
            throw std::runtime_error("write failed on " + path.string());
        }
    };

    auto head = meta.encode();
    head.resize(meta.region_bytes(), 0);
    write(head);
    if (meta.codebook_placement == CodebookPlacement::Inline) {
        std::vector<std::uint8_t> padded(codebook_bytes);
        padded.resize(codebook_region, 0);
        write(padded);
    }

    if (const auto per_block = geo.chunks_per_block(); per_block > 0) {
        std::vector<std::uint8_t> block(geo.block_size);
        for (std::size_t first = 0; first < n; first += per_block) {
            std::fill(block.begin(), block.end(), 0);
            for (std::size_t slot = 0; slot < per_block && first + slot < n; ++slot) {
                const auto id = static_cast<node_id>(first + slot);
                auto chunk = encode_chunk(geo, data, id, g.out_neighbors[id], codes);
                std::copy(chunk.begin(), chunk.end(),
                          block.begin() + static_cast<std::ptrdiff_t>(slot * geo.chunk_size()));
            }
            write(block);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const auto id = static_cast<node_id>(i);
            auto chunk = encode_chunk(geo, data, id, g.out_neighbors[id], codes);
            chunk.resize(geo.read_length(), 0);
            write(chunk);
        }
    }
    out.close();
    if (!out) {
        throw std::runtime_error("failed to finish " + path.string());
    }
    report.file_bytes = meta.expected_file_size();

    if (options.mode == Mode::DiskANN || options.write_sidecar) {
        report.sidecar = sidecar_path(path);
        write_file(*report.sidecar, codes);
    }
    return report;
}

// ---------------------------------------------------------------------------
// IndexHandle

IndexHandle::IndexHandle(IndexHandle&& other) noexcept
    : path_(std::move(other.path_)),
      fd_(std::exchange(other.fd_, -1)),
      io_path_(other.io_path_),
      meta_(std::move(other.meta_)),
      mode_(other.mode_),
      codebook_(std::move(other.codebook_)),
      pq_array_(std::move(other.pq_array_)),
      load_(other.load_),
      counters_(std::move(other.counters_)) {}

IndexHandle& IndexHandle::operator=(IndexHandle&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) {
            ::close(fd_);
        }
        path_ = std::move(other.path_);
        fd_ = std::exchange(other.fd_, -1);
        io_path_ = other.io_path_;
        meta_ = std::move(other.meta_);
        mode_ = other.mode_;
        codebook_ = std::move(other.codebook_);
        pq_array_ = std::move(other.pq_array_);
        load_ = other.load_;
        counters_ = std::move(other.counters_);
    }
    return *this;
}

IndexHandle::~IndexHandle() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

std::span<const std::uint8_t> IndexHandle::entrypoint_code(std::size_t i) const {
    return std::span<const std::uint8_t>(meta_.entrypoint_codes).subspan(i * meta_.m(), meta_.m());
}

std::span<const std::uint8_t> IndexHandle::pq_code(node_id id) const {
    if (pq_array_.empty()) {
        throw std::logic_error("PQ array is only resident in DiskANN mode");
    }
    return std::span<const std::uint8_t>(pq_array_).subspan(
        static_cast<std::size_t>(id) * meta_.m(), meta_.m());
}

std::uint64_t IndexHandle::resident_bytes() const {
    return codebook_->centroids().size() * sizeof(float) + meta_.entrypoint_codes.size() +
           pq_array_.size();
}

NodeChunk IndexHandle::read_node_chunk(node_id id) const {
    const auto& g = meta_.geometry;
    const auto loc = node_offset(id, g, meta_.node_region_offset, meta_.num_nodes);
    auto buf = make_aligned(loc.read_length);
    pread_exact(fd_, buf.get(), loc.read_length, loc.read_offset, path_);
    counters_->requests.fetch_add(1, std::memory_order_relaxed);
    counters_->bytes.fetch_add(loc.read_length, std::memory_order_relaxed);

    NodeChunk chunk;
    chunk.id = id;
    const std::uint8_t* p = buf.get() + loc.offset_in_read;
    chunk.full_vector.resize(meta_.dim);
    if (meta_.kind == ElementKind::Float32) {
        std::memcpy(chunk.full_vector.data(), p, g.full_bytes);
    } else {
        for (std::size_t i = 0; i < meta_.dim; ++i) {
            chunk.full_vector[i] = static_cast<float>(p[i]);
        }
    }
    p += g.full_bytes;
    std::uint32_t count = 0;
    std::memcpy(&count, p, sizeof(count));
    if (count > g.max_degree) {
        throw FormatError(path_.string() + ": node " + std::to_string(id) + " at offset " +
                          std::to_string(loc.read_offset + loc.offset_in_read) + " claims " +
                          std::to_string(count) + " neighbors (R=" +
                          std::to_string(g.max_degree) + ")");
    }
    p += g.id_bytes;
    chunk.neighbors.resize(count);
    std::memcpy(chunk.neighbors.data(), p, count * sizeof(node_id));
    for (node_id u : chunk.neighbors) {
        if (u >= meta_.num_nodes) {
            throw FormatError(path_.string() + ": node " + std::to_string(id) +
                              " lists out-of-range neighbor " + std::to_string(u));
        }
    }
    p += g.max_degree * g.id_bytes;
    if (meta_.mode == Mode::AiSAQ) {
        chunk.inline_pq.assign(p, p + static_cast<std::size_t>(count) * g.pq_bytes);
        chunk.pq_slots = g.max_degree;
    }
    return chunk;
}

namespace {

int open_file(const std::filesystem::path& path, IoPath& io_path, std::size_t block_size) {
    if (io_path == IoPath::Direct && block_size % 512 == 0) {
        const int fd = ::open(path.c_str(), O_RDONLY | O_DIRECT | O_CLOEXEC);
        if (fd >= 0) {
            return fd;
        }
        if (errno == ENOENT) {
            throw std::runtime_error("cannot open " + path.string() + ": no such file");
        }
    }
    io_path = IoPath::Buffered;
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) {
        throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
    }
    ::posix_fadvise(fd, 0, 0, POSIX_FADV_DONTNEED);
    return fd;
}

// Names the first region of the file that lies past its end.
void check_extent(const IndexMetadata& meta, std::uint64_t file_size,
                  const std::filesystem::path& path) {
    if (meta.codebook_placement == CodebookPlacement::Inline &&
        meta.codebook_offset + meta.codebook_size > file_size) {
        throw FormatError(path.string() + ": truncated in inline codebook region [" +
                          std::to_string(meta.codebook_offset) + ", " +
                          std::to_string(meta.codebook_offset + meta.codebook_size) +
                          "), file size " + std::to_string(file_size));
    }
    if (meta.expected_file_size() <= file_size) {
        return;
    }
    const auto& g = meta.geometry;
    const std::uint64_t stride =
        g.chunks_per_block() > 0 ? g.block_size : static_cast<std::uint64_t>(g.read_length());
    const std::uint64_t available =
        file_size > meta.node_region_offset ? file_size - meta.node_region_offset : 0;
    const std::uint64_t unit = available / stride;
    const std::uint64_t per_unit = g.chunks_per_block() > 0 ? g.chunks_per_block() : 1;
    const std::uint64_t first_node = unit * per_unit;
    const std::uint64_t last_node =
        std::min<std::uint64_t>(first_node + per_unit, meta.num_nodes) - 1;
    throw FormatError(path.string() + ": truncated in node region at offset " +
                      std::to_string(meta.node_region_offset + unit * stride) + " (nodes " +
                      std::to_string(first_node) + ".." + std::to_string(last_node) +
                      "), file size " + std::to_string(file_size) + ", expected " +
                      std::to_string(meta.expected_file_size()));
}

}  // namespace

struct IndexOpener {
    static IndexHandle open(const std::filesystem::path& path, const OpenOptions& options,
                            const std::shared_ptr<const pq::Codebook>& reuse_candidate,
                            bool strict_shared, std::chrono::steady_clock::time_point start);
};

IndexMetadata read_metadata(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes(kMetadataBytes);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != kMetadataBytes) {
        throw FormatError(path.string() + ": truncated in metadata block [0, " +
                          std::to_string(kMetadataBytes) + "), file has " +
                          std::to_string(in.gcount()) + " bytes");
    }
    return IndexMetadata::decode(bytes);
}

IndexHandle open_index(const std::filesystem::path& path, const OpenOptions& options) {
    return IndexOpener::open(path, options, options.shared_codebook, true,
                     std::chrono::steady_clock::now());
}

IndexHandle switch_index(IndexHandle&& current, const std::filesystem::path& path,
                         const OpenOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    std::shared_ptr<const pq::Codebook> candidate =
        options.shared_codebook ? options.shared_codebook : current.shared_codebook();
    {
        IndexHandle closing = std::move(current);
    }
    return IndexOpener::open(path, options, candidate, false, start);
}

IndexHandle IndexOpener::open(const std::filesystem::path& path, const OpenOptions& options,
                              const std::shared_ptr<const pq::Codebook>& reuse_candidate,
                              bool strict_shared, std::chrono::steady_clock::time_point start) {
    IndexHandle h;
    h.path_ = path;
    h.counters_ = std::make_unique<IoCounters>();
    h.io_path_ = options.io_path;
    h.fd_ = open_file(path, h.io_path_, kMetadataBytes);

    struct stat st {};
    if (::fstat(h.fd_, &st) != 0) {
        throw std::runtime_error("cannot stat " + path.string());
    }
    const auto file_size = static_cast<std::uint64_t>(st.st_size);
    if (file_size < kMetadataBytes) {
        throw FormatError(path.string() + ": truncated in metadata block [0, " +
                          std::to_string(kMetadataBytes) + "), file size " +
                          std::to_string(file_size));
    }
    auto head = make_aligned(kMetadataBytes);
    pread_exact(h.fd_, head.get(), kMetadataBytes, 0, path);
    std::uint64_t loaded = kMetadataBytes;
    h.meta_ = IndexMetadata::decode({head.get(), kMetadataBytes});
    check_extent(h.meta_, file_size, path);
    if (h.io_path_ == IoPath::Direct && h.meta_.geometry.block_size % 512 != 0) {
        ::close(std::exchange(h.fd_, -1));
        h.io_path_ = IoPath::Buffered;
        h.fd_ = open_file(path, h.io_path_, h.meta_.geometry.block_size);
    }

    h.mode_ = options.mode.value_or(h.meta_.mode);
    if (h.mode_ == Mode::AiSAQ && h.meta_.mode == Mode::DiskANN) {
        throw std::invalid_argument(path.string() +
                                    ": a DiskANN-mode index carries no inline PQ codes");
    }
    if (strict_shared && reuse_candidate &&
        reuse_candidate->content_hash() != h.meta_.codebook_hash) {
        throw FormatError(path.string() + ": shared codebook hash does not match the index");
    }

    // Only AiSAQ takes the shared-centroid path; DiskANN-mode loads always
    // bring in the codebook along with the PQ array.
    if (h.mode_ == Mode::AiSAQ && reuse_candidate &&
        reuse_candidate->content_hash() == h.meta_.codebook_hash) {
        h.codebook_ = reuse_candidate;
        h.load_.codebook_reused = true;
    } else {
        std::vector<std::uint8_t> bytes;
        if (h.meta_.codebook_placement == CodebookPlacement::Inline) {
            const auto span = round_up(h.meta_.codebook_size, h.meta_.geometry.block_size);
            auto buf = make_aligned(span);
            pread_exact(h.fd_, buf.get(), span, h.meta_.codebook_offset, path);
            bytes.assign(buf.get(), buf.get() + h.meta_.codebook_size);
        } else {
            std::filesystem::path cb_path = h.meta_.codebook_path;
            if (cb_path.is_relative()) {
                cb_path = std::filesystem::absolute(path).parent_path() / cb_path;
            }
            bytes = read_whole_file(cb_path);
        }
        if (bytes.size() != h.meta_.codebook_size ||
            pq::fnv1a64(bytes) != h.meta_.codebook_hash) {
            throw FormatError(path.string() + ": codebook content hash mismatch");
        }
        loaded += bytes.size();
        h.codebook_ = std::make_shared<const pq::Codebook>(pq::Codebook::deserialize(bytes));
    }
    if (h.codebook_->dim() != h.meta_.dim || h.codebook_->m() != h.meta_.m()) {
        throw FormatError(path.string() + ": codebook shape disagrees with index metadata");
    }

    if (h.mode_ == Mode::DiskANN) {
        const auto side = sidecar_path(path);
        if (!std::filesystem::exists(side)) {
            throw std::runtime_error(path.string() + ": DiskANN mode needs the PQ sidecar " +
                                     side.string());
        }
        h.pq_array_ = read_whole_file(side);
        const std::uint64_t expected = static_cast<std::uint64_t>(h.meta_.num_nodes) * h.meta_.m();
        if (h.pq_array_.size() != expected) {
            throw FormatError(side.string() + ": holds " + std::to_string(h.pq_array_.size()) +
                              " bytes, expected N*m = " + std::to_string(expected));
        }
        loaded += h.pq_array_.size();
    }

    h.load_.bytes_loaded = loaded;
    h.load_.io_path = h.io_path_;
    h.load_.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return h;
}

}  // namespace aisaq::layout
