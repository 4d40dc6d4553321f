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

#include "aisaq/vecs.hpp"

#include <cstring>
#include <fstream>

namespace aisaq {

namespace {

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    const auto size = static_cast<std::size_t>(in.tellg());
    std::vector<char> bytes(size);
    in.seekg(0);
    if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
        throw std::runtime_error("short read on " + path.string());
    }
    return bytes;
}

// Walks records of `elem` bytes each; calls sink(record_index, dim, payload).
template <typename Sink>
void for_each_record(const std::vector<char>& bytes, std::size_t elem,
                     const std::filesystem::path& path, Sink&& sink) {
    std::size_t pos = 0;
    std::size_t record = 0;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < sizeof(std::int32_t)) {
            throw std::runtime_error(path.string() + ": truncated header at byte " +
                                     std::to_string(pos));
        }
        std::int32_t dim = 0;
        std::memcpy(&dim, bytes.data() + pos, sizeof(dim));
        pos += sizeof(dim);
        if (dim <= 0) {
            throw std::runtime_error(path.string() + ": non-positive dimension at byte " +
                                     std::to_string(pos - sizeof(dim)));
        }
        const std::size_t payload = static_cast<std::size_t>(dim) * elem;
        if (bytes.size() - pos < payload) {
            throw std::runtime_error(path.string() + ": truncated record " +
                                     std::to_string(record) + " at byte " + std::to_string(pos));
        }
        sink(record, static_cast<std::size_t>(dim), bytes.data() + pos);
        pos += payload;
        ++record;
    }
}

void write_all(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

template <typename T>
void append(std::vector<char>& out, const T& value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

Dataset read_fvecs(const std::filesystem::path& path, Metric metric) {
    const auto bytes = slurp(path);
    std::vector<float> values;
    std::size_t dim = 0;
    for_each_record(bytes, sizeof(float), path,
                    [&](std::size_t record, std::size_t d, const char* payload) {
                        if (record == 0) {
                            dim = d;
                        } else if (d != dim) {
                            throw DimensionMismatch(path.string() + ": record " +
                                                    std::to_string(record) +
                                                    " has a different dimension");
                        }
                        const auto old = values.size();
                        values.resize(old + d);
                        std::memcpy(values.data() + old, payload, d * sizeof(float));
                    });
    if (values.empty()) {
        throw std::runtime_error(path.string() + ": empty vector file");
    }
    return Dataset(dim, ElementKind::Float32, metric, std::move(values));
}

Dataset read_bvecs(const std::filesystem::path& path, Metric metric) {
    const auto bytes = slurp(path);
    std::vector<float> values;
    std::size_t dim = 0;
    for_each_record(bytes, 1, path, [&](std::size_t record, std::size_t d, const char* payload) {
        if (record == 0) {
            dim = d;
        } else if (d != dim) {
            throw DimensionMismatch(path.string() + ": record " + std::to_string(record) +
                                    " has a different dimension");
        }
        for (std::size_t i = 0; i < d; ++i) {
            values.push_back(static_cast<float>(static_cast<unsigned char>(payload[i])));
        }
    });
    if (values.empty()) {
        throw std::runtime_error(path.string() + ": empty vector file");
    }
    return Dataset(dim, ElementKind::UInt8, metric, std::move(values));
}

std::vector<std::vector<node_id>> read_ivecs(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    std::vector<std::vector<node_id>> rows;
    for_each_record(bytes, sizeof(std::int32_t), path,
                    [&](std::size_t, std::size_t d, const char* payload) {
                        std::vector<node_id> row(d);
                        std::memcpy(row.data(), payload, d * sizeof(std::int32_t));
                        rows.push_back(std::move(row));
                    });
    return rows;
}

Dataset read_vecs(const std::filesystem::path& path, Metric metric) {
    const auto ext = path.extension().string();
    if (ext == ".bvecs") {
        return read_bvecs(path, metric);
    }
    if (ext == ".fvecs") {
        return read_fvecs(path, metric);
    }
    throw std::invalid_argument("unrecognized vector file extension: " + path.string());
}

void write_fvecs(const std::filesystem::path& path, const Dataset& data) {
    std::vector<char> out;
    out.reserve(data.size() * (4 + data.dim() * 4));
    for (std::size_t i = 0; i < data.size(); ++i) {
        append(out, static_cast<std::int32_t>(data.dim()));
        for (float v : data.row(i)) {
            append(out, v);
        }
    }
    write_all(path, out);
}

void write_bvecs(const std::filesystem::path& path, const Dataset& data) {
    if (data.kind() != ElementKind::UInt8) {
        throw std::invalid_argument("bvecs requires a uint8 dataset");
    }
    std::vector<char> out;
    out.reserve(data.size() * (4 + data.dim()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        append(out, static_cast<std::int32_t>(data.dim()));
        for (float v : data.row(i)) {
            out.push_back(static_cast<char>(static_cast<std::uint8_t>(v)));
        }
    }
    write_all(path, out);
}

void write_ivecs(const std::filesystem::path& path,
                 const std::vector<std::vector<node_id>>& rows) {
    std::vector<char> out;
    for (const auto& row : rows) {
        append(out, static_cast<std::int32_t>(row.size()));
        for (node_id id : row) {
            append(out, static_cast<std::int32_t>(id));
        }
    }
    write_all(path, out);
}

}  // namespace aisaq
