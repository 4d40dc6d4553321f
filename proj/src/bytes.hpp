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
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace aisaq::detail {

// Little-endian field packing for the on-disk formats. The host is asserted
// little-endian in core.hpp, so fields are copied as-is.

class ByteWriter {
public:
    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& value) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    void put_bytes(std::span<const std::uint8_t> data) {
        bytes_.insert(bytes_.end(), data.begin(), data.end());
    }

    template <typename T>
    void put_span(std::span<const T> data) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
        bytes_.insert(bytes_.end(), p, p + data.size_bytes());
    }

    void pad_to(std::size_t size) {
        if (bytes_.size() > size) {
            throw std::logic_error("pad_to: buffer already exceeds target size");
        }
        bytes_.resize(size, 0);
    }

    std::size_t size() const { return bytes_.size(); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get() {
        require(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        require(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    template <typename T>
    std::vector<T> get_vector(std::size_t count) {
        auto raw = get_bytes(count * sizeof(T));
        std::vector<T> out(count);
        std::memcpy(out.data(), raw.data(), raw.size());
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void require(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw std::runtime_error(what_ + ": truncated at byte " + std::to_string(pos_) +
                                     " (need " + std::to_string(n) + ", have " +
                                     std::to_string(data_.size() - pos_) + ")");
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

}  // namespace aisaq::detail
