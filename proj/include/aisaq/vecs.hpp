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

#include <filesystem>
#include <vector>

#include "aisaq/core.hpp"

namespace aisaq {

// SIFT distribution formats: each record is a little-endian int32 dimension
// followed by that many elements (float32 / uint8 / int32).

Dataset read_fvecs(const std::filesystem::path& path, Metric metric);
Dataset read_bvecs(const std::filesystem::path& path, Metric metric);
std::vector<std::vector<node_id>> read_ivecs(const std::filesystem::path& path);

/// Picks fvecs or bvecs from the file extension.
Dataset read_vecs(const std::filesystem::path& path, Metric metric);

void write_fvecs(const std::filesystem::path& path, const Dataset& data);
void write_bvecs(const std::filesystem::path& path, const Dataset& data);
void write_ivecs(const std::filesystem::path& path,
                 const std::vector<std::vector<node_id>>& rows);

}  // namespace aisaq
