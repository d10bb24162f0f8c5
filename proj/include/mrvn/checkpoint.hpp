// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary snapshot of a TrainingState: counters, architecture, master and
// quantized parameters, and the full quantization mapping including gradient
// and loss histories. All integers and doubles are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mrvn/dataset.hpp"
#include "mrvn/trainer.hpp"

namespace mrvn {

std::vector<std::uint8_t> serialize_state(const TrainingState& state);

/// Throws ParseError on bad magic, unknown version, truncation or trailing bytes.
TrainingState deserialize_state(const std::vector<std::uint8_t>& bytes);

/// Writes to a sibling temp file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace mrvn
