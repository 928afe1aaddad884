// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Parameter checkpoints: a single binary file holding a version header and a
// flat list of (name, shape, raw little-endian values) records.
//
//   magic    8 bytes  "EXFCKPT\0"
//   version  u32      kCheckpointVersion
//   count    u32      number of records
//   record:  u32 name length, name bytes,
//            u32 bytes per value (4 = float32, 8 = float64),
//            u32 rank, u64 extent[rank],
//            values (product of extents) in little-endian order
//
// All integers are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "expertfind/params.h"

namespace expertfind {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_checkpoint(std::ostream& out, const ParamStore<T>& params);

// Values stored in either precision are converted to T.
template <typename T>
ParamStore<T> read_checkpoint(std::istream& in);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& params);

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace expertfind
