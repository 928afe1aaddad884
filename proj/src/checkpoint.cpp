// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/checkpoint.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace expertfind {
namespace {

constexpr std::array<char, 8> kMagic = {'E', 'X', 'F', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::ostream& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) {
    throw DataError("checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

}  // namespace

template <typename T>
void write_checkpoint(std::ostream& out, const ParamStore<T>& params) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, sizeof(T));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t extent : e.shape) put<std::uint64_t>(out, extent);
    for (T v : e.values) put<T>(out, v);
  }
  if (!out) throw Error("failed writing checkpoint");
}

template <typename T>
ParamStore<T> read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  ParamStore<T> params;
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto name_len = get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("checkpoint truncated");
    const auto width = get<std::uint32_t>(in);
    const auto rank = get<std::uint32_t>(in);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get<std::uint64_t>(in));
    std::vector<T> values(shape_numel(shape));
    for (T& v : values) {
      if (width == 4) {
        v = static_cast<T>(get<float>(in));
      } else if (width == 8) {
        v = static_cast<T>(get<double>(in));
      } else {
        throw DataError("checkpoint record " + name + " has unsupported value width " +
                        std::to_string(width));
      }
    }
    params.add(std::move(name), std::move(shape), std::move(values));
  }
  return params;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in);
}

template void write_checkpoint(std::ostream&, const ParamStore<float>&);
template void write_checkpoint(std::ostream&, const ParamStore<double>&);
template ParamStore<float> read_checkpoint<float>(std::istream&);
template ParamStore<double> read_checkpoint<double>(std::istream&);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<float>&);
template void save_checkpoint(const std::filesystem::path&, const ParamStore<double>&);
template ParamStore<float> load_checkpoint<float>(const std::filesystem::path&);
template ParamStore<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace expertfind
