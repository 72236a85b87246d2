#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"

// Named-array binary container used for weights, optimizer moments and
// replay buffers. Layout (little-endian):
//   "E2MB" | u32 version=1 | u32 scalar_bytes | u32 n_arrays
//   n_arrays x { u32 name_len | name | u32 ndims | i32 dims[ndims] | u64 count | scalars }

namespace echo2mri::models {

template <typename T>
struct NamedArray {
  std::string name;
  std::vector<int> dims;
  std::vector<T> values;
};

namespace detail {

template <typename V>
void put(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) {
    throw Error("truncated blob " + path);
  }
  return v;
}

}  // namespace detail

template <typename T>
void write_blob(const std::filesystem::path& path, const std::vector<NamedArray<T>>& arrays) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write("E2MB", 4);
    detail::put<std::uint32_t>(out, 1);
    detail::put<std::uint32_t>(out, sizeof(T));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
      out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
      for (int d : a.dims) detail::put<std::int32_t>(out, d);
      detail::put<std::uint64_t>(out, a.values.size());
      out.write(reinterpret_cast<const char*>(a.values.data()),
                static_cast<std::streamsize>(a.values.size() * sizeof(T)));
    }
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
std::vector<NamedArray<T>> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "E2MB", 4) != 0) {
    throw Error("not a weight blob: " + path.string());
  }
  const auto p = path.string();
  if (detail::get<std::uint32_t>(in, p) != 1) throw Error("unsupported blob version in " + p);
  const auto scalar = detail::get<std::uint32_t>(in, p);
  if (scalar != 4 && scalar != 8) throw Error("unsupported scalar width in " + p);
  const auto n = detail::get<std::uint32_t>(in, p);
  std::vector<NamedArray<T>> out(n);
  for (auto& a : out) {
    const auto len = detail::get<std::uint32_t>(in, p);
    a.name.resize(len);
    in.read(a.name.data(), len);
    const auto nd = detail::get<std::uint32_t>(in, p);
    for (std::uint32_t i = 0; i < nd; ++i) a.dims.push_back(detail::get<std::int32_t>(in, p));
    const auto count = detail::get<std::uint64_t>(in, p);
    a.values.resize(count);
    if (scalar == sizeof(T)) {
      in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(count * sizeof(T)));
    } else if (scalar == 4) {
      std::vector<float> tmp(count);
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * 4));
      for (std::size_t i = 0; i < count; ++i) a.values[i] = static_cast<T>(tmp[i]);
    } else {
      std::vector<double> tmp(count);
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * 8));
      for (std::size_t i = 0; i < count; ++i) a.values[i] = static_cast<T>(tmp[i]);
    }
    if (!in) throw Error("truncated blob " + p);
  }
  return out;
}

}  // namespace echo2mri::models
