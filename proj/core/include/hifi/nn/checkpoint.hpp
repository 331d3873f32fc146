#pragma once

#include <map>

#include "hifi/common.hpp"
#include "hifi/nn/tensor.hpp"

namespace hifi::nn {

/// Flat named-tensor container: per tensor, u32 name length, name bytes,
/// u32 rank, u32 dims, then a 32-bit float payload. All little-endian.
template <typename T>
void save_tensors(const std::string& path, const std::vector<Tensor<T>>& tensors) {
  std::vector<std::uint8_t> out;
  for (const auto& t : tensors) {
    if (t.name().empty()) throw IoError("save_tensors: unnamed tensor");
    write_u32le(out, static_cast<std::uint32_t>(t.name().size()));
    out.insert(out.end(), t.name().begin(), t.name().end());
    write_u32le(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) write_u32le(out, static_cast<std::uint32_t>(d));
    for (T v : t.values()) write_f32le(out, static_cast<float>(v));
  }
  write_file_bytes(path, out);
}

template <typename T>
std::map<std::string, Tensor<T>> load_tensors(const std::string& path) {
  auto bytes = read_file_bytes(path);
  std::map<std::string, Tensor<T>> out;
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("checkpoint truncated: " + path);
  };
  while (pos < bytes.size()) {
    need(4);
    std::uint32_t name_len = read_u32le(bytes.data() + pos);
    pos += 4;
    need(name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    need(4);
    std::uint32_t rank = read_u32le(bytes.data() + pos);
    pos += 4;
    std::vector<int> shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      need(4);
      shape[i] = static_cast<int>(read_u32le(bytes.data() + pos));
      pos += 4;
      count *= static_cast<std::size_t>(shape[i]);
    }
    need(count * 4);
    std::vector<T> data(count);
    for (std::size_t i = 0; i < count; ++i) {
      data[i] = static_cast<T>(read_f32le(bytes.data() + pos));
      pos += 4;
    }
    auto t = Tensor<T>::from(std::move(shape), std::move(data));
    t.set_name(name);
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace hifi::nn
