#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "structvec/tensor.hpp"

namespace structvec {

// SSRL1 container: 5-byte magic "SSRL1", u32 little-endian header length,
// UTF-8 JSON header {"meta": ..., "tensors": [{name, shape, dtype, offset}]},
// then the raw little-endian payload (f32 or f64 per tensor). Offsets are
// relative to the payload start. Round trips are bit-exact.
inline constexpr char kCheckpointMagic[5] = {'S', 'S', 'R', 'L', '1'};

static_assert(std::endian::native == std::endian::little,
              "SSRL1 writer assumes a little-endian host");

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what)
      : std::runtime_error("checkpoint: " + what) {}
};

template <typename T>
struct NamedTensor {
  std::string name;
  const Tensor<T>* tensor;
};

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (sizeof(T) == 4) {
    return "f32";
  } else {
    return "f64";
  }
}

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor<T>>& tensors,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    nlohmann::json t;
    t["name"] = nt.name;
    t["shape"] = nt.tensor->shape;
    t["dtype"] = dtype_name<T>();
    t["offset"] = offset;
    header["tensors"].push_back(std::move(t));
    offset += nt.tensor->numel() * sizeof(T);
  }
  const std::string htext = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 5);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& nt : tensors) {
    out.write(reinterpret_cast<const char*>(nt.tensor->data.data()),
              static_cast<std::streamsize>(nt.tensor->numel() * sizeof(T)));
  }
  if (!out) throw CheckpointError("write failed for " + path);
}

template <typename T>
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor<T>>> tensors;

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
    throw CheckpointError("bad magic in " + path);
  }
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw CheckpointError("truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(htext);

  std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
  Checkpoint<T> ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const Shape shape = t.at("shape").get<Shape>();
    const std::string dtype = t.at("dtype").get<std::string>();
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    const std::size_t n = Tensor<T>::numel_of(shape);
    const std::size_t esize = dtype == "f64" ? 8 : 4;
    if (offset + n * esize > payload.size()) {
      throw CheckpointError("tensor " + name + " exceeds payload in " + path);
    }
    Tensor<T> tensor = Tensor<T>::zeros(shape);
    const char* src = payload.data() + offset;
    if (dtype == dtype_name<T>()) {
      std::memcpy(tensor.data.data(), src, n * sizeof(T));
    } else if (dtype == "f32") {
      for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, src + i * 4, 4);
        tensor.data[i] = static_cast<T>(v);
      }
    } else if (dtype == "f64") {
      for (std::size_t i = 0; i < n; ++i) {
        double v;
        std::memcpy(&v, src + i * 8, 8);
        tensor.data[i] = static_cast<T>(v);
      }
    } else {
      throw CheckpointError("unknown dtype " + dtype + " in " + path);
    }
    ck.tensors.emplace_back(name, std::move(tensor));
  }
  return ck;
}

// Copies checkpointed tensors into same-named parameters; shapes must match.
template <typename T>
void restore_params(const Checkpoint<T>& ck, std::vector<Param<T>*> params) {
  for (auto* p : params) {
    const Tensor<T>* t = ck.find(p->name);
    if (!t) throw CheckpointError("missing tensor " + p->name);
    if (t->shape != p->value.shape) {
      throw CheckpointError("shape mismatch for " + p->name + ": file has " +
                            shape_str(t->shape) + ", expected " +
                            shape_str(p->value.shape));
    }
    p->value = *t;
  }
}

}  // namespace structvec
