/*
 * Copyright 2026 The asymfuse Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "asymfuse/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>

#include "asymfuse/errors.h"

namespace asymfuse {
namespace {

template <typename T>
void PutLe(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Le() {
    Need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw SchemaError("checkpoint: truncated at byte " + std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::Get(const std::string& path) const {
  for (const auto& t : tensors) {
    if (t.path == path) return t.tensor;
  }
  throw SchemaError("checkpoint: no tensor \"" + path + "\"");
}

std::string SerializeCheckpoint(const Checkpoint& checkpoint) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  PutLe<std::uint32_t>(out, kCheckpointVersion);
  PutLe<std::uint64_t>(out, checkpoint.config.size());
  out += checkpoint.config;
  PutLe<std::uint64_t>(out, checkpoint.tensors.size());
  for (const auto& t : checkpoint.tensors) {
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(t.path.size()));
    out += t.path;
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) PutLe<std::uint64_t>(out, d);
    for (double v : t.tensor.values()) {
      PutLe<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw SchemaError("checkpoint: bad magic");
  }
  in.Bytes(sizeof(kCheckpointMagic));
  const auto version = in.Le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config = in.Bytes(in.Le<std::uint64_t>());
  const auto n = in.Le<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.path = in.Bytes(in.Le<std::uint32_t>());
    const auto rank = in.Le<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(in.Le<std::uint64_t>()));
    }
    std::vector<double> values(NumElements(shape));
    for (double& v : values) v = std::bit_cast<double>(in.Le<std::uint64_t>());
    t.tensor = Tensor(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw SchemaError("checkpoint: trailing bytes");
  return ck;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open \"" + path + "\" for writing");
  const std::string bytes = SerializeCheckpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to \"" + path + "\" failed");
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open \"" + path + "\" for reading");
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return DeserializeCheckpoint(bytes);
}

void LoadParameters(const Checkpoint& checkpoint,
                    const std::vector<NamedTensor>& params) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& t : checkpoint.tensors) stored[t.path] = &t.tensor;
  for (const auto& p : params) {
    auto it = stored.find(p.path);
    if (it == stored.end()) {
      throw SchemaError("checkpoint: missing parameter \"" + p.path + "\"");
    }
    if (it->second->shape() != p.tensor.shape()) {
      throw SchemaError("checkpoint: parameter \"" + p.path + "\" has shape " +
                        ShapeToString(it->second->shape()) + ", model expects " +
                        ShapeToString(p.tensor.shape()));
    }
    Tensor handle = p.tensor;
    std::copy(it->second->values().begin(), it->second->values().end(),
              handle.mutable_values().begin());
  }
}

}  // namespace asymfuse
