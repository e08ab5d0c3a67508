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


// Binary checkpoint container.
//
// Layout (all integers little-endian):
//   magic "ASYMFCKP" | u32 version | u64 config_size | config bytes (JSON)
//   u64 n_tensors | n_tensors x (u32 path_size | path | u32 rank |
//                                rank x u64 dim | product(dims) x f64)
// Doubles are written as their IEEE-754 bit patterns, so the same model
// produces the same bytes on every little- or big-endian host.

#ifndef ASYMFUSE_CHECKPOINT_H_
#define ASYMFUSE_CHECKPOINT_H_

#include <string>
#include <vector>

#include "asymfuse/tensor.h"

namespace asymfuse {

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'Y', 'M',
                                             'F', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config;
  std::vector<NamedTensor> tensors;

  // Throws SchemaError when `path` is absent.
  const Tensor& Get(const std::string& path) const;
};

std::string SerializeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

// Throw std::runtime_error naming the path on I/O failure and SchemaError on
// a malformed file.
void SaveCheckpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::string& path);

// Copies checkpoint values into `params` by path. Every parameter must be
// present with the same shape.
void LoadParameters(const Checkpoint& checkpoint,
                    const std::vector<NamedTensor>& params);

}  // namespace asymfuse

#endif  // ASYMFUSE_CHECKPOINT_H_
