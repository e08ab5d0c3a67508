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

#ifndef ASYMFUSE_ERRORS_H_
#define ASYMFUSE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace asymfuse {

// Incompatible tensor shapes. The message carries both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inputs for which an operation is undefined (e.g. zero-norm vectors in a
// cosine similarity).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Violated caller contract (non-scalar loss, mismatched optimizer state...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Record or file does not match the expected tabular schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unparseable or out-of-range value.
class ValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StratificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf produced during training. `component` names the first stage of the
// pipeline whose output was non-finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string component, const std::string& what)
      : std::runtime_error(what), component_(std::move(component)) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

}  // namespace asymfuse

#endif  // ASYMFUSE_ERRORS_H_
