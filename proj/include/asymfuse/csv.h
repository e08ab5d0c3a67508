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

// Minimal comma-separated helpers. Numbers are parsed and printed
// independently of the C locale.

#ifndef ASYMFUSE_CSV_H_
#define ASYMFUSE_CSV_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace asymfuse {

// Splits one line on commas. Double-quoted fields may contain commas and
// doubled quotes. A trailing '\r' is dropped.
std::vector<std::string> SplitCsvLine(std::string_view line);

std::optional<double> ParseDouble(std::string_view text);
std::optional<long long> ParseInt(std::string_view text);

// Shortest round-trip safe representation ("%.17g").
std::string FormatDouble(double value);

// Reads every line of a file. Throws std::runtime_error naming the path when
// it cannot be opened.
std::vector<std::string> ReadLines(const std::string& path);

// Writes `content` to `path`. Throws std::runtime_error naming the path.
void WriteFile(const std::string& path, const std::string& content);

}  // namespace asymfuse

#endif  // ASYMFUSE_CSV_H_
