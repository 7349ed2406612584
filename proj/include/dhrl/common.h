/*
 * Copyright 2026 The DHRL Authors.
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

#ifndef DHRL_COMMON_H_
#define DHRL_COMMON_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dhrl {

// Error categories. The service maps these onto HTTP status codes and the
// CLI onto exit statuses.
enum class ErrorCode {
  kInvalidArgument,     // malformed input, violated precondition
  kFailedPrecondition,  // valid input, wrong state (untrained model, stage tag)
  kNotFound,
  kNumerical,           // non-finite loss or degenerate statistics
  kIo,
  kInternal,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

inline void Require(bool condition, const std::string& message) {
  if (!condition) Fail(ErrorCode::kInvalidArgument, message);
}

// SplitMix64 finalizer. Used to derive independent, counter-based seeds
// (seed, stream, index) so that parallel work stays bit-reproducible.
constexpr uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t DeriveSeed(uint64_t seed, uint64_t stream,
                              uint64_t index = 0) {
  return Mix64(Mix64(Mix64(seed) ^ stream) ^ index);
}

// Hex SHA-256 of a byte string / file.
std::string Sha256Hex(std::string_view bytes);
std::string Sha256File(const std::filesystem::path& path);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

// Minimal CSV support for the flat tables this project exchanges (no quoting
// of separators inside fields).
std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& path);

}  // namespace dhrl

#endif  // DHRL_COMMON_H_
