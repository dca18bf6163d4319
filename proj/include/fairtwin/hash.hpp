// Copyright 2026 The FairTwin Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace fairtwin {

// 64-bit FNV-1a. Used to tie artifacts together (pool → dataset,
// latent map → model), not for security.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void str(std::string_view s) { bytes(s.data(), s.size()); }
  void real(double v) { bytes(&v, sizeof v); }
  void vec(const Eigen::VectorXd& v) { bytes(v.data(), sizeof(double) * v.size()); }
  void mat(const Eigen::MatrixXd& m) {
    const Eigen::Index dims[2] = {m.rows(), m.cols()};
    bytes(dims, sizeof dims);
    bytes(m.data(), sizeof(double) * m.size());
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string Fnv1a::hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  std::uint64_t v = h_;
  for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
  return out;
}

}  // namespace fairtwin
