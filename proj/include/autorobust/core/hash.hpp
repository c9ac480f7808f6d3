#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace autorobust {

// 64-bit FNV-1a, incrementally updatable. Used for model/dataset fingerprints.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <class T>
  void update_span(std::span<const T> s) {
    update(s.data(), s.size_bytes());
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string sha1_hex(std::string_view data);
// Hash of a blob the way git names objects: sha1("blob <len>\0<content>").
std::string git_blob_hash(std::string_view content);
std::string hex64(std::uint64_t v);

}  // namespace autorobust
