#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace jdd::kernels {

// Which keys each query row may attend to. Keys are the `cache_len` cached
// rows followed by the new rows of the current call; local key indices are
// relative to the new rows and stored ascending (CSR).
struct AttentionLayout {
  std::size_t cache_len = 0;
  std::vector<std::uint8_t> sees_cache;
  std::vector<std::uint32_t> key_offsets{0};
  std::vector<std::uint32_t> keys;

  std::size_t rows() const { return sees_cache.size(); }

  void add_row(bool cache_visible, const std::vector<std::uint32_t>& local_keys) {
    sees_cache.push_back(cache_visible ? 1 : 0);
    keys.insert(keys.end(), local_keys.begin(), local_keys.end());
    key_offsets.push_back(static_cast<std::uint32_t>(keys.size()));
  }

  std::size_t num_keys(std::size_t row) const {
    return (sees_cache[row] ? cache_len : 0) + key_offsets[row + 1] - key_offsets[row];
  }

  // Offsets into a per-head probability buffer, one segment per row.
  std::vector<std::size_t> prob_offsets() const {
    std::vector<std::size_t> out(rows() + 1, 0);
    for (std::size_t i = 0; i < rows(); ++i) out[i + 1] = out[i] + num_keys(i);
    return out;
  }

  bool allows(std::size_t row, std::size_t key_total_index) const {
    if (key_total_index < cache_len) return sees_cache[row] != 0;
    const auto local = static_cast<std::uint32_t>(key_total_index - cache_len);
    for (std::uint32_t j = key_offsets[row]; j < key_offsets[row + 1]; ++j) {
      if (keys[j] == local) return true;
    }
    return false;
  }
};

}  // namespace jdd::kernels
