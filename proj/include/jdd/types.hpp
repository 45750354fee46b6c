#pragma once

#include <cstdint>
#include <vector>

namespace jdd {

using Vec = std::vector<double>;
using TokenId = std::int32_t;

// Noise level of a token: an index into a TimestepGrid (0 = noisiest), or
// kClean once the token is noise-free.
using Level = std::int32_t;
inline constexpr Level kClean = -1;

}  // namespace jdd
