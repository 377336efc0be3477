#pragma once

#include <cstdint>

namespace dc {

using TokenId = std::int32_t;

// Reserved ids shared by every vocabulary and model.
namespace token {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId unk = 3;
inline constexpr TokenId reserved_count = 4;

constexpr bool is_reserved(TokenId id) { return id >= 0 && id < reserved_count; }
} // namespace token

} // namespace dc
