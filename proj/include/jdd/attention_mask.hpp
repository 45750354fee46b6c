#pragma once

#include <cstddef>
#include <vector>

#include "jdd/kernels/layout.hpp"

namespace jdd {

enum class RowRole { kPrefix, kSlot, kTimestep };

struct RowInfo {
  RowRole role = RowRole::kPrefix;
  std::size_t index = 0;  // prefix index, or slot index for slot/timestep rows
};

// Physical row order is [prefix..., slot0, ts0?, slot1, ts1?, ...]: every
// timestep row follows the window slot it describes. Main rows (prefix and
// slots) attend causally among themselves; a slot also sees its own
// timestep row; a timestep row sees only itself.
struct AttentionMask {
  std::size_t prefix_len = 0;
  std::vector<bool> slot_has_timestep;
  std::vector<RowInfo> rows;
  std::vector<std::size_t> prefix_rows;
  std::vector<std::size_t> slot_rows;
  std::vector<std::ptrdiff_t> timestep_rows;  // -1 for slots without one
  kernels::AttentionLayout layout;

  std::size_t size() const { return rows.size(); }
  bool allows(std::size_t row, std::size_t col) const { return layout.allows(row, col); }
  // Physical rows that produce logits: prefix rows then slot rows.
  std::vector<std::size_t> main_rows() const;
};

// num_timestep_slots must be 0 (clean window) or num_slots.
AttentionMask build_attention_mask(std::size_t prefix_len, std::size_t num_slots,
                                   std::size_t num_timestep_slots);
// Per-slot variant: slots flagged false carry no timestep row.
AttentionMask build_attention_mask(std::size_t prefix_len,
                                   const std::vector<bool>& slot_has_timestep);

}  // namespace jdd
