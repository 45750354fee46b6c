#include "jdd/attention_mask.hpp"

#include <string>

#include "jdd/error.hpp"

namespace jdd {

std::vector<std::size_t> AttentionMask::main_rows() const {
  std::vector<std::size_t> out = prefix_rows;
  out.insert(out.end(), slot_rows.begin(), slot_rows.end());
  return out;
}

AttentionMask build_attention_mask(std::size_t prefix_len, std::size_t num_slots,
                                   std::size_t num_timestep_slots) {
  if (num_timestep_slots != 0 && num_timestep_slots != num_slots) {
    throw ContractViolation("build_attention_mask: " + std::to_string(num_timestep_slots) +
                            " timestep slots for " + std::to_string(num_slots) +
                            " window slots (expected 0 or one per slot)");
  }
  return build_attention_mask(prefix_len, std::vector<bool>(num_slots, num_timestep_slots != 0));
}

AttentionMask build_attention_mask(std::size_t prefix_len,
                                   const std::vector<bool>& slot_has_timestep) {
  AttentionMask m;
  m.prefix_len = prefix_len;
  m.slot_has_timestep = slot_has_timestep;
  std::vector<std::uint32_t> main_so_far;
  for (std::size_t i = 0; i < prefix_len; ++i) {
    const auto row = static_cast<std::uint32_t>(m.rows.size());
    m.rows.push_back({RowRole::kPrefix, i});
    m.prefix_rows.push_back(row);
    main_so_far.push_back(row);
    m.layout.add_row(true, main_so_far);
  }
  for (std::size_t s = 0; s < slot_has_timestep.size(); ++s) {
    const auto row = static_cast<std::uint32_t>(m.rows.size());
    m.rows.push_back({RowRole::kSlot, s});
    m.slot_rows.push_back(row);
    main_so_far.push_back(row);
    std::vector<std::uint32_t> keys = main_so_far;
    if (slot_has_timestep[s]) {
      keys.push_back(row + 1);
      m.layout.add_row(true, keys);
      m.rows.push_back({RowRole::kTimestep, s});
      m.timestep_rows.push_back(row + 1);
      m.layout.add_row(false, {row + 1});
    } else {
      m.layout.add_row(true, keys);
      m.timestep_rows.push_back(-1);
    }
  }
  return m;
}

}  // namespace jdd
