#pragma once

#include <cstdint>
#include <vector>

#include "splitzip/format.hpp"

namespace splitzip {

/// Flat sequence of element words. FP8 words occupy the low byte of each
/// 16-bit slot; the high byte is always zero.
struct RawTensorStream {
  ElementFormat fmt = ElementFormat::BF16;
  std::vector<std::uint16_t> words;

  std::size_t size() const noexcept { return words.size(); }
  bool empty() const noexcept { return words.empty(); }
  std::uint64_t raw_bytes() const noexcept { return words.size() * info(fmt).word_bytes(); }

  friend bool operator==(const RawTensorStream&, const RawTensorStream&) = default;
};

}  // namespace splitzip
