#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitzip/bitpack.hpp"
#include "splitzip/calibration.hpp"
#include "splitzip/error.hpp"
#include "splitzip/format.hpp"
#include "splitzip/parallel.hpp"
#include "splitzip/tensor.hpp"

namespace splitzip {

enum class PositionMode : std::uint8_t { ChunkRelative = 0, Absolute32 = 1 };

constexpr std::string_view name(PositionMode mode) noexcept {
  return mode == PositionMode::ChunkRelative ? "chunk" : "abs32";
}

inline constexpr std::uint32_t kDefaultChunkSize = 1024;
inline constexpr std::uint32_t kMaxRelativeChunk = 65536;
inline constexpr std::uint8_t kDummyCode = 0;

/// Everything that determines the shape of the encoded streams.
struct StreamLayout {
  ElementFormat fmt = ElementFormat::BF16;
  unsigned code_bits = 4;
  CodebookMode mode = CodebookMode::TopKExplicit;
  std::uint32_t chunk_size = kDefaultChunkSize;
  PositionMode position_mode = PositionMode::ChunkRelative;

  bool explicit_positions() const noexcept { return mode == CodebookMode::TopKExplicit; }
  bool has_chunk_counts() const noexcept {
    return explicit_positions() && position_mode == PositionMode::ChunkRelative;
  }

  /// Bytes per stored escape position: 0 (sentinel), 1 (chunk <= 256), 2, or 4 (abs32).
  unsigned position_bytes() const noexcept {
    if (!explicit_positions()) return 0;
    if (position_mode == PositionMode::Absolute32) return 4;
    return chunk_size <= 256 ? 1 : 2;
  }

  std::uint64_t chunk_count(std::uint64_t n) const noexcept {
    return has_chunk_counts() ? (n + chunk_size - 1) / chunk_size : 0;
  }

  void validate() const {
    if (code_bits != 3 && code_bits != 4) fail(ErrorKind::Config, "code width must be 3 or 4 bits");
    if (chunk_size < 1) fail(ErrorKind::Config, "chunk size must be at least 1");
    if (has_chunk_counts() && chunk_size > kMaxRelativeChunk) {
      fail(ErrorKind::Config, "chunk-relative positions need chunk size <= 65536");
    }
  }

  friend bool operator==(const StreamLayout&, const StreamLayout&) = default;
};

struct CodecConfig {
  ElementFormat fmt = ElementFormat::BF16;
  unsigned code_bits = 4;
  CodebookMode mode = CodebookMode::TopKExplicit;
  std::uint32_t chunk_size = kDefaultChunkSize;
  PositionMode position_mode = PositionMode::ChunkRelative;
  /// Precalibrated codebook; when empty the encoder calibrates on its input.
  std::optional<ExponentCodebook> codebook;
  /// Worker threads; 0 defers to SPLITZIP_THREADS / hardware concurrency.
  unsigned threads = 0;

  StreamLayout layout() const { return {fmt, code_bits, mode, chunk_size, position_mode}; }
  bool dynamic() const noexcept { return !codebook.has_value(); }
};

struct EscapeChunk {
  std::uint32_t count = 0;
  std::span<const std::uint32_t> positions;
  std::span<const std::uint8_t> values;
};

/// Dense code stream, sign-mantissa stream and escape streams of one tensor.
/// Escape values are held one per byte in memory and bit-packed on the wire.
struct EncodedStreams {
  StreamLayout layout;
  ExponentCodebook codebook;
  std::uint64_t n_elements = 0;
  std::uint64_t n_escapes = 0;
  std::vector<std::uint8_t> packed_codes;
  std::vector<std::uint8_t> sign_mantissa;
  std::vector<std::uint32_t> chunk_counts;
  std::vector<std::uint32_t> escape_positions;
  std::vector<std::uint8_t> escape_values;

  double escape_rate() const noexcept {
    return n_elements == 0 ? 0.0 : static_cast<double>(n_escapes) / static_cast<double>(n_elements);
  }

  /// Per-chunk views of the escape streams (chunk-relative explicit layout only).
  std::vector<EscapeChunk> escape_chunks() const {
    std::vector<EscapeChunk> out;
    out.reserve(chunk_counts.size());
    std::size_t offset = 0;
    for (auto c : chunk_counts) {
      if (offset + c > escape_positions.size()) break;
      out.push_back({c, std::span(escape_positions).subspan(offset, c),
                     std::span(escape_values).subspan(offset, c)});
      offset += c;
    }
    return out;
  }

  friend bool operator==(const EncodedStreams&, const EncodedStreams&) = default;
};

/// Exact payload size in bytes (container header and codebook excluded).
inline std::uint64_t compressed_payload_bytes(std::uint64_t n, std::uint64_t m, const StreamLayout& layout) {
  const FormatInfo f = info(layout.fmt);
  std::uint64_t bytes = packed_size(n, layout.code_bits) + packed_size(n, f.sm_bits);
  bytes += 4 * layout.chunk_count(n);
  bytes += m * layout.position_bytes();
  bytes += packed_size(m, f.exp_bits);
  return bytes;
}

inline double compression_ratio(std::uint64_t n, std::uint64_t m, const StreamLayout& layout) {
  if (n == 0) fail(ErrorKind::Domain, "ratio of an empty stream");
  if (m > n) fail(ErrorKind::Domain, "more escapes than elements");
  const double raw = static_cast<double>(n) * info(layout.fmt).word_bytes();
  return raw / static_cast<double>(compressed_payload_bytes(n, m, layout));
}

/// Closed-form ratio at escape rate eps, ignoring chunk-count metadata and
/// byte rounding: word_bits / (code_bits + sm_bits + eps * escape_bits).
inline double formula_ratio(double eps, const StreamLayout& layout) {
  if (eps < 0.0 || eps > 1.0) fail(ErrorKind::Domain, "escape rate must lie in [0, 1]");
  const FormatInfo f = info(layout.fmt);
  const double escape_bits = 8.0 * layout.position_bytes() + f.exp_bits;
  return f.word_bits / (layout.code_bits + f.sm_bits + eps * escape_bits);
}

namespace detail {

/// Accumulating writer of fixed-width symbols into a byte region that starts
/// on a byte boundary.
class BitWriter {
 public:
  BitWriter(std::uint8_t* out, unsigned width) : out_(out), width_(width) {}

  void put(std::uint32_t symbol) {
    acc_ |= symbol << filled_;
    filled_ += width_;
    while (filled_ >= 8) {
      *out_++ = static_cast<std::uint8_t>(acc_);
      acc_ >>= 8;
      filled_ -= 8;
    }
  }

  void flush() {
    if (filled_ > 0) *out_++ = static_cast<std::uint8_t>(acc_);
    acc_ = 0;
    filled_ = 0;
  }

 private:
  std::uint8_t* out_;
  unsigned width_;
  std::uint32_t acc_ = 0;
  unsigned filled_ = 0;
};

class BitReader {
 public:
  BitReader(const std::uint8_t* in, unsigned width) : in_(in), width_(width), mask_((1u << width) - 1) {}

  std::uint8_t get() {
    while (avail_ < width_) {
      acc_ |= static_cast<std::uint32_t>(*in_++) << avail_;
      avail_ += 8;
    }
    const auto v = static_cast<std::uint8_t>(acc_ & mask_);
    acc_ >>= width_;
    avail_ -= width_;
    return v;
  }

 private:
  const std::uint8_t* in_;
  unsigned width_;
  std::uint32_t mask_;
  std::uint32_t acc_ = 0;
  unsigned avail_ = 0;
};

inline std::uint8_t symbol_at(std::span<const std::uint8_t> bytes, std::uint64_t index, unsigned width) {
  const std::uint64_t bit = index * width;
  std::uint32_t window = bytes[bit / 8];
  if (bit / 8 + 1 < bytes.size()) window |= static_cast<std::uint32_t>(bytes[bit / 8 + 1]) << 8;
  return static_cast<std::uint8_t>((window >> (bit % 8)) & ((1u << width) - 1));
}

inline constexpr std::size_t kEscapeSegment = 8192;

/// Escape collection works over segments: the chunks themselves in the
/// chunk-relative layout, fixed-size blocks otherwise.
inline std::size_t segment_size(const StreamLayout& layout) {
  return layout.has_chunk_counts() ? layout.chunk_size : kEscapeSegment;
}

inline std::size_t dense_alignment(const StreamLayout& layout) {
  return std::lcm<std::size_t>(8, segment_size(layout));
}

inline std::uint8_t escape_code(const ExponentCodebook& cb) {
  return cb.mode() == CodebookMode::Top15Sentinel ? cb.sentinel() : kDummyCode;
}

inline void check_encode_inputs(const RawTensorStream& stream, const CodecConfig& config) {
  if (stream.empty()) fail(ErrorKind::EmptyInput, "cannot encode an empty stream");
  if (stream.fmt != config.fmt) {
    fail(ErrorKind::Config, "stream format " + std::string(name(stream.fmt)) +
                                " does not match codec format " + std::string(name(config.fmt)));
  }
  config.layout().validate();
  if (info(stream.fmt).word_bits < 16) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
      if (stream.words[i] > 0xFF) {
        fail(ErrorKind::RejectedInput, "element " + std::to_string(i) + " does not fit in 8 bits");
      }
    }
  }
  if (config.position_mode == PositionMode::Absolute32 && stream.size() > (std::uint64_t{1} << 32)) {
    fail(ErrorKind::Config, "absolute 32-bit positions cap streams at 2^32 elements");
  }
  if (config.codebook) {
    const auto& cb = *config.codebook;
    if (cb.fmt() != config.fmt) fail(ErrorKind::Config, "codebook format does not match codec format");
    if (cb.code_bits() != config.code_bits) fail(ErrorKind::Config, "codebook code width does not match");
    if (cb.mode() != config.mode) fail(ErrorKind::Config, "codebook mode does not match");
  }
}

inline ExponentCodebook resolve_codebook(const RawTensorStream& stream, const CodecConfig& config) {
  if (config.codebook) return *config.codebook;
  return select_codebook(build_histogram(stream), config.code_bits, config.mode);
}

inline EncodedStreams allocate_streams(const RawTensorStream& stream, const CodecConfig& config,
                                       ExponentCodebook cb) {
  EncodedStreams out;
  out.layout = config.layout();
  out.codebook = std::move(cb);
  out.n_elements = stream.size();
  out.packed_codes.assign(packed_size(stream.size(), config.code_bits), 0);
  out.sign_mantissa.assign(packed_size(stream.size(), info(config.fmt).sm_bits), 0);
  return out;
}

/// Stage one, element at a time: exponent -> code, sign-mantissa copied exactly.
inline void dense_scalar(const RawTensorStream& stream, EncodedStreams& out, std::size_t begin,
                         std::size_t end) {
  const auto fmt = stream.fmt;
  const auto& cb = out.codebook;
  const unsigned code_bits = out.layout.code_bits;
  const unsigned sm_bits = info(fmt).sm_bits;
  const std::uint8_t esc = escape_code(cb);
  BitWriter codes(out.packed_codes.data() + begin * code_bits / 8, code_bits);
  BitWriter sm(out.sign_mantissa.data() + begin * sm_bits / 8, sm_bits);
  for (std::size_t i = begin; i < end; ++i) {
    const SplitFields f = split_fields(stream.words[i], fmt);
    const std::uint8_t code = cb.encode(f.exponent);
    codes.put(code == ExponentCodebook::kEscape ? esc : code);
    sm.put(f.sign_mantissa);
  }
  codes.flush();
  sm.flush();
}

inline void count_escapes(const RawTensorStream& stream, const ExponentCodebook& cb, std::size_t seg,
                          std::vector<std::uint32_t>& counts, unsigned threads) {
  for_each_range(counts.size(), 1, threads, [&](std::size_t sb, std::size_t se) {
    for (std::size_t s = sb; s < se; ++s) {
      const std::size_t begin = s * seg;
      const std::size_t end = std::min(stream.size(), begin + seg);
      std::uint32_t c = 0;
      for (std::size_t i = begin; i < end; ++i) {
        c += !cb.contains(split_fields(stream.words[i], stream.fmt).exponent);
      }
      counts[s] = c;
    }
  });
}

/// Stage two: compact escapes into position/value arrays in segment order,
/// then element order within a segment, independent of the thread count.
inline void collect_escapes(const RawTensorStream& stream, EncodedStreams& out,
                            const std::vector<std::uint32_t>& counts, unsigned threads) {
  const std::size_t seg = segment_size(out.layout);
  std::vector<std::uint64_t> offsets(counts.size() + 1, 0);
  for (std::size_t s = 0; s < counts.size(); ++s) offsets[s + 1] = offsets[s] + counts[s];
  const std::uint64_t m = offsets.back();
  out.n_escapes = m;
  out.escape_values.assign(m, 0);
  const bool positions = out.layout.explicit_positions();
  const bool relative = out.layout.position_mode == PositionMode::ChunkRelative;
  out.escape_positions.assign(positions ? m : 0, 0);
  if (out.layout.has_chunk_counts()) out.chunk_counts = counts;

  for_each_range(counts.size(), 1, threads, [&](std::size_t sb, std::size_t se) {
    for (std::size_t s = sb; s < se; ++s) {
      if (counts[s] == 0) continue;
      std::uint64_t w = offsets[s];
      const std::size_t begin = s * seg;
      const std::size_t end = std::min(stream.size(), begin + seg);
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint8_t e = split_fields(stream.words[i], stream.fmt).exponent;
        if (out.codebook.contains(e)) continue;
        if (positions) out.escape_positions[w] = static_cast<std::uint32_t>(relative ? i - begin : i);
        out.escape_values[w] = e;
        ++w;
      }
    }
  });
}

inline std::size_t segment_count(std::size_t n, const StreamLayout& layout) {
  const std::size_t seg = segment_size(layout);
  return (n + seg - 1) / seg;
}

/// Four BF16 words per 64-bit load; codes, sign-mantissa bytes and the
/// per-segment escape counts come out of one pass via a marked lookup table
/// (bit 7 set for exponents outside the codebook).
inline void dense_quad(const RawTensorStream& stream, EncodedStreams& out, const std::array<std::uint8_t, 256>& marked,
                       std::vector<std::uint32_t>& counts, std::size_t begin, std::size_t end) {
  const std::size_t seg = segment_size(out.layout);
  const std::uint16_t* words = stream.words.data();
  std::uint8_t* codes = out.packed_codes.data();
  std::uint8_t* sm = out.sign_mantissa.data();
  const bool seg_holds_quads = seg % 4 == 0;

  std::size_t i = begin;
  for (; i + 4 <= end; i += 4) {
    std::uint16_t lane[4];
    if constexpr (std::endian::native == std::endian::little) {
      std::uint64_t q;
      std::memcpy(&q, words + i, sizeof q);
      lane[0] = static_cast<std::uint16_t>(q);
      lane[1] = static_cast<std::uint16_t>(q >> 16);
      lane[2] = static_cast<std::uint16_t>(q >> 32);
      lane[3] = static_cast<std::uint16_t>(q >> 48);
    } else {
      for (int j = 0; j < 4; ++j) lane[j] = words[i + j];
    }
    std::uint8_t mk[4];
    std::uint32_t sm_word = 0;
    for (int j = 0; j < 4; ++j) {
      mk[j] = marked[(lane[j] >> 7) & 0xFF];
      sm_word |= static_cast<std::uint32_t>(((lane[j] >> 8) & 0x80) | (lane[j] & 0x7F)) << (8 * j);
    }
    codes[i / 2] = static_cast<std::uint8_t>((mk[0] & 0x0F) | ((mk[1] & 0x0F) << 4));
    codes[i / 2 + 1] = static_cast<std::uint8_t>((mk[2] & 0x0F) | ((mk[3] & 0x0F) << 4));
    for (int j = 0; j < 4; ++j) sm[i + j] = static_cast<std::uint8_t>(sm_word >> (8 * j));
    if (seg_holds_quads) {
      counts[i / seg] += (mk[0] >> 7) + (mk[1] >> 7) + (mk[2] >> 7) + (mk[3] >> 7);
    } else {
      for (int j = 0; j < 4; ++j) counts[(i + j) / seg] += mk[j] >> 7;
    }
  }
  for (; i < end; ++i) {
    const std::uint8_t mk = marked[(words[i] >> 7) & 0xFF];
    const std::uint8_t code = mk & 0x0F;
    if (i % 2 == 0) {
      codes[i / 2] = code;
    } else {
      codes[i / 2] |= static_cast<std::uint8_t>(code << 4);
    }
    sm[i] = static_cast<std::uint8_t>(((words[i] >> 8) & 0x80) | (words[i] & 0x7F));
    counts[i / seg] += mk >> 7;
  }
}

}  // namespace detail

/// Two-stage encode: dense code and sign-mantissa streams, then a separate
/// escape collection pass.
inline EncodedStreams encode(const RawTensorStream& stream, const CodecConfig& config) {
  detail::check_encode_inputs(stream, config);
  const unsigned threads = resolve_threads(config.threads);
  EncodedStreams out = detail::allocate_streams(stream, config, detail::resolve_codebook(stream, config));

  for_each_range(stream.size(), 8, threads, [&](std::size_t b, std::size_t e) {
    detail::dense_scalar(stream, out, b, e);
  });
  std::vector<std::uint32_t> counts(detail::segment_count(stream.size(), out.layout), 0);
  detail::count_escapes(stream, out.codebook, detail::segment_size(out.layout), counts, threads);
  detail::collect_escapes(stream, out, counts, threads);
  return out;
}

/// Fused four-wide encode for BF16 with 4-bit codes; byte-identical to
/// encode(). Other configurations take the scalar path.
inline EncodedStreams encode_quad(const RawTensorStream& stream, const CodecConfig& config) {
  if (config.fmt != ElementFormat::BF16 || config.code_bits != 4) return encode(stream, config);
  detail::check_encode_inputs(stream, config);
  const unsigned threads = resolve_threads(config.threads);
  EncodedStreams out = detail::allocate_streams(stream, config, detail::resolve_codebook(stream, config));

  std::array<std::uint8_t, 256> marked{};
  const std::uint8_t esc = detail::escape_code(out.codebook);
  for (unsigned e = 0; e < 256; ++e) {
    const std::uint8_t code = out.codebook.encode(static_cast<std::uint8_t>(e));
    marked[e] = code == ExponentCodebook::kEscape ? static_cast<std::uint8_t>(0x80 | esc) : code;
  }
  std::vector<std::uint32_t> counts(detail::segment_count(stream.size(), out.layout), 0);
  for_each_range(stream.size(), detail::dense_alignment(out.layout), threads,
                 [&](std::size_t b, std::size_t e) { detail::dense_quad(stream, out, marked, counts, b, e); });
  detail::collect_escapes(stream, out, counts, threads);
  return out;
}

namespace detail {

inline void check_stream_shapes(const EncodedStreams& s) {
  const StreamLayout& L = s.layout;
  L.validate();
  const auto& cb = s.codebook;
  if (cb.size() == 0) fail(ErrorKind::Corruption, "codebook is empty");
  if (cb.fmt() != L.fmt || cb.code_bits() != L.code_bits || cb.mode() != L.mode) {
    fail(ErrorKind::Corruption, "codebook does not match the stream layout");
  }
  const std::uint64_t n = s.n_elements;
  const std::uint64_t m = s.n_escapes;
  if (n == 0) fail(ErrorKind::EmptyInput, "stream declares zero elements");
  if (m > n) fail(ErrorKind::Corruption, "more escapes than elements");
  if (L.position_mode == PositionMode::Absolute32 && L.explicit_positions() && n > (std::uint64_t{1} << 32)) {
    fail(ErrorKind::Corruption, "absolute positions cannot address more than 2^32 elements");
  }
  const unsigned sm_bits = info(L.fmt).sm_bits;
  if (s.packed_codes.size() != packed_size(n, L.code_bits)) fail(ErrorKind::Corruption, "code stream length mismatch");
  if (s.sign_mantissa.size() != packed_size(n, sm_bits)) fail(ErrorKind::Corruption, "sign-mantissa stream length mismatch");
  if (s.chunk_counts.size() != L.chunk_count(n)) fail(ErrorKind::Corruption, "chunk count table length mismatch");
  if (s.escape_positions.size() != (L.explicit_positions() ? m : 0)) {
    fail(ErrorKind::Corruption, "escape position stream length mismatch");
  }
  if (s.escape_values.size() != m) fail(ErrorKind::Corruption, "escape value stream length mismatch");
  if (!padding_is_zero(s.packed_codes, n, L.code_bits)) fail(ErrorKind::Corruption, "nonzero padding in code stream");
  if (!padding_is_zero(s.sign_mantissa, n, sm_bits)) fail(ErrorKind::Corruption, "nonzero padding in sign-mantissa stream");
  if (L.has_chunk_counts()) {
    std::uint64_t total = 0;
    for (auto c : s.chunk_counts) total += c;
    if (total != m) fail(ErrorKind::Corruption, "chunk escape counts sum to " + std::to_string(total) +
                                                    ", header declares " + std::to_string(m));
  }
  const unsigned exp_values = info(L.fmt).exp_values();
  for (std::size_t j = 0; j < s.escape_values.size(); ++j) {
    const auto v = s.escape_values[j];
    if (v >= exp_values || cb.contains(v)) {
      fail(ErrorKind::Corruption, "escape value " + std::to_string(v) + " at escape " + std::to_string(j) +
                                      " is not a valid out-of-codebook exponent");
    }
  }
}

struct RangeFault {
  std::uint64_t index = 0;
  std::uint8_t code = 0;
};

}  // namespace detail

/// Dense lookup for every element, then sparse overwrite of escaped exponents.
inline RawTensorStream decode(const EncodedStreams& s, unsigned threads_requested = 0) {
  detail::check_stream_shapes(s);
  const StreamLayout& L = s.layout;
  const auto& cb = s.codebook;
  const std::size_t n = static_cast<std::size_t>(s.n_elements);
  const unsigned threads = resolve_threads(threads_requested);
  const unsigned sm_bits = info(L.fmt).sm_bits;
  const bool sentinel_mode = L.mode == CodebookMode::Top15Sentinel;
  const std::uint8_t sentinel = cb.sentinel();
  const auto k = static_cast<std::uint8_t>(cb.size());

  RawTensorStream out{L.fmt, std::vector<std::uint16_t>(n)};

  // Ranges are aligned to 8 elements so each starts on a byte boundary of
  // both packed streams. Faults and sentinel hits are recorded per range and
  // merged afterwards in range order.
  constexpr std::size_t kRange = std::size_t{1} << 16;
  const std::size_t n_ranges = (n + kRange - 1) / kRange;
  std::vector<std::optional<detail::RangeFault>> faults(n_ranges);
  std::vector<std::vector<std::uint32_t>> sentinel_hits(sentinel_mode ? n_ranges : 0);

  for_each_range(n_ranges, 1, threads, [&](std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      const std::size_t begin = r * kRange;
      const std::size_t end = std::min(n, begin + kRange);
      detail::BitReader codes(s.packed_codes.data() + begin * L.code_bits / 8, L.code_bits);
      detail::BitReader sm(s.sign_mantissa.data() + begin * sm_bits / 8, sm_bits);
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint8_t code = codes.get();
        const std::uint8_t a = sm.get();
        if (code >= k) {
          if (sentinel_mode && code == sentinel) {
            sentinel_hits[r].push_back(static_cast<std::uint32_t>(i - begin));
          } else if (!faults[r]) {
            faults[r] = detail::RangeFault{i, code};
          }
        }
        out.words[i] = reconstruct({cb.decode(code), a}, L.fmt);
      }
    }
  });
  for (const auto& f : faults) {
    if (f) fail(ErrorKind::Corruption, "code " + std::to_string(f->code) + " at element " +
                                           std::to_string(f->index) + " is outside the codebook");
  }

  auto overwrite = [&](std::uint64_t i, std::uint8_t value) {
    const SplitFields f = split_fields(out.words[i], L.fmt);
    out.words[i] = reconstruct({value, f.sign_mantissa}, L.fmt);
  };

  if (sentinel_mode) {
    std::uint64_t found = 0;
    for (const auto& hits : sentinel_hits) found += hits.size();
    if (found != s.n_escapes) {
      fail(ErrorKind::Corruption, "found " + std::to_string(found) + " sentinel codes, header declares " +
                                      std::to_string(s.n_escapes) + " escapes");
    }
    std::size_t j = 0;
    for (std::size_t r = 0; r < sentinel_hits.size(); ++r) {
      for (auto rel : sentinel_hits[r]) overwrite(r * kRange + rel, s.escape_values[j++]);
    }
    return out;
  }

  auto check_dummy = [&](std::uint64_t i, const std::string& where) {
    const std::uint8_t code = detail::symbol_at(s.packed_codes, i, L.code_bits);
    if (code != kDummyCode) {
      fail(ErrorKind::Corruption, where + ": escaped element " + std::to_string(i) + " carries code " +
                                      std::to_string(code) + " instead of the dummy code");
    }
  };

  if (L.position_mode == PositionMode::Absolute32) {
    std::uint64_t prev = 0;
    for (std::size_t j = 0; j < s.escape_positions.size(); ++j) {
      const std::uint64_t pos = s.escape_positions[j];
      if (pos >= n || (j > 0 && pos <= prev)) {
        fail(ErrorKind::Corruption, "escape " + std::to_string(j) + " has invalid absolute position " +
                                        std::to_string(pos));
      }
      check_dummy(pos, "escape " + std::to_string(j));
      overwrite(pos, s.escape_values[j]);
      prev = pos;
    }
    return out;
  }

  std::uint64_t offset = 0;
  for (std::size_t c = 0; c < s.chunk_counts.size(); ++c) {
    const std::uint64_t base = std::uint64_t{c} * L.chunk_size;
    const std::uint64_t len = std::min<std::uint64_t>(L.chunk_size, n - base);
    const std::uint32_t count = s.chunk_counts[c];
    if (count > len) {
      fail(ErrorKind::Corruption, "chunk " + std::to_string(c) + " declares " + std::to_string(count) +
                                      " escapes for " + std::to_string(len) + " elements");
    }
    for (std::uint32_t t = 0; t < count; ++t) {
      const std::uint64_t j = offset + t;
      const std::uint32_t pos = s.escape_positions[j];
      if (pos >= len || (t > 0 && pos <= s.escape_positions[j - 1])) {
        fail(ErrorKind::Corruption, "chunk " + std::to_string(c) + " has invalid escape position " +
                                        std::to_string(pos));
      }
      check_dummy(base + pos, "chunk " + std::to_string(c));
      overwrite(base + pos, s.escape_values[j]);
    }
    offset += count;
  }
  return out;
}

struct RoundtripReport {
  bool ok = false;
  std::uint64_t n = 0;
  std::uint64_t mismatch_count = 0;
  std::optional<std::uint64_t> first_mismatch_index;
  std::string error;  // set when decoding itself failed
};

inline RoundtripReport compare_streams(const RawTensorStream& original, const RawTensorStream& decoded) {
  RoundtripReport r;
  r.n = original.size();
  if (original.fmt != decoded.fmt) r.error = "format differs";
  const std::size_t common = std::min(original.size(), decoded.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (original.words[i] != decoded.words[i]) {
      if (!r.first_mismatch_index) r.first_mismatch_index = i;
      ++r.mismatch_count;
    }
  }
  if (original.size() != decoded.size()) {
    r.mismatch_count += std::max(original.size(), decoded.size()) - common;
    if (!r.first_mismatch_index) r.first_mismatch_index = common;
  }
  r.ok = r.error.empty() && r.mismatch_count == 0;
  return r;
}

/// Decodes `streams` and compares with `original`; decode failures are
/// reported rather than thrown.
inline RoundtripReport verify_streams(const RawTensorStream& original, const EncodedStreams& streams,
                                      unsigned threads = 0) {
  try {
    return compare_streams(original, decode(streams, threads));
  } catch (const Error& e) {
    RoundtripReport r;
    r.n = original.size();
    r.error = e.what();
    return r;
  }
}

inline RoundtripReport verify_roundtrip(const RawTensorStream& stream, const CodecConfig& config) {
  return verify_streams(stream, encode(stream, config), config.threads);
}

}  // namespace splitzip
