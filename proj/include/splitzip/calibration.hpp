#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "splitzip/error.hpp"
#include "splitzip/format.hpp"
#include "splitzip/tensor.hpp"

namespace splitzip {

/// Exponent histogram over 2^exp_bits bins.
struct CalibrationStats {
  ElementFormat fmt = ElementFormat::BF16;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  explicit CalibrationStats(ElementFormat f = ElementFormat::BF16)
      : fmt(f), counts(info(f).exp_values(), 0) {}

  /// Histograms are additive; merging shards equals building over the concatenation.
  CalibrationStats& merge(const CalibrationStats& other) {
    if (other.fmt != fmt) fail(ErrorKind::Config, "cannot merge histograms of different formats");
    for (std::size_t e = 0; e < counts.size(); ++e) counts[e] += other.counts[e];
    total += other.total;
    return *this;
  }

  friend bool operator==(const CalibrationStats&, const CalibrationStats&) = default;
};

inline CalibrationStats build_histogram(ElementFormat fmt, std::span<const std::uint16_t> words) {
  if (words.empty()) fail(ErrorKind::EmptyInput, "cannot build a histogram of an empty stream");
  CalibrationStats stats(fmt);
  for (auto w : words) ++stats.counts[split_fields(w, fmt).exponent];
  stats.total = words.size();
  return stats;
}

inline CalibrationStats build_histogram(const RawTensorStream& stream) {
  return build_histogram(stream.fmt, stream.words);
}

/// Shannon entropy of the exponent distribution, in bits.
inline double entropy_bits(const CalibrationStats& stats) {
  if (stats.total == 0) fail(ErrorKind::EmptyInput, "entropy of an empty histogram");
  const double n = static_cast<double>(stats.total);
  double h = 0.0;
  for (auto c : stats.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

/// Bins ordered by descending count, ties by ascending exponent value.
inline std::vector<std::uint8_t> rank_exponents(const CalibrationStats& stats) {
  std::vector<std::uint8_t> order(stats.counts.size());
  std::iota(order.begin(), order.end(), std::uint8_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::uint8_t a, std::uint8_t b) {
    return stats.counts[a] > stats.counts[b];
  });
  return order;
}

inline double top_k_coverage(const CalibrationStats& stats, unsigned k) {
  if (stats.total == 0) fail(ErrorKind::EmptyInput, "coverage of an empty histogram");
  if (k < 1 || k > stats.counts.size()) fail(ErrorKind::Domain, "k out of range");
  const auto order = rank_exponents(stats);
  std::uint64_t covered = 0;
  for (unsigned i = 0; i < k; ++i) covered += stats.counts[order[i]];
  return static_cast<double>(covered) / static_cast<double>(stats.total);
}

enum class CodebookMode : std::uint8_t { TopKExplicit = 0, Top15Sentinel = 1 };

constexpr std::string_view name(CodebookMode mode) noexcept {
  return mode == CodebookMode::TopKExplicit ? "explicit" : "sentinel";
}

/// Ordered top-k exponent set together with its encode, decode and
/// membership tables. Immutable after construction.
class ExponentCodebook {
 public:
  static constexpr std::uint8_t kEscape = 0xFF;

  ExponentCodebook() = default;

  static ExponentCodebook from_entries(ElementFormat fmt, std::vector<std::uint8_t> entries,
                                       unsigned code_bits, CodebookMode mode) {
    if (code_bits != 3 && code_bits != 4) fail(ErrorKind::Config, "code width must be 3 or 4 bits");
    const unsigned capacity = capacity_for(code_bits, mode);
    if (entries.empty()) fail(ErrorKind::Config, "codebook needs at least one entry");
    if (entries.size() > capacity) {
      fail(ErrorKind::Config, std::to_string(entries.size()) + " entries exceed codebook capacity " +
                                  std::to_string(capacity));
    }
    ExponentCodebook cb;
    cb.fmt_ = fmt;
    cb.code_bits_ = code_bits;
    cb.mode_ = mode;
    cb.encode_.fill(kEscape);
    cb.member_.fill(false);
    cb.decode_.fill(0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto e = entries[i];
      if (e >= info(fmt).exp_values()) {
        fail(ErrorKind::Config, "exponent " + std::to_string(e) + " out of range for " +
                                    std::string(name(fmt)));
      }
      if (cb.member_[e]) fail(ErrorKind::Config, "duplicate codebook entry " + std::to_string(e));
      cb.member_[e] = true;
      cb.encode_[e] = static_cast<std::uint8_t>(i);
      cb.decode_[i] = e;
    }
    cb.entries_ = std::move(entries);
    return cb;
  }

  static constexpr unsigned capacity_for(unsigned code_bits, CodebookMode mode) noexcept {
    const unsigned codes = 1u << code_bits;
    return mode == CodebookMode::Top15Sentinel ? codes - 1 : codes;
  }

  ElementFormat fmt() const noexcept { return fmt_; }
  unsigned code_bits() const noexcept { return code_bits_; }
  CodebookMode mode() const noexcept { return mode_; }
  std::span<const std::uint8_t> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Reserved escape code in sentinel mode.
  std::uint8_t sentinel() const noexcept { return static_cast<std::uint8_t>((1u << code_bits_) - 1); }

  /// Code for exponent e, or kEscape when e is not in the codebook.
  std::uint8_t encode(std::uint8_t e) const noexcept { return encode_[e]; }
  std::uint8_t decode(std::uint8_t code) const noexcept { return decode_[code & 0x0F]; }
  bool contains(std::uint8_t e) const noexcept { return member_[e]; }

  const std::array<std::uint8_t, 256>& encode_table() const noexcept { return encode_; }
  const std::array<std::uint8_t, 16>& decode_table() const noexcept { return decode_; }
  const std::array<bool, 256>& member_table() const noexcept { return member_; }

  friend bool operator==(const ExponentCodebook& a, const ExponentCodebook& b) {
    return a.fmt_ == b.fmt_ && a.code_bits_ == b.code_bits_ && a.mode_ == b.mode_ &&
           a.entries_ == b.entries_;
  }

 private:
  ElementFormat fmt_ = ElementFormat::BF16;
  unsigned code_bits_ = 4;
  CodebookMode mode_ = CodebookMode::TopKExplicit;
  std::vector<std::uint8_t> entries_;
  std::array<std::uint8_t, 256> encode_{};
  std::array<std::uint8_t, 16> decode_{};
  std::array<bool, 256> member_{};
};

/// Picks the most frequent exponents (up to the codebook capacity), skipping
/// bins that never occur.
inline ExponentCodebook select_codebook(const CalibrationStats& stats, unsigned code_bits,
                                        CodebookMode mode) {
  if (stats.total == 0) fail(ErrorKind::EmptyInput, "cannot calibrate on an empty histogram");
  const unsigned k = ExponentCodebook::capacity_for(code_bits, mode);
  std::vector<std::uint8_t> entries;
  for (auto e : rank_exponents(stats)) {
    if (entries.size() == k || stats.counts[e] == 0) break;
    entries.push_back(e);
  }
  return ExponentCodebook::from_entries(stats.fmt, std::move(entries), code_bits, mode);
}

/// Fraction of the histogram mass that a given codebook covers.
inline double coverage(const CalibrationStats& stats, const ExponentCodebook& cb) {
  if (stats.total == 0) fail(ErrorKind::EmptyInput, "coverage of an empty histogram");
  std::uint64_t covered = 0;
  for (auto e : cb.entries()) covered += stats.counts[e];
  return static_cast<double>(covered) / static_cast<double>(stats.total);
}

/// Coverage of each consecutive group of `group_size` elements under a fixed
/// codebook; the last group may be shorter.
inline std::vector<double> coverage_by_group(const RawTensorStream& stream, std::size_t group_size,
                                             const ExponentCodebook& cb) {
  if (group_size < 1) fail(ErrorKind::Domain, "group size must be at least 1");
  if (cb.fmt() != stream.fmt) fail(ErrorKind::Config, "codebook format does not match stream");
  std::vector<double> out;
  out.reserve((stream.size() + group_size - 1) / group_size);
  for (std::size_t begin = 0; begin < stream.size(); begin += group_size) {
    const std::size_t end = std::min(stream.size(), begin + group_size);
    std::size_t hits = 0;
    for (std::size_t i = begin; i < end; ++i) {
      hits += cb.contains(split_fields(stream.words[i], stream.fmt).exponent);
    }
    out.push_back(static_cast<double>(hits) / static_cast<double>(end - begin));
  }
  return out;
}

// Codebook record: "SZCB", version, fmt, code_bits, mode, count, entries[count].
inline constexpr std::array<std::uint8_t, 4> kCodebookMagic = {'S', 'Z', 'C', 'B'};
inline constexpr std::uint8_t kCodebookVersion = 1;
inline constexpr std::size_t kCodebookFixedBytes = 9;

inline void append_codebook_record(std::vector<std::uint8_t>& out, const ExponentCodebook& cb) {
  out.insert(out.end(), kCodebookMagic.begin(), kCodebookMagic.end());
  out.push_back(kCodebookVersion);
  out.push_back(static_cast<std::uint8_t>(cb.fmt()));
  out.push_back(static_cast<std::uint8_t>(cb.code_bits()));
  out.push_back(static_cast<std::uint8_t>(cb.mode()));
  out.push_back(static_cast<std::uint8_t>(cb.size()));
  out.insert(out.end(), cb.entries().begin(), cb.entries().end());
}

inline std::vector<std::uint8_t> serialize_codebook(const ExponentCodebook& cb) {
  std::vector<std::uint8_t> out;
  append_codebook_record(out, cb);
  return out;
}

/// Parses one codebook record from the front of `bytes`; `consumed` receives
/// its length. Trailing bytes are left to the caller.
inline ExponentCodebook parse_codebook_record(std::span<const std::uint8_t> bytes,
                                              std::size_t& consumed) {
  if (bytes.size() < 4) fail(ErrorKind::Truncation, "codebook record truncated in magic");
  if (!std::equal(kCodebookMagic.begin(), kCodebookMagic.end(), bytes.begin())) {
    fail(ErrorKind::BadMagic, "codebook record magic is not SZCB");
  }
  if (bytes.size() < kCodebookFixedBytes) fail(ErrorKind::Truncation, "codebook record header truncated");
  if (bytes[4] != kCodebookVersion) {
    fail(ErrorKind::UnsupportedVersion, "codebook version " + std::to_string(bytes[4]));
  }
  const ElementFormat fmt = format_from_byte(bytes[5]);
  const unsigned code_bits = bytes[6];
  if (bytes[7] > 1) fail(ErrorKind::MalformedStream, "unknown codebook mode " + std::to_string(bytes[7]));
  const auto mode = static_cast<CodebookMode>(bytes[7]);
  const std::size_t count = bytes[8];
  if (bytes.size() < kCodebookFixedBytes + count) fail(ErrorKind::Truncation, "codebook entries truncated");
  std::vector<std::uint8_t> entries(bytes.begin() + kCodebookFixedBytes,
                                    bytes.begin() + static_cast<std::ptrdiff_t>(kCodebookFixedBytes + count));
  consumed = kCodebookFixedBytes + count;
  try {
    return ExponentCodebook::from_entries(fmt, std::move(entries), code_bits, mode);
  } catch (const Error& e) {
    fail(ErrorKind::MalformedStream, std::string("invalid codebook record: ") + e.what());
  }
}

inline ExponentCodebook deserialize_codebook(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  auto cb = parse_codebook_record(bytes, consumed);
  if (consumed != bytes.size()) fail(ErrorKind::LengthMismatch, "trailing bytes after codebook record");
  return cb;
}

/// Human-readable dump, one code per line.
inline std::string codebook_text(const ExponentCodebook& cb) {
  std::ostringstream os;
  os << "# splitzip codebook\n"
     << "format " << name(cb.fmt()) << "\n"
     << "code_bits " << cb.code_bits() << "\n"
     << "mode " << name(cb.mode()) << "\n"
     << "entries " << cb.size() << "\n";
  for (std::size_t i = 0; i < cb.size(); ++i) {
    os << "code " << i << " exponent " << unsigned{cb.entries()[i]} << "\n";
  }
  if (cb.mode() == CodebookMode::Top15Sentinel) os << "code " << unsigned{cb.sentinel()} << " escape\n";
  return os.str();
}

}  // namespace splitzip
