#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "splitzip/bitpack.hpp"
#include "splitzip/calibration.hpp"
#include "splitzip/codec.hpp"
#include "splitzip/error.hpp"
#include "splitzip/tensor.hpp"

namespace splitzip {

// Container layout, all integers little-endian:
//   0  "SPLZ"
//   4  version        u8  (1)
//   5  format         u8
//   6  mode           u8  (0 explicit, 1 sentinel)
//   7  code_bits      u8
//   8  position mode  u8  (0 chunk-relative, 1 absolute 32-bit)
//   9  chunk_size     u32
//  13  n_elements     u64
//  21  n_escapes      u64
//  29  codebook record ("SZCB" ...)
//      chunk counts (u32 each), packed codes, sign-mantissa, escape positions,
//      escape values (bit-packed at exponent width), CRC-32 of all prior bytes.

inline constexpr std::array<std::uint8_t, 4> kContainerMagic = {'S', 'P', 'L', 'Z'};
inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::size_t kContainerHeaderBytes = 29;
inline constexpr std::size_t kChecksumBytes = 4;

inline constexpr std::array<std::uint8_t, 4> kRawMagic = {'S', 'Z', 'R', 'W'};
inline constexpr std::uint8_t kRawVersion = 1;
inline constexpr std::size_t kRawHeaderBytes = 14;

/// Bytes a container spends outside the payload streams.
inline std::uint64_t container_overhead_bytes(std::size_t codebook_entries) {
  return kContainerHeaderBytes + kCodebookFixedBytes + codebook_entries + kChecksumBytes;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, unsigned bytes) {
  for (unsigned i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, unsigned bytes) {
  std::uint64_t v = 0;
  for (unsigned i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  constexpr std::size_t kStep = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kStep) {
    const auto len = static_cast<uInt>(std::min(kStep, bytes.size() - off));
    crc = ::crc32(crc, bytes.data() + off, len);
  }
  return static_cast<std::uint32_t>(crc);
}

/// Bounds-checked cursor; running out of bytes names the section being read.
class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::uint64_t n, const char* section) {
    if (n > bytes_.size() - pos_) {
      fail(ErrorKind::Truncation, std::string("file ends inside ") + section + " (needs " +
                                      std::to_string(n) + " bytes, " +
                                      std::to_string(bytes_.size() - pos_) + " remain)");
    }
    auto s = bytes_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_container(const EncodedStreams& s) {
  const StreamLayout& L = s.layout;
  const unsigned exp_bits = info(L.fmt).exp_bits;
  std::vector<std::uint8_t> out;
  out.reserve(container_overhead_bytes(s.codebook.size()) +
              compressed_payload_bytes(s.n_elements, s.n_escapes, L));
  out.insert(out.end(), kContainerMagic.begin(), kContainerMagic.end());
  out.push_back(kContainerVersion);
  out.push_back(static_cast<std::uint8_t>(L.fmt));
  out.push_back(static_cast<std::uint8_t>(L.mode));
  out.push_back(static_cast<std::uint8_t>(L.code_bits));
  out.push_back(static_cast<std::uint8_t>(L.position_mode));
  detail::put_le(out, L.chunk_size, 4);
  detail::put_le(out, s.n_elements, 8);
  detail::put_le(out, s.n_escapes, 8);
  append_codebook_record(out, s.codebook);

  for (auto c : s.chunk_counts) detail::put_le(out, c, 4);
  out.insert(out.end(), s.packed_codes.begin(), s.packed_codes.end());
  out.insert(out.end(), s.sign_mantissa.begin(), s.sign_mantissa.end());
  const unsigned pos_bytes = L.position_bytes();
  for (auto p : s.escape_positions) detail::put_le(out, p, pos_bytes);
  const std::size_t values_at = out.size();
  out.resize(values_at + packed_size(s.escape_values.size(), exp_bits));
  detail::pack_into(s.escape_values, exp_bits, std::span(out).subspan(values_at));
  detail::put_le(out, detail::crc32_of(out), 4);
  return out;
}

struct ReadOptions {
  /// Structural tests switch this off to reach the field validators.
  bool verify_checksum = true;
};

inline EncodedStreams parse_container(std::span<const std::uint8_t> bytes, ReadOptions opts = {}) {
  detail::Cursor cur(bytes);
  const auto magic = cur.take(4, "header magic");
  if (!std::equal(kContainerMagic.begin(), kContainerMagic.end(), magic.begin())) {
    fail(ErrorKind::BadMagic, "not a splitzip container");
  }
  const auto version = cur.take(1, "header")[0];
  if (version != kContainerVersion) {
    fail(ErrorKind::UnsupportedVersion, "container version " + std::to_string(version));
  }
  const auto h = cur.take(kContainerHeaderBytes - 5, "header");

  EncodedStreams s;
  StreamLayout& L = s.layout;
  L.fmt = format_from_byte(h[0]);
  if (h[1] > 1) fail(ErrorKind::MalformedStream, "unknown mode byte " + std::to_string(h[1]));
  L.mode = static_cast<CodebookMode>(h[1]);
  L.code_bits = h[2];
  if (h[3] > 1) fail(ErrorKind::MalformedStream, "unknown position mode byte " + std::to_string(h[3]));
  L.position_mode = static_cast<PositionMode>(h[3]);
  L.chunk_size = static_cast<std::uint32_t>(detail::get_le(h, 4, 4));
  s.n_elements = detail::get_le(h, 8, 8);
  s.n_escapes = detail::get_le(h, 16, 8);
  try {
    L.validate();
  } catch (const Error& e) {
    fail(ErrorKind::MalformedStream, std::string("invalid header: ") + e.what());
  }
  if (s.n_elements == 0) fail(ErrorKind::MalformedStream, "header declares zero elements");
  if (s.n_escapes > s.n_elements) fail(ErrorKind::MalformedStream, "header declares more escapes than elements");
  // Every element costs at least 7 bits of payload; larger counts cannot fit.
  if (s.n_elements > 2 * static_cast<std::uint64_t>(bytes.size())) {
    fail(ErrorKind::Truncation, "file too short for " + std::to_string(s.n_elements) + " elements");
  }

  std::size_t consumed = 0;
  {
    const auto rest = bytes.subspan(cur.position());
    s.codebook = parse_codebook_record(rest, consumed);
    cur.take(consumed, "codebook");
  }
  if (s.codebook.fmt() != L.fmt || s.codebook.code_bits() != L.code_bits || s.codebook.mode() != L.mode) {
    fail(ErrorKind::MalformedStream, "codebook record disagrees with container header");
  }

  const std::uint64_t n = s.n_elements;
  const std::uint64_t m = s.n_escapes;
  const FormatInfo f = info(L.fmt);
  const auto counts = cur.take(4 * L.chunk_count(n), "chunk counts");
  const auto codes = cur.take(packed_size(n, L.code_bits), "packed codes");
  const auto sm = cur.take(packed_size(n, f.sm_bits), "sign-mantissa");
  const unsigned pos_bytes = L.position_bytes();
  const auto positions = cur.take(m * pos_bytes, "escape positions");
  const auto values = cur.take(packed_size(m, f.exp_bits), "escape values");
  const auto crc = cur.take(kChecksumBytes, "checksum");
  if (cur.remaining() != 0) {
    fail(ErrorKind::LengthMismatch, std::to_string(cur.remaining()) + " unexpected bytes after checksum");
  }
  if (opts.verify_checksum) {
    const auto stored = static_cast<std::uint32_t>(detail::get_le(crc, 0, 4));
    if (stored != detail::crc32_of(bytes.first(bytes.size() - kChecksumBytes))) {
      fail(ErrorKind::Checksum, "container checksum mismatch");
    }
  }

  s.chunk_counts.resize(L.chunk_count(n));
  for (std::size_t c = 0; c < s.chunk_counts.size(); ++c) {
    s.chunk_counts[c] = static_cast<std::uint32_t>(detail::get_le(counts, 4 * c, 4));
  }
  s.packed_codes.assign(codes.begin(), codes.end());
  s.sign_mantissa.assign(sm.begin(), sm.end());
  if (pos_bytes > 0) {
    s.escape_positions.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      s.escape_positions[j] = static_cast<std::uint32_t>(detail::get_le(positions, j * pos_bytes, pos_bytes));
    }
  }
  s.escape_values = unpack_codes(values, m, f.exp_bits);
  if (!padding_is_zero(values, m, f.exp_bits)) fail(ErrorKind::MalformedStream, "nonzero padding in escape values");
  return s;
}

/// Writes the container to `path`; returns the number of bytes written.
inline std::uint64_t write_container(const EncodedStreams& s, const std::filesystem::path& path);
inline EncodedStreams read_container(const std::filesystem::path& path, ReadOptions opts = {});

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::Io, "read failure on " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failure on " + path.string());
}

inline std::uint64_t write_container(const EncodedStreams& s, const std::filesystem::path& path) {
  const auto bytes = serialize_container(s);
  write_file(path, bytes);
  return bytes.size();
}

inline EncodedStreams read_container(const std::filesystem::path& path, ReadOptions opts) {
  return parse_container(read_file(path), opts);
}

// Raw tensor file: "SZRW", version u8, format u8, n_elements u64, then the
// element words little-endian (2 bytes for BF16, 1 byte for FP8).

inline std::vector<std::uint8_t> serialize_raw(const RawTensorStream& stream) {
  const unsigned wb = info(stream.fmt).word_bytes();
  std::vector<std::uint8_t> out(kRawMagic.begin(), kRawMagic.end());
  out.reserve(kRawHeaderBytes + stream.size() * wb);
  out.push_back(kRawVersion);
  out.push_back(static_cast<std::uint8_t>(stream.fmt));
  detail::put_le(out, stream.size(), 8);
  for (auto w : stream.words) detail::put_le(out, w, wb);
  return out;
}

inline RawTensorStream parse_raw(std::span<const std::uint8_t> bytes) {
  detail::Cursor cur(bytes);
  const auto magic = cur.take(4, "raw header magic");
  if (!std::equal(kRawMagic.begin(), kRawMagic.end(), magic.begin())) {
    fail(ErrorKind::BadMagic, "not a raw tensor file");
  }
  const auto version = cur.take(1, "raw header")[0];
  if (version != kRawVersion) fail(ErrorKind::UnsupportedVersion, "raw file version " + std::to_string(version));
  const auto h = cur.take(kRawHeaderBytes - 5, "raw header");
  RawTensorStream stream;
  stream.fmt = format_from_byte(h[0]);
  const std::uint64_t n = detail::get_le(h, 1, 8);
  const unsigned wb = info(stream.fmt).word_bytes();
  if (n > bytes.size()) fail(ErrorKind::Truncation, "file too short for " + std::to_string(n) + " elements");
  const auto payload = cur.take(n * wb, "raw payload");
  if (cur.remaining() != 0) {
    fail(ErrorKind::LengthMismatch, std::to_string(cur.remaining()) + " unexpected bytes after raw payload");
  }
  stream.words.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    stream.words[i] = static_cast<std::uint16_t>(detail::get_le(payload, i * wb, wb));
  }
  return stream;
}

inline void write_raw(const RawTensorStream& stream, const std::filesystem::path& path) {
  write_file(path, serialize_raw(stream));
}

inline RawTensorStream read_raw(const std::filesystem::path& path) { return parse_raw(read_file(path)); }

/// Parses a container and checks it decodes to `original` bit for bit.
/// Format damage is reported in the error field rather than thrown.
inline RoundtripReport verify_container(const RawTensorStream& original, std::span<const std::uint8_t> bytes) {
  try {
    return verify_streams(original, parse_container(bytes));
  } catch (const Error& e) {
    RoundtripReport r;
    r.n = original.size();
    r.error = e.what();
    return r;
  }
}

}  // namespace splitzip
