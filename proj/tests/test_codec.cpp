#include <gtest/gtest.h>

#include "support.hpp"

using namespace splitzip;
using namespace splitzip::testing;

namespace {

// Straight-line reference encoder: one element at a time, no tables shared
// with the library beyond the codebook's entry list.
EncodedStreams reference_encode(const RawTensorStream& s, const CodecConfig& c, const ExponentCodebook& cb) {
  const auto f = info(s.fmt);
  EncodedStreams out;
  out.layout = c.layout();
  out.codebook = cb;
  out.n_elements = s.size();
  std::vector<std::uint8_t> codes, sm;
  const auto entries = cb.entries();
  if (out.layout.has_chunk_counts()) out.chunk_counts.assign(out.layout.chunk_count(s.size()), 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const unsigned e = BitOracle::exponent(s.words[i], s.fmt);
    const unsigned a = BitOracle::sign_mantissa(s.words[i], s.fmt);
    int code = -1;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (entries[k] == e) code = static_cast<int>(k);
    }
    sm.push_back(static_cast<std::uint8_t>(a));
    if (code >= 0) {
      codes.push_back(static_cast<std::uint8_t>(code));
      continue;
    }
    ++out.n_escapes;
    out.escape_values.push_back(static_cast<std::uint8_t>(e));
    if (c.mode == CodebookMode::Top15Sentinel) {
      codes.push_back(static_cast<std::uint8_t>((1u << c.code_bits) - 1));
    } else {
      codes.push_back(0);
      if (c.position_mode == PositionMode::Absolute32) {
        out.escape_positions.push_back(static_cast<std::uint32_t>(i));
      } else {
        out.escape_positions.push_back(static_cast<std::uint32_t>(i % c.chunk_size));
        ++out.chunk_counts[i / c.chunk_size];
      }
    }
  }
  out.packed_codes = pack_codes(codes, c.code_bits);
  out.sign_mantissa = pack_codes(sm, f.sm_bits);
  return out;
}

std::vector<CodecConfig> all_configs(ElementFormat fmt) {
  std::vector<CodecConfig> out;
  for (unsigned bits : {3u, 4u}) {
    for (auto mode : {CodebookMode::TopKExplicit, CodebookMode::Top15Sentinel}) {
      for (std::uint32_t chunk : {256u, 1024u, 4096u}) {
        for (auto pos : {PositionMode::ChunkRelative, PositionMode::Absolute32}) {
          out.push_back(make_config(fmt, bits, mode, chunk, pos));
        }
      }
    }
  }
  return out;
}

template <class F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Io;
}

const ExponentCodebook& bf16_book() {
  static const auto cb = [] {
    std::vector<std::uint8_t> e;
    for (int x = 127; x > 111; --x) e.push_back(static_cast<std::uint8_t>(x));
    return ExponentCodebook::from_entries(ElementFormat::BF16, e, 4, CodebookMode::TopKExplicit);
  }();
  return cb;
}

}  // namespace

TEST(Codec, FourElementsNoEscapes) {
  CodecConfig c;
  c.codebook = bf16_book();
  const RawTensorStream s{ElementFormat::BF16, {0x3F80, 0xBF80, 0x3F00, 0x3E80}};
  const auto enc = encode(s, c);
  EXPECT_EQ(enc.n_escapes, 0u);
  EXPECT_EQ(enc.packed_codes.size(), 2u);
  EXPECT_EQ(enc.sign_mantissa.size(), 4u);
  EXPECT_TRUE(enc.escape_positions.empty());
  EXPECT_TRUE(enc.escape_values.empty());
  EXPECT_EQ(decode(enc), s);
}

TEST(Codec, SingleEscapeAt700) {
  CodecConfig c;
  c.codebook = bf16_book();
  RawTensorStream s{ElementFormat::BF16, std::vector<std::uint16_t>(1024, 0x3F80)};
  s.words[700] = 0x4B12;  // exponent 150
  const auto enc = encode(s, c);
  ASSERT_EQ(enc.chunk_counts, std::vector<std::uint32_t>{1});
  EXPECT_EQ(enc.escape_positions, std::vector<std::uint32_t>{700});
  EXPECT_EQ(enc.escape_values, std::vector<std::uint8_t>{150});
  EXPECT_EQ(symbol_code(enc, 700), kDummyCode);
  EXPECT_EQ(decode(enc), s);
}

TEST(Codec, DecodeHandBuiltStreams) {
  EncodedStreams s;
  s.codebook = ExponentCodebook::from_entries(ElementFormat::BF16, {0x7F}, 4, CodebookMode::TopKExplicit);
  s.n_elements = 2;
  s.packed_codes = {0x00};
  s.sign_mantissa = {0x00, 0x80};
  s.chunk_counts = {0};
  const auto out = decode(s);
  EXPECT_EQ(out.words, (std::vector<std::uint16_t>{0x3F80, 0xBF80}));
}

TEST(Codec, PayloadBytesOfExactCountStream) {
  auto spec = default_spec(ElementFormat::BF16, 1u << 20, 0.0016, 3);
  const auto s = generate(spec);
  CodecConfig c;
  c.codebook = bf16_book();
  const auto enc = encode(s, c);
  const std::uint64_t n = 1u << 20, m = enc.n_escapes;
  EXPECT_EQ(m, 1678u);
  EXPECT_EQ(compressed_payload_bytes(n, m, enc.layout), n + n / 2 + 3 * m + 4 * (n / 1024));
  const double r = compression_ratio(n, m, enc.layout);
  EXPECT_GE(r, 1.315);
  EXPECT_LE(r, 1.335);
}

TEST(Codec, PayloadBytesArithmetic) {
  StreamLayout l;
  EXPECT_EQ(compressed_payload_bytes(1024, 0, l), 1540u);
  for (auto fmt : kAllFormats) {
    for (const auto& c : all_configs(fmt)) {
      const auto layout = c.layout();
      const auto f = info(fmt);
      for (std::uint64_t n : {1u, 7u, 1000u, 4097u}) {
        for (std::uint64_t m : {0u, 1u, 5u}) {
          if (m > n) continue;
          const std::uint64_t chunks =
              c.mode == CodebookMode::TopKExplicit && c.position_mode == PositionMode::ChunkRelative
                  ? ceil_div(n, c.chunk_size)
                  : 0;
          unsigned pos = 0;
          if (c.mode == CodebookMode::TopKExplicit) {
            pos = c.position_mode == PositionMode::Absolute32 ? 4 : (c.chunk_size <= 256 ? 1 : 2);
          }
          const std::uint64_t expect = ceil_div(n * c.code_bits, 8) + ceil_div(n * f.sm_bits, 8) + 4 * chunks +
                                       m * pos + ceil_div(m * f.exp_bits, 8);
          EXPECT_EQ(compressed_payload_bytes(n, m, layout), expect);
        }
      }
    }
  }
}

TEST(Codec, ClosedFormRatios) {
  StreamLayout l;
  EXPECT_NEAR(formula_ratio(0.0, l), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(formula_ratio(0.0016, l), 2.0 / (1.5 + 3 * 0.0016), 1e-12);
  EXPECT_NEAR(formula_ratio(0.0016, l), 1.3291, 5e-5);
  l.code_bits = 3;
  EXPECT_NEAR(formula_ratio(0.0789, l), 2.0 / (1.375 + 3 * 0.0789), 1e-12);
  EXPECT_NEAR(formula_ratio(0.0789, l), 1.241, 5e-4);
  StreamLayout sentinel;
  sentinel.mode = CodebookMode::Top15Sentinel;
  EXPECT_NEAR(formula_ratio(0.0027, sentinel), 2.0 / (1.5 + 0.0027), 1e-12);
  EXPECT_NEAR(formula_ratio(0.0027, sentinel), 1.331, 5e-4);
  EXPECT_NEAR(compression_ratio(1u << 20, 0, sentinel), 4.0 / 3.0, 1e-12);
  EXPECT_THROW(formula_ratio(-0.1, l), Error);
  EXPECT_THROW(compression_ratio(0, 0, l), Error);
}

TEST(Codec, MatchesReferenceEncoder) {
  for (auto fmt : kAllFormats) {
    for (const auto& base : all_configs(fmt)) {
      for (std::uint64_t seed : {1u, 2u}) {
        const auto s = profile_stream(fmt, 5000 + seed * 333, 0.03, seed);
        CodecConfig c = base;
        const auto cb = select_codebook(build_histogram(s), c.code_bits, c.mode);
        const auto enc = encode(s, c);
        EXPECT_EQ(enc.codebook, cb);
        const auto ref = reference_encode(s, c, cb);
        EXPECT_EQ(enc, ref) << describe_layout(c);
        EXPECT_EQ(decode(enc), s);
      }
    }
  }
}

TEST(Codec, RoundTripUniformWords) {
  // Uniform words put most exponents outside the codebook.
  for (auto fmt : kAllFormats) {
    for (const auto& c : all_configs(fmt)) {
      const auto s = random_stream(fmt, 3001, 99);
      const auto r = verify_roundtrip(s, c);
      EXPECT_TRUE(r.ok) << describe_layout(c) << ' ' << r.error;
      EXPECT_EQ(r.mismatch_count, 0u);
    }
  }
}

TEST(Codec, SpecialValuesAreOpaque) {
  // NaN, +-Inf, +-0, subnormals.
  const RawTensorStream s{ElementFormat::BF16, {0x7FC0, 0x7F80, 0xFF80, 0x0000, 0x8000, 0x0001, 0xFFFF, 0x3F80}};
  for (const auto& c : all_configs(ElementFormat::BF16)) EXPECT_TRUE(verify_roundtrip(s, c).ok);
}

TEST(Codec, AllEscapes) {
  const auto cb = ExponentCodebook::from_entries(ElementFormat::BF16, {1}, 4, CodebookMode::TopKExplicit);
  CodecConfig c;
  c.codebook = cb;
  c.chunk_size = 256;
  const RawTensorStream s{ElementFormat::BF16, std::vector<std::uint16_t>(600, 0x3F80)};
  const auto enc = encode(s, c);
  EXPECT_EQ(enc.n_escapes, 600u);
  EXPECT_EQ(enc.chunk_counts, (std::vector<std::uint32_t>{256, 256, 88}));
  EXPECT_EQ(decode(enc), s);
}

TEST(Codec, ModesDecodeIdentically) {
  const auto s = profile_stream(ElementFormat::BF16, 20000, 0.01, 8);
  RawTensorStream first;
  for (const auto& c : all_configs(ElementFormat::BF16)) {
    const auto out = decode(encode(s, c));
    if (first.empty()) first = out;
    EXPECT_EQ(out, first);
  }
  EXPECT_EQ(first, s);
}

TEST(Codec, ThreadCountDoesNotChangeOutput) {
  const auto s = profile_stream(ElementFormat::BF16, 300000, 0.005, 12);
  for (auto mode : {CodebookMode::TopKExplicit, CodebookMode::Top15Sentinel}) {
    auto c1 = make_config(ElementFormat::BF16, 4, mode, 1024, PositionMode::ChunkRelative, 1);
    auto c4 = c1;
    c4.threads = 4;
    const auto e1 = encode(s, c1);
    EXPECT_EQ(e1, encode(s, c4));
    EXPECT_EQ(e1, encode_quad(s, c4));
    EXPECT_EQ(decode(e1, 1), decode(e1, 5));
  }
}

TEST(Codec, EscapeCountMatchesExactGenerator) {
  for (auto fmt : kAllFormats) {
    auto spec = default_spec(fmt, 10000, 0.0016, 4);
    const auto s = generate(spec);
    std::vector<std::uint8_t> entries;
    for (const auto& w : spec.in_book) entries.push_back(w.exponent);
    const unsigned bits = entries.size() > 8 ? 4 : 3;
    CodecConfig c;
    c.fmt = fmt;
    c.code_bits = bits;
    c.codebook = ExponentCodebook::from_entries(fmt, entries, bits, CodebookMode::TopKExplicit);
    EXPECT_EQ(encode(s, c).n_escapes, 16u) << name(fmt);
  }
}

TEST(Codec, RatioDecreasesWithEscapes) {
  for (auto fmt : kAllFormats) {
    for (const auto& c : all_configs(fmt)) {
      double prev = 1e9;
      for (std::uint64_t m = 0; m <= 4096; m += 512) {
        const double r = compression_ratio(4096, m, c.layout());
        EXPECT_LE(r, prev);
        prev = r;
      }
    }
  }
}

TEST(Codec, InputErrors) {
  CodecConfig c;
  EXPECT_EQ(error_kind([&] { encode(RawTensorStream{ElementFormat::BF16, {}}, c); }), ErrorKind::EmptyInput);
  EXPECT_EQ(error_kind([&] { encode(RawTensorStream{ElementFormat::FP8_E4M3, {1}}, c); }), ErrorKind::Config);
  c.fmt = ElementFormat::FP8_E4M3;
  c.code_bits = 3;
  EXPECT_EQ(error_kind([&] { encode(RawTensorStream{ElementFormat::FP8_E4M3, {0x100}}, c); }), ErrorKind::RejectedInput);
  CodecConfig bad;
  bad.chunk_size = 0;
  EXPECT_EQ(error_kind([&] { encode(RawTensorStream{ElementFormat::BF16, {1}}, bad); }), ErrorKind::Config);
  bad.chunk_size = 65537;
  EXPECT_EQ(error_kind([&] { encode(RawTensorStream{ElementFormat::BF16, {1}}, bad); }), ErrorKind::Config);
  bad.position_mode = PositionMode::Absolute32;
  EXPECT_NO_THROW(encode(RawTensorStream{ElementFormat::BF16, {1}}, bad));
  CodecConfig mismatch;
  mismatch.codebook = bf16_book();
  mismatch.mode = CodebookMode::Top15Sentinel;
  EXPECT_EQ(error_kind([&] { encode(RawTensorStream{ElementFormat::BF16, {1}}, mismatch); }), ErrorKind::Config);
}

TEST(Codec, CorruptStreamsAreRejected) {
  RawTensorStream s{ElementFormat::BF16, std::vector<std::uint16_t>(3000, 0x3F80)};
  s.words[10] = 0x4B00;
  s.words[2000] = 0x0001;
  CodecConfig c;
  c.codebook = bf16_book();
  const auto good = encode(s, c);
  ASSERT_EQ(decode(good), s);

  auto bad = good;
  bad.chunk_counts[0] = 2;
  EXPECT_EQ(error_kind([&] { decode(bad); }), ErrorKind::Corruption);
  bad = good;
  bad.escape_positions[0] = 5000;
  EXPECT_EQ(error_kind([&] { decode(bad); }), ErrorKind::Corruption);
  bad = good;
  bad.escape_values[0] = 127;  // in the codebook
  EXPECT_EQ(error_kind([&] { decode(bad); }), ErrorKind::Corruption);
  bad = good;
  bad.packed_codes[5] = 0x11;  // dummy code at element 10 replaced
  EXPECT_EQ(error_kind([&] { decode(bad); }), ErrorKind::Corruption);
  bad = good;
  bad.sign_mantissa.pop_back();
  EXPECT_EQ(error_kind([&] { decode(bad); }), ErrorKind::Corruption);

  auto sc = c;
  sc.mode = CodebookMode::Top15Sentinel;
  sc.codebook = ExponentCodebook::from_entries(ElementFormat::BF16, {127}, 4, CodebookMode::Top15Sentinel);
  const auto sgood = encode(s, sc);
  ASSERT_EQ(sgood.n_escapes, 2u);
  ASSERT_EQ(decode(sgood), s);
  auto sbad = sgood;
  sbad.escape_values.pop_back();
  sbad.n_escapes -= 1;
  EXPECT_EQ(error_kind([&] { decode(sbad); }), ErrorKind::Corruption);
}

TEST(Codec, VerifyReportsFirstMismatch) {
  const auto s = profile_stream(ElementFormat::BF16, 4000, 0.01, 5);
  auto t = s;
  t.words[1234] ^= 1;
  t.words[3000] ^= 1;
  const auto r = compare_streams(s, t);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.mismatch_count, 2u);
  EXPECT_EQ(r.first_mismatch_index, 1234u);
}
