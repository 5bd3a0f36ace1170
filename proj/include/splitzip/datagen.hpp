#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "splitzip/container.hpp"
#include "splitzip/error.hpp"
#include "splitzip/format.hpp"
#include "splitzip/tensor.hpp"

namespace splitzip {

inline constexpr std::string_view kPrngName = "mt19937_64";

struct WeightedExponent {
  std::uint8_t exponent = 0;
  double weight = 1.0;
};

/// Recipe for a synthetic stream with a controlled exponent distribution.
struct ExponentSpec {
  ElementFormat fmt = ElementFormat::BF16;
  std::vector<WeightedExponent> in_book;
  std::vector<std::uint8_t> escape_values;
  double escape_rate = 0.0;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  bool exact_counts = true;
};

/// Default profile: `book_size` contiguous exponents with geometric weights
/// (ratio 0.7) and up to eight out-of-book neighbours as escape values.
inline ExponentSpec default_spec(ElementFormat fmt, std::uint64_t count, double escape_rate,
                                 std::uint64_t seed, unsigned book_size = 0) {
  const unsigned exp_values = info(fmt).exp_values();
  int top = 127;
  if (fmt == ElementFormat::FP8_E5M2) top = 19;
  if (fmt == ElementFormat::FP8_E4M3) top = 11;
  if (book_size == 0) book_size = fmt == ElementFormat::FP8_E4M3 ? 8 : 16;
  book_size = std::min(book_size, exp_values);
  if (top + 1 < static_cast<int>(book_size)) top = static_cast<int>(book_size) - 1;

  ExponentSpec spec;
  spec.fmt = fmt;
  spec.count = count;
  spec.escape_rate = escape_rate;
  spec.seed = seed;
  double w = 1.0;
  for (unsigned i = 0; i < book_size; ++i, w *= 0.7) {
    spec.in_book.push_back({static_cast<std::uint8_t>(top - static_cast<int>(i)), w});
  }
  const int low = top - static_cast<int>(book_size);
  for (int d = 0; spec.escape_values.size() < 8 && d < static_cast<int>(exp_values); ++d) {
    const int above = top + 1 + d;
    const int below = low - d;
    if (above < static_cast<int>(exp_values)) spec.escape_values.push_back(static_cast<std::uint8_t>(above));
    if (spec.escape_values.size() < 8 && below >= 0) spec.escape_values.push_back(static_cast<std::uint8_t>(below));
  }
  return spec;
}

inline void validate(const ExponentSpec& spec) {
  const unsigned exp_values = info(spec.fmt).exp_values();
  if (spec.count == 0) fail(ErrorKind::EmptyInput, "spec requests zero elements");
  if (spec.in_book.empty()) fail(ErrorKind::Config, "spec needs at least one in-book exponent");
  if (!(spec.escape_rate >= 0.0 && spec.escape_rate < 1.0)) fail(ErrorKind::Config, "escape rate must lie in [0, 1)");
  if (spec.escape_rate > 0.0 && spec.escape_values.empty()) {
    fail(ErrorKind::Config, "nonzero escape rate needs escape values");
  }
  std::vector<bool> seen(exp_values, false);
  for (const auto& [e, w] : spec.in_book) {
    if (e >= exp_values) fail(ErrorKind::Config, "in-book exponent " + std::to_string(e) + " out of range");
    if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorKind::Config, "in-book weights must be positive");
    if (seen[e]) fail(ErrorKind::Config, "duplicate exponent " + std::to_string(e));
    seen[e] = true;
  }
  for (auto e : spec.escape_values) {
    if (e >= exp_values) fail(ErrorKind::Config, "escape exponent " + std::to_string(e) + " out of range");
    if (seen[e]) fail(ErrorKind::Config, "exponent " + std::to_string(e) + " listed twice");
    seen[e] = true;
  }
}

namespace detail {

/// Unbiased draw from [0, n) by rejection; portable across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Largest-remainder split of `total` in proportion to `weights`; exact sum.
inline std::vector<std::uint64_t> apportion(std::uint64_t total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::uint64_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::uint64_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::uint64_t>(std::floor(exact));
    given += out[i];
    rema.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; given < total; ++j, ++given) ++out[rema[j % rema.size()].second];
  return out;
}

}  // namespace detail

/// Number of escape elements the exact-count generator places.
inline std::uint64_t exact_escape_count(const ExponentSpec& spec) {
  return static_cast<std::uint64_t>(std::llround(spec.escape_rate * static_cast<double>(spec.count)));
}

inline RawTensorStream generate(const ExponentSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = static_cast<std::size_t>(spec.count);
  std::vector<std::uint8_t> exps(n);

  std::vector<double> weights;
  for (const auto& we : spec.in_book) weights.push_back(we.weight);

  if (spec.exact_counts) {
    const std::uint64_t m = exact_escape_count(spec);
    const auto book_counts = detail::apportion(n - m, weights);
    std::size_t at = 0;
    for (std::size_t b = 0; b < book_counts.size(); ++b) {
      std::fill_n(exps.begin() + static_cast<std::ptrdiff_t>(at), book_counts[b], spec.in_book[b].exponent);
      at += book_counts[b];
    }
    for (std::uint64_t j = 0; j < m; ++j) exps[at++] = spec.escape_values[j % spec.escape_values.size()];
    for (std::size_t i = n - 1; i > 0; --i) std::swap(exps[i], exps[detail::uniform_below(rng, i + 1)]);
  } else {
    std::vector<double> cdf(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cdf.begin());
    for (auto& c : cdf) c /= cdf.back();
    for (std::size_t i = 0; i < n; ++i) {
      if (detail::uniform_unit(rng) < spec.escape_rate) {
        exps[i] = spec.escape_values[detail::uniform_below(rng, spec.escape_values.size())];
      } else {
        const double u = detail::uniform_unit(rng);
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        exps[i] = spec.in_book[std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1)].exponent;
      }
    }
  }

  RawTensorStream out{spec.fmt, std::vector<std::uint16_t>(n)};
  const std::uint32_t sm_mask = (1u << info(spec.fmt).sm_bits) - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = static_cast<std::uint8_t>(rng() & sm_mask);
    out.words[i] = reconstruct({exps[i], a}, spec.fmt);
  }
  return out;
}

/// Loads a raw tensor dump (for example one written by the KV extractor).
inline RawTensorStream ingest_raw(const std::filesystem::path& path) { return read_raw(path); }

// Key-value config text, one `key = value` per line, '#' starts a comment:
//   format, count, seed, escape_rate, exact, in_book_size,
//   in_book (e:w, e:w, ...), escape_values (e, e, ...)

namespace detail {
inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "bad integer for " + key + ": '" + s + "'");
  }
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "bad number for " + key + ": '" + s + "'");
  }
}

inline std::uint8_t parse_exponent(const std::string& s, const std::string& key) {
  const auto v = parse_uint(s, key);
  if (v > 255) fail(ErrorKind::Config, "exponent out of range in " + key);
  return static_cast<std::uint8_t>(v);
}
}  // namespace detail

inline ExponentSpec parse_spec_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, "expected key = value, got '" + line + "'");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  auto get = [&](const std::string& key) -> const std::string* {
    for (auto it = kv.rbegin(); it != kv.rend(); ++it) {
      if (it->first == key) return &it->second;
    }
    return nullptr;
  };
  for (const auto& [k, v] : kv) {
    static const char* known[] = {"format", "count", "seed", "escape_rate", "exact",
                                  "in_book_size", "in_book", "escape_values", "prng"};
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      fail(ErrorKind::Config, "unknown key '" + k + "'");
    }
  }

  if (auto v = get("prng"); v && *v != kPrngName) {
    fail(ErrorKind::Config, "corpus was generated with PRNG '" + *v + "', this build uses " + std::string(kPrngName));
  }
  ElementFormat fmt = ElementFormat::BF16;
  if (auto v = get("format")) {
    auto f = parse_format(*v);
    if (!f) fail(ErrorKind::Config, "unknown format '" + *v + "'");
    fmt = *f;
  }
  const std::uint64_t count = get("count") ? detail::parse_uint(*get("count"), "count") : 1u << 20;
  const std::uint64_t seed = get("seed") ? detail::parse_uint(*get("seed"), "seed") : 0;
  const double rate = get("escape_rate") ? detail::parse_double(*get("escape_rate"), "escape_rate") : 0.0;
  const unsigned book = get("in_book_size")
                            ? static_cast<unsigned>(detail::parse_uint(*get("in_book_size"), "in_book_size"))
                            : 0;
  ExponentSpec spec = default_spec(fmt, count, rate, seed, book);
  if (auto v = get("exact")) {
    if (*v == "true" || *v == "1") {
      spec.exact_counts = true;
    } else if (*v == "false" || *v == "0") {
      spec.exact_counts = false;
    } else {
      fail(ErrorKind::Config, "exact must be true or false");
    }
  }
  if (auto v = get("in_book")) {
    spec.in_book.clear();
    for (const auto& item : detail::split_list(*v)) {
      const auto colon = item.find(':');
      WeightedExponent we;
      we.exponent = detail::parse_exponent(detail::trim(item.substr(0, colon)), "in_book");
      if (colon != std::string::npos) we.weight = detail::parse_double(detail::trim(item.substr(colon + 1)), "in_book");
      spec.in_book.push_back(we);
    }
  }
  if (auto v = get("escape_values")) {
    spec.escape_values.clear();
    for (const auto& item : detail::split_list(*v)) {
      spec.escape_values.push_back(detail::parse_exponent(item, "escape_values"));
    }
  }
  validate(spec);
  return spec;
}

inline std::string spec_config_text(const ExponentSpec& spec) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "format = " << name(spec.fmt) << "\n"
     << "count = " << spec.count << "\n"
     << "seed = " << spec.seed << "\n"
     << "escape_rate = " << spec.escape_rate << "\n"
     << "exact = " << (spec.exact_counts ? "true" : "false") << "\n"
     << "in_book = ";
  for (std::size_t i = 0; i < spec.in_book.size(); ++i) {
    os << (i ? ", " : "") << unsigned{spec.in_book[i].exponent} << ":" << spec.in_book[i].weight;
  }
  os << "\nescape_values = ";
  for (std::size_t i = 0; i < spec.escape_values.size(); ++i) {
    os << (i ? ", " : "") << unsigned{spec.escape_values[i]};
  }
  os << "\n";
  return os.str();
}

/// Sidecar text recorded next to generated files so corpora can be rebuilt.
inline std::string generation_metadata(const ExponentSpec& spec) {
  return "prng = " + std::string(kPrngName) + "\n" + spec_config_text(spec);
}

}  // namespace splitzip
