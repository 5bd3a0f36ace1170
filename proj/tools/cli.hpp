#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "splitzip/splitzip.hpp"

namespace splitzip::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kVerifyFailure = 2,
  kFormatError = 3,
  kConfigError = 4,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return kFailure;
    case ErrorKind::EmptyInput:
    case ErrorKind::RejectedInput:
    case ErrorKind::Config:
    case ErrorKind::Domain: return kConfigError;
    default: return kFormatError;
  }
}

/// One row of an ablation table. Ratios come from serialized container sizes.
struct AblationReport {
  std::string variant;
  std::string config;
  std::uint64_t n_elements = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t file_bytes = 0;
  double ratio = 0;
  double file_ratio = 0;
  double escape_rate = 0;
  double coverage = 0;
  double encode_seconds = 0;
  double decode_seconds = 0;
  double encode_gbps = 0;
  double decode_gbps = 0;
  bool roundtrip_ok = false;
};

inline std::string describe(const CodecConfig& c) {
  std::ostringstream os;
  os << name(c.fmt) << " code_bits=" << c.code_bits << " mode=" << name(c.mode);
  if (c.mode == CodebookMode::TopKExplicit) {
    os << " positions=" << name(c.position_mode);
    if (c.position_mode == PositionMode::ChunkRelative) os << " chunk=" << c.chunk_size;
  }
  os << (c.dynamic() ? " dynamic" : " precalibrated");
  return os.str();
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Encodes, serializes, parses back and decodes `stream`; the round trip
/// goes through the real container bytes.
inline AblationReport run_variant(const RawTensorStream& stream, const CodecConfig& config, std::string label) {
  AblationReport r;
  r.variant = std::move(label);
  r.config = describe(config);
  r.n_elements = stream.size();

  auto t0 = std::chrono::steady_clock::now();
  const EncodedStreams enc = encode_quad(stream, config);
  r.encode_seconds = seconds_since(t0);
  const auto bytes = serialize_container(enc);

  t0 = std::chrono::steady_clock::now();
  const RoundtripReport check = verify_container(stream, bytes);
  r.decode_seconds = seconds_since(t0);

  r.file_bytes = bytes.size();
  r.payload_bytes = bytes.size() - container_overhead_bytes(enc.codebook.size());
  const double raw = static_cast<double>(stream.raw_bytes());
  r.ratio = raw / static_cast<double>(r.payload_bytes);
  r.file_ratio = raw / static_cast<double>(r.file_bytes);
  r.escape_rate = enc.escape_rate();
  r.coverage = 1.0 - r.escape_rate;
  r.encode_gbps = r.encode_seconds > 0 ? raw / r.encode_seconds / 1e9 : 0;
  r.decode_gbps = r.decode_seconds > 0 ? raw / r.decode_seconds / 1e9 : 0;
  r.roundtrip_ok = check.ok;
  return r;
}

inline nlohmann::json to_json(const AblationReport& r) {
  return {{"variant", r.variant},       {"config", r.config},
          {"n_elements", r.n_elements}, {"payload_bytes", r.payload_bytes},
          {"file_bytes", r.file_bytes}, {"ratio", r.ratio},
          {"file_ratio", r.file_ratio}, {"escape_rate", r.escape_rate},
          {"coverage", r.coverage},     {"encode_gbps", r.encode_gbps},
          {"decode_gbps", r.decode_gbps}, {"roundtrip_ok", r.roundtrip_ok},
          {"status", r.roundtrip_ok ? "PASS" : "FAIL"}};
}

inline nlohmann::json to_json(const TransferBreakdown& b) {
  return {{"t_enc_ms", b.t_enc * 1e3},
          {"t_xfer_ms", b.t_xfer * 1e3},
          {"t_dec_ms", b.t_dec * 1e3},
          {"t_total_compressed_ms", b.t_total_compressed * 1e3},
          {"t_native_ms", b.t_native * 1e3},
          {"frac_enc", b.frac_enc},
          {"frac_xfer", b.frac_xfer},
          {"frac_dec", b.frac_dec},
          {"speedup", b.speedup}};
}

inline const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> suites = {"topk", "sentinel", "chunk", "precalib", "positions"};
  return suites;
}

/// Variants of one ablation suite, all derived from `base`.
inline std::vector<std::pair<std::string, CodecConfig>> suite_variants(const std::string& suite, CodecConfig base,
                                                                       const std::optional<ExponentCodebook>& precalibrated) {
  std::vector<std::pair<std::string, CodecConfig>> out;
  base.codebook.reset();
  auto with = [&](auto&& edit) {
    CodecConfig c = base;
    edit(c);
    return c;
  };
  if (suite == "topk") {
    out.emplace_back("top16-4bit", with([](CodecConfig& c) { c.code_bits = 4; }));
    out.emplace_back("top8-3bit", with([](CodecConfig& c) { c.code_bits = 3; }));
  } else if (suite == "sentinel") {
    out.emplace_back("top16+positions", with([](CodecConfig& c) { c.mode = CodebookMode::TopKExplicit; }));
    out.emplace_back("top15+sentinel", with([](CodecConfig& c) { c.mode = CodebookMode::Top15Sentinel; }));
  } else if (suite == "positions") {
    out.emplace_back("chunk1024-u16", with([](CodecConfig& c) { c.chunk_size = 1024; }));
    out.emplace_back("chunk256-u8", with([](CodecConfig& c) { c.chunk_size = 256; }));
    out.emplace_back("absolute-u32", with([](CodecConfig& c) { c.position_mode = PositionMode::Absolute32; }));
    out.emplace_back("sentinel", with([](CodecConfig& c) { c.mode = CodebookMode::Top15Sentinel; }));
  } else if (suite == "chunk") {
    for (std::uint32_t cs : {256u, 512u, 1024u, 2048u, 4096u, 8192u, 16384u, 32768u, 65536u}) {
      out.emplace_back("chunk" + std::to_string(cs), with([cs](CodecConfig& c) { c.chunk_size = cs; }));
    }
  } else if (suite == "precalib") {
    if (!precalibrated) fail(ErrorKind::Config, "precalib suite needs a calibration codebook");
    out.emplace_back("precalibrated", with([&](CodecConfig& c) { c.codebook = precalibrated; }));
    out.emplace_back("dynamic", base);
  } else {
    fail(ErrorKind::Config, "unknown ablation suite '" + suite + "'");
  }
  return out;
}

namespace detail {

struct CodecFlags {
  std::string format;
  unsigned code_bits = 4;
  std::string mode = "explicit";
  std::uint32_t chunk_size = kDefaultChunkSize;
  std::string positions = "chunk";
  bool dynamic = false;
  std::string codebook;
  CLI::Option* code_bits_opt = nullptr;
  CLI::Option* mode_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--format", format, "Element format: bf16, e5m2, e4m3 (must match the input)")
        ->check(CLI::IsMember({"bf16", "e5m2", "e4m3"}));
    code_bits_opt = app->add_option("--code-bits", code_bits, "Code width in bits")->check(CLI::IsMember({3, 4}));
    mode_opt = app->add_option("--mode", mode, "Escape handling")->check(CLI::IsMember({"explicit", "sentinel"}));
    app->add_option("--chunk-size", chunk_size, "Elements per escape chunk")->check(CLI::PositiveNumber);
    app->add_option("--positions", positions, "Escape position encoding")->check(CLI::IsMember({"chunk", "abs32"}));
    app->add_flag("--dynamic", dynamic, "Calibrate the codebook on the input itself");
    app->add_option("--codebook", codebook, "Precalibrated codebook file");
  }

  CodecConfig resolve(ElementFormat input_fmt, bool need_codebook_choice) const {
    if (!format.empty() && *parse_format(format) != input_fmt) {
      fail(ErrorKind::Config, "input is " + std::string(name(input_fmt)) + " but --format is " + format);
    }
    CodecConfig c;
    c.fmt = input_fmt;
    c.code_bits = code_bits;
    c.mode = mode == "sentinel" ? CodebookMode::Top15Sentinel : CodebookMode::TopKExplicit;
    c.chunk_size = chunk_size;
    c.position_mode = positions == "abs32" ? PositionMode::Absolute32 : PositionMode::ChunkRelative;
    if (!codebook.empty() && dynamic) fail(ErrorKind::Config, "--codebook and --dynamic are exclusive");
    if (!codebook.empty()) {
      auto cb = deserialize_codebook(read_file(codebook));
      if (code_bits_opt->count() == 0) c.code_bits = cb.code_bits();
      if (mode_opt->count() == 0) c.mode = cb.mode();
      c.codebook = std::move(cb);
    } else if (need_codebook_choice && !dynamic) {
      fail(ErrorKind::Config, "pass --codebook PATH or --dynamic");
    }
    return c;
  }
};

inline std::vector<std::uint64_t> parse_u64_list(const std::string& text, const std::string& what) {
  std::vector<std::uint64_t> out;
  for (const auto& item : splitzip::detail::split_list(text)) out.push_back(splitzip::detail::parse_uint(item, what));
  return out;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : splitzip::detail::split_list(text)) out.push_back(splitzip::detail::parse_double(item, what));
  return out;
}

inline void emit_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot create " + path);
  f << text;
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

struct Timing {
  double mean = 0;
  double stddev = 0;
};

inline Timing summarize(const std::vector<double>& gbps) {
  Timing t;
  for (double g : gbps) t.mean += g;
  t.mean /= static_cast<double>(gbps.size());
  if (gbps.size() > 1) {
    double ss = 0;
    for (double g : gbps) ss += (g - t.mean) * (g - t.mean);
    t.stddev = std::sqrt(ss / static_cast<double>(gbps.size() - 1));
  }
  return t;
}

inline RawTensorStream load_input(const std::string& input, const std::string& spec_path) {
  if (!input.empty() && !spec_path.empty()) fail(ErrorKind::Config, "--input and --spec are exclusive");
  if (!input.empty()) return ingest_raw(input);
  if (!spec_path.empty()) {
    const auto bytes = read_file(spec_path);
    return generate(parse_spec_config(std::string(bytes.begin(), bytes.end())));
  }
  fail(ErrorKind::Config, "pass --input RAW or --spec CONFIG");
}

}  // namespace detail

/// Runs one CLI invocation; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"splitzip: lossless exponent coding for BF16/FP8 tensor streams"};
  app.require_subcommand(1);

  // calibrate
  std::vector<std::string> cal_inputs;
  std::string cal_out, cal_text, cal_mode = "explicit";
  unsigned cal_bits = 4;
  auto* calibrate = app.add_subcommand("calibrate", "Build a top-k exponent codebook from raw tensor files");
  calibrate->add_option("--input,-i", cal_inputs, "Raw tensor files (histograms are merged)")->required();
  calibrate->add_option("--code-bits", cal_bits, "Code width in bits")->check(CLI::IsMember({3, 4}));
  calibrate->add_option("--mode", cal_mode, "Escape handling")->check(CLI::IsMember({"explicit", "sentinel"}));
  calibrate->add_option("--out,-o", cal_out, "Codebook file to write")->required();
  calibrate->add_option("--text", cal_text, "Also write a human-readable dump");

  // compress / decompress / verify
  std::string in_path, out_path, container_path, spec_path;
  detail::CodecFlags flags;
  auto* compress = app.add_subcommand("compress", "Encode a raw tensor file into a container");
  compress->add_option("--input,-i", in_path, "Raw tensor file")->required();
  compress->add_option("--out,-o", out_path, "Container file to write")->required();
  flags.add(compress);

  auto* decompress = app.add_subcommand("decompress", "Decode a container back into a raw tensor file");
  decompress->add_option("--input,-i", in_path, "Container file")->required();
  decompress->add_option("--out,-o", out_path, "Raw tensor file to write")->required();

  auto* verify = app.add_subcommand("verify", "Check bit-exact round trip of a raw tensor file");
  verify->add_option("--input,-i", in_path, "Raw tensor file")->required();
  verify->add_option("--container", container_path, "Verify this container instead of re-encoding");
  flags.add(verify);

  // bench
  unsigned reps = 10, warmup = 3;
  auto* bench = app.add_subcommand("bench", "Time encode/decode after a verified round trip");
  bench->add_option("--input,-i", in_path, "Raw tensor file");
  bench->add_option("--spec", spec_path, "Generate the input from a spec config instead");
  bench->add_option("--reps", reps, "Timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "Untimed warm-up runs");
  flags.add(bench);

  // simulate
  double sim_raw_gb = 0, sim_ratio = 0, sim_genc = 0, sim_gdec = 0, sim_bw = 0, sim_overhead_ms = 0;
  double sim_kv_bytes = 0, sim_native_ms = 0;
  bool sim_bhide = false;
  std::string sim_stage_ms, sim_batches, sim_seqs, sim_csv, sim_json;
  auto* simulate = app.add_subcommand("simulate", "Pipeline and transfer-time model");
  simulate->add_flag("--b-hide", sim_bhide, "Print the hiding bandwidth min(G_enc, G_dec)/ratio");
  simulate->add_option("--raw-gb", sim_raw_gb, "Raw KV size in GB (1e9 bytes)");
  simulate->add_option("--ratio", sim_ratio, "Compression ratio");
  simulate->add_option("--g-enc", sim_genc, "Encode throughput, GB/s of raw bytes");
  simulate->add_option("--g-dec", sim_gdec, "Decode throughput, GB/s of raw bytes");
  simulate->add_option("--bandwidth", sim_bw, "Link bandwidth, GB/s");
  simulate->add_option("--overhead-ms", sim_overhead_ms, "Fixed per-transfer overhead in ms");
  simulate->add_option("--stage-ms", sim_stage_ms, "Measured encode,transfer,decode times in ms");
  simulate->add_option("--native-ms", sim_native_ms, "Measured native transfer time in ms");
  simulate->add_option("--kv-bytes-per-token", sim_kv_bytes, "KV bytes per token for sweeps");
  simulate->add_option("--batches", sim_batches, "Comma-separated batch sizes");
  simulate->add_option("--seqs", sim_seqs, "Comma-separated sequence lengths");
  simulate->add_option("--csv", sim_csv, "Write sweep CSV here (default stdout)");
  simulate->add_option("--json", sim_json, "Write breakdown JSON here (default stdout)");

  // ablate
  std::string suite, abl_csv, abl_json;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation suite with verified round trips");
  ablate->add_option("--input,-i", in_path, "Raw tensor file");
  ablate->add_option("--spec", spec_path, "Generate the input from a spec config instead");
  ablate->add_option("--suite", suite, "Suite name")->required()->check(CLI::IsMember(ablation_suites()));
  ablate->add_option("--csv", abl_csv, "Write the table as CSV");
  ablate->add_option("--json", abl_json, "Write the table as JSON");
  flags.add(ablate);

  // generate
  std::string gen_format = "bf16", gen_config;
  std::uint64_t gen_count = 1u << 20, gen_seed = 0;
  double gen_rate = 0.0016;
  unsigned gen_book = 0;
  bool gen_sampled = false;
  auto* gen = app.add_subcommand("generate", "Write a synthetic raw tensor file");
  gen->add_option("--config", gen_config, "Spec config file (flags below are ignored when given)");
  gen->add_option("--format", gen_format, "Element format")->check(CLI::IsMember({"bf16", "e5m2", "e4m3"}));
  gen->add_option("--count", gen_count, "Element count")->check(CLI::PositiveNumber);
  gen->add_option("--escape-rate", gen_rate, "Fraction of elements outside the in-book set")->check(CLI::Range(0.0, 0.999999));
  gen->add_option("--seed", gen_seed, "PRNG seed");
  gen->add_option("--in-book-size", gen_book, "Number of in-book exponents (default 16, 8 for e4m3)");
  gen->add_flag("--sampled", gen_sampled, "Draw escapes independently instead of exact counts");
  gen->add_option("--out,-o", out_path, "Raw tensor file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (calibrate->parsed()) {
      std::optional<CalibrationStats> stats;
      for (const auto& path : cal_inputs) {
        const auto stream = ingest_raw(path);
        auto h = build_histogram(stream);
        if (stats) {
          stats->merge(h);
        } else {
          stats = std::move(h);
        }
      }
      const auto mode = cal_mode == "sentinel" ? CodebookMode::Top15Sentinel : CodebookMode::TopKExplicit;
      const auto cb = select_codebook(*stats, cal_bits, mode);
      write_file(cal_out, serialize_codebook(cb));
      if (!cal_text.empty()) detail::emit_text(cal_text, codebook_text(cb), out);
      const auto bins = static_cast<unsigned>(stats->counts.size());
      out << "format " << name(stats->fmt) << "\n"
          << "elements " << stats->total << "\n"
          << "entropy_bits " << detail::fixed(entropy_bits(*stats), 2) << "\n"
          << "top8_coverage " << detail::fixed(top_k_coverage(*stats, std::min(8u, bins)), 6) << "\n"
          << "top16_coverage " << detail::fixed(top_k_coverage(*stats, std::min(16u, bins)), 6) << "\n"
          << "codebook_coverage " << detail::fixed(coverage(*stats, cb), 6) << "\n"
          << "codebook_entries";
      for (auto e : cb.entries()) out << ' ' << unsigned{e};
      out << "\n";
      return kOk;
    }

    if (compress->parsed()) {
      const auto stream = ingest_raw(in_path);
      const CodecConfig config = flags.resolve(stream.fmt, true);
      const auto enc = encode_quad(stream, config);
      const auto bytes = serialize_container(enc);
      write_file(out_path, bytes);
      const std::uint64_t payload = compressed_payload_bytes(enc.n_elements, enc.n_escapes, enc.layout);
      const double raw = static_cast<double>(stream.raw_bytes());
      out << "elements " << enc.n_elements << "\n"
          << "escapes " << enc.n_escapes << "\n"
          << "escape_rate " << detail::fixed(enc.escape_rate(), 6) << "\n"
          << "payload_bytes " << payload << "\n"
          << "payload_ratio " << detail::fixed(raw / static_cast<double>(payload), 4) << "\n"
          << "file_bytes " << bytes.size() << "\n"
          << "file_ratio " << detail::fixed(raw / static_cast<double>(bytes.size()), 4) << "\n";
      return kOk;
    }

    if (decompress->parsed()) {
      const auto streams = parse_container(read_file(in_path));
      write_raw(decode(streams), out_path);
      out << "elements " << streams.n_elements << "\n";
      return kOk;
    }

    if (verify->parsed()) {
      const auto stream = ingest_raw(in_path);
      RoundtripReport r;
      if (!container_path.empty()) {
        r = verify_container(stream, read_file(container_path));
      } else {
        CodecConfig config = flags.resolve(stream.fmt, false);
        r = verify_roundtrip(stream, config);
      }
      out << "verify=" << (r.ok ? "OK" : "FAIL") << " n=" << r.n << " mismatches=" << r.mismatch_count;
      if (r.first_mismatch_index) out << " first_mismatch=" << *r.first_mismatch_index;
      out << "\n";
      if (!r.error.empty()) err << r.error << "\n";
      return r.ok ? kOk : kVerifyFailure;
    }

    if (bench->parsed()) {
      const auto stream = detail::load_input(in_path, spec_path);
      CodecConfig config = flags.resolve(stream.fmt, false);
      const auto check = verify_roundtrip(stream, config);
      out << "verify=" << (check.ok ? "OK" : "FAIL") << " n=" << check.n << "\n";
      if (!check.ok) {
        err << "round trip failed; bench aborted " << check.error << "\n";
        return kVerifyFailure;
      }
      // Later runs reuse the codebook so dynamic calibration is timed once per run.
      const double raw = static_cast<double>(stream.raw_bytes());
      std::vector<double> scalar, quad, dec;
      EncodedStreams enc;
      for (unsigned i = 0; i < warmup + reps; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        enc = encode(stream, config);
        const double ts = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        enc = encode_quad(stream, config);
        const double tq = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        const auto back = decode(enc);
        const double td = seconds_since(t0);
        if (i >= warmup) {
          scalar.push_back(raw / ts / 1e9);
          quad.push_back(raw / tq / 1e9);
          dec.push_back(raw / td / 1e9);
        }
      }
      auto line = [&](const char* label, const std::vector<double>& v) {
        const auto t = detail::summarize(v);
        out << label << "_gbps " << detail::fixed(t.mean, 3);
        if (v.size() > 1) out << " +- " << detail::fixed(t.stddev, 3);
        out << "\n";
      };
      out << "config " << describe(config) << "\n"
          << "ratio " << detail::fixed(compression_ratio(enc.n_elements, enc.n_escapes, enc.layout), 4) << "\n"
          << "reps " << reps << " warmup " << warmup << "\n";
      line("encode_scalar", scalar);
      line("encode_quad", quad);
      line("decode", dec);
      return kOk;
    }

    if (simulate->parsed()) {
      bool did = false;
      if (sim_bhide) {
        const double b = hiding_bandwidth(sim_genc * 1e9, sim_gdec * 1e9, sim_ratio);
        out << "b_hide_gbps " << detail::fixed(b / 1e9, 1) << "\n";
        did = true;
      }
      if (!sim_stage_ms.empty()) {
        const auto ms = detail::parse_double_list(sim_stage_ms, "--stage-ms");
        if (ms.size() != 3) fail(ErrorKind::Config, "--stage-ms needs encode,transfer,decode");
        const auto b = transfer_breakdown(StageTimes{ms[0] / 1e3, ms[1] / 1e3, ms[2] / 1e3}, sim_native_ms / 1e3);
        detail::emit_text(sim_json, to_json(b).dump(2) + "\n", out);
        did = true;
      } else if (sim_raw_gb > 0) {
        const PipelineParams p{sim_raw_gb * 1e9, sim_ratio, sim_genc * 1e9, sim_gdec * 1e9, sim_bw * 1e9};
        auto j = to_json(transfer_breakdown(p, sim_overhead_ms / 1e3));
        j["t_pipe_ms"] = pipeline_time(p) * 1e3;
        j["b_hide_gbps"] = hiding_bandwidth(p.enc_throughput, p.dec_throughput, p.ratio) / 1e9;
        detail::emit_text(sim_json, j.dump(2) + "\n", out);
        did = true;
      }
      if (!sim_batches.empty() || !sim_seqs.empty() || sim_kv_bytes != 0) {
        SweepConfig cfg;
        cfg.kv_bytes_per_token = sim_kv_bytes;
        cfg.batches = detail::parse_u64_list(sim_batches, "--batches");
        cfg.seq_lens = detail::parse_u64_list(sim_seqs, "--seqs");
        cfg.codec = {1.0, sim_ratio, sim_genc * 1e9, sim_gdec * 1e9, sim_bw * 1e9};
        cfg.overhead = sim_overhead_ms / 1e3;
        std::ostringstream csv;
        write_sweep_csv(csv, sweep_simulation(cfg));
        detail::emit_text(sim_csv, csv.str(), out);
        did = true;
      }
      if (!did) fail(ErrorKind::Config, "nothing to simulate; see --help");
      return kOk;
    }

    if (ablate->parsed()) {
      const auto stream = detail::load_input(in_path, spec_path);
      CodecConfig base = flags.resolve(stream.fmt, false);
      std::optional<ExponentCodebook> precal = base.codebook;
      if (suite == "precalib" && !precal && !spec_path.empty()) {
        // Calibrate on a disjoint corpus drawn from the same spec family.
        const auto bytes = read_file(spec_path);
        auto spec = parse_spec_config(std::string(bytes.begin(), bytes.end()));
        spec.seed += 1;
        precal = select_codebook(build_histogram(generate(spec)), base.code_bits, base.mode);
      }
      std::vector<AblationReport> rows;
      bool all_ok = true;
      for (const auto& [label, cfg] : suite_variants(suite, base, precal)) {
        rows.push_back(run_variant(stream, cfg, label));
        all_ok = all_ok && rows.back().roundtrip_ok;
      }
      out << std::left << std::setw(18) << "variant" << std::setw(10) << "ratio" << std::setw(10) << "file"
          << std::setw(12) << "escape%" << std::setw(12) << "coverage%" << std::setw(12) << "enc_GB/s"
          << std::setw(12) << "dec_GB/s" << "status\n";
      for (const auto& r : rows) {
        out << std::left << std::setw(18) << r.variant << std::setw(10) << detail::fixed(r.ratio, 4)
            << std::setw(10) << detail::fixed(r.file_ratio, 4) << std::setw(12)
            << detail::fixed(100 * r.escape_rate, 3) << std::setw(12) << detail::fixed(100 * r.coverage, 3)
            << std::setw(12) << detail::fixed(r.encode_gbps, 3) << std::setw(12) << detail::fixed(r.decode_gbps, 3)
            << (r.roundtrip_ok ? "PASS" : "FAIL") << "\n";
      }
      if (!abl_csv.empty()) {
        std::ostringstream csv;
        csv << "variant,config,payload_bytes,file_bytes,ratio,file_ratio,escape_rate,coverage,encode_gbps,"
               "decode_gbps,roundtrip_ok\n"
            << std::setprecision(10);
        for (const auto& r : rows) {
          csv << r.variant << ',' << r.config << ',' << r.payload_bytes << ',' << r.file_bytes << ',' << r.ratio
              << ',' << r.file_ratio << ',' << r.escape_rate << ',' << r.coverage << ',' << r.encode_gbps << ','
              << r.decode_gbps << ',' << (r.roundtrip_ok ? "true" : "false") << '\n';
        }
        detail::emit_text(abl_csv, csv.str(), out);
      }
      if (!abl_json.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows) j.push_back(to_json(r));
        detail::emit_text(abl_json, j.dump(2) + "\n", out);
      }
      return all_ok ? kOk : kVerifyFailure;
    }

    if (gen->parsed()) {
      ExponentSpec spec;
      if (!gen_config.empty()) {
        const auto bytes = read_file(gen_config);
        spec = parse_spec_config(std::string(bytes.begin(), bytes.end()));
      } else {
        spec = default_spec(*parse_format(gen_format), gen_count, gen_rate, gen_seed, gen_book);
        spec.exact_counts = !gen_sampled;
      }
      const auto stream = generate(spec);
      write_raw(stream, out_path);
      detail::emit_text(out_path + ".meta", generation_metadata(spec), out);
      out << "wrote " << stream.size() << " " << name(stream.fmt) << " elements to " << out_path << "\n";
      return kOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kConfigError;
}

}  // namespace splitzip::cli
