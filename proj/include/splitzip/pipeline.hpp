#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "splitzip/error.hpp"

namespace splitzip {

/// Sizes in bytes, throughputs in bytes per second. Codec throughputs are
/// measured against raw bytes; link bandwidth carries compressed bytes.
struct PipelineParams {
  double raw_bytes = 0;
  double ratio = 1;
  double enc_throughput = 0;
  double dec_throughput = 0;
  double link_bandwidth = 0;
};

struct StageTimes {
  double encode = 0;
  double transfer = 0;
  double decode = 0;
};

struct TransferBreakdown {
  double t_enc = 0;
  double t_xfer = 0;
  double t_dec = 0;
  double t_total_compressed = 0;
  double t_native = 0;
  double frac_enc = 0;
  double frac_xfer = 0;
  double frac_dec = 0;
  double speedup = 0;
};

namespace detail {
inline void require_positive(double v, const char* what) {
  if (!(v > 0) || !std::isfinite(v)) fail(ErrorKind::Domain, std::string(what) + " must be positive and finite");
}

inline void validate(const PipelineParams& p) {
  require_positive(p.raw_bytes, "raw size");
  require_positive(p.ratio, "compression ratio");
  require_positive(p.enc_throughput, "encode throughput");
  require_positive(p.dec_throughput, "decode throughput");
  require_positive(p.link_bandwidth, "link bandwidth");
}
}  // namespace detail

inline StageTimes stage_times(const PipelineParams& p) {
  detail::validate(p);
  return {p.raw_bytes / p.enc_throughput, p.raw_bytes / (p.ratio * p.link_bandwidth),
          p.raw_bytes / p.dec_throughput};
}

/// Steady-state time of a streaming encode/transfer/decode pipeline: the slowest stage.
inline double pipeline_time(const PipelineParams& p) {
  const StageTimes t = stage_times(p);
  return std::max({t.encode, t.transfer, t.decode});
}

/// Largest link bandwidth at which encode and decode stay hidden behind transfer.
inline double hiding_bandwidth(double enc_throughput, double dec_throughput, double ratio) {
  detail::require_positive(enc_throughput, "encode throughput");
  detail::require_positive(dec_throughput, "decode throughput");
  detail::require_positive(ratio, "compression ratio");
  return std::min(enc_throughput, dec_throughput) / ratio;
}

/// Additive accounting from measured stage times.
inline TransferBreakdown transfer_breakdown(const StageTimes& t, double native_time) {
  detail::require_positive(t.encode, "encode time");
  detail::require_positive(t.transfer, "transfer time");
  detail::require_positive(t.decode, "decode time");
  detail::require_positive(native_time, "native time");
  TransferBreakdown b;
  b.t_enc = t.encode;
  b.t_xfer = t.transfer;
  b.t_dec = t.decode;
  b.t_total_compressed = t.encode + t.transfer + t.decode;
  b.t_native = native_time;
  b.frac_enc = t.encode / b.t_total_compressed;
  b.frac_xfer = t.transfer / b.t_total_compressed;
  b.frac_dec = t.decode / b.t_total_compressed;
  b.speedup = native_time / b.t_total_compressed;
  return b;
}

/// Additive accounting from model parameters. `overhead` is a fixed
/// per-transfer cost in seconds charged to both the native and the
/// compressed transfer.
inline TransferBreakdown transfer_breakdown(const PipelineParams& p, double overhead = 0.0) {
  if (!(overhead >= 0) || !std::isfinite(overhead)) fail(ErrorKind::Domain, "overhead must be non-negative");
  StageTimes t = stage_times(p);
  t.transfer += overhead;
  return transfer_breakdown(t, p.raw_bytes / p.link_bandwidth + overhead);
}

struct SweepConfig {
  double kv_bytes_per_token = 0;
  std::vector<std::uint64_t> batches;
  std::vector<std::uint64_t> seq_lens;
  PipelineParams codec;  // raw_bytes is ignored; each point supplies its own
  double overhead = 0.0;
};

struct SweepRow {
  std::uint64_t batch = 0;
  std::uint64_t seq_len = 0;
  double raw_bytes = 0;
  TransferBreakdown breakdown;
};

/// One row per (batch, seq_len), sorted by batch then sequence length.
inline std::vector<SweepRow> sweep_simulation(const SweepConfig& cfg) {
  detail::require_positive(cfg.kv_bytes_per_token, "kv bytes per token");
  if (cfg.batches.empty() || cfg.seq_lens.empty()) fail(ErrorKind::Domain, "sweep lists must be non-empty");
  auto batches = cfg.batches;
  auto seqs = cfg.seq_lens;
  std::sort(batches.begin(), batches.end());
  std::sort(seqs.begin(), seqs.end());
  std::vector<SweepRow> rows;
  rows.reserve(batches.size() * seqs.size());
  for (auto b : batches) {
    for (auto s : seqs) {
      if (b == 0 || s == 0) fail(ErrorKind::Domain, "batch and sequence length must be positive");
      PipelineParams p = cfg.codec;
      p.raw_bytes = cfg.kv_bytes_per_token * static_cast<double>(b) * static_cast<double>(s);
      rows.push_back({b, s, p.raw_bytes, transfer_breakdown(p, cfg.overhead)});
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "batch,seq_len,native_ms,compressed_ms,speedup\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.batch << ',' << r.seq_len << ',' << r.breakdown.t_native * 1e3 << ','
       << r.breakdown.t_total_compressed * 1e3 << ',' << r.breakdown.speedup << '\n';
  }
}

}  // namespace splitzip
