#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "emlops/model_package.hpp"
#include "emlops/tensor.hpp"

namespace emlops {

struct BenchmarkSample {
  std::size_t run = 0;
  std::size_t sample = 0;
  double latency_ms = 0.0;
  OpCounters counters;

  bool operator==(const BenchmarkSample&) const = default;
};

struct PrecisionReport {
  Precision precision = Precision::fp32;
  /// Run-major: every sample of run 0, then run 1, ...
  std::vector<BenchmarkSample> samples;
  std::uint64_t model_bytes = 0;
  /// Share of inputs whose top-1 class matches the fp32 model's.
  double agreement = 1.0;

  std::size_t runs() const;
  double mean_latency_ms() const;
  double min_latency_ms() const;
  double max_latency_ms() const;
  OpCounters totals() const;
};

struct BenchmarkReport {
  std::vector<PrecisionReport> precisions;

  /// Throws NotFoundError when the precision was not benchmarked.
  const PrecisionReport& at(Precision p) const;
};

/// Times the forward pass of every bundle over `images` (raw [C,H,W]
/// pixels, preprocessed once up front), `runs` times, sequentially. One
/// bundle must be fp32; it is the reference for agreement. Throws
/// UsageError when the bundles differ in topology, labels or input shape.
BenchmarkReport run_benchmark(const std::vector<Bytes>& bundles, const std::vector<Tensor>& images, std::size_t runs);

/// precision,run,sample,latency_ms,int_mul_adds,float_mul_adds,range_scans
void write_csv(const BenchmarkReport& report, std::ostream& out);
/// Inverse of write_csv over the fields the CSV carries: sizes and
/// agreement are not part of it. Throws ParseError.
BenchmarkReport parse_csv(std::istream& in);

void print_table(const BenchmarkReport& report, std::ostream& out);

}  // namespace emlops
