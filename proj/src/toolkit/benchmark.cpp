#include "emlops/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "emlops/errors.hpp"
#include "emlops/overloaded.hpp"
#include "emlops/vqi.hpp"

namespace emlops {

namespace {

constexpr const char* kCsvHeader = "precision,run,sample,latency_ms,int_mul_adds,float_mul_adds,range_scans";

std::vector<std::string> topology(const ModelVariant& model) {
  std::vector<std::string> kinds;
  std::visit(Overloaded{
                 [&](const ModelGraph& g) {
                   for (const Layer& l : g.layers()) kinds.emplace_back(layer_name(l));
                 },
                 [&](const QuantizedModel& q) {
                   for (const QLayer& l : q.layers()) {
                     kinds.emplace_back(std::visit(Overloaded{
                                                       [](const QDense&) { return "Dense"; },
                                                       [](const QConv2D&) { return "Conv2D"; },
                                                       [](const ReLU&) { return "ReLU"; },
                                                       [](const MaxPool2D&) { return "MaxPool2D"; },
                                                       [](const Flatten&) { return "Flatten"; },
                                                       [](const Softmax&) { return "Softmax"; },
                                                   },
                                                   l));
                   }
                 },
             },
             model);
  return kinds;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t PrecisionReport::runs() const {
  std::size_t n = 0;
  for (const BenchmarkSample& s : samples) n = std::max(n, s.run + 1);
  return n;
}

double PrecisionReport::mean_latency_ms() const {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const BenchmarkSample& s : samples) sum += s.latency_ms;
  return sum / static_cast<double>(samples.size());
}

double PrecisionReport::min_latency_ms() const {
  double v = samples.empty() ? 0.0 : samples.front().latency_ms;
  for (const BenchmarkSample& s : samples) v = std::min(v, s.latency_ms);
  return v;
}

double PrecisionReport::max_latency_ms() const {
  double v = samples.empty() ? 0.0 : samples.front().latency_ms;
  for (const BenchmarkSample& s : samples) v = std::max(v, s.latency_ms);
  return v;
}

OpCounters PrecisionReport::totals() const {
  OpCounters total;
  for (const BenchmarkSample& s : samples) total += s.counters;
  return total;
}

const PrecisionReport& BenchmarkReport::at(Precision p) const {
  for (const PrecisionReport& r : precisions) {
    if (r.precision == p) return r;
  }
  throw NotFoundError("no benchmark results for " + std::string(to_string(p)));
}

BenchmarkReport run_benchmark(const std::vector<Bytes>& bundles, const std::vector<Tensor>& images,
                              std::size_t runs) {
  if (runs < 1) throw UsageError("benchmark needs at least one run");
  if (images.empty()) throw UsageError("benchmark needs at least one image");
  if (bundles.empty()) throw UsageError("benchmark needs at least one bundle");

  std::vector<UnpackedBundle> models;
  for (const Bytes& b : bundles) models.push_back(unpack(b));
  const UnpackedBundle* reference = nullptr;
  for (const UnpackedBundle& m : models) {
    if (m.manifest.precision == Precision::fp32) reference = &m;
  }
  if (!reference) throw UsageError("benchmark needs an fp32 bundle as the reference");
  for (std::size_t i = 0; i < models.size(); ++i) {
    const UnpackedBundle& m = models[i];
    if (topology(m.model) != topology(reference->model) || m.manifest.labels != reference->manifest.labels ||
        m.manifest.input_shape != reference->manifest.input_shape) {
      throw UsageError("bundle " + m.manifest.name + "@" + m.manifest.version +
                       " does not share topology, labels and input shape with the fp32 bundle");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (models[j].manifest.precision == m.manifest.precision) {
        throw UsageError("two bundles have precision " + std::string(to_string(m.manifest.precision)));
      }
    }
  }

  std::vector<Tensor> inputs;
  inputs.reserve(images.size());
  for (const Tensor& img : images) inputs.push_back(vqi::preprocess(img, reference->manifest.input_shape));

  std::vector<std::size_t> reference_top1;
  for (const Tensor& x : inputs) reference_top1.push_back(argmax(vqi::forward(reference->model, x).output));

  BenchmarkReport report;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const UnpackedBundle& m = models[i];
    PrecisionReport r;
    r.precision = m.manifest.precision;
    r.model_bytes = bundles[i].size();
    std::size_t agree = 0;
    for (std::size_t run = 0; run < runs; ++run) {
      for (std::size_t s = 0; s < inputs.size(); ++s) {
        const auto start = std::chrono::steady_clock::now();
        const ForwardResult fr = vqi::forward(m.model, inputs[s]);
        const auto stop = std::chrono::steady_clock::now();
        r.samples.push_back({run, s, std::chrono::duration<double, std::milli>(stop - start).count(), fr.counters});
        if (run == 0 && argmax(fr.output) == reference_top1[s]) ++agree;
      }
    }
    r.agreement = static_cast<double>(agree) / static_cast<double>(inputs.size());
    report.precisions.push_back(std::move(r));
  }
  std::sort(report.precisions.begin(), report.precisions.end(),
            [](const auto& a, const auto& b) { return a.precision < b.precision; });
  return report;
}

void write_csv(const BenchmarkReport& report, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const PrecisionReport& r : report.precisions) {
    for (const BenchmarkSample& s : r.samples) {
      out << to_string(r.precision) << ',' << s.run << ',' << s.sample << ',' << format_double(s.latency_ms) << ','
          << s.counters.int_mul_adds << ',' << s.counters.float_mul_adds << ',' << s.counters.range_scans << '\n';
    }
  }
}

BenchmarkReport parse_csv(std::istream& in) {
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("missing benchmark CSV header", 0);
  offset += line.size() + 1;

  BenchmarkReport report;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 7) throw ParseError("expected 7 CSV fields, got " + std::to_string(fields.size()), offset);
    try {
      const Precision p = parse_precision(fields[0]);
      BenchmarkSample s;
      s.run = std::stoull(fields[1]);
      s.sample = std::stoull(fields[2]);
      s.latency_ms = std::stod(fields[3]);
      s.counters.int_mul_adds = std::stoull(fields[4]);
      s.counters.float_mul_adds = std::stoull(fields[5]);
      s.counters.range_scans = std::stoull(fields[6]);
      if (report.precisions.empty() || report.precisions.back().precision != p) {
        report.precisions.push_back(PrecisionReport{p, {}, 0, 1.0});
      }
      report.precisions.back().samples.push_back(s);
    } catch (const std::logic_error& e) {
      throw ParseError("malformed CSV row '" + line + "'", offset);
    } catch (const Error& e) {
      throw ParseError(e.what(), offset);
    }
    offset += line.size() + 1;
  }
  return report;
}

void print_table(const BenchmarkReport& report, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-13s %5s %10s %10s %10s %12s %14s %14s %11s %9s\n", "precision", "runs", "mean_ms",
                "min_ms", "max_ms", "bytes", "int_mul_adds", "float_mul_adds", "range_scans", "agreement");
  out << buf;
  const PrecisionReport* fp32 = nullptr;
  for (const PrecisionReport& r : report.precisions) {
    if (r.precision == Precision::fp32) fp32 = &r;
  }
  for (const PrecisionReport& r : report.precisions) {
    const std::size_t n = std::max<std::size_t>(r.samples.size(), 1);
    const OpCounters t = r.totals();
    std::snprintf(buf, sizeof buf, "%-13s %5zu %10.4f %10.4f %10.4f %12llu %14llu %14llu %11llu %9.4f\n",
                  std::string(to_string(r.precision)).c_str(), r.runs(), r.mean_latency_ms(), r.min_latency_ms(),
                  r.max_latency_ms(), static_cast<unsigned long long>(r.model_bytes),
                  static_cast<unsigned long long>(t.int_mul_adds / n),
                  static_cast<unsigned long long>(t.float_mul_adds / n),
                  static_cast<unsigned long long>(t.range_scans / n), r.agreement);
    out << buf;
  }
  out << "(op counters are per inference)\n";
  if (fp32) {
    for (const PrecisionReport& r : report.precisions) {
      if (r.precision == Precision::fp32 || r.model_bytes == 0) continue;
      std::snprintf(buf, sizeof buf, "size ratio fp32/%s: %.4f   latency ratio: %.3f\n",
                    std::string(to_string(r.precision)).c_str(),
                    static_cast<double>(fp32->model_bytes) / static_cast<double>(r.model_bytes),
                    fp32->mean_latency_ms() / std::max(r.mean_latency_ms(), 1e-12));
      out << buf;
    }
  }
}

}  // namespace emlops
