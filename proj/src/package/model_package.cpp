#include "emlops/model_package.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>

#include "emlops/errors.hpp"
#include "emlops/overloaded.hpp"
#include "emlops/timeutil.hpp"

namespace emlops {

namespace {

static_assert(std::endian::native == std::endian::little, "blob encoding assumes a little-endian host");
static_assert(std::numeric_limits<float>::is_iec559);

constexpr char kMagic[4] = {'E', 'M', 'L', 'M'};
constexpr std::uint16_t kFormatVersion = 1;

enum class LayerTag : std::uint8_t { dense = 1, conv2d = 2, relu = 3, max_pool2d = 4, flatten = 5, softmax = 6 };

class BlobWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint64_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("value does not fit u32");
    const auto x = static_cast<std::uint32_t>(v);
    raw(&x, 4);
  }
  void i32(std::int32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }

  void shape(const Shape& s) {
    u32(s.size());
    for (std::size_t d : s) u32(d);
  }
  void tensor(const Tensor& t) {
    shape(t.shape());
    raw(t.data().data(), t.size() * sizeof(float));
  }
  void qtensor(const QTensor& q) {
    shape(q.shape());
    f32(q.params().scale);
    i32(q.params().zero_point);
    raw(q.qdata().data(), q.size());
  }
  void bias(const BiasStorage& b) {
    std::visit(Overloaded{
                   [&](const std::vector<std::int32_t>& v) {
                     shape({v.size()});
                     raw(v.data(), v.size() * sizeof(std::int32_t));
                   },
                   [&](const std::vector<float>& v) {
                     shape({v.size()});
                     raw(v.data(), v.size() * sizeof(float));
                   },
               },
               b);
  }
  void string(std::string_view s) {
    u32(s.size());
    raw(s.data(), s.size());
  }

  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class BlobReader {
 public:
  BlobReader(std::span<const std::uint8_t> data, std::size_t base) : data_(data), base_(base) {}

  std::size_t offset() const { return base_ + pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, offset()); }

  void raw(void* p, std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) fail(std::string("truncated ") + what);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8(const char* what) {
    std::uint8_t v;
    raw(&v, 1, what);
    return v;
  }
  std::uint16_t u16(const char* what) {
    std::uint16_t v;
    raw(&v, 2, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  std::int32_t i32(const char* what) {
    std::int32_t v;
    raw(&v, 4, what);
    return v;
  }
  float f32(const char* what) {
    float v;
    raw(&v, 4, what);
    return v;
  }

  // Guards allocations sized from untrusted counts.
  void require(std::uint64_t count, std::size_t elem_size, const char* what) {
    if (elem_size != 0 && count > (data_.size() - pos_) / elem_size) fail(std::string("truncated ") + what);
  }

  Shape shape(const char* what) {
    const std::uint32_t rank = u32(what);
    require(rank, 4, what);
    Shape s(rank);
    std::uint64_t n = rank ? 1 : 0;
    for (auto& d : s) {
      d = u32(what);
      if (d == 0) fail(std::string("zero dimension in ") + what);
      n *= d;
      if (n > data_.size()) fail(std::string("implausible size for ") + what);
    }
    if (rank == 0) fail(std::string("empty shape for ") + what);
    return s;
  }
  Tensor tensor(const char* what) {
    Shape s = shape(what);
    const std::size_t n = element_count(s);
    require(n, sizeof(float), what);
    std::vector<float> v(n);
    raw(v.data(), n * sizeof(float), what);
    for (float f : v) {
      if (!std::isfinite(f)) fail(std::string("non-finite value in ") + what);
    }
    return Tensor(std::move(s), std::move(v));
  }
  QTensor qtensor(const char* what) {
    Shape s = shape(what);
    QuantizationParams p;
    p.scale = f32(what);
    p.zero_point = i32(what);
    p.scheme = QuantScheme::symmetric;
    const std::size_t n = element_count(s);
    require(n, 1, what);
    std::vector<std::int8_t> v(n);
    raw(v.data(), n, what);
    const std::size_t at = offset();
    try {
      return QTensor(std::move(s), std::move(v), p);
    } catch (const Error& e) {
      throw ParseError(std::string(what) + ": " + e.what(), at);
    }
  }
  BiasStorage bias(bool int32, const char* what) {
    const Shape s = shape(what);
    if (s.size() != 1) fail(std::string("bias must be a vector in ") + what);
    if (int32) {
      require(s[0], 4, what);
      std::vector<std::int32_t> v(s[0]);
      raw(v.data(), v.size() * 4, what);
      return v;
    }
    require(s[0], 4, what);
    std::vector<float> v(s[0]);
    raw(v.data(), v.size() * 4, what);
    return v;
  }
  std::string string(const char* what) {
    const std::uint32_t n = u32(what);
    require(n, 1, what);
    std::string s(n, '\0');
    raw(s.data(), n, what);
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

std::uint8_t precision_code(Precision p) {
  switch (p) {
    case Precision::fp32: return 0;
    case Precision::int8_static: return 1;
    case Precision::int8_dynamic: return 2;
  }
  return 0;
}

template <class L>
void write_common_layer(BlobWriter& w, const L& layer) {
  std::visit(Overloaded{
                 [&](const ReLU&) { w.u8(static_cast<std::uint8_t>(LayerTag::relu)); },
                 [&](const MaxPool2D& p) {
                   w.u8(static_cast<std::uint8_t>(LayerTag::max_pool2d));
                   w.u32(p.window);
                 },
                 [&](const Flatten&) { w.u8(static_cast<std::uint8_t>(LayerTag::flatten)); },
                 [&](const Softmax&) { w.u8(static_cast<std::uint8_t>(LayerTag::softmax)); },
                 [](const auto&) {},
             },
             layer);
}

void write_header(BlobWriter& w, Precision precision, const Shape& input, const std::vector<std::string>& labels,
                  std::size_t layer_count) {
  w.raw(kMagic, sizeof kMagic);
  w.u16(kFormatVersion);
  w.u8(precision_code(precision));
  w.shape(input);
  w.u32(labels.size());
  for (const auto& l : labels) w.string(l);
  w.u32(layer_count);
}

}  // namespace

std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::fp32: return "fp32";
    case Precision::int8_static: return "int8-static";
    case Precision::int8_dynamic: return "int8-dynamic";
  }
  return "fp32";
}

Precision parse_precision(std::string_view s) {
  if (s == "fp32") return Precision::fp32;
  if (s == "int8-static") return Precision::int8_static;
  if (s == "int8-dynamic") return Precision::int8_dynamic;
  throw ManifestError("unknown precision '" + std::string(s) + "'");
}

SemVer SemVer::parse(std::string_view text) {
  SemVer v;
  std::uint64_t* parts[3] = {&v.major, &v.minor, &v.patch};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 3; ++i) {
    if (p == end || *p < '0' || *p > '9') throw VersionError("invalid version '" + std::string(text) + "'");
    auto [next, ec] = std::from_chars(p, end, *parts[i]);
    // Leading zeros would give two spellings of one version.
    if (ec != std::errc{} || (*p == '0' && next - p > 1)) throw VersionError("invalid version '" + std::string(text) + "'");
    p = next;
    if (i < 2) {
      if (p == end || *p != '.') throw VersionError("invalid version '" + std::string(text) + "'");
      ++p;
    }
  }
  if (p != end) throw VersionError("invalid version '" + std::string(text) + "'");
  return v;
}

std::string SemVer::str() const {
  return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

std::strong_ordering compare_versions(std::string_view a, std::string_view b) {
  return SemVer::parse(a) <=> SemVer::parse(b);
}

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::ok: return "OK";
    case Condition::degraded: return "DEGRADED";
    case Condition::critical: return "CRITICAL";
    case Condition::unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

Condition parse_condition(std::string_view s) {
  if (s == "OK") return Condition::ok;
  if (s == "DEGRADED") return Condition::degraded;
  if (s == "CRITICAL") return Condition::critical;
  if (s == "UNKNOWN") return Condition::unknown;
  throw ManifestError("unknown condition '" + std::string(s) + "'");
}

void ArtifactManifest::validate() const {
  if (name.empty() || name.size() > 128 ||
      !std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
               c == '_' || c == '.';
      }) ||
      name == "." || name == "..") {
    throw ManifestError("artifact name '" + name + "' must be 1-128 characters of [A-Za-z0-9._-]");
  }
  SemVer::parse(version);
  if (checksum.size() != 64 || !std::all_of(checksum.begin(), checksum.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
      })) {
    throw ManifestError("checksum must be 64 lowercase hex characters");
  }
  if (labels.empty()) throw ManifestError("manifest needs at least one label");
  for (const auto& l : labels) {
    if (!condition_map.contains(l)) throw ManifestError("label '" + l + "' missing from condition_map");
  }
  if (condition_map.size() != labels.size()) throw ManifestError("condition_map names labels the model lacks");
  if (input_shape.empty()) throw ManifestError("manifest input_shape is empty");
  if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) {
    throw ManifestError("confidence_floor must lie in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const ArtifactManifest& m) {
  nlohmann::json conditions = nlohmann::json::object();
  for (const auto& [label, c] : m.condition_map) conditions[label] = to_string(c);
  j = nlohmann::json{
      {"name", m.name},
      {"version", m.version},
      {"precision", to_string(m.precision)},
      {"input_shape", m.input_shape},
      {"labels", m.labels},
      {"condition_map", conditions},
      {"confidence_floor", m.confidence_floor},
      {"checksum", m.checksum},
      {"created_at", m.created_at},
      {"byte_size", m.byte_size},
  };
}

std::string ArtifactManifest::to_canonical_json() const {
  return nlohmann::json(*this).dump();
}

ArtifactManifest ArtifactManifest::from_json(const nlohmann::json& j) {
  try {
    ArtifactManifest m;
    m.name = j.at("name").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.precision = parse_precision(j.at("precision").get<std::string>());
    m.input_shape = j.at("input_shape").get<Shape>();
    m.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& [label, c] : j.at("condition_map").items()) {
      m.condition_map[label] = parse_condition(c.get<std::string>());
    }
    m.confidence_floor = j.value("confidence_floor", 0.5);
    m.checksum = j.at("checksum").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    m.byte_size = j.at("byte_size").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
}

Precision precision_of(const ModelVariant& model) {
  if (const auto* q = std::get_if<QuantizedModel>(&model)) {
    return q->mode() == QuantMode::static_activations ? Precision::int8_static : Precision::int8_dynamic;
  }
  return Precision::fp32;
}

const std::vector<std::string>& labels_of(const ModelVariant& model) {
  return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.labels(); }, model);
}

const Shape& input_shape_of(const ModelVariant& model) {
  return std::visit([](const auto& m) -> const Shape& { return m.input_shape(); }, model);
}

Bytes serialize_model(const ModelVariant& model) {
  BlobWriter w;
  std::visit(Overloaded{
                 [&](const ModelGraph& g) {
                   write_header(w, Precision::fp32, g.input_shape(), g.labels(), g.layers().size());
                   for (const Layer& layer : g.layers()) {
                     if (const auto* d = std::get_if<Dense>(&layer)) {
                       w.u8(static_cast<std::uint8_t>(LayerTag::dense));
                       w.tensor(d->weights);
                       w.tensor(d->bias);
                     } else if (const auto* c = std::get_if<Conv2D>(&layer)) {
                       w.u8(static_cast<std::uint8_t>(LayerTag::conv2d));
                       w.u32(c->stride);
                       w.u32(c->padding);
                       w.tensor(c->kernels);
                       w.tensor(c->bias);
                     } else {
                       write_common_layer(w, layer);
                     }
                   }
                 },
                 [&](const QuantizedModel& q) {
                   write_header(w, precision_of(q), q.input_shape(), q.labels(), q.layers().size());
                   for (const QLayer& layer : q.layers()) {
                     if (const auto* d = std::get_if<QDense>(&layer)) {
                       w.u8(static_cast<std::uint8_t>(LayerTag::dense));
                       w.qtensor(d->weights);
                       w.bias(d->bias);
                     } else if (const auto* c = std::get_if<QConv2D>(&layer)) {
                       w.u8(static_cast<std::uint8_t>(LayerTag::conv2d));
                       w.u32(c->stride);
                       w.u32(c->padding);
                       w.qtensor(c->kernels);
                       w.bias(c->bias);
                     } else {
                       write_common_layer(w, layer);
                     }
                   }
                   w.u32(q.activation_params().size());
                   for (const QuantizationParams& p : q.activation_params()) {
                     w.f32(p.scale);
                     w.i32(p.zero_point);
                   }
                 },
             },
             model);
  return w.take();
}

namespace {

ModelVariant deserialize_at(std::span<const std::uint8_t> blob, std::size_t base) {
  BlobReader r(blob, base);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad magic, expected EMLM", base);
  const std::size_t version_at = r.offset();
  if (r.u16("format version") != kFormatVersion) throw ParseError("unsupported format version", version_at);
  const std::size_t precision_at = r.offset();
  const std::uint8_t code = r.u8("precision");
  if (code > 2) throw ParseError("unknown precision code " + std::to_string(code), precision_at);
  const Precision precision = code == 0 ? Precision::fp32 : code == 1 ? Precision::int8_static : Precision::int8_dynamic;
  Shape input = r.shape("input shape");
  const std::uint32_t label_count = r.u32("label count");
  r.require(label_count, 4, "labels");
  std::vector<std::string> labels;
  for (std::uint32_t i = 0; i < label_count; ++i) labels.push_back(r.string("label"));
  const std::uint32_t layer_count = r.u32("layer count");
  r.require(layer_count, 1, "layers");

  std::vector<Layer> fp_layers;
  std::vector<QLayer> q_layers;
  const bool quantized = precision != Precision::fp32;
  const bool int_bias = precision == Precision::int8_static;
  auto add_plain = [&](auto layer) {
    if (quantized) {
      q_layers.emplace_back(layer);
    } else {
      fp_layers.emplace_back(layer);
    }
  };
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::size_t tag_at = r.offset();
    const auto tag = static_cast<LayerTag>(r.u8("layer tag"));
    switch (tag) {
      case LayerTag::dense:
        if (quantized) {
          QTensor w = r.qtensor("dense weights");
          q_layers.push_back(QDense{std::move(w), r.bias(int_bias, "dense bias")});
        } else {
          Tensor w = r.tensor("dense weights");
          fp_layers.push_back(Dense{std::move(w), r.tensor("dense bias")});
        }
        break;
      case LayerTag::conv2d: {
        const std::uint32_t stride = r.u32("conv stride");
        const std::uint32_t padding = r.u32("conv padding");
        if (quantized) {
          QTensor k = r.qtensor("conv kernels");
          q_layers.push_back(QConv2D{std::move(k), r.bias(int_bias, "conv bias"), stride, padding});
        } else {
          Tensor k = r.tensor("conv kernels");
          fp_layers.push_back(Conv2D{std::move(k), r.tensor("conv bias"), stride, padding});
        }
        break;
      }
      case LayerTag::relu:
        add_plain(ReLU{});
        break;
      case LayerTag::max_pool2d:
        add_plain(MaxPool2D{r.u32("pool window")});
        break;
      case LayerTag::flatten:
        add_plain(Flatten{});
        break;
      case LayerTag::softmax:
        add_plain(Softmax{});
        break;
      default:
        throw ParseError("unknown layer tag " + std::to_string(static_cast<int>(tag)), tag_at);
    }
  }

  std::vector<QuantizationParams> sites;
  if (quantized) {
    const std::uint32_t site_count = r.u32("activation site count");
    r.require(site_count, 8, "activation sites");
    for (std::uint32_t i = 0; i < site_count; ++i) {
      QuantizationParams p;
      p.scale = r.f32("activation scale");
      p.zero_point = r.i32("activation zero point");
      p.scheme = QuantScheme::asymmetric;
      sites.push_back(p);
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after model");

  const std::size_t end = r.offset();
  try {
    if (!quantized) return ModelGraph(std::move(input), std::move(fp_layers), std::move(labels));
    return QuantizedModel(std::move(input), std::move(q_layers), std::move(labels),
                          precision == Precision::int8_static ? QuantMode::static_activations
                                                              : QuantMode::dynamic_activations,
                          std::move(sites));
  } catch (const Error& e) {
    throw ParseError(std::string("inconsistent model structure: ") + e.what(), end);
  }
}

struct Framing {
  nlohmann::json manifest_json;
  std::span<const std::uint8_t> blob;
  std::size_t blob_offset;
};

Framing split_bundle(std::span<const std::uint8_t> bundle) {
  if (bundle.size() < 4) throw ParseError("bundle shorter than its length prefix", bundle.size());
  std::uint32_t len;
  std::memcpy(&len, bundle.data(), 4);
  if (bundle.size() - 4 < len) throw ParseError("manifest extends past end of bundle", bundle.size());
  Framing f;
  try {
    f.manifest_json = nlohmann::json::parse(bundle.begin() + 4, bundle.begin() + 4 + len);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), 4 + (e.byte > 0 ? e.byte - 1 : 0));
  }
  f.blob_offset = 4 + len;
  f.blob = bundle.subspan(f.blob_offset);
  return f;
}

ArtifactManifest verify(const Framing& f) {
  ArtifactManifest m = ArtifactManifest::from_json(f.manifest_json);
  m.validate();
  if (m.byte_size != f.blob.size()) {
    throw IntegrityError("weights blob is " + std::to_string(f.blob.size()) + " bytes, manifest says " +
                         std::to_string(m.byte_size));
  }
  const std::string actual = sha256_hex(f.blob);
  if (actual != m.checksum) throw IntegrityError("checksum mismatch: manifest " + m.checksum + ", blob " + actual);
  return m;
}

}  // namespace

ModelVariant deserialize_model(std::span<const std::uint8_t> blob) {
  return deserialize_at(blob, 0);
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0xf];
  }
  return out;
}

Bytes ArtifactBundle::to_bytes() const {
  const std::string json = manifest.to_canonical_json();
  Bytes out;
  out.reserve(4 + json.size() + blob.size());
  const auto len = static_cast<std::uint32_t>(json.size());
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + 4);
  out.insert(out.end(), json.begin(), json.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

ArtifactBundle pack(const ModelVariant& model, const PackOptions& options) {
  ArtifactBundle bundle;
  bundle.blob = serialize_model(model);
  ArtifactManifest& m = bundle.manifest;
  m.name = options.name;
  m.version = options.version;
  m.precision = precision_of(model);
  m.input_shape = input_shape_of(model);
  m.labels = labels_of(model);
  m.condition_map = options.condition_map;
  m.confidence_floor = options.confidence_floor;
  m.checksum = sha256_hex(bundle.blob);
  m.created_at = options.created_at.empty() ? format_utc(std::chrono::system_clock::now()) : options.created_at;
  m.byte_size = bundle.blob.size();
  m.validate();
  return bundle;
}

UnpackedBundle unpack(std::span<const std::uint8_t> bundle) {
  const Framing f = split_bundle(bundle);
  ArtifactManifest m = verify(f);
  ModelVariant model = deserialize_at(f.blob, f.blob_offset);
  if (precision_of(model) != m.precision || labels_of(model) != m.labels || input_shape_of(model) != m.input_shape) {
    throw IntegrityError("manifest does not describe the weights blob (precision, labels or input shape differ)");
  }
  return {std::move(m), std::move(model)};
}

ArtifactManifest read_verified_manifest(std::span<const std::uint8_t> bundle) {
  return verify(split_bundle(bundle));
}

}  // namespace emlops
