#include <gtest/gtest.h>

#include <cstring>

#include "emlops/errors.hpp"
#include "emlops/model_package.hpp"
#include "support.hpp"

using namespace emlops;
using emlops::testing::pack_bytes;
using emlops::testing::small_conv_model;

namespace {

PackOptions options(const std::string& version = "1.0.0") {
  return PackOptions{"toy-vqi", version, emlops::testing::three_class_conditions(), 0.5, "2024-01-01T00:00:00.000Z"};
}

std::uint32_t manifest_length(const Bytes& bundle) {
  std::uint32_t n = 0;
  std::memcpy(&n, bundle.data(), 4);
  return n;
}

QuantizedModel static_variant(const ModelGraph& m) {
  Xoshiro256 rng(77);
  std::vector<Tensor> cal;
  for (int i = 0; i < 4; ++i) cal.push_back(emlops::testing::random_tensor(rng, m.input_shape(), 0, 1));
  return quantize_model_static(m, calibrate(m, cal));
}

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(SemVer, NumericOrdering) {
  EXPECT_EQ(compare_versions("1.2.0", "1.10.0"), std::strong_ordering::less);
  EXPECT_EQ(compare_versions("2.0.0", "1.9.9"), std::strong_ordering::greater);
  EXPECT_EQ(compare_versions("1.0.0", "1.0.0"), std::strong_ordering::equal);
  EXPECT_EQ(SemVer::parse("1.0.9").next_patch().str(), "1.0.10");
  for (const char* bad : {"", "1.0", "1.0.0.0", "01.0.0", "a.b.c", "1.-1.0", "1.0.0-rc1", " 1.0.0"}) {
    EXPECT_THROW(SemVer::parse(bad), VersionError) << bad;
  }
}

TEST(Pack, DeterministicAndRoundTrips) {
  const ModelGraph m = small_conv_model(1);
  const Bytes a = pack_bytes(m, "1.0.0"), b = pack_bytes(m, "1.0.0");
  EXPECT_EQ(a, b);
  const UnpackedBundle u = unpack(a);
  EXPECT_EQ(std::get<ModelGraph>(u.model), m);
  EXPECT_EQ(u.manifest.precision, Precision::fp32);
  EXPECT_EQ(u.manifest.labels, m.labels());
  EXPECT_EQ(u.manifest.checksum.size(), 64u);
  EXPECT_EQ(serialize_model(u.model), serialize_model(ModelVariant{m}));
  // unpack then pack reproduces the bytes.
  EXPECT_EQ(pack(u.model, options()).to_bytes(), a);

  const QuantizedModel q = static_variant(m);
  const UnpackedBundle uq = unpack(pack_bytes(q, "1.0.1"));
  EXPECT_EQ(std::get<QuantizedModel>(uq.model), q);
  EXPECT_EQ(uq.manifest.precision, Precision::int8_static);
  const UnpackedBundle ud = unpack(pack_bytes(quantize_model_dynamic(m), "1.0.2"));
  EXPECT_EQ(ud.manifest.precision, Precision::int8_dynamic);
}

TEST(Pack, LayoutIsLengthManifestBlob) {
  const ModelGraph m = small_conv_model(2);
  const ArtifactBundle bundle = pack(m, options());
  const Bytes bytes = bundle.to_bytes();
  const std::uint32_t n = manifest_length(bytes);
  const std::string manifest_json(bytes.begin() + 4, bytes.begin() + 4 + n);
  EXPECT_EQ(manifest_json, bundle.manifest.to_canonical_json());
  EXPECT_EQ(Bytes(bytes.begin() + 4 + n, bytes.end()), bundle.blob);
  EXPECT_EQ(bundle.manifest.checksum, sha256_hex(bundle.blob));
  EXPECT_EQ(bundle.manifest.byte_size, bundle.blob.size());
  EXPECT_EQ(std::string(bundle.blob.begin(), bundle.blob.begin() + 4), "EMLM");
  // Canonical: keys sorted, no whitespace.
  const auto parsed = nlohmann::json::parse(manifest_json);
  EXPECT_EQ(parsed.dump(), manifest_json);
}

TEST(Pack, RejectsBadManifestFields) {
  const ModelGraph m = small_conv_model(3);
  EXPECT_THROW(pack(m, options("1.0")), VersionError);
  PackOptions missing = options();
  missing.condition_map.erase("pole_critical");
  EXPECT_THROW(pack(m, missing), ManifestError);
  PackOptions floor = options();
  floor.confidence_floor = 1.5;
  EXPECT_THROW(pack(m, floor), ManifestError);
}

TEST(Unpack, AnySingleBlobFlipIsDetected) {
  const Bytes good = pack_bytes(small_conv_model(4), "1.0.0");
  const std::size_t blob_start = 4 + manifest_length(good);
  Xoshiro256 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    Bytes bad = good;
    const std::size_t pos = blob_start + rng.below(good.size() - blob_start);
    bad[pos] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    EXPECT_THROW(unpack(bad), IntegrityError) << "flip at " << pos;
  }
}

TEST(Unpack, FramingErrors) {
  const Bytes good = pack_bytes(small_conv_model(5), "1.0.0");
  EXPECT_THROW(unpack(Bytes(good.begin(), good.begin() + 3)), ParseError);
  EXPECT_THROW(unpack(Bytes(good.begin(), good.end() - 7)), IntegrityError);
  Bytes trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(unpack(trailing), IntegrityError);
  Bytes huge = good;
  huge[3] = 0x7f;
  EXPECT_THROW(unpack(huge), ParseError);
  Bytes json_broken = good;
  json_broken[4] = '[';
  EXPECT_THROW(unpack(json_broken), Error);
}

TEST(Deserialize, TruncatedBlobReportsOffset) {
  const Bytes blob = serialize_model(ModelVariant{small_conv_model(6)});
  for (std::size_t cut : {std::size_t{2}, std::size_t{5}, blob.size() / 2, blob.size() - 1}) {
    try {
      deserialize_model(std::span(blob).first(cut));
      FAIL() << "no error at cut " << cut;
    } catch (const ParseError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
  Bytes magic = blob;
  magic[0] = 'X';
  try {
    deserialize_model(magic);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  Bytes extra = blob;
  extra.push_back(1);
  EXPECT_THROW(deserialize_model(extra), ParseError);
}

TEST(Manifest, JsonRoundTripAndValidation) {
  const ArtifactManifest m = pack(small_conv_model(7), options("3.2.1")).manifest;
  EXPECT_EQ(ArtifactManifest::from_json(nlohmann::json::parse(m.to_canonical_json())), m);
  EXPECT_EQ(read_verified_manifest(pack_bytes(small_conv_model(7), "3.2.1")), m);
  ArtifactManifest bad = m;
  bad.checksum = "ABC";
  EXPECT_THROW(bad.validate(), ManifestError);
  bad = m;
  bad.labels.clear();
  EXPECT_THROW(bad.validate(), ManifestError);
  EXPECT_EQ(parse_precision("int8-static"), Precision::int8_static);
  EXPECT_EQ(to_string(Precision::int8_dynamic), "int8-dynamic");
  EXPECT_EQ(parse_condition("DEGRADED"), Condition::degraded);
}

TEST(SizeReport, ToyBundlesShrinkAboutFourfold) {
  const auto& f = emlops::testing::toy_fixture();
  const ModelGraph& m = f.trained.model;
  EXPECT_GE(m.parameter_count(), 100000u);
  const auto cal = toy::calibration_inputs(f.data, m.input_shape());
  const Bytes fp32 = pack_bytes(m, "1.0.0");
  const Bytes int8 = pack_bytes(quantize_model_static(m, calibrate(m, cal)), "1.0.1");
  const double ratio = size_report(fp32.size(), int8.size());
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.0);
}
