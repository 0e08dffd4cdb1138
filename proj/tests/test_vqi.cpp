#include <gtest/gtest.h>

#include <sstream>

#include "emlops/benchmark.hpp"
#include "emlops/errors.hpp"
#include "emlops/persistence.hpp"
#include "emlops/timeutil.hpp"
#include "emlops/toolkit.hpp"
#include "emlops/toy.hpp"
#include "emlops/vqi.hpp"
#include "support.hpp"

using namespace emlops;
using emlops::testing::TempDir;

namespace {

Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

Bytes ppm(const std::string& header, std::initializer_list<int> pixels) {
  Bytes b = bytes_of(header);
  for (int p : pixels) b.push_back(static_cast<std::uint8_t>(p));
  return b;
}

std::size_t input_error_offset(const Bytes& b) {
  try {
    vqi::decode_ppm(b);
  } catch (const InputError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no InputError";
  return 0;
}

}  // namespace

TEST(Ppm, DecodesBinaryFormats) {
  EXPECT_EQ(vqi::decode_ppm(ppm("P6\n1 1\n255\n", {255, 255, 255})), Tensor({3, 1, 1}, {255, 255, 255}));
  EXPECT_EQ(vqi::decode_ppm(ppm("P5\n2 1\n255\n", {0, 255})), Tensor({1, 1, 2}, {0, 255}));
  // Channel-major: pixel (r,g,b) interleaving becomes planes.
  EXPECT_EQ(vqi::decode_ppm(ppm("P6 2 1 255\n", {1, 2, 3, 4, 5, 6})), Tensor({3, 1, 2}, {1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(vqi::decode_ppm(ppm("P5\n# comment\n1 1\n255\n", {9})), Tensor({1, 1, 1}, {9}));
}

TEST(Ppm, RejectsWithOffsets) {
  EXPECT_EQ(input_error_offset(bytes_of("P3\n1 1\n255\n255 255 255\n")), 0u);
  // Truncation is reported where the data runs out.
  EXPECT_EQ(input_error_offset(ppm("P6\n1 1\n255\n", {1, 2})), 13u);
  EXPECT_EQ(input_error_offset(bytes_of("P6\n1 1\n65535\n")), 7u);
  EXPECT_EQ(input_error_offset(bytes_of("P6\n0 1\n255\n")), 3u);
  EXPECT_THROW(vqi::decode_ppm(bytes_of("P6\n99999999999 99999999999\n255\n")), InputError);
  EXPECT_THROW(vqi::decode_ppm(Bytes{}), InputError);
}

TEST(Ppm, EncodeRoundTripsBytes) {
  Xoshiro256 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9);
    Bytes b = bytes_of("P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n");
    for (std::size_t i = 0; i < 3 * h * w; ++i) b.push_back(static_cast<std::uint8_t>(rng.below(256)));
    EXPECT_EQ(vqi::encode_ppm(vqi::decode_ppm(b)), b);
  }
  EXPECT_THROW(vqi::encode_ppm(Tensor({3, 1, 1}, {1.5f, 0, 0})), Error);
}

TEST(Preprocess, ResizeAndScale) {
  const Tensor img({1, 2, 2}, {0, 51, 102, 255});
  EXPECT_EQ(vqi::preprocess(img, {1, 2, 2}), Tensor({1, 2, 2}, {0, 0.2f, 0.4f, 1.0f}));

  Tensor constant({3, 7, 5});
  for (float& v : constant.data()) v = 128;
  const Tensor resized = vqi::preprocess(constant, {1, 3, 4});
  for (float v : resized.data()) EXPECT_FLOAT_EQ(v, 128.0f / 255.0f);

  Tensor checker({1, 4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) checker[i * 4 + j] = static_cast<float>(i * 4 + j);
  const Tensor small = vqi::resize_nearest(checker, 2, 2);
  // out[i,j] = in[floor(i*4/2), floor(j*4/2)]
  EXPECT_EQ(small, Tensor({1, 2, 2}, {0, 2, 8, 10}));

  EXPECT_THROW(vqi::preprocess(img, {1, 0, 2}), DimensionError);
}

TEST(Preprocess, ChannelHandlingAndIdempotentResize) {
  const Tensor rgb({3, 1, 1}, {30, 60, 90});
  EXPECT_FLOAT_EQ(vqi::preprocess(rgb, {1, 1, 1})[0], 60.0f / 255.0f);
  const Tensor grey({1, 1, 1}, {51});
  EXPECT_EQ(vqi::preprocess(grey, {3, 1, 1}), Tensor({3, 1, 1}, {0.2f, 0.2f, 0.2f}));
  Xoshiro256 rng(8);
  const Tensor x = emlops::testing::random_tensor(rng, {2, 5, 6}, 0, 1);
  EXPECT_EQ(vqi::resize_nearest(x, 5, 6), x);
  const Tensor once = vqi::resize_nearest(x, 3, 4);
  EXPECT_EQ(vqi::resize_nearest(once, 3, 4), once);
}

TEST(Postprocess, PicksTopClass) {
  const auto p = vqi::postprocess(Tensor::of({0.1f, 0.7f, 0.2f}), {"a", "b", "c"});
  EXPECT_EQ(p.label, "b");
  EXPECT_EQ(p.class_index, 1u);
  EXPECT_FLOAT_EQ(p.confidence, 0.7f);
  EXPECT_EQ(vqi::postprocess(Tensor::of({0.25f, 0.25f, 0.25f, 0.25f}), {"a", "b", "c", "d"}).label, "a");
  const auto single = vqi::postprocess(softmax(Tensor::of({-3.0f})), {"only"});
  EXPECT_EQ(single.label, "only");
  EXPECT_EQ(single.confidence, 1.0f);
  EXPECT_THROW(vqi::postprocess(Tensor::of({0.5f, 0.5f}), {"a"}), DimensionError);
}

TEST(MapCondition, FloorAndConfig) {
  const auto cmap = emlops::testing::three_class_conditions();
  vqi::ClassPrediction p{"pole_ok", 0, 0.95f, Tensor::of({0.95f, 0.05f})};
  EXPECT_EQ(vqi::map_condition(p, cmap, 0.5), Condition::ok);
  p.confidence = 0.4f;
  EXPECT_EQ(vqi::map_condition(p, cmap, 0.5), Condition::unknown);
  p.confidence = 0.5f;
  EXPECT_EQ(vqi::map_condition(p, cmap, 0.5), Condition::ok);
  p.label = "tower_rusty";
  p.confidence = 0.9f;
  EXPECT_THROW(vqi::map_condition(p, cmap, 0.5), ConfigError);
}

TEST(Pipeline, ToyClassZeroMapsToItsCondition) {
  const auto& f = emlops::testing::toy_fixture();
  const Bytes bundle = emlops::testing::pack_bytes(f.trained.model, "1.0.0");
  const auto artifact = vqi::LoadedArtifact::from_bundle(bundle);
  const auto cmap = emlops::testing::three_class_conditions();
  std::size_t hits = 0, zeros = 0;
  for (const auto& s : f.data.test) {
    if (s.label != 0) continue;
    ++zeros;
    const Bytes image = vqi::encode_ppm(toolkit::grey_to_rgb(s.image));
    const vqi::InferenceResult r = vqi::run_pipeline(artifact, image);
    EXPECT_EQ(r.model_version, "1.0.0");
    hits += r.prediction.class_index == 0 && r.condition == cmap.at(f.data.labels[0]);
  }
  EXPECT_GE(double(hits) / zeros, 0.95);
  EXPECT_THROW(vqi::run_pipeline(artifact, bytes_of("P3\n")), InputError);
  // toy.default label names line up with the test condition map
  EXPECT_EQ(f.data.labels, (std::vector<std::string>{"pole_ok", "pole_degraded", "pole_critical"}));
}

TEST(Pipeline, DefaultAssetIdIsHashPrefix) {
  const Bytes img = ppm("P5\n1 1\n255\n", {7});
  EXPECT_EQ(vqi::default_asset_id(img), "asset-" + sha256_hex(img).substr(0, 12));
}

TEST(Toy, DeterministicAndAccurate) {
  const auto& f = emlops::testing::toy_fixture();
  EXPECT_GE(f.trained.test_accuracy, 0.95);
  EXPECT_EQ(f.data.test.size(), 300u);
  const toy::TrainResult again = toy::train(toy::make_dataset({}), {}, 42);
  EXPECT_EQ(emlops::testing::pack_bytes(again.model, "1.0.0"), emlops::testing::pack_bytes(f.trained.model, "1.0.0"));

  toy::ToyDatasetSpec one;
  one.classes = 1;
  one.samples_per_class = 20;
  const toy::ToyDataset d1 = toy::make_dataset(one);
  toy::TrainOptions quick;
  quick.epochs = 5;
  quick.hidden = 16;
  EXPECT_EQ(toy::accuracy(toy::train(d1, quick, 1).model, d1.test), 1.0);

  toy::ToyDatasetSpec bad;
  bad.classes = 0;
  EXPECT_THROW(bad.validate(), Error);
  toy::TrainOptions wild = quick;
  wild.learning_rate = 1e30f;
  EXPECT_THROW(toy::train(toy::make_dataset({}), wild, 1), TrainingError);
}

TEST(Toy, TrainedModelRecognizesClassZero) {
  const auto& f = emlops::testing::toy_fixture();
  const auto& s = f.data.test[0];
  ASSERT_EQ(s.label, 0u);
  EXPECT_EQ(argmax(forward_fp32(f.trained.model, toy::to_input(s, f.trained.model.input_shape())).output), 0u);
}

TEST(Persistence, AtomicWriteReplacesWholeFile) {
  TempDir dir;
  const auto path = dir / "sub/file.json";
  persist::atomic_write(path, std::string_view("first"));
  EXPECT_EQ(*persist::read_text(path), "first");
  persist::atomic_write(path, std::string_view("second, longer"));
  EXPECT_EQ(*persist::read_text(path), "second, longer");
  EXPECT_FALSE(persist::read_text(dir / "missing").has_value());
}

TEST(Persistence, CrashLeavesOldOrNewContent) {
  TempDir dir;
  const auto path = dir / "state.json";
  persist::atomic_write(path, std::string_view("old"));
  for (int n = 1; n <= 2; ++n) {
    {
      persist::ScopedFault fault(n);
      EXPECT_THROW(persist::atomic_write(path, std::string_view("new")), persist::SimulatedCrash);
    }
    const std::string seen = *persist::read_text(path);
    EXPECT_TRUE(seen == "old" || seen == "new") << seen;
    persist::remove_stale_temps(dir.path());
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) {
      EXPECT_FALSE(persist::is_temp_file(e.path())) << e.path();
    }
    persist::atomic_write(path, std::string_view("old"));
  }
  persist::FaultInjector::disarm();
  persist::atomic_write(path, std::string_view("x"));
  EXPECT_EQ(persist::FaultInjector::passed(), 2);
}

TEST(TimeUtil, FormatParseRoundTrip) {
  const TimePoint t = parse_utc("2024-02-29T23:59:58.123Z");
  EXPECT_EQ(format_utc(t), "2024-02-29T23:59:58.123Z");
  EXPECT_EQ(format_utc(parse_utc("1970-01-01T00:00:00Z")), "1970-01-01T00:00:00.000Z");
  EXPECT_THROW(parse_utc("2024-02-30"), BadRequestError);
  EXPECT_THROW(parse_utc("yesterday"), BadRequestError);
}

TEST(Toolkit, QuantizeBundleAndCreatedAt) {
  const ModelGraph m = emlops::testing::small_conv_model(12);
  const Bytes fp32 = emlops::testing::pack_bytes(m, "1.2.3");
  const ArtifactBundle dyn = toolkit::quantize_bundle(fp32, QuantMode::dynamic_activations, {}, std::nullopt, "2024-01-01T00:00:00.000Z");
  EXPECT_EQ(dyn.manifest.version, "1.2.4");
  EXPECT_EQ(dyn.manifest.precision, Precision::int8_dynamic);
  EXPECT_THROW(toolkit::quantize_bundle(fp32, QuantMode::static_activations, {}, std::nullopt, "x"), UsageError);
  EXPECT_THROW(toolkit::quantize_bundle(dyn.to_bytes(), QuantMode::dynamic_activations, {}, std::nullopt, "x"), UsageError);
  const Clock fixed = [] { return TimePoint(std::chrono::seconds(86400)); };
  EXPECT_EQ(toolkit::resolve_created_at(std::string("2020-05-05T01:02:03Z"), fixed), "2020-05-05T01:02:03.000Z");
  EXPECT_THROW(toolkit::resolve_created_at(std::string("nope"), fixed), UsageError);
  const auto cmap = toolkit::parse_condition_map("a=OK,b=CRITICAL");
  EXPECT_EQ(cmap.at("b"), Condition::critical);
  EXPECT_THROW(toolkit::parse_condition_map("a"), UsageError);
}

TEST(Toolkit, ImageDirectories) {
  TempDir dir;
  EXPECT_THROW(toolkit::load_image_dir(dir.path(), {1, 16, 16}), UsageError);
  toy::ToyDatasetSpec spec;
  const auto files = toolkit::write_toy_images(dir.path(), spec, 5);
  ASSERT_EQ(files.size(), 5u);
  EXPECT_EQ(files[0].filename(), "sample-000-pole_ok.ppm");
  const auto inputs = toolkit::load_image_dir(dir.path(), {1, 16, 16});
  ASSERT_EQ(inputs.size(), 5u);
  const toy::ToyDataset data = toy::make_dataset(spec);
  EXPECT_EQ(inputs[0], toy::to_input(data.test[0], {1, 16, 16}));
}

namespace {

std::vector<Bytes> toy_bundles() {
  const auto& f = emlops::testing::toy_fixture();
  const ModelGraph& m = f.trained.model;
  const auto cal = toy::calibration_inputs(f.data, m.input_shape());
  return {emlops::testing::pack_bytes(m, "1.0.0"),
          emlops::testing::pack_bytes(quantize_model_static(m, calibrate(m, cal)), "1.0.1"),
          emlops::testing::pack_bytes(quantize_model_dynamic(m), "1.0.2")};
}

std::vector<Tensor> toy_images(std::size_t n) {
  const auto& f = emlops::testing::toy_fixture();
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(f.data.test[i].image);
  return out;
}

}  // namespace

TEST(Benchmark, ReportShapeAndProxies) {
  const auto bundles = toy_bundles();
  const BenchmarkReport r = run_benchmark(bundles, toy_images(30), 2);
  ASSERT_EQ(r.precisions.size(), 3u);
  const auto& fp = r.at(Precision::fp32);
  const auto& st = r.at(Precision::int8_static);
  const auto& dy = r.at(Precision::int8_dynamic);
  EXPECT_EQ(fp.runs(), 2u);
  EXPECT_EQ(fp.samples.size(), 60u);
  EXPECT_EQ(fp.agreement, 1.0);
  EXPECT_GE(st.agreement, 0.9);
  EXPECT_GE(dy.agreement, 0.9);
  EXPECT_EQ(st.totals().range_scans, 0u);
  EXPECT_GT(dy.totals().range_scans, 0u);
  EXPECT_EQ(st.totals().int_mul_adds, dy.totals().int_mul_adds);
  EXPECT_EQ(fp.totals().int_mul_adds, 0u);
  EXPECT_EQ(fp.model_bytes, bundles[0].size());
  const double ratio = double(fp.model_bytes) / st.model_bytes;
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.0);
  EXPECT_LE(fp.min_latency_ms(), fp.mean_latency_ms());
  EXPECT_LE(fp.mean_latency_ms(), fp.max_latency_ms());
  std::ostringstream table;
  print_table(r, table);
  EXPECT_NE(table.str().find("int8-dynamic"), std::string::npos);
}

TEST(Benchmark, CsvRoundTrip) {
  const BenchmarkReport r = run_benchmark(toy_bundles(), toy_images(4), 3);
  std::ostringstream out;
  write_csv(r, out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "precision,run,sample,latency_ms,int_mul_adds,float_mul_adds,range_scans");
  std::istringstream in(out.str());
  const BenchmarkReport back = parse_csv(in);
  ASSERT_EQ(back.precisions.size(), r.precisions.size());
  for (std::size_t i = 0; i < r.precisions.size(); ++i) {
    EXPECT_EQ(back.precisions[i].precision, r.precisions[i].precision);
    EXPECT_EQ(back.precisions[i].samples, r.precisions[i].samples);
  }
  std::istringstream broken("precision,run,sample,latency_ms,int_mul_adds,float_mul_adds,range_scans\nfp32,0,0,abc,1,2,3\n");
  EXPECT_THROW(parse_csv(broken), ParseError);
}

TEST(Benchmark, RejectsMismatchedBundles) {
  auto bundles = toy_bundles();
  bundles.push_back(emlops::testing::pack_bytes(emlops::testing::small_conv_model(1), "9.9.9"));
  EXPECT_THROW(run_benchmark(bundles, toy_images(2), 1), UsageError);
  EXPECT_THROW(run_benchmark({toy_bundles()[1]}, toy_images(2), 1), UsageError);
}
