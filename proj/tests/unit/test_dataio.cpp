#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "echo2mri/dataio/image_io.hpp"
#include "echo2mri/dataio/prepare.hpp"
#include "echo2mri/dataio/sequence.hpp"
#include "echo2mri/dataio/transforms.hpp"
#include "echo2mri/dataio/triplets.hpp"
#include "echo2mri/phantom/writer.hpp"

using namespace echo2mri;
using namespace echo2mri::dataio;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("echo2mri_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image pattern(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(y, x) = static_cast<float>((y * 31 + x * 7) % 97) / 96.0f;
  return img;
}

FrameSequence numbered(int n, int h = 6, int w = 5) {
  FrameSequence seq;
  for (int t = 0; t < n; ++t) {
    Image img = Image::Constant(h, w, static_cast<float>(t));
    seq.emplace_back(img, t);
  }
  return seq;
}

}  // namespace

TEST(ImageIo, Png16RoundTripIsExactOnQuantizedValues) {
  const auto dir = scratch("png16");
  Image img = pattern(9, 13);
  for (auto& v : img.reshaped()) v = static_cast<float>(std::lround(v * 65535.0)) / 65535.0f;
  write_image(dir / "a.png", img);
  const Image back = read_image(dir / "a.png");
  EXPECT_TRUE((back == img).all());
  write_image(dir / "a.pgm", img);
  EXPECT_TRUE((read_image(dir / "a.pgm") == img).all());
  fs::remove_all(dir);
}

TEST(ImageIo, EightBitPngAndAsciiPgm) {
  const auto dir = scratch("png8");
  Image img(2, 3);
  img << 0.0f, 1.0f, 128.0f / 255.0f, 0.2f, 0.4f, 0.6f;
  detail::write_png(dir / "b.png", img, 8);
  const Image back = read_image(dir / "b.png");
  for (Eigen::Index i = 0; i < img.size(); ++i) EXPECT_NEAR(back.data()[i], img.data()[i], 0.5 / 255.0);
  {
    std::ofstream out(dir / "c.pgm");
    out << "P2\n# comment\n3 1\n10\n0 5 10\n";
  }
  const Image p2 = read_image(dir / "c.pgm");
  EXPECT_EQ(p2.cols(), 3);
  EXPECT_FLOAT_EQ(p2(0, 1), 0.5f);
  fs::remove_all(dir);
}

TEST(ImageIo, CorruptFileRaisesIngestionErrorWithPath) {
  const auto dir = scratch("corrupt");
  {
    std::ofstream out(dir / "bad.png", std::ios::binary);
    out << "\x89PNG\r\n\x1a\n garbage that is not a png stream";
  }
  try {
    read_image(dir / "bad.png");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(ExtractFrames, NumberedDirectoryInNaturalOrder) {
  const auto dir = scratch("numbered");
  // 1, 2, 3, 10, 20: lexical order would put 10 before 2.
  const int ids[] = {20, 3, 10, 1, 2};
  for (int id : ids) write_image(dir / ("img" + std::to_string(id) + ".png"), Image::Constant(4, 4, id / 32.0f));
  const auto seq = extract_frames(dir);
  ASSERT_EQ(seq.size(), 5u);
  const int expected[] = {1, 2, 3, 10, 20};
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(seq[t].time_index, t);
    EXPECT_NEAR(seq[t].pixels(0, 0), expected[t] / 32.0f, 1e-4);
  }
  fs::remove_all(dir);
}

TEST(ExtractFrames, EmptyOrMissingInputRaises) {
  const auto dir = scratch("empty");
  EXPECT_THROW(extract_frames(dir), IngestionError);
  EXPECT_THROW(extract_frames(dir / "nope"), IngestionError);
  fs::remove_all(dir);
}

TEST(ExtractFrames, MismatchedFrameSizesRaise) {
  const auto dir = scratch("sizes");
  write_image(dir / "f0.png", Image::Zero(4, 4));
  write_image(dir / "f1.png", Image::Zero(4, 5));
  EXPECT_THROW(extract_frames(dir), IngestionError);
  fs::remove_all(dir);
}

TEST(ExtractFrames, PhantomDirectoryReproducesGeneratorOutput) {
  const auto dir = scratch("phantom");
  phantom::PhantomConfig cfg;
  cfg.seed = 7;
  cfg.num_frames = 5;
  cfg.image_size = 48;
  const auto pair = phantom::generate_phantom_pair(cfg);
  phantom::write_phantom(dir, cfg, pair);
  const auto echo = extract_frames(dir);
  const auto mri = extract_frames(dir / "clean");
  ASSERT_EQ(echo.size(), 5u);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(echo[t], pair.corrupted[t]) << t;
    EXPECT_EQ(mri[t], pair.clean[t]) << t;
  }
  const auto m = read_manifest(dir / kManifestName);
  EXPECT_EQ(m.domain, "echo");
  ASSERT_TRUE(m.pairing.has_value());
  EXPECT_EQ(m.pairing->size(), 5u);
  EXPECT_EQ(m.extra.at("config").at("seed"), 7);
  EXPECT_EQ(m.extra.at("ground_truth").size(), 5u);
  fs::remove_all(dir);
}

TEST(Manifest, RejectsMalformedContent) {
  EXPECT_THROW(parse_manifest({{"domain", "ct"}, {"frames", nlohmann::json::array()}}, "m"), IngestionError);
  EXPECT_THROW(parse_manifest({{"domain", "echo"}}, "m"), IngestionError);
  EXPECT_THROW(parse_manifest({{"domain", "echo"}, {"frames", {"a.png"}}, {"pairing", {{1}}}}, "m"),
               IngestionError);
  const auto ok = parse_manifest({{"domain", "mri"}, {"frames", {"a.png"}}, {"pairing", {{0, 3}}}}, "m");
  EXPECT_EQ(ok.pairing->front(), std::make_pair(0, 3));
}

#if defined(ECHO2MRI_HAVE_OPENCV)
TEST(ExtractFrames, VideoContainerDecodesAllFrames) {
  const auto dir = scratch("video");
  const auto path = dir / "clip.avi";
  {
    cv::VideoWriter vw(path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), 25.0, cv::Size(32, 32), false);
    ASSERT_TRUE(vw.isOpened());
    for (int t = 0; t < 7; ++t) vw.write(cv::Mat(32, 32, CV_8UC1, cv::Scalar(30 * t)));
  }
  const auto seq = extract_frames(path);
  ASSERT_EQ(seq.size(), 7u);
  EXPECT_EQ(seq[6].time_index, 6);
  EXPECT_NEAR(seq[3].pixels(16, 16), 90.0 / 255.0, 0.05);
  fs::remove_all(dir);
}
#endif

TEST(CropRotateAlign, FullFrameNoRotationIsIdentity) {
  const Frame f(pattern(10, 12), 3);
  EXPECT_EQ(crop_rotate_align(f, {0, 0, 12, 10, 0.0}), f);
}

TEST(CropRotateAlign, FullTurnMatchesNoRotation) {
  const Frame f(pattern(16, 16), 0);
  const auto a = crop_rotate_align(f, {2, 3, 9, 9, 360.0});
  const auto b = crop_rotate_align(f, {2, 3, 9, 9, 0.0});
  EXPECT_LE((a.pixels - b.pixels).abs().maxCoeff(), 1e-6f);
}

TEST(CropRotateAlign, QuarterTurnIsTransposeFlip) {
  const Frame f(pattern(11, 14), 0);
  const int x0 = 3, y0 = 2, n = 8;
  const auto r = crop_rotate_align(f, {x0, y0, n, n, 90.0});
  // Counter-clockwise as displayed: out(i, j) = crop(j, n - 1 - i).
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) ASSERT_NEAR(r.pixels(i, j), f.pixels(y0 + j, x0 + n - 1 - i), 1e-6) << i << "," << j;
}

TEST(CropRotateAlign, CropOutsideFrameRaises) {
  const Frame f(pattern(10, 10), 0);
  EXPECT_THROW(crop_rotate_align(f, {5, 5, 6, 2, 0}), AlignmentError);
  EXPECT_THROW(crop_rotate_align(f, {-1, 0, 4, 4, 0}), AlignmentError);
  EXPECT_THROW(crop_rotate_align(f, {0, 0, 0, 4, 0}), AlignmentError);
}

TEST(ResizeNormalize, MidpointMapsToZero) {
  const Frame f(Image::Constant(37, 23, 0.5f), 0);
  const auto r = resize_normalize(f, 16);
  EXPECT_EQ(r.height(), 16);
  EXPECT_EQ(r.width(), 16);
  EXPECT_LE(r.pixels.abs().maxCoeff(), 1e-7f);
}

TEST(ResizeNormalize, EndpointsMapToPlusMinusOne) {
  Image img(4, 4);
  for (int i = 0; i < 16; ++i) img.data()[i] = static_cast<float>(i % 2);
  const auto r = resize_normalize(Frame(img, 0), 4);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(r.pixels.data()[i], i % 2 ? 1.0f : -1.0f);
}

TEST(ResizeNormalize, HalvingMatchesBlockAverageOracle) {
  Image board(16, 16);
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) board(y, x) = ((x / 3 + y / 2) % 2) ? u(rng) : 0.0f;
  const Image r = resize(board, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double oracle =
          (board(2 * y, 2 * x) + board(2 * y, 2 * x + 1) + board(2 * y + 1, 2 * x) + board(2 * y + 1, 2 * x + 1)) / 4.0;
      ASSERT_NEAR(r(y, x), oracle, 1e-6);
    }
}

TEST(ResizeNormalize, NonIntegerShrinkPreservesMean) {
  const Image img = pattern(30, 30);
  const Image r = resize(img, 7);
  EXPECT_NEAR(r.mean(), img.mean(), 1e-5);
}

TEST(ResizeNormalize, InverseRecoversIntensities) {
  const Image img = pattern(8, 8);
  const Image back = denormalize(resize_normalize(Frame(img, 0), 8).pixels);
  EXPECT_LE((back - img).abs().maxCoeff(), 1e-6f);
  EXPECT_THROW(resize(img, 0), InputError);
}

TEST(Augment, FlipFractionNearHalf) {
  std::mt19937_64 rng(2024);
  int flips = 0;
  for (int i = 0; i < 10'000; ++i) flips += draw_augment(rng).flip;
  EXPECT_NEAR(flips / 10'000.0, 0.5, 0.02);
}

TEST(Augment, DisabledIsIdentityAndDrawsStayInRange) {
  const Frame f(pattern(9, 7), 2);
  std::mt19937_64 rng(1);
  EXPECT_EQ(augment(f, rng, {0.0, 0.0}), f);
  for (int i = 0; i < 1000; ++i) {
    const auto d = draw_augment(rng, {0.5, 10.0});
    ASSERT_LE(std::abs(d.rotation_deg), 10.0);
  }
}

TEST(Augment, DeterministicAndShapePreserving) {
  const Frame f(pattern(9, 7), 2);
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 20; ++i) {
    const auto fa = augment(f, a), fb = augment(f, b);
    ASSERT_EQ(fa, fb);
    ASSERT_EQ(fa.height(), 9);
    ASSERT_EQ(fa.width(), 7);
  }
}

TEST(Augment, FlipAloneMirrorsColumns) {
  const Frame f(pattern(5, 6), 0);
  const auto m = apply_augment(f, {true, 0.0});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) EXPECT_EQ(m.pixels(y, x), f.pixels(y, 5 - x));
}

TEST(Augment, SequenceSharesOneDraw) {
  const FrameSequence seq = {Frame(pattern(8, 8), 0), Frame(pattern(8, 8), 1)};
  std::mt19937_64 rng(5);
  const auto out = augment_sequence(seq, rng);
  EXPECT_TRUE((out[0].pixels == out[1].pixels).all());
}

TEST(Triplets, ThreeFramesGiveOneCentredAtOne) {
  const auto tr = make_temporal_triplets(numbered(3));
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_EQ(tr[0].center_time, 1);
}

TEST(Triplets, FiveFramesGiveCentresOneToThree) {
  const auto tr = make_temporal_triplets(numbered(5));
  ASSERT_EQ(tr.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(tr[i].center_time, i + 1);
}

TEST(Triplets, ChannelKOfTripletTIsFrameTMinusOnePlusK) {
  const auto seq = numbered(100, 2, 2);
  const auto tr = make_temporal_triplets(seq);
  ASSERT_EQ(tr.size(), 98u);
  for (const auto& t : tr)
    for (int k = 0; k < 3; ++k) {
      ASSERT_EQ(t.channels[k].time_index, t.center_time - 1 + k);
      ASSERT_EQ(t.channels[k].pixels(0, 0), static_cast<float>(t.center_time - 1 + k));
    }
}

TEST(Triplets, CountIsAlwaysNMinusTwo) {
  for (int n = 3; n < 20; ++n) EXPECT_EQ(make_temporal_triplets(numbered(n)).size(), static_cast<std::size_t>(n - 2));
  EXPECT_THROW(make_temporal_triplets(numbered(2)), SequenceTooShortError);
  EXPECT_THROW(make_temporal_triplets({}), SequenceTooShortError);
}

TEST(Triplets, TensorRoundTrip) {
  FrameSequence seq;
  for (int t = 0; t < 3; ++t) seq.emplace_back(pattern(4, 6) + static_cast<float>(t), t);
  const auto tr = make_temporal_triplets(seq)[0];
  const auto t = to_tensor(tr);
  EXPECT_EQ(t.shape(), (Shape{3, 4, 6}));
  EXPECT_EQ(t(2, 1, 3), seq[2].pixels(1, 3));
  const auto back = from_tensor(t, 1);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(back.channels[c], seq[c]);
}

TEST(DiscoverSequences, NestedDirectoriesInNaturalOrder) {
  const auto root = scratch("discover");
  for (const char* d : {"b/p10", "b/p2", "a"}) write_sequence(root / d, numbered(3), "echo");
  fs::create_directories(root / "empty");
  const auto found = discover_sequences(root);
  ASSERT_EQ(found.size(), 3u);
  EXPECT_EQ(found[0].relative, "a");
  EXPECT_EQ(found[1].relative, fs::path("b") / "p2");
  EXPECT_EQ(found[2].relative, fs::path("b") / "p10");
  fs::remove_all(root);
}

TEST(DiscoverSequences, RootHoldingFramesIsItsOwnSequence) {
  const auto root = scratch("discover_root");
  write_sequence(root, numbered(4), "mri");
  const auto found = discover_sequences(root);
  ASSERT_EQ(found.size(), 1u);
  EXPECT_TRUE(found[0].relative.empty());
  EXPECT_EQ(found[0].path, root);
  EXPECT_THROW(discover_sequences(root / "missing"), IngestionError);
  fs::create_directories(root / "void");
  EXPECT_THROW(discover_sequences(root / "void"), IngestionError);
  fs::remove_all(root);
}

TEST(FrameNames, ManifestListingOrFallback) {
  const auto dir = scratch("names");
  for (int id : {10, 2, 1}) write_image(dir / ("img" + std::to_string(id) + ".pgm"), Image::Constant(3, 3, 0.5f));
  EXPECT_EQ(frame_names(dir, 3), (std::vector<std::string>{"img1.pgm", "img2.pgm", "img10.pgm"}));
  // Count mismatch falls back to generated names.
  EXPECT_EQ(frame_names(dir, 2), (std::vector<std::string>{"frame_0000.png", "frame_0001.png"}));

  const auto out = dir / "out";
  write_sequence_named(out, extract_frames(dir), "mri", frame_names(dir, 3), {{"note", "x"}});
  const auto m = read_manifest(out / kManifestName);
  EXPECT_EQ(m.frames, (std::vector<std::string>{"img1.png", "img2.png", "img10.png"}));
  EXPECT_EQ(m.extra["note"], "x");
  EXPECT_EQ(frame_names(out, 3), m.frames);
  EXPECT_THROW(write_sequence_named(out, numbered(2), "mri", {"a.png"}), InputError);
  fs::remove_all(dir);
}

TEST(Prepare, AlignResizeAugmentAndClamp) {
  FrameSequence seq;
  for (int t = 0; t < 3; ++t) {
    Image img = pattern(20, 16);
    img(0, 0) = 1.7f;  // out of range on input
    seq.emplace_back(img, t);
  }
  PrepareOptions opt;
  opt.size = 8;
  opt.align = parse_alignment("2,2,12,12,0");
  std::mt19937_64 rng(1);
  const auto plain = prepare_sequence(seq, opt, rng);
  EXPECT_FALSE(plain.draw.has_value());
  ASSERT_EQ(plain.frames.size(), 3u);
  for (const auto& f : plain.frames) {
    EXPECT_EQ(f.width(), 8);
    EXPECT_EQ(f.height(), 8);
    EXPECT_LE(f.pixels.maxCoeff(), 1.0f);
    EXPECT_GE(f.pixels.minCoeff(), 0.0f);
  }
  EXPECT_TRUE(plain.frames[0].pixels.isApprox(resize(crop_rotate_align(seq[0], *opt.align).pixels, 8)));

  opt.augment = true;
  std::mt19937_64 a(5), b(5);
  const auto p1 = prepare_sequence(seq, opt, a), p2 = prepare_sequence(seq, opt, b);
  ASSERT_TRUE(p1.draw.has_value());
  EXPECT_EQ(p1.draw->flip, p2.draw->flip);
  EXPECT_EQ(p1.draw->rotation_deg, p2.draw->rotation_deg);
  EXPECT_LE(std::abs(p1.draw->rotation_deg), 10.0);
  const auto j = to_json_value(opt, p1.draw);
  EXPECT_EQ(j["size"], 8);
  EXPECT_TRUE(j.contains("augment_draw"));
}

TEST(Prepare, AlignmentParsing) {
  const auto a = parse_alignment("1,2,30,40,-7.5");
  EXPECT_EQ(a.x, 1);
  EXPECT_EQ(a.h, 40);
  EXPECT_DOUBLE_EQ(a.rotation_deg, -7.5);
  EXPECT_THROW(parse_alignment("1,2,3"), AlignmentError);
  EXPECT_THROW(parse_alignment("1,2,3,4,5,6"), AlignmentError);
  EXPECT_THROW(parse_alignment("a,b,c,d,e"), AlignmentError);
}

TEST(Prepare, DatasetLoadChecksSizeAndNormalizes) {
  const auto root = scratch("dataset");
  FrameSequence seq;
  for (int t = 0; t < 4; ++t) seq.emplace_back(Image::Constant(8, 8, 0.25f * t), t);
  write_sequence(root / "s1", seq, "echo");
  write_sequence(root / "s2", seq, "echo");
  const auto triplets = dataset_triplets<float>(root, 8);
  ASSERT_EQ(triplets.size(), 4u);
  EXPECT_NEAR(triplets[0](0, 0, 0), -1.0f, 1e-4);  // 0 -> -1
  EXPECT_NEAR(triplets[0](2, 0, 0), 0.0f, 1e-4);   // 0.5 -> 0
  try {
    load_dataset(root, 16);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("prepare --size 16"), std::string::npos);
  }
  fs::remove_all(root);
}
