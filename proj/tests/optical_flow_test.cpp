#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stimusel/error.hpp"
#include "stimusel/frames.hpp"
#include "stimusel/optical_flow.hpp"
#include "test_util.hpp"

using stimusel::Error;
using stimusel::FlowField;
using stimusel::FlowParams;
using stimusel::Frame;
using stimusel::VideoFrames;

namespace {

Frame frame_from(int height, int width, const std::vector<std::uint8_t>& gray) {
  Frame f;
  f.height = height;
  f.width = width;
  f.gray = gray;
  return f;
}

// Noise with some local smoothness so windows carry usable gradients.
std::vector<std::uint8_t> smooth_texture(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<int> noise(static_cast<std::size_t>(height) * width);
  for (auto& v : noise) v = byte(rng);
  std::vector<std::uint8_t> out(noise.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int sum = 0, count = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
          sum += noise[static_cast<std::size_t>(yy) * width + xx];
          ++count;
        }
      }
      out[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(sum / count);
    }
  }
  return out;
}

// Two views of a wider texture, the second offset by `shift` columns, so
// the motion between them is exactly `shift` px rightward.
std::pair<Frame, Frame> shifted_pair(int height, int width, int shift, std::uint64_t seed) {
  const int wide = width + shift;
  const auto texture = smooth_texture(height, wide, seed);
  std::vector<std::uint8_t> a(static_cast<std::size_t>(height) * width);
  std::vector<std::uint8_t> b(a.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      a[static_cast<std::size_t>(y) * width + x] =
          texture[static_cast<std::size_t>(y) * wide + x + shift];
      b[static_cast<std::size_t>(y) * width + x] = texture[static_cast<std::size_t>(y) * wide + x];
    }
  }
  return {frame_from(height, width, a), frame_from(height, width, b)};
}

}  // namespace

TEST_CASE("identical textured frames give exactly zero flow") {
  const auto texture = smooth_texture(32, 32, 5);
  const Frame a = frame_from(32, 32, texture);
  const FlowField field = stimusel::lucas_kanade(a, a, FlowParams{});
  for (float v : field.u) REQUIRE(v == 0.0f);
  for (float v : field.v) REQUIRE(v == 0.0f);
  REQUIRE(stimusel::flow_summary(field) == 0.0);
}

TEST_CASE("flat constant frames give zero flow through the regularizer") {
  const Frame a = frame_from(16, 16, std::vector<std::uint8_t>(256, 77));
  const Frame b = frame_from(16, 16, std::vector<std::uint8_t>(256, 77));
  const FlowField field = stimusel::lucas_kanade(a, b, FlowParams{});
  for (float v : field.u) REQUIRE(v == 0.0f);
  for (float v : field.v) REQUIRE(v == 0.0f);
}

TEST_CASE("one-pixel rightward shift recovers u near plus one") {
  const auto [a, b] = shifted_pair(64, 64, 1, 11);
  const FlowField field = stimusel::lucas_kanade(a, b, FlowParams{});

  const int margin = 8;
  double sum_u = 0.0, sum_abs_v = 0.0;
  std::size_t count = 0;
  for (int y = margin; y < 64 - margin; ++y) {
    for (int x = margin; x < 64 - margin; ++x) {
      sum_u += field.u[static_cast<std::size_t>(y) * 64 + x];
      sum_abs_v += std::abs(field.v[static_cast<std::size_t>(y) * 64 + x]);
      ++count;
    }
  }
  const double mean_u = sum_u / static_cast<double>(count);
  const double mean_abs_v = sum_abs_v / static_cast<double>(count);
  REQUIRE(mean_u > 0.7);
  REQUIRE(mean_u < 1.3);
  REQUIRE(mean_abs_v < 0.3);
}

TEST_CASE("flow summary of a constant (3,4) field is five") {
  FlowField field;
  field.height = 4;
  field.width = 4;
  field.u.assign(16, 3.0f);
  field.v.assign(16, 4.0f);
  // Oracle: per-pixel magnitude sqrt(3^2 + 4^2), identical at all pixels.
  const double magnitude = std::sqrt(3.0 * 3.0 + 4.0 * 4.0);
  REQUIRE(stimusel::flow_summary(field) == doctest::Approx(magnitude).epsilon(1e-12));
  REQUIRE(magnitude == doctest::Approx(5.0));
}

TEST_CASE("flow summary averages over all pixels") {
  FlowField field;
  field.height = 2;
  field.width = 2;
  field.u = {1.0f, 0.0f, 0.0f, 0.0f};
  field.v = {0.0f, 0.0f, 0.0f, 0.0f};
  REQUIRE(stimusel::flow_summary(field) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("static video yields an all-zero curve") {
  const auto texture = smooth_texture(24, 24, 21);
  VideoFrames video;
  for (int i = 0; i < 5; ++i) video.frames.push_back(frame_from(24, 24, texture));
  const std::vector<double> curve = stimusel::compute_flow_curve(video, FlowParams{});
  REQUIRE(curve.size() == 4);
  for (double v : curve) REQUIRE(v == 0.0);
}

TEST_CASE("motion burst shows up in the right curve position") {
  const auto [f1, f2] = shifted_pair(48, 48, 2, 31);
  VideoFrames video;
  video.frames = {f1, f2, f2};  // motion between 0-1, none between 1-2
  const std::vector<double> curve = stimusel::compute_flow_curve(video, FlowParams{});
  REQUIRE(curve.size() == 2);
  REQUIRE(curve[0] > curve[1]);
  REQUIRE(curve[1] == 0.0);
}

TEST_CASE("a two-frame video produces one curve point") {
  const auto [a, b] = shifted_pair(32, 32, 1, 41);
  VideoFrames video;
  video.frames = {a, b};
  REQUIRE(stimusel::compute_flow_curve(video, FlowParams{}).size() == 1);
}

TEST_CASE("curve length is always frame count minus one") {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> count(2, 9);
  for (int trial = 0; trial < 5; ++trial) {
    const int t = count(rng);
    VideoFrames video;
    for (int i = 0; i < t; ++i)
      video.frames.push_back(frame_from(16, 16, smooth_texture(16, 16, rng())));
    REQUIRE(stimusel::compute_flow_curve(video, FlowParams{}).size() ==
            static_cast<std::size_t>(t - 1));
  }
}

TEST_CASE("larger shifts produce larger summaries") {
  const auto [a1, b1] = shifted_pair(64, 64, 1, 61);
  const auto [a2, b2] = shifted_pair(64, 64, 2, 61);
  const double of1 = stimusel::flow_summary(stimusel::lucas_kanade(a1, b1, FlowParams{}));
  const double of2 = stimusel::flow_summary(stimusel::lucas_kanade(a2, b2, FlowParams{}));
  REQUIRE(of2 > of1);
}

TEST_CASE("downscale stays within half of full resolution on smooth motion") {
  // A smooth sinusoidal pattern translated two pixels.
  const int size = 64;
  auto wave = [&](int shift) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double v = 127.5 + 60.0 * std::sin(2.0 * M_PI * (x - shift) / 16.0) +
                         40.0 * std::sin(2.0 * M_PI * y / 20.0);
        gray[static_cast<std::size_t>(y) * size + x] = static_cast<std::uint8_t>(std::lround(v));
      }
    }
    return gray;
  };
  const Frame a = frame_from(size, size, wave(0));
  const Frame b = frame_from(size, size, wave(2));

  FlowParams fine;
  const double of_fine = stimusel::flow_summary(stimusel::lucas_kanade(a, b, fine));
  FlowParams coarse;
  coarse.downscale = 2;
  const double of_coarse = stimusel::flow_summary(stimusel::lucas_kanade(a, b, coarse));
  REQUIRE(of_fine > 0.0);
  REQUIRE(std::abs(of_coarse - of_fine) / of_fine <= 0.5);
}

TEST_CASE("parallel curve computation matches serial exactly") {
  std::mt19937_64 rng(71);
  VideoFrames video;
  for (int i = 0; i < 9; ++i)
    video.frames.push_back(frame_from(32, 32, smooth_texture(32, 32, rng())));
  const std::vector<double> serial = stimusel::compute_flow_curve(video, FlowParams{}, 1);
  const std::vector<double> parallel = stimusel::compute_flow_curve(video, FlowParams{}, 4);
  REQUIRE(serial == parallel);
}

TEST_CASE("dimension mismatch and undersized frames are rejected") {
  const Frame a = frame_from(16, 16, std::vector<std::uint8_t>(256, 0));
  const Frame b = frame_from(8, 8, std::vector<std::uint8_t>(64, 0));
  REQUIRE_THROWS_AS(stimusel::lucas_kanade(a, b, FlowParams{}), Error);

  const Frame tiny = frame_from(3, 3, std::vector<std::uint8_t>(9, 0));
  REQUIRE_THROWS_AS(stimusel::lucas_kanade(tiny, tiny, FlowParams{}), Error);

  VideoFrames single;
  single.frames.push_back(a);
  REQUIRE_THROWS_AS(stimusel::compute_flow_curve(single, FlowParams{}), Error);
}

TEST_CASE("invalid flow params are rejected") {
  FlowParams bad_window;
  bad_window.window_radius = 0;
  REQUIRE_THROWS_AS(bad_window.validate(), Error);

  FlowParams bad_eps;
  bad_eps.eps = 0.0;
  REQUIRE_THROWS_AS(bad_eps.validate(), Error);

  FlowParams bad_scale;
  bad_scale.downscale = 0;
  REQUIRE_THROWS_AS(bad_scale.validate(), Error);
}
