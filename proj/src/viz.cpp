#include "stimusel/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stimusel/error.hpp"

namespace stimusel {
namespace {

std::string frame_stem(std::size_t source_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu", source_index);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> normalize_heatmap(const Tensor& heatmap) {
  if (heatmap.dims.size() != 3 || heatmap.dims[1] != heatmap.dims[2])
    throw Error("heatmap must be [frames, G, G]");
  if (heatmap.data.empty()) throw Error("heatmap is empty");

  float lo = heatmap.data[0];
  float hi = heatmap.data[0];
  for (float v : heatmap.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<std::uint8_t> out(heatmap.data.size());
  if (lo == hi) {
    std::fill(out.begin(), out.end(), static_cast<std::uint8_t>(128));
    return out;
  }
  const double range = static_cast<double>(hi) - static_cast<double>(lo);
  for (std::size_t i = 0; i < heatmap.data.size(); ++i) {
    const double t = (static_cast<double>(heatmap.data[i]) - lo) / range;
    out[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return out;
}

std::vector<std::filesystem::path> render_overlay(const VideoFrames& video, const Tensor& heatmap,
                                                  const SamplingPlan& plan,
                                                  const std::filesystem::path& out_dir) {
  if (heatmap.dims.size() != 3 || heatmap.dims[1] != heatmap.dims[2])
    throw Error("heatmap must be [frames, G, G]");
  const std::size_t n = static_cast<std::size_t>(heatmap.dims[0]);
  if (n != plan.indices.size())
    throw Error("heatmap covers " + std::to_string(n) + " frames but the plan sampled " +
                std::to_string(plan.indices.size()));
  for (std::size_t idx : plan.indices) {
    if (idx >= video.frame_count())
      throw Error("plan index " + std::to_string(idx) + " outside the video");
  }

  const std::size_t g = static_cast<std::size_t>(heatmap.dims[1]);
  const std::vector<std::uint8_t> heat = normalize_heatmap(heatmap);
  std::filesystem::create_directories(out_dir);

  std::vector<std::filesystem::path> files;
  for (std::size_t i = 0; i < n; ++i) {
    const Frame& frame = video.frames[plan.indices[i]];
    const std::size_t h = static_cast<std::size_t>(frame.height);
    const std::size_t w = static_cast<std::size_t>(frame.width);
    const std::string stem = frame_stem(plan.indices[i]);

    // Nearest-neighbor upscale of this frame's G x G plane.
    std::vector<std::uint8_t> heat_px(h * w);
    const std::uint8_t* plane = heat.data() + i * g * g;
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t gy = y * g / h;
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t gx = x * g / w;
        heat_px[y * w + x] = plane[gy * g + gx];
      }
    }

    const std::filesystem::path orig_path = out_dir / (stem + "_orig.png");
    const std::filesystem::path heat_path = out_dir / (stem + "_heat.png");
    const std::filesystem::path blend_path = out_dir / (stem + "_blend.png");

    if (frame.has_rgb()) {
      write_png_rgb(orig_path, frame.height, frame.width, frame.rgb);
      std::vector<std::uint8_t> blend(3 * h * w);
      for (std::size_t p = 0; p < h * w; ++p) {
        for (int c = 0; c < 3; ++c) {
          blend[3 * p + c] =
              static_cast<std::uint8_t>((frame.rgb[3 * p + c] + heat_px[p] + 1) / 2);
        }
      }
      write_png_rgb(blend_path, frame.height, frame.width, blend);
    } else {
      write_png_gray(orig_path, frame.height, frame.width, frame.gray);
      std::vector<std::uint8_t> blend(h * w);
      for (std::size_t p = 0; p < h * w; ++p) {
        blend[p] = static_cast<std::uint8_t>((frame.gray[p] + heat_px[p] + 1) / 2);
      }
      write_png_gray(blend_path, frame.height, frame.width, blend);
    }
    write_png_gray(heat_path, frame.height, frame.width, heat_px);

    files.push_back(orig_path);
    files.push_back(heat_path);
    files.push_back(blend_path);
  }
  return files;
}

void export_curve(const FlowCurve& curve, const std::vector<std::size_t>& peaks,
                  const std::vector<EventWindow>& windows, const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path, const std::string& config_echo) {
  if (curve.raw.empty()) throw Error("export_curve: empty curve");
  if (curve.smoothed.size() != curve.raw.size())
    throw Error("export_curve: raw and smoothed lengths differ");

  const std::size_t n = curve.raw.size();
  std::vector<bool> is_peak(n, false);
  for (std::size_t p : peaks) {
    if (p >= n) throw Error("export_curve: peak index outside the curve");
    is_peak[p] = true;
  }
  std::vector<bool> in_window(n, false);
  for (const auto& win : windows) {
    // Transition i measures frames i and i+1; it is inside the window
    // when both endpoints are.
    for (std::size_t i = win.lo; i + 1 <= win.hi && i < n; ++i) in_window[i] = true;
  }

  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw Error("cannot write " + csv_path.string());
    out << "# schema_version: 1\n";
    out << "# config: " << config_echo << "\n";
    out << "index,raw,smoothed,is_peak,in_window\n";
    for (std::size_t i = 0; i < n; ++i) {
      out << i << ',' << fmt(curve.raw[i]) << ',' << fmt(curve.smoothed[i]) << ','
          << (is_peak[i] ? 1 : 0) << ',' << (in_window[i] ? 1 : 0) << '\n';
    }
    if (!out.good()) throw Error("short write to " + csv_path.string());
  }

  // Fixed-size viewport; x spreads curve indices, y is flipped so larger
  // values plot higher.
  const double width = 640.0;
  const double height = 200.0;
  const double margin = 10.0;
  double lo = curve.raw[0];
  double hi = curve.raw[0];
  for (double v : curve.raw) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : curve.smoothed) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = (hi > lo) ? (hi - lo) : 1.0;
  auto px = [&](std::size_t i) {
    if (n == 1) return width / 2.0;
    return margin + (width - 2 * margin) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto py = [&](double v) { return height - margin - (height - 2 * margin) * (v - lo) / span; };
  auto poly = [&](const std::vector<double>& values) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) pts << ' ';
      pts << fmt(px(i)) << ',' << fmt(py(values[i]));
    }
    return pts.str();
  };

  std::ofstream out(svg_path, std::ios::trunc);
  if (!out) throw Error("cannot write " + svg_path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<!-- schema_version: 1 config: " << config_echo << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"1\" points=\""
      << poly(curve.raw) << "\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\""
      << poly(curve.smoothed) << "\"/>\n";
  for (std::size_t p : peaks) {
    out << "<circle cx=\"" << fmt(px(p)) << "\" cy=\"" << fmt(py(curve.smoothed[p]))
        << "\" r=\"3\" fill=\"#d62728\"/>\n";
  }
  out << "</svg>\n";
  if (!out.good()) throw Error("short write to " + svg_path.string());
}

}  // namespace stimusel
