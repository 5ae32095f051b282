#include "stimusel/optical_flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <thread>

#include "stimusel/error.hpp"

namespace stimusel {

namespace {

// Mirror index without edge repetition: -1 -> 1, n -> n-2. Degenerates
// to 0 for single-element axes.
inline int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> px;

  Image() = default;
  Image(int h, int w) : height(h), width(w), px(static_cast<std::size_t>(h) * w, 0.0f) {}
  float* row(int y) { return px.data() + static_cast<std::size_t>(y) * width; }
  const float* row(int y) const { return px.data() + static_cast<std::size_t>(y) * width; }
};

Image to_image(const Frame& f) {
  Image img(f.height, f.width);
  for (std::size_t i = 0; i < f.gray.size(); ++i) img.px[i] = static_cast<float>(f.gray[i]);
  return img;
}

Image box_downscale(const Image& src, int factor) {
  const int h = src.height / factor;
  const int w = src.width / factor;
  Image dst(h, w);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int dy = 0; dy < factor; ++dy) {
        const float* srow = src.row(y * factor + dy);
        for (int dx = 0; dx < factor; ++dx) acc += srow[x * factor + dx];
      }
      dst.row(y)[x] = acc * inv;
    }
  }
  return dst;
}

std::vector<float> gaussian_kernel_f(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

Image gaussian_blur(const Image& src, double sigma) {
  if (sigma <= 0.0) return src;
  const auto kernel = gaussian_kernel_f(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int h = src.height, w = src.width;

  Image tmp(h, w);
  for (int y = 0; y < h; ++y) {
    const float* srow = src.row(y);
    float* trow = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * srow[mirror(x + k, w)];
      trow[x] = acc;
    }
  }
  Image dst(h, w);
  for (int y = 0; y < h; ++y) {
    float* drow = dst.row(y);
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.row(mirror(y + k, h))[x];
      drow[x] = acc;
    }
  }
  return dst;
}

// Pads by `r` on all sides with mirror indexing, so the window sums
// below need no border branches.
Image mirror_pad(const Image& src, int r) {
  Image dst(src.height + 2 * r, src.width + 2 * r);
  for (int y = 0; y < dst.height; ++y) {
    const float* srow = src.row(mirror(y - r, src.height));
    float* drow = dst.row(y);
    for (int x = 0; x < dst.width; ++x) drow[x] = srow[mirror(x - r, src.width)];
  }
  return dst;
}

// Sliding (2r+1)-box sum along rows, then columns, on a padded image.
// Output has the original (unpadded) size.
Image window_sums(const Image& padded, int r, int out_h, int out_w) {
  const int win = 2 * r + 1;
  Image rows(out_h + 2 * r, out_w);
  for (int y = 0; y < rows.height; ++y) {
    const float* srow = padded.row(y);
    float* drow = rows.row(y);
    double acc = 0.0;
    for (int x = 0; x < win; ++x) acc += srow[x];
    drow[0] = static_cast<float>(acc);
    for (int x = 1; x < out_w; ++x) {
      acc += srow[x + win - 1] - srow[x - 1];
      drow[x] = static_cast<float>(acc);
    }
  }
  Image out(out_h, out_w);
  for (int x = 0; x < out_w; ++x) {
    double acc = 0.0;
    for (int y = 0; y < win; ++y) acc += rows.row(y)[x];
    out.row(0)[x] = static_cast<float>(acc);
    for (int y = 1; y < out_h; ++y) {
      acc += rows.row(y + win - 1)[x] - rows.row(y - 1)[x];
      out.row(y)[x] = static_cast<float>(acc);
    }
  }
  return out;
}

struct PreparedFrame {
  Image smoothed;
};

PreparedFrame prepare(const Frame& f, const FlowParams& p) {
  Image img = to_image(f);
  if (p.downscale > 1) img = box_downscale(img, p.downscale);
  return PreparedFrame{gaussian_blur(img, p.presmooth_sigma)};
}

FlowField lk_from_prepared(const PreparedFrame& a, const PreparedFrame& b, const FlowParams& p) {
  const Image& A = a.smoothed;
  const Image& B = b.smoothed;
  const int h = A.height, w = A.width;
  const int r = p.window_radius;
  const int win = 2 * r + 1;
  if (h < win || w < win)
    throw Error("frame " + std::to_string(w) + "x" + std::to_string(h) +
                " is smaller than the " + std::to_string(win) + "x" + std::to_string(win) +
                " flow window");

  Image ix(h, w), iy(h, w), it(h, w);
  for (int y = 0; y < h; ++y) {
    const float* up = A.row(mirror(y - 1, h));
    const float* mid = A.row(y);
    const float* down = A.row(mirror(y + 1, h));
    const float* brow = B.row(y);
    float* ixr = ix.row(y);
    float* iyr = iy.row(y);
    float* itr = it.row(y);
    for (int x = 0; x < w; ++x) {
      ixr[x] = 0.5f * (mid[mirror(x + 1, w)] - mid[mirror(x - 1, w)]);
      iyr[x] = 0.5f * (down[x] - up[x]);
      itr[x] = brow[x] - mid[x];
    }
  }

  Image pxx(h, w), pxy(h, w), pyy(h, w), pxt(h, w), pyt(h, w);
  for (std::size_t i = 0; i < pxx.px.size(); ++i) {
    const float gx = ix.px[i], gy = iy.px[i], gt = it.px[i];
    pxx.px[i] = gx * gx;
    pxy.px[i] = gx * gy;
    pyy.px[i] = gy * gy;
    pxt.px[i] = gx * gt;
    pyt.px[i] = gy * gt;
  }

  const Image sxx = window_sums(mirror_pad(pxx, r), r, h, w);
  const Image sxy = window_sums(mirror_pad(pxy, r), r, h, w);
  const Image syy = window_sums(mirror_pad(pyy, r), r, h, w);
  const Image sxt = window_sums(mirror_pad(pxt, r), r, h, w);
  const Image syt = window_sums(mirror_pad(pyt, r), r, h, w);

  FlowField field;
  field.height = h;
  field.width = w;
  field.u.resize(static_cast<std::size_t>(h) * w);
  field.v.resize(field.u.size());
  const double eps = p.eps;
  const double scale = p.downscale;  // report flow in original pixel units
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    const double axx = static_cast<double>(sxx.px[i]) + eps;
    const double ayy = static_cast<double>(syy.px[i]) + eps;
    const double axy = sxy.px[i];
    const double bx = -static_cast<double>(sxt.px[i]);
    const double by = -static_cast<double>(syt.px[i]);
    const double det = axx * ayy - axy * axy;
    field.u[i] = static_cast<float>(scale * (bx * ayy - by * axy) / det);
    field.v[i] = static_cast<float>(scale * (by * axx - bx * axy) / det);
  }
  return field;
}

}  // namespace

void FlowParams::validate() const {
  if (window_radius < 1) throw Error("flow window_radius must be >= 1");
  if (presmooth_sigma < 0.0) throw Error("flow presmooth_sigma must be >= 0");
  if (!(eps > 0.0)) throw Error("flow eps must be > 0");
  if (downscale < 1) throw Error("flow downscale must be >= 1");
}

FlowField lucas_kanade(const Frame& a, const Frame& b, const FlowParams& params) {
  params.validate();
  if (a.height != b.height || a.width != b.width)
    throw Error("flow frames differ in size: " + std::to_string(a.width) + "x" +
                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                std::to_string(b.height));
  return lk_from_prepared(prepare(a, params), prepare(b, params), params);
}

double flow_summary(const FlowField& field) {
  if (field.u.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    const double u = field.u[i];
    const double v = field.v[i];
    acc += std::sqrt(u * u + v * v);
  }
  return acc / static_cast<double>(field.u.size());
}

std::vector<double> compute_flow_curve(const VideoFrames& video, const FlowParams& params,
                                       int jobs) {
  params.validate();
  const std::size_t t = video.frame_count();
  if (t < 2) throw Error("flow curve needs at least 2 frames, got " + std::to_string(t));
  for (std::size_t i = 1; i < t; ++i) {
    if (video.frames[i].height != video.frames[0].height ||
        video.frames[i].width != video.frames[0].width)
      throw Error("flow curve frames differ in size at frame " + std::to_string(i));
  }

  // Each frame is presmoothed once and shared by its two adjacent pairs;
  // results are identical to independent lucas_kanade calls.
  std::vector<PreparedFrame> prepared(t);
  std::vector<double> curve(t - 1);
  const auto prepare_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) prepared[i] = prepare(video.frames[i], params);
  };
  const auto flow_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      curve[i] = flow_summary(lk_from_prepared(prepared[i], prepared[i + 1], params));
  };

  const int workers = std::max(1, jobs);
  if (workers == 1) {
    prepare_range(0, t);
    flow_range(0, t - 1);
    return curve;
  }

  const auto run_parallel = [&](std::size_t count, const auto& fn) {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    const std::size_t chunk = 8;
    for (int k = 0; k < workers; ++k) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t lo = next.fetch_add(chunk);
          if (lo >= count) return;
          fn(lo, std::min(count, lo + chunk));
        }
      });
    }
    for (auto& th : pool) th.join();
  };
  run_parallel(t, prepare_range);
  run_parallel(t - 1, flow_range);
  return curve;
}

}  // namespace stimusel
