#pragma once

#include <vector>

#include "stimusel/frames.hpp"

namespace stimusel {

/// Lucas-Kanade knobs. The defaults track a single pyramid level with a
/// 5x5 window; `downscale` trades accuracy for speed by box-averaging
/// the frames by an integer factor first (flow is reported in original
/// pixel units either way).
struct FlowParams {
  int window_radius = 2;
  double presmooth_sigma = 1.0;
  double eps = 1e-6;
  int downscale = 1;

  void validate() const;
};

/// Dense per-pixel displacement between two frames.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> u;  // horizontal, +x is rightward motion
  std::vector<float> v;  // vertical, +y is downward motion
};

/// Solves the 2x2 Lucas-Kanade normal equations per pixel, with `eps`
/// on the normal-matrix diagonal and reflect-padded gradients at the
/// borders. Frames must be the same size and at least as large as the
/// window after downscaling.
FlowField lucas_kanade(const Frame& a, const Frame& b, const FlowParams& params);

/// Mean over pixels of sqrt(u^2 + v^2).
double flow_summary(const FlowField& field);

/// Raw flow curve: element t is flow_summary(lucas_kanade(f_t, f_{t+1})).
/// jobs > 1 computes pairs in parallel; the result is schedule-independent.
std::vector<double> compute_flow_curve(const VideoFrames& video, const FlowParams& params,
                                       int jobs = 1);

}  // namespace stimusel
