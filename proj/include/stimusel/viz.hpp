#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stimusel/event_sampler.hpp"
#include "stimusel/frames.hpp"
#include "stimusel/tensor.hpp"

namespace stimusel {

/// Per sampled frame: the original, the tube-score heatmap upscaled to
/// frame size, and a 50/50 blend of the two. Heat values are min-max
/// normalized to [0, 255] over the whole volume; a constant volume maps
/// to 128 everywhere. Upscaling is nearest neighbor; the blend of pixels
/// a and b is (a + b + 1) / 2. Files are written into `out_dir` as
/// frame_<source index>_{orig,heat,blend}.png and listed in the returned
/// vector in emission order.
std::vector<std::filesystem::path> render_overlay(const VideoFrames& video, const Tensor& heatmap,
                                                  const SamplingPlan& plan,
                                                  const std::filesystem::path& out_dir);

/// Normalized heat volume as bytes, one [G*G] plane per sampled frame
/// (exposed for tests; render_overlay uses it).
std::vector<std::uint8_t> normalize_heatmap(const Tensor& heatmap);

/// CSV rows index,raw,smoothed,is_peak,in_window (one per curve point)
/// plus a polyline SVG with circle markers on peaks. `config_echo` is a
/// JSON string embedded as "# " comment lines in the CSV and an XML
/// comment in the SVG. A curve index counts as in_window when the frame
/// transition it measures lies inside an event window.
void export_curve(const FlowCurve& curve, const std::vector<std::size_t>& peaks,
                  const std::vector<EventWindow>& windows, const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path, const std::string& config_echo);

}  // namespace stimusel
