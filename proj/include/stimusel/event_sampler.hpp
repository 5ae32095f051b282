#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "stimusel/frames.hpp"
#include "stimusel/optical_flow.hpp"

namespace stimusel {

/// Per-adjacent-pair flow magnitudes, raw and Gaussian-smoothed.
struct FlowCurve {
  std::vector<double> raw;
  std::vector<double> smoothed;
  double sigma = 0.0;
};

/// 1D Gaussian smoothing: normalized kernel truncated at radius
/// ceil(3*sigma), mirror padding without edge repetition (x[-1] == x[1]).
/// sigma == 0 returns the input unchanged.
std::vector<double> gaussian_smooth(const std::vector<double>& values, double sigma);

FlowCurve make_flow_curve(std::vector<double> raw, double sigma);

/// Strict local maxima (leftmost index on plateaus) with topographic
/// prominence >= prominence_min, greedily thinned so that no two kept
/// peaks are within min_distance of each other (|i - j| <= min_distance
/// suppresses). Returned in descending height order, ties by lower index.
std::vector<std::size_t> find_peaks(const std::vector<double>& curve, std::size_t min_distance,
                                    double prominence_min);

struct Peak {
  std::size_t curve_index = 0;
  double height = 0.0;
};

/// Inclusive frame range [lo, hi] around a peak, after clipping/merging.
struct EventWindow {
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::size_t center = 0;      // curve index of the tallest contributing peak
  double peak_height = 0.0;
};

struct EventPartition {
  std::vector<EventWindow> windows;    // disjoint, ascending by lo
  std::vector<std::size_t> non_event;  // ascending frame indices
  std::size_t total_frames = 0;

  std::size_t p_effective() const { return windows.size(); }
};

/// Keeps at most p highest peaks, maps curve index e to the frame window
/// [e-d, e+d+1] clipped to [0, T-1] (the flow at e spans frames e and
/// e+1), merges overlapping windows, and collects the rest as non_event.
EventPartition build_partition(const std::vector<Peak>& peaks_by_height, std::size_t curve_len,
                               std::size_t total_frames, std::size_t p, std::size_t d);

struct SamplerConfig {
  std::size_t n = 6;
  std::size_t p = 2;
  std::size_t d = 5;
  double sigma = 2.0;
  std::optional<std::size_t> min_distance;  // defaults to 2d+1
  double prominence_frac = 0.1;

  std::size_t effective_min_distance() const { return min_distance.value_or(2 * d + 1); }
  void validate() const;
};

struct SamplingPlan {
  std::vector<std::size_t> indices;          // strictly increasing, length n
  std::vector<std::size_t> per_event_quota;  // non_event first, then windows in stored order
  EventPartition partition;
  SamplerConfig config;
  FlowParams flow;
};

/// Budget split: floor(N / (p_eff+1)) per set, remainder one each to
/// non_event first then windows by descending peak height; each set is
/// sampled by even positions over its ordered frames. Quota a set cannot
/// hold spills to the other sets, non_event first.
SamplingPlan allocate_and_sample(const EventPartition& partition, std::size_t n);

/// Deterministic uniform baseline: positions round(j*(T-1)/(N-1)).
std::vector<std::size_t> uniform_indices(std::size_t total_frames, std::size_t n);

FlowCurve flow_curve_for(const VideoFrames& video, const SamplerConfig& cfg,
                         const FlowParams& flow, int jobs = 1);

/// Full frame-level pipeline: flow curve -> smoothing -> peaks (with
/// prominence threshold prominence_frac * range of the smoothed curve)
/// -> partition -> budgeted sampling.
SamplingPlan sample_frames(const VideoFrames& video, const SamplerConfig& cfg,
                           const FlowParams& flow, int jobs = 1);

/// sample_frames starting from an existing raw curve (used by the CLI to
/// avoid recomputing flow, and by tests to drive synthetic curves).
SamplingPlan sample_from_curve(const FlowCurve& curve, std::size_t total_frames,
                               const SamplerConfig& cfg, const FlowParams& flow);

}  // namespace stimusel
