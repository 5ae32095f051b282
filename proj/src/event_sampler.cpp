#include "stimusel/event_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stimusel/error.hpp"

namespace stimusel {

namespace {

inline std::size_t mirror_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long m = static_cast<long long>(n);
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * (m - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

// round-half-up of a nonnegative rational j*num/den
std::size_t position_round(std::size_t j, std::size_t num, std::size_t den) {
  return (2 * j * num + den) / (2 * den);
}

// Positions for q evenly spaced picks over m ordered slots:
// round(j*(m-1)/(q-1)); a single pick takes the middle slot.
std::vector<std::size_t> even_positions(std::size_t m, std::size_t q) {
  std::vector<std::size_t> out;
  out.reserve(q);
  if (q == 0) return out;
  if (q == 1) {
    out.push_back(m / 2);
    return out;
  }
  for (std::size_t j = 0; j < q; ++j) out.push_back(position_round(j, m - 1, q - 1));
  return out;
}

// Topographic prominence: walk outward from the peak until terrain rises
// above it (or the curve ends); the base is the higher of the two
// interval minima.
double peak_prominence(const std::vector<double>& curve, std::size_t peak) {
  const double height = curve[peak];
  double left_min = height;
  for (std::size_t i = peak; i-- > 0;) {
    if (curve[i] > height) break;
    left_min = std::min(left_min, curve[i]);
  }
  double right_min = height;
  for (std::size_t i = peak + 1; i < curve.size(); ++i) {
    if (curve[i] > height) break;
    right_min = std::min(right_min, curve[i]);
  }
  return height - std::max(left_min, right_min);
}

}  // namespace

std::vector<double> gaussian_smooth(const std::vector<double>& values, double sigma) {
  if (values.empty()) throw Error("gaussian_smooth needs a nonempty curve");
  if (sigma < 0.0) throw Error("gaussian_smooth sigma must be >= 0");
  if (sigma == 0.0) return values;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : kernel) v /= sum;

  const std::size_t n = values.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k)
      acc += kernel[static_cast<std::size_t>(k + radius)] *
             values[mirror_index(static_cast<long long>(t) + k, n)];
    out[t] = acc;
  }
  return out;
}

FlowCurve make_flow_curve(std::vector<double> raw, double sigma) {
  FlowCurve c;
  c.smoothed = gaussian_smooth(raw, sigma);
  c.raw = std::move(raw);
  c.sigma = sigma;
  return c;
}

std::vector<std::size_t> find_peaks(const std::vector<double>& curve, std::size_t min_distance,
                                    double prominence_min) {
  if (min_distance < 1) throw Error("find_peaks min_distance must be >= 1");
  if (prominence_min < 0.0) throw Error("find_peaks prominence_min must be >= 0");

  // Local maxima; a plateau counts once at its leftmost index.
  std::vector<std::size_t> candidates;
  const std::size_t n = curve.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(curve[i] > curve[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < n && curve[j + 1] == curve[i]) ++j;
    if (j + 1 < n && curve[j + 1] < curve[i]) candidates.push_back(i);
    i = j;  // skip the rest of the plateau
  }

  std::vector<std::size_t> qualified;
  for (std::size_t idx : candidates)
    if (peak_prominence(curve, idx) >= prominence_min) qualified.push_back(idx);

  std::stable_sort(qualified.begin(), qualified.end(), [&](std::size_t a, std::size_t b) {
    if (curve[a] != curve[b]) return curve[a] > curve[b];
    return a < b;
  });

  std::vector<std::size_t> kept;
  for (std::size_t idx : qualified) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      const std::size_t dist = idx > k ? idx - k : k - idx;
      if (dist <= min_distance) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

EventPartition build_partition(const std::vector<Peak>& peaks_by_height, std::size_t curve_len,
                               std::size_t total_frames, std::size_t p, std::size_t d) {
  if (total_frames != curve_len + 1)
    throw Error("partition: total frames must equal curve length + 1");

  EventPartition part;
  part.total_frames = total_frames;

  std::vector<EventWindow> raw;
  const std::size_t count = std::min(p, peaks_by_height.size());
  for (std::size_t i = 0; i < count; ++i) {
    const Peak& pk = peaks_by_height[i];
    if (pk.curve_index >= curve_len) throw Error("partition: peak index out of curve range");
    EventWindow w;
    w.center = pk.curve_index;
    w.peak_height = pk.height;
    w.lo = pk.curve_index >= d ? pk.curve_index - d : 0;
    w.hi = std::min(pk.curve_index + d + 1, total_frames - 1);
    raw.push_back(w);
  }
  std::sort(raw.begin(), raw.end(), [](const EventWindow& a, const EventWindow& b) {
    if (a.lo != b.lo) return a.lo < b.lo;
    return a.hi < b.hi;
  });

  for (const EventWindow& w : raw) {
    if (!part.windows.empty() && w.lo <= part.windows.back().hi) {
      EventWindow& prev = part.windows.back();
      prev.hi = std::max(prev.hi, w.hi);
      if (w.peak_height > prev.peak_height) {
        prev.peak_height = w.peak_height;
        prev.center = w.center;
      }
    } else {
      part.windows.push_back(w);
    }
  }

  std::vector<bool> covered(total_frames, false);
  for (const EventWindow& w : part.windows)
    for (std::size_t f = w.lo; f <= w.hi; ++f) covered[f] = true;
  for (std::size_t f = 0; f < total_frames; ++f)
    if (!covered[f]) part.non_event.push_back(f);
  return part;
}

SamplingPlan allocate_and_sample(const EventPartition& partition, std::size_t n) {
  if (n < 1) throw Error("sampling budget must be >= 1");
  if (n > partition.total_frames)
    throw Error("sampling budget " + std::to_string(n) + " exceeds frame count " +
                std::to_string(partition.total_frames));

  // Set 0 is non_event; sets 1.. are the windows in stored (ascending) order.
  const std::size_t set_count = partition.windows.size() + 1;
  std::vector<std::size_t> capacity(set_count);
  capacity[0] = partition.non_event.size();
  for (std::size_t i = 0; i < partition.windows.size(); ++i)
    capacity[i + 1] = partition.windows[i].hi - partition.windows[i].lo + 1;

  // Priority for remainder and spill: non_event first, then windows by
  // descending peak height (ties by window order).
  std::vector<std::size_t> priority(set_count);
  std::iota(priority.begin(), priority.end(), 0);
  std::stable_sort(priority.begin() + 1, priority.end(), [&](std::size_t a, std::size_t b) {
    return partition.windows[a - 1].peak_height > partition.windows[b - 1].peak_height;
  });

  std::vector<std::size_t> quota(set_count, n / set_count);
  std::size_t remainder = n % set_count;
  for (std::size_t rank = 0; rank < set_count && remainder > 0; ++rank) {
    quota[priority[rank]] += 1;
    --remainder;
  }

  // Spill surplus from over-quota sets into remaining capacity, in
  // priority order, until the budget fits.
  for (;;) {
    std::size_t surplus = 0;
    for (std::size_t s = 0; s < set_count; ++s) {
      if (quota[s] > capacity[s]) {
        surplus += quota[s] - capacity[s];
        quota[s] = capacity[s];
      }
    }
    if (surplus == 0) break;
    for (std::size_t rank = 0; rank < set_count && surplus > 0; ++rank) {
      const std::size_t s = priority[rank];
      const std::size_t room = capacity[s] - quota[s];
      const std::size_t take = std::min(room, surplus);
      quota[s] += take;
      surplus -= take;
    }
    if (surplus > 0)
      throw Error("internal: sampling budget exceeds total capacity");  // unreachable when n <= T
  }

  SamplingPlan plan;
  plan.partition = partition;
  plan.per_event_quota = quota;
  plan.config.n = n;

  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t s = 0; s < set_count; ++s) {
    if (quota[s] == 0) continue;
    if (s == 0) {
      for (std::size_t pos : even_positions(capacity[0], quota[0]))
        picked.push_back(partition.non_event[pos]);
    } else {
      const EventWindow& w = partition.windows[s - 1];
      for (std::size_t pos : even_positions(capacity[s], quota[s]))
        picked.push_back(w.lo + pos);
    }
  }
  std::sort(picked.begin(), picked.end());
  plan.indices = std::move(picked);
  if (plan.indices.size() != n ||
      std::adjacent_find(plan.indices.begin(), plan.indices.end()) != plan.indices.end())
    throw Error("internal: sampling produced a malformed plan");
  return plan;
}

std::vector<std::size_t> uniform_indices(std::size_t total_frames, std::size_t n) {
  if (n < 1 || n > total_frames) throw Error("uniform sampling budget out of range");
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t pos : even_positions(total_frames, n)) out.push_back(pos);
  return out;
}

void SamplerConfig::validate() const {
  if (n < 1) throw Error("sampler n must be >= 1");
  if (sigma < 0.0) throw Error("sampler sigma must be >= 0");
  if (prominence_frac < 0.0 || prominence_frac > 1.0)
    throw Error("sampler prominence_frac must be in [0, 1]");
  if (min_distance && *min_distance < 1) throw Error("sampler min_distance must be >= 1");
}

FlowCurve flow_curve_for(const VideoFrames& video, const SamplerConfig& cfg,
                         const FlowParams& flow, int jobs) {
  cfg.validate();
  return make_flow_curve(compute_flow_curve(video, flow, jobs), cfg.sigma);
}

SamplingPlan sample_from_curve(const FlowCurve& curve, std::size_t total_frames,
                               const SamplerConfig& cfg, const FlowParams& flow) {
  cfg.validate();
  if (curve.smoothed.size() + 1 != total_frames)
    throw Error("flow curve length does not match frame count");
  if (cfg.n > total_frames)
    throw Error("sampling budget " + std::to_string(cfg.n) + " exceeds frame count " +
                std::to_string(total_frames));

  const auto [min_it, max_it] = std::minmax_element(curve.smoothed.begin(), curve.smoothed.end());
  const double prominence_min = cfg.prominence_frac * (*max_it - *min_it);
  const auto peak_indices =
      find_peaks(curve.smoothed, cfg.effective_min_distance(), prominence_min);

  std::vector<Peak> peaks;
  peaks.reserve(peak_indices.size());
  for (std::size_t idx : peak_indices) peaks.push_back(Peak{idx, curve.smoothed[idx]});

  const EventPartition part =
      build_partition(peaks, curve.smoothed.size(), total_frames, cfg.p, cfg.d);
  SamplingPlan plan = allocate_and_sample(part, cfg.n);
  plan.config = cfg;
  plan.flow = flow;
  return plan;
}

SamplingPlan sample_frames(const VideoFrames& video, const SamplerConfig& cfg,
                           const FlowParams& flow, int jobs) {
  const FlowCurve curve = flow_curve_for(video, cfg, flow, jobs);
  return sample_from_curve(curve, video.frame_count(), cfg, flow);
}

}  // namespace stimusel
