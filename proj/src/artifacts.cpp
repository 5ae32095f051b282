#include "stimusel/artifacts.hpp"

#include <fstream>

#include "stimusel/error.hpp"

namespace stimusel {

using ordered_json = nlohmann::ordered_json;

ordered_json artifact_envelope(const std::string& command, const ordered_json& config) {
  ordered_json doc;
  doc["schema_version"] = kArtifactSchemaVersion;
  doc["command"] = command;
  doc["config"] = config;
  return doc;
}

ordered_json sampler_config_to_json(const SamplerConfig& cfg) {
  ordered_json out;
  out["n"] = cfg.n;
  out["p"] = cfg.p;
  out["d"] = cfg.d;
  out["sigma"] = cfg.sigma;
  out["min_distance"] = cfg.effective_min_distance();
  out["prominence_frac"] = cfg.prominence_frac;
  return out;
}

ordered_json flow_params_to_json(const FlowParams& params) {
  ordered_json out;
  out["window_radius"] = params.window_radius;
  out["presmooth_sigma"] = params.presmooth_sigma;
  out["eps"] = params.eps;
  out["downscale"] = params.downscale;
  return out;
}

ordered_json plan_to_json(const SamplingPlan& plan) {
  ordered_json out;
  out["total_frames"] = plan.partition.total_frames;
  out["n"] = plan.indices.size();
  out["indices"] = plan.indices;
  out["quotas"] = plan.per_event_quota;
  ordered_json windows = ordered_json::array();
  for (const auto& win : plan.partition.windows) {
    ordered_json w;
    w["lo"] = win.lo;
    w["hi"] = win.hi;
    w["center"] = win.center;
    w["peak_height"] = win.peak_height;
    windows.push_back(w);
  }
  out["windows"] = windows;
  out["non_event_frames"] = plan.partition.non_event.size();
  return out;
}

ordered_json selection_to_json(const TubePipelineResult& result, const TubeGeometry& geo,
                               std::size_t k) {
  ordered_json out;
  out["tube_shape"] = geo.shape;
  out["tube_stride"] = geo.stride;
  const auto& dims = result.selection.tube_scores.dims;
  out["tube_counts"] = {dims[0], dims[1], dims[2]};
  out["tubes_total"] = dims[0] * dims[1] * dims[2];
  out["k"] = k;
  ordered_json tubes = ordered_json::array();
  for (const auto& tube : result.selection.selected) {
    ordered_json t;
    t["coord"] = tube.coord;
    t["linear_index"] = tube.linear_index;
    t["score"] = tube.score;
    tubes.push_back(t);
  }
  out["selected"] = tubes;
  out["spatial_tokens"] = result.tokens.spatial.dims[0];
  out["token_channels"] = result.tokens.spatial.dims[1];
  out["has_temporal_tokens"] = result.tokens.temporal.has_value();
  return out;
}

void write_json_artifact(const std::filesystem::path& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write artifact: " + path.string());
  out << doc.dump(2) << "\n";
  if (!out.good()) throw Error("short write to artifact: " + path.string());
}

}  // namespace stimusel
