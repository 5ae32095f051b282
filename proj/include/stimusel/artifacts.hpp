#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "stimusel/event_sampler.hpp"
#include "stimusel/tube_selector.hpp"

namespace stimusel {

inline constexpr int kArtifactSchemaVersion = 1;

/// Common artifact header: {"schema_version": ..., "command": ...,
/// "config": ...}. Command payloads are merged into the same object.
nlohmann::ordered_json artifact_envelope(const std::string& command,
                                         const nlohmann::ordered_json& config);

nlohmann::ordered_json sampler_config_to_json(const SamplerConfig& cfg);
nlohmann::ordered_json flow_params_to_json(const FlowParams& params);

/// Plan payload: indices, per-set quotas, windows, non-event size, curve.
nlohmann::ordered_json plan_to_json(const SamplingPlan& plan);

/// Selection payload: geometry, tube counts, ranked tubes with coords and
/// scores, gathered token counts.
nlohmann::ordered_json selection_to_json(const TubePipelineResult& result,
                                         const TubeGeometry& geo, std::size_t k);

void write_json_artifact(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

}  // namespace stimusel
