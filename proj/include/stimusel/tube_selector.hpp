#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stimusel/tensor.hpp"

namespace stimusel {

/// Per-frame patch tokens [N, L, C] with L a perfect square, plus
/// optional per-frame CLS tokens [N, C].
struct TokenGrid {
  Tensor patch_tokens;
  std::optional<Tensor> cls_tokens;

  std::size_t frames() const { return static_cast<std::size_t>(patch_tokens.dims[0]); }
  std::size_t tokens_per_frame() const { return static_cast<std::size_t>(patch_tokens.dims[1]); }
  std::size_t channels() const { return static_cast<std::size_t>(patch_tokens.dims[2]); }
  std::size_t grid_side() const;

  void validate() const;
};

enum class Activation { kGelu, kRelu, kTanh, kIdentity };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);
double apply_activation(Activation a, double x);

/// Two-layer perceptron C -> H -> 1 used as the token scorer.
struct ScorerWeights {
  Tensor w1;  // [H, C]
  Tensor b1;  // [H]
  Tensor w2;  // [1, H]
  Tensor b2;  // [1]
  Activation activation = Activation::kGelu;

  std::size_t hidden() const { return static_cast<std::size_t>(w1.dims[0]); }
  std::size_t input_width() const { return static_cast<std::size_t>(w1.dims[1]); }
  void validate() const;
};

/// Deterministic random scorer for tests and fixtures; weights are
/// uniform in +-sqrt(6/(fan_in+fan_out)) drawn from mt19937_64(seed).
ScorerWeights make_random_scorer(std::size_t channels, std::size_t hidden, std::uint64_t seed,
                                 Activation activation = Activation::kGelu);

// Bundle entry names: "w1", "b1", "w2", "b2", optional "activation"
// ([1] tensor holding the Activation enum code; absent means gelu).
ScorerWeights scorer_from_bundle(const WeightBundle& bundle);
WeightBundle scorer_to_bundle(const ScorerWeights& weights);

/// Tube shape and stride over the [N, G, G] score volume, h before w.
struct TubeGeometry {
  std::array<std::size_t, 3> shape{2, 4, 4};    // (t, h, w)
  std::array<std::size_t, 3> stride{2, 4, 4};   // (d_t, d_h, d_w)

  /// Tube counts (n_t, n_h, n_w) = (floor((N-t)/d_t)+1, ...). Throws if
  /// the tube does not fit the volume.
  std::array<std::size_t, 3> counts(std::size_t frames, std::size_t grid_side) const;
};

struct SelectedTube {
  std::array<std::size_t, 3> coord{};  // (ti, hi, wi)
  float score = 0.0f;
  std::size_t linear_index = 0;        // t-major, then h, then w
};

struct TubeSelection {
  Tensor tube_scores;                 // [n_t, n_h, n_w]
  std::vector<SelectedTube> selected; // descending score, ties by linear index
};

/// c = S(k): per-token scalar w2 . act(w1 . token + b1) + b2, as [N, L].
Tensor score_tokens(const TokenGrid& grid, const ScorerWeights& weights);

/// Row-major reshape of [N, L] scores into the [N, G, G] volume.
Tensor reshape_scores(const Tensor& scores);

/// Mean score per tube over the strided t x h x w blocks.
Tensor partition_tubes(const Tensor& volume, const TubeGeometry& geo);

TubeSelection select_top_k(const Tensor& tube_scores, std::size_t k);

struct GatheredTokens {
  Tensor spatial;                   // [K*t*h*w, C], selection order, (t,h,w) row-major in a tube
  std::optional<Tensor> temporal;   // CLS tokens [N, C], forwarded untouched
};

GatheredTokens gather_tokens(const TokenGrid& grid, const TubeSelection& selection,
                             const TubeGeometry& geo);

struct TubePipelineResult {
  TubeSelection selection;
  GatheredTokens tokens;
  Tensor score_volume;  // [N, G, G], for visualization
};

TubePipelineResult select_pipeline(const TokenGrid& grid, const ScorerWeights& weights,
                                   const TubeGeometry& geo, std::size_t k);

}  // namespace stimusel
