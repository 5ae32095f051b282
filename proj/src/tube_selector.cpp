#include "stimusel/tube_selector.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "stimusel/error.hpp"

namespace stimusel {

namespace {

// GELU, tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715 x^3))).
double gelu_tanh(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  constexpr double kCubicCoeff = 0.044715;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kCubicCoeff * x * x * x)));
}

std::size_t checked_square_root(std::size_t l) {
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(l))));
  if (g * g != l)
    throw Error("token count " + std::to_string(l) + " is not a perfect square");
  return g;
}

}  // namespace

std::size_t TokenGrid::grid_side() const { return checked_square_root(tokens_per_frame()); }

void TokenGrid::validate() const {
  patch_tokens.validate();
  if (patch_tokens.rank() != 3) throw Error("patch tokens must be [N, L, C]");
  checked_square_root(tokens_per_frame());
  if (cls_tokens) {
    cls_tokens->validate();
    if (cls_tokens->rank() != 2 || cls_tokens->dims[0] != patch_tokens.dims[0] ||
        cls_tokens->dims[1] != patch_tokens.dims[2])
      throw Error("cls tokens must be [N, C] matching the patch tokens");
  }
}

Activation activation_from_name(const std::string& name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw Error("unknown activation '" + name + "' (expected gelu|relu|tanh|identity)");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  throw Error("invalid activation code");
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::kGelu: return gelu_tanh(x);
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kIdentity: return x;
  }
  throw Error("invalid activation code");
}

void ScorerWeights::validate() const {
  w1.validate();
  b1.validate();
  w2.validate();
  b2.validate();
  if (w1.rank() != 2) throw Error("scorer w1 must be [H, C]");
  const auto h = w1.dims[0];
  if (b1.rank() != 1 || b1.dims[0] != h) throw Error("scorer b1 must be [H]");
  if (w2.rank() != 2 || w2.dims[0] != 1 || w2.dims[1] != h) throw Error("scorer w2 must be [1, H]");
  if (b2.rank() != 1 || b2.dims[0] != 1) throw Error("scorer b2 must be [1]");
}

ScorerWeights make_random_scorer(std::size_t channels, std::size_t hidden, std::uint64_t seed,
                                 Activation activation) {
  if (channels == 0 || hidden == 0) throw Error("scorer dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  // Uniform in [-a, a) derived directly from the raw 64-bit stream so the
  // values do not depend on the standard library's distribution code.
  const auto uniform = [&rng](double a) {
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    return a * (2.0 * unit - 1.0);
  };

  ScorerWeights s;
  s.activation = activation;
  const double a1 = std::sqrt(6.0 / static_cast<double>(channels + hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  s.w1 = Tensor::zeros({hidden, channels});
  s.b1 = Tensor::zeros({hidden});
  s.w2 = Tensor::zeros({1, hidden});
  s.b2 = Tensor::zeros({1});
  for (auto& v : s.w1.data) v = static_cast<float>(uniform(a1));
  for (auto& v : s.w2.data) v = static_cast<float>(uniform(a2));
  return s;
}

ScorerWeights scorer_from_bundle(const WeightBundle& bundle) {
  ScorerWeights s;
  s.w1 = bundle.get("w1");
  s.b1 = bundle.get("b1");
  s.w2 = bundle.get("w2");
  s.b2 = bundle.get("b2");
  if (bundle.contains("activation")) {
    const Tensor& act = bundle.get("activation");
    if (act.data.size() != 1) throw Error("bundle 'activation' entry must hold one value");
    const int code = static_cast<int>(act.data[0]);
    if (code < 0 || code > 3) throw Error("bundle 'activation' code out of range");
    s.activation = static_cast<Activation>(code);
  }
  s.validate();
  return s;
}

WeightBundle scorer_to_bundle(const ScorerWeights& weights) {
  weights.validate();
  WeightBundle b;
  b.entries["w1"] = weights.w1;
  b.entries["b1"] = weights.b1;
  b.entries["w2"] = weights.w2;
  b.entries["b2"] = weights.b2;
  b.entries["activation"] =
      Tensor({1}, {static_cast<float>(static_cast<int>(weights.activation))});
  return b;
}

std::array<std::size_t, 3> TubeGeometry::counts(std::size_t frames, std::size_t grid_side) const {
  for (std::size_t i = 0; i < 3; ++i) {
    if (shape[i] == 0 || stride[i] == 0) throw Error("tube shape and stride must be >= 1");
  }
  const std::array<std::size_t, 3> extent{frames, grid_side, grid_side};
  std::array<std::size_t, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (shape[i] > extent[i])
      throw Error("tube shape " + std::to_string(shape[i]) + " exceeds volume extent " +
                  std::to_string(extent[i]));
    out[i] = (extent[i] - shape[i]) / stride[i] + 1;
  }
  return out;
}

Tensor score_tokens(const TokenGrid& grid, const ScorerWeights& weights) {
  grid.validate();
  weights.validate();
  if (grid.channels() != weights.input_width())
    throw Error("token channel width " + std::to_string(grid.channels()) +
                " does not match scorer input width " + std::to_string(weights.input_width()));

  const std::size_t n = grid.frames();
  const std::size_t l = grid.tokens_per_frame();
  const std::size_t c = grid.channels();
  const std::size_t h = weights.hidden();

  Tensor scores = Tensor::zeros({n, l});
  std::vector<double> hidden(h);
  const float* token = grid.patch_tokens.data.data();
  for (std::size_t i = 0; i < n * l; ++i, token += c) {
    for (std::size_t j = 0; j < h; ++j) {
      const float* wrow = weights.w1.data.data() + j * c;
      double acc = weights.b1.data[j];
      for (std::size_t k = 0; k < c; ++k) acc += static_cast<double>(wrow[k]) * token[k];
      hidden[j] = apply_activation(weights.activation, acc);
    }
    double out = weights.b2.data[0];
    for (std::size_t j = 0; j < h; ++j) out += static_cast<double>(weights.w2.data[j]) * hidden[j];
    scores.data[i] = static_cast<float>(out);
  }
  return scores;
}

Tensor reshape_scores(const Tensor& scores) {
  scores.validate();
  if (scores.rank() != 2) throw Error("scores must be [N, L]");
  const std::size_t g = checked_square_root(static_cast<std::size_t>(scores.dims[1]));
  Tensor volume = scores;
  volume.dims = {scores.dims[0], g, g};
  return volume;
}

Tensor partition_tubes(const Tensor& volume, const TubeGeometry& geo) {
  volume.validate();
  if (volume.rank() != 3 || volume.dims[1] != volume.dims[2])
    throw Error("score volume must be [N, G, G]");
  const std::size_t n = static_cast<std::size_t>(volume.dims[0]);
  const std::size_t g = static_cast<std::size_t>(volume.dims[1]);
  const auto counts = geo.counts(n, g);

  Tensor tubes = Tensor::zeros({counts[0], counts[1], counts[2]});
  const double inv = 1.0 / static_cast<double>(geo.shape[0] * geo.shape[1] * geo.shape[2]);
  std::size_t out = 0;
  for (std::size_t ti = 0; ti < counts[0]; ++ti) {
    for (std::size_t hi = 0; hi < counts[1]; ++hi) {
      for (std::size_t wi = 0; wi < counts[2]; ++wi, ++out) {
        double acc = 0.0;
        for (std::size_t dt = 0; dt < geo.shape[0]; ++dt) {
          const std::size_t t = ti * geo.stride[0] + dt;
          for (std::size_t dh = 0; dh < geo.shape[1]; ++dh) {
            const std::size_t y = hi * geo.stride[1] + dh;
            const float* row = volume.data.data() + (t * g + y) * g + wi * geo.stride[2];
            for (std::size_t dw = 0; dw < geo.shape[2]; ++dw) acc += row[dw];
          }
        }
        tubes.data[out] = static_cast<float>(acc * inv);
      }
    }
  }
  return tubes;
}

TubeSelection select_top_k(const Tensor& tube_scores, std::size_t k) {
  tube_scores.validate();
  if (tube_scores.rank() != 3) throw Error("tube scores must be [n_t, n_h, n_w]");
  const std::size_t total = tube_scores.numel();
  if (k < 1 || k > total)
    throw Error("top-k count " + std::to_string(k) + " out of range [1, " + std::to_string(total) +
                "]");

  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (tube_scores.data[a] != tube_scores.data[b])
                        return tube_scores.data[a] > tube_scores.data[b];
                      return a < b;
                    });

  const std::size_t nh = static_cast<std::size_t>(tube_scores.dims[1]);
  const std::size_t nw = static_cast<std::size_t>(tube_scores.dims[2]);
  TubeSelection sel;
  sel.tube_scores = tube_scores;
  sel.selected.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t lin = order[r];
    SelectedTube t;
    t.linear_index = lin;
    t.score = tube_scores.data[lin];
    t.coord = {lin / (nh * nw), (lin / nw) % nh, lin % nw};
    sel.selected.push_back(t);
  }
  return sel;
}

GatheredTokens gather_tokens(const TokenGrid& grid, const TubeSelection& selection,
                             const TubeGeometry& geo) {
  grid.validate();
  const std::size_t n = grid.frames();
  const std::size_t g = grid.grid_side();
  const std::size_t c = grid.channels();
  const auto counts = geo.counts(n, g);
  if (selection.tube_scores.dims !=
      std::vector<std::uint64_t>{counts[0], counts[1], counts[2]})
    throw Error("tube selection does not match this grid's geometry");

  const std::size_t per_tube = geo.shape[0] * geo.shape[1] * geo.shape[2];
  GatheredTokens out;
  out.spatial = Tensor::zeros({selection.selected.size() * per_tube, c});
  float* dst = out.spatial.data.data();
  for (const SelectedTube& tube : selection.selected) {
    for (std::size_t dt = 0; dt < geo.shape[0]; ++dt) {
      const std::size_t frame = tube.coord[0] * geo.stride[0] + dt;
      for (std::size_t dh = 0; dh < geo.shape[1]; ++dh) {
        const std::size_t y = tube.coord[1] * geo.stride[1] + dh;
        for (std::size_t dw = 0; dw < geo.shape[2]; ++dw) {
          const std::size_t x = tube.coord[2] * geo.stride[2] + dw;
          const std::size_t token = y * g + x;
          const float* src =
              grid.patch_tokens.data.data() + (frame * g * g + token) * c;
          std::copy(src, src + c, dst);
          dst += c;
        }
      }
    }
  }
  if (grid.cls_tokens) out.temporal = *grid.cls_tokens;
  return out;
}

TubePipelineResult select_pipeline(const TokenGrid& grid, const ScorerWeights& weights,
                                   const TubeGeometry& geo, std::size_t k) {
  TubePipelineResult result;
  const Tensor scores = score_tokens(grid, weights);
  result.score_volume = reshape_scores(scores);
  const Tensor tube_scores = partition_tubes(result.score_volume, geo);
  result.selection = select_top_k(tube_scores, k);
  result.tokens = gather_tokens(grid, result.selection, geo);
  return result;
}

}  // namespace stimusel
