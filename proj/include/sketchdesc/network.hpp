#pragma once

// Multi-scale descriptor network: one convolutional branch applied to each of
// the four 32x32 scale channels (a single shared parameter set by default),
// branch outputs concatenated, a fully connected fusion to 128 dimensions and
// L2 normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sketchdesc/autodiff.hpp"
#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/parallel.hpp"
#include "sketchdesc/patch.hpp"
#include "sketchdesc/rng.hpp"
#include "sketchdesc/tensor.hpp"

namespace sketchdesc {

inline constexpr int kDescriptorDim = 128;

struct NetConfig {
  double width = 1.0;                // channel multiplier on 32,32,64,64,128,128,128
  std::vector<int> scales{0, 1, 2, 3};  // active scale channels, ascending
  bool shared = true;                // one branch for all scales
  double input_mean = 0.1;
  double input_std = 0.3;

  std::array<int, 7> channels() const {
    constexpr std::array<int, 7> base{32, 32, 64, 64, 128, 128, 128};
    std::array<int, 7> out{};
    for (int i = 0; i < 7; ++i) out[i] = std::max(1, static_cast<int>(std::lround(base[i] * width)));
    return out;
  }

  int branch_count() const { return shared ? 1 : static_cast<int>(scales.size()); }

  void validate() const {
    require(width > 0.0 && width <= 4.0, "width multiplier must lie in (0, 4]");
    require(!scales.empty() && scales.size() <= 4, "between 1 and 4 scales must be active");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      require(scales[i] >= 0 && scales[i] < 4, "scale index must be 0..3");
      require(i == 0 || scales[i] > scales[i - 1], "scales must be strictly ascending");
    }
    require(input_std > 0.0, "input std must be positive");
  }

  nlohmann::json to_json() const {
    return {{"width", width}, {"scales", scales}, {"shared", shared}, {"input_mean", input_mean}, {"input_std", input_std}};
  }

  static NetConfig from_json(const nlohmann::json& j) {
    NetConfig c;
    c.width = j.at("width").get<double>();
    c.scales = j.at("scales").get<std::vector<int>>();
    c.shared = j.at("shared").get<bool>();
    c.input_mean = j.at("input_mean").get<double>();
    c.input_std = j.at("input_std").get<double>();
    c.validate();
    return c;
  }

  /// FNV-1a over the layer layout (not the input transform).
  std::uint64_t architecture_hash() const {
    std::string key = "sketchdesc-l2branch;";
    for (int ch : channels()) key += std::to_string(ch) + ",";
    key += ";scales=";
    for (int s : scales) key += std::to_string(s);
    key += shared ? ";shared" : ";unshared";
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : key) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  bool operator==(const NetConfig&) const = default;
};

struct LayerSpec {
  int in, out, kernel, stride, pad;
  bool relu;
};

inline std::array<LayerSpec, 7> branch_layers(const NetConfig& cfg) {
  const auto c = cfg.channels();
  return {{{1, c[0], 3, 1, 1, true},
           {c[0], c[1], 3, 1, 1, true},
           {c[1], c[2], 3, 2, 1, true},
           {c[2], c[3], 3, 1, 1, true},
           {c[3], c[4], 3, 2, 1, true},
           {c[4], c[5], 3, 1, 1, true},
           {c[5], c[6], 8, 1, 0, false}}};
}

/// Closed-form trainable parameter count of a configuration.
inline std::size_t parameter_count(const NetConfig& cfg) {
  std::size_t branch = 0;
  for (const auto& l : branch_layers(cfg)) branch += static_cast<std::size_t>(l.out) * l.in * l.kernel * l.kernel;
  const std::size_t fusion_in = static_cast<std::size_t>(cfg.channels()[6]) * cfg.scales.size();
  return branch * cfg.branch_count() + fusion_in * kDescriptorDim + kDescriptorDim;
}

template <typename T>
struct Branch {
  std::vector<Parameter<T>> convs;
  std::vector<BatchNormState<T>> norms;
};

template <typename T>
class SketchDescNet {
 public:
  explicit SketchDescNet(NetConfig cfg = {}, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto layers = branch_layers(cfg_);
    branches_.resize(cfg_.branch_count());
    for (int b = 0; b < cfg_.branch_count(); ++b) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        branches_[b].convs.emplace_back("branch" + std::to_string(b) + ".conv" + std::to_string(i + 1) + ".weight",
                                        std::vector<int>{l.out, l.in, l.kernel, l.kernel});
        branches_[b].norms.emplace_back(l.out);
      }
    }
    const int fusion_in = layers.back().out * static_cast<int>(cfg_.scales.size());
    fusion_weight_ = Parameter<T>("fusion.weight", {kDescriptorDim, fusion_in});
    fusion_bias_ = Parameter<T>("fusion.bias", {kDescriptorDim});
    initialize(seed);
  }

  const NetConfig& config() const { return cfg_; }

  /// Xavier-uniform weights, zero bias, fresh normalization statistics.
  void initialize(std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x1417);
    for (auto* p : parameters()) {
      if (p == &fusion_bias_) {
        std::fill(p->value.values.begin(), p->value.values.end(), T(0));
        continue;
      }
      const auto& s = p->value.shape;
      const double receptive = s.size() == 4 ? static_cast<double>(s[2]) * s[3] : 1.0;
      const double bound = std::sqrt(6.0 / ((s[0] + s[1]) * receptive));
      for (auto& v : p->value.values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    for (auto& br : branches_)
      for (auto& n : br.norms) n = BatchNormState<T>(static_cast<int>(n.running_mean.size()));
  }

  /// Trainable parameters in declaration order.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& br : branches_)
      for (auto& c : br.convs) out.push_back(&c);
    out.push_back(&fusion_weight_);
    out.push_back(&fusion_bias_);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (auto* p : const_cast<SketchDescNet*>(this)->parameters()) out.push_back(p);
    return out;
  }

  /// Every stored tensor (parameters, then normalization statistics), named.
  std::vector<std::pair<std::string, Tensor<T>*>> state() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      for (std::size_t i = 0; i < branches_[b].norms.size(); ++i) {
        const std::string prefix = "branch" + std::to_string(b) + ".bn" + std::to_string(i + 1);
        out.emplace_back(prefix + ".running_mean", &branches_[b].norms[i].running_mean);
        out.emplace_back(prefix + ".running_var", &branches_[b].norms[i].running_var);
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
  }

  /// Weight of the current batch in running-statistics updates (Train mode).
  void set_norm_momentum(double m) {
    require(m > 0.0 && m <= 1.0, "normalization momentum must lie in (0, 1]");
    norm_momentum_ = m;
  }
  double norm_momentum() const { return norm_momentum_; }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Buffer of the parameters read by the branch serving `scale_slot`.
  const Parameter<T>& branch_parameter(int scale_slot, int layer) const {
    return branches_[cfg_.shared ? 0 : scale_slot].convs[layer];
  }

  /// One branch on x [M, 1, 32, 32] (already standardized) -> [M, C].
  Var branch_forward(Tape<T>& tape, Var x, int branch, Mode mode) {
    const auto layers = branch_layers(cfg_);
    Branch<T>& br = branches_.at(branch);
    Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = ops::conv2d(tape, h, tape.parameter(br.convs[i]), layers[i].stride, layers[i].pad);
      h = ops::batch_norm(tape, h, br.norms[i], mode, norm_momentum_);
      if (layers[i].relu) h = ops::relu(tape, h);
    }
    const int m = tape.value(h).dim(0);
    return ops::reshape(tape, h, {m, layers.back().out});
  }

  /// patches [N, 4, 32, 32] of raw ink values -> unit descriptors [N, 128].
  Var forward(Tape<T>& tape, const Tensor<T>& patches, Mode mode) {
    require(patches.rank() == 4 && patches.dim(1) == 4 && patches.dim(2) == kPatchSide && patches.dim(3) == kPatchSide,
            "network input must be [N, 4, 32, 32]");
    const int n = patches.dim(0);
    require(n > 0, "empty network input");
    const int k = static_cast<int>(cfg_.scales.size());
    auto scale_input = [&](int first_slot, int slots) {
      Tensor<T> x({n * slots, 1, kPatchSide, kPatchSide});
      for (int s = 0; s < slots; ++s) {
        const int scale = cfg_.scales[first_slot + s];
        for (int i = 0; i < n; ++i) {
          const T* src = patches.data() + (static_cast<std::size_t>(i) * 4 + scale) * kPatchPixels;
          T* dst = x.data() + (static_cast<std::size_t>(s) * n + i) * kPatchPixels;
          for (int p = 0; p < kPatchPixels; ++p) dst[p] = standardize(src[p]);
        }
      }
      return tape.input(std::move(x));
    };
    Var stacked;
    if (cfg_.shared) {
      stacked = branch_forward(tape, scale_input(0, k), 0, mode);
    } else {
      std::vector<Var> outs;
      for (int s = 0; s < k; ++s) outs.push_back(branch_forward(tape, scale_input(s, 1), s, mode));
      stacked = ops::stack_rows(tape, outs);
    }
    const Var fused = ops::linear(tape, ops::regroup(tape, stacked, k), tape.parameter(fusion_weight_), tape.parameter(fusion_bias_));
    return ops::l2_normalize(tape, fused);
  }

  /// Inference on one 32x32 raster through one branch -> branch output vector.
  std::vector<T> branch_forward(const Grid<float>& patch32, int branch = 0) {
    require(patch32.rows() == kPatchSide && patch32.cols() == kPatchSide, "branch input must be 32x32");
    Tensor<T> x({1, 1, kPatchSide, kPatchSide});
    for (int i = 0; i < kPatchPixels; ++i) x[i] = standardize(patch32.data()[i]);
    Tape<T> tape;
    const Var out = branch_forward(tape, tape.input(std::move(x)), branch, Mode::Inference);
    return tape.value(out).values;
  }

  /// Inference-mode descriptors, row-major [patches.size(), 128].
  std::vector<T> describe(const std::vector<MultiScalePatch>& patches, int threads = 1, std::size_t chunk = 32) {
    std::vector<T> out(patches.size() * kDescriptorDim);
    const std::size_t chunks = (patches.size() + chunk - 1) / chunk;
    parallel_for(chunks, threads, [&](std::size_t c) {
      const std::size_t first = c * chunk, count = std::min(chunk, patches.size() - first);
      Tensor<T> x({static_cast<int>(count), 4, kPatchSide, kPatchSide});
      for (std::size_t i = 0; i < count; ++i)
        std::transform(patches[first + i].data.begin(), patches[first + i].data.end(), x.data() + i * 4 * kPatchPixels,
                       [](float v) { return static_cast<T>(v); });
      Tape<T> tape;
      const Var d = forward(tape, x, Mode::Inference);
      std::copy(tape.value(d).values.begin(), tape.value(d).values.end(), out.begin() + static_cast<std::ptrdiff_t>(first * kDescriptorDim));
    });
    return out;
  }

  /// Copies every stored tensor from another precision.
  template <typename U>
  void copy_from(SketchDescNet<U>& other) {
    require(other.config() == cfg_, "network configurations differ");
    auto dst = state();
    auto src = other.state();
    for (std::size_t i = 0; i < dst.size(); ++i)
      std::transform(src[i].second->values.begin(), src[i].second->values.end(), dst[i].second->values.begin(),
                     [](U v) { return static_cast<T>(v); });
  }

 private:
  T standardize(float v) const { return static_cast<T>((v - cfg_.input_mean) / cfg_.input_std); }

  NetConfig cfg_;
  double norm_momentum_ = 0.1;
  std::vector<Branch<T>> branches_;
  Parameter<T> fusion_weight_;
  Parameter<T> fusion_bias_;
};

/// Copies patches into a [N, 4, 32, 32] network input.
template <typename T>
Tensor<T> patch_tensor(const std::vector<MultiScalePatch>& patches) {
  Tensor<T> x({static_cast<int>(patches.size()), 4, kPatchSide, kPatchSide});
  for (std::size_t i = 0; i < patches.size(); ++i)
    std::transform(patches[i].data.begin(), patches[i].data.end(), x.data() + i * 4 * kPatchPixels,
                   [](float v) { return static_cast<T>(v); });
  return x;
}

}  // namespace sketchdesc
