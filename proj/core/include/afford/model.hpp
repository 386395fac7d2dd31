#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afford/adam.hpp"
#include "afford/graph.hpp"
#include "afford/replay.hpp"
#include "afford/rng.hpp"
#include "afford/scene.hpp"

namespace afford {

/// U-Net-style ensemble: shared encoder (8 k3/s1, 16 k5/s2, 16 k5/s2),
/// mirrored decoders with 2x bilinear upsampling, skip connections at the two
/// stride-2 levels, orientation one-hot concatenated to the bottleneck.
struct ModelConfig {
  int height = 64, width = 64;
  int ensemble_size = 5;
  int orientation_count = kOrientationCount;
  AdamConfig adam;          // lr 3e-4, the usual betas
  double prob_clamp = 1e-7; // BCE log clamp
  // Train per-pixel losses through receptive-field windows instead of
  // full-image passes. Exact same arithmetic restricted to the dependency
  // cone of the supervised pixel, ~25x fewer flops at 64x64.
  bool focused_training = true;

  void validate() const;
};

struct UpdateStats {
  int steps = 0;
  double mean_loss = 0.0;
  std::vector<int> last_step_indices;  // sampled transition indices, multiplicity expanded
};

class EnsembleModel {
 public:
  EnsembleModel(ModelConfig config, Rng& init_rng);
  EnsembleModel(const EnsembleModel&) = delete;
  EnsembleModel& operator=(const EnsembleModel&) = delete;

  const ModelConfig& config() const { return config_; }
  int ensemble_size() const { return config_.ensemble_size; }

  /// P(success | x, p, q, theta_member) for every pixel p. Values strictly in (0,1).
  Tensor forward_member(const SceneObservation& obs, int orientation, int member) const;

  struct ForwardAll {
    std::vector<Tensor> member_grids;  // N x [H,W]
    Tensor mean_grid;                  // [H,W], per-cell average
  };
  /// Encoder evaluated once, decoders N times.
  ForwardAll forward_all(const SceneObservation& obs, int orientation) const;

  struct MapStack {
    std::vector<Tensor> member_maps;  // N x [Q,H,W]
    Tensor mean_map;                  // [Q,H,W]
  };
  /// Full per-orientation maps; encoder evaluated once for the whole stack.
  MapStack affordance_maps(const SceneObservation& obs) const;

  /// `steps` Adam steps on the ensemble BCE over uniformly sampled batches
  /// (with replacement only when the buffer is smaller than the batch).
  /// Every member consumes every sampled transition; gradients are zeroed
  /// after each step.
  UpdateStats update(const ReplayBuffer& buffer, int steps, int batch_size, Rng& rng);

  /// Ensemble BCE (sum over members, mean over batch) on precomputed
  /// member probabilities. member_probs[m][n] pairs with labels[n].
  static double ensemble_bce(const std::vector<std::vector<double>>& member_probs,
                             const std::vector<double>& labels, double clamp = 1e-7);

  /// Records the forward pass and BCE for one (x, a, b) sample on the graph;
  /// returns the scalar loss node (scale multiplies the sample's loss terms).
  Graph::Ref build_sample_loss(Graph& g, const SceneObservation& obs, const Action& action, double label,
                               double scale, bool focused);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  AdamState& optimizer() { return adam_; }

  // Instrumentation: forward-pass counts (shared-encoder accounting).
  std::uint64_t encoder_passes() const { return encoder_passes_; }
  std::uint64_t decoder_passes() const { return decoder_passes_; }

 private:
  struct ConvLayer {
    Parameter weights;  // [Cout,Cin,k,k]
    Parameter bias;     // [Cout]
    int kernel = 0, stride = 1, padding = 0;
  };
  struct Decoder {
    ConvLayer d1, d2, d3, head;
  };

  struct EncoderActs {
    Tensor e1, e2, e3;  // post-ReLU activations
  };
  EncoderActs encode(const Tensor& input) const;
  Tensor decode(const EncoderActs& acts, int member, int orientation) const;  // [H,W] probabilities
  Tensor observation_input(const SceneObservation& obs) const;

  Graph::Ref build_sample_loss_dense(Graph& g, const Tensor& input, const Action& action, double label,
                                     double scale);
  Graph::Ref build_sample_loss_focused(Graph& g, const Tensor& input, const Action& action, double label,
                                       double scale);

  ConvLayer make_conv(int cout, int cin, int k, int stride, int padding, const std::string& name, Rng& rng,
                      int& next_id);

  ModelConfig config_;
  ConvLayer enc1_, enc2_, enc3_;
  std::vector<Decoder> decoders_;
  AdamState adam_;
  mutable std::uint64_t encoder_passes_ = 0;
  mutable std::uint64_t decoder_passes_ = 0;
};

}  // namespace afford
