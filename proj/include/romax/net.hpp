#pragma once

#include <string>
#include <vector>

#include "romax/common.hpp"

#include "json.hpp"

namespace romax::net {

enum class OutputActivation { kIdentity, kTanh };

/// Dense fully connected network. Hidden layers use ReLU; the output layer
/// uses Identity (critics) or Tanh (actors, actions in [-1,1]).
///
/// weights[l] has shape (layer_dims[l+1], layer_dims[l]); layer l computes
/// z_l = weights[l] * x_l + biases[l] with x_0 the input.
struct MlpNetwork {
  std::vector<int> layer_dims;
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  OutputActivation output_activation = OutputActivation::kIdentity;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }

  /// True if every weight and bias entry is finite.
  bool all_finite() const;
};

/// Allocate a network of the given dims with zeroed parameters.
MlpNetwork make_network(const std::vector<int>& layer_dims,
                        OutputActivation output_activation);

/// Uniform init in +-1/sqrt(fan_in) for weights and biases of each layer.
void init_uniform(MlpNetwork& net, Rng& rng);

/// Pre- and post-activations recorded by forward() for one batch
/// (columns are samples). post[l] = relu(pre[l]) for hidden layers.
struct ForwardCache {
  Mat input;
  std::vector<Mat> pre;
  std::vector<Mat> post;  // hidden layers only
};

struct ForwardResult {
  Mat output;
  ForwardCache cache;
};

/// Evaluate the network on a batch (input: input_dim x batch).
ForwardResult forward(const MlpNetwork& net, const Mat& input);

/// Forward without recording the cache (target networks, evaluation).
Mat forward_value(const MlpNetwork& net, const Mat& input);

struct ParamGrads {
  std::vector<Mat> dw;
  std::vector<Vec> db;

  bool all_finite() const;
};

ParamGrads zero_grads(const MlpNetwork& net);

struct BackwardResult {
  ParamGrads params;
  Mat input_grad;
};

/// Gradients of <output_grad, output> (summed over the batch) with respect
/// to every parameter and to the input. `want_params` / `want_input` skip
/// the unneeded half of the work.
BackwardResult backward(const MlpNetwork& net, const ForwardCache& cache,
                        const Mat& output_grad, bool want_params = true,
                        bool want_input = true);

/// Adam accumulators for one network.
struct OptimizerState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;
};

OptimizerState make_optimizer(const MlpNetwork& net, double lr = 0.01);

/// One Adam step in place. Throws TrainingError on non-finite gradients.
void optimizer_step(OptimizerState& state, MlpNetwork& net,
                    const ParamGrads& grads);

/// target <- tau * source + (1 - tau) * target, elementwise.
void soft_update(MlpNetwork& target, const MlpNetwork& source, double tau);

/// Checkpoint document (versioned, row-major decimal arrays, lossless
/// round trip at 64-bit precision). `meta` carries caller tags untouched.
nlohmann::json checkpoint_to_json(const MlpNetwork& net,
                                  const nlohmann::json& meta = {});

struct Checkpoint {
  MlpNetwork net;
  nlohmann::json meta;
};

Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::string& path, const MlpNetwork& net,
                     const nlohmann::json& meta = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace romax::net
