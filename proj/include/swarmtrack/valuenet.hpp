#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <string>
#include <vector>

#include "swarmtrack/core.hpp"
#include "swarmtrack/encoding.hpp"

namespace swarmtrack::valuenet {

enum class Activation { kRelu, kTanh };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

/// Shape and nonlinearity of the set-valued Q-network.
struct NetConfig {
  int feature_dim{encoding::kFeatureDim};
  int embed_dim{64};
  int n_heads{2};
  int n_attention_blocks{2};
  int decoder_hidden{128};
  int n_actions{kNumActions};
  Activation activation{Activation::kRelu};
  std::string attention_normalizer{"softmax"};
  /// Fixed per-feature multipliers applied before the encoder; order matches
  /// TargetFeature (r, theta, r_dot, theta_dot, logdet, observed).
  std::array<double, encoding::kFeatureDim> input_scale{0.1, 1.0 / kPi, 0.5, 1.0, 0.1, 1.0};

  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ParamSpec {
  std::string name;
  int rows{0};
  int cols{0};
  bool is_bias{false};
};

/// Names and shapes of every tensor, in storage order. Weights are stored
/// input-major (y = x W + b).
std::vector<ParamSpec> param_layout(const NetConfig& cfg);

/// All weights of one Q-network. `tensors` follows param_layout order.
template <typename T>
struct NetParams {
  NetConfig config;
  std::vector<Matrix<T>> tensors;

  [[nodiscard]] std::size_t num_elements() const;
  [[nodiscard]] bool same_shape(const NetParams& other) const;
  [[nodiscard]] bool all_finite() const;

  template <typename U>
  [[nodiscard]] NetParams<U> cast() const {
    NetParams<U> out;
    out.config = config;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }
};

/// Same structure as the parameters they differentiate.
template <typename T>
using Gradients = NetParams<T>;

/// Glorot-uniform weights, zero biases.
template <typename T>
NetParams<T> init_params(const NetConfig& cfg, SeededStream& stream);

template <typename T>
NetParams<T> zeros_like(const NetParams<T>& p);

/// B sets of identical cardinality c, stored set-major as (B*c) x feature_dim.
template <typename T>
struct SetBatch {
  Matrix<T> features;
  int batch_size{0};
  int set_size{0};
};

template <typename T>
SetBatch<T> make_batch(const encoding::FeatureSet& fs);
/// All sets must share one cardinality >= 1.
template <typename T>
SetBatch<T> make_batch(std::span<const encoding::FeatureSet* const> sets);

template <typename T>
struct BlockCache {
  Matrix<T> input;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> weights;  // per head, (B*c) x c
  Matrix<T> concat;
};

/// Intermediate values kept by forward_batch for backward_batch.
template <typename T>
struct ForwardCache {
  int batch_size{0};
  int set_size{0};
  Matrix<T> scaled_input;
  Matrix<T> enc_pre, enc_hidden;
  std::vector<BlockCache<T>> blocks;
  Matrix<T> set_output;  // after the last attention block
  Matrix<T> pooled;
  Matrix<T> dec_pre, dec_hidden;
};

/// Q-values for every set in the batch, B x n_actions.
template <typename T>
Matrix<T> forward_batch(const NetParams<T>& params, const SetBatch<T>& batch,
                        ForwardCache<T>* cache = nullptr);

/// Accumulates d(sum dq . Q)/d(params) into `grads`.
template <typename T>
void backward_batch(const NetParams<T>& params, const ForwardCache<T>& cache, const Matrix<T>& dq,
                    Gradients<T>& grads);

/// Q-values of a single non-empty set. Throws InvalidArgument on an empty set.
template <typename T>
Vector<T> forward(const encoding::FeatureSet& fs, const NetParams<T>& params);

template <typename T>
Gradients<T> backward(const encoding::FeatureSet& fs, const NetParams<T>& params,
                      std::span<const T> dq);

/// One multi-head self-attention block over a batch of equal-size sets.
/// With `residual` false the block returns the projected attention output only.
template <typename T>
Matrix<T> attention_block(const Matrix<T>& x, int set_size, const NetParams<T>& params, int block,
                          bool residual = true, std::vector<Matrix<T>>* weights_out = nullptr);

/// target <- tau * online + (1 - tau) * target. Throws InvalidArgument on
/// shape mismatch or tau outside [0, 1].
template <typename T>
NetParams<T> polyak_update(const NetParams<T>& target, const NetParams<T>& online, double tau);

/// Fixed-width baseline over a concatenation of n_targets features.
template <typename T>
struct MlpParams {
  int n_targets{1};
  int hidden{128};
  std::array<double, encoding::kFeatureDim> input_scale{0.1, 1.0 / kPi, 0.5, 1.0, 0.1, 1.0};
  Matrix<T> w0, b0, w1, b1, w2, b2;
};

template <typename T>
MlpParams<T> init_mlp(int n_targets, int hidden, SeededStream& stream);

/// Throws InvalidArgument unless input.size() == 6 * n_targets.
template <typename T>
Vector<T> mlp_forward(std::span<const T> input, const MlpParams<T>& params);

/// Concatenates features in set order into a 6M vector.
template <typename T>
std::vector<T> flatten_features(const encoding::FeatureSet& fs);

}  // namespace swarmtrack::valuenet
