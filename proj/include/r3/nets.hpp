#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r3/envs.hpp"
#include "r3/rng.hpp"

namespace r3 {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { Identity, Tanh, Relu };
enum class LayerKind { Conv, Dense };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Valid (unpadded) stride-1 square convolution over an HWC image.
struct ConvGeometry {
    int in_side = 0;
    int in_channels = 0;
    int kernel = 0;
    int out_channels = 0;

    int out_side() const { return in_side - kernel + 1; }
    int patch_size() const { return kernel * kernel * in_channels; }
    int input_size() const { return in_side * in_side * in_channels; }
    int output_size() const { return out_side() * out_side() * out_channels; }
};

struct Layer {
    LayerKind kind = LayerKind::Dense;
    Activation activation = Activation::Identity;
    Matrix weight;  // out x in for dense, out_channels x patch_size for conv
    Vector bias;
    ConvGeometry conv;  // conv layers only

    int input_size() const;
    int output_size() const;
};

/// Shape recipe for a policy network. Conv layers see only the grid image part of
/// the observation; the prefix features are concatenated onto the flattened conv
/// output before the dense stack.
struct NetArchitecture {
    int obs_length = 0;
    int prefix_length = 0;
    int grid_side = 0;
    int grid_channels = 3;
    std::vector<int> conv_channels;
    int kernel = 2;
    Activation conv_activation = Activation::Relu;
    std::vector<int> hidden;
    Activation hidden_activation = Activation::Tanh;
    int action_count = 0;
    bool has_critic = false;

    int head_size() const { return action_count + (has_critic ? 1 : 0); }
    friend bool operator==(const NetArchitecture&, const NetArchitecture&) = default;
};

/// Actor (optionally actor-critic) network. The head emits action logits, followed by
/// a state value when has_critic is set.
struct PolicyParams {
    NetArchitecture arch;
    std::vector<Layer> layers;
    double entropy_coef = 0.0;

    bool has_critic() const { return arch.has_critic; }
    int action_count() const { return arch.action_count; }
    std::size_t conv_count() const;
    std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases; policy logits start near zero.
PolicyParams make_policy(const NetArchitecture& arch, double entropy_coef, Rng& rng);

struct Gradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;

    static Gradients zeros_like(const PolicyParams& net);
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
    double squared_norm() const;
    bool all_finite() const;
};

struct AdamState {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<Matrix> m_weight, v_weight;
    std::vector<Vector> m_bias, v_bias;

    static AdamState for_params(const PolicyParams& net, double learning_rate);
};

/// Cached activations of a batched forward pass, consumed by backprop.
struct ForwardPass {
    std::vector<Matrix> inputs;   // per layer; conv layers store their im2col patch matrix
    std::vector<Matrix> outputs;  // per layer, post-activation, one row per sample
    Matrix head;                  // N x head_size, copy of the last layer's output
    int action_count = 0;

    Eigen::Ref<const Matrix> logits() const;
    /// Column of critic values; only valid when the network has a critic.
    Vector values() const;
};

struct PolicyOutput {
    Vector logits;
    std::optional<double> value;
};

/// Batched forward pass; one observation per row.
ForwardPass forward_batch(const PolicyParams& net, const Matrix& observations);
PolicyOutput forward(const PolicyParams& net, const Observation& obs);

/// Stacks observations as matrix rows.
Matrix stack_observations(std::span<const Observation> observations);

/// Softmax with max subtraction.
Vector action_distribution(const Eigen::Ref<const Vector>& logits);

struct SampledAction {
    int action = 0;
    double probability = 0.0;
};

/// Inverse-CDF draw over the fixed action order.
SampledAction sample_action(const Vector& dist, Rng& rng);

/// Shannon entropy in nats; zero-probability terms contribute 0.
double entropy(const Vector& dist);

/// Exact gradient of a scalar loss given dLoss/dHead for every batch row.
/// Throws std::domain_error on non-finite intermediates.
Gradients backprop(const PolicyParams& net, const ForwardPass& pass, const Matrix& d_head);

/// One bias-corrected adaptive-moment step; throws on shape mismatch.
void adam_step(PolicyParams& net, const Gradients& grads, AdamState& state);

/// Deep copy. actor_only strips the value output; entropy_coef overrides the coefficient.
PolicyParams clone_params(const PolicyParams& src, bool actor_only = false,
                          std::optional<double> entropy_coef = std::nullopt);

std::vector<double> flatten(const PolicyParams& net);
void assign_flat(PolicyParams& net, std::span<const double> values);
std::vector<double> flatten(const Gradients& grads);

bool params_equal(const PolicyParams& a, const PolicyParams& b);

/// Checkpoint: one JSON header line describing shapes, then the parameters as a
/// little-endian float32 stream in flatten() order.
void save_checkpoint(const PolicyParams& net, std::ostream& out);
PolicyParams load_checkpoint(std::istream& in);

}  // namespace r3
