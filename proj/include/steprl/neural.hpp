#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <json.hpp>

#include "steprl/errors.hpp"
#include "steprl/rng.hpp"

namespace steprl::neural {

// Fully connected network: `hidden_layers` ReLU layers of `hidden_width`
// units followed by a linear output layer (one value per action).
struct MlpSpec {
  int input_dim = 1;
  int output_dim = 1;
  int hidden_layers = 4;
  int hidden_width = 0;  // 0 -> 5 * input_dim

  int resolved_width() const { return hidden_width > 0 ? hidden_width : 5 * input_dim; }
};

class Mlp {
 public:
  Mlp() = default;

  // Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
  Mlp(const MlpSpec& spec, RngStream& rng);

  const MlpSpec& spec() const { return spec_; }
  int num_weight_layers() const { return static_cast<int>(W_.size()); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Columns are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& X) const;

  std::vector<Eigen::MatrixXd>& weights() { return W_; }
  std::vector<Eigen::VectorXd>& biases() { return b_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return W_; }
  const std::vector<Eigen::VectorXd>& biases() const { return b_; }

 private:
  MlpSpec spec_;
  std::vector<Eigen::MatrixXd> W_;
  std::vector<Eigen::VectorXd> b_;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

// Mean over the batch of (output[action_i] - target_i)^2. Only the chosen
// action's output enters the loss; the other outputs receive zero gradient.
double masked_l2_loss(const Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                      const Eigen::VectorXd& targets);

// Same loss plus backpropagated gradients for every weight and bias.
double loss_and_gradients(const Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                          const Eigen::VectorXd& targets, Gradients& out);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 penalty added to the weight gradients (not biases)
};

struct AdamState {
  AdamState() = default;
  explicit AdamState(const Mlp& net);  // zero moments shaped like the network

  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long long step = 0;

  bool shaped_like(const Mlp& net) const;
};

// One Adam update with bias correction. Throws usage_error on shape mismatch.
void adam_step(Mlp& net, const Gradients& g, AdamState& st, const AdamConfig& cfg);

// Convenience: gradients + Adam update; returns the pre-update loss.
double train_step(Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                  const Eigen::VectorXd& targets, AdamState& st, const AdamConfig& cfg);

// Checkpoints are JSON: layer shapes in plain numbers, coefficients as
// base64-encoded little-endian doubles. The optimizer state is optional; a
// checkpoint without it loads as inference-only.
nlohmann::json to_json(const Mlp& net, const AdamState* adam = nullptr);

// Returns true when the checkpoint carried optimizer state (written to *adam
// when the pointer is non-null). Throws usage_error on malformed documents.
bool from_json(const nlohmann::json& j, Mlp& net, AdamState* adam = nullptr);

void save_checkpoint(const std::string& path, const Mlp& net, const AdamState* adam = nullptr);
bool load_checkpoint(const std::string& path, Mlp& net, AdamState* adam = nullptr);

}  // namespace steprl::neural
