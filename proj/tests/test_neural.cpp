#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "steprl/neural.hpp"
#include "steprl/rng.hpp"

using namespace steprl;
using namespace steprl::neural;

namespace {

Mlp make_net(int in, int out, int hidden, int width, std::uint64_t seed) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.output_dim = out;
  spec.hidden_layers = hidden;
  spec.hidden_width = width;
  RngStream rng(seed, 7);
  return Mlp(spec, rng);
}

}  // namespace

TEST_SUITE_BEGIN("neural");

TEST_CASE("default width is five times the input dimension") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 4;
  CHECK(spec.resolved_width() == 15);
  RngStream rng(1, 0);
  Mlp net(spec, rng);
  REQUIRE(net.num_weight_layers() == 5);
  CHECK(net.weights()[0].rows() == 15);
  CHECK(net.weights()[0].cols() == 3);
  CHECK(net.weights()[1].rows() == 15);
  CHECK(net.weights()[1].cols() == 15);
  CHECK(net.weights()[4].rows() == 4);
  CHECK(net.weights()[4].cols() == 15);
}

TEST_CASE("initial weights respect the Glorot bound and biases start at zero") {
  auto net = make_net(4, 3, 2, 10, 42);
  const std::vector<double> bounds = {std::sqrt(6.0 / (4 + 10)), std::sqrt(6.0 / (10 + 10)),
                                      std::sqrt(6.0 / (10 + 3))};
  for (int l = 0; l < net.num_weight_layers(); ++l) {
    CHECK(net.weights()[l].cwiseAbs().maxCoeff() <= bounds[l]);
    CHECK(net.weights()[l].cwiseAbs().maxCoeff() > 0.3 * bounds[l]);  // actually spread out
    CHECK(net.biases()[l].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("forward pass matches a hand-computed two-layer network") {
  auto net = make_net(2, 1, 1, 2, 3);
  net.weights()[0] << 1.0, -1.0, 0.5, 2.0;
  net.biases()[0] << 0.1, -0.2;
  net.weights()[1] << 1.0, 1.0;
  net.biases()[1] << 0.5;

  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  // z = (1 - 2 + 0.1, 0.5 + 4 - 0.2) = (-0.9, 4.3); ReLU keeps only 4.3.
  const auto y = net.forward(x);
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(4.8).epsilon(1e-15));
}

TEST_CASE("batched forward agrees with per-sample forward") {
  auto net = make_net(3, 4, 2, 0, 11);
  RngStream rng(5, 1);
  Eigen::MatrixXd X(3, 6);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-2.0, 2.0);
  const auto Y = net.forward_batch(X);
  REQUIRE(Y.rows() == 4);
  REQUIRE(Y.cols() == 6);
  for (int i = 0; i < 6; ++i) {
    const auto yi = net.forward(X.col(i));
    for (int k = 0; k < 4; ++k) CHECK(Y(k, i) == doctest::Approx(yi[k]).epsilon(1e-14));
  }
}

TEST_CASE("masked loss only sees the chosen action's output") {
  auto net = make_net(1, 2, 0, 0, 9);
  net.weights()[0] << 2.0, -1.0;
  net.biases()[0] << 0.1, 0.3;
  Eigen::MatrixXd X(1, 1);
  X << 0.5;
  Eigen::VectorXd targets(1);
  targets << 0.8;
  // Outputs are (1.1, -0.2); action 1 gives (-0.2 - 0.8)^2 = 1.
  CHECK(masked_l2_loss(net, X, {1}, targets) == doctest::Approx(1.0).epsilon(1e-14));
  // Action 0 gives (1.1 - 0.8)^2 = 0.09.
  CHECK(masked_l2_loss(net, X, {0}, targets) == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("backpropagated gradients match central finite differences") {
  auto net = make_net(3, 2, 2, 8, 1234);
  RngStream rng(77, 0);
  const int B = 5;
  Eigen::MatrixXd X(3, B);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-1.0, 1.0);
  std::vector<int> actions;
  Eigen::VectorXd targets(B);
  for (int i = 0; i < B; ++i) {
    actions.push_back(static_cast<int>(rng.below(2)));
    targets[i] = rng.uniform(-1.0, 1.0);
  }

  Gradients g;
  loss_and_gradients(net, X, actions, targets, g);

  const double eps = 1e-6;
  double worst = 0.0;
  for (int l = 0; l < net.num_weight_layers(); ++l) {
    for (Eigen::Index i = 0; i < net.weights()[l].size(); ++i) {
      double& w = net.weights()[l].data()[i];
      const double keep = w;
      w = keep + eps;
      const double up = masked_l2_loss(net, X, actions, targets);
      w = keep - eps;
      const double dn = masked_l2_loss(net, X, actions, targets);
      w = keep;
      const double fd = (up - dn) / (2.0 * eps);
      worst = std::max(worst, std::fabs(fd - g.dW[l].data()[i]));
    }
    for (Eigen::Index i = 0; i < net.biases()[l].size(); ++i) {
      double& b = net.biases()[l][i];
      const double keep = b;
      b = keep + eps;
      const double up = masked_l2_loss(net, X, actions, targets);
      b = keep - eps;
      const double dn = masked_l2_loss(net, X, actions, targets);
      b = keep;
      const double fd = (up - dn) / (2.0 * eps);
      worst = std::max(worst, std::fabs(fd - g.db[l][i]));
    }
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("the first Adam update moves parameters by about one learning rate") {
  auto net = make_net(1, 1, 0, 0, 2);
  net.weights()[0] << 0.7;
  net.biases()[0] << 0.2;
  Eigen::MatrixXd X(1, 1);
  X << 1.0;
  Eigen::VectorXd targets(1);
  targets << 5.0;  // output 0.9, so the gradient pushes both parameters up

  AdamState st(net);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  train_step(net, X, {0}, targets, st, cfg);
  CHECK(st.step == 1);
  CHECK(net.weights()[0](0, 0) == doctest::Approx(0.7 + cfg.lr).epsilon(1e-6));
  CHECK(net.biases()[0][0] == doctest::Approx(0.2 + cfg.lr).epsilon(1e-6));
}

TEST_CASE("training drives a small regression problem to low loss") {
  auto net = make_net(1, 1, 1, 8, 31);
  RngStream rng(8, 3);
  const int B = 64;
  Eigen::MatrixXd X(1, B);
  Eigen::VectorXd targets(B);
  std::vector<int> actions(B, 0);
  for (int i = 0; i < B; ++i) {
    X(0, i) = rng.uniform(-1.0, 1.0);
    targets[i] = 3.0 * X(0, i) - 1.0;
  }
  AdamState st(net);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 800; ++it) {
    const double loss = train_step(net, X, actions, targets, st, cfg);
    if (it == 0) first = loss;
    last = loss;
  }
  CHECK(last < 1e-3);
  CHECK(last < first / 100.0);
}

TEST_CASE("weight decay shrinks weights when the data gradient vanishes") {
  auto net = make_net(1, 1, 0, 0, 4);
  net.weights()[0] << 0.5;
  net.biases()[0] << 0.0;
  Eigen::MatrixXd X(1, 1);
  X << 1.0;
  Eigen::VectorXd targets(1);
  targets << 0.5;  // output equals the target, data gradient is zero

  AdamState st(net);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.1;
  for (int i = 0; i < 50; ++i) train_step(net, X, {0}, targets, st, cfg);
  CHECK(net.weights()[0](0, 0) < 0.5);
  CHECK(net.weights()[0](0, 0) > 0.0);
}

TEST_CASE("checkpoints round-trip bit for bit and resume training identically") {
  auto net = make_net(2, 3, 2, 6, 17);
  RngStream rng(3, 9);
  const int B = 8;
  Eigen::MatrixXd X(2, B);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-1.0, 1.0);
  std::vector<int> actions;
  Eigen::VectorXd targets(B);
  for (int i = 0; i < B; ++i) {
    actions.push_back(static_cast<int>(rng.below(3)));
    targets[i] = rng.uniform(-1.0, 1.0);
  }

  AdamState st(net);
  AdamConfig cfg;
  for (int i = 0; i < 3; ++i) train_step(net, X, actions, targets, st, cfg);

  const std::string path = "ckpt_roundtrip_test.json";
  save_checkpoint(path, net, &st);

  Mlp loaded;
  AdamState loaded_st;
  const bool has_adam = load_checkpoint(path, loaded, &loaded_st);
  CHECK(has_adam);
  REQUIRE(loaded.num_weight_layers() == net.num_weight_layers());
  for (int l = 0; l < net.num_weight_layers(); ++l) {
    CHECK(loaded.weights()[l] == net.weights()[l]);  // exact, including every bit
    CHECK(loaded.biases()[l] == net.biases()[l]);
    CHECK(loaded_st.mW[l] == st.mW[l]);
    CHECK(loaded_st.vW[l] == st.vW[l]);
  }
  CHECK(loaded_st.step == st.step);

  // Two more steps on each copy stay in lockstep.
  for (int i = 0; i < 2; ++i) {
    train_step(net, X, actions, targets, st, cfg);
    train_step(loaded, X, actions, targets, loaded_st, cfg);
  }
  for (int l = 0; l < net.num_weight_layers(); ++l) {
    CHECK(loaded.weights()[l] == net.weights()[l]);
  }
  std::remove(path.c_str());
}

TEST_CASE("a checkpoint without optimizer state loads as inference-only") {
  auto net = make_net(2, 2, 1, 4, 5);
  const std::string path = "ckpt_inference_test.json";
  save_checkpoint(path, net);
  Mlp loaded;
  AdamState st;
  CHECK(!load_checkpoint(path, loaded, &st));
  CHECK(loaded.forward(Eigen::Vector2d(0.3, -0.4)) == net.forward(Eigen::Vector2d(0.3, -0.4)));
  std::remove(path.c_str());
}

TEST_CASE("shape and input validation raises usage errors") {
  auto net = make_net(2, 2, 1, 4, 6);
  Eigen::MatrixXd X(3, 1);
  X.setZero();
  CHECK_THROWS_AS(net.forward_batch(X), usage_error);

  Eigen::MatrixXd ok(2, 1);
  ok.setZero();
  Eigen::VectorXd t(1);
  t << 0.0;
  CHECK_THROWS_AS(masked_l2_loss(net, ok, {5}, t), usage_error);
  CHECK_THROWS_AS(masked_l2_loss(net, ok, {0, 1}, t), usage_error);
  Eigen::MatrixXd empty(2, 0);
  Eigen::VectorXd t0;
  CHECK_THROWS_AS(masked_l2_loss(net, empty, {}, t0), usage_error);

  MlpSpec bad;
  bad.input_dim = 0;
  RngStream rng(1, 1);
  CHECK_THROWS_AS(Mlp(bad, rng), usage_error);

  CHECK_THROWS_AS(load_checkpoint("does_not_exist_anywhere.json", net), usage_error);
}

TEST_SUITE_END();
