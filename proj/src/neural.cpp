#include "steprl/neural.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace steprl::neural {

namespace {

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::uint8_t* data, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t v = data[i] << 16;
    if (i + 1 < n) v |= data[i + 1] << 8;
    if (i + 2 < n) v |= data[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64Alphabet[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64Alphabet[v & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& s) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Alphabet[i])] = i;
  if (s.size() % 4 != 0) throw usage_error("base64 payload length must be a multiple of 4");

  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = s[i + j];
      if (c == '=') {
        if (i + 4 != s.size() || j < 2) throw usage_error("malformed base64 padding");
        vals[j] = 0;
        ++pad;
      } else {
        vals[j] = lut[static_cast<unsigned char>(c)];
        if (vals[j] < 0) throw usage_error("invalid base64 character");
        if (pad > 0) throw usage_error("malformed base64 padding");
      }
    }
    const std::uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

// Doubles are serialized little-endian regardless of host order.
std::string encode_doubles(const double* p, std::size_t n) {
  std::vector<std::uint8_t> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t u;
    std::memcpy(&u, p + i, 8);
    for (int j = 0; j < 8; ++j) bytes[i * 8 + j] = (u >> (8 * j)) & 0xff;
  }
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<double> decode_doubles(const std::string& s, std::size_t expected) {
  const auto bytes = base64_decode(s);
  if (bytes.size() != expected * 8) throw usage_error("checkpoint payload has the wrong size");
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t u = 0;
    for (int j = 0; j < 8; ++j) u |= static_cast<std::uint64_t>(bytes[i * 8 + j]) << (8 * j);
    std::memcpy(&out[i], &u, 8);
  }
  return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", encode_doubles(m.data(), m.size())}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows < 0 || cols < 0) throw usage_error("checkpoint matrix has negative shape");
  const auto data = decode_doubles(j.at("data").get<std::string>(),
                                   static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

std::vector<int> layer_sizes(const MlpSpec& spec) {
  std::vector<int> sizes;
  sizes.push_back(spec.input_dim);
  for (int l = 0; l < spec.hidden_layers; ++l) sizes.push_back(spec.resolved_width());
  sizes.push_back(spec.output_dim);
  return sizes;
}

}  // namespace

Mlp::Mlp(const MlpSpec& spec, RngStream& rng) : spec_(spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1 || spec.hidden_layers < 0) {
    throw usage_error("network needs input_dim >= 1, output_dim >= 1, hidden_layers >= 0");
  }
  if (spec.hidden_layers > 0 && spec.resolved_width() < 1) {
    throw usage_error("network needs a positive hidden width");
  }
  const auto sizes = layer_sizes(spec);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    W_.push_back(std::move(w));
    b_.emplace_back(Eigen::VectorXd::Zero(fan_out));
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x).col(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& X) const {
  if (W_.empty()) throw usage_error("forward on an uninitialized network");
  if (X.rows() != spec_.input_dim) throw usage_error("forward input dimension mismatch");
  Eigen::MatrixXd a = X;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    Eigen::MatrixXd z = (W_[l] * a).colwise() + b_[l];
    if (l + 1 < W_.size()) {
      a = z.cwiseMax(0.0);  // ReLU on hidden layers
    } else {
      a = std::move(z);  // linear output
    }
  }
  return a;
}

namespace {

void check_batch(const Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                 const Eigen::VectorXd& targets) {
  if (X.cols() == 0) throw usage_error("empty training batch");
  if (static_cast<Eigen::Index>(actions.size()) != X.cols() || targets.size() != X.cols()) {
    throw usage_error("batch size mismatch between inputs, actions, and targets");
  }
  for (int a : actions) {
    if (a < 0 || a >= net.spec().output_dim) throw usage_error("action index out of range");
  }
}

}  // namespace

double masked_l2_loss(const Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                      const Eigen::VectorXd& targets) {
  check_batch(net, X, actions, targets);
  const Eigen::MatrixXd out = net.forward_batch(X);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double d = out(actions[i], i) - targets[i];
    loss += d * d;
  }
  return loss / static_cast<double>(X.cols());
}

double loss_and_gradients(const Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                          const Eigen::VectorXd& targets, Gradients& out) {
  check_batch(net, X, actions, targets);
  const auto& W = net.weights();
  const auto& b = net.biases();
  const std::size_t L = W.size();
  const Eigen::Index B = X.cols();

  // Forward pass keeping every activation.
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(L + 1);
  acts.push_back(X);
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (W[l] * acts.back()).colwise() + b[l];
    if (l + 1 < L) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }

  double loss = 0.0;
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(net.spec().output_dim, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double d = acts.back()(actions[i], i) - targets[i];
    loss += d * d;
    delta(actions[i], i) = 2.0 * d / static_cast<double>(B);
  }
  loss /= static_cast<double>(B);

  out.dW.assign(L, {});
  out.db.assign(L, {});
  for (std::size_t l = L; l-- > 0;) {
    out.dW[l] = delta * acts[l].transpose();
    out.db[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (W[l].transpose() * delta).eval();
      // ReLU gate: the stored activation is zero exactly where the unit was off.
      delta.array() *= (acts[l].array() > 0.0).cast<double>();
    }
  }
  return loss;
}

AdamState::AdamState(const Mlp& net) {
  for (const auto& w : net.weights()) mW.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& w : net.weights()) vW.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& bb : net.biases()) mb.emplace_back(Eigen::VectorXd::Zero(bb.size()));
  for (const auto& bb : net.biases()) vb.emplace_back(Eigen::VectorXd::Zero(bb.size()));
}

bool AdamState::shaped_like(const Mlp& net) const {
  const auto& W = net.weights();
  if (mW.size() != W.size() || vW.size() != W.size() || mb.size() != W.size() ||
      vb.size() != W.size()) {
    return false;
  }
  for (std::size_t l = 0; l < W.size(); ++l) {
    if (mW[l].rows() != W[l].rows() || mW[l].cols() != W[l].cols()) return false;
    if (mb[l].size() != net.biases()[l].size()) return false;
  }
  return true;
}

void adam_step(Mlp& net, const Gradients& g, AdamState& st, const AdamConfig& cfg) {
  auto& W = net.weights();
  auto& b = net.biases();
  if (g.dW.size() != W.size() || g.db.size() != W.size()) {
    throw usage_error("gradient shape mismatch");
  }
  if (!st.shaped_like(net)) throw usage_error("optimizer state does not match the network");

  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));

  for (std::size_t l = 0; l < W.size(); ++l) {
    Eigen::MatrixXd gw = g.dW[l];
    if (cfg.weight_decay > 0.0) gw += cfg.weight_decay * W[l];
    st.mW[l] = cfg.beta1 * st.mW[l] + (1.0 - cfg.beta1) * gw;
    st.vW[l] = cfg.beta2 * st.vW[l].array() + (1.0 - cfg.beta2) * gw.array().square();
    const Eigen::ArrayXXd m_hat = st.mW[l].array() / bc1;
    const Eigen::ArrayXXd v_hat = st.vW[l].array() / bc2;
    W[l].array() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);

    st.mb[l] = cfg.beta1 * st.mb[l] + (1.0 - cfg.beta1) * g.db[l];
    st.vb[l] = cfg.beta2 * st.vb[l].array() + (1.0 - cfg.beta2) * g.db[l].array().square();
    const Eigen::ArrayXd mb_hat = st.mb[l].array() / bc1;
    const Eigen::ArrayXd vb_hat = st.vb[l].array() / bc2;
    b[l].array() -= cfg.lr * mb_hat / (vb_hat.sqrt() + cfg.eps);
  }
}

double train_step(Mlp& net, const Eigen::MatrixXd& X, const std::vector<int>& actions,
                  const Eigen::VectorXd& targets, AdamState& st, const AdamConfig& cfg) {
  Gradients g;
  const double loss = loss_and_gradients(net, X, actions, targets, g);
  adam_step(net, g, st, cfg);
  return loss;
}

nlohmann::json to_json(const Mlp& net, const AdamState* adam) {
  nlohmann::json j;
  j["format"] = "steprl-mlp-v1";
  j["spec"] = {{"input_dim", net.spec().input_dim},
               {"output_dim", net.spec().output_dim},
               {"hidden_layers", net.spec().hidden_layers},
               {"hidden_width", net.spec().resolved_width()}};
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (const auto& w : net.weights()) j["weights"].push_back(matrix_to_json(w));
  for (const auto& b : net.biases()) {
    j["biases"].push_back(matrix_to_json(Eigen::MatrixXd(b)));
  }
  if (adam != nullptr) {
    if (!adam->shaped_like(net)) throw usage_error("optimizer state does not match the network");
    nlohmann::json a;
    a["step"] = adam->step;
    a["mW"] = nlohmann::json::array();
    a["vW"] = nlohmann::json::array();
    a["mb"] = nlohmann::json::array();
    a["vb"] = nlohmann::json::array();
    for (const auto& m : adam->mW) a["mW"].push_back(matrix_to_json(m));
    for (const auto& m : adam->vW) a["vW"].push_back(matrix_to_json(m));
    for (const auto& m : adam->mb) a["mb"].push_back(matrix_to_json(Eigen::MatrixXd(m)));
    for (const auto& m : adam->vb) a["vb"].push_back(matrix_to_json(Eigen::MatrixXd(m)));
    j["adam"] = std::move(a);
  }
  return j;
}

bool from_json(const nlohmann::json& j, Mlp& net, AdamState* adam) {
  try {
    if (j.at("format").get<std::string>() != "steprl-mlp-v1") {
      throw usage_error("unrecognized checkpoint format");
    }
    MlpSpec spec;
    spec.input_dim = j.at("spec").at("input_dim").get<int>();
    spec.output_dim = j.at("spec").at("output_dim").get<int>();
    spec.hidden_layers = j.at("spec").at("hidden_layers").get<int>();
    spec.hidden_width = j.at("spec").at("hidden_width").get<int>();

    RngStream dummy(0, 0);
    Mlp fresh(spec, dummy);
    const auto& jw = j.at("weights");
    const auto& jb = j.at("biases");
    if (jw.size() != fresh.weights().size() || jb.size() != fresh.biases().size()) {
      throw usage_error("checkpoint layer count does not match its spec");
    }
    for (std::size_t l = 0; l < fresh.weights().size(); ++l) {
      Eigen::MatrixXd w = matrix_from_json(jw[l]);
      if (w.rows() != fresh.weights()[l].rows() || w.cols() != fresh.weights()[l].cols()) {
        throw usage_error("checkpoint weight shape does not match its spec");
      }
      fresh.weights()[l] = std::move(w);
      Eigen::MatrixXd b = matrix_from_json(jb[l]);
      if (b.cols() != 1 || b.rows() != fresh.biases()[l].size()) {
        throw usage_error("checkpoint bias shape does not match its spec");
      }
      fresh.biases()[l] = b.col(0);
    }
    net = std::move(fresh);

    if (!j.contains("adam")) return false;
    if (adam != nullptr) {
      AdamState st(net);
      const auto& a = j.at("adam");
      st.step = a.at("step").get<long long>();
      for (std::size_t l = 0; l < net.weights().size(); ++l) {
        st.mW[l] = matrix_from_json(a.at("mW")[l]);
        st.vW[l] = matrix_from_json(a.at("vW")[l]);
        st.mb[l] = matrix_from_json(a.at("mb")[l]).col(0);
        st.vb[l] = matrix_from_json(a.at("vb")[l]).col(0);
      }
      if (!st.shaped_like(net)) throw usage_error("checkpoint optimizer state shape mismatch");
      *adam = std::move(st);
    }
    return true;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Mlp& net, const AdamState* adam) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot open checkpoint file for writing: " + path);
  out << to_json(net, adam).dump(2) << "\n";
  if (!out) throw numeric_error("failed writing checkpoint: " + path);
}

bool load_checkpoint(const std::string& path, Mlp& net, AdamState* adam) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open checkpoint file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return from_json(j, net, adam);
}

}  // namespace steprl::neural
