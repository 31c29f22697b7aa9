#include "romax/net.hpp"

#include <cmath>
#include <fstream>

namespace romax::net {

bool MlpNetwork::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

MlpNetwork make_network(const std::vector<int>& layer_dims,
                        OutputActivation output_activation) {
  require(layer_dims.size() >= 2, "network needs at least input and output dims");
  for (int d : layer_dims) require(d > 0, "layer dims must be positive");
  MlpNetwork net;
  net.layer_dims = layer_dims;
  net.output_activation = output_activation;
  const int L = static_cast<int>(layer_dims.size()) - 1;
  net.weights.reserve(L);
  net.biases.reserve(L);
  for (int l = 0; l < L; ++l) {
    net.weights.push_back(Mat::Zero(layer_dims[l + 1], layer_dims[l]));
    net.biases.push_back(Vec::Zero(layer_dims[l + 1]));
  }
  return net;
}

void init_uniform(MlpNetwork& net, Rng& rng) {
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_dims[l]));
    Mat& w = net.weights[l];
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = rng.uniform(-bound, bound);
    Vec& b = net.biases[l];
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-bound, bound);
  }
}

ForwardResult forward(const MlpNetwork& net, const Mat& input) {
  require(input.rows() == net.input_dim(),
          "forward: input width " + std::to_string(input.rows()) +
              " != network input dim " + std::to_string(net.input_dim()));
  ForwardResult r;
  r.cache.input = input;
  const int L = net.num_layers();
  r.cache.pre.resize(L);
  r.cache.post.resize(L > 0 ? L - 1 : 0);
  const Mat* x = &r.cache.input;
  for (int l = 0; l < L; ++l) {
    Mat& z = r.cache.pre[l];
    z.noalias() = net.weights[l] * (*x);
    z.colwise() += net.biases[l];
    if (l < L - 1) {
      r.cache.post[l] = z.cwiseMax(0.0);
      x = &r.cache.post[l];
    }
  }
  const Mat& z_out = r.cache.pre[L - 1];
  r.output = net.output_activation == OutputActivation::kTanh
                 ? z_out.array().tanh().matrix()
                 : z_out;
  return r;
}

Mat forward_value(const MlpNetwork& net, const Mat& input) {
  require(input.rows() == net.input_dim(), "forward: input width mismatch");
  Mat x = input;
  const int L = net.num_layers();
  for (int l = 0; l < L; ++l) {
    Mat z;
    z.noalias() = net.weights[l] * x;
    z.colwise() += net.biases[l];
    if (l < L - 1)
      x = z.cwiseMax(0.0);
    else
      x = net.output_activation == OutputActivation::kTanh
              ? Mat(z.array().tanh().matrix())
              : z;
  }
  return x;
}

bool ParamGrads::all_finite() const {
  for (const auto& g : dw)
    if (!g.allFinite()) return false;
  for (const auto& g : db)
    if (!g.allFinite()) return false;
  return true;
}

ParamGrads zero_grads(const MlpNetwork& net) {
  ParamGrads g;
  for (int l = 0; l < net.num_layers(); ++l) {
    g.dw.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.db.push_back(Vec::Zero(net.biases[l].size()));
  }
  return g;
}

BackwardResult backward(const MlpNetwork& net, const ForwardCache& cache,
                        const Mat& output_grad, bool want_params,
                        bool want_input) {
  const int L = net.num_layers();
  require(static_cast<int>(cache.pre.size()) == L &&
              cache.input.rows() == net.input_dim(),
          "backward: cache does not match network");
  require(output_grad.rows() == net.output_dim() &&
              output_grad.cols() == cache.input.cols(),
          "backward: output_grad shape mismatch");

  BackwardResult r;
  if (want_params) r.params = zero_grads(net);

  // dz at the output layer.
  Mat dz;
  if (net.output_activation == OutputActivation::kTanh) {
    Mat t = cache.pre[L - 1].array().tanh().matrix();
    dz = output_grad.cwiseProduct(
        (1.0 - t.array().square()).matrix());
  } else {
    dz = output_grad;
  }

  for (int l = L - 1; l >= 0; --l) {
    const Mat& x_in = (l == 0) ? cache.input : cache.post[l - 1];
    if (want_params) {
      r.params.dw[l].noalias() = dz * x_in.transpose();
      r.params.db[l] = dz.rowwise().sum();
    }
    if (l == 0) {
      if (want_input) r.input_grad.noalias() = net.weights[0].transpose() * dz;
      break;
    }
    Mat dx;
    dx.noalias() = net.weights[l].transpose() * dz;
    // ReLU mask from the recorded pre-activations.
    dz = dx.cwiseProduct(
        (cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return r;
}

OptimizerState make_optimizer(const MlpNetwork& net, double lr) {
  OptimizerState s;
  s.lr = lr;
  for (int l = 0; l < net.num_layers(); ++l) {
    s.m_w.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.v_w.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.m_b.push_back(Vec::Zero(net.biases[l].size()));
    s.v_b.push_back(Vec::Zero(net.biases[l].size()));
  }
  return s;
}

namespace {

template <typename T>
void adam_update(T& param, T& m, T& v, const T& g, double lr, double b1,
                 double b2, double eps, double bc1, double bc2) {
  m = b1 * m + (1.0 - b1) * g;
  v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
  param.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace

void optimizer_step(OptimizerState& state, MlpNetwork& net,
                    const ParamGrads& grads) {
  require(grads.dw.size() == net.weights.size() &&
              grads.db.size() == net.biases.size(),
          "optimizer_step: gradient/parameter count mismatch");
  if (!grads.all_finite())
    throw TrainingError("optimizer_step: non-finite gradient at step " +
                        std::to_string(state.step + 1));
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (int l = 0; l < net.num_layers(); ++l) {
    require(grads.dw[l].rows() == net.weights[l].rows() &&
                grads.dw[l].cols() == net.weights[l].cols() &&
                grads.db[l].size() == net.biases[l].size(),
            "optimizer_step: gradient shape mismatch at layer " +
                std::to_string(l));
    adam_update(net.weights[l], state.m_w[l], state.v_w[l], grads.dw[l],
                state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2);
    adam_update(net.biases[l], state.m_b[l], state.v_b[l], grads.db[l],
                state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2);
  }
}

void soft_update(MlpNetwork& target, const MlpNetwork& source, double tau) {
  require(target.layer_dims == source.layer_dims,
          "soft_update: architecture mismatch");
  for (int l = 0; l < target.num_layers(); ++l) {
    target.weights[l] = tau * source.weights[l] + (1.0 - tau) * target.weights[l];
    target.biases[l] = tau * source.biases[l] + (1.0 - tau) * target.biases[l];
  }
}

namespace {

std::vector<double> row_major(const Mat& m) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

}  // namespace

nlohmann::json checkpoint_to_json(const MlpNetwork& net,
                                  const nlohmann::json& meta) {
  nlohmann::json doc;
  doc["format"] = "mlp-checkpoint";
  doc["version"] = 1;
  doc["layer_dims"] = net.layer_dims;
  doc["hidden_activation"] = "relu";
  doc["output_activation"] =
      net.output_activation == OutputActivation::kTanh ? "tanh" : "identity";
  nlohmann::json ws = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    ws.push_back(row_major(net.weights[l]));
    bs.push_back(std::vector<double>(net.biases[l].data(),
                                     net.biases[l].data() + net.biases[l].size()));
  }
  doc["weights"] = ws;
  doc["biases"] = bs;
  if (!meta.is_null() && !meta.empty()) doc["meta"] = meta;
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.contains("format") || doc.at("format") != "mlp-checkpoint")
    throw ConfigError("checkpoint: unrecognized format");
  if (doc.at("version").get<int>() != 1)
    throw ConfigError("checkpoint: unsupported version");
  Checkpoint cp;
  const auto dims = doc.at("layer_dims").get<std::vector<int>>();
  const std::string act = doc.at("output_activation").get<std::string>();
  cp.net = make_network(dims, act == "tanh" ? OutputActivation::kTanh
                                            : OutputActivation::kIdentity);
  const auto& ws = doc.at("weights");
  const auto& bs = doc.at("biases");
  if (ws.size() != cp.net.weights.size() || bs.size() != cp.net.biases.size())
    throw ConfigError("checkpoint: layer count mismatch");
  for (int l = 0; l < cp.net.num_layers(); ++l) {
    const auto w = ws[l].get<std::vector<double>>();
    const auto b = bs[l].get<std::vector<double>>();
    Mat& W = cp.net.weights[l];
    if (static_cast<Eigen::Index>(w.size()) != W.size() ||
        static_cast<Eigen::Index>(b.size()) != cp.net.biases[l].size())
      throw ConfigError("checkpoint: parameter size mismatch at layer " +
                        std::to_string(l));
    size_t k = 0;
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = w[k++];
    for (Eigen::Index i = 0; i < cp.net.biases[l].size(); ++i)
      cp.net.biases[l](i) = b[i];
  }
  if (doc.contains("meta")) cp.meta = doc.at("meta");
  return cp;
}

void save_checkpoint(const std::string& path, const MlpNetwork& net,
                     const nlohmann::json& meta) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << checkpoint_to_json(net, meta).dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  nlohmann::json doc;
  in >> doc;
  return checkpoint_from_json(doc);
}

}  // namespace romax::net
