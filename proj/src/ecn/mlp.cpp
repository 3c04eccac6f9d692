#include <cmath>
#include <random>

#include "exo/ecn.hpp"

namespace exo::ecn {

std::vector<int> default_dims() {
  return {static_cast<int>(kInputDim), 64, 64, 64, static_cast<int>(kOutputDim)};
}

std::vector<int> MlpParams::dims() const {
  std::vector<int> d;
  if (layers.empty()) return d;
  d.push_back(static_cast<int>(layers.front().weights.cols()));
  for (const auto& l : layers) d.push_back(static_cast<int>(l.weights.rows()));
  return d;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ValidationError("layers", "network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string name = "layer " + std::to_string(i);
    if (l.bias.size() != l.weights.rows()) throw ValidationError(name, "bias length != rows");
    if (i > 0 && l.weights.cols() != layers[i - 1].weights.rows()) {
      throw ValidationError(name, "input width does not match previous layer");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) throw ValidationError(name, "non-finite entry");
  }
}

MlpParams MlpParams::zeros(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ValidationError("dims", "need input and output widths");
  MlpParams p;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    p.layers.push_back({Eigen::MatrixXd::Zero(dims[i], dims[i - 1]), Eigen::VectorXd::Zero(dims[i])});
  }
  return p;
}

MlpParams MlpParams::glorot(const std::vector<int>& dims, std::uint64_t seed) {
  MlpParams p = zeros(dims);
  std::mt19937_64 rng(seed);
  for (auto& l : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = dist(rng);
    }
  }
  return p;
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out.push_back(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias[r]);
  }
  return out;
}

void MlpParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ValidationError("flat", "parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
  }
}

MlpParams round_to_float(const MlpParams& psi) {
  MlpParams out = psi;
  for (auto& l : out.layers) {
    l.weights = l.weights.cast<float>().cast<double>();
    l.bias = l.bias.cast<float>().cast<double>();
  }
  return out;
}

Action forward(const MlpParams& psi, const Eigen::Ref<const Eigen::VectorXd>& input) {
  if (psi.layers.empty()) throw ValidationError("layers", "network has no layers");
  if (input.size() != psi.layers.front().weights.cols()) {
    throw ValidationError("input", "expected " + std::to_string(psi.layers.front().weights.cols()) +
                                       " values, got " + std::to_string(input.size()));
  }
  if (psi.layers.back().weights.rows() != static_cast<Eigen::Index>(kOutputDim)) {
    throw ValidationError("output", "network must produce 4 outputs");
  }
  Eigen::VectorXd a = input;
  for (std::size_t i = 0; i < psi.layers.size(); ++i) {
    const Layer& l = psi.layers[i];
    Eigen::VectorXd z = l.weights * a + l.bias;
    if (i + 1 < psi.layers.size()) {
      a = z.cwiseMax(0.0);
    } else {
      a = z.array().tanh().matrix();
    }
  }
  return a;
}

LossTerms loss_from_outputs(const Action& y, const Action& target, const LossWeights& w) {
  LossTerms t;
  t.data = (target - y).squaredNorm();
  t.reg = w.w_reg * y.squaredNorm();
  const double hip = y[kHipL] - y[kHipR];
  const double knee = y[kKneeL] - y[kKneeR];
  t.symm = w.w_symm * (hip * hip + knee * knee);
  return t;
}

namespace {

struct BatchForward {
  std::vector<Eigen::MatrixXd> pre;   // z per layer
  std::vector<Eigen::MatrixXd> post;  // activations, post[0] = inputs
};

Eigen::MatrixXd stack_inputs(std::span<const TrainingSample> batch, Eigen::Index width) {
  Eigen::MatrixXd x(width, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = batch[i].input;
  return x;
}

BatchForward run_batch(const MlpParams& psi, Eigen::MatrixXd x) {
  BatchForward f;
  f.post.push_back(std::move(x));
  for (std::size_t i = 0; i < psi.layers.size(); ++i) {
    const Layer& l = psi.layers[i];
    Eigen::MatrixXd z = l.weights * f.post.back();
    z.colwise() += l.bias;
    Eigen::MatrixXd a = (i + 1 < psi.layers.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0))
                                                      : Eigen::MatrixXd(z.array().tanh().matrix());
    f.pre.push_back(std::move(z));
    f.post.push_back(std::move(a));
  }
  return f;
}

void check_batch(const MlpParams& psi, std::span<const TrainingSample> batch) {
  if (batch.empty()) throw ValidationError("batch", "must not be empty");
  psi.validate();
  if (psi.layers.front().weights.cols() != static_cast<Eigen::Index>(kInputDim) ||
      psi.layers.back().weights.rows() != static_cast<Eigen::Index>(kOutputDim)) {
    throw ValidationError("dims", "network must map 80 inputs to 4 outputs");
  }
}

}  // namespace

LossTerms loss_and_gradient(const MlpParams& psi, const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& targets, const LossWeights& w, MlpParams* grad) {
  const Eigen::Index n = inputs.cols();
  const BatchForward f = run_batch(psi, inputs);
  const Eigen::MatrixXd& y = f.post.back();

  const Eigen::RowVectorXd hip = y.row(kHipL) - y.row(kHipR);
  const Eigen::RowVectorXd knee = y.row(kKneeL) - y.row(kKneeR);
  const double inv_n = 1.0 / static_cast<double>(n);
  LossTerms terms;
  terms.data = (y - targets).squaredNorm() * inv_n;
  terms.reg = w.w_reg * y.squaredNorm() * inv_n;
  terms.symm = w.w_symm * (hip.squaredNorm() + knee.squaredNorm()) * inv_n;
  if (grad == nullptr) return terms;

  // dL/dy for the three loss terms, averaged over the batch.
  Eigen::MatrixXd dy = 2.0 * (y - targets) + 2.0 * w.w_reg * y;
  dy.row(kHipL) += 2.0 * w.w_symm * hip;
  dy.row(kHipR) -= 2.0 * w.w_symm * hip;
  dy.row(kKneeL) += 2.0 * w.w_symm * knee;
  dy.row(kKneeR) -= 2.0 * w.w_symm * knee;
  dy *= inv_n;

  *grad = MlpParams::zeros(psi.dims());
  Eigen::MatrixXd delta = dy.array() * (1.0 - y.array().square());
  for (std::size_t k = psi.layers.size(); k-- > 0;) {
    grad->layers[k].weights.noalias() = delta * f.post[k].transpose();
    grad->layers[k].bias = delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd back = psi.layers[k].weights.transpose() * delta;
    delta = back.array() * (f.pre[k - 1].array() > 0.0).cast<double>();
  }
  return terms;
}

namespace {

Eigen::MatrixXd stack_targets(std::span<const TrainingSample> batch) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(kOutputDim), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) t.col(static_cast<Eigen::Index>(i)) = batch[i].target;
  return t;
}

}  // namespace

LossTerms loss(const MlpParams& psi, std::span<const TrainingSample> batch, const LossWeights& w) {
  check_batch(psi, batch);
  return loss_and_gradient(psi, stack_inputs(batch, static_cast<Eigen::Index>(kInputDim)),
                           stack_targets(batch), w, nullptr);
}

MlpParams gradient(const MlpParams& psi, std::span<const TrainingSample> batch,
                   const LossWeights& w) {
  check_batch(psi, batch);
  MlpParams grad;
  loss_and_gradient(psi, stack_inputs(batch, static_cast<Eigen::Index>(kInputDim)),
                    stack_targets(batch), w, &grad);
  return grad;
}

}  // namespace exo::ecn
