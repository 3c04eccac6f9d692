#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "exo/ecn.hpp"

namespace exo::ecn {

namespace {

struct Matrices {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

Matrices gather(std::span<const TrainingSample> data, std::span<const std::size_t> idx) {
  Matrices m{Eigen::MatrixXd(static_cast<Eigen::Index>(kInputDim), static_cast<Eigen::Index>(idx.size())),
             Eigen::MatrixXd(static_cast<Eigen::Index>(kOutputDim), static_cast<Eigen::Index>(idx.size()))};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    m.inputs.col(static_cast<Eigen::Index>(i)) = data[idx[i]].input;
    m.targets.col(static_cast<Eigen::Index>(i)) = data[idx[i]].target;
  }
  return m;
}

class Adam {
 public:
  Adam(const MlpParams& shape, const TrainConfig& c)
      : m_(MlpParams::zeros(shape.dims())), v_(MlpParams::zeros(shape.dims())), c_(c) {}

  void update(MlpParams& p, const MlpParams& g) {
    ++t_;
    const double b1t = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    const double step = c_.learning_rate * std::sqrt(b2t) / b1t;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      apply(p.layers[k].weights, g.layers[k].weights, m_.layers[k].weights, v_.layers[k].weights,
            step, b2t);
      apply(p.layers[k].bias, g.layers[k].bias, m_.layers[k].bias, v_.layers[k].bias, step, b2t);
    }
  }

 private:
  template <class Derived>
  void apply(Eigen::MatrixBase<Derived>& p, const Eigen::MatrixBase<Derived>& g,
             Eigen::MatrixBase<Derived>& m, Eigen::MatrixBase<Derived>& v, double step, double b2t) {
    m = c_.beta1 * m + (1.0 - c_.beta1) * g;
    v = c_.beta2 * v + (1.0 - c_.beta2) * g.cwiseProduct(g);
    const double eps_hat = c_.epsilon * std::sqrt(b2t);
    p.array() -= step * m.array() / (v.array().sqrt() + eps_hat);
  }

  MlpParams m_;
  MlpParams v_;
  TrainConfig c_;
  long t_ = 0;
};

}  // namespace

TrainResult train(std::span<const TrainingSample> dataset, const std::vector<int>& dims,
                  const TrainConfig& config, const LossWeights& weights) {
  if (dataset.size() < 1000) throw ValidationError("dataset", "need at least 1000 samples");
  if (config.batch_size == 0) throw ValidationError("batch_size", "must be positive");
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    throw ValidationError("validation_fraction", "must lie in (0, 1)");
  }
  if (dims.front() != static_cast<int>(kInputDim) || dims.back() != static_cast<int>(kOutputDim)) {
    throw ValidationError("dims", "network must map 80 inputs to 4 outputs");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto val_count = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(val_count));
  const std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(val_count), order.end());
  const Matrices validation = gather(dataset, val_idx);

  MlpParams psi = MlpParams::glorot(dims, rng());
  Adam adam(psi, config);

  TrainResult result;
  result.train_size = train_idx.size();
  result.validation_size = val_idx.size();
  result.params = psi;
  double best = std::numeric_limits<double>::infinity();
  double reference = best;  // last value that counted as a real improvement
  int stale = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double train_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, train_idx.size() - start);
      const Matrices batch = gather(dataset, std::span(train_idx).subspan(start, count));
      MlpParams grad;
      const LossTerms terms = loss_and_gradient(psi, batch.inputs, batch.targets, weights, &grad);
      if (!std::isfinite(terms.total())) throw TrainingDiverged(epoch);
      adam.update(psi, grad);
      train_sum += terms.total() * static_cast<double>(count);
      seen += count;
    }
    const LossTerms val = loss_and_gradient(psi, validation.inputs, validation.targets, weights, nullptr);
    if (!std::isfinite(val.total())) throw TrainingDiverged(epoch);

    if (val.total() < best) {
      best = val.total();
      result.params = psi;
      result.best_epoch = epoch;
    }
    if (val.total() < reference - config.min_improvement) {
      reference = val.total();
      stale = 0;
    } else {
      ++stale;
    }
    result.history.push_back(
        {epoch, train_sum / static_cast<double>(seen), val.total(), val.data, best});
    if (stale >= config.patience) break;
  }
  result.params = round_to_float(result.params);
  return result;
}

}  // namespace exo::ecn
