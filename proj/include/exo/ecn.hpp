#pragma once

// Exoskeleton control network: joint-state history in, normalized hip/knee
// assistance out. 80 -> 64 -> 64 -> 64 -> 4, ReLU hidden, tanh output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "exo/common.hpp"

namespace exo::ecn {

inline constexpr std::size_t kHistory = 10;
inline constexpr std::size_t kInputDim = 8 * kHistory;
inline constexpr std::size_t kOutputDim = 4;
inline constexpr double kAngleScale = kPi;   // rad
inline constexpr double kVelocityScale = 10.0;  // rad/s

/// Default layer widths including input and output.
std::vector<int> default_dims();

struct Layer {
  Eigen::MatrixXd weights;  // rows = outputs, cols = inputs
  Eigen::VectorXd bias;
};

struct MlpParams {
  std::vector<Layer> layers;

  std::vector<int> dims() const;
  std::size_t parameter_count() const;
  /// Throws ValidationError on a broken chain or non-finite entries.
  void validate() const;

  static MlpParams zeros(const std::vector<int>& dims);
  /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  static MlpParams glorot(const std::vector<int>& dims, std::uint64_t seed);

  /// Every parameter, layer by layer: weights row-major then bias.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

using EcnState = Eigen::Matrix<double, kInputDim, 1>;
using Action = Eigen::Vector4d;

struct JointSample {
  JointVector angles{};      // rad, flexion positive
  JointVector velocities{};  // rad/s
};

/// Flattens up to kHistory samples (oldest first) into the network input,
/// padding by repeating the oldest. Returns nullopt for an empty history.
std::optional<EcnState> build_state(std::span<const JointSample> history);

/// Network output for one input; throws ValidationError on a dimension
/// mismatch.
Action forward(const MlpParams& psi, const Eigen::Ref<const Eigen::VectorXd>& input);

struct TrainingSample {
  EcnState input = EcnState::Zero();
  Action target = Action::Zero();  // normalized per-leg torque, [-1, 1]
};

struct LossWeights {
  double w_reg = 0.01;
  double w_symm = 1.0;
};

struct LossTerms {
  double data = 0.0;
  double reg = 0.0;
  double symm = 0.0;
  double total() const { return data + reg + symm; }
};

/// Batch mean of |tau_d - y|^2 + w_reg |y|^2 + w_symm |y_L - y_R|^2.
LossTerms loss(const MlpParams& psi, std::span<const TrainingSample> batch, const LossWeights& w);

/// Loss terms for given outputs, outside any network.
LossTerms loss_from_outputs(const Action& output, const Action& target, const LossWeights& w);

/// Exact reverse-mode gradient of loss().total(); same shape as psi.
MlpParams gradient(const MlpParams& psi, std::span<const TrainingSample> batch,
                   const LossWeights& w);

/// Column-batched loss; fills `grad` when non-null. Inputs are 80 x n,
/// targets 4 x n.
LossTerms loss_and_gradient(const MlpParams& psi, const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& targets, const LossWeights& w, MlpParams* grad);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 256;
  int max_epochs = 500;
  int patience = 10;
  double min_improvement = 1e-5;
  double validation_fraction = 0.1;
  std::uint64_t seed = 42;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_data = 0.0;
  double best_validation_loss = 0.0;
};

struct TrainResult {
  MlpParams params;  // best-validation parameters, rounded to float32
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

class TrainingDiverged : public NumericalError {
 public:
  explicit TrainingDiverged(int epoch)
      : NumericalError("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Adam on a seeded 90/10 split with early stopping on validation loss.
TrainResult train(std::span<const TrainingSample> dataset, const std::vector<int>& dims,
                  const TrainConfig& config, const LossWeights& weights = {});

// Parameter file: "ECN1", u32 layer count, u32 (rows, cols) per layer, then
// per layer row-major f32 weights and f32 biases, then the CRC-32 of every
// float byte. All little-endian.
std::vector<std::uint8_t> serialize_params(const MlpParams& psi);
MlpParams deserialize_params(std::span<const std::uint8_t> bytes);
void save_params(const MlpParams& psi, const std::filesystem::path& path);
MlpParams load_params(const std::filesystem::path& path);
std::uint32_t params_checksum(const MlpParams& psi);

/// Rounds every parameter to the nearest float32.
MlpParams round_to_float(const MlpParams& psi);

void save_dataset_csv(std::span<const TrainingSample> data, const std::filesystem::path& path);
std::vector<TrainingSample> load_dataset_csv(const std::filesystem::path& path);

}  // namespace exo::ecn
