#pragma once

// Fully connected ReLU network R^6 -> R^6 with per-dimension standardization
// of inputs and outputs, trained with Adam on a mean squared error.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "manifold_calib/se3.hpp"

namespace manifold_calib {

/// One supervised pair: perturbed pose and its nearest manifold pose.
struct ProjectionSample {
  Pose6 input;
  Pose6 target;
};

struct Normalization {
  Vec6 input_mean = Vec6::Zero();
  Vec6 input_std = Vec6::Ones();
  Vec6 output_mean = Vec6::Zero();
  Vec6 output_std = Vec6::Ones();

  static Normalization fit(std::span<const ProjectionSample> samples);

  Vec6 normalize_input(const Vec6& x) const { return (x - input_mean).cwiseQuotient(input_std); }
  Vec6 denormalize_input(const Vec6& x) const { return x.cwiseProduct(input_std) + input_mean; }
  Vec6 normalize_output(const Vec6& y) const { return (y - output_mean).cwiseQuotient(output_std); }
  Vec6 denormalize_output(const Vec6& y) const { return y.cwiseProduct(output_std) + output_mean; }
};

class MlpModel {
 public:
  MlpModel() = default;
  /// Zero-initialized parameters for the given widths (first and last must be 6).
  explicit MlpModel(std::vector<int> layer_dims);

  /// He-uniform weights, zero biases.
  static MlpModel random(std::vector<int> layer_dims, std::uint64_t seed);
  /// 6 -> hidden x depth -> 6.
  static std::vector<int> architecture(int hidden_width, int hidden_layers);

  const std::vector<int>& layer_dims() const { return dims_; }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t parameter_count() const;

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  Normalization normalization;

  /// Throws Error(kValidationError) on bad widths or non-finite parameters.
  void validate() const;

 private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> weights_;  // weights_[k] is dims[k+1] x dims[k]
  std::vector<Eigen::VectorXd> biases_;
};

/// Layer activations kept for backpropagation: [input, hidden..., output].
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Batched forward pass in normalized space; inputs are columns.
Eigen::MatrixXd forward_normalized(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   ForwardCache* cache = nullptr);

/// Vector-Jacobian product: gradient w.r.t. normalized inputs.
Eigen::MatrixXd backward_inputs(const MlpModel& model, const ForwardCache& cache,
                                const Eigen::MatrixXd& grad_outputs);

/// Parameter gradients for the given output gradients (normalized space).
MlpGradients backward_parameters(const MlpModel& model, const ForwardCache& cache,
                                 const Eigen::MatrixXd& grad_outputs);

/// Single pose through the network. With `normalized` the stored
/// standardization is applied on the way in and undone on the way out.
Pose6 mlp_forward(const MlpModel& model, const Pose6& input, bool normalized = true);

/// d(output pose)/d(input pose) in raw units.
Eigen::Matrix<double, 6, 6> mlp_input_jacobian(const MlpModel& model, const Pose6& input);

/// Mean squared error over the 6 normalized outputs of one sample, plus its
/// parameter gradients.
struct SampleLoss {
  double loss = 0.0;
  MlpGradients gradients;
};
SampleLoss sample_loss(const MlpModel& model, const ProjectionSample& sample);

/// Max relative error between backpropagated parameter gradients and central
/// differences (step `step` on each parameter).
double train_gradient_check(const MlpModel& model, const ProjectionSample& sample,
                            double step = 1e-5);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double final_learning_rate = 1e-5;  // cosine decay target
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  double validation_fraction = 0.05;
  double heldout_mse_threshold = 0.05;  // normalized units
  bool fit_normalization = true;
};

struct TrainReport {
  std::vector<double> train_loss;    // per epoch, normalized MSE
  std::vector<double> heldout_loss;  // per epoch
  double heldout_mse = 0.0;
  bool threshold_met = false;
  std::vector<std::size_t> heldout_indices;
};

/// Trains in place. Throws Error(kNonFiniteLoss) if the loss diverges.
TrainReport train(MlpModel& model, std::span<const ProjectionSample> dataset,
                  const TrainConfig& config);

nlohmann::json model_to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& doc);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace manifold_calib
