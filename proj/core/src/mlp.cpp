#include "manifold_calib/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "manifold_calib/error.hpp"
#include "manifold_calib/rng.hpp"

namespace manifold_calib {

namespace {

constexpr int kModelFormatVersion = 1;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;

  explicit AdamState(const MlpModel& model) {
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      m_w.push_back(Eigen::MatrixXd::Zero(model.weights()[k].rows(), model.weights()[k].cols()));
      v_w.push_back(m_w.back());
      m_b.push_back(Eigen::VectorXd::Zero(model.biases()[k].size()));
      v_b.push_back(m_b.back());
    }
  }
};

template <typename Param, typename Grad>
void adam_update(Param& p, const Grad& g, Param& m, Param& v, double lr, double b1, double b2,
                 double c1, double c2, double eps) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& src, std::span<const std::size_t> cols) {
  Eigen::MatrixXd out(src.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = src.col(static_cast<Eigen::Index>(cols[j]));
  }
  return out;
}

double mse(const Eigen::MatrixXd& y, const Eigen::MatrixXd& t) {
  return (y - t).squaredNorm() / static_cast<double>(y.size());
}

double heldout_mse(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t) {
  if (x.cols() == 0) return 0.0;
  constexpr Eigen::Index kChunk = 4096;
  double sum = 0.0;
  for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.cols() - start);
    const Eigen::MatrixXd y = forward_normalized(model, x.middleCols(start, n));
    sum += (y - t.middleCols(start, n)).squaredNorm();
  }
  return sum / static_cast<double>(x.size());
}

std::vector<double> flatten_row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Vec6 vec6_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 6) throw Error(ErrorCode::kParseError, "normalization vector must have 6 entries");
  return Vec6(v.data());
}

}  // namespace

Normalization Normalization::fit(std::span<const ProjectionSample> samples) {
  Normalization n;
  if (samples.empty()) return n;
  Vec6 in_sum = Vec6::Zero(), out_sum = Vec6::Zero();
  for (const auto& s : samples) {
    in_sum += s.input.vec();
    out_sum += s.target.vec();
  }
  const double count = static_cast<double>(samples.size());
  n.input_mean = in_sum / count;
  n.output_mean = out_sum / count;
  Vec6 in_var = Vec6::Zero(), out_var = Vec6::Zero();
  for (const auto& s : samples) {
    in_var += (s.input.vec() - n.input_mean).cwiseAbs2();
    out_var += (s.target.vec() - n.output_mean).cwiseAbs2();
  }
  for (int i = 0; i < 6; ++i) {
    const double si = std::sqrt(in_var[i] / count);
    const double so = std::sqrt(out_var[i] / count);
    n.input_std[i] = si > 1e-12 ? si : 1.0;
    n.output_std[i] = so > 1e-12 ? so : 1.0;
  }
  return n;
}

MlpModel::MlpModel(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2 || dims_.front() != 6 || dims_.back() != 6) {
    throw Error(ErrorCode::kValidationError, "MLP must map R^6 to R^6");
  }
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    if (dims_[k + 1] <= 0) throw Error(ErrorCode::kValidationError, "layer widths must be positive");
    weights_.push_back(Eigen::MatrixXd::Zero(dims_[k + 1], dims_[k]));
    biases_.push_back(Eigen::VectorXd::Zero(dims_[k + 1]));
  }
}

MlpModel MlpModel::random(std::vector<int> layer_dims, std::uint64_t seed) {
  MlpModel model(std::move(layer_dims));
  Rng rng(seed);
  for (auto& w : model.weights_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  return model;
}

std::vector<int> MlpModel::architecture(int hidden_width, int hidden_layers) {
  std::vector<int> dims{6};
  for (int i = 0; i < hidden_layers; ++i) dims.push_back(hidden_width);
  dims.push_back(6);
  return dims;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    n += static_cast<std::size_t>(weights_[k].size() + biases_[k].size());
  }
  return n;
}

void MlpModel::validate() const {
  if (dims_.size() < 2 || dims_.front() != 6 || dims_.back() != 6) {
    throw Error(ErrorCode::kValidationError, "MLP must map R^6 to R^6");
  }
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (weights_[k].rows() != dims_[k + 1] || weights_[k].cols() != dims_[k] ||
        biases_[k].size() != dims_[k + 1]) {
      throw Error(ErrorCode::kValidationError, "MLP parameter shapes do not match layer widths");
    }
    if (!weights_[k].allFinite() || !biases_[k].allFinite()) {
      throw Error(ErrorCode::kValidationError, "MLP has non-finite parameters");
    }
  }
  const Normalization& n = normalization;
  if (!n.input_mean.allFinite() || !n.output_mean.allFinite() || !(n.input_std.array() > 0).all() ||
      !(n.output_std.array() > 0).all()) {
    throw Error(ErrorCode::kValidationError, "invalid normalization statistics");
  }
}

Eigen::MatrixXd forward_normalized(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   ForwardCache* cache) {
  const std::size_t layers = model.layer_count();
  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(layers + 1);
    cache->activations.push_back(inputs);
  }
  Eigen::MatrixXd a = inputs;
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::MatrixXd z = model.weights()[k] * a;
    z.colwise() += model.biases()[k];
    a = (k + 1 < layers) ? relu(z) : std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Eigen::MatrixXd backward_inputs(const MlpModel& model, const ForwardCache& cache,
                                const Eigen::MatrixXd& grad_outputs) {
  Eigen::MatrixXd g = grad_outputs;
  for (std::size_t k = model.layer_count(); k-- > 0;) {
    g = model.weights()[k].transpose() * g;
    if (k > 0) g = g.cwiseProduct((cache.activations[k].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

MlpGradients backward_parameters(const MlpModel& model, const ForwardCache& cache,
                                 const Eigen::MatrixXd& grad_outputs) {
  const std::size_t layers = model.layer_count();
  MlpGradients out;
  out.weights.resize(layers);
  out.biases.resize(layers);
  Eigen::MatrixXd g = grad_outputs;
  for (std::size_t k = layers; k-- > 0;) {
    out.weights[k].noalias() = g * cache.activations[k].transpose();
    out.biases[k] = g.rowwise().sum();
    if (k > 0) {
      g = model.weights()[k].transpose() * g;
      g = g.cwiseProduct((cache.activations[k].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

Pose6 mlp_forward(const MlpModel& model, const Pose6& input, bool normalized) {
  const Vec6 x = normalized ? model.normalization.normalize_input(input.vec()) : input.vec();
  const Vec6 y = forward_normalized(model, Eigen::MatrixXd(x));
  return Pose6::from_vec(normalized ? model.normalization.denormalize_output(y) : y);
}

Eigen::Matrix<double, 6, 6> mlp_input_jacobian(const MlpModel& model, const Pose6& input) {
  const Normalization& n = model.normalization;
  ForwardCache cache;
  forward_normalized(model, Eigen::MatrixXd(n.normalize_input(input.vec())), &cache);
  // Row i of the Jacobian is the VJP of the i-th output unit vector.
  const Eigen::MatrixXd seeds = Eigen::MatrixXd::Identity(6, 6);
  ForwardCache wide;
  for (const auto& a : cache.activations) wide.activations.push_back(a.replicate(1, 6));
  const Eigen::MatrixXd rows = backward_inputs(model, wide, seeds);  // column i = d y_i / d x
  Eigen::Matrix<double, 6, 6> jac = rows.transpose();
  return n.output_std.asDiagonal() * jac * n.input_std.cwiseInverse().asDiagonal();
}

SampleLoss sample_loss(const MlpModel& model, const ProjectionSample& sample) {
  const Normalization& n = model.normalization;
  const Eigen::MatrixXd x = n.normalize_input(sample.input.vec());
  const Eigen::MatrixXd t = n.normalize_output(sample.target.vec());
  ForwardCache cache;
  const Eigen::MatrixXd y = forward_normalized(model, x, &cache);
  SampleLoss out;
  out.loss = mse(y, t);
  out.gradients = backward_parameters(model, cache, 2.0 * (y - t) / static_cast<double>(y.size()));
  return out;
}

double train_gradient_check(const MlpModel& model, const ProjectionSample& sample, double step) {
  const SampleLoss analytic = sample_loss(model, sample);
  MlpModel probe = model;
  double worst = 0.0;
  auto compare = [&](double& param, double grad) {
    const double saved = param;
    param = saved + step;
    const double up = sample_loss(probe, sample).loss;
    param = saved - step;
    const double down = sample_loss(probe, sample).loss;
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(grad), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(grad - numeric) / scale);
  };
  for (std::size_t k = 0; k < probe.layer_count(); ++k) {
    Eigen::MatrixXd& w = probe.weights()[k];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) compare(w(r, c), analytic.gradients.weights[k](r, c));
    }
    Eigen::VectorXd& b = probe.biases()[k];
    for (Eigen::Index r = 0; r < b.size(); ++r) compare(b[r], analytic.gradients.biases[k][r]);
  }
  return worst;
}

TrainReport train(MlpModel& model, std::span<const ProjectionSample> dataset,
                  const TrainConfig& config) {
  if (dataset.empty()) throw Error(ErrorCode::kValidationError, "training set is empty");
  if (config.epochs <= 0 || config.batch_size <= 0 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorCode::kValidationError, "epochs, batch size and learning rate must be positive");
  }

  Rng rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  const auto n_heldout = std::min(
      dataset.size() - 1,
      static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(dataset.size()))));
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_heldout));
  std::vector<std::size_t> held_idx(order.end() - static_cast<std::ptrdiff_t>(n_heldout), order.end());
  std::sort(held_idx.begin(), held_idx.end());

  if (config.fit_normalization) {
    std::vector<ProjectionSample> fit_set;
    fit_set.reserve(train_idx.size());
    for (std::size_t i : train_idx) fit_set.push_back(dataset[i]);
    model.normalization = Normalization::fit(fit_set);
  }
  const Normalization& norm = model.normalization;

  auto pack = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& x, Eigen::MatrixXd& t) {
    x.resize(6, static_cast<Eigen::Index>(idx.size()));
    t.resize(6, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      x.col(static_cast<Eigen::Index>(j)) = norm.normalize_input(dataset[idx[j]].input.vec());
      t.col(static_cast<Eigen::Index>(j)) = norm.normalize_output(dataset[idx[j]].target.vec());
    }
  };
  Eigen::MatrixXd x_train, t_train, x_held, t_held;
  pack(train_idx, x_train, t_train);
  pack(held_idx, x_held, t_held);

  AdamState adam(model);
  TrainReport report;
  report.heldout_indices = held_idx;
  std::vector<std::size_t> perm(train_idx.size());
  std::iota(perm.begin(), perm.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    const double progress = static_cast<double>(epoch) / static_cast<double>(config.epochs);
    const double lr = config.final_learning_rate +
                      0.5 * (config.learning_rate - config.final_learning_rate) * (1.0 + std::cos(kPi * progress));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += batch) {
      const std::size_t count = std::min(batch, perm.size() - start);
      const std::span<const std::size_t> cols(perm.data() + start, count);
      const Eigen::MatrixXd xb = gather(x_train, cols);
      const Eigen::MatrixXd tb = gather(t_train, cols);
      ForwardCache cache;
      const Eigen::MatrixXd y = forward_normalized(model, xb, &cache);
      const double loss = mse(y, tb);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "training loss became non-finite at epoch " + std::to_string(epoch) +
                        ", batch offset " + std::to_string(start) + ", lr " + std::to_string(lr));
      }
      loss_sum += loss * static_cast<double>(count);
      const MlpGradients grads =
          backward_parameters(model, cache, 2.0 * (y - tb) / static_cast<double>(y.size()));

      ++adam.step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
      for (std::size_t k = 0; k < model.layer_count(); ++k) {
        adam_update(model.weights()[k], grads.weights[k], adam.m_w[k], adam.v_w[k], lr, config.beta1,
                    config.beta2, c1, c2, config.epsilon);
        adam_update(model.biases()[k], grads.biases[k], adam.m_b[k], adam.v_b[k], lr, config.beta1,
                    config.beta2, c1, c2, config.epsilon);
      }
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(perm.size()));
    report.heldout_loss.push_back(heldout_mse(model, x_held, t_held));
    spdlog::debug("epoch {} lr {:.2e} train mse {:.5f} held-out mse {:.5f}", epoch, lr,
                  report.train_loss.back(), report.heldout_loss.back());
  }
  report.heldout_mse = report.heldout_loss.back();
  report.threshold_met = report.heldout_mse < config.heldout_mse_threshold;
  return report;
}

nlohmann::json model_to_json(const MlpModel& model) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t k = 0; k < model.layer_count(); ++k) {
    weights.push_back(flatten_row_major(model.weights()[k]));
    biases.push_back(to_vector(model.biases()[k]));
  }
  const Normalization& n = model.normalization;
  return {{"format_version", kModelFormatVersion},
          {"layer_dims", model.layer_dims()},
          {"activation", "relu"},
          {"weights", weights},
          {"biases", biases},
          {"normalization",
           {{"input_mean", to_vector(n.input_mean)},
            {"input_std", to_vector(n.input_std)},
            {"output_mean", to_vector(n.output_mean)},
            {"output_std", to_vector(n.output_std)}}}};
}

MlpModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::kParseError, "unsupported model format version");
    }
    MlpModel model(doc.at("layer_dims").get<std::vector<int>>());
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (weights.size() != model.layer_count() || biases.size() != model.layer_count()) {
      throw Error(ErrorCode::kParseError, "model layer count does not match layer_dims");
    }
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
      const auto w = weights[k].get<std::vector<double>>();
      const auto b = biases[k].get<std::vector<double>>();
      Eigen::MatrixXd& wm = model.weights()[k];
      if (static_cast<Eigen::Index>(w.size()) != wm.size() ||
          static_cast<Eigen::Index>(b.size()) != model.biases()[k].size()) {
        throw Error(ErrorCode::kParseError, "model parameter array has the wrong size");
      }
      for (Eigen::Index r = 0; r < wm.rows(); ++r) {
        for (Eigen::Index c = 0; c < wm.cols(); ++c) {
          wm(r, c) = w[static_cast<std::size_t>(r * wm.cols() + c)];
        }
      }
      model.biases()[k] = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    const auto& n = doc.at("normalization");
    model.normalization.input_mean = vec6_from(n.at("input_mean"));
    model.normalization.input_std = vec6_from(n.at("input_std"));
    model.normalization.output_mean = vec6_from(n.at("output_mean"));
    model.normalization.output_std = vec6_from(n.at("output_std"));
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write model file " + path.string());
  out << model_to_json(model).dump() << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open model file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, "malformed model file " + path.string() + ": " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace manifold_calib
