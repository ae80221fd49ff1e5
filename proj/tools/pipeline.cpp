#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "manifold_calib/error.hpp"
#include "manifold_calib/rng.hpp"

namespace manifold_calib::cli {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorCode::kConfigParse, message);
}

// Typed, strict view of one config object: every key must be consumed.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) config_error("config section '" + name_ + "' must be an object");
  }

  bool has(const char* key) const { return doc_.contains(key); }

  const json& raw(const char* key) {
    used_.insert(key);
    return doc_.at(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!doc_.contains(key)) return;
    used_.insert(key);
    const json& v = doc_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) type_error(key, "a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        type_error(key, "a non-negative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) type_error(key, "an integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) type_error(key, "a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) type_error(key, "a string");
      out = v.get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!used_.contains(key)) config_error("unknown key '" + key + "' in config section '" + name_ + "'");
    }
  }

 private:
  [[noreturn]] void type_error(const char* key, const char* expected) const {
    config_error("'" + name_ + "." + key + "' must be " + expected);
  }

  const json& doc_;
  std::string name_;
  std::set<std::string> used_;
};

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    config_error("malformed config " + path.string() + ": " + e.what());
  }
}

std::vector<double> number_array(const json& v, const std::string& what, std::size_t expected = 0) {
  if (!v.is_array()) config_error("'" + what + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) config_error("'" + what + "' must be an array of numbers");
    out.push_back(x.get<double>());
  }
  if (expected != 0 && out.size() != expected) {
    config_error("'" + what + "' must have " + std::to_string(expected) + " entries");
  }
  return out;
}

Pose6 pose_value(const json& v, const std::string& what) {
  const auto a = number_array(v, what, 6);
  return {a[0], a[1], a[2], a[3], a[4], a[5]};
}

// Inline object, or a path string relative to the config file.
json inline_or_file(const json& v, const std::filesystem::path& base_dir, const std::string& what) {
  if (v.is_object()) return v;
  if (!v.is_string()) config_error("'" + what + "' must be an object or a path");
  return read_config_file(base_dir / v.get<std::string>());
}

AssemblyGeometry parse_geometry(const json& doc) {
  AssemblyGeometry g;
  Section s(doc, "geometry");
  s.get("peg_width", g.peg_width);
  s.get("peg_length", g.peg_length);
  s.get("hole_width", g.hole_width);
  s.get("hole_depth", g.hole_depth);
  s.get("block_half_extent", g.block_half_extent);
  s.get("floor_thickness", g.floor_thickness);
  s.finish();
  try {
    g.validate();
  } catch (const Error& e) {
    config_error(std::string("invalid geometry: ") + e.what());
  }
  return g;
}

SceneFrames parse_frames(const json& doc, const AssemblyGeometry& geom) {
  SceneFrames f = reference_frames(geom);
  Section s(doc, "frames");
  if (s.has("base_T_hole")) f.base_T_hole = pose_to_matrix(pose_value(s.raw("base_T_hole"), "frames.base_T_hole"));
  if (s.has("ee_T_peg")) f.ee_T_peg = pose_to_matrix(pose_value(s.raw("ee_T_peg"), "frames.ee_T_peg"));
  if (s.has("home")) {
    const auto home = number_array(s.raw("home"), "frames.home");
    f.home = Eigen::Map<const Eigen::VectorXd>(home.data(), static_cast<Eigen::Index>(home.size()));
  }
  s.finish();
  return f;
}

SamplerConfig parse_sampler(const json& doc) {
  SamplerConfig c;
  Section s(doc, "manifold.sampler");
  s.get("rim_lateral", c.rim_lateral);
  s.get("rim_tilt", c.rim_tilt);
  s.get("rim_yaw", c.rim_yaw);
  s.get("wall_tilt", c.wall_tilt);
  s.get("wall_yaw", c.wall_yaw);
  s.get("bottom_fraction", c.bottom_fraction);
  s.get("tilted_depth_min", c.tilted_depth_min);
  s.get("tilted_depth_max", c.tilted_depth_max);
  s.finish();
  return c;
}

void parse_train(const json& doc, PipelineConfig& c) {
  Section s(doc, "train");
  s.get("hidden_width", c.hidden_width);
  s.get("hidden_layers", c.hidden_layers);
  s.get("epochs", c.train.epochs);
  s.get("batch_size", c.train.batch_size);
  s.get("learning_rate", c.train.learning_rate);
  s.get("final_learning_rate", c.train.final_learning_rate);
  s.get("beta1", c.train.beta1);
  s.get("beta2", c.train.beta2);
  s.get("epsilon", c.train.epsilon);
  s.get("validation_fraction", c.train.validation_fraction);
  s.get("heldout_mse_threshold", c.train.heldout_mse_threshold);
  s.finish();
  if (c.hidden_width < 1 || c.hidden_layers < 1) config_error("train.hidden_width and train.hidden_layers must be >= 1");
  if (c.train.epochs < 1 || c.train.batch_size < 1) config_error("train.epochs and train.batch_size must be >= 1");
  if (!(c.train.validation_fraction > 0.0 && c.train.validation_fraction < 1.0)) {
    config_error("train.validation_fraction must lie in (0, 1)");
  }
}

KinematicParams parse_params(const json& doc, std::size_t n) {
  Section s(doc, "simulate.truth");
  KinematicParams p = KinematicParams::zero(n);
  s.get("r", p.r);
  if (s.has("b")) {
    const auto b = number_array(s.raw("b"), "simulate.truth.b", n);
    p.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(n));
  }
  s.finish();
  try {
    p.validate(n);
  } catch (const Error& e) {
    config_error(std::string("invalid truth parameters: ") + e.what());
  }
  return p;
}

void parse_simulate(const json& doc, PipelineConfig& c) {
  Section s(doc, "simulate");
  s.get("observations", c.observations);
  s.get("seed_jitter_deg", c.simulation.seed_jitter_deg);
  if (s.has("truth")) c.truth = parse_params(s.raw("truth"), c.chain.size());
  if (s.has("ik")) {
    Section ik(s.raw("ik"), "simulate.ik");
    ik.get("damping", c.simulation.ik.damping);
    ik.get("max_iterations", c.simulation.ik.max_iterations);
    ik.get("position_tolerance", c.simulation.ik.position_tolerance);
    ik.get("angle_tolerance", c.simulation.ik.angle_tolerance);
    ik.get("max_step", c.simulation.ik.max_step);
    ik.finish();
  }
  s.finish();
  if (c.observations == 0) config_error("simulate.observations must be >= 1");
}

void parse_calibrate(const json& doc, OptimizeConfig& o, bool& mirror_symmetric) {
  Section s(doc, "calibrate");
  s.get("mirror_symmetric", mirror_symmetric);
  s.get("lr_strain", o.lr_strain);
  s.get("lr_bias", o.lr_bias);
  s.get("max_iterations", o.max_iterations);
  s.get("tolerance", o.tolerance);
  s.get("window", o.window);
  s.get("subsample", o.subsample);
  s.get("stop_gradient", o.stop_gradient);
  s.get("final_lr_fraction", o.final_lr_fraction);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.get("epsilon", o.epsilon);
  s.finish();
  try {
    o.validate();
  } catch (const Error& e) {
    config_error(std::string("invalid calibrate section: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json stamp(json doc, const ArtifactMeta& meta) {
  doc["config_hash"] = meta.config_hash;
  doc["seed"] = meta.seed;
  return doc;
}

std::string meta_comment(const ArtifactMeta& meta) {
  return "# config_hash=" + meta.config_hash + " seed=" + std::to_string(meta.seed) + "\n";
}

KinematicParams read_estimate(const std::filesystem::path& path, std::size_t n) {
  const json doc = read_json(path);
  try {
    KinematicParams p{doc.at("r_hat").get<double>(), Eigen::VectorXd()};
    const auto b = doc.at("b_hat").get<std::vector<double>>();
    if (b.size() != n) throw Error(ErrorCode::kParseError, "b_hat length does not match the chain");
    p.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(n));
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, "malformed result " + path.string() + ": " + e.what());
  }
}

// --- gradient checks -------------------------------------------------------

struct SuiteResult {
  std::string name;
  int checked = 0;
  int skipped = 0;  // instances whose difference stencil crosses a kink
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return checked > 0 && max_error <= tolerance; }
};

double wrap_deg(double d) { return std::remainder(d, 360.0); }

Vec6 pose_difference(const Pose6& a, const Pose6& b) {
  Vec6 d = a.vec() - b.vec();
  for (int k = 3; k < 6; ++k) d[k] = wrap_deg(d[k]);
  return d;
}

double scaled_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

KinematicChain random_chain(Rng& rng) {
  std::vector<DHRow> rows(7);
  constexpr double kTwists[] = {-90.0, 0.0, 90.0};
  for (DHRow& r : rows) {
    r.a = rng.uniform(0.0, 300.0);
    r.alpha_twist = kTwists[rng.index(3)];
    r.d = rng.uniform(0.0, 400.0);
    r.theta_offset = rng.uniform(-30.0, 30.0);
  }
  return KinematicChain(rows);
}

JointVector random_joints(Rng& rng, std::size_t n) {
  JointVector q(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(-150.0, 150.0);
  return q;
}

KinematicParams random_params(Rng& rng, std::size_t n) {
  KinematicParams p = KinematicParams::zero(n);
  p.r = rng.uniform(-0.05, 0.05);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b[i] = rng.uniform(-5.0, 5.0);
  return p;
}

Pose6 random_pose(Rng& rng) {
  return {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-20, 2),
          rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
}

SuiteResult check_fk(int instances, Rng& rng) {
  SuiteResult s{"fk_gradient", 0, 0, 0.0, 1e-4};
  constexpr double h = 1e-6;
  while (s.checked < instances) {
    const KinematicChain chain = random_chain(rng);
    const JointVector q = random_joints(rng, chain.size());
    const KinematicParams p = random_params(rng, chain.size());
    FkGradient g;
    try {
      g = fk_gradient(chain, q, p);
    } catch (const Error&) {
      ++s.skipped;  // gimbal lock
      continue;
    }
    const Eigen::VectorXd theta = p.packed();
    Eigen::MatrixXd numeric(6, theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Eigen::VectorXd up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      const Pose6 pu = matrix_to_pose(forward_kinematics(chain, q, KinematicParams::unpack(up)));
      const Pose6 pd = matrix_to_pose(forward_kinematics(chain, q, KinematicParams::unpack(down)));
      numeric.col(k) = pose_difference(pu, pd) / (2 * h);
    }
    s.max_error = std::max(s.max_error, scaled_error(g.jacobian, numeric));
    ++s.checked;
  }
  return s;
}

SuiteResult check_mlp_weights(int instances, Rng& rng) {
  SuiteResult s{"mlp_weight_gradient", 0, 0, 0.0, 1e-4};
  for (; s.checked < instances; ++s.checked) {
    const MlpModel model = MlpModel::random(MlpModel::architecture(12, 2), rng.next());
    const ProjectionSample sample{random_pose(rng), random_pose(rng)};
    s.max_error = std::max(s.max_error, train_gradient_check(model, sample));
  }
  return s;
}

SuiteResult check_input_jacobian(int instances, Rng& rng) {
  SuiteResult s{"projection_input_jacobian", 0, 0, 0.0, 1e-4};
  auto numeric_jacobian = [](const MlpModel& m, const Pose6& x, double h) {
    Eigen::Matrix<double, 6, 6> j;
    for (int k = 0; k < 6; ++k) {
      Vec6 up = x.vec(), down = x.vec();
      up[k] += h;
      down[k] -= h;
      j.col(k) = (mlp_forward(m, Pose6::from_vec(up)).vec() - mlp_forward(m, Pose6::from_vec(down)).vec()) / (2 * h);
    }
    return j;
  };
  while (s.checked < instances) {
    MlpModel model = MlpModel::random(MlpModel::architecture(32, 3), rng.next());
    for (int k = 0; k < 6; ++k) {
      model.normalization.input_std[k] = rng.uniform(0.5, 10.0);
      model.normalization.output_std[k] = rng.uniform(0.5, 10.0);
      model.normalization.input_mean[k] = rng.uniform(-5.0, 5.0);
    }
    const Pose6 x = random_pose(rng);
    const auto fine = numeric_jacobian(model, x, 1e-5), coarse = numeric_jacobian(model, x, 2e-5);
    if (scaled_error(fine, coarse) > 1e-6) {
      ++s.skipped;  // ReLU boundary inside the stencil
      continue;
    }
    s.max_error = std::max(s.max_error, scaled_error(mlp_input_jacobian(model, x), fine));
    ++s.checked;
  }
  return s;
}

SuiteResult check_loss(int instances, Rng& rng, const PipelineConfig& config) {
  SuiteResult s{"calibration_loss_gradient", 0, 0, 0.0, 1e-3};
  SimulationOptions sim = config.simulation;
  sim.seed_jitter_deg = 20.0;
  const auto pool = simulate_observations(config.chain, config.geometry, config.frames,
                                          random_params(rng, config.chain.size()), 40, rng.next(), sim);
  LossOptions value_only;
  value_only.want_gradient = false;
  auto numeric_gradient = [&](const CalibrationProblem& p, const Eigen::VectorXd& theta, double h) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Eigen::VectorXd up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      g[k] = (calibration_loss(p, KinematicParams::unpack(up), value_only).total -
              calibration_loss(p, KinematicParams::unpack(down), value_only).total) / (2 * h);
    }
    return g;
  };
  int attempts = 0;
  while (s.checked < instances && attempts++ < 20 * instances) {
    CalibrationProblem p{config.chain, config.frames.base_T_hole, config.frames.ee_T_peg, {},
                         MlpModel::random(MlpModel::architecture(16, 2), rng.next()), nullptr};
    for (int k = 0; k < 6; ++k) p.model.normalization.input_std[k] = p.model.normalization.output_std[k] = 5.0;
    p.mirror_symmetric = s.checked % 2 == 0;
    for (int i = 0; i < 5; ++i) p.observations.push_back(pool[rng.index(pool.size())]);
    const KinematicParams at = random_params(rng, config.chain.size());
    const Eigen::VectorXd theta = at.packed();
    const Eigen::VectorXd fine = numeric_gradient(p, theta, 1e-5), coarse = numeric_gradient(p, theta, 2e-5);
    if (scaled_error(fine, coarse) > 1e-5) {
      ++s.skipped;  // L1 sign flip or ReLU boundary inside the stencil
      continue;
    }
    s.max_error = std::max(s.max_error, scaled_error(calibration_loss(p, at).gradient, fine));
    ++s.checked;
  }
  if (s.checked < instances) s.checked = -s.checked;  // too many kinks: report as a failure
  return s;
}

}  // namespace

ArtifactMeta PipelineConfig::meta() const { return {config_hash(document), seed}; }

std::uint64_t stage_seed(const PipelineConfig& config, Stage stage) {
  return stream_seed(config.seed, static_cast<std::uint64_t>(stage));
}

PipelineConfig parse_config(const json& doc, const std::filesystem::path& base_dir, const Overrides& overrides) {
  PipelineConfig c;
  Section root(doc, "root");
  root.get("seed", c.seed);
  if (overrides.seed) c.seed = *overrides.seed;

  if (root.has("paths")) {
    Section p(root.raw("paths"), "paths");
    p.get("manifold", c.paths.manifold);
    p.get("dataset", c.paths.dataset);
    p.get("model", c.paths.model);
    p.get("loss_curve", c.paths.loss_curve);
    p.get("observations", c.paths.observations);
    p.get("result", c.paths.result);
    p.get("report", c.paths.report);
    p.get("report_table", c.paths.report_table);
    p.get("gradcheck", c.paths.gradcheck);
    p.finish();
  }

  json resolved = doc;
  resolved["seed"] = c.seed;
  if (root.has("geometry")) {
    const json g = inline_or_file(root.raw("geometry"), base_dir, "geometry");
    c.geometry = parse_geometry(g);
    resolved["geometry"] = g;
  }
  c.frames = reference_frames(c.geometry);
  if (root.has("chain")) {
    const json ch = inline_or_file(root.raw("chain"), base_dir, "chain");
    try {
      c.chain = parse_chain(ch);
    } catch (const Error& e) {
      config_error(std::string("invalid chain: ") + e.what());
    }
    resolved["chain"] = ch;
  }
  if (root.has("frames")) {
    const json f = inline_or_file(root.raw("frames"), base_dir, "frames");
    c.frames = parse_frames(f, c.geometry);
    resolved["frames"] = f;
  }
  if (static_cast<std::size_t>(c.frames.home.size()) != c.chain.size()) {
    config_error("frames.home length does not match the chain");
  }
  c.truth = KinematicParams::zero(c.chain.size());

  if (root.has("manifold")) {
    Section m(root.raw("manifold"), "manifold");
    m.get("size", c.manifold_size);
    if (m.has("sampler")) c.sampler = parse_sampler(m.raw("sampler"));
    m.finish();
    if (c.manifold_size == 0) config_error("manifold.size must be >= 1");
  }
  c.simulation.sampler = c.sampler;
  if (root.has("dataset")) {
    Section d(root.raw("dataset"), "dataset");
    d.get("size", c.dataset_size);
    d.finish();
    if (c.dataset_size == 0) config_error("dataset.size must be >= 1");
  }
  if (root.has("train")) parse_train(root.raw("train"), c);
  if (root.has("simulate")) parse_simulate(root.raw("simulate"), c);
  if (root.has("calibrate")) parse_calibrate(root.raw("calibrate"), c.optimize, c.mirror_symmetric);
  if (root.has("gradcheck")) {
    Section g(root.raw("gradcheck"), "gradcheck");
    g.get("instances", c.gradcheck_instances);
    g.finish();
    if (c.gradcheck_instances < 1) config_error("gradcheck.instances must be >= 1");
  }
  root.finish();

  c.document = std::move(resolved);
  if (overrides.out_dir) c.out_dir = *overrides.out_dir;
  if (overrides.threads) {
    if (*overrides.threads == 0) config_error("--threads must be >= 1");
    c.threads = *overrides.threads;
  }
  c.optimize.threads = c.threads;
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  return parse_config(read_config_file(path), path.parent_path(), overrides);
}

void cmd_generate_manifold(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const ManifoldSet m = generate_manifold(config.geometry, config.manifold_size,
                                          stage_seed(config, Stage::kManifold), config.sampler);
  write_manifold_csv(config.artifact(config.paths.manifold), m, config.meta());
  spdlog::info("generate-manifold: {} poses in {:.1f} s", m.size(), seconds_since(start));
}

void cmd_build_dataset(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const ManifoldSet m = read_manifold_csv(config.artifact(config.paths.manifold));
  const auto data = build_dataset(m, config.dataset_size, stage_seed(config, Stage::kDataset), config.threads);
  write_dataset_csv(config.artifact(config.paths.dataset), data, config.meta());
  spdlog::info("build-dataset: {} samples in {:.1f} s", data.size(), seconds_since(start));
}

void cmd_train(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto data = read_dataset_csv(config.artifact(config.paths.dataset));
  const std::uint64_t seed = stage_seed(config, Stage::kTrain);
  MlpModel model = MlpModel::random(MlpModel::architecture(config.hidden_width, config.hidden_layers), seed);
  TrainConfig tc = config.train;
  tc.seed = stream_seed(seed, 1);
  const TrainReport report = train(model, data, tc);

  json doc = model_to_json(model);
  doc["heldout_mse"] = report.heldout_mse;
  doc["threshold_met"] = report.threshold_met;
  write_json(config.artifact(config.paths.model), stamp(std::move(doc), config.meta()));

  std::string curve = meta_comment(config.meta()) + "epoch,train_mse,heldout_mse\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    curve += std::to_string(e + 1) + "," + format_double(report.train_loss[e]) + "," +
             format_double(report.heldout_loss[e]) + "\n";
  }
  write_text(config.artifact(config.paths.loss_curve), curve);

  spdlog::info("train: {} epochs in {:.1f} s, held-out MSE {:.4f}", report.train_loss.size(),
               seconds_since(start), report.heldout_mse);
  if (!report.threshold_met) {
    spdlog::warn("train: held-out MSE {:.4f} above threshold {:.4f}", report.heldout_mse,
                 config.train.heldout_mse_threshold);
  }
}

void cmd_simulate(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto obs = simulate_observations(config.chain, config.geometry, config.frames, config.truth,
                                         config.observations, stage_seed(config, Stage::kSimulate),
                                         config.simulation);
  write_observations_jsonl(config.artifact(config.paths.observations), obs, config.meta());
  spdlog::info("simulate: {} observations in {:.1f} s", obs.size(), seconds_since(start));
}

void cmd_calibrate(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  CalibrationProblem problem{config.chain, config.frames.base_T_hole, config.frames.ee_T_peg,
                             read_observations_jsonl(config.artifact(config.paths.observations)),
                             load_model(config.artifact(config.paths.model)), nullptr};
  problem.manifold =
      std::make_shared<NearestNeighborIndex>(read_manifold_csv(config.artifact(config.paths.manifold)).poses);
  problem.mirror_symmetric = config.mirror_symmetric;
  OptimizeConfig oc = config.optimize;
  oc.seed = stage_seed(config, Stage::kCalibrate);
  const CalibrationResult result = optimize(problem, oc);

  json doc = result_to_json(result);
  doc["truth"] = params_to_json(config.truth);
  doc["report"] = report_to_json(evaluate(result.params, config.truth));
  doc["config"] = config.document;
  write_json(config.artifact(config.paths.result), stamp(std::move(doc), config.meta()));

  spdlog::info("calibrate: {} iterations in {:.1f} s, best loss {:.5f} at iteration {}{}", result.iterations,
               seconds_since(start), result.best_history.empty() ? 0.0 : result.best_history.back(),
               result.best_iteration, result.converged ? " (converged)" : "");
  if (!result.flat_parameters.empty()) {
    spdlog::warn("calibrate: {} parameter(s) with a flat loss at the start", result.flat_parameters.size());
  }
  if (result.extrapolated > 0) {
    spdlog::warn("calibrate: {} predicted contact pose(s) outside the trained region", result.extrapolated);
  }
}

std::string cmd_evaluate(const PipelineConfig& config) {
  const KinematicParams estimate = read_estimate(config.artifact(config.paths.result), config.chain.size());
  const ErrorReport report = evaluate(estimate, config.truth);
  json doc = report_to_json(report);
  doc["estimate"] = params_to_json(estimate);
  doc["truth"] = params_to_json(config.truth);
  write_json(config.artifact(config.paths.report), stamp(std::move(doc), config.meta()));
  const std::string table = format_report_table(report);
  write_text(config.artifact(config.paths.report_table), meta_comment(config.meta()) + table);
  return table;
}

bool cmd_gradcheck(const PipelineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(stage_seed(config, Stage::kGradcheck));
  const int n = config.gradcheck_instances;
  const std::vector<SuiteResult> suites = {check_fk(n, rng), check_mlp_weights(n, rng),
                                           check_input_jacobian(n, rng), check_loss(n, rng, config)};
  json doc;
  bool all_passed = true;
  for (const SuiteResult& s : suites) {
    doc["suites"].push_back({{"name", s.name},
                             {"checked", std::abs(s.checked)},
                             {"skipped_at_kinks", s.skipped},
                             {"max_relative_error", s.max_error},
                             {"tolerance", s.tolerance},
                             {"passed", s.passed()}});
    all_passed = all_passed && s.passed();
    spdlog::info("gradcheck {}: {} instances, max error {:.2e} (tol {:.0e}) {}", s.name, std::abs(s.checked),
                 s.max_error, s.tolerance, s.passed() ? "PASS" : "FAIL");
  }
  doc["passed"] = all_passed;
  write_json(config.artifact(config.paths.gradcheck), stamp(std::move(doc), config.meta()));
  spdlog::info("gradcheck: {:.1f} s", seconds_since(start));
  return all_passed;
}

void cmd_all(const PipelineConfig& config) {
  cmd_generate_manifold(config);
  cmd_build_dataset(config);
  cmd_train(config);
  cmd_simulate(config);
  cmd_calibrate(config);
}

}  // namespace manifold_calib::cli
