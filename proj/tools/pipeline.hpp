#pragma once

// Configuration and stage drivers behind the manifold-calib command line.
// Each stage reads its inputs from the output directory, writes one artifact
// family, and stamps every file with the config hash and seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "manifold_calib/calibration.hpp"
#include "manifold_calib/contact_sim.hpp"
#include "manifold_calib/geometry.hpp"
#include "manifold_calib/io.hpp"
#include "manifold_calib/kinematics.hpp"
#include "manifold_calib/mlp.hpp"
#include "manifold_calib/projection.hpp"

namespace manifold_calib::cli {

struct ArtifactPaths {
  std::string manifold = "manifold.csv";
  std::string dataset = "dataset.csv";
  std::string model = "model.json";
  std::string loss_curve = "train_loss.csv";
  std::string observations = "observations.jsonl";
  std::string result = "result.json";
  std::string report = "report.json";
  std::string report_table = "report.txt";
  std::string gradcheck = "gradcheck.json";
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = ".";
  unsigned threads = 1;
  ArtifactPaths paths;

  AssemblyGeometry geometry;
  KinematicChain chain = reference_chain();
  SceneFrames frames = reference_frames();

  std::size_t manifold_size = 20000;
  SamplerConfig sampler;
  std::size_t dataset_size = 100000;
  int hidden_width = 256;
  int hidden_layers = 4;
  TrainConfig train;
  std::size_t observations = 3000;
  SimulationOptions simulation;
  KinematicParams truth = KinematicParams::zero(7);
  OptimizeConfig optimize;
  bool mirror_symmetric = true;
  int gradcheck_instances = 50;

  /// Effective configuration document (with the seed override applied); its
  /// hash identifies every artifact.
  nlohmann::json document;

  ArtifactMeta meta() const;
  std::filesystem::path artifact(const std::string& name) const { return out_dir / name; }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<unsigned> threads;
};

/// Parses a pipeline config. Geometry, chain and frames may be given inline or
/// as paths relative to the config file. Throws Error(kConfigParse) on unknown
/// keys or wrongly typed values and Error(kMissingArtifact) on missing files.
PipelineConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                            const Overrides& overrides = {});

/// Per-stage RNG streams derived from the global seed.
enum class Stage : std::uint64_t { kManifold = 1, kDataset, kTrain, kSimulate, kCalibrate, kGradcheck };
std::uint64_t stage_seed(const PipelineConfig& config, Stage stage);

void cmd_generate_manifold(const PipelineConfig& config);
void cmd_build_dataset(const PipelineConfig& config);
void cmd_train(const PipelineConfig& config);
void cmd_simulate(const PipelineConfig& config);
void cmd_calibrate(const PipelineConfig& config);
/// Returns the human-readable table (also written next to the JSON report).
std::string cmd_evaluate(const PipelineConfig& config);
/// Returns true when every gradient suite passes.
bool cmd_gradcheck(const PipelineConfig& config);
void cmd_all(const PipelineConfig& config);

}  // namespace manifold_calib::cli
