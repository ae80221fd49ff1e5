// manifold-calib: command-line driver for the calibration pipeline.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "manifold_calib/error.hpp"
#include "pipeline.hpp"

namespace {

using manifold_calib::Error;
using manifold_calib::ErrorCode;
namespace cli = manifold_calib::cli;

int report_error(std::string_view code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << std::endl;
  return 1;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("manifold_calib");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MANIFOLD_CALIB_LOG")) {
    const std::string level = env;
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "warn") spdlog::set_level(spdlog::level::warn);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring MANIFOLD_CALIB_LOG='{}' (expected error, warn, info or debug)", level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Kinematic calibration from peg-in-hole contact joint readings"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned threads = 0;
  app.add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Global seed (overrides the config)");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Artifact directory (default: current directory)");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for parallel stages")
                          ->check(CLI::PositiveNumber);

  const std::pair<const char*, const char*> commands[] = {
      {"generate-manifold", "Sample contact poses into the manifold CSV"},
      {"build-dataset", "Perturb manifold poses and label them with nearest neighbours"},
      {"train", "Train the projection network (model JSON + loss curve CSV)"},
      {"simulate", "Simulate biased joint readings at contact (observations JSONL)"},
      {"calibrate", "Estimate strain and encoder biases (result JSON)"},
      {"evaluate", "Compare the estimate with the configured truth (report JSON + table)"},
      {"gradcheck", "Check analytic gradients against finite differences"},
      {"all", "Run every stage from manifold generation to evaluation"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", e.what());
  }

  try {
    cli::Overrides overrides;
    if (*seed_opt) overrides.seed = seed;
    if (*out_opt) overrides.out_dir = out_dir;
    if (*threads_opt) overrides.threads = threads;
    const cli::PipelineConfig config = cli::load_config(config_path, overrides);
    const std::string command = app.get_subcommands().front()->get_name();
    spdlog::debug("{}: config hash {} seed {}", command, config.meta().config_hash, config.seed);

    if (command == "generate-manifold") cli::cmd_generate_manifold(config);
    else if (command == "build-dataset") cli::cmd_build_dataset(config);
    else if (command == "train") cli::cmd_train(config);
    else if (command == "simulate") cli::cmd_simulate(config);
    else if (command == "calibrate") cli::cmd_calibrate(config);
    else if (command == "evaluate") std::cout << cli::cmd_evaluate(config);
    else if (command == "gradcheck") {
      if (!cli::cmd_gradcheck(config)) return report_error("GradientCheckFailed", "at least one gradient suite failed");
    } else {
      cli::cmd_all(config);
      std::cout << cli::cmd_evaluate(config);
    }
  } catch (const Error& e) {
    return report_error(manifold_calib::to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what());
  }
  return 0;
}
