#pragma once

// Files and orchestration around the pipeline: dataset and scenario
// directories, motion JSON lines, run configuration, single-scenario runs and
// the ablation benchmark.

#include "dhsi/metrics.hpp"
#include "dhsi/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>

namespace dhsi {

// Motion files: one JSON object per line, {"t": i, "joints": [[x, y, z], ...]}.
std::string motion_to_jsonl(const MotionSegment& m);
MotionSegment motion_from_jsonl(const std::string& text);
void save_motion(const std::filesystem::path& path, const MotionSegment& m);
MotionSegment load_motion(const std::filesystem::path& path);

// Box JSON for a voxel grid: occupied runs along X merged into boxes.
BoxScene grid_to_box_scene(const OccupancyGrid& grid);

nlohmann::json to_json(const ToyDatasetSpec& spec);
ToyDatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Dataset directory: manifest.json, scenes/*.json + *.grid, motions/*.jsonl.
std::filesystem::path write_dataset(const ToyDataset& ds, const std::filesystem::path& dir);
ToyDataset read_dataset(const std::filesystem::path& dir);

// Scenario directory: one sub-directory per scenario holding scenario.json and
// the begin/change scenes as box JSON and .grid.
void validate(const Scenario& sc);
void write_scenario(const Scenario& sc, const std::filesystem::path& dir);
Scenario read_scenario(const std::filesystem::path& scenario_json);
void write_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& dir);
std::vector<Scenario> read_scenarios(const std::filesystem::path& dir);

struct RunConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path memory;
  int schedule_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::optional<int> segments;  // fixed T_N; route length decides when absent
  double tau = kTrajTau;
  double inflation_radius = kDefaultInflationRadius;
  std::uint64_t seed = 0;
  MemoryConfig memory_config;
  TrainConfig train;
  ToyDatasetSpec dataset;
  NavigatorConfig navigator;
  DenoiserConfig denoiser;

  void validate() const;
  // The schedule must match the checkpoint's config block.
  void check_against(const Models& models) const;
};

// Keys missing from the JSON keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Reference pelvis track for a scenario without ground-truth motion: the
// replanning oracle over the same frames, ending exactly at the goal.
std::vector<Vec3> reference_track(const Scenario& sc, int frames, double inflation_radius);

struct ScenarioResult {
  std::string id;
  GeneratedSequence sequence;
  EvalReport report;
  nlohmann::json diagnostics;
};

// Trajectory and goal errors compare ground projections (X-Z), since the
// scenario's start and goal are floor points and the pelvis is not.
EvalReport evaluate(const Scenario& sc, const MotionSegment& motion, double tau, double inflation_radius);

ScenarioResult run_scenario(const Models& models, const Scenario& sc, const GenerateOptions& opts, double tau = kTrajTau);

struct Variant {
  std::string name;
  GenerateOptions options;
};
// full, no-navigation, no-memory, no-adapter
std::vector<Variant> standard_variants(const GenerateOptions& base);

struct BenchmarkResult {
  std::vector<std::string> variants;                        // column order
  std::map<std::string, EvalReport> mean;                   // per variant
  std::map<std::string, std::map<std::string, EvalReport>> per_scenario;  // variant -> id -> report
};

// Mean of each metric over reports; optional metrics average over those present.
EvalReport mean_report(const std::vector<EvalReport>& reports);

// Scenarios are processed in id order, so the result does not depend on input order.
BenchmarkResult run_benchmark(const Models& models, std::vector<Scenario> scenarios, const std::vector<Variant>& variants,
                              double tau = kTrajTau,
                              const std::vector<MotionSegment>* reference_motions = nullptr);
// Aggregation only, from precomputed per-scenario reports.
BenchmarkResult aggregate(const std::vector<std::string>& variants,
                          const std::map<std::string, std::map<std::string, EvalReport>>& per_scenario);

nlohmann::json to_json(const BenchmarkResult& b);
std::string format_table(const BenchmarkResult& b);

}  // namespace dhsi
