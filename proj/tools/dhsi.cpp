// dhsi: dataset, scenario, training, generation and benchmark commands.

#include "dhsi/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace dhsi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct ModelPaths {
  std::string checkpoint;
  std::string memory;
};

struct Ablations {
  bool no_navigation = false;
  bool no_memory = false;
  bool no_adapter = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed (overrides the config)");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

void add_model_paths(CLI::App* cmd, ModelPaths& m) {
  cmd->add_option("--checkpoint", m.checkpoint, "model checkpoint (.ckpt)");
  cmd->add_option("--memory", m.memory, "experience memory file");
}

void add_ablations(CLI::App* cmd, Ablations& a) {
  cmd->add_flag("--no-navigation", a.no_navigation, "straight lines between keypoints instead of the navigator");
  cmd->add_flag("--no-memory", a.no_memory, "always start from Gaussian noise");
  cmd->add_flag("--no-adapter", a.no_adapter, "fixed uniform condition weights");
}

RunConfig load_config(const Common& c) { return c.config.empty() ? run_config_from_json(json::object()) : load_run_config(c.config); }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Models load_models(const RunConfig& cfg, const ModelPaths& paths) {
  const fs::path ckpt = paths.checkpoint.empty() ? cfg.checkpoint : fs::path(paths.checkpoint);
  const fs::path mem = paths.memory.empty() ? cfg.memory : fs::path(paths.memory);
  require(!ckpt.empty(), ErrorKind::Input, "no checkpoint given (--checkpoint or config \"checkpoint\")");
  Models m = load_checkpoint(ckpt, cfg.memory_config);
  cfg.check_against(m);
  if (!mem.empty()) m.memory = load_memory(mem);
  return m;
}

GenerateOptions options(const RunConfig& cfg, const Common& c, const Ablations& a) {
  GenerateOptions o;
  o.seed = c.seed.value_or(cfg.seed);
  o.inflation_radius = cfg.inflation_radius;
  o.segments = cfg.segments;
  o.no_navigation = a.no_navigation;
  o.no_memory = a.no_memory;
  o.no_adapter = a.no_adapter;
  return o;
}

int gen_data(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.dataset.seed = *c.seed;
  const ToyDataset ds = generate_toy_dataset(cfg.dataset);
  const fs::path manifest = write_dataset(ds, c.out);
  std::cout << ds.clips.size() << " clips in " << ds.scenes.size() << " scenes -> " << manifest.string() << '\n';
  return 0;
}

int make_scenarios(const Common& c, const std::string& data, int count) {
  const RunConfig cfg = load_config(c);
  const ToyDataset ds = read_dataset(data);
  std::vector<std::string> warnings;
  const auto scenarios = make_dyn_scenarios(ds, count, c.seed.value_or(cfg.seed), &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  write_scenarios(scenarios, c.out);
  std::cout << scenarios.size() << " scenarios -> " << c.out << '\n';
  return 0;
}

int train_cmd(const Common& c, const std::string& data) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  const ToyDataset ds = data.empty() ? generate_toy_dataset(cfg.dataset) : read_dataset(data);
  Models models(cfg.navigator, cfg.denoiser, cfg.memory_config, cfg.train.seed);
  models.schedule = schedule_new(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
  json log = json::array();
  const auto report = train(models, ds, cfg.train, [&](int epoch, const LossTerms& l) {
    std::cout << "epoch " << epoch << "  motion " << l.motion << "  traj " << l.traj << "  conf " << l.conf
              << "  total " << l.total << std::endl;
    log.push_back({{"epoch", epoch}, {"motion", l.motion}, {"traj", l.traj}, {"conf", l.conf}, {"total", l.total}});
  });
  const fs::path out(c.out);
  fs::create_directories(out);
  save_checkpoint(models, out / "model.ckpt");
  save_memory(models.memory, out / "memory.bin");
  write_json(out / "train_log.json", {{"samples", report.samples}, {"stored", report.stored}, {"epochs", log}});
  std::cout << report.samples << " windows, " << models.memory.size() << " memory entries -> " << out.string() << '\n';
  return 0;
}

fs::path scenario_file(const fs::path& p) { return fs::is_directory(p) ? p / "scenario.json" : p; }

int run_cmd(const Common& c, const ModelPaths& paths, const Ablations& a, const std::string& scenario) {
  const RunConfig cfg = load_config(c);
  const Models models = load_models(cfg, paths);
  const Scenario sc = read_scenario(scenario_file(scenario));
  const auto r = run_scenario(models, sc, options(cfg, c, a), cfg.tau);
  const fs::path out(c.out);
  save_motion(out / "motion.jsonl", r.sequence.motion);
  write_json(out / "report.json", to_json(r.report));
  write_json(out / "diagnostics.json", r.diagnostics);
  std::cout << to_json(r.report).dump(2) << '\n';
  return 0;
}

int bench_cmd(const Common& c, const ModelPaths& paths, const std::string& scenarios, const std::string& data) {
  const RunConfig cfg = load_config(c);
  const Models models = load_models(cfg, paths);
  const auto scs = read_scenarios(scenarios);
  std::vector<MotionSegment> reference;
  if (!data.empty())
    for (const auto& clip : read_dataset(data).clips) reference.push_back(clip.motion);
  const auto result = run_benchmark(models, scs, standard_variants(options(cfg, c, {})), cfg.tau,
                                    reference.empty() ? nullptr : &reference);
  const fs::path out(c.out);
  write_json(out / "bench.json", to_json(result));
  const std::string table = format_table(result);
  std::ofstream(out / "bench.txt") << table;
  std::cout << scs.size() << " scenarios\n" << table;
  return 0;
}

int memory_inspect(const std::string& path) {
  const MemoryStore store = load_memory(path);
  json buckets = json::object();
  for (const auto& [verb, bucket] : store.buckets()) {
    json entries = json::array();
    for (const auto& e : bucket)
      entries.push_back({{"prompt", e.prompt}, {"loss", e.loss}, {"admission_similarity", e.admission_similarity}});
    buckets[verb] = {{"size", bucket.size()}, {"entries", entries}};
  }
  const auto& cfg = store.config();
  std::cout << json{{"entries", store.size()},
                    {"capacity", cfg.capacity},
                    {"loss_threshold", cfg.loss_threshold},
                    {"buckets", buckets}}
                   .dump(2)
            << '\n';
  return 0;
}

int grid_convert(const fs::path& in, const fs::path& out) {
  const auto ext_in = in.extension(), ext_out = out.extension();
  if (ext_in == ".json" && ext_out == ".grid") {
    const BoxScene scene = load_box_scene(in);
    save_grid(out, build_from_boxes(scene.boxes, scene.spec));
  } else if (ext_in == ".grid" && ext_out == ".json") {
    std::ofstream f(out);
    require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + out.string());
    f << box_scene_to_json(grid_to_box_scene(load_grid(in)));
  } else {
    fail(ErrorKind::Input, "grid convert goes between .json and .grid");
  }
  std::cout << in.string() << " -> " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic scene-aware human-scene interaction synthesis"};
  app.require_subcommand(1);

  Common common;
  ModelPaths paths;
  Ablations ablations;
  std::string data, scenario, scenarios, mem_path, grid_in, grid_out;
  int count = 70;

  auto* gen = app.add_subcommand("gen-data", "generate the procedural toy dataset");
  add_common(gen, common, true);

  auto* mk = app.add_subcommand("make-scenarios", "dynamic scenarios over a dataset's scenes");
  add_common(mk, common, true);
  mk->add_option("--data", data, "dataset directory")->required();
  mk->add_option("-n,--count", count, "number of scenarios")->check(CLI::PositiveNumber);

  auto* tr = app.add_subcommand("train", "train the navigator and denoiser, filling the experience memory");
  add_common(tr, common, true);
  tr->add_option("--data", data, "dataset directory (generated from the config when absent)");

  auto* run = app.add_subcommand("run", "generate motion for one scenario");
  add_common(run, common, true);
  add_model_paths(run, paths);
  add_ablations(run, ablations);
  run->add_option("--scenario", scenario, "scenario directory or scenario.json")->required();

  auto* bench = app.add_subcommand("bench", "all four variants over a scenario directory");
  add_common(bench, common, true);
  add_model_paths(bench, paths);
  bench->add_option("--scenarios", scenarios, "scenario directory")->required();
  bench->add_option("--data", data, "dataset directory, enables the Frechet proxy");

  auto* mem = app.add_subcommand("memory", "experience memory tools");
  mem->require_subcommand(1);
  auto* inspect = mem->add_subcommand("inspect", "summarize a memory file");
  inspect->add_option("path", mem_path, "memory file")->required();

  auto* grid = app.add_subcommand("grid", "voxel grid tools");
  grid->require_subcommand(1);
  auto* convert = grid->add_subcommand("convert", "box JSON <-> .grid");
  convert->add_option("input", grid_in)->required();
  convert->add_option("output", grid_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_data(common);
    if (*mk) return make_scenarios(common, data, count);
    if (*tr) return train_cmd(common, data);
    if (*run) return run_cmd(common, paths, ablations, scenario);
    if (*bench) return bench_cmd(common, paths, scenarios, data);
    if (*inspect) return memory_inspect(mem_path);
    if (*convert) return grid_convert(grid_in, grid_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
