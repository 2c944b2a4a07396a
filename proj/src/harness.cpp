#include "dhsi/harness.hpp"

#include "dhsi/skeleton.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace dhsi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 3, ErrorKind::Input, what + " must be a 3-element array");
  for (const auto& x : j) require(x.is_number(), ErrorKind::Input, what + " must be numeric");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    require(!ec, ErrorKind::Io, "cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Input, what + ": " + e.what());
  }
}

void save_scene(const fs::path& stem, const BoxScene& scene) {
  write_text(fs::path(stem).replace_extension(".json"), box_scene_to_json(scene));
  save_grid(fs::path(stem).replace_extension(".grid"), build_from_boxes(scene.boxes, scene.spec));
}

}  // namespace

std::string motion_to_jsonl(const MotionSegment& m) {
  std::string out;
  for (int f = 0; f < m.frames(); ++f) {
    nlohmann::ordered_json line;
    line["t"] = f;
    auto& joints = line["joints"] = nlohmann::ordered_json::array();
    for (int j = 0; j < m.joints(); ++j) {
      const Vec3 p = m.joint(f, j);
      joints.push_back({p.x(), p.y(), p.z()});
    }
    out += line.dump();
    out += '\n';
  }
  return out;
}

MotionSegment motion_from_jsonl(const std::string& text) {
  std::vector<std::vector<Vec3>> frames;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = parse_json(line, "motion line " + std::to_string(frames.size()));
    try {
      require(j.at("t").get<std::size_t>() == frames.size(), ErrorKind::Input, "motion frames must be numbered 0, 1, ...");
      std::vector<Vec3> joints;
      for (const auto& p : j.at("joints")) joints.push_back(vec_from(p, "joint"));
      require(!joints.empty() && (frames.empty() || joints.size() == frames[0].size()), ErrorKind::Input,
              "every motion frame needs the same joint count");
      frames.push_back(std::move(joints));
    } catch (const json::exception& e) {
      fail(ErrorKind::Input, std::string("motion line: ") + e.what());
    }
  }
  require(!frames.empty(), ErrorKind::Input, "motion file has no frames");
  MotionSegment m(static_cast<int>(frames.size()), static_cast<int>(frames[0].size()));
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t j = 0; j < frames[f].size(); ++j) m.set_joint(static_cast<int>(f), static_cast<int>(j), frames[f][j]);
  return m;
}

void save_motion(const fs::path& path, const MotionSegment& m) { write_text(path, motion_to_jsonl(m)); }
MotionSegment load_motion(const fs::path& path) { return motion_from_jsonl(read_text(path)); }

BoxScene grid_to_box_scene(const OccupancyGrid& grid) {
  BoxScene scene;
  scene.spec = grid.spec();
  const auto& s = scene.spec;
  const auto cell = [&](std::uint32_t i, std::uint32_t j, std::uint32_t k) {
    return Vec3(s.origin + s.voxel_size * Vec3(double(i), double(j), double(k)));
  };
  for (std::uint32_t k = 0; k < s.dims[2]; ++k)
    for (std::uint32_t j = 0; j < s.dims[1]; ++j)
      for (std::uint32_t i = 0; i < s.dims[0];) {
        if (!grid.occupied({i, j, k})) {
          ++i;
          continue;
        }
        std::uint32_t e = i;
        while (e < s.dims[0] && grid.occupied({e, j, k})) ++e;
        scene.boxes.push_back({cell(i, j, k), cell(e, j + 1, k + 1), "voxels"});
        i = e;
      }
  return scene;
}

json to_json(const ToyDatasetSpec& s) {
  return {{"num_scenes", s.num_scenes},
          {"boxes_per_scene", {s.boxes_min, s.boxes_max}},
          {"actions", s.actions},
          {"clips_per_scene", s.clips_per_scene},
          {"dynamic_fraction", s.dynamic_fraction},
          {"speed", {s.speed_min, s.speed_max}},
          {"seed", s.seed}};
}

ToyDatasetSpec dataset_spec_from_json(const json& j) {
  ToyDatasetSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_scenes") s.num_scenes = value.get<int>();
      else if (key == "boxes_per_scene") s.boxes_min = value.at(0).get<int>(), s.boxes_max = value.at(1).get<int>();
      else if (key == "actions") s.actions = value.get<std::vector<std::string>>();
      else if (key == "clips_per_scene") s.clips_per_scene = value.get<int>();
      else if (key == "dynamic_fraction") s.dynamic_fraction = value.get<double>();
      else if (key == "speed") s.speed_min = value.at(0).get<double>(), s.speed_max = value.at(1).get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else fail(ErrorKind::Config, "unknown dataset key " + key);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("dataset spec: ") + e.what());
  }
  s.validate();
  return s;
}

fs::path write_dataset(const ToyDataset& ds, const fs::path& dir) {
  json manifest{{"spec", to_json(ds.spec)}, {"scenes", json::array()}, {"clips", json::array()}};
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu", i);
    save_scene(dir / "scenes" / name, ds.scenes[i]);
    manifest["scenes"].push_back(std::string("scenes/") + name + ".json");
  }
  for (const auto& c : ds.clips) {
    json states = json::array();
    for (std::size_t i = 0; i < c.scene_states.frames.size(); ++i) {
      std::string scene = "scenes/scene_";
      if (i == 0) {
        char name[16];
        std::snprintf(name, sizeof name, "%03d", c.scene);
        scene += name;
      } else {
        scene = "scenes/" + c.id + "_change" + std::to_string(i);
        save_scene(dir / scene, c.scene_states.layouts[i]);
      }
      states.push_back({{"frame", c.scene_states.frames[i]}, {"scene", scene + ".json"}});
    }
    const std::string motion = "motions/" + c.id + ".jsonl";
    save_motion(dir / motion, c.motion);
    manifest["clips"].push_back({{"id", c.id},
                                 {"action", c.action},
                                 {"prompt", c.prompt},
                                 {"scene", c.scene},
                                 {"states", states},
                                 {"start", vec_json(c.start)},
                                 {"goal", vec_json(c.goal)},
                                 {"speed", c.speed},
                                 {"motion", motion}});
  }
  const fs::path path = dir / "manifest.json";
  write_text(path, manifest.dump(2) + "\n");
  return path;
}

ToyDataset read_dataset(const fs::path& dir) {
  const json m = parse_json(read_text(dir / "manifest.json"), "dataset manifest");
  ToyDataset ds;
  try {
    ds.spec = dataset_spec_from_json(m.at("spec"));
    for (const auto& s : m.at("scenes")) ds.scenes.push_back(load_box_scene(dir / s.get<std::string>()));
    for (const auto& c : m.at("clips")) {
      ToyClip clip;
      clip.id = c.at("id").get<std::string>();
      clip.action = c.at("action").get<std::string>();
      clip.prompt = c.at("prompt").get<std::string>();
      clip.scene = c.at("scene").get<int>();
      for (const auto& st : c.at("states")) {
        clip.scene_states.frames.push_back(st.at("frame").get<int>());
        clip.scene_states.layouts.push_back(load_box_scene(dir / st.at("scene").get<std::string>()));
      }
      clip.start = vec_from(c.at("start"), "start");
      clip.goal = vec_from(c.at("goal"), "goal");
      clip.speed = c.at("speed").get<double>();
      clip.motion = load_motion(dir / c.at("motion").get<std::string>());
      require(clip.motion.joints() == kJoints, ErrorKind::Input, "clip " + clip.id + " is not a 22-joint motion");
      ds.clips.push_back(std::move(clip));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Input, std::string("dataset manifest: ") + e.what());
  }
  return ds;
}

void validate(const Scenario& sc) {
  const auto& st = sc.scene_states;
  require(!st.layouts.empty() && st.frames.size() == st.layouts.size() && st.frames.front() == 0, ErrorKind::Input,
          "scenario " + sc.id + " needs a begin scene");
  for (std::size_t i = 1; i < st.frames.size(); ++i)
    require(st.frames[i] > st.frames[i - 1], ErrorKind::Input,
            "scenario " + sc.id + ": change frames must be strictly increasing and > 0");
  const auto& spec = st.layouts.front().spec;
  const Vec3 hi = spec.origin + spec.voxel_size * Vec3(spec.dims[0], spec.dims[1], spec.dims[2]);
  for (const Vec3& p : {sc.start, sc.goal})
    require((p.array() >= spec.origin.array()).all() && (p.array() <= hi.array()).all(), ErrorKind::Input,
            "scenario " + sc.id + ": start and goal must lie inside the scene bounds");
  require(!sc.prompt.empty(), ErrorKind::Input, "scenario " + sc.id + " has an empty prompt");
}

void write_scenario(const Scenario& sc, const fs::path& dir) {
  validate(sc);
  save_scene(dir / "scene_begin", sc.scene_states.layouts.front());
  json changes = json::array();
  for (std::size_t i = 1; i < sc.scene_states.frames.size(); ++i) {
    const std::string stem = "scene_change_" + std::to_string(i);
    save_scene(dir / stem, sc.scene_states.layouts[i]);
    changes.push_back({{"frame", sc.scene_states.frames[i]}, {"scene", stem + ".json"}});
  }
  const json j{{"id", sc.id},
               {"prompt", sc.prompt},
               {"start", vec_json(sc.start)},
               {"goal", vec_json(sc.goal)},
               {"scene_begin", "scene_begin.json"},
               {"scene_changes", changes}};
  write_text(dir / "scenario.json", j.dump(2) + "\n");
}

Scenario read_scenario(const fs::path& path) {
  const json j = parse_json(read_text(path), path.string());
  const fs::path dir = path.parent_path();
  Scenario sc;
  try {
    sc.id = j.at("id").get<std::string>();
    sc.prompt = j.at("prompt").get<std::string>();
    sc.start = vec_from(j.at("start"), "start");
    sc.goal = vec_from(j.at("goal"), "goal");
    sc.scene_states.frames.push_back(0);
    sc.scene_states.layouts.push_back(load_box_scene(dir / j.at("scene_begin").get<std::string>()));
    for (const auto& c : j.value("scene_changes", json::array())) {
      sc.scene_states.frames.push_back(c.at("frame").get<int>());
      sc.scene_states.layouts.push_back(load_box_scene(dir / c.at("scene").get<std::string>()));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Input, path.string() + ": " + e.what());
  }
  validate(sc);
  return sc;
}

void write_scenarios(const std::vector<Scenario>& scenarios, const fs::path& dir) {
  for (const auto& sc : scenarios) write_scenario(sc, dir / sc.id);
}

std::vector<Scenario> read_scenarios(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::Input, "no scenario directory " + dir.string());
  std::vector<fs::path> files;
  if (fs::exists(dir / "scenario.json")) files.push_back(dir / "scenario.json");
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "scenario.json")) files.push_back(e.path() / "scenario.json");
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(read_scenario(f));
  require(!out.empty(), ErrorKind::Input, "no scenarios in " + dir.string());
  return out;
}

void RunConfig::validate() const {
  require(schedule_steps >= 2, ErrorKind::Config, "schedule needs at least two steps");
  require(!segments || *segments >= 1, ErrorKind::Config, "segment count must be >= 1");
  require(tau > 0 && inflation_radius >= 0, ErrorKind::Config, "tau must be positive, inflation radius non-negative");
  schedule_new(schedule_steps, beta_start, beta_end);
  memory_config.validate();
  train.validate();
  dataset.validate();
}

void RunConfig::check_against(const Models& models) const {
  const auto& s = models.schedule;
  require(s.T == schedule_steps && s.beta(1) == beta_start && s.beta(s.T) == beta_end, ErrorKind::Config,
          "run config schedule does not match the checkpoint");
}

namespace {

nn::TransformerConfig transformer_from(const json& j, nn::TransformerConfig c) {
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  return c;
}

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) require(allowed.contains(k), ErrorKind::Config, "unknown key " + where + "." + k);
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j,
               {"checkpoint", "memory", "schedule", "segments", "tau", "inflation_radius", "seed", "memory_config", "train",
                "dataset", "navigator", "denoiser"},
               "config");
    c.checkpoint = j.value("checkpoint", std::string());
    c.memory = j.value("memory", std::string());
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      check_keys(s, {"T", "beta_start", "beta_end"}, "schedule");
      c.schedule_steps = s.value("T", c.schedule_steps);
      c.beta_start = s.value("beta_start", c.beta_start);
      c.beta_end = s.value("beta_end", c.beta_end);
    }
    if (j.contains("segments") && !j.at("segments").is_null()) c.segments = j.at("segments").get<int>();
    c.tau = j.value("tau", c.tau);
    c.inflation_radius = j.value("inflation_radius", c.inflation_radius);
    c.seed = j.value("seed", c.seed);
    if (j.contains("memory_config")) {
      const auto& m = j.at("memory_config");
      check_keys(m, {"capacity", "loss_threshold", "shortlist", "single_stage"}, "memory_config");
      c.memory_config.capacity = m.value("capacity", c.memory_config.capacity);
      c.memory_config.loss_threshold = m.value("loss_threshold", c.memory_config.loss_threshold);
      c.memory_config.shortlist = m.value("shortlist", c.memory_config.shortlist);
      c.memory_config.single_stage = m.value("single_stage", c.memory_config.single_stage);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t, {"epochs", "batch", "lr", "clip_norm", "lambda_t", "lambda_c", "perturb_prob", "perturb_max",
                     "nav_noise_prob", "nav_noise_max", "nav_correction", "prime_prob", "seed"},
                 "train");
      auto& o = c.train;
      o.epochs = t.value("epochs", o.epochs);
      o.batch = t.value("batch", o.batch);
      o.lr = t.value("lr", o.lr);
      o.clip_norm = t.value("clip_norm", o.clip_norm);
      o.lambda_t = t.value("lambda_t", o.lambda_t);
      o.lambda_c = t.value("lambda_c", o.lambda_c);
      o.perturb_prob = t.value("perturb_prob", o.perturb_prob);
      o.perturb_max = t.value("perturb_max", o.perturb_max);
      o.nav_noise_prob = t.value("nav_noise_prob", o.nav_noise_prob);
      o.nav_noise_max = t.value("nav_noise_max", o.nav_noise_max);
      o.nav_correction = t.value("nav_correction", o.nav_correction);
      o.prime_prob = t.value("prime_prob", o.prime_prob);
      o.seed = t.value("seed", o.seed);
    }
    if (j.contains("dataset")) c.dataset = dataset_spec_from_json(j.at("dataset"));
    if (j.contains("navigator")) {
      const auto& n = j.at("navigator");
      check_keys(n, {"decoder", "scene_hidden"}, "navigator");
      if (n.contains("decoder")) c.navigator.decoder = transformer_from(n.at("decoder"), c.navigator.decoder);
      c.navigator.scene_hidden = n.value("scene_hidden", c.navigator.scene_hidden);
    }
    if (j.contains("denoiser")) {
      const auto& d = j.at("denoiser");
      check_keys(d, {"body", "scene_hidden", "adapter_hidden"}, "denoiser");
      if (d.contains("body")) c.denoiser.body = transformer_from(d.at("body"), c.denoiser.body);
      c.denoiser.scene_hidden = d.value("scene_hidden", c.denoiser.scene_hidden);
      c.denoiser.adapter_hidden = d.value("adapter_hidden", c.denoiser.adapter_hidden);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  c.denoiser.steps = c.schedule_steps;
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(parse_json(read_text(path), path.string()));
}

namespace {

Vec3 ground(const Vec3& p) { return {p.x(), 0.0, p.z()}; }

}  // namespace

std::vector<Vec3> reference_track(const Scenario& sc, int frames, double inflation_radius) {
  OracleConfig cfg;
  cfg.inflation_radius = inflation_radius;
  const auto seg = oracle_navigator(sc.scene_states.timeline(), ground(sc.start), ground(sc.goal), frames, cfg);
  std::vector<Vec3> out;
  for (const auto& w : seg.waypoints) out.push_back(ground(w.position));
  out.back() = ground(sc.goal);
  return out;
}

EvalReport evaluate(const Scenario& sc, const MotionSegment& motion, double tau, double inflation_radius) {
  const SceneTimeline tl = sc.scene_states.timeline();
  std::vector<Vec3> track;
  for (const auto& p : pelvis_track(motion)) track.push_back(ground(p));
  const auto ref = reference_track(sc, motion.frames(), inflation_radius);
  EvalReport r;
  r.traj_sim = traj_similarity(track, ref, tau);
  r.traj_err = traj_err(track, ref);
  r.goal_err = goal_err(track, ref);
  const auto pen = penetration(motion, tl);
  r.pene_value = pen.value;
  r.pene_rate = pen.rate;
  r.pene_mean = pen.mean;
  r.pene_max = pen.max;
  r.foot_skating = foot_skating(motion, kFrameRate);
  return r;
}

namespace {

const char* source_name(Retrieval::Source s) { return s == Retrieval::Source::Memory ? "memory" : "gaussian"; }

json diagnostics_json(const Scenario& sc, const GeneratedSequence& g) {
  json segs = json::array();
  for (const auto& d : g.segments) {
    json deltas = json::array();
    for (const auto& st : d.steps)
      if (st.delta_norm > 0 || st.changed_voxels > 0)
        deltas.push_back({{"frame", st.frame}, {"delta_norm", st.delta_norm}, {"changed_voxels", st.changed_voxels}});
    segs.push_back({{"index", d.index},
                    {"frame_offset", d.frame_offset},
                    {"keypoint", vec_json(d.keypoint)},
                    {"weights", d.weights.r},
                    {"prime", source_name(d.prime_source)},
                    {"mean_confidence", d.mean_confidence},
                    {"delta_events", deltas}});
  }
  return {{"scenario", sc.id}, {"change_frames", g.change_frames}, {"segments", segs}};
}

}  // namespace

ScenarioResult run_scenario(const Models& models, const Scenario& sc, const GenerateOptions& opts, double tau) {
  try {
    validate(sc);
    ScenarioResult r;
    r.id = sc.id;
    r.sequence = generate_sequence(models, sc.prompt, sc.scene_states.timeline(), sc.start, sc.goal, opts);
    r.report = evaluate(sc, r.sequence.motion, tau, opts.inflation_radius);
    r.diagnostics = diagnostics_json(sc, r.sequence);
    return r;
  } catch (const Error& e) {
    fail(e.kind(), "scenario " + sc.id + ": " + e.what());
  }
}

std::vector<Variant> standard_variants(const GenerateOptions& base) {
  std::vector<Variant> v(4, Variant{"", base});
  v[0].name = "full";
  v[1].name = "no-navigation";
  v[1].options.no_navigation = true;
  v[2].name = "no-memory";
  v[2].options.no_memory = true;
  v[3].name = "no-adapter";
  v[3].options.no_adapter = true;
  return v;
}

EvalReport mean_report(const std::vector<EvalReport>& reports) {
  require(!reports.empty(), ErrorKind::Input, "cannot average zero reports");
  EvalReport m;
  const double n = static_cast<double>(reports.size());
  auto opt_mean = [&](auto field) -> std::optional<double> {
    double s = 0;
    int c = 0;
    for (const auto& r : reports)
      if (r.*field) s += *(r.*field), ++c;
    return c ? std::optional<double>(s / c) : std::nullopt;
  };
  for (const auto& r : reports) {
    m.traj_sim += r.traj_sim;
    m.traj_err += r.traj_err;
    m.goal_err += r.goal_err;
    m.pene_value += r.pene_value;
    m.pene_rate += r.pene_rate;
    m.pene_mean += r.pene_mean;
    m.pene_max += r.pene_max;
    m.foot_skating += r.foot_skating;
  }
  m.traj_sim /= n;
  m.traj_err /= n;
  m.goal_err /= n;
  m.pene_value /= n;
  m.pene_rate /= n;
  m.pene_mean /= n;
  m.pene_max /= n;
  m.foot_skating /= n;
  m.mpjpe = opt_mean(&EvalReport::mpjpe);
  m.diversity = opt_mean(&EvalReport::diversity);
  m.fid_proxy = opt_mean(&EvalReport::fid_proxy);
  return m;
}

BenchmarkResult aggregate(const std::vector<std::string>& variants,
                          const std::map<std::string, std::map<std::string, EvalReport>>& per_scenario) {
  BenchmarkResult b;
  b.variants = variants;
  b.per_scenario = per_scenario;
  for (const auto& v : variants) {
    const auto it = per_scenario.find(v);
    require(it != per_scenario.end() && !it->second.empty(), ErrorKind::Input, "no reports for variant " + v);
    std::vector<EvalReport> reports;
    for (const auto& [id, r] : it->second) reports.push_back(r);  // std::map iterates in id order
    b.mean[v] = mean_report(reports);
  }
  return b;
}

BenchmarkResult run_benchmark(const Models& models, std::vector<Scenario> scenarios, const std::vector<Variant>& variants,
                              double tau, const std::vector<MotionSegment>* reference_motions) {
  require(!scenarios.empty(), ErrorKind::Input, "benchmark needs at least one scenario");
  require(!variants.empty(), ErrorKind::Input, "benchmark needs at least one variant");
  std::sort(scenarios.begin(), scenarios.end(), [](const Scenario& a, const Scenario& b) { return a.id < b.id; });
  std::map<std::string, std::map<std::string, EvalReport>> per;
  std::map<std::string, std::vector<MotionSegment>> motions;
  std::vector<std::string> names;
  for (const auto& v : variants) {
    names.push_back(v.name);
    for (const auto& sc : scenarios) {
      auto r = run_scenario(models, sc, v.options, tau);
      per[v.name][sc.id] = r.report;
      motions[v.name].push_back(std::move(r.sequence.motion));
    }
  }
  BenchmarkResult b = aggregate(names, per);
  for (const auto& v : names) {
    auto& ms = motions[v];
    if (ms.size() >= 2) {
      // compare equal-length prefixes
      int frames = ms.front().frames();
      for (const auto& m : ms) frames = std::min(frames, m.frames());
      std::vector<MotionSegment> cut;
      for (const auto& m : ms) cut.emplace_back(MatX(m.data.topRows(frames)));
      b.mean[v].diversity = diversity(cut, 100, 0);
    }
    if (reference_motions && !reference_motions->empty()) b.mean[v].fid_proxy = fid_proxy(ms, *reference_motions).value;
  }
  return b;
}

json to_json(const BenchmarkResult& b) {
  json variants = json::object();
  for (const auto& v : b.variants) {
    json scenarios = json::object();
    for (const auto& [id, r] : b.per_scenario.at(v)) scenarios[id] = to_json(r);
    variants[v] = {{"mean", to_json(b.mean.at(v))}, {"scenarios", scenarios}};
  }
  return {{"variants", b.variants}, {"results", variants}};
}

std::string format_table(const BenchmarkResult& b) {
  const std::vector<std::pair<std::string, std::function<std::optional<double>(const EvalReport&)>>> rows{
      {"traj_sim", [](const EvalReport& r) { return std::optional<double>(r.traj_sim); }},
      {"traj_err", [](const EvalReport& r) { return std::optional<double>(r.traj_err); }},
      {"goal_err", [](const EvalReport& r) { return std::optional<double>(r.goal_err); }},
      {"pene_value", [](const EvalReport& r) { return std::optional<double>(r.pene_value); }},
      {"pene_rate", [](const EvalReport& r) { return std::optional<double>(r.pene_rate); }},
      {"pene_mean", [](const EvalReport& r) { return std::optional<double>(r.pene_mean); }},
      {"pene_max", [](const EvalReport& r) { return std::optional<double>(r.pene_max); }},
      {"foot_skating", [](const EvalReport& r) { return std::optional<double>(r.foot_skating); }},
      {"diversity", [](const EvalReport& r) { return r.diversity; }},
      {"fid_proxy", [](const EvalReport& r) { return r.fid_proxy; }},
  };
  std::ostringstream out;
  out << std::left << std::setw(14) << "metric";
  for (const auto& v : b.variants) out << std::right << std::setw(15) << v;
  out << '\n';
  for (const auto& [name, get] : rows) {
    out << std::left << std::setw(14) << name;
    for (const auto& v : b.variants) {
      const auto x = get(b.mean.at(v));
      std::ostringstream cell;
      if (x) cell << std::fixed << std::setprecision(4) << *x;
      else cell << "-";
      out << std::right << std::setw(15) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dhsi
