#pragma once

// Verb-keyed store of noisy motion primes. Entries are admitted only when the
// training loss that produced them is below a threshold; full buckets keep the
// members most similar to the rest of the bucket. Retrieval narrows a bucket
// by text similarity, then picks the best scene match, and falls back to
// seeded Gaussian noise for unseen verbs.

#include "dhsi/encoders.hpp"
#include "dhsi/motion.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dhsi {

struct MemoryWeights {
  double scene = 0.1;
  double joints = 0.4;
  double text = 0.5;
  void validate() const;
};

struct MemoryConfig {
  int capacity = 20;              // k_mem per verb
  double loss_threshold = 1e-3;   // tau_l
  MemoryWeights weights{};
  int shortlist = 10;             // text-stage width m
  bool single_stage = false;      // blend text and scene into one score instead
  double blend_text = 0.3;
  double blend_scene = 0.7;
  void validate() const;
};

struct MemoryEntry {
  MotionSegment noisy_motion;   // X_T, canonical segment frame
  MotionSegment clean_motion;   // X_0 it was noised from; compared by Sim_joints
  LocalGrid scene_context;
  SceneFeature scene_feature;   // cached encoding of scene_context
  TextEmbedding text;
  std::string prompt;
  double admission_similarity = 0.0;
  double loss = 0.0;
};

double combined_similarity(const MemoryEntry& candidate, const MemoryEntry& reference, const MemoryWeights& w);

struct StoreDecision {
  enum class Kind { RejectedByLoss, Inserted, Replaced, RejectedBySimilarity };
  Kind kind = Kind::RejectedByLoss;
  std::size_t index = 0;  // slot written for Inserted / Replaced
  bool operator==(const StoreDecision&) const = default;
};
std::string to_string(StoreDecision::Kind k);

struct Retrieval {
  enum class Source { Memory, Gaussian };
  MotionSegment prime;
  Source source = Source::Gaussian;
  std::string verb;
  std::size_t index = 0;  // bucket slot when source is Memory
};

class MemoryStore {
 public:
  using Bucket = std::vector<MemoryEntry>;

  explicit MemoryStore(MemoryConfig cfg = {});
  // Rebuild a store from saved buckets without re-running admission.
  static MemoryStore restore(MemoryConfig cfg, std::map<std::string, Bucket> buckets);

  const MemoryConfig& config() const noexcept { return cfg_; }
  const std::map<std::string, Bucket>& buckets() const noexcept { return buckets_; }
  std::size_t size() const noexcept;

  StoreDecision consider_store(MemoryEntry entry, double training_loss);

  Retrieval retrieve(const std::string& prompt, const SceneFeature& scene, std::uint64_t seed,
                     int frames = kMotionFrames, int joints = kJoints) const;

  // Re-encode every cached scene feature, e.g. after the scene encoder changed.
  void refresh_scene_features(const std::function<SceneFeature(const LocalGrid&)>& encode);

  bool operator==(const MemoryStore& o) const;

 private:
  MemoryConfig cfg_;
  std::map<std::string, Bucket> buckets_;
};

MotionSegment gaussian_prime(std::uint64_t seed, int frames = kMotionFrames, int joints = kJoints);

void save_memory(const MemoryStore& store, const std::filesystem::path& path);
MemoryStore load_memory(const std::filesystem::path& path);
void write_memory(std::ostream& out, const MemoryStore& store);
MemoryStore read_memory(std::istream& in);

}  // namespace dhsi
