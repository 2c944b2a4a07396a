#pragma once

// Fixed-width feature encoders for text, goal, position and local scene.
//
// The text encoder is a deterministic hashed bag of words (no pretrained
// language model); the scene encoder pools the 32^3 local grid into 4^3
// patches and maps the 512 patch occupancies through a learned 2-layer MLP.

#include "dhsi/nn/layers.hpp"
#include "dhsi/voxel_scene.hpp"

#include <array>
#include <span>
#include <string>
#include <string_view>

namespace dhsi {

inline constexpr int kTextDim = 64;
inline constexpr int kFeatureDim = 32;
inline constexpr int kPatchCount = 512;

struct TextEmbedding {
  VecX vector;  // unit norm, kTextDim entries
  std::string verb;
};

struct SceneFeature {
  VecX vector;
};
struct PositionFeature {
  VecX vector;
};
struct GoalFeature {
  VecX vector;
};
struct SceneDelta {
  VecX vector;
};

// The 40 verbs recognized as memory keys, in lexicon order.
std::span<const std::string_view> verb_lexicon() noexcept;

// Lower-cased alphanumeric tokens of a prompt.
std::vector<std::string> tokenize(std::string_view prompt);

// First lexicon verb found in the prompt (inflections such as "walks",
// "sitting" or "lying" map to their base form), else the first word.
std::string extract_verb(std::string_view prompt);

TextEmbedding embed_text(std::string_view prompt);

// Cosine similarity clamped to [-1, 1]; 0 if either vector is zero.
double cosine_sim(const VecX& a, const VecX& b);

SceneDelta scene_feature_delta(const SceneFeature& curr, const SceneFeature& prev);

// Occupied fraction of each 4x4x4 patch, as a 1 x 512 row ordered (pi, pj, pk) row-major.
nn::Mat patch_pool(const LocalGrid& local);

struct SceneEncoder {
  nn::Mlp mlp;  // 512 -> hidden -> kFeatureDim

  static SceneEncoder create(nn::ParamSet& ps, const std::string& name, Rng& rng, int hidden = 64);
  nn::Var forward(nn::Tape& t, nn::Var pooled) const;  // rows of patch_pool outputs
  SceneFeature encode(const LocalGrid& local) const;
  SceneFeature encode_pooled(const nn::Mat& pooled) const;
};

// Lifts a 3-vector to kFeatureDim, adds a sinusoidal step embedding, then applies
// GELU and a learned map.
struct PositionEncoder {
  nn::Linear lift;
  nn::Linear map;

  static PositionEncoder create(nn::ParamSet& ps, const std::string& name, Rng& rng);
  nn::Var forward(nn::Tape& t, nn::Var positions, const nn::Mat& step_embeddings) const;
  PositionFeature encode(const Vec3& pos, int step_index) const;
};

struct GoalEncoder {
  nn::Mlp mlp;  // 3 -> kFeatureDim -> kFeatureDim

  static GoalEncoder create(nn::ParamSet& ps, const std::string& name, Rng& rng);
  nn::Var forward(nn::Tape& t, nn::Var goals) const;
  GoalFeature encode(const Vec3& goal) const;
};

// Step embeddings for rows [first, first + count) stacked as a count x kFeatureDim matrix.
nn::Mat step_embeddings(int first, int count);

nn::Mat row_of(const VecX& v);
nn::Mat row_of(const Vec3& v);

}  // namespace dhsi
