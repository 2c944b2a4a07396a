#include "dhsi/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace dhsi {

namespace {

constexpr std::array<std::string_view, 40> kVerbs = {
    "walk", "run",   "jog",    "sit",   "stand", "lie",  "reach", "drink", "eat",   "pick",
    "place", "put",  "grab",   "hold",  "open",  "close", "push", "pull",  "carry", "throw",
    "kick", "jump",  "turn",   "bend",  "kneel", "squat", "crouch", "climb", "step", "wave",
    "point", "look", "lean",   "lift",  "drop",  "touch", "wipe",  "type",  "read",  "sleep"};

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// Surface form -> base verb, covering regular English inflections.
const std::map<std::string, std::string>& inflections() {
  static const std::map<std::string, std::string> table = [] {
    std::map<std::string, std::string> m;
    for (auto v : kVerbs) {
      const std::string base(v);
      auto put = [&](const std::string& form) { m.emplace(form, base); };
      put(base);
      put(base + "s");
      put(base + "es");
      put(base + "ing");
      put(base + "ed");
      if (base.back() == 'e') {
        put(base.substr(0, base.size() - 1) + "ing");
        put(base + "d");
      }
      if (base.ends_with("ie")) put(base.substr(0, base.size() - 2) + "ying");
      // consonant-vowel-consonant endings double the consonant: sitting, dropped
      const auto n = base.size();
      if (n >= 3 && !is_vowel(base[n - 1]) && is_vowel(base[n - 2]) && !is_vowel(base[n - 3]) &&
          base[n - 1] != 'w' && base[n - 1] != 'y') {
        put(base + base.back() + "ing");
        put(base + base.back() + "ed");
      }
    }
    m.emplace("ran", "run");
    m.emplace("sat", "sit");
    m.emplace("stood", "stand");
    m.emplace("held", "hold");
    m.emplace("drank", "drink");
    m.emplace("ate", "eat");
    m.emplace("threw", "throw");
    return m;
  }();
  return table;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::span<const std::string_view> verb_lexicon() noexcept { return kVerbs; }

std::vector<std::string> tokenize(std::string_view prompt) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : prompt) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string extract_verb(std::string_view prompt) {
  const auto tokens = tokenize(prompt);
  const auto& table = inflections();
  for (const auto& tok : tokens)
    if (auto it = table.find(tok); it != table.end()) return it->second;
  return tokens.empty() ? std::string() : tokens.front();
}

TextEmbedding embed_text(std::string_view prompt) {
  const bool blank = std::all_of(prompt.begin(), prompt.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  require(!blank, ErrorKind::Input, "prompt must be non-empty");
  auto tokens = tokenize(prompt);
  if (tokens.empty()) {
    std::string lowered(prompt);
    for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    tokens.push_back(lowered);
  }
  TextEmbedding e;
  e.vector = VecX::Zero(kTextDim);
  const auto& table = inflections();
  for (const auto& tok : tokens) {
    // Inflected verbs hash as their base form so "walks" and "walk" agree.
    auto it = table.find(tok);
    const std::string& key = it != table.end() ? it->second : tok;
    const auto h = fnv1a(key);
    e.vector[static_cast<Eigen::Index>(h % kTextDim)] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = e.vector.norm();
  if (norm == 0.0) {
    // Perfect sign cancellation; fall back to the hash of the whole prompt.
    const auto h = fnv1a(prompt);
    e.vector[static_cast<Eigen::Index>(h % kTextDim)] = 1.0;
    norm = 1.0;
  }
  e.vector /= norm;
  e.verb = extract_verb(prompt);
  return e;
}

double cosine_sim(const VecX& a, const VecX& b) {
  require(a.size() == b.size(), ErrorKind::Input, "cosine_sim length mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

SceneDelta scene_feature_delta(const SceneFeature& curr, const SceneFeature& prev) {
  require(curr.vector.size() == prev.vector.size(), ErrorKind::Input, "scene feature dimension mismatch");
  return {curr.vector - prev.vector};
}

nn::Mat patch_pool(const LocalGrid& local) {
  constexpr int kPatch = 4;
  constexpr int kPer = LocalGrid::kCells / kPatch;
  nn::Mat pooled = nn::Mat::Zero(1, kPatchCount);
  for (int i = 0; i < LocalGrid::kCells; ++i)
    for (int k = 0; k < LocalGrid::kCells; ++k)
      for (int j = 0; j < LocalGrid::kCells; ++j)
        if (local.at(i, j, k)) pooled(0, ((i / kPatch) * kPer + j / kPatch) * kPer + k / kPatch) += 1.0;
  pooled /= static_cast<double>(kPatch * kPatch * kPatch);
  return pooled;
}

nn::Mat row_of(const VecX& v) { return v.transpose(); }
nn::Mat row_of(const Vec3& v) { return v.transpose(); }

SceneEncoder SceneEncoder::create(nn::ParamSet& ps, const std::string& name, Rng& rng, int hidden) {
  return {nn::Mlp::create(ps, name, kPatchCount, hidden, kFeatureDim, rng)};
}

nn::Var SceneEncoder::forward(nn::Tape& t, nn::Var pooled) const { return mlp(t, pooled); }

SceneFeature SceneEncoder::encode_pooled(const nn::Mat& pooled) const {
  nn::Tape t;
  return {forward(t, t.constant(pooled)).value().row(0).transpose()};
}

SceneFeature SceneEncoder::encode(const LocalGrid& local) const { return encode_pooled(patch_pool(local)); }

nn::Mat step_embeddings(int first, int count) {
  require(first >= 0 && count >= 0, ErrorKind::Input, "step index must be non-negative");
  nn::Mat m(count, kFeatureDim);
  for (int i = 0; i < count; ++i) m.row(i) = nn::sinusoidal_embedding(first + i, kFeatureDim).row(0);
  return m;
}

PositionEncoder PositionEncoder::create(nn::ParamSet& ps, const std::string& name, Rng& rng) {
  return {nn::Linear::create(ps, name + ".lift", 3, kFeatureDim, rng),
          nn::Linear::create(ps, name + ".map", kFeatureDim, kFeatureDim, rng)};
}

nn::Var PositionEncoder::forward(nn::Tape& t, nn::Var positions, const nn::Mat& steps) const {
  const nn::Var lifted = add(lift(t, positions), t.constant(steps));
  return map(t, gelu(lifted));
}

PositionFeature PositionEncoder::encode(const Vec3& pos, int step_index) const {
  nn::Tape t;
  return {forward(t, t.constant(row_of(pos)), step_embeddings(step_index, 1)).value().row(0).transpose()};
}

GoalEncoder GoalEncoder::create(nn::ParamSet& ps, const std::string& name, Rng& rng) {
  return {nn::Mlp::create(ps, name, 3, kFeatureDim, kFeatureDim, rng)};
}

nn::Var GoalEncoder::forward(nn::Tape& t, nn::Var goals) const { return mlp(t, goals); }

GoalFeature GoalEncoder::encode(const Vec3& goal) const {
  nn::Tape t;
  return {forward(t, t.constant(row_of(goal))).value().row(0).transpose()};
}

}  // namespace dhsi
