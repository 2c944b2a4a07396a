#include "dhsi/experience_memory.hpp"

#include "dhsi/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace dhsi {

namespace {

constexpr std::string_view kMagic = "DHSMEM1\n";
constexpr std::uint32_t kVersion = 1;

double flat_cosine(const MotionSegment& a, const MotionSegment& b) {
  require(a.data.rows() == b.data.rows() && a.data.cols() == b.data.cols(), ErrorKind::Input,
          "motion shapes differ in similarity");
  const double na = a.data.norm(), nb = b.data.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.data.cwiseProduct(b.data).sum() / (na * nb), -1.0, 1.0);
}

// Mean combined similarity of `e` against every member except `skip`.
double mean_similarity(const MemoryEntry& e, const MemoryStore::Bucket& bucket, const MemoryWeights& w,
                       std::size_t skip = std::numeric_limits<std::size_t>::max()) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < bucket.size(); ++i) {
    if (i == skip) continue;
    sum += combined_similarity(e, bucket[i], w);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : -std::numeric_limits<double>::infinity();
}

void put_vec(std::ostream& out, const VecX& v) {
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) bin::put<double>(out, v[i]);
}

VecX get_vec(std::istream& in) {
  const auto n = bin::get<std::uint32_t>(in);
  if (n > (1u << 20)) fail(ErrorKind::Format, "vector length out of range");
  VecX v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = bin::get<double>(in);
  return v;
}

void put_motion(std::ostream& out, const MotionSegment& m) {
  for (Eigen::Index r = 0; r < m.data.rows(); ++r)
    for (Eigen::Index c = 0; c < m.data.cols(); ++c) bin::put<double>(out, m.data(r, c));
}

MotionSegment get_motion(std::istream& in, int frames, int joints) {
  MotionSegment m(frames, joints);
  for (Eigen::Index r = 0; r < m.data.rows(); ++r)
    for (Eigen::Index c = 0; c < m.data.cols(); ++c) m.data(r, c) = bin::get<double>(in);
  return m;
}

void put_local(std::ostream& out, const LocalGrid& g) {
  for (int a = 0; a < 3; ++a) bin::put<double>(out, g.center[a]);
  bin::put<double>(out, g.yaw);
  std::string bytes(LocalGrid::kCount / 8, '\0');
  for (std::size_t i = 0; i < LocalGrid::kCount; ++i)
    if (g.bits[i]) bytes[i / 8] = static_cast<char>(bytes[i / 8] | (1 << (i % 8)));
  bin::put_bytes(out, bytes);
}

LocalGrid get_local(std::istream& in) {
  LocalGrid g;
  for (int a = 0; a < 3; ++a) g.center[a] = bin::get<double>(in);
  g.yaw = bin::get<double>(in);
  const std::string bytes = bin::get_bytes(in, LocalGrid::kCount / 8);
  for (std::size_t i = 0; i < LocalGrid::kCount; ++i) g.bits[i] = (bytes[i / 8] >> (i % 8)) & 1;
  return g;
}

bool entries_equal(const MemoryEntry& a, const MemoryEntry& b) {
  return a.noisy_motion == b.noisy_motion && a.clean_motion == b.clean_motion &&
         a.scene_context.bits == b.scene_context.bits && a.scene_context.center == b.scene_context.center &&
         a.scene_context.yaw == b.scene_context.yaw && a.scene_feature.vector == b.scene_feature.vector &&
         a.text.vector == b.text.vector && a.text.verb == b.text.verb && a.prompt == b.prompt &&
         a.admission_similarity == b.admission_similarity && a.loss == b.loss;
}

}  // namespace

void MemoryWeights::validate() const {
  require(scene >= 0 && joints >= 0 && text >= 0, ErrorKind::Config, "memory weights must be non-negative");
  require(std::abs(scene + joints + text - 1.0) <= 1e-9, ErrorKind::Config, "memory weights must sum to 1");
}

void MemoryConfig::validate() const {
  weights.validate();
  require(capacity >= 1, ErrorKind::Config, "memory capacity must be >= 1");
  require(shortlist >= 1, ErrorKind::Config, "memory shortlist must be >= 1");
  require(std::isfinite(loss_threshold) && loss_threshold >= 0, ErrorKind::Config, "loss threshold must be >= 0");
  require(blend_text >= 0 && blend_scene >= 0, ErrorKind::Config, "blend weights must be non-negative");
}

double combined_similarity(const MemoryEntry& c, const MemoryEntry& r, const MemoryWeights& w) {
  require(c.clean_motion.joints() == r.clean_motion.joints(), ErrorKind::Input, "joint counts differ");
  return w.scene * cosine_sim(c.scene_feature.vector, r.scene_feature.vector) +
         w.joints * flat_cosine(c.clean_motion, r.clean_motion) + w.text * cosine_sim(c.text.vector, r.text.vector);
}

std::string to_string(StoreDecision::Kind k) {
  switch (k) {
    case StoreDecision::Kind::RejectedByLoss: return "rejected_by_loss";
    case StoreDecision::Kind::Inserted: return "inserted";
    case StoreDecision::Kind::Replaced: return "replaced";
    case StoreDecision::Kind::RejectedBySimilarity: return "rejected_by_similarity";
  }
  return "unknown";
}

MemoryStore::MemoryStore(MemoryConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::size_t MemoryStore::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [verb, bucket] : buckets_) n += bucket.size();
  return n;
}

StoreDecision MemoryStore::consider_store(MemoryEntry entry, double training_loss) {
  if (!(training_loss <= cfg_.loss_threshold)) return {StoreDecision::Kind::RejectedByLoss, 0};
  entry.loss = training_loss;
  if (entry.text.verb.empty()) entry.text.verb = extract_verb(entry.prompt);
  auto& bucket = buckets_[entry.text.verb];

  const double score = mean_similarity(entry, bucket, cfg_.weights);
  entry.admission_similarity = bucket.empty() ? 0.0 : score;
  if (bucket.size() < static_cast<std::size_t>(cfg_.capacity)) {
    bucket.push_back(std::move(entry));
    return {StoreDecision::Kind::Inserted, bucket.size() - 1};
  }
  std::size_t worst = 0;
  double worst_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bucket.size(); ++i) {
    const double s = mean_similarity(bucket[i], bucket, cfg_.weights, i);
    if (s < worst_score) worst_score = s, worst = i;
  }
  if (score > worst_score) {
    bucket[worst] = std::move(entry);
    return {StoreDecision::Kind::Replaced, worst};
  }
  return {StoreDecision::Kind::RejectedBySimilarity, 0};
}

MotionSegment gaussian_prime(std::uint64_t seed, int frames, int joints) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MotionSegment m(frames, joints);
  for (Eigen::Index r = 0; r < m.data.rows(); ++r)
    for (Eigen::Index c = 0; c < m.data.cols(); ++c) m.data(r, c) = n(rng);
  return m;
}

Retrieval MemoryStore::retrieve(const std::string& prompt, const SceneFeature& scene, std::uint64_t seed, int frames,
                                int joints) const {
  Retrieval out;
  out.verb = extract_verb(prompt);
  const auto it = buckets_.find(out.verb);
  if (it == buckets_.end() || it->second.empty()) {
    out.prime = gaussian_prime(seed, frames, joints);
    return out;
  }
  const auto& bucket = it->second;
  const VecX text = embed_text(prompt).vector;
  std::vector<double> text_sim(bucket.size()), scene_sim(bucket.size());
  for (std::size_t i = 0; i < bucket.size(); ++i) {
    text_sim[i] = cosine_sim(text, bucket[i].text.vector);
    scene_sim[i] = cosine_sim(scene.vector, bucket[i].scene_feature.vector);
  }

  std::size_t best = 0;
  if (cfg_.single_stage) {
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      const double s = cfg_.blend_text * text_sim[i] + cfg_.blend_scene * scene_sim[i];
      if (s > best_score) best_score = s, best = i;
    }
  } else {
    std::vector<std::size_t> order(bucket.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return text_sim[a] > text_sim[b]; });
    order.resize(std::min(order.size(), static_cast<std::size_t>(cfg_.shortlist)));
    best = order.front();
    for (std::size_t i : order)
      if (scene_sim[i] > scene_sim[best]) best = i;
  }
  const auto& prime = bucket[best].noisy_motion;
  require(prime.frames() == frames && prime.joints() == joints, ErrorKind::Input, "stored prime has a different shape");
  out.prime = prime;
  out.source = Retrieval::Source::Memory;
  out.index = best;
  return out;
}

MemoryStore MemoryStore::restore(MemoryConfig cfg, std::map<std::string, Bucket> buckets) {
  MemoryStore s(cfg);
  for (const auto& [verb, bucket] : buckets)
    require(bucket.size() <= static_cast<std::size_t>(cfg.capacity), ErrorKind::Input, "bucket exceeds capacity");
  s.buckets_ = std::move(buckets);
  return s;
}

void MemoryStore::refresh_scene_features(const std::function<SceneFeature(const LocalGrid&)>& encode) {
  for (auto& [verb, bucket] : buckets_)
    for (auto& e : bucket) e.scene_feature = encode(e.scene_context);
}

bool MemoryStore::operator==(const MemoryStore& o) const {
  const auto& a = cfg_;
  const auto& b = o.cfg_;
  if (a.capacity != b.capacity || a.loss_threshold != b.loss_threshold || a.weights.scene != b.weights.scene ||
      a.weights.joints != b.weights.joints || a.weights.text != b.weights.text || a.shortlist != b.shortlist ||
      a.single_stage != b.single_stage || a.blend_text != b.blend_text || a.blend_scene != b.blend_scene)
    return false;
  if (buckets_.size() != o.buckets_.size()) return false;
  for (const auto& [verb, bucket] : buckets_) {
    const auto it = o.buckets_.find(verb);
    if (it == o.buckets_.end() || it->second.size() != bucket.size()) return false;
    for (std::size_t i = 0; i < bucket.size(); ++i)
      if (!entries_equal(bucket[i], it->second[i])) return false;
  }
  return true;
}

// Layout: magic, u32 version, config block (u32 capacity, f64 tau_l, 3 f64
// weights, u32 shortlist, u8 single_stage, 2 f64 blend), u32 frames, u32
// joints, u32 bucket count; per bucket: verb string, u32 entry count; per
// entry: prompt, verb, text vector, scene feature vector, f64 admission
// similarity, f64 loss, noisy then clean motion (row-major f64), local grid
// (3 f64 center, f64 yaw, 4096 bytes of LSB-first bits). Strings and vectors
// carry a u32 length prefix.
void write_memory(std::ostream& out, const MemoryStore& store) {
  const auto& c = store.config();
  bin::put_bytes(out, kMagic);
  bin::put<std::uint32_t>(out, kVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.capacity));
  bin::put<double>(out, c.loss_threshold);
  bin::put<double>(out, c.weights.scene);
  bin::put<double>(out, c.weights.joints);
  bin::put<double>(out, c.weights.text);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.shortlist));
  bin::put<std::uint8_t>(out, c.single_stage ? 1 : 0);
  bin::put<double>(out, c.blend_text);
  bin::put<double>(out, c.blend_scene);

  int frames = kMotionFrames, joints = kJoints;
  for (const auto& [verb, bucket] : store.buckets())
    if (!bucket.empty()) {
      frames = bucket.front().noisy_motion.frames();
      joints = bucket.front().noisy_motion.joints();
      break;
    }
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(frames));
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(joints));
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.buckets().size()));
  for (const auto& [verb, bucket] : store.buckets()) {
    bin::put_string(out, verb);
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(bucket.size()));
    for (const auto& e : bucket) {
      require(e.noisy_motion.frames() == frames && e.noisy_motion.joints() == joints &&
                  e.clean_motion.frames() == frames && e.clean_motion.joints() == joints,
              ErrorKind::Input, "memory entries must share one motion shape");
      bin::put_string(out, e.prompt);
      bin::put_string(out, e.text.verb);
      put_vec(out, e.text.vector);
      put_vec(out, e.scene_feature.vector);
      bin::put<double>(out, e.admission_similarity);
      bin::put<double>(out, e.loss);
      put_motion(out, e.noisy_motion);
      put_motion(out, e.clean_motion);
      put_local(out, e.scene_context);
    }
  }
  if (!out) fail(ErrorKind::Io, "failed writing memory");
}

MemoryStore read_memory(std::istream& in) {
  bin::expect_magic(in, kMagic);
  const auto version = bin::get<std::uint32_t>(in);
  if (version != kVersion) fail(ErrorKind::Format, "unsupported memory version " + std::to_string(version));
  MemoryConfig c;
  c.capacity = static_cast<int>(bin::get<std::uint32_t>(in));
  c.loss_threshold = bin::get<double>(in);
  c.weights.scene = bin::get<double>(in);
  c.weights.joints = bin::get<double>(in);
  c.weights.text = bin::get<double>(in);
  c.shortlist = static_cast<int>(bin::get<std::uint32_t>(in));
  c.single_stage = bin::get<std::uint8_t>(in) != 0;
  c.blend_text = bin::get<double>(in);
  c.blend_scene = bin::get<double>(in);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("invalid memory config: ") + e.what());
  }
  const auto frames = bin::get<std::uint32_t>(in);
  const auto joints = bin::get<std::uint32_t>(in);
  if (frames == 0 || joints == 0 || frames > 4096 || joints > 1024) fail(ErrorKind::Format, "motion shape out of range");
  const auto nb = bin::get<std::uint32_t>(in);
  std::map<std::string, MemoryStore::Bucket> buckets;
  for (std::uint32_t b = 0; b < nb; ++b) {
    const std::string verb = bin::get_string(in);
    const auto n = bin::get<std::uint32_t>(in);
    if (n > static_cast<std::uint32_t>(c.capacity)) fail(ErrorKind::Format, "bucket exceeds capacity");
    auto& bucket = buckets[verb];
    for (std::uint32_t i = 0; i < n; ++i) {
      MemoryEntry e;
      e.prompt = bin::get_string(in);
      e.text.verb = bin::get_string(in);
      e.text.vector = get_vec(in);
      e.scene_feature.vector = get_vec(in);
      e.admission_similarity = bin::get<double>(in);
      e.loss = bin::get<double>(in);
      e.noisy_motion = get_motion(in, static_cast<int>(frames), static_cast<int>(joints));
      e.clean_motion = get_motion(in, static_cast<int>(frames), static_cast<int>(joints));
      e.scene_context = get_local(in);
      bucket.push_back(std::move(e));
    }
  }
  return MemoryStore::restore(c, std::move(buckets));
}

void save_memory(const MemoryStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  write_memory(out, store);
}

MemoryStore load_memory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  return read_memory(in);
}

}  // namespace dhsi
