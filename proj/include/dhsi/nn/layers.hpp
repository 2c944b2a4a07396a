#pragma once

#include "dhsi/nn/tape.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dhsi::nn {

// Xavier-uniform initialized matrix.
Mat xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng);

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  static Linear create(ParamSet& ps, const std::string& name, int in, int out, Rng& rng);
  static Linear bind(ParamSet& ps, const std::string& name);
  Var operator()(Tape& t, Var x) const;
  int in_dim() const { return static_cast<int>(weight->value.rows()); }
  int out_dim() const { return static_cast<int>(weight->value.cols()); }
};

// Linear -> GELU -> Linear.
struct Mlp {
  Linear first;
  Linear second;

  static Mlp create(ParamSet& ps, const std::string& name, int in, int hidden, int out, Rng& rng);
  Var operator()(Tape& t, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(ParamSet& ps, const std::string& name, int dim);
  Var operator()(Tape& t, Var x) const;
};

struct MultiHeadAttention {
  Linear q, k, v, out;
  int heads = 1;

  static MultiHeadAttention create(ParamSet& ps, const std::string& name, int width, int heads, Rng& rng);
  Var operator()(Tape& t, Var x, bool causal) const;
};

struct TransformerConfig {
  int width = 64;
  int layers = 4;
  int heads = 4;
  int ffn_mult = 2;
};

// Pre-norm transformer block stack over a (tokens x width) sequence.
struct Transformer {
  struct Block {
    LayerNorm norm1, norm2;
    MultiHeadAttention attn;
    Mlp ffn;
  };
  std::vector<Block> blocks;
  LayerNorm final_norm;

  static Transformer create(ParamSet& ps, const std::string& name, const TransformerConfig& cfg, Rng& rng);
  Var operator()(Tape& t, Var x, bool causal) const;
};

// Sinusoidal embedding of a non-negative integer step into `dim` values.
Mat sinusoidal_embedding(int step, int dim);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm clip, <= 0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  // Applies one update from the accumulated gradients, then zeroes them.
  void step(ParamSet& params);
  // One update over several disjoint parameter sets with a shared clip norm.
  void step(const std::vector<ParamSet*>& sets);
  const AdamConfig& config() const noexcept { return cfg_; }
  long steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Named tensor block: u32 count, then per tensor name, rows u32, cols u32, row-major f64 data.
void write_params(std::ostream& out, const ParamSet& params);
// Reads a tensor block into a ParamSet whose names and shapes must match exactly.
void read_params(std::istream& in, ParamSet& params);

}  // namespace dhsi::nn
