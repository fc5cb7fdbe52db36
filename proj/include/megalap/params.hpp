#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "megalap/tensor.hpp"

namespace megalap {

/// Deterministic RNG used for weight init, data synthesis and augmentation.
/// All draws go through these helpers so results are reproducible bit-for-bit
/// for a given seed regardless of standard-library distribution details.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi] inclusive.
  i64 uniform_int(i64 lo, i64 hi) {
    return lo + static_cast<i64>(uniform() * static_cast<double>(hi - lo + 1));
  }
  bool coin() { return uniform() < 0.5; }
  uint64_t raw() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

/// Trainable tensor with its accumulated gradient and SGD momentum buffer.
struct Parameter {
  std::string name;  // hierarchical, unique within a network
  Tensor value;
  Tensor grad;      // filled by backward(); zeroed by sgd_step
  Tensor momentum;  // classic momentum buffer, same shape as value
};

/// Owns all parameters of a network. Insertion order is the canonical
/// iteration order (checkpoints, SGD, gradient flushes).
class ParamStore {
public:
  Parameter& create(const std::string& name, std::vector<i64> shape);
  Parameter& find(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<Parameter*>& all() { return order_; }
  const std::vector<Parameter*>& all() const { return order_; }
  i64 total_count() const;
  void zero_grads();

private:
  std::vector<std::unique_ptr<Parameter>> owned_;
  std::vector<Parameter*> order_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

/// Kaiming-uniform fan-in init for conv weights [Cout,Cin,kh,kw]:
/// bound = sqrt(6 / (Cin*kh*kw)). Biases stay zero.
void kaiming_uniform(Tensor& weight, Rng& rng);

/// Classic momentum SGD over all parameters:
///   buf <- momentum*buf + grad + weight_decay*value; value <- value - lr*buf
/// Gradients are zeroed afterwards. lr must be positive.
void sgd_step(const std::vector<Parameter*>& params, double lr, double momentum, double weight_decay);

// ---------------------------------------------------------------------------
// Checkpoint container. Flat binary layout, little-endian throughout:
//
//   bytes 0..3   magic "MGLP"
//   byte  4      format version (1)
//   bytes 5..8   u32 record count
//   per record:
//     u32  name length, then that many name bytes (UTF-8, no terminator)
//     u8   rank, then rank x u32 extents
//     extents-product x f64 payload, little-endian IEEE-754
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const ParamStore& store);
/// Loads into an existing store; every record must match an existing
/// parameter's name and shape exactly.
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace megalap
