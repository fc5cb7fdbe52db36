#include "megalap/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace megalap {

Parameter& ParamStore::create(const std::string& name, std::vector<i64> shape) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(shape);
  p->momentum = Tensor(std::move(shape));
  Parameter* raw = p.get();
  owned_.push_back(std::move(p));
  order_.push_back(raw);
  by_name_[name] = raw;
  return *raw;
}

Parameter& ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return *it->second;
}

bool ParamStore::contains(const std::string& name) const { return by_name_.count(name) != 0; }

i64 ParamStore::total_count() const {
  i64 n = 0;
  for (const Parameter* p : order_) n += p->value.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (Parameter* p : order_) p->grad.fill(0.0);
}

void kaiming_uniform(Tensor& weight, Rng& rng) {
  if (weight.rank() != 4) throw std::invalid_argument("kaiming_uniform expects a conv weight [Cout,Cin,kh,kw]");
  const i64 fan_in = weight.extent(1) * weight.extent(2) * weight.extent(3);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (i64 i = 0; i < weight.numel(); ++i) weight[i] = rng.uniform(-bound, bound);
}

void sgd_step(const std::vector<Parameter*>& params, double lr, double momentum, double weight_decay) {
  if (lr <= 0) throw std::invalid_argument("sgd_step: learning rate must be positive, got " + std::to_string(lr));
  for (Parameter* p : params) {
    for (i64 i = 0; i < p->value.numel(); ++i) {
      const double buf = momentum * p->momentum[i] + p->grad[i] + weight_decay * p->value[i];
      p->momentum[i] = buf;
      p->value[i] -= lr * buf;
    }
    p->grad.fill(0.0);
  }
}

// ---------------------------------------------------------------------------
// checkpoint i/o
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'G', 'L', 'P'};
constexpr uint8_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  put_u32(os, static_cast<uint32_t>(store.all().size()));
  for (const Parameter* p : store.all()) {
    put_u32(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    os.put(static_cast<char>(p->value.rank()));
    for (i64 a = 0; a < p->value.rank(); ++a) put_u32(os, static_cast<uint32_t>(p->value.extent(a)));
    for (i64 i = 0; i < p->value.numel(); ++i) put_f64(os, p->value[i]);
  }
  if (!os) throw std::runtime_error("write failed for checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  const int version = is.get();
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const uint32_t count = get_u32(is);
  for (uint32_t r = 0; r < count; ++r) {
    const uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int rank = is.get();
    std::vector<i64> shape;
    for (int a = 0; a < rank; ++a) shape.push_back(static_cast<i64>(get_u32(is)));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    Parameter& p = store.find(name);
    if (p.value.shape() != shape)
      throw std::runtime_error("checkpoint shape " + shape_string(shape) + " does not match parameter " + name +
                               " " + shape_string(p.value.shape()));
    for (i64 i = 0; i < p.value.numel(); ++i) p.value[i] = get_f64(is);
    if (!is) throw std::runtime_error("truncated checkpoint payload in: " + path);
  }
}

}  // namespace megalap
