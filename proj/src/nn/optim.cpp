#include "flowseg/nn/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "flowseg/error.hpp"

namespace flowseg::nn {

Adam::Adam(std::vector<Param*> params, AdamConfig config)
    : params_(std::move(params)), cfg_(config) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step(float lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2_sqrt = static_cast<float>(1.0 / std::sqrt(bc2));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k]->value.data();
    const float* g = params_[k]->grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < m_[k].size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_bc2_sqrt + cfg_.eps);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'F', 'S', 'E', 'G', 'P', 'R', 'M', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& origin) {
  if (pos + sizeof(T) > in.size()) throw DataError(origin + ": truncated parameter file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const std::vector<Param*>& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put(out, static_cast<std::uint32_t>(p->name.size()));
    out.insert(out.end(), p->name.begin(), p->name.end());
    const Shape& s = p->value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put(out, static_cast<std::int32_t>(d));
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data());
    out.insert(out.end(), bytes, bytes + p->value.size() * sizeof(float));
  }
  return out;
}

void deserialize_params(const std::vector<std::uint8_t>& bytes, const std::vector<Param*>& params,
                        const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(origin + ": not a parameter file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto count = get<std::uint32_t>(bytes, pos, origin);
  if (count != params.size()) {
    throw DataError(origin + ": expected " + std::to_string(params.size()) +
                    " tensors, found " + std::to_string(count));
  }
  for (auto* p : params) {
    const auto len = get<std::uint32_t>(bytes, pos, origin);
    if (pos + len > bytes.size()) throw DataError(origin + ": truncated parameter file");
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    if (name != p->name) throw DataError(origin + ": expected '" + p->name + "', found '" + name + "'");
    Shape s;
    s.n = get<std::int32_t>(bytes, pos, origin);
    s.c = get<std::int32_t>(bytes, pos, origin);
    s.h = get<std::int32_t>(bytes, pos, origin);
    s.w = get<std::int32_t>(bytes, pos, origin);
    if (s != p->value.shape()) {
      throw DataError(origin + ": shape of '" + name + "' is " + s.str() + ", network expects " +
                      p->value.shape().str());
    }
    const std::size_t nbytes = p->value.size() * sizeof(float);
    if (pos + nbytes > bytes.size()) throw DataError(origin + ": truncated parameter file");
    std::memcpy(p->value.data(), bytes.data() + pos, nbytes);
    pos += nbytes;
  }
  if (pos != bytes.size()) throw DataError(origin + ": trailing bytes in parameter file");
}

void save_params(const std::filesystem::path& path, const std::vector<Param*>& params) {
  const auto bytes = serialize_params(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void load_params(const std::filesystem::path& path, const std::vector<Param*>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PrerequisiteError("missing parameter file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  deserialize_params(bytes, params, path.string());
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace flowseg::nn
