#pragma once

// Binary chain files. Layout (host byte order, little-endian on every
// supported platform):
//
//   magic "ZHMMCHN\0", u32 schema version
//   i32 K, i32 p, i32 baseline, names (u64 count, then u64 length + bytes)
//   layouts (u64 count + u8 per column, transition then emission)
//   u64 draws, each: i32 iteration, f64 loglik, i32 included,
//       f64 beta[K*K*p], u8 gamma[K*K*p], f64 rho[K*p], u8 delta[K*p],
//       f64 r[K], f64 p_zero[K], f64 pi[K]
//   u64 + i32 occupancy, u64 + u8 xi draws, u64 + f64 loglik trace,
//   u64 + i32 included trace, 6 x i64 sampler counters

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "zinbhmm/errors.hpp"
#include "zinbhmm/mcmc.hpp"

namespace zinbhmm::io {

inline constexpr char kChainMagic[8] = {'Z', 'H', 'M', 'M', 'C', 'H', 'N', '\0'};
inline constexpr std::uint32_t kChainSchemaVersion = 1;

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class T>
  void put_array(const T* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  }
  template <class T>
  void put_vector(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    put_array(v.data(), v.size());
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  template <class T>
  T get() {
    T v;
    read(&v, sizeof v);
    return v;
  }
  template <class T>
  void get_array(T* data, std::size_t n) {
    read(data, n * sizeof(T));
  }
  template <class T>
  std::vector<T> get_vector(std::size_t limit) {
    const auto n = get<std::uint64_t>();
    if (n > limit) fail("implausible array length " + std::to_string(n));
    std::vector<T> v(static_cast<std::size_t>(n));
    get_array(v.data(), v.size());
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > (1u << 20)) fail("implausible string length");
    std::string s(static_cast<std::size_t>(n), '\0');
    read(s.data(), s.size());
    return s;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw DataError(origin_ + ": " + msg); }

 private:
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated chain file");
  }

  std::istream& in_;
  std::string origin_;
};

inline std::vector<std::uint8_t> encode_layout(const std::vector<Inclusion>& v) {
  std::vector<std::uint8_t> out;
  for (auto c : v) out.push_back(static_cast<std::uint8_t>(c));
  return out;
}

inline std::vector<Inclusion> decode_layout(const std::vector<std::uint8_t>& v,
                                            const BinaryReader& r) {
  std::vector<Inclusion> out;
  for (auto c : v) {
    if (c > 2) r.fail("invalid column inclusion code");
    out.push_back(static_cast<Inclusion>(c));
  }
  return out;
}

}  // namespace detail

inline void write_chain(std::ostream& out, const ChainSamples& s) {
  detail::BinaryWriter w(out);
  w.put_array(kChainMagic, 8);
  w.put(kChainSchemaVersion);
  const int k = s.n_states, p = s.n_covariates;
  w.put<std::int32_t>(k);
  w.put<std::int32_t>(p);
  w.put<std::int32_t>(s.baseline_state);
  w.put<std::uint64_t>(s.covariate_names.size());
  for (const auto& n : s.covariate_names) w.put_string(n);
  w.put_vector(detail::encode_layout(s.layout.transition));
  w.put_vector(detail::encode_layout(s.layout.emission));

  w.put<std::uint64_t>(s.draws.size());
  for (const auto& d : s.draws) {
    w.put<std::int32_t>(d.iteration);
    w.put<double>(d.log_likelihood);
    w.put<std::int32_t>(d.n_included);
    const auto& m = d.params;
    for (int f = 0; f < k; ++f) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> b = m.beta[f];
      w.put_array(b.data(), static_cast<std::size_t>(b.size()));
    }
    for (int f = 0; f < k; ++f)
      for (int to = 0; to < k; ++to)
        for (int j = 0; j < p; ++j) w.put<std::uint8_t>(static_cast<std::uint8_t>(m.gamma[f](to, j)));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rho = m.rho;
    w.put_array(rho.data(), static_cast<std::size_t>(rho.size()));
    for (int s2 = 0; s2 < k; ++s2)
      for (int j = 0; j < p; ++j) w.put<std::uint8_t>(static_cast<std::uint8_t>(m.delta(s2, j)));
    w.put_array(m.r.data(), k);
    w.put_array(m.p_zero.data(), k);
    w.put_array(m.pi.data(), k);
  }
  w.put_vector(s.occupancy);
  w.put_vector(s.xi_draws);
  w.put_vector(s.log_likelihood_trace);
  w.put_vector(s.included_trace);
  for (const auto* b : {&s.stats.transition, &s.stats.emission}) {
    w.put<std::int64_t>(b->proposals);
    w.put<std::int64_t>(b->accepted);
    w.put<std::int64_t>(b->refresh_failures);
  }
}

inline void write_chain(const std::string& path, const ChainSamples& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_chain(out, s);
  if (!out) throw DataError("failed writing " + path);
}

inline ChainSamples read_chain(std::istream& in, const std::string& origin = "chain") {
  detail::BinaryReader r(in, origin);
  char magic[8];
  r.get_array(magic, 8);
  if (std::memcmp(magic, kChainMagic, 8) != 0) r.fail("not a chain file");
  const auto version = r.get<std::uint32_t>();
  if (version != kChainSchemaVersion)
    r.fail("unsupported chain schema version " + std::to_string(version));

  ChainSamples s;
  const int k = r.get<std::int32_t>();
  const int p = r.get<std::int32_t>();
  s.baseline_state = r.get<std::int32_t>();
  if (k < 1 || k > 255 || p < 0 || p > 100000 || s.baseline_state < 0 || s.baseline_state >= k)
    r.fail("corrupt dimensions");
  s.n_states = k;
  s.n_covariates = p;
  const auto n_names = r.get<std::uint64_t>();
  if (n_names != static_cast<std::uint64_t>(p)) r.fail("covariate name count mismatch");
  for (std::uint64_t i = 0; i < n_names; ++i) s.covariate_names.push_back(r.get_string());
  s.layout.transition = detail::decode_layout(r.get_vector<std::uint8_t>(p), r);
  s.layout.emission = detail::decode_layout(r.get_vector<std::uint8_t>(p), r);

  const auto n_draws = r.get<std::uint64_t>();
  if (n_draws > (1ull << 32)) r.fail("implausible draw count");
  s.draws.reserve(static_cast<std::size_t>(n_draws));
  std::vector<std::uint8_t> bytes;
  for (std::uint64_t d = 0; d < n_draws; ++d) {
    ChainDraw draw;
    draw.iteration = r.get<std::int32_t>();
    draw.log_likelihood = r.get<double>();
    draw.n_included = r.get<std::int32_t>();
    auto& m = draw.params;
    m = ModelParameters::zeros(k, p);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(k, p);
    for (int f = 0; f < k; ++f) {
      r.get_array(buf.data(), static_cast<std::size_t>(buf.size()));
      m.beta[f] = buf;
    }
    bytes.resize(static_cast<std::size_t>(k) * p);
    for (int f = 0; f < k; ++f) {
      r.get_array(bytes.data(), bytes.size());
      for (int to = 0; to < k; ++to)
        for (int j = 0; j < p; ++j) m.gamma[f](to, j) = bytes[static_cast<std::size_t>(to) * p + j];
    }
    r.get_array(buf.data(), static_cast<std::size_t>(buf.size()));
    m.rho = buf;
    r.get_array(bytes.data(), bytes.size());
    for (int s2 = 0; s2 < k; ++s2)
      for (int j = 0; j < p; ++j) m.delta(s2, j) = bytes[static_cast<std::size_t>(s2) * p + j];
    r.get_array(m.r.data(), k);
    r.get_array(m.p_zero.data(), k);
    r.get_array(m.pi.data(), k);
    s.draws.push_back(std::move(draw));
  }
  constexpr std::size_t kMax = std::size_t{1} << 34;
  s.occupancy = r.get_vector<int>(kMax);
  s.xi_draws = r.get_vector<std::uint8_t>(kMax);
  s.log_likelihood_trace = r.get_vector<double>(kMax);
  s.included_trace = r.get_vector<int>(kMax);
  for (auto* b : {&s.stats.transition, &s.stats.emission}) {
    b->proposals = r.get<std::int64_t>();
    b->accepted = r.get<std::int64_t>();
    b->refresh_failures = r.get<std::int64_t>();
  }
  if (s.occupancy.size() % static_cast<std::size_t>(k) != 0) r.fail("corrupt occupancy table");
  return s;
}

inline ChainSamples read_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_chain(in, path);
}

}  // namespace zinbhmm::io
