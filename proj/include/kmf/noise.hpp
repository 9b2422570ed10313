#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace kmf {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// A keyed bijection on 128-bit counters; every output is a pure function of
// (key, counter).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

// Inverse of the standard normal CDF (Acklam's rational approximation, relative
// error below 1.2e-9). p must lie in (0, 1).
inline double normal_quantile(double p) {
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                          1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                          6.680131188771972e+01,  -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                          -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                          3.754408661907416e+00};
  constexpr double kLow = 0.02425;
  if (p < kLow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - kLow) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Independent address spaces inside one stream.
enum class NoiseDomain : std::uint32_t {
  brownian = 0,
  initial_a = 1,
  initial_b = 2,
  proxy_cloud = 3,
  proxy_initial = 4,
};

// Counter-based Gaussian stream: (replica, particle, step, coordinate) maps to a
// standard normal variate, independent of evaluation order and thread count.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t master_seed) : seed_(master_seed) {}

  // Every increment is exactly zero; used to run the drift alone.
  static NoiseStream silent() {
    NoiseStream s(0);
    s.silent_ = true;
    return s;
  }

  std::uint64_t seed() const { return seed_; }
  bool is_silent() const { return silent_; }

  // Standard normal at one address.
  double normal(std::uint32_t replica, std::uint32_t particle, std::uint32_t step,
                std::uint32_t coord, NoiseDomain domain = NoiseDomain::brownian) const {
    if (silent_) return 0.0;
    const auto [even, odd] = normal_pair(replica, particle >> 1, step, coord, domain);
    return (particle & 1u) ? odd : even;
  }

  // The variates of particles 2 * pair and 2 * pair + 1 at the same
  // (replica, step, coord), from the two 64-bit halves of one Philox block.
  std::pair<double, double> normal_pair(std::uint32_t replica, std::uint32_t pair,
                                        std::uint32_t step, std::uint32_t coord,
                                        NoiseDomain domain = NoiseDomain::brownian) const {
    if (silent_) return {0.0, 0.0};
    const std::uint32_t tag = (static_cast<std::uint32_t>(domain) << 24) | coord;
    const auto r = philox4x32({pair, step, replica, tag},
                              {static_cast<std::uint32_t>(seed_),
                               static_cast<std::uint32_t>(seed_ >> 32)});
    const std::uint64_t hi = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    const std::uint64_t lo = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    // Midpoints of 2^-53 cells: strictly inside (0, 1) and symmetric about 1/2.
    const double u1 = (static_cast<double>(hi >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(lo >> 11) + 0.5) * 0x1.0p-53;
    return {normal_quantile(u1), normal_quantile(u2)};
  }

 private:
  std::uint64_t seed_;
  bool silent_ = false;
};

}  // namespace kmf
