#include "sagin/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sagin {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
  // mix seed and stream id so that nearby pairs give unrelated engines
  std::uint64_t s = seed ^ 0x5851f42d4c957f2dULL;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0xda942042e4dd58b5ULL + 0x9e3779b97f4a7c15ULL;
  std::uint64_t b = splitmix64(s);
  eng_.seed(a ^ (b << 1));
}

std::uint64_t RngStream::next_u64() { return eng_(); }

double RngStream::uniform() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_pos() {
  return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
}

double RngStream::gauss() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_pos();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::complex<double> RngStream::cgauss() {
  const double re = gauss();
  const double im = gauss();
  return {re * 0.70710678118654752440, im * 0.70710678118654752440};
}

double RngStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw std::invalid_argument("gamma: shape/scale must be > 0");
  if (shape < 1.0) {
    // boost: Gamma(k) = Gamma(k+1) * U^{1/k}
    const double u = uniform_pos();
    return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = gauss();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
}

}  // namespace sagin
