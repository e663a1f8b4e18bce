#pragma once
#include <complex>
#include <cstdint>
#include <random>

namespace sagin {

// Deterministic random stream: fixed engine + hand-rolled transforms so that
// sequences are reproducible across standard libraries. Parallel Monte Carlo
// derives one stream per record via the (seed, stream) pair.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();                    // [0, 1), 53-bit
  double uniform_pos();                // (0, 1]
  double gauss();                      // N(0, 1), Box-Muller
  std::complex<double> cgauss();       // CN(0, 1)
  double gamma(double shape, double scale);

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sagin
