#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace sqalab {

using Complex = std::complex<double>;

/// In-place iterative radix-2 FFT for a fixed power-of-two size.
class Fft {
 public:
  explicit Fft(std::size_t n);

  std::size_t size() const { return n_; }

  void forward(std::span<Complex> data) const;
  /// Inverse transform, scaled by 1/n.
  void inverse(std::span<Complex> data) const;

 private:
  void transform(std::span<Complex> data, bool inverse) const;

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<Complex> twiddles_;
};

/// Shared plan for size n; plans are immutable once built.
const Fft& fft_plan(std::size_t n);

std::size_t next_pow2(std::size_t n);
bool is_pow2(std::size_t n);

/// Linear convolution of two real sequences via FFT.
std::vector<double> fft_convolve(std::span<const double> a,
                                 std::span<const double> b);

}  // namespace sqalab
