#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace srave {

/// Real-input FFT of a fixed size backed by FFTW. Not copyable; each instance
/// owns its plans and aligned buffers, so one instance per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return size_; }
  std::size_t bins() const { return size_ / 2 + 1; }

  /// `in` has size() samples, `out` has bins() values.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Unnormalized inverse: forward followed by inverse scales by size().
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t size_;
  double* real_ = nullptr;
  void* spec_ = nullptr;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

/// Periodic Hann window, w[n] = 0.5 - 0.5 cos(2 pi n / N).
std::vector<double> hann_window(std::size_t n);

}  // namespace srave
