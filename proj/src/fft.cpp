#include "srave/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "srave/error.hpp"

namespace srave {

namespace {
// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t size) : size_(size) {
  if (size == 0) throw InputError("RealFft: size must be positive");
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(size_);
  auto* spec = fftw_alloc_complex(bins());
  spec_ = spec;
  const int n = static_cast<int>(size_);
  fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec, FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_c2r_1d(n, spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(inv_));
  fftw_free(real_);
  fftw_free(spec_);
}

void RealFft::forward(std::span<const double> in,
                      std::span<std::complex<double>> out) {
  if (in.size() != size_ || out.size() != bins()) {
    throw InputError("RealFft::forward: buffer size mismatch");
  }
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(fwd_));
  const auto* spec = static_cast<const fftw_complex*>(spec_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {spec[k][0], spec[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) {
  if (in.size() != bins() || out.size() != size_) {
    throw InputError("RealFft::inverse: buffer size mismatch");
  }
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (std::size_t k = 0; k < bins(); ++k) {
    spec[k][0] = in[k].real();
    spec[k][1] = in[k].imag();
  }
  // c2r destroys its input; it was copied in above.
  fftw_execute(static_cast<fftw_plan>(inv_));
  std::copy(real_, real_ + size_, out.begin());
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

}  // namespace srave
