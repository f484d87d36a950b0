#include "sandlab/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>

namespace sandlab {

namespace {
std::mutex plan_mutex;
}

void dft2d(std::vector<std::complex<double>>& a, int n, int sign) {
  if (a.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("dft2d: bad buffer size");
  auto* data = reinterpret_cast<fftw_complex*>(a.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan = fftw_plan_dft_2d(n, n, data, data,
                            sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                            FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    fftw_destroy_plan(plan);
  }
}

void dct1_2d(std::vector<double>& a, int n) {
  if (a.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("dct1_2d: bad buffer size");
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan = fftw_plan_r2r_2d(n, n, a.data(), a.data(), FFTW_REDFT00,
                            FFTW_REDFT00, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    fftw_destroy_plan(plan);
  }
}

}  // namespace sandlab
