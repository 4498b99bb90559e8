#pragma once

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "hjreduce/core.hpp"

namespace hjreduce {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

namespace detail {
// The FFTW planner is not thread-safe; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Multi-dimensional complex FFT on a fully periodic grid. Plans are built
/// with FFTW_ESTIMATE so results do not depend on timing measurements.
/// One instance must not be used from two threads at once.
class Spectral {
 public:
  explicit Spectral(const Grid& grid) : grid_(grid), size_(grid.size()) {
    if (!grid.fully_periodic())
      throw Error(ErrorKind::unsupported_domain, "spectral transforms need a fully periodic grid");
    std::vector<int> dims;
    for (const auto& a : grid.axes()) dims.push_back(static_cast<int>(a.points));
    buffer_ = fftw_alloc_complex(size_);
    if (!buffer_) throw std::bad_alloc();
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      forward_ = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buffer_, buffer_,
                               FFTW_FORWARD, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buffer_, buffer_,
                                FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    for (std::size_t d = 0; d < grid.dim(); ++d) {
      const std::size_t n = grid.axis(d).points;
      const double base = 2.0 * std::numbers::pi / grid.axis(d).length();
      Vec full(n), deriv(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double k = i <= n / 2 ? static_cast<double>(i)
                                    : static_cast<double>(i) - static_cast<double>(n);
        full[i] = base * k;
        // the Nyquist mode has no odd-derivative partner on an even grid
        deriv[i] = (n % 2 == 0 && i == n / 2) ? 0.0 : base * k;
      }
      wavenumbers_.push_back(std::move(full));
      derivative_wavenumbers_.push_back(std::move(deriv));
    }
  }

  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  ~Spectral() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(buffer_);
  }

  const Grid& grid() const { return grid_; }

  /// Unnormalized forward transform, in place.
  void forward(CVec& data) { run(forward_, data, 1.0); }
  /// Inverse transform including the 1/N factor, in place.
  void backward(CVec& data) { run(backward_, data, 1.0 / static_cast<double>(size_)); }

  /// Signed angular wavenumber of mode index i along axis d.
  double wavenumber(std::size_t d, std::size_t i) const { return wavenumbers_[d][i]; }
  /// Wavenumber used for first derivatives (Nyquist mode zeroed).
  double derivative_wavenumber(std::size_t d, std::size_t i) const {
    return derivative_wavenumbers_[d][i];
  }

  double k_squared(std::size_t node) const {
    double s = 0.0;
    for (std::size_t d = 0; d < grid_.dim(); ++d) {
      const double k = wavenumbers_[d][grid_.index_along(node, d)];
      s += k * k;
    }
    return s;
  }

  /// Spectral derivative of complex nodal data along axis d.
  CVec derivative(const CVec& values, std::size_t d) {
    CVec work = values;
    forward(work);
    for (std::size_t nd = 0; nd < size_; ++nd)
      work[nd] *= Complex(0.0, derivative_wavenumbers_[d][grid_.index_along(nd, d)]);
    backward(work);
    return work;
  }

  /// Spectral gradient of real nodal data, node-major with dim components.
  Vec gradient(const Vec& values) {
    const std::size_t dim = grid_.dim();
    CVec spec(values.begin(), values.end());
    forward(spec);
    Vec out(size_ * dim);
    CVec work(size_);
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t nd = 0; nd < size_; ++nd)
        work[nd] = spec[nd] * Complex(0.0, derivative_wavenumbers_[d][grid_.index_along(nd, d)]);
      backward(work);
      for (std::size_t nd = 0; nd < size_; ++nd) out[nd * dim + d] = work[nd].real();
    }
    return out;
  }

  /// Spectral divergence of real node-major vector data.
  Vec divergence(const Vec& values) {
    const std::size_t dim = grid_.dim();
    CVec acc(size_, Complex(0.0, 0.0)), work(size_);
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t nd = 0; nd < size_; ++nd) work[nd] = values[nd * dim + d];
      forward(work);
      for (std::size_t nd = 0; nd < size_; ++nd)
        acc[nd] += work[nd] * Complex(0.0, derivative_wavenumbers_[d][grid_.index_along(nd, d)]);
    }
    backward(acc);
    Vec out(size_);
    for (std::size_t nd = 0; nd < size_; ++nd) out[nd] = acc[nd].real();
    return out;
  }

 private:
  void run(fftw_plan plan, CVec& data, double scale) {
    if (data.size() != size_) throw Error(ErrorKind::grid_mismatch, "transform size mismatch");
    for (std::size_t i = 0; i < size_; ++i) {
      buffer_[i][0] = data[i].real();
      buffer_[i][1] = data[i].imag();
    }
    fftw_execute(plan);
    for (std::size_t i = 0; i < size_; ++i) data[i] = Complex(buffer_[i][0], buffer_[i][1]) * scale;
  }

  Grid grid_;
  std::size_t size_;
  fftw_complex* buffer_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  std::vector<Vec> wavenumbers_;
  std::vector<Vec> derivative_wavenumbers_;
};

}  // namespace hjreduce
