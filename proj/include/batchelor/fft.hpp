// Thin RAII layer over FFTW: aligned buffers, a process-wide plan cache,
// and line transforms along one axis of a row-major cube.
#pragma once

#include <fftw3.h>

#include <array>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace batchelor {

using Complex = std::complex<double>;

/// Allocator handing out fftw_malloc'd storage so that plans made on one
/// buffer can execute on any other buffer of the same shape.
template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() noexcept = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    void* p = fftw_malloc(n * sizeof(T));
    if (p == nullptr && n != 0) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }

  template <class U>
  bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

template <class T>
using AlignedVector = std::vector<T, FftwAllocator<T>>;

namespace fft_detail {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Row-major strides of a cube with extent m on every axis except `axis`,
// which has extent `axis_extent`.
inline std::array<std::ptrdiff_t, 3> strides(int dim, std::size_t m, int axis,
                                             std::size_t axis_extent) {
  std::array<std::ptrdiff_t, 3> s{0, 0, 0};
  std::ptrdiff_t acc = 1;
  for (int a = dim - 1; a >= 0; --a) {
    s[static_cast<std::size_t>(a)] = acc;
    acc *= static_cast<std::ptrdiff_t>(a == axis ? axis_extent : m);
  }
  return s;
}

}  // namespace fft_detail

/// Direction of a line transform between the real physical samples and the
/// half spectrum along one axis.
enum class LineDirection { kForward, kBackward };

/**
 * Line transforms of a real cube of side m (odd or even) along a single axis.
 * Forward maps m^d reals to a half spectrum with m/2+1 entries along `axis`
 * (all other axes keep extent m). Transforms are unnormalized.
 *
 * Plans are created once per (dim, m, axis, direction) and shared; execution
 * uses FFTW's new-array interface and is safe from multiple threads.
 */
class LineFft {
 public:
  static const LineFft& get(int dim, std::size_t m, int axis, LineDirection dir) {
    static std::map<std::tuple<int, std::size_t, int, LineDirection>, std::unique_ptr<LineFft>> cache;
    std::lock_guard<std::mutex> lock(fft_detail::planner_mutex());
    auto key = std::make_tuple(dim, m, axis, dir);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, std::unique_ptr<LineFft>(new LineFft(dim, m, axis, dir))).first;
    }
    return *it->second;
  }

  void forward(double* real, Complex* half) const {
    fftw_execute_dft_r2c(plan_.get(), real, reinterpret_cast<fftw_complex*>(half));
  }
  // c2r destroys its input; callers own the half buffer and regenerate it.
  void backward(Complex* half, double* real) const {
    fftw_execute_dft_c2r(plan_.get(), reinterpret_cast<fftw_complex*>(half), real);
  }

 private:
  LineFft(int dim, std::size_t m, int axis, LineDirection dir) {
    if (dim < 1 || dim > 3 || axis < 0 || axis >= dim) throw std::invalid_argument("LineFft: bad axis");
    const std::size_t h = m / 2 + 1;
    const auto rs = fft_detail::strides(dim, m, axis, m);
    const auto hs = fft_detail::strides(dim, m, axis, h);
    const std::size_t nreal = fft_detail::ipow(m, dim);
    const std::size_t nhalf = nreal / m * h;
    AlignedVector<double> r(nreal);
    AlignedVector<Complex> c(nhalf);

    fftw_iodim line{};
    line.n = static_cast<int>(m);
    const bool fwd = dir == LineDirection::kForward;
    line.is = static_cast<int>(fwd ? rs[static_cast<std::size_t>(axis)] : hs[static_cast<std::size_t>(axis)]);
    line.os = static_cast<int>(fwd ? hs[static_cast<std::size_t>(axis)] : rs[static_cast<std::size_t>(axis)]);
    std::vector<fftw_iodim> loops;
    for (int a = 0; a < dim; ++a) {
      if (a == axis) continue;
      fftw_iodim d{};
      d.n = static_cast<int>(m);
      d.is = static_cast<int>(fwd ? rs[static_cast<std::size_t>(a)] : hs[static_cast<std::size_t>(a)]);
      d.os = static_cast<int>(fwd ? hs[static_cast<std::size_t>(a)] : rs[static_cast<std::size_t>(a)]);
      loops.push_back(d);
    }
    const unsigned flags = FFTW_MEASURE;
    fftw_plan p = nullptr;
    if (fwd) {
      p = fftw_plan_guru_dft_r2c(1, &line, static_cast<int>(loops.size()), loops.data(), r.data(),
                                 reinterpret_cast<fftw_complex*>(c.data()), flags);
    } else {
      p = fftw_plan_guru_dft_c2r(1, &line, static_cast<int>(loops.size()), loops.data(),
                                 reinterpret_cast<fftw_complex*>(c.data()), r.data(), flags);
    }
    if (p == nullptr) throw std::runtime_error("LineFft: FFTW planning failed");
    plan_.reset(p);
  }

  fft_detail::PlanHandle plan_;
};

/**
 * Full d-dimensional real transform of an m^d cube. The spectrum has the
 * r2c layout: extent m on the leading axes and m/2+1 on the last axis.
 */
class CubeFft {
 public:
  static const CubeFft& get(int dim, std::size_t m, LineDirection dir) {
    static std::map<std::tuple<int, std::size_t, LineDirection>, std::unique_ptr<CubeFft>> cache;
    std::lock_guard<std::mutex> lock(fft_detail::planner_mutex());
    auto key = std::make_tuple(dim, m, dir);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, std::unique_ptr<CubeFft>(new CubeFft(dim, m, dir))).first;
    return *it->second;
  }

  void forward(double* real, Complex* spec) const {
    fftw_execute_dft_r2c(plan_.get(), real, reinterpret_cast<fftw_complex*>(spec));
  }
  void backward(Complex* spec, double* real) const {
    fftw_execute_dft_c2r(plan_.get(), reinterpret_cast<fftw_complex*>(spec), real);
  }

 private:
  CubeFft(int dim, std::size_t m, LineDirection dir) {
    std::array<int, 3> n{static_cast<int>(m), static_cast<int>(m), static_cast<int>(m)};
    const std::size_t nreal = fft_detail::ipow(m, dim);
    AlignedVector<double> r(nreal);
    AlignedVector<Complex> c(nreal / m * (m / 2 + 1));
    // ESTIMATE: these run only at diagnostic cadence.
    const unsigned flags = FFTW_ESTIMATE;
    fftw_plan p = dir == LineDirection::kForward
                      ? fftw_plan_dft_r2c(dim, n.data(), r.data(), reinterpret_cast<fftw_complex*>(c.data()), flags)
                      : fftw_plan_dft_c2r(dim, n.data(), reinterpret_cast<fftw_complex*>(c.data()), r.data(), flags);
    if (p == nullptr) throw std::runtime_error("CubeFft: FFTW planning failed");
    plan_.reset(p);
  }

  fft_detail::PlanHandle plan_;
};

}  // namespace batchelor
