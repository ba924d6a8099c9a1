#include "voxmend/dsp/fft.hpp"

#include <unsupported/Eigen/FFT>

#include "voxmend/error.hpp"

namespace voxmend::dsp {
namespace {

template <typename T>
Eigen::FFT<T>& engine() {
  thread_local Eigen::FFT<T> fft = [] {
    Eigen::FFT<T> f;
    f.SetFlag(Eigen::FFT<T>::HalfSpectrum);
    return f;
  }();
  return fft;
}

void check_size(std::size_t n) {
  if (n == 0 || n % 2 != 0) {
    throw ShapeError("rfft: length must be even and positive, got " + std::to_string(n));
  }
}

}  // namespace

template <typename T>
void rfft(const T* in, std::complex<T>* out, std::size_t n) {
  check_size(n);
  engine<T>().fwd(out, in, static_cast<Eigen::Index>(n));
}

template <typename T>
void irfft(const std::complex<T>* in, T* out, std::size_t n) {
  check_size(n);
  // Imaginary parts of the DC and Nyquist bins are ignored.
  engine<T>().inv(out, in, static_cast<Eigen::Index>(n));
}

template void rfft<float>(const float*, std::complex<float>*, std::size_t);
template void rfft<double>(const double*, std::complex<double>*, std::size_t);
template void irfft<float>(const std::complex<float>*, float*, std::size_t);
template void irfft<double>(const std::complex<double>*, double*, std::size_t);

}  // namespace voxmend::dsp
