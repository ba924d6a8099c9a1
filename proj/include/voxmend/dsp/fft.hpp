#pragma once

#include <complex>
#include <cstddef>

namespace voxmend::dsp {

// Real-input FFT of length n (n even). `forward` writes n/2+1 bins;
// `inverse` reads n/2+1 bins and writes n samples scaled by 1/n.
// Plans are cached per thread, so these are safe to call concurrently.
template <typename T>
void rfft(const T* in, std::complex<T>* out, std::size_t n);

template <typename T>
void irfft(const std::complex<T>* in, T* out, std::size_t n);

}  // namespace voxmend::dsp
