#include "voxmend/filterbank/pqmf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "voxmend/error.hpp"

namespace voxmend::fb {
namespace {

// Windowed-sinc lowpass with cutoff `wc` in cycles/sample (0.5 == Nyquist).
std::vector<double> kaiser_prototype(std::size_t length, double wc, double beta) {
  std::vector<double> h(length);
  const double centre = 0.5 * static_cast<double>(length - 1);
  const double i0b = std::cyl_bessel_i(0.0, beta);
  for (std::size_t n = 0; n < length; ++n) {
    const double d = static_cast<double>(n) - centre;
    const double arg = 2.0 * std::numbers::pi * wc * d;
    const double sinc = std::abs(arg) < 1e-12 ? 2.0 * wc : std::sin(arg) / (std::numbers::pi * d);
    const double r = d / centre;
    h[n] = sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
  }
  return h;
}

// Near-perfect reconstruction needs the prototype's autocorrelation to
// vanish at every non-zero multiple of 2M.
double nyquist_error(const std::vector<double>& p, std::size_t m) {
  const auto len = static_cast<std::ptrdiff_t>(p.size());
  auto autocorr = [&](std::ptrdiff_t lag) {
    double acc = 0.0;
    for (std::ptrdiff_t n = 0; n + lag < len; ++n) acc += p[n] * p[n + lag];
    return acc;
  };
  const double r0 = autocorr(0);
  double err = 0.0;
  for (auto lag = static_cast<std::ptrdiff_t>(2 * m); lag < len; lag += static_cast<std::ptrdiff_t>(2 * m)) {
    const double r = autocorr(lag) / r0;
    err += r * r;
  }
  return err;
}

}  // namespace

PqmfBank::PqmfBank(std::size_t n_bands, double kaiser_beta) : n_bands_(n_bands) {
  if (n_bands < 2) throw ValidationError("PqmfBank: need at least two bands");
  const std::size_t length = 64 * n_bands;
  const double m = static_cast<double>(n_bands);

  // Golden-section search of the prototype cutoff around 1/(4M).
  double lo = 0.6 / (4.0 * m), hi = 1.4 / (4.0 * m);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
  double fa = nyquist_error(kaiser_prototype(length, a, kaiser_beta), n_bands);
  double fb = nyquist_error(kaiser_prototype(length, b, kaiser_beta), n_bands);
  for (int it = 0; it < 80; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - phi * (hi - lo);
      fa = nyquist_error(kaiser_prototype(length, a, kaiser_beta), n_bands);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + phi * (hi - lo);
      fb = nyquist_error(kaiser_prototype(length, b, kaiser_beta), n_bands);
    }
  }
  cutoff_ = 0.5 * (lo + hi);
  prototype_ = kaiser_prototype(length, cutoff_, kaiser_beta);

  const double centre = 0.5 * static_cast<double>(length - 1);
  analysis_.assign(n_bands, std::vector<double>(length));
  synthesis_.assign(n_bands, std::vector<double>(length));
  for (std::size_t k = 0; k < n_bands; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    const double w = (2.0 * static_cast<double>(k) + 1.0) * std::numbers::pi / (2.0 * m);
    for (std::size_t n = 0; n < length; ++n) {
      const double arg = w * (static_cast<double>(n) - centre);
      analysis_[k][n] = 2.0 * prototype_[n] * std::cos(arg + sign * std::numbers::pi / 4.0);
      synthesis_[k][n] = 2.0 * prototype_[n] * std::cos(arg - sign * std::numbers::pi / 4.0);
    }
  }

  // Scale the synthesis side so the distortion transfer function
  // sum_k H_k(z) G_k(z) has a unit main tap at lag length-1.
  double main_tap = 0.0;
  for (std::size_t k = 0; k < n_bands; ++k) {
    for (std::size_t i = 0; i < length; ++i) main_tap += analysis_[k][i] * synthesis_[k][length - 1 - i];
  }
  for (auto& g : synthesis_)
    for (double& v : g) v /= main_tap;
}

std::string PqmfBank::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << "# pqmf n_bands=" << n_bands_ << " taps=" << taps() << " cutoff=" << cutoff_
     << " group_delay=" << group_delay() << "\n";
  for (std::size_t n = 0; n < prototype_.size(); ++n) os << n << ' ' << prototype_[n] << '\n';
  return os.str();
}

Subbands pqmf_analyze(const dsp::Waveform& wave, const PqmfBank& bank) {
  const std::size_t m = bank.n_bands();
  const std::size_t len = (wave.size() + m - 1) / m;
  Subbands out(m, std::vector<float>(len, 0.0f));
  const auto taps = static_cast<std::ptrdiff_t>(bank.taps());
  for (std::size_t k = 0; k < m; ++k) {
    const auto& h = bank.analysis(k);
    for (std::size_t j = 0; j < len; ++j) {
      const auto n = static_cast<std::ptrdiff_t>(j * m);
      double acc = 0.0;
      const std::ptrdiff_t i_max = std::min<std::ptrdiff_t>(taps - 1, n);
      for (std::ptrdiff_t i = 0; i <= i_max; ++i) {
        const auto idx = static_cast<std::size_t>(n - i);
        if (idx < wave.size()) acc += h[static_cast<std::size_t>(i)] * wave.samples[idx];
      }
      out[k][j] = static_cast<float>(acc);
    }
  }
  return out;
}

dsp::Waveform pqmf_synthesize(const Subbands& bands, const PqmfBank& bank) {
  const std::size_t m = bank.n_bands();
  if (bands.size() != m) {
    throw ShapeError("pqmf_synthesize: expected " + std::to_string(m) + " bands, got " +
                     std::to_string(bands.size()));
  }
  const std::size_t len = bands.front().size();
  for (const auto& b : bands) {
    if (b.size() != len) throw ShapeError("pqmf_synthesize: bands differ in length");
  }
  const std::size_t n_out = len * m;
  std::vector<double> acc(n_out, 0.0);
  const std::size_t taps = bank.taps();
  for (std::size_t k = 0; k < m; ++k) {
    const auto& g = bank.synthesis(k);
    for (std::size_t j = 0; j < len; ++j) {
      const double v = bands[k][j] * static_cast<double>(m);
      if (v == 0.0) continue;
      const std::size_t start = j * m;
      const std::size_t stop = std::min(n_out, start + taps);
      for (std::size_t n = start; n < stop; ++n) acc[n] += v * g[n - start];
    }
  }
  std::vector<float> out(n_out);
  std::transform(acc.begin(), acc.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return dsp::Waveform(std::move(out));
}

}  // namespace voxmend::fb
