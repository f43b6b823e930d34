#include "portmon/dsp.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "portmon/util.hpp"

namespace portmon::dsp {

using util::kPi;

double bessel_i0(double x) {
  const double y = x * x / 4.0;
  double sum = 1.0;
  double term = 1.0;
  for (int k = 1; k < 1000; ++k) {
    term *= y / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double kaiser_beta_for_attenuation(double atten_db) {
  if (atten_db > 50.0) return 0.1102 * (atten_db - 8.7);
  if (atten_db >= 21.0)
    return 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0);
  return 0.0;
}

FirSpec design_kaiser_fir(int num_taps, double cutoff_hz, double sample_rate_hz,
                          double stopband_atten_db) {
  if (num_taps < 1) throw std::invalid_argument("design_kaiser_fir: num_taps must be >= 1");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0))
    throw std::invalid_argument("design_kaiser_fir: cutoff must lie in (0, sample_rate/2)");

  FirSpec spec;
  spec.num_taps = num_taps;
  spec.cutoff_hz = cutoff_hz;
  spec.sample_rate_hz = sample_rate_hz;
  spec.kaiser_beta = kaiser_beta_for_attenuation(stopband_atten_db);
  spec.coefficients.assign(static_cast<std::size_t>(num_taps), 0.0);

  const int order = num_taps - 1;
  if (order == 0) {
    spec.coefficients[0] = 1.0;
    return spec;
  }

  const double norm_cut = cutoff_hz / sample_rate_hz;
  const double i0_beta = bessel_i0(spec.kaiser_beta);
  // Compute the lower half and mirror; keeps the taps exactly symmetric.
  for (int n = 0; n <= order / 2; ++n) {
    const double m = n - order / 2.0;
    const double x = 2.0 * kPi * norm_cut * m;
    const double sinc = std::fabs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
    const double r = 2.0 * n / order - 1.0;
    const double w = bessel_i0(spec.kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
    const double h = 2.0 * norm_cut * sinc * w;
    spec.coefficients[static_cast<std::size_t>(n)] = h;
    spec.coefficients[static_cast<std::size_t>(order - n)] = h;
  }

  double sum = 0.0;
  for (double v : spec.coefficients) sum += v;
  for (double& v : spec.coefficients) v /= sum;
  return spec;
}

double fir_magnitude_at(const FirSpec& fir, double f_hz) {
  const double w = 2.0 * kPi * f_hz / fir.sample_rate_hz;
  std::complex<double> acc{0.0, 0.0};
  for (int n = 0; n < fir.num_taps; ++n)
    acc += fir.coefficients[static_cast<std::size_t>(n)] *
           std::exp(std::complex<double>(0.0, -w * n));
  return std::abs(acc);
}

void write_coefficients(const std::string& path, const FirSpec& fir) {
  std::string out;
  for (double c : fir.coefficients) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.16e\n", c);
    out += buf;
  }
  util::write_text_file(path, out);
}

FirDecimator::FirDecimator(FirSpec fir, int factor) : fir_(std::move(fir)), factor_(factor) {
  if (factor_ < 1) throw std::invalid_argument("FirDecimator: factor must be >= 1");
  if (fir_.num_taps < 1 || fir_.coefficients.size() != static_cast<std::size_t>(fir_.num_taps))
    throw std::invalid_argument("FirDecimator: malformed FirSpec");
  reset();
}

void FirDecimator::reset() {
  const auto n = static_cast<std::size_t>(fir_.num_taps);
  hist_x_.assign(n, 0.0);
  hist_y_.assign(n, 0.0);
  hist_z_.assign(n, 0.0);
  pos_ = n - 1;
  phase_ = 0;
}

double FirDecimator::convolve(const std::vector<double>& hist) const {
  // y = sum_k h[k] * x[n-k], accumulated in ascending k so the result is
  // bit-compatible with a naive full convolution of the same input.
  const auto taps = static_cast<std::size_t>(fir_.num_taps);
  double acc = 0.0;
  std::size_t idx = pos_;
  for (std::size_t k = 0; k < taps; ++k) {
    acc += fir_.coefficients[k] * hist[idx];
    idx = (idx == 0) ? taps - 1 : idx - 1;
  }
  return acc;
}

std::optional<AccelFrame> FirDecimator::push(const AccelFrame& in) {
  const auto taps = static_cast<std::size_t>(fir_.num_taps);
  pos_ = (pos_ + 1 == taps) ? 0 : pos_ + 1;
  hist_x_[pos_] = in.ax;
  hist_y_[pos_] = in.ay;
  hist_z_[pos_] = in.az;
  if (++phase_ < factor_) return std::nullopt;
  phase_ = 0;
  AccelFrame out;
  out.t = in.t;
  out.ax = convolve(hist_x_);
  out.ay = convolve(hist_y_);
  out.az = convolve(hist_z_);
  return out;
}

TiltSample estimate_tilt(const AccelFrame& frame) {
  if (frame.ax == 0.0 && frame.ay == 0.0 && frame.az == 0.0)
    throw std::domain_error("estimate_tilt: all-zero acceleration vector");
  constexpr double kRadToDeg = 180.0 / kPi;
  TiltSample out;
  out.t = frame.t;
  out.pitch_deg = std::atan2(frame.ax, std::sqrt(frame.ay * frame.ay + frame.az * frame.az)) * kRadToDeg;
  out.roll_deg = std::atan2(frame.ay, std::sqrt(frame.ax * frame.ax + frame.az * frame.az)) * kRadToDeg;
  return out;
}

TiltLowpass::TiltLowpass(double cutoff_hz, double sample_rate_hz) {
  if (!(cutoff_hz > 0.0)) throw std::invalid_argument("TiltLowpass: cutoff must be positive");
  if (!(cutoff_hz < sample_rate_hz / 2.0))
    throw std::invalid_argument("TiltLowpass: cutoff must be below Nyquist");
  alpha_ = std::exp(-2.0 * kPi * cutoff_hz / sample_rate_hz);
}

TiltSample TiltLowpass::push(const TiltSample& in) {
  if (!primed_) {
    pitch_ = in.pitch_deg;
    roll_ = in.roll_deg;
    primed_ = true;
  } else {
    pitch_ = alpha_ * pitch_ + (1.0 - alpha_) * in.pitch_deg;
    roll_ = alpha_ * roll_ + (1.0 - alpha_) * in.roll_deg;
  }
  return TiltSample{in.t, pitch_, roll_};
}

void TiltLowpass::reset() {
  primed_ = false;
  pitch_ = roll_ = 0.0;
}

NoiseStats noise_rmse(const std::vector<double>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("noise_rmse: need at least 2 samples");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double acc = 0.0;
  for (double v : samples) acc += (v - mean) * (v - mean);
  NoiseStats out;
  out.count = samples.size();
  out.rmse = std::sqrt(acc / static_cast<double>(samples.size()));
  return out;
}

}  // namespace portmon::dsp
