#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace portmon::dsp {

// One tri-axial acceleration sample in g on the simulated clock.
struct AccelFrame {
  double t = 0.0;
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;
};

struct TiltSample {
  double t = 0.0;
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
};

struct NoiseStats {
  double rmse = 0.0;
  std::size_t count = 0;
};

// Linear-phase windowed-sinc low-pass, Kaiser window, unity DC gain.
struct FirSpec {
  int num_taps = 0;
  double cutoff_hz = 0.0;
  double sample_rate_hz = 0.0;
  double kaiser_beta = 0.0;
  std::vector<double> coefficients;
};

// Zeroth-order modified Bessel function of the first kind (series expansion).
double bessel_i0(double x);

// Kaiser beta from the target stopband attenuation (the usual empirical fit).
double kaiser_beta_for_attenuation(double atten_db);

// Throws std::invalid_argument on num_taps < 1 or cutoff outside (0, rate/2).
FirSpec design_kaiser_fir(int num_taps, double cutoff_hz, double sample_rate_hz,
                          double stopband_atten_db = 60.0);

// |H(f)| of the tap set evaluated at f_hz.
double fir_magnitude_at(const FirSpec& fir, double f_hz);

// One coefficient per line, plain decimal text.
void write_coefficients(const std::string& path, const FirSpec& fir);

// Streaming filter-and-decimate over tri-axial frames. Single consumer.
// The delay line starts zero-primed, so the first num_taps outputs are a
// startup transient; emits every factor-th filtered sample, stamped with
// the retained input sample's time.
class FirDecimator {
 public:
  explicit FirDecimator(FirSpec fir, int factor = 10);

  std::optional<AccelFrame> push(const AccelFrame& in);
  void reset();

  const FirSpec& fir() const { return fir_; }
  int factor() const { return factor_; }

 private:
  double convolve(const std::vector<double>& hist) const;

  FirSpec fir_;
  int factor_;
  int phase_ = 0;
  std::size_t pos_ = 0;  // index of the most recent write
  std::vector<double> hist_x_, hist_y_, hist_z_;
};

// Pitch/roll from the gravity direction, in degrees. A zero denominator
// resolves to +-90 by the sign of the numerator. Throws std::domain_error
// on an all-zero vector.
TiltSample estimate_tilt(const AccelFrame& frame);

// First-order recursive low-pass on pitch and roll at a fixed input rate.
// Primes on the first sample; unity DC gain.
class TiltLowpass {
 public:
  TiltLowpass(double cutoff_hz, double sample_rate_hz);

  TiltSample push(const TiltSample& in);
  void reset();

  double alpha() const { return alpha_; }

 private:
  double alpha_;
  bool primed_ = false;
  double pitch_ = 0.0;
  double roll_ = 0.0;
};

// RMS of the mean-removed samples. Throws std::invalid_argument on n < 2.
NoiseStats noise_rmse(const std::vector<double>& samples);

}  // namespace portmon::dsp
