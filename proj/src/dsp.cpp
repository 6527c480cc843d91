#include "avicurate/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <numbers>
#include <vector>

namespace avicurate {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd mel_filterbank(int n_mels, int fft_size, int sample_rate, double fmin, double fmax) {
  if (n_mels <= 0 || fft_size <= 0 || fmax <= fmin) throw Error(ErrorCode::InvalidArgument, "bad mel filterbank shape");
  const int n_bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  Eigen::VectorXd edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double up = (f - left) / (centre - left);
      const double down = (right - f) / (right - centre);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

Eigen::VectorXd hann(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Pads buffers shorter than one frame so short clips still yield a frame for
// the summary features.
ClipBuffer at_least_one_frame(const ClipBuffer& buf, int fft_size) {
  if (buf.size() >= fft_size) return buf;
  ClipBuffer padded;
  padded.sample_rate = buf.sample_rate;
  padded.samples = Signal<float>::Zero(fft_size);
  padded.samples.head(buf.size()) = buf.samples;
  return padded;
}

}  // namespace

Eigen::MatrixXd power_spectrogram(const ClipBuffer& buf, int fft_size, int hop) {
  if (!is_power_of_two(fft_size)) throw Error(ErrorCode::InvalidArgument, "fft_size must be a power of two");
  if (hop <= 0 || hop > fft_size) throw Error(ErrorCode::InvalidArgument, "hop must be in (0, fft_size]");
  const Eigen::Index n_frames = frame_count(buf.size(), fft_size, hop);
  if (n_frames == 0) {
    throw Error(ErrorCode::BufferTooShort,
                std::to_string(buf.size()) + " samples < one frame of " + std::to_string(fft_size));
  }
  const int n_bins = fft_size / 2 + 1;
  const Eigen::VectorXd window = hann(fft_size);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(fft_size);
  std::vector<std::complex<double>> spectrum;
  Eigen::MatrixXd power(n_bins, n_frames);
  for (Eigen::Index f = 0; f < n_frames; ++f) {
    const Eigen::Index start = f * hop;
    for (int i = 0; i < fft_size; ++i) frame[i] = static_cast<double>(buf.samples[start + i]) * window[i];
    fft.fwd(spectrum, frame);
    for (int k = 0; k < n_bins; ++k) power(k, f) = std::norm(spectrum[k]);
  }
  return power;
}

MelSpectrogram mel_spectrogram(const ClipBuffer& buf, int n_mels, int fft_size, int hop) {
  MelSpectrogram out;
  out.fft_size = fft_size;
  out.hop = hop;
  out.sample_rate = buf.sample_rate;
  const Eigen::MatrixXd power = power_spectrogram(buf, fft_size, hop);
  out.frames = mel_filterbank(n_mels, fft_size, buf.sample_rate, 0.0, buf.sample_rate / 2.0) * power;
  return out;
}

double spectral_centroid_mean(const ClipBuffer& buf, int fft_size, int hop) {
  if (buf.empty()) throw Error(ErrorCode::EmptyBuffer, "centroid of empty buffer");
  const Eigen::MatrixXd magnitude = power_spectrogram(at_least_one_frame(buf, fft_size), fft_size, hop).cwiseSqrt();
  const Eigen::VectorXd freqs =
      Eigen::VectorXd::LinSpaced(magnitude.rows(), 0.0, buf.sample_rate / 2.0);
  double total = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index f = 0; f < magnitude.cols(); ++f) {
    const double mass = magnitude.col(f).sum();
    if (mass <= 0.0) continue;
    total += freqs.dot(magnitude.col(f)) / mass;
    ++used;
  }
  return used ? total / used : 0.0;
}

Eigen::VectorXd spectral_contrast_bands(const ClipBuffer& buf, int fft_size, int hop) {
  if (buf.empty()) throw Error(ErrorCode::EmptyBuffer, "contrast of empty buffer");
  const Eigen::MatrixXd magnitude = power_spectrogram(at_least_one_frame(buf, fft_size), fft_size, hop).cwiseSqrt();
  const double nyquist = buf.sample_rate / 2.0;
  const double bin_hz = static_cast<double>(buf.sample_rate) / fft_size;

  // Band b spans [250 * 2^(b-1), 250 * 2^b) Hz; band 0 starts at DC and the
  // last band runs through Nyquist.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> bands;
  for (int b = 0; b < kContrastBands; ++b) {
    const double lo = b == 0 ? 0.0 : 250.0 * std::pow(2.0, b - 1);
    const double hi = b == kContrastBands - 1 ? nyquist + bin_hz : std::min(250.0 * std::pow(2.0, b), nyquist);
    const auto first = static_cast<Eigen::Index>(std::ceil(lo / bin_hz));
    const auto last = std::min<Eigen::Index>(magnitude.rows(), static_cast<Eigen::Index>(std::ceil(hi / bin_hz)));
    bands.emplace_back(first, std::max(first, last));
  }

  constexpr double kFloor = 1e-10;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(kContrastBands);
  Eigen::Index used = 0;
  std::vector<double> sorted;
  for (Eigen::Index f = 0; f < magnitude.cols(); ++f) {
    if (magnitude.col(f).sum() <= 0.0) continue;
    ++used;
    for (int b = 0; b < kContrastBands; ++b) {
      const auto [first, last] = bands[b];
      const Eigen::Index n = last - first;
      if (n <= 0) continue;
      sorted.assign(magnitude.col(f).data() + first, magnitude.col(f).data() + last);
      std::sort(sorted.begin(), sorted.end());
      const auto q = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(kContrastQuantile * n)));
      double valley = 0.0, crest = 0.0;
      for (Eigen::Index i = 0; i < q; ++i) {
        valley += sorted[i];
        crest += sorted[n - 1 - i];
      }
      valley /= q;
      crest /= q;
      acc[b] += 10.0 * std::log10(std::max(crest, kFloor)) - 10.0 * std::log10(std::max(valley, kFloor));
    }
  }
  return used ? Eigen::VectorXd(acc / static_cast<double>(used)) : acc;
}

double spectral_contrast_mean(const ClipBuffer& buf, int fft_size, int hop) {
  return spectral_contrast_bands(buf, fft_size, hop).mean();
}

bool is_clipped(const ClipBuffer& buf) { return !buf.empty() && peak(buf) >= kClipTrigger; }

ClipBuffer repair_clipping(const ClipBuffer& buf) {
  if (!is_clipped(buf)) return buf;
  const double gain = kRepairedPeak / peak(buf);
  constexpr double span = kRepairedPeak - kLimiterKnee;
  ClipBuffer out = buf;
  out.samples = buf.samples.unaryExpr([gain](float x) {
    const double y = x * gain;
    const double a = std::abs(y);
    if (a <= kLimiterKnee) return static_cast<float>(y);
    const double shaped = kLimiterKnee + span * std::tanh((a - kLimiterKnee) / span);
    return static_cast<float>(std::copysign(shaped, y));
  });
  return out;
}

double dynamic_range(const ClipBuffer& buf, double window_s) {
  if (buf.empty()) throw Error(ErrorCode::EmptyBuffer, "dynamic range of empty buffer");
  const auto win = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(window_s * buf.sample_rate)));
  const Eigen::Index n_windows = std::max<Eigen::Index>(1, buf.size() / win);
  double floor = std::numeric_limits<double>::infinity();
  for (Eigen::Index w = 0; w < n_windows; ++w) {
    const Eigen::Index len = std::min(win, buf.size() - w * win);
    floor = std::min(floor, rms(buf.samples.segment(w * win, len)));
  }
  return peak(buf) - floor;
}

FeatureSummary summarize(const ClipBuffer& buf) {
  FeatureSummary s;
  s.rms = rms(buf);
  s.peak = peak(buf);
  s.dynamic_range = dynamic_range(buf);
  s.mean_centroid = spectral_centroid_mean(buf);
  s.mean_contrast = spectral_contrast_mean(buf);
  return s;
}

}  // namespace avicurate
