#pragma once

#include <Eigen/Core>

#include <cmath>

#include "avicurate/audio_io.hpp"
#include "avicurate/error.hpp"

namespace avicurate {

// Frames are left-aligned with no padding: frame f covers samples
// [f*hop, f*hop + fft_size), and a trailing partial frame is dropped.
inline Eigen::Index frame_count(Eigen::Index n_samples, int fft_size, int hop) {
  return n_samples < fft_size ? 0 : 1 + (n_samples - fft_size) / hop;
}

template <typename Derived>
double rms(const Eigen::ArrayBase<Derived>& x) {
  if (x.size() == 0) throw Error(ErrorCode::EmptyBuffer, "rms of empty buffer");
  return std::sqrt(x.template cast<double>().square().mean());
}

template <typename Derived>
double peak(const Eigen::ArrayBase<Derived>& x) {
  if (x.size() == 0) throw Error(ErrorCode::EmptyBuffer, "peak of empty buffer");
  return static_cast<double>(x.abs().maxCoeff());
}

template <typename Scalar>
double rms(const BasicClip<Scalar>& buf) { return rms(buf.samples); }
template <typename Scalar>
double peak(const BasicClip<Scalar>& buf) { return peak(buf.samples); }

struct MelSpectrogram {
  Eigen::MatrixXd frames;  // n_mels × n_frames, power
  int fft_size = 512;
  int hop = 128;
  int sample_rate = kSampleRate;

  Eigen::Index n_mels() const { return frames.rows(); }
  Eigen::Index n_frames() const { return frames.cols(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters on the HTK mel scale, peak weight 1, spanning
// [fmin, fmax]. Shape n_mels × (fft_size/2 + 1).
Eigen::MatrixXd mel_filterbank(int n_mels, int fft_size, int sample_rate, double fmin, double fmax);

// |STFT|^2 with a periodic Hann window. Shape (fft_size/2 + 1) × n_frames.
Eigen::MatrixXd power_spectrogram(const ClipBuffer& buf, int fft_size, int hop);

MelSpectrogram mel_spectrogram(const ClipBuffer& buf, int n_mels = 128, int fft_size = 512, int hop = 128);

// Magnitude-weighted mean frequency per frame, averaged over frames with
// nonzero energy. 0 Hz for silence.
double spectral_centroid_mean(const ClipBuffer& buf, int fft_size = 512, int hop = 128);

// Sub-band edges used by the contrast feature, in Hz: six octave-spaced
// bands below Nyquist, [0,250) [250,500) ... [4000, sr/2].
inline constexpr int kContrastBands = 6;
inline constexpr double kContrastQuantile = 0.02;

// Per-band peak/valley contrast (dB), averaged over frames with nonzero energy.
Eigen::VectorXd spectral_contrast_bands(const ClipBuffer& buf, int fft_size = 512, int hop = 128);
double spectral_contrast_mean(const ClipBuffer& buf, int fft_size = 512, int hop = 128);

inline constexpr double kClipTrigger = 0.9999;
inline constexpr double kRepairedPeak = 0.95;
inline constexpr double kLimiterKnee = 0.8;

bool is_clipped(const ClipBuffer& buf);

// Peak-scale to 0.95, then a tanh knee above 0.8 so nothing reaches the new
// peak abruptly. Identity unless the buffer is clipped.
ClipBuffer repair_clipping(const ClipBuffer& buf);

// Peak amplitude minus the quietest 100 ms sub-window RMS.
double dynamic_range(const ClipBuffer& buf, double window_s = 0.1);

struct FeatureSummary {
  double rms = 0.0;
  double peak = 0.0;
  double dynamic_range = 0.0;
  double mean_centroid = 0.0;  // Hz
  double mean_contrast = 0.0;  // dB
};

FeatureSummary summarize(const ClipBuffer& buf);

}  // namespace avicurate
