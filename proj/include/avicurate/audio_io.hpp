#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace avicurate {

inline constexpr int kSampleRate = 16000;
inline constexpr Eigen::Index kClipSamples = 3 * kSampleRate;

template <typename Scalar>
using Signal = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// Mono audio at a known rate. Everything downstream of ingest sees 16 kHz.
template <typename Scalar>
struct BasicClip {
  Signal<Scalar> samples;
  int sample_rate = kSampleRate;

  Eigen::Index size() const { return samples.size(); }
  bool empty() const { return samples.size() == 0; }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

using ClipBuffer = BasicClip<float>;

enum class Quality { A, B, C, D, E, Unrated };

std::string_view to_string(Quality q) noexcept;
Quality parse_quality(std::string_view s) noexcept;

struct RecordingMeta {
  std::int64_t catalog_id = 0;
  std::string species;
  std::string english_name;
  Quality quality = Quality::Unrated;
  std::optional<double> latitude;
  std::optional<double> longitude;
  std::string country;
  std::string license;
  std::string source_url;
  double duration_s = 0.0;
};

// Multichannel input is averaged to mono, then rate-converted with the
// polyphase resampler below. No gain is applied anywhere on this path.
ClipBuffer decode_and_resample(const std::filesystem::path& path, int target_rate = kSampleRate);

// Mono-averaged samples at the file's native rate.
ClipBuffer decode_mono(const std::filesystem::path& path);

// Duration in seconds without decoding the payload where the container allows it.
double probe_duration(const std::filesystem::path& path);

// Kaiser-windowed sinc, evaluated as one filter phase per output position
// modulo the reduced up/down ratio. Identity when the rates match.
class PolyphaseResampler {
 public:
  PolyphaseResampler(int from_rate, int to_rate, int zero_crossings = 24, double rolloff = 0.945,
                     double kaiser_beta = 8.6);

  Signal<float> operator()(const Eigen::Ref<const Signal<float>>& in) const;

  Eigen::Index output_size(Eigen::Index input_size) const;
  int up() const { return up_; }
  int down() const { return down_; }

 private:
  int up_ = 1;
  int down_ = 1;
  int half_width_ = 0;
  // phases × taps; row p holds taps for input offsets -half_width_..half_width_.
  Eigen::MatrixXd taps_;
};

Signal<float> resample(const Eigen::Ref<const Signal<float>>& in, int from_rate, int to_rate);

// Zeros split evenly around the original samples; the extra zero of an odd
// split goes to the tail.
template <typename Scalar>
BasicClip<Scalar> zero_pad_to(const BasicClip<Scalar>& buf, Eigen::Index target_samples);

void write_wav(const ClipBuffer& buf, const std::filesystem::path& path);

// Lossless 16-bit FLAC, mono. Backed by libavcodec.
void write_flac(const ClipBuffer& buf, const std::filesystem::path& path);

// Generic encoder for synthetic fixtures (container picked from the extension);
// columns are channels.
void encode_audio(const Eigen::Ref<const Eigen::ArrayXXf>& channels, int sample_rate,
                  const std::filesystem::path& path);

// 16-bit quantization used by write_wav: round(x * 32768), saturated.
inline std::int16_t quantize_pcm16(float x) {
  const double v = static_cast<double>(x) * 32768.0;
  const double r = v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5);
  if (r > 32767.0) return 32767;
  if (r < -32768.0) return -32768;
  return static_cast<std::int16_t>(r);
}

}  // namespace avicurate

#include "avicurate/detail/audio_io_impl.hpp"
