#include "avicurate/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <vector>

#include "avicurate/error.hpp"
#include "avicurate/fs_util.hpp"
#include "detail/ffmpeg_codec.hpp"

namespace avicurate {

namespace fs = std::filesystem;

std::string_view to_string(Quality q) noexcept {
  switch (q) {
    case Quality::A: return "A";
    case Quality::B: return "B";
    case Quality::C: return "C";
    case Quality::D: return "D";
    case Quality::E: return "E";
    case Quality::Unrated: return "unrated";
  }
  return "unrated";
}

Quality parse_quality(std::string_view s) noexcept {
  if (s.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(s[0]))) {
      case 'A': return Quality::A;
      case 'B': return Quality::B;
      case 'C': return Quality::C;
      case 'D': return Quality::D;
      case 'E': return Quality::E;
      default: break;
    }
  }
  return Quality::Unrated;
}

namespace {

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct WavFormat {
  std::uint16_t tag = 0;  // 1 = PCM, 3 = IEEE float
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
};

struct WavView {
  WavFormat fmt;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
};

bool is_riff_wave(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
         std::memcmp(bytes.data() + 8, "WAVE", 4) == 0;
}

WavView parse_wav(const std::vector<unsigned char>& bytes, const fs::path& path) {
  WavView v;
  bool have_fmt = false;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) break;
      v.fmt.tag = le16(bytes.data() + body);
      v.fmt.channels = le16(bytes.data() + body + 2);
      v.fmt.rate = le32(bytes.data() + body + 4);
      v.fmt.bits = le16(bytes.data() + body + 14);
      if (v.fmt.tag == 0xFFFE && size >= 40 && body + 26 <= bytes.size()) {
        v.fmt.tag = le16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      v.data_offset = body;
      v.data_size = std::min<std::size_t>(size, bytes.size() - body);
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data || v.fmt.channels == 0 || v.fmt.rate == 0) {
    throw Error(ErrorCode::UndecodableFile, "malformed WAV: " + path.string());
  }
  const bool pcm_ok = v.fmt.tag == 1 && (v.fmt.bits == 8 || v.fmt.bits == 16 || v.fmt.bits == 24 || v.fmt.bits == 32);
  const bool float_ok = v.fmt.tag == 3 && (v.fmt.bits == 32 || v.fmt.bits == 64);
  if (!pcm_ok && !float_ok) {
    throw Error(ErrorCode::UndecodableFile, "unsupported WAV encoding in " + path.string());
  }
  return v;
}

double wav_sample(const unsigned char* p, const WavFormat& f) {
  if (f.tag == 3) {
    if (f.bits == 32) {
      float x;
      std::memcpy(&x, p, 4);
      return x;
    }
    double x;
    std::memcpy(&x, p, 8);
    return x;
  }
  switch (f.bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default: return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UndecodableFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ClipBuffer decode_wav(const std::vector<unsigned char>& bytes, const fs::path& path) {
  const WavView v = parse_wav(bytes, path);
  const std::size_t frame_bytes = static_cast<std::size_t>(v.fmt.bits / 8) * v.fmt.channels;
  const std::size_t frames = v.data_size / frame_bytes;
  if (frames == 0) throw Error(ErrorCode::ZeroLengthAudio, path.string());
  ClipBuffer out;
  out.sample_rate = static_cast<int>(v.fmt.rate);
  out.samples.resize(static_cast<Eigen::Index>(frames));
  const unsigned char* base = bytes.data() + v.data_offset;
  const std::size_t step = v.fmt.bits / 8;
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* frame = base + i * frame_bytes;
    if (v.fmt.channels == 1) {
      out.samples[static_cast<Eigen::Index>(i)] = static_cast<float>(wav_sample(frame, v.fmt));
    } else {
      double acc = 0.0;
      for (std::size_t c = 0; c < v.fmt.channels; ++c) acc += wav_sample(frame + c * step, v.fmt);
      out.samples[static_cast<Eigen::Index>(i)] = static_cast<float>(acc / v.fmt.channels);
    }
  }
  return out;
}

bool has_wav_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav" || ext == ".wave";
}

}  // namespace

ClipBuffer decode_mono(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::UndecodableFile, "no such file " + path.string());
  if (has_wav_extension(path)) {
    const auto bytes = slurp(path);
    if (is_riff_wave(bytes)) return decode_wav(bytes, path);
  }
  return detail::ffmpeg_decode_mono(path);
}

ClipBuffer decode_and_resample(const fs::path& path, int target_rate) {
  ClipBuffer native = decode_mono(path);
  if (native.sample_rate == target_rate) return native;
  ClipBuffer out;
  out.sample_rate = target_rate;
  out.samples = resample(native.samples, native.sample_rate, target_rate);
  if (out.empty()) throw Error(ErrorCode::ZeroLengthAudio, path.string());
  return out;
}

double probe_duration(const fs::path& path) {
  if (has_wav_extension(path)) {
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> head(4096);
    in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    if (is_riff_wave(head)) {
      // Header may claim more data than the prefix we read; size from the file.
      std::vector<unsigned char> probe = head;
      try {
        const WavView v = parse_wav(probe, path);
        const auto file_size = fs::file_size(path);
        const std::size_t avail = file_size > v.data_offset ? file_size - v.data_offset : 0;
        std::uint32_t declared = le32(head.data() + v.data_offset - 4);
        const std::size_t data = std::min<std::size_t>(declared, avail);
        const std::size_t frame_bytes = static_cast<std::size_t>(v.fmt.bits / 8) * v.fmt.channels;
        return static_cast<double>(data / frame_bytes) / v.fmt.rate;
      } catch (const Error&) {
      }
    }
  }
  return decode_mono(path).duration_s();
}

// ---------------------------------------------------------------------------
// Resampling

PolyphaseResampler::PolyphaseResampler(int from_rate, int to_rate, int zero_crossings, double rolloff,
                                       double kaiser_beta) {
  if (from_rate <= 0 || to_rate <= 0) throw Error(ErrorCode::InvalidArgument, "sample rates must be positive");
  const int g = std::gcd(from_rate, to_rate);
  up_ = to_rate / g;
  down_ = from_rate / g;
  if (up_ == down_) return;

  // Cutoff relative to the input Nyquist frequency.
  const double cutoff = rolloff * std::min(1.0, static_cast<double>(up_) / down_);
  const double half = zero_crossings / cutoff;
  half_width_ = static_cast<int>(std::ceil(half));
  const double i0_beta = std::cyl_bessel_i(0.0, kaiser_beta);

  taps_.resize(up_, 2 * half_width_ + 1);
  for (int p = 0; p < up_; ++p) {
    const double frac = static_cast<double>(p) / up_;
    for (int d = -half_width_; d <= half_width_; ++d) {
      // Kernel evaluated at the distance between output time and input sample.
      const double tau = frac - d;
      double h = 0.0;
      if (std::abs(tau) < half) {
        const double x = cutoff * tau;
        const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        const double r = tau / half;
        const double w = std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
        h = cutoff * sinc * w;
      }
      taps_(p, d + half_width_) = h;
    }
  }
}

Eigen::Index PolyphaseResampler::output_size(Eigen::Index input_size) const {
  return (input_size * up_ + down_ - 1) / down_;
}

Signal<float> PolyphaseResampler::operator()(const Eigen::Ref<const Signal<float>>& in) const {
  if (up_ == down_) return in;
  const Eigen::Index n_out = output_size(in.size());
  const Eigen::Index n_in = in.size();
  Signal<float> out(n_out);
  for (Eigen::Index n = 0; n < n_out; ++n) {
    const std::int64_t pos = static_cast<std::int64_t>(n) * down_;
    const Eigen::Index base = static_cast<Eigen::Index>(pos / up_);
    const Eigen::Index phase = static_cast<Eigen::Index>(pos % up_);
    const Eigen::Index lo = std::max<Eigen::Index>(0, base - half_width_);
    const Eigen::Index hi = std::min<Eigen::Index>(n_in - 1, base + half_width_);
    double acc = 0.0;
    for (Eigen::Index j = lo; j <= hi; ++j) {
      acc += static_cast<double>(in[j]) * taps_(phase, j - base + half_width_);
    }
    out[n] = static_cast<float>(acc);
  }
  return out;
}

Signal<float> resample(const Eigen::Ref<const Signal<float>>& in, int from_rate, int to_rate) {
  return PolyphaseResampler(from_rate, to_rate)(in);
}

// ---------------------------------------------------------------------------
// Encoding

void write_wav(const ClipBuffer& buf, const fs::path& path) {
  const std::uint32_t n = static_cast<std::uint32_t>(buf.size());
  const std::uint32_t data_bytes = n * 2;
  std::vector<unsigned char> out(44 + static_cast<std::size_t>(data_bytes));
  auto put16 = [&](std::size_t at, std::uint16_t v) {
    out[at] = static_cast<unsigned char>(v & 0xff);
    out[at + 1] = static_cast<unsigned char>(v >> 8);
  };
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[at + i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  };
  std::memcpy(out.data(), "RIFF", 4);
  put32(4, 36 + data_bytes);
  std::memcpy(out.data() + 8, "WAVEfmt ", 8);
  put32(16, 16);
  put16(20, 1);
  put16(22, 1);
  put32(24, static_cast<std::uint32_t>(buf.sample_rate));
  put32(28, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put16(32, 2);
  put16(34, 16);
  std::memcpy(out.data() + 36, "data", 4);
  put32(40, data_bytes);
  for (std::uint32_t i = 0; i < n; ++i) {
    put16(44 + 2 * static_cast<std::size_t>(i), static_cast<std::uint16_t>(quantize_pcm16(buf.samples[i])));
  }
  // Write-then-rename: a clip replaced during audit never shows up half
  // written, and hard-linked copies elsewhere keep their old contents.
  write_text_atomic(path, std::string_view(reinterpret_cast<const char*>(out.data()), out.size()));
}

void write_flac(const ClipBuffer& buf, const fs::path& path) {
  Eigen::ArrayXXf ch = buf.samples.max(-1.0f).min(1.0f);
  encode_audio(ch, buf.sample_rate, path);
}

void encode_audio(const Eigen::Ref<const Eigen::ArrayXXf>& channels, int sample_rate, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::ffmpeg_encode(channels, sample_rate, path);
}

}  // namespace avicurate
