#include <doctest.h>

#include <unsupported/Eigen/FFT>

#include <complex>
#include <fstream>
#include <vector>

#include "avicurate/audio_io.hpp"
#include "avicurate/error.hpp"
#include "synth.hpp"

using namespace avicurate;

namespace {

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Index of the largest magnitude bin of a zero-padded FFT.
Eigen::Index spectral_peak_bin(const Signal<float>& x, int n_fft) {
  std::vector<double> frame(n_fft, 0.0);
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(x.size(), n_fft); ++i) frame[i] = x[i];
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, frame);
  Eigen::Index best = 0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = static_cast<Eigen::Index>(k);
  }
  return best;
}

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    FAIL("expected ", to_string(code));
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_CASE("44.1 kHz stereo input becomes 48000 mono samples at 16 kHz") {
  synth::TempDir dir;
  const auto left = synth::sine(440.0, 3.0, 0.5, 44100);
  const auto right = synth::sine(660.0, 3.0, 0.25, 44100);
  Eigen::ArrayXXf stereo(left.size(), 2);
  stereo.col(0) = left.samples;
  stereo.col(1) = right.samples;
  encode_audio(stereo, 44100, dir / "stereo.wav");

  const ClipBuffer out = decode_and_resample(dir / "stereo.wav");
  CHECK(out.sample_rate == 16000);
  CHECK(out.size() == 48000);
  CHECK(out.samples.allFinite());
}

TEST_CASE("stereo channels are averaged before anything else") {
  synth::TempDir dir;
  Eigen::ArrayXXf stereo(1600, 2);
  stereo.col(0).setConstant(0.5f);
  stereo.col(1).setConstant(-0.25f);
  encode_audio(stereo, 16000, dir / "dc.wav");
  const ClipBuffer out = decode_and_resample(dir / "dc.wav");
  CHECK(out.size() == 1600);
  CHECK(out.samples.maxCoeff() == doctest::Approx(0.125).epsilon(1e-4));
  CHECK(out.samples.minCoeff() == doctest::Approx(0.125).epsilon(1e-4));
}

TEST_CASE("16 kHz mono input passes through bit-identically") {
  synth::TempDir dir;
  ClipBuffer buf = synth::white_noise(1.0, 0.8, 7);
  write_wav(buf, dir / "in.wav");
  const ClipBuffer once = decode_and_resample(dir / "in.wav");
  REQUIRE(once.size() == buf.size());
  for (Eigen::Index i = 0; i < buf.size(); ++i) {
    REQUIRE(once.samples[i] == static_cast<float>(quantize_pcm16(buf.samples[i]) / 32768.0));
  }
  // Identical bytes in, identical samples out.
  const ClipBuffer twice = decode_and_resample(dir / "in.wav");
  CHECK((once.samples == twice.samples).all());
}

TEST_CASE("1 kHz tone resampled from 44.1 kHz keeps its spectral peak") {
  const auto tone = synth::sine(1000.0, 3.0, 0.5, 44100);
  const Signal<float> out = resample(tone.samples, 44100, 16000);
  REQUIRE(out.size() == 48000);
  constexpr int n_fft = 32768;
  const double expected_bin = 1000.0 * n_fft / 16000.0;
  CHECK(std::abs(static_cast<double>(spectral_peak_bin(out, n_fft)) - expected_bin) <= 1.0);
  // Amplitude survives the passband (steady-state region).
  CHECK(out.segment(4000, 40000).abs().maxCoeff() == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("content above the new Nyquist frequency is rejected") {
  const auto tone = synth::sine(11000.0, 1.0, 0.5, 44100);
  const Signal<float> out = resample(tone.samples, 44100, 16000);
  const double residual = std::sqrt(out.segment(1000, out.size() - 2000).cast<double>().square().mean());
  CHECK(residual < 0.5 * 1e-3);
}

TEST_CASE("resampler output length follows the reduced ratio") {
  const PolyphaseResampler r(44100, 16000);
  CHECK(r.up() == 160);
  CHECK(r.down() == 441);
  CHECK(r.output_size(132300) == 48000);
  CHECK(r.output_size(1) == 1);
  const PolyphaseResampler same(16000, 16000);
  Signal<float> x = Signal<float>::Random(100);
  CHECK((same(x) == x).all());
}

TEST_CASE("zero_pad_to centres the clip") {
  SUBCASE("2 s to 3 s leaves 8000 zeros on each side") {
    ClipBuffer two = synth::silence(2.0);
    two.samples.setConstant(0.25f);
    const ClipBuffer out = zero_pad_to(two, 48000);
    REQUIRE(out.size() == 48000);
    CHECK((out.samples.head(8000) == 0.0f).all());
    CHECK((out.samples.tail(8000) == 0.0f).all());
    CHECK((out.samples.segment(8000, 32000) == 0.25f).all());
  }
  SUBCASE("already at target is unchanged") {
    const ClipBuffer three = synth::white_noise(3.0, 0.5, 1);
    CHECK((zero_pad_to(three, 48000).samples == three.samples).all());
  }
  SUBCASE("empty buffer becomes all zeros") {
    ClipBuffer empty;
    const ClipBuffer out = zero_pad_to(empty, 48000);
    CHECK(out.size() == 48000);
    CHECK((out.samples == 0.0f).all());
  }
  SUBCASE("energy is preserved exactly") {
    const ClipBuffer x = synth::white_noise(1.3, 0.7, 3);
    const ClipBuffer out = zero_pad_to(x, 48001);
    CHECK(out.samples.cast<double>().square().sum() == x.samples.cast<double>().square().sum());
  }
  SUBCASE("longer input is an error") {
    expect_code(ErrorCode::AlreadyLonger, [] { zero_pad_to(synth::silence(4.0), 48000); });
  }
}

TEST_CASE("write_wav produces a canonical 16-bit mono header") {
  synth::TempDir dir;
  ClipBuffer buf = synth::silence(3.0);
  buf.samples[0] = 1.0f;
  buf.samples[1] = -1.0f;
  buf.samples[2] = 0.5f;
  write_wav(buf, dir / "x.wav");
  const auto bytes = file_bytes(dir / "x.wav");
  REQUIRE(bytes.size() == 96044u);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RIFF");
  CHECK(std::string(bytes.begin() + 8, bytes.begin() + 16) == "WAVEfmt ");
  auto u16 = [&](std::size_t at) { return bytes[at] | (bytes[at + 1] << 8); };
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(u16(at)) | (static_cast<std::uint32_t>(u16(at + 2)) << 16);
  };
  CHECK(u32(4) == 96036u);
  CHECK(u32(16) == 16u);
  CHECK(u16(20) == 1);
  CHECK(u16(22) == 1);
  CHECK(u32(24) == 16000u);
  CHECK(u32(28) == 32000u);
  CHECK(u16(32) == 2);
  CHECK(u16(34) == 16);
  CHECK(std::string(bytes.begin() + 36, bytes.begin() + 40) == "data");
  CHECK(u32(40) == 96000u);
  CHECK(static_cast<std::int16_t>(u16(44)) == 32767);
  CHECK(static_cast<std::int16_t>(u16(46)) == -32768);
  CHECK(static_cast<std::int16_t>(u16(48)) == 16384);
}

TEST_CASE("WAV round trip stays within one LSB") {
  synth::TempDir dir;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ClipBuffer buf = synth::white_noise(1.25, 1.0, seed);
    buf.samples[0] = 1.0f;
    buf.samples[1] = -1.0f;
    write_wav(buf, dir / "rt.wav");
    const ClipBuffer back = decode_mono(dir / "rt.wav");
    REQUIRE(back.size() == buf.size());
    CHECK((back.samples - buf.samples).abs().maxCoeff() <= 1.0f / 32768.0f);
  }
}

TEST_CASE("FLAC intermediate store is lossless at 16 bits") {
  synth::TempDir dir;
  const ClipBuffer buf = synth::white_noise(2.0, 0.6, 11);
  write_flac(buf, dir / "x.flac");
  const ClipBuffer back = decode_and_resample(dir / "x.flac");
  REQUIRE(back.size() == buf.size());
  CHECK(back.sample_rate == 16000);
  CHECK((back.samples - buf.samples).abs().maxCoeff() <= 1.0f / 32768.0f);
  CHECK(probe_duration(dir / "x.flac") == doctest::Approx(2.0));
}

TEST_CASE("MP3 sources decode, downmix and resample") {
  synth::TempDir dir;
  const auto tone = synth::sine(1000.0, 4.0, 0.4, 44100);
  Eigen::ArrayXXf stereo(tone.size(), 2);
  stereo.col(0) = tone.samples;
  stereo.col(1) = tone.samples;
  encode_audio(stereo, 44100, dir / "x.mp3");
  const ClipBuffer out = decode_and_resample(dir / "x.mp3");
  CHECK(out.sample_rate == 16000);
  CHECK(out.duration_s() == doctest::Approx(4.0).epsilon(0.05));
  constexpr int n_fft = 32768;
  CHECK(std::abs(static_cast<double>(spectral_peak_bin(out.samples.segment(8000, 40000), n_fft)) -
                 1000.0 * n_fft / 16000.0) <= 1.0);
}

TEST_CASE("probe_duration reads WAV headers") {
  synth::TempDir dir;
  write_wav(synth::silence(2.5), dir / "a.wav");
  CHECK(probe_duration(dir / "a.wav") == doctest::Approx(2.5));
}

TEST_CASE("decode errors") {
  synth::TempDir dir;
  expect_code(ErrorCode::UndecodableFile, [&] { decode_and_resample(dir / "missing.wav"); });
  {
    std::ofstream f(dir / "junk.mp3", std::ios::binary);
    f << "this is not audio at all";
  }
  expect_code(ErrorCode::UndecodableFile, [&] { decode_and_resample(dir / "junk.mp3"); });
  write_wav(ClipBuffer{}, dir / "empty.wav");
  expect_code(ErrorCode::ZeroLengthAudio, [&] { decode_and_resample(dir / "empty.wav"); });
}

TEST_CASE("quality ratings parse") {
  CHECK(parse_quality("A") == Quality::A);
  CHECK(parse_quality("e") == Quality::E);
  CHECK(parse_quality("no score") == Quality::Unrated);
  CHECK(to_string(Quality::Unrated) == "unrated");
}
