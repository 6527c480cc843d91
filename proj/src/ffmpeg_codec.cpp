#include "detail/ffmpeg_codec.hpp"

extern "C" {
#include <libavcodec/avcodec.h>
#include <libavformat/avformat.h>
#include <libavutil/channel_layout.h>
#include <libavutil/log.h>
#include <libavutil/samplefmt.h>
}

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "avicurate/error.hpp"

namespace avicurate::detail {

namespace fs = std::filesystem;

namespace {

struct FormatInputDeleter {
  void operator()(AVFormatContext* p) const { avformat_close_input(&p); }
};
struct CodecContextDeleter {
  void operator()(AVCodecContext* p) const { avcodec_free_context(&p); }
};
struct FrameDeleter {
  void operator()(AVFrame* p) const { av_frame_free(&p); }
};
struct PacketDeleter {
  void operator()(AVPacket* p) const { av_packet_free(&p); }
};

using FormatInput = std::unique_ptr<AVFormatContext, FormatInputDeleter>;
using CodecContext = std::unique_ptr<AVCodecContext, CodecContextDeleter>;
using Frame = std::unique_ptr<AVFrame, FrameDeleter>;
using Packet = std::unique_ptr<AVPacket, PacketDeleter>;

std::string av_error(int err) {
  char buf[AV_ERROR_MAX_STRING_SIZE] = {0};
  av_strerror(err, buf, sizeof buf);
  return buf;
}

void quiet_logs() {
  static const bool once = [] {
    av_log_set_level(AV_LOG_FATAL);
    return true;
  }();
  (void)once;
}

double read_sample(const AVFrame& f, AVSampleFormat fmt, int channel, int index, int channels) {
  const bool planar = av_sample_fmt_is_planar(fmt);
  const int plane = planar ? channel : 0;
  const int pos = planar ? index : index * channels + channel;
  const uint8_t* data = f.extended_data[plane];
  switch (av_get_packed_sample_fmt(fmt)) {
    case AV_SAMPLE_FMT_U8: return (data[pos] - 128) / 128.0;
    case AV_SAMPLE_FMT_S16: return reinterpret_cast<const int16_t*>(data)[pos] / 32768.0;
    case AV_SAMPLE_FMT_S32: return reinterpret_cast<const int32_t*>(data)[pos] / 2147483648.0;
    case AV_SAMPLE_FMT_S64: return static_cast<double>(reinterpret_cast<const int64_t*>(data)[pos]) / 9223372036854775808.0;
    case AV_SAMPLE_FMT_FLT: return reinterpret_cast<const float*>(data)[pos];
    case AV_SAMPLE_FMT_DBL: return reinterpret_cast<const double*>(data)[pos];
    default: return 0.0;
  }
}

}  // namespace

ClipBuffer ffmpeg_decode_mono(const fs::path& path) {
  quiet_logs();
  AVFormatContext* raw = nullptr;
  if (int rc = avformat_open_input(&raw, path.c_str(), nullptr, nullptr); rc < 0) {
    throw Error(ErrorCode::UndecodableFile, path.string() + ": " + av_error(rc));
  }
  FormatInput fmt(raw);
  if (int rc = avformat_find_stream_info(fmt.get(), nullptr); rc < 0) {
    throw Error(ErrorCode::UndecodableFile, path.string() + ": " + av_error(rc));
  }
  AVCodec* codec = nullptr;  // non-const in the libavformat 58 signature
  const int stream = av_find_best_stream(fmt.get(), AVMEDIA_TYPE_AUDIO, -1, -1, &codec, 0);
  if (stream < 0 || codec == nullptr) throw Error(ErrorCode::UndecodableFile, "no audio stream in " + path.string());

  CodecContext ctx(avcodec_alloc_context3(codec));
  avcodec_parameters_to_context(ctx.get(), fmt->streams[stream]->codecpar);
  if (int rc = avcodec_open2(ctx.get(), codec, nullptr); rc < 0) {
    throw Error(ErrorCode::UndecodableFile, path.string() + ": " + av_error(rc));
  }

  std::vector<float> mono;
  int rate = ctx->sample_rate;
  Packet pkt(av_packet_alloc());
  Frame frame(av_frame_alloc());

  auto drain = [&]() {
    while (true) {
      const int rc = avcodec_receive_frame(ctx.get(), frame.get());
      if (rc == AVERROR(EAGAIN) || rc == AVERROR_EOF) return;
      if (rc < 0) throw Error(ErrorCode::UndecodableFile, path.string() + ": " + av_error(rc));
      const int channels = frame->channels > 0 ? frame->channels : ctx->channels;
      const auto sfmt = static_cast<AVSampleFormat>(frame->format);
      if (frame->sample_rate > 0) rate = frame->sample_rate;
      for (int i = 0; i < frame->nb_samples; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) acc += read_sample(*frame, sfmt, c, i, channels);
        mono.push_back(static_cast<float>(acc / channels));
      }
      av_frame_unref(frame.get());
    }
  };

  while (av_read_frame(fmt.get(), pkt.get()) >= 0) {
    if (pkt->stream_index == stream) {
      const int rc = avcodec_send_packet(ctx.get(), pkt.get());
      if (rc < 0 && rc != AVERROR_INVALIDDATA) {
        av_packet_unref(pkt.get());
        throw Error(ErrorCode::UndecodableFile, path.string() + ": " + av_error(rc));
      }
      drain();
    }
    av_packet_unref(pkt.get());
  }
  avcodec_send_packet(ctx.get(), nullptr);
  drain();

  if (mono.empty()) throw Error(ErrorCode::ZeroLengthAudio, path.string());
  if (rate <= 0) throw Error(ErrorCode::UndecodableFile, "unknown sample rate in " + path.string());
  ClipBuffer out;
  out.sample_rate = rate;
  out.samples = Eigen::Map<const Signal<float>>(mono.data(), static_cast<Eigen::Index>(mono.size()));
  return out;
}

void ffmpeg_encode(const Eigen::Ref<const Eigen::ArrayXXf>& channels, int sample_rate, const fs::path& path) {
  quiet_logs();
  const int n_channels = static_cast<int>(channels.cols());
  AVFormatContext* raw = nullptr;
  if (int rc = avformat_alloc_output_context2(&raw, nullptr, nullptr, path.c_str()); rc < 0 || raw == nullptr) {
    throw Error(ErrorCode::IOFailure, "no muxer for " + path.string());
  }
  std::unique_ptr<AVFormatContext, void (*)(AVFormatContext*)> out(raw, [](AVFormatContext* p) {
    if (p->pb && !(p->oformat->flags & AVFMT_NOFILE)) avio_closep(&p->pb);
    avformat_free_context(p);
  });

  const AVCodec* codec = avcodec_find_encoder(out->oformat->audio_codec);
  if (codec == nullptr) throw Error(ErrorCode::IOFailure, "no encoder for " + path.string());

  CodecContext ctx(avcodec_alloc_context3(codec));
  AVSampleFormat chosen = AV_SAMPLE_FMT_NONE;
  for (AVSampleFormat want : {AV_SAMPLE_FMT_S16, AV_SAMPLE_FMT_S16P, AV_SAMPLE_FMT_FLTP, AV_SAMPLE_FMT_FLT}) {
    for (const AVSampleFormat* f = codec->sample_fmts; f && *f != AV_SAMPLE_FMT_NONE; ++f) {
      if (*f == want) {
        chosen = want;
        break;
      }
    }
    if (chosen != AV_SAMPLE_FMT_NONE) break;
  }
  if (chosen == AV_SAMPLE_FMT_NONE) throw Error(ErrorCode::IOFailure, "encoder lacks a usable sample format");
  ctx->sample_fmt = chosen;
  ctx->sample_rate = sample_rate;
  ctx->channels = n_channels;
  ctx->channel_layout = static_cast<uint64_t>(av_get_default_channel_layout(n_channels));
  ctx->time_base = AVRational{1, sample_rate};
  if (codec->id == AV_CODEC_ID_MP3) ctx->bit_rate = 128000;
  if (out->oformat->flags & AVFMT_GLOBALHEADER) ctx->flags |= AV_CODEC_FLAG_GLOBAL_HEADER;
  if (int rc = avcodec_open2(ctx.get(), codec, nullptr); rc < 0) {
    throw Error(ErrorCode::IOFailure, "encoder open: " + av_error(rc));
  }

  AVStream* st = avformat_new_stream(out.get(), nullptr);
  avcodec_parameters_from_context(st->codecpar, ctx.get());
  st->time_base = ctx->time_base;

  if (!(out->oformat->flags & AVFMT_NOFILE)) {
    if (int rc = avio_open(&out->pb, path.c_str(), AVIO_FLAG_WRITE); rc < 0) {
      throw Error(ErrorCode::IOFailure, path.string() + ": " + av_error(rc));
    }
  }
  if (int rc = avformat_write_header(out.get(), nullptr); rc < 0) {
    throw Error(ErrorCode::IOFailure, "header: " + av_error(rc));
  }

  Packet pkt(av_packet_alloc());
  auto flush_packets = [&]() {
    while (true) {
      const int rc = avcodec_receive_packet(ctx.get(), pkt.get());
      if (rc == AVERROR(EAGAIN) || rc == AVERROR_EOF) return;
      if (rc < 0) throw Error(ErrorCode::IOFailure, "encode: " + av_error(rc));
      av_packet_rescale_ts(pkt.get(), ctx->time_base, st->time_base);
      pkt->stream_index = st->index;
      av_interleaved_write_frame(out.get(), pkt.get());
    }
  };

  const int frame_size = (codec->capabilities & AV_CODEC_CAP_VARIABLE_FRAME_SIZE) || ctx->frame_size <= 0
                             ? 4096
                             : ctx->frame_size;
  const Eigen::Index total = channels.rows();
  const bool planar = av_sample_fmt_is_planar(chosen);
  const auto packed = av_get_packed_sample_fmt(chosen);
  Frame frame(av_frame_alloc());
  for (Eigen::Index start = 0; start < total; start += frame_size) {
    const int n = static_cast<int>(std::min<Eigen::Index>(frame_size, total - start));
    frame->nb_samples = n;
    frame->format = chosen;
    frame->channels = n_channels;
    frame->channel_layout = ctx->channel_layout;
    frame->sample_rate = sample_rate;
    if (av_frame_get_buffer(frame.get(), 0) < 0) throw Error(ErrorCode::IOFailure, "frame alloc");
    for (int c = 0; c < n_channels; ++c) {
      for (int i = 0; i < n; ++i) {
        const float x = std::clamp(channels(start + i, c), -1.0f, 1.0f);
        const int plane = planar ? c : 0;
        const int pos = planar ? i : i * n_channels + c;
        if (packed == AV_SAMPLE_FMT_S16) {
          reinterpret_cast<int16_t*>(frame->extended_data[plane])[pos] = quantize_pcm16(x);
        } else {
          reinterpret_cast<float*>(frame->extended_data[plane])[pos] = x;
        }
      }
    }
    frame->pts = start;
    if (int rc = avcodec_send_frame(ctx.get(), frame.get()); rc < 0) {
      throw Error(ErrorCode::IOFailure, "encode: " + av_error(rc));
    }
    av_frame_unref(frame.get());
    flush_packets();
  }
  avcodec_send_frame(ctx.get(), nullptr);
  flush_packets();
  if (int rc = av_write_trailer(out.get()); rc < 0) throw Error(ErrorCode::IOFailure, "trailer: " + av_error(rc));
}

}  // namespace avicurate::detail
