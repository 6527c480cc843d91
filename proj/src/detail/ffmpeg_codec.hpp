#pragma once

#include <filesystem>

#include "avicurate/audio_io.hpp"

namespace avicurate::detail {

ClipBuffer ffmpeg_decode_mono(const std::filesystem::path& path);

void ffmpeg_encode(const Eigen::Ref<const Eigen::ArrayXXf>& channels, int sample_rate,
                   const std::filesystem::path& path);

}  // namespace avicurate::detail
