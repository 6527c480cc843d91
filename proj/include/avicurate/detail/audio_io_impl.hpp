#pragma once

#include "avicurate/error.hpp"

namespace avicurate {

template <typename Scalar>
BasicClip<Scalar> zero_pad_to(const BasicClip<Scalar>& buf, Eigen::Index target_samples) {
  if (buf.size() > target_samples) {
    throw Error(ErrorCode::AlreadyLonger, std::to_string(buf.size()) + " samples > target " +
                                              std::to_string(target_samples));
  }
  BasicClip<Scalar> out;
  out.sample_rate = buf.sample_rate;
  out.samples = Signal<Scalar>::Zero(target_samples);
  const Eigen::Index lead = (target_samples - buf.size()) / 2;
  out.samples.segment(lead, buf.size()) = buf.samples;
  return out;
}

}  // namespace avicurate
