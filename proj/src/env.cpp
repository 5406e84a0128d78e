#include "ecrl/env.hpp"

#include <stdexcept>

namespace ecrl::env {

void FrameStacker::reset(const Vec& frame) {
  if (frame.size() != dim_) throw std::invalid_argument("FrameStacker: frame size mismatch");
  for (int k = 0; k < frames_; ++k) buf_.segment(static_cast<Eigen::Index>(k) * dim_, dim_) = frame;
}

void FrameStacker::push(const Vec& frame) {
  if (frame.size() != dim_) throw std::invalid_argument("FrameStacker: frame size mismatch");
  if (frames_ > 1) {
    const Eigen::Index tail = static_cast<Eigen::Index>(frames_ - 1) * dim_;
    // Shift left one frame; newest occupies the final slot.
    Vec shifted = buf_.segment(dim_, tail).eval();
    buf_.head(tail) = shifted;
  }
  buf_.tail(dim_) = frame;
}

}  // namespace ecrl::env
