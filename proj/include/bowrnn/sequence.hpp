// Copyright 2026 The bowrnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BOWRNN_SEQUENCE_HPP
#define BOWRNN_SEQUENCE_HPP

#include "bowrnn/common.hpp"

#include <string>
#include <vector>

namespace bowrnn {

/// T frame descriptors of dimension D, one per row.
struct FeatureSequence {
  FrameMatrix frames;
  std::string source;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

/// One sample: a sequence per channel plus a 0-based class index.
struct LabeledSample {
  std::vector<FeatureSequence> channels;
  int label = 0;
};

/// Joins the channels of a sample frame by frame into a single descriptor
/// sequence. All channels must have the same length.
inline FeatureSequence concat_channels(const std::vector<FeatureSequence>& channels) {
  require(!channels.empty(), "no channels");
  const Eigen::Index T = channels.front().length();
  Eigen::Index D = 0;
  for (const auto& c : channels) {
    require(c.length() == T, "concatenated channels must have equal length");
    D += c.dim();
  }
  FeatureSequence out;
  out.frames.resize(T, D);
  Eigen::Index col = 0;
  for (const auto& c : channels) {
    out.frames.middleCols(col, c.dim()) = c.frames;
    col += c.dim();
  }
  out.source = channels.front().source;
  return out;
}

/// Pools every frame of one channel across samples into one matrix.
inline FrameMatrix pool_frames(const std::vector<LabeledSample>& samples, std::size_t channel) {
  Eigen::Index rows = 0, dim = -1;
  for (const auto& s : samples) {
    require(channel < s.channels.size(), "channel index out of range");
    rows += s.channels[channel].length();
    if (dim < 0) dim = s.channels[channel].dim();
    require(s.channels[channel].dim() == dim, "inconsistent channel dimension");
  }
  FrameMatrix out(rows, std::max<Eigen::Index>(dim, 0));
  Eigen::Index r = 0;
  for (const auto& s : samples) {
    const auto& f = s.channels[channel].frames;
    out.middleRows(r, f.rows()) = f;
    r += f.rows();
  }
  return out;
}

}  // namespace bowrnn

#endif  // BOWRNN_SEQUENCE_HPP
