// Copyright 2026 The alignlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <vector>

namespace alignlab {

// Frames carrying this label (silence, padding) are skipped by the
// frame-level CE losses.
inline constexpr int kIgnoreLabel = -1;

enum class UnitKind { kPhone, kBpe, kWord };

/// Per-utterance frame-level label sequence. Labels form contiguous runs;
/// ignoring sentinel frames, the sequence of distinct runs reproduces the
/// reference unit sequence (see collapsed()).
struct FrameAlignment {
  std::vector<int> labels;
  UnitKind unit_kind = UnitKind::kPhone;

  int length() const { return static_cast<int>(labels.size()); }

  // Distinct runs with sentinel frames skipped. Runs separated only by
  // sentinel frames are still treated as distinct runs.
  std::vector<int> collapsed() const {
    std::vector<int> out;
    int prev = kIgnoreLabel;
    for (int l : labels) {
      if (l != kIgnoreLabel && l != prev) out.push_back(l);
      prev = l;
    }
    return out;
  }

  bool operator==(const FrameAlignment&) const = default;
};

}  // namespace alignlab
