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

#include "alignlab/alignment.hpp"
#include "alignlab/nn.hpp"
#include "alignlab/tensor.hpp"

namespace alignlab {

// Label-smoothed target distribution: mass epsilon is spread uniformly over
// all classes including the gold one, so q(gold) = 1 - eps + eps/V and
// q(other) = eps/V. q sums to one for any V and any eps in [0,1).

/// Mean over unmasked rows of -sum_k q_k log p_k. `log_probs` rows must be
/// log-normalized. Targets at masked rows are ignored and may hold the
/// sentinel. Fully masked input contributes zero loss and zero gradient.
Tensor smoothed_ce(const Tensor& log_probs, const std::vector<int>& targets,
                   const Tensor& mask, double epsilon);

/// Frame-level alignment supervision: projects each frame of `layer_output`
/// through `head`, log-normalizes, and applies smoothed_ce against the
/// alignment labels. Sentinel-labeled frames are masked out. The strong
/// default smoothing (0.5) is what makes the supervision weak.
Tensor frame_alignment_ce(const Tensor& layer_output,
                          const FrameAlignment& alignment, const Linear& head,
                          double epsilon = 0.5);

/// CTC loss: -log of the total probability over all blank-augmented paths
/// collapsing to `targets`, by the forward recursion in log space. The blank
/// is the last class of `log_probs` (real labels occupy 0..V-1). When the
/// utterance is too short to admit any path the loss is a zero-gradient
/// sentinel and `skipped`, when given, is set; callers report those
/// utterances as skipped rather than failing the batch.
Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& targets,
                bool* skipped = nullptr);

/// Shortest frame count that admits a CTC path for `targets`.
int ctc_min_frames(const std::vector<int>& targets);

}  // namespace alignlab
