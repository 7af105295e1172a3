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

#include <span>
#include <string>
#include <vector>

#include "alignlab/alignment.hpp"
#include "alignlab/bpe.hpp"
#include "alignlab/tensor.hpp"

namespace alignlab {

/// Per-unit diagonal-Gaussian emission models over feature space, plus a
/// dedicated silence unit. Stands in for the pre-existing hybrid system that
/// produced alignments; here it is fitted from reference alignments.
struct ToyAcousticModel {
  int feature_dim = 0;
  std::vector<std::string> unit_names;     // one entry per unit, incl. "sil"
  std::vector<std::vector<double>> means;  // [unit][feature]
  std::vector<std::vector<double>> vars;   // diagonal, floored
  std::vector<int> min_duration;           // frames, >= 1
  int silence_unit = -1;

  int num_units() const { return static_cast<int>(means.size()); }
  int unit_index(const std::string& name) const;
  double log_emission(std::span<const double> frame, int unit) const;
};

enum class SilenceMode { kNone, kOptional };

/// Monotonic forced alignment of `features` ([T,F]) to the reference unit
/// sequence, maximizing the summed log emission, with optional silence at the
/// start, at the end and between units. Silence frames come back as the
/// ignore sentinel. Score ties resolve deterministically: every unit starts
/// as early as the optimum allows (the path furthest along the state chain at
/// the latest differing frame wins).
FrameAlignment viterbi_align(const Tensor& features, const std::vector<int>& units,
                             const ToyAcousticModel& am, SilenceMode silence);

/// As viterbi_align, but returns for every frame the position of its unit
/// within `units` (silence frames: -1). Positions disambiguate adjacent
/// repeats of the same unit.
std::vector<int> viterbi_align_positions(const Tensor& features,
                                         const std::vector<int>& units,
                                         const ToyAcousticModel& am,
                                         SilenceMode silence);

/// Re-aligns each word's frame span into its BPE tokens' sub-spans. The word
/// alignment labels are positions into `words`; the result labels frames with
/// BPE vocabulary ids. Token sub-spans follow the word's character (phoneme)
/// alignment, mirroring the pronunciation-lexicon route: markers are stripped
/// before characters are mapped to acoustic units.
FrameAlignment bpe_frame_alignment(const FrameAlignment& word_alignment,
                                   const std::vector<std::string>& words,
                                   const Tensor& features, const BpeModel& bpe,
                                   const ToyAcousticModel& am);

struct UtteranceAlignments {
  FrameAlignment phones;  // acoustic-unit ids, silence masked
  FrameAlignment bpe;     // BPE vocabulary ids, silence masked
  FrameAlignment words;   // positions into the word sequence, silence masked
};

/// One Viterbi pass over the whole utterance (optional silence at word
/// boundaries only) from which the phoneme-level, BPE-level and word-level
/// alignments are all derived consistently.
UtteranceAlignments align_utterance(const Tensor& features,
                                    const std::vector<std::string>& words,
                                    const BpeModel& bpe,
                                    const ToyAcousticModel& am);

/// Fits per-unit Gaussians from reference alignments; sentinel-labeled frames
/// train the silence unit. `unit_names` must contain "sil".
ToyAcousticModel fit_acoustic_model(const std::vector<Tensor>& features,
                                    const std::vector<FrameAlignment>& phone_aligns,
                                    const std::vector<std::string>& unit_names,
                                    int min_duration = 1);

// Alignment cache: one record per utterance id, memory-loadable for training.
struct AlignmentRecord {
  std::string utt_id;
  FrameAlignment alignment;
  bool operator==(const AlignmentRecord&) const = default;
};

void write_alignment_cache(const std::string& path,
                           const std::vector<AlignmentRecord>& records);
std::vector<AlignmentRecord> read_alignment_cache(const std::string& path);

}  // namespace alignlab
