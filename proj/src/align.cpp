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

#include "alignlab/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "alignlab/common.hpp"
#include "binary_io.hpp"

namespace alignlab {

int ToyAcousticModel::unit_index(const std::string& name) const {
  for (int i = 0; i < num_units(); ++i)
    if (unit_names[i] == name) return i;
  fail_invalid(str_cat("acoustic model has no unit \"", name, "\""));
}

double ToyAcousticModel::log_emission(std::span<const double> frame,
                                      int unit) const {
  const auto& mu = means[unit];
  const auto& va = vars[unit];
  double lp = 0.0;
  for (int f = 0; f < feature_dim; ++f) {
    double d = frame[f] - mu[f];
    lp += std::log(2.0 * 3.141592653589793 * va[f]) + d * d / va[f];
  }
  return -0.5 * lp;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Block {
  int unit;      // acoustic unit
  int pos;       // position in the reference sequence, -1 for silence
  bool optional; // silence blocks may be skipped
  int first = 0, last = 0;  // flattened substate range (inclusive)
};

// Chain layout: [sil?] u0 [sil?] u1 ... u_{n-1} [sil?] where the bracketed
// silence blocks appear only at slots enabled in `sil_slot` (size n+1).
std::vector<Block> build_chain(const std::vector<int>& units,
                               const ToyAcousticModel& am,
                               const std::vector<bool>& sil_slot) {
  std::vector<Block> blocks;
  auto push = [&](int unit, int pos, bool optional) {
    Block b{unit, pos, optional};
    int dur = am.min_duration[unit];
    b.first = blocks.empty() ? 0 : blocks.back().last + 1;
    b.last = b.first + dur - 1;
    blocks.push_back(b);
  };
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (sil_slot[i]) push(am.silence_unit, -1, true);
    push(units[i], static_cast<int>(i), false);
  }
  if (sil_slot[units.size()]) push(am.silence_unit, -1, true);
  return blocks;
}

// Viterbi over the chain. Ties prefer the largest predecessor substate, which
// yields the canonical earliest-start segmentation (see header).
std::vector<int> viterbi_positions(const Tensor& features,
                                   const std::vector<int>& units,
                                   const ToyAcousticModel& am,
                                   const std::vector<bool>& sil_slot) {
  if (features.rank() != 2 || features.dim(1) != am.feature_dim)
    fail_invalid(str_cat("viterbi: features must be [T,", am.feature_dim,
                         "], got ", shape_str(features.shape())));
  if (units.empty()) fail_invalid("viterbi: empty unit sequence");
  for (int u : units)
    if (u < 0 || u >= am.num_units() || u == am.silence_unit)
      fail_invalid(str_cat("viterbi: unit ", u, " has no emission model"));
  if (sil_slot.size() != units.size() + 1)
    fail_invalid("viterbi: silence slot vector must have units+1 entries");

  const int t_len = features.dim(0);
  int required = 0;
  for (int u : units) required += am.min_duration[u];
  if (t_len < required)
    fail_invalid(str_cat("viterbi: ", t_len, " frames cannot hold ",
                         units.size(), " units; at least ", required,
                         " frames required"));

  const auto blocks = build_chain(units, am, sil_slot);
  const int s_len = blocks.back().last + 1;
  std::vector<int> block_of(s_len);
  for (int b = 0; b < static_cast<int>(blocks.size()); ++b)
    for (int s = blocks[b].first; s <= blocks[b].last; ++s) block_of[s] = b;

  // Emissions per (frame, block).
  const int n_blocks = static_cast<int>(blocks.size());
  std::vector<double> emis(static_cast<std::size_t>(t_len) * n_blocks);
  const auto& fv = features.values();
  for (int t = 0; t < t_len; ++t)
    for (int b = 0; b < n_blocks; ++b)
      emis[t * n_blocks + b] = am.log_emission(
          std::span<const double>(&fv[t * am.feature_dim], am.feature_dim),
          blocks[b].unit);

  std::vector<double> delta(static_cast<std::size_t>(t_len) * s_len, kNegInf);
  std::vector<int> bp(static_cast<std::size_t>(t_len) * s_len, -1);

  // Entry states: the first block, skipping leading optional blocks.
  for (int b = 0; b < n_blocks; ++b) {
    int s = blocks[b].first;
    delta[s] = emis[0 * n_blocks + b];
    if (!blocks[b].optional) break;
  }

  // Predecessors of substate s, largest index first.
  auto for_each_pred = [&](int s, auto&& visit) {
    const Block& blk = blocks[block_of[s]];
    if (s == blk.last) visit(s);  // stay once the minimum duration is met
    if (s > blk.first) {
      visit(s - 1);  // advance within the block
    } else if (block_of[s] > 0) {
      int pb = block_of[s] - 1;
      visit(blocks[pb].last);  // enter from the previous block
      if (blocks[pb].optional && pb > 0)
        visit(blocks[pb - 1].last);  // enter across a skipped silence
    }
  };

  for (int t = 1; t < t_len; ++t)
    for (int s = 0; s < s_len; ++s) {
      double best = kNegInf;
      int best_pred = -1;
      for_each_pred(s, [&](int p) {
        double cand = delta[(t - 1) * s_len + p];
        if (cand > best) {  // strict: first (largest-index) pred wins ties
          best = cand;
          best_pred = p;
        }
      });
      if (best_pred < 0) continue;
      delta[t * s_len + s] = best + emis[t * n_blocks + block_of[s]];
      bp[t * s_len + s] = best_pred;
    }

  // Exit states: the last block, skipping trailing optional blocks; largest
  // substate index wins ties.
  double best = kNegInf;
  int state = -1;
  for (int b = n_blocks - 1; b >= 0; --b) {
    int s = blocks[b].last;
    if (delta[(t_len - 1) * s_len + s] > best) {
      best = delta[(t_len - 1) * s_len + s];
      state = s;
    }
    if (!blocks[b].optional) break;
  }
  if (state < 0)
    fail_invalid("viterbi: no feasible segmentation");  // unreachable lengths

  std::vector<int> positions(t_len);
  for (int t = t_len - 1; t >= 0; --t) {
    positions[t] = blocks[block_of[state]].pos;
    if (t > 0) state = bp[t * s_len + state];
  }
  return positions;
}

std::vector<bool> uniform_slots(std::size_t n_units, bool enabled) {
  return std::vector<bool>(n_units + 1, enabled);
}

}  // namespace

std::vector<int> viterbi_align_positions(const Tensor& features,
                                         const std::vector<int>& units,
                                         const ToyAcousticModel& am,
                                         SilenceMode silence) {
  return viterbi_positions(features, units, am,
                           uniform_slots(units.size(),
                                         silence == SilenceMode::kOptional));
}

FrameAlignment viterbi_align(const Tensor& features, const std::vector<int>& units,
                             const ToyAcousticModel& am, SilenceMode silence) {
  auto positions = viterbi_align_positions(features, units, am, silence);
  FrameAlignment out;
  out.unit_kind = UnitKind::kPhone;
  out.labels.reserve(positions.size());
  for (int p : positions)
    out.labels.push_back(p < 0 ? kIgnoreLabel : units[p]);
  return out;
}

namespace {

// Character units of a word, in acoustic-model indices.
std::vector<int> word_units(const std::string& word, const ToyAcousticModel& am) {
  std::vector<int> units;
  for (char c : word) units.push_back(am.unit_index(std::string(1, c)));
  return units;
}

}  // namespace

FrameAlignment bpe_frame_alignment(const FrameAlignment& word_alignment,
                                   const std::vector<std::string>& words,
                                   const Tensor& features, const BpeModel& bpe,
                                   const ToyAcousticModel& am) {
  if (word_alignment.unit_kind != UnitKind::kWord)
    fail_invalid("bpe_frame_alignment: expects a word-level alignment");
  const int t_len = features.dim(0);
  if (word_alignment.length() != t_len)
    fail_invalid(str_cat("bpe_frame_alignment: alignment length ",
                         word_alignment.length(), " != frame count ", t_len));

  // Word spans must be contiguous and in order.
  std::vector<std::pair<int, int>> spans(words.size(), {-1, -1});
  int prev = kIgnoreLabel;
  for (int t = 0; t < t_len; ++t) {
    int w = word_alignment.labels[t];
    if (w == kIgnoreLabel) {
      prev = w;
      continue;
    }
    if (w < 0 || w >= static_cast<int>(words.size()))
      fail_invalid(str_cat("bpe_frame_alignment: word position ", w,
                           " outside the ", words.size(), "-word sequence"));
    if (spans[w].first < 0) {
      spans[w] = {t, t + 1};
    } else {
      if (w != prev)
        fail_invalid(str_cat("bpe_frame_alignment: word ", w,
                             " appears in disjoint runs"));
      spans[w].second = t + 1;
    }
    prev = w;
  }

  FrameAlignment out;
  out.unit_kind = UnitKind::kBpe;
  out.labels.assign(t_len, kIgnoreLabel);
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto [begin, end] = spans[w];
    if (begin < 0)
      fail_invalid(str_cat("bpe_frame_alignment: word ", w, " (\"", words[w],
                           "\") has no frames"));
    auto tokens = bpe_apply(bpe, words[w]);
    // Map each character of the word to its token.
    std::vector<int> char_token;
    std::vector<int> token_ids;
    for (const auto& tok : tokens) {
      token_ids.push_back(bpe.token_id(tok));
      std::string chars = bpe_strip_marker(bpe, tok);
      for (std::size_t i = 0; i < chars.size(); ++i)
        char_token.push_back(static_cast<int>(token_ids.size()) - 1);
    }
    Tensor span_feats = slice(features, 0, begin, end - begin);
    std::vector<int> units = word_units(words[w], am);
    std::vector<int> char_pos;
    try {
      char_pos = viterbi_positions(span_feats, units, am,
                                   uniform_slots(units.size(), false));
    } catch (const std::invalid_argument& e) {
      fail_invalid(str_cat("bpe_frame_alignment: word \"", words[w], "\" over ",
                           end - begin, " frames: ", e.what()));
    }
    for (int i = 0; i < end - begin; ++i)
      out.labels[begin + i] = token_ids[char_token[char_pos[i]]];
  }
  return out;
}

UtteranceAlignments align_utterance(const Tensor& features,
                                    const std::vector<std::string>& words,
                                    const BpeModel& bpe,
                                    const ToyAcousticModel& am) {
  if (words.empty()) fail_invalid("align_utterance: empty word sequence");
  std::vector<int> units;
  std::vector<int> char_word;   // word index per character
  std::vector<int> char_bpe;    // BPE vocab id per character
  std::vector<bool> sil_slot;
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto word_u = word_units(words[w], am);
    auto tokens = bpe_apply(bpe, words[w]);
    std::vector<int> char_token;
    for (const auto& tok : tokens) {
      int id = bpe.token_id(tok);
      std::string chars = bpe_strip_marker(bpe, tok);
      for (std::size_t i = 0; i < chars.size(); ++i) char_token.push_back(id);
    }
    for (std::size_t c = 0; c < word_u.size(); ++c) {
      units.push_back(word_u[c]);
      char_word.push_back(static_cast<int>(w));
      char_bpe.push_back(char_token[c]);
      sil_slot.push_back(c == 0);  // word boundary before the first character
    }
  }
  sil_slot.push_back(true);  // utterance end

  auto positions = viterbi_positions(features, units, am, sil_slot);
  UtteranceAlignments out;
  out.phones.unit_kind = UnitKind::kPhone;
  out.bpe.unit_kind = UnitKind::kBpe;
  out.words.unit_kind = UnitKind::kWord;
  for (int p : positions) {
    if (p < 0) {
      out.phones.labels.push_back(kIgnoreLabel);
      out.bpe.labels.push_back(kIgnoreLabel);
      out.words.labels.push_back(kIgnoreLabel);
    } else {
      out.phones.labels.push_back(units[p]);
      out.bpe.labels.push_back(char_bpe[p]);
      out.words.labels.push_back(char_word[p]);
    }
  }
  return out;
}

ToyAcousticModel fit_acoustic_model(const std::vector<Tensor>& features,
                                    const std::vector<FrameAlignment>& phone_aligns,
                                    const std::vector<std::string>& unit_names,
                                    int min_duration) {
  if (features.size() != phone_aligns.size())
    fail_invalid("fit_acoustic_model: features/alignments size mismatch");
  if (features.empty()) fail_invalid("fit_acoustic_model: no data");
  constexpr double kVarFloor = 1e-4;

  ToyAcousticModel am;
  am.feature_dim = features[0].dim(1);
  am.unit_names = unit_names;
  int n_units = static_cast<int>(unit_names.size());
  am.silence_unit = -1;
  for (int u = 0; u < n_units; ++u)
    if (unit_names[u] == "sil") am.silence_unit = u;
  if (am.silence_unit < 0)
    fail_invalid("fit_acoustic_model: unit inventory must contain \"sil\"");

  std::vector<std::vector<double>> sum(n_units,
                                       std::vector<double>(am.feature_dim, 0.0));
  std::vector<std::vector<double>> sq(n_units,
                                      std::vector<double>(am.feature_dim, 0.0));
  std::vector<long> count(n_units, 0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const auto& a = phone_aligns[i];
    if (a.length() != f.dim(0))
      fail_invalid(str_cat("fit_acoustic_model: utterance ", i,
                           ": alignment length ", a.length(), " != ", f.dim(0),
                           " frames"));
    for (int t = 0; t < f.dim(0); ++t) {
      int u = a.labels[t] == kIgnoreLabel ? am.silence_unit : a.labels[t];
      if (u < 0 || u >= n_units)
        fail_invalid(str_cat("fit_acoustic_model: label ", a.labels[t],
                             " outside the ", n_units, "-unit inventory"));
      ++count[u];
      for (int d = 0; d < am.feature_dim; ++d) {
        double x = f.at(t, d);
        sum[u][d] += x;
        sq[u][d] += x * x;
      }
    }
  }

  am.means.assign(n_units, std::vector<double>(am.feature_dim, 0.0));
  am.vars.assign(n_units, std::vector<double>(am.feature_dim, 1.0));
  for (int u = 0; u < n_units; ++u) {
    if (count[u] == 0) continue;  // unseen unit keeps the unit Gaussian
    for (int d = 0; d < am.feature_dim; ++d) {
      double mean = sum[u][d] / count[u];
      am.means[u][d] = mean;
      am.vars[u][d] = std::max(sq[u][d] / count[u] - mean * mean, kVarFloor);
    }
  }
  am.min_duration.assign(n_units, std::max(1, min_duration));
  return am;
}

void write_alignment_cache(const std::string& path,
                           const std::vector<AlignmentRecord>& records) {
  auto out = io::open_out(path);
  out.write("ALNCACHE", 8);
  io::write_pod<uint32_t>(out, 1);  // version
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(records.size()));
  for (const auto& r : records) {
    io::write_string(out, r.utt_id);
    io::write_pod<uint8_t>(out, static_cast<uint8_t>(r.alignment.unit_kind));
    std::vector<int32_t> labels(r.alignment.labels.begin(),
                                r.alignment.labels.end());
    io::write_vec(out, labels);
  }
  if (!out) fail_state(str_cat("write failed: ", path));
}

std::vector<AlignmentRecord> read_alignment_cache(const std::string& path) {
  auto in = io::open_in(path);
  io::expect_magic(in, "ALNCACHE", "alignment cache");
  auto version = io::read_pod<uint32_t>(in);
  if (version != 1)
    fail_state(str_cat("alignment cache version ", version, " unsupported"));
  auto n = io::read_pod<uint32_t>(in);
  std::vector<AlignmentRecord> records(n);
  for (auto& r : records) {
    r.utt_id = io::read_string(in);
    r.alignment.unit_kind = static_cast<UnitKind>(io::read_pod<uint8_t>(in));
    auto labels = io::read_vec<int32_t>(in);
    r.alignment.labels.assign(labels.begin(), labels.end());
  }
  return records;
}

}  // namespace alignlab
