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

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace alignlab {

/// Byte-pair encoding over single-character base symbols. Non-final segments
/// of a word carry the continuation marker, and marked/unmarked forms are
/// distinct vocabulary entries, so any in-alphabet word tokenizes into known
/// ids. Learning and application are fully deterministic: merge ties break on
/// the lexicographically smallest pair.
struct BpeModel {
  std::vector<std::string> base_symbols;  // sorted characters
  std::vector<std::pair<std::string, std::string>> merges;  // in learn order
  std::string continuation_marker = "@@";
  std::map<std::string, int> vocab;  // token string (marker included) -> id

  int vocab_size() const { return static_cast<int>(vocab.size()); }
  int token_id(const std::string& token) const;
  const std::string& token_string(int id) const;

  bool operator==(const BpeModel&) const = default;

 private:
  friend BpeModel bpe_learn(const std::vector<std::string>&, int);
  mutable std::vector<std::string> id_to_token_;  // lazily built reverse map
};

/// Greedy most-frequent-pair merging for up to `num_merges` steps (fewer when
/// the corpus saturates). Duplicate corpus words weight the pair counts.
BpeModel bpe_learn(const std::vector<std::string>& corpus, int num_merges);

/// Deterministic segmentation of `word` by merge order; non-final tokens
/// carry the continuation marker. Stripping markers and concatenating
/// reproduces the word.
std::vector<std::string> bpe_apply(const BpeModel& model, const std::string& word);

std::vector<int> bpe_token_ids(const BpeModel& model, const std::string& word);

/// Inverse of tokenization for a whole sentence: a token without the marker
/// ends a word.
std::vector<std::string> bpe_decode_words(const BpeModel& model,
                                          const std::vector<int>& ids);

std::string bpe_strip_marker(const BpeModel& model, const std::string& token);

}  // namespace alignlab
