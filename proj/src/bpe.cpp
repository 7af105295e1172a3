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

#include "alignlab/bpe.hpp"

#include <algorithm>
#include <set>

#include "alignlab/common.hpp"

namespace alignlab {

namespace {

using Segmentation = std::vector<std::string>;

Segmentation split_chars(const std::string& word) {
  Segmentation seg;
  for (char c : word) seg.emplace_back(1, c);
  return seg;
}

// One left-to-right pass replacing every non-overlapping (a,b) occurrence.
Segmentation apply_merge(const Segmentation& seg, const std::string& a,
                         const std::string& b) {
  Segmentation out;
  std::size_t i = 0;
  while (i < seg.size()) {
    if (i + 1 < seg.size() && seg[i] == a && seg[i + 1] == b) {
      out.push_back(a + b);
      i += 2;
    } else {
      out.push_back(seg[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

int BpeModel::token_id(const std::string& token) const {
  auto it = vocab.find(token);
  if (it == vocab.end())
    fail_invalid(str_cat("bpe: token \"", token, "\" not in vocabulary"));
  return it->second;
}

const std::string& BpeModel::token_string(int id) const {
  if (id_to_token_.empty()) {
    id_to_token_.resize(vocab.size());
    for (const auto& [tok, i] : vocab) id_to_token_[i] = tok;
  }
  if (id < 0 || id >= static_cast<int>(id_to_token_.size()))
    fail_invalid(str_cat("bpe: id ", id, " outside vocabulary of size ",
                         id_to_token_.size()));
  return id_to_token_[id];
}

BpeModel bpe_learn(const std::vector<std::string>& corpus, int num_merges) {
  if (corpus.empty()) fail_invalid("bpe_learn: empty corpus");
  BpeModel model;

  std::map<std::string, int> word_count;
  for (const auto& w : corpus) {
    if (w.empty()) fail_invalid("bpe_learn: empty word in corpus");
    ++word_count[w];
  }
  std::set<char> chars;
  for (const auto& [w, c] : word_count)
    for (char ch : w) chars.insert(ch);
  for (char c : chars) model.base_symbols.emplace_back(1, c);

  std::map<std::string, Segmentation> segs;
  for (const auto& [w, c] : word_count) segs[w] = split_chars(w);

  for (int step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_count;
    for (const auto& [w, seg] : segs)
      for (std::size_t i = 0; i + 1 < seg.size(); ++i)
        pair_count[{seg[i], seg[i + 1]}] += word_count.at(w);
    if (pair_count.empty()) break;  // every word is a single token
    // Highest count wins; std::map iteration order makes the tie winner the
    // lexicographically smallest pair.
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    model.merges.emplace_back(a, b);
    for (auto& [w, seg] : segs) seg = apply_merge(seg, a, b);
  }

  // Vocabulary: every base symbol and merge product, in both word-final and
  // marked (continuation) form, so application is closed over the alphabet.
  std::vector<std::string> symbols = model.base_symbols;
  for (const auto& [a, b] : model.merges) symbols.push_back(a + b);
  int next_id = 0;
  for (const auto& s : symbols) {
    model.vocab.emplace(s, next_id++);
    model.vocab.emplace(s + model.continuation_marker, next_id++);
  }
  return model;
}

std::vector<std::string> bpe_apply(const BpeModel& model, const std::string& word) {
  if (word.empty()) fail_invalid("bpe_apply: empty word");
  for (char c : word) {
    std::string s(1, c);
    if (!std::binary_search(model.base_symbols.begin(), model.base_symbols.end(), s))
      fail_invalid(str_cat("bpe_apply: character '", s,
                           "' outside the base alphabet"));
  }
  Segmentation seg = split_chars(word);
  for (const auto& [a, b] : model.merges) seg = apply_merge(seg, a, b);
  for (std::size_t i = 0; i + 1 < seg.size(); ++i) seg[i] += model.continuation_marker;
  return seg;
}

std::vector<int> bpe_token_ids(const BpeModel& model, const std::string& word) {
  std::vector<int> ids;
  for (const auto& tok : bpe_apply(model, word)) ids.push_back(model.token_id(tok));
  return ids;
}

std::string bpe_strip_marker(const BpeModel& model, const std::string& token) {
  const auto& m = model.continuation_marker;
  if (token.size() > m.size() &&
      token.compare(token.size() - m.size(), m.size(), m) == 0)
    return token.substr(0, token.size() - m.size());
  return token;
}

std::vector<std::string> bpe_decode_words(const BpeModel& model,
                                          const std::vector<int>& ids) {
  std::vector<std::string> words;
  std::string current;
  const auto& m = model.continuation_marker;
  for (int id : ids) {
    const std::string& tok = model.token_string(id);
    bool continues = tok.size() > m.size() &&
                     tok.compare(tok.size() - m.size(), m.size(), m) == 0;
    current += continues ? tok.substr(0, tok.size() - m.size()) : tok;
    if (!continues) {
      words.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(current);  // dangling continuation
  return words;
}

}  // namespace alignlab
