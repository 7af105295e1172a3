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

#include "alignlab/losses.hpp"

#include <array>
#include <cmath>

#include "alignlab/common.hpp"

namespace alignlab {

Tensor smoothed_ce(const Tensor& log_probs, const std::vector<int>& targets,
                   const Tensor& mask, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    fail_invalid(str_cat("smoothed_ce: epsilon ", epsilon, " outside [0,1)"));
  if (log_probs.rank() != 2)
    fail_invalid(str_cat("smoothed_ce: log_probs must be [N,V], got ",
                         shape_str(log_probs.shape())));
  const int n = log_probs.dim(0);
  const int v = log_probs.dim(1);
  if (static_cast<int>(targets.size()) != n)
    fail_invalid(str_cat("smoothed_ce: ", targets.size(), " targets for ", n,
                         " rows"));
  if (mask.rank() != 1 || mask.dim(0) != n)
    fail_invalid(str_cat("smoothed_ce: mask shape ", shape_str(mask.shape()),
                         " does not match ", n, " rows"));

  const double off = epsilon / v;
  const double gold = 1.0 - epsilon + off;
  std::vector<double> q(static_cast<std::size_t>(n) * v, 0.0);
  for (int i = 0; i < n; ++i) {
    if (mask.values()[i] == 0.0) continue;  // row never contributes
    if (targets[i] < 0 || targets[i] >= v)
      fail_invalid(str_cat("smoothed_ce: target ", targets[i],
                           " out of range for ", v, " classes at row ", i));
    for (int k = 0; k < v; ++k) q[i * v + k] = off;
    q[i * v + targets[i]] = gold;
  }
  Tensor q_t({n, v}, std::move(q));
  Tensor per_row = scale(sum_axis(mul(q_t, log_probs), 1), -1.0);
  return masked_mean(per_row, mask);
}

Tensor frame_alignment_ce(const Tensor& layer_output,
                          const FrameAlignment& alignment, const Linear& head,
                          double epsilon) {
  if (layer_output.rank() != 2)
    fail_invalid(str_cat("frame_alignment_ce: expects [T,D] input, got ",
                         shape_str(layer_output.shape())));
  const int t = layer_output.dim(0);
  if (alignment.length() != t)
    fail_invalid(str_cat("frame_alignment_ce: alignment length ",
                         alignment.length(), " != frame count ", t,
                         " (aligner/feature pipeline mismatch)"));
  std::vector<double> mask(t, 1.0);
  for (int i = 0; i < t; ++i)
    if (alignment.labels[i] == kIgnoreLabel) mask[i] = 0.0;
  Tensor log_probs = log_softmax(head(layer_output), 1);
  return smoothed_ce(log_probs, alignment.labels, Tensor({t}, std::move(mask)),
                     epsilon);
}

int ctc_min_frames(const std::vector<int>& targets) {
  int repeats = 0;
  for (std::size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) ++repeats;
  return static_cast<int>(targets.size()) + repeats;
}

namespace {

// Extended CTC state sequence: blank, l1, blank, l2, ..., lN, blank.
inline int ext_label(const std::vector<int>& targets, int s, int blank) {
  return (s % 2 == 0) ? blank : targets[(s - 1) / 2];
}

inline bool skip_allowed(const std::vector<int>& targets, int s, int blank) {
  // A jump over the blank between two labels requires them to differ.
  int lab = ext_label(targets, s, blank);
  return lab != blank && s >= 2 && lab != ext_label(targets, s - 2, blank);
}

}  // namespace

Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& targets,
                bool* skipped) {
  if (skipped) *skipped = false;
  if (log_probs.rank() != 2 || log_probs.dim(1) < 2)
    fail_invalid(str_cat("ctc_loss: log_probs must be [T,V+1] with V >= 1, got ",
                         shape_str(log_probs.shape())));
  const int t_len = log_probs.dim(0);
  const int classes = log_probs.dim(1);
  const int blank = classes - 1;
  for (int lab : targets)
    if (lab < 0 || lab >= blank)
      fail_invalid(str_cat("ctc_loss: target ", lab,
                           " out of range (blank is reserved index ", blank,
                           ")"));

  if (t_len < ctc_min_frames(targets)) {
    if (skipped) *skipped = true;
    return Tensor::scalar(0.0);  // finite sentinel, zero gradient
  }

  const int n = static_cast<int>(targets.size());
  const int s_len = 2 * n + 1;
  const auto& y = log_probs.values();
  auto yv = [&](int t, int k) { return y[t * classes + k]; };

  // Forward variables include the emission at their own frame.
  std::vector<double> alpha(static_cast<std::size_t>(t_len) * s_len, kLogZero);
  alpha[0] = yv(0, blank);
  if (s_len > 1) alpha[1] = yv(0, ext_label(targets, 1, blank));
  for (int t = 1; t < t_len; ++t)
    for (int s = 0; s < s_len; ++s) {
      double acc = alpha[(t - 1) * s_len + s];
      if (s >= 1) acc = logadd(acc, alpha[(t - 1) * s_len + s - 1]);
      if (skip_allowed(targets, s, blank))
        acc = logadd(acc, alpha[(t - 1) * s_len + s - 2]);
      alpha[t * s_len + s] =
          acc <= kLogZero ? kLogZero : acc + yv(t, ext_label(targets, s, blank));
    }

  double log_p = alpha[(t_len - 1) * s_len + s_len - 1];
  if (s_len > 1) log_p = logadd(log_p, alpha[(t_len - 1) * s_len + s_len - 2]);
  if (log_p <= kLogZero / 2) {
    // Degenerate inputs (hard -inf emissions) left no usable path.
    if (skipped) *skipped = true;
    return Tensor::scalar(0.0);
  }

  std::array<Tensor, 1> inputs{log_probs};
  return custom_op(
      {1}, {-log_p}, inputs,
      [alpha = std::move(alpha), targets, t_len, s_len, classes, blank,
       log_p](CustomOpContext& ctx) {
        // Backward variables, also including the emission at their frame.
        std::vector<double> beta(static_cast<std::size_t>(t_len) * s_len,
                                 kLogZero);
        auto y = ctx.input_value(0);
        auto yv = [&](int t, int k) { return y[t * classes + k]; };
        beta[(t_len - 1) * s_len + s_len - 1] =
            yv(t_len - 1, ext_label(targets, s_len - 1, blank));
        if (s_len > 1)
          beta[(t_len - 1) * s_len + s_len - 2] =
              yv(t_len - 1, ext_label(targets, s_len - 2, blank));
        for (int t = t_len - 2; t >= 0; --t)
          for (int s = 0; s < s_len; ++s) {
            double acc = beta[(t + 1) * s_len + s];
            if (s + 1 < s_len) acc = logadd(acc, beta[(t + 1) * s_len + s + 1]);
            if (s + 2 < s_len && skip_allowed(targets, s + 2, blank))
              acc = logadd(acc, beta[(t + 1) * s_len + s + 2]);
            beta[t * s_len + s] =
                acc <= kLogZero ? kLogZero
                                : acc + yv(t, ext_label(targets, s, blank));
          }

        // d(-logP)/dy[t,k] = -exp(lse_{s: lab(s)=k}(alpha+beta) - y - logP);
        // alpha and beta each include the frame's emission once, hence the
        // subtraction of y once inside the exponent.
        const double g = ctx.out_grad()[0];
        auto grad = ctx.input_grad(0);
        for (int t = 0; t < t_len; ++t) {
          std::vector<double> occ(classes, kLogZero);
          for (int s = 0; s < s_len; ++s) {
            double a = alpha[t * s_len + s];
            double b = beta[t * s_len + s];
            if (a <= kLogZero || b <= kLogZero) continue;
            int k = ext_label(targets, s, blank);
            occ[k] = logadd(occ[k], a + b);
          }
          for (int k = 0; k < classes; ++k) {
            if (occ[k] <= kLogZero) continue;
            grad[t * classes + k] -= g * std::exp(occ[k] - yv(t, k) - log_p);
          }
        }
      });
}

}  // namespace alignlab
