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

#include <cmath>

#include "alignlab/rng.hpp"
#include "alignlab/tensor.hpp"

namespace alignlab {

/// Affine projection: rows of x map through x*W + b.
struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;

  Linear(int in, int out, Rng& rng) {
    double r = std::sqrt(6.0 / (in + out));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (auto& v : w) v = rng.uniform(-r, r);
    weight = Tensor({in, out}, std::move(w));
    bias = Tensor::zeros({out});
  }

  Tensor operator()(const Tensor& x) const {
    return add(matmul(x, weight), tile_rows(bias, x.dim(0)));
  }
};

}  // namespace alignlab
