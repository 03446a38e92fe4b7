// Copyright 2026 The pyrfocus Authors
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

#include <cstddef>
#include <vector>

namespace pyrfocus {

/// Dense row-major f64 matrix. Deliberately tiny: the decoder stacks in this
/// project are desk-scale and the training code wants transparent loops.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) {
    return a[static_cast<std::size_t>(i) * cols + j];
  }
  double operator()(int i, int j) const {
    return a[static_cast<std::size_t>(i) * cols + j];
  }
  double* row_ptr(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
  const double* row_ptr(int i) const {
    return a.data() + static_cast<std::size_t>(i) * cols;
  }
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& x);
void add_inplace(Matrix& x, const Matrix& y);
void scale_inplace(Matrix& x, double s);
bool all_finite(const Matrix& x);

}  // namespace pyrfocus
