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

#include "pyrfocus/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace pyrfocus {

Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw std::runtime_error("matmul: shape mismatch");
  Matrix out(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row_ptr(i);
    double* oi = out.row_ptr(i);
    for (int k = 0; k < x.cols; ++k) {
      double v = xi[k];
      if (v == 0.0) continue;
      const double* yk = y.row_ptr(k);
      for (int j = 0; j < y.cols; ++j) oi[j] += v * yk[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& x) {
  Matrix out(x.cols, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return out;
}

void add_inplace(Matrix& x, const Matrix& y) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw std::runtime_error("add: shape mismatch");
  for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += y.a[i];
}

void scale_inplace(Matrix& x, double s) {
  for (auto& v : x.a) v *= s;
}

bool all_finite(const Matrix& x) {
  for (double v : x.a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace pyrfocus
