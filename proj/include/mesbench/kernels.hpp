/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#pragma once

#include "mesbench/common.hpp"

#include <cstddef>
#include <string_view>
#include <vector>

// Data-parallel inner loops. Every kernel has an OpenMP version and a plain
// serial version; both must produce bit-identical results, which the tests
// check and bench/kernel_bench measures.

namespace mesbench::kernels {

enum class Execution { serial, parallel };

/// Minkowski distance of order p (p >= 1) between two rows of length d.
double minkowski(const double* a, const double* b, Eigen::Index d, int p) noexcept;

/// Distances between every row of `a` and every row of `b`.
Matrix pairwise_distances(const Matrix& a, const Matrix& b, int p, Execution exec);

enum class NeighborWeighting { uniform, distance };

/// k-nearest-neighbour regression. Neighbours are ordered by distance, ties by
/// lower training index. Distance weighting uses 1/d; when some neighbours sit
/// at distance zero only those are averaged.
Vector knn_predict(const Matrix& train, const Vector& target, const Matrix& query, std::size_t k,
                   int p, NeighborWeighting weighting, Execution exec);

enum class KernelKind { linear, poly, rbf };
std::string_view to_string(KernelKind kind) noexcept;
KernelKind parse_kernel(std::string_view text);

struct KernelFunction {
    KernelKind kind = KernelKind::rbf;
    double gamma = 1.0;
    double coef0 = 0.0;
    int degree = 3;

    [[nodiscard]] double operator()(const double* a, const double* b, Eigen::Index d) const noexcept;
};

/// K(i, j) = kernel(a_i, b_j).
Matrix cross_gram(const Matrix& a, const Matrix& b, const KernelFunction& kernel, Execution exec);

/// Symmetric Gram matrix of the rows of `x`.
Matrix gram(const Matrix& x, const KernelFunction& kernel, Execution exec);

/// Number of threads OpenMP would use for a parallel region (1 without OpenMP).
int max_threads() noexcept;

}  // namespace mesbench::kernels
