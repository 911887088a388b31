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

#include "mesbench/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mesbench::kernels {

int max_threads() noexcept {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

double minkowski(const double* a, const double* b, Eigen::Index d, int p) noexcept {
    double acc = 0.0;
    switch (p) {
        case 1:
            for (Eigen::Index j = 0; j < d; ++j) {
                acc += std::abs(a[j] - b[j]);
            }
            return acc;
        case 2:
            for (Eigen::Index j = 0; j < d; ++j) {
                const double diff = a[j] - b[j];
                acc += diff * diff;
            }
            return std::sqrt(acc);
        default:
            for (Eigen::Index j = 0; j < d; ++j) {
                acc += std::pow(std::abs(a[j] - b[j]), p);
            }
            return std::pow(acc, 1.0 / p);
    }
}

namespace {

void distance_row(const Matrix& a, const Matrix& b, int p, Eigen::Index i, Matrix& out) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        out(i, j) = minkowski(a.row(i).data(), b.row(j).data(), a.cols(), p);
    }
}

double knn_row(const Matrix& train, const Vector& target, const double* q, std::size_t k, int p,
               NeighborWeighting weighting, std::vector<std::pair<double, std::size_t>>& buf) {
    const auto n = static_cast<std::size_t>(train.rows());
    buf.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf[i] = {minkowski(q, train.row(static_cast<Eigen::Index>(i)).data(), train.cols(), p), i};
    }
    const auto kth = buf.begin() + static_cast<std::ptrdiff_t>(k);
    std::partial_sort(buf.begin(), kth, buf.end());

    if (weighting == NeighborWeighting::uniform) {
        double sum = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
            sum += target(static_cast<Eigen::Index>(buf[r].second));
        }
        return sum / static_cast<double>(k);
    }
    if (buf[0].first == 0.0) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t r = 0; r < k && buf[r].first == 0.0; ++r) {
            sum += target(static_cast<Eigen::Index>(buf[r].second));
            ++count;
        }
        return sum / static_cast<double>(count);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        const double w = 1.0 / buf[r].first;
        num += w * target(static_cast<Eigen::Index>(buf[r].second));
        den += w;
    }
    return num / den;
}

}  // namespace

Matrix pairwise_distances(const Matrix& a, const Matrix& b, int p, Execution exec) {
    Matrix out(a.rows(), b.rows());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            distance_row(a, b, p, i, out);
        }
    } else {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            distance_row(a, b, p, i, out);
        }
    }
    return out;
}

Vector knn_predict(const Matrix& train, const Vector& target, const Matrix& query, std::size_t k,
                   int p, NeighborWeighting weighting, Execution exec) {
    k = std::min<std::size_t>(k, static_cast<std::size_t>(train.rows()));
    Vector out(query.rows());
    if (exec == Execution::parallel) {
#pragma omp parallel
        {
            std::vector<std::pair<double, std::size_t>> buf;
#pragma omp for schedule(static)
            for (Eigen::Index i = 0; i < query.rows(); ++i) {
                out(i) = knn_row(train, target, query.row(i).data(), k, p, weighting, buf);
            }
        }
    } else {
        std::vector<std::pair<double, std::size_t>> buf;
        for (Eigen::Index i = 0; i < query.rows(); ++i) {
            out(i) = knn_row(train, target, query.row(i).data(), k, p, weighting, buf);
        }
    }
    return out;
}

std::string_view to_string(KernelKind kind) noexcept {
    switch (kind) {
        case KernelKind::linear: return "linear";
        case KernelKind::poly: return "poly";
        case KernelKind::rbf: return "rbf";
    }
    return "unknown";
}

KernelKind parse_kernel(std::string_view text) {
    for (auto k : {KernelKind::linear, KernelKind::poly, KernelKind::rbf}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw Error(ErrorCode::InvalidSpec, "unknown kernel '" + std::string(text) + "'");
}

double KernelFunction::operator()(const double* a, const double* b, Eigen::Index d) const noexcept {
    switch (kind) {
        case KernelKind::linear: {
            double dot = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                dot += a[j] * b[j];
            }
            return dot;
        }
        case KernelKind::poly: {
            double dot = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                dot += a[j] * b[j];
            }
            return std::pow(gamma * dot + coef0, degree);
        }
        case KernelKind::rbf: {
            double sq = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double diff = a[j] - b[j];
                sq += diff * diff;
            }
            return std::exp(-gamma * sq);
        }
    }
    return 0.0;
}

Matrix cross_gram(const Matrix& a, const Matrix& b, const KernelFunction& kernel, Execution exec) {
    Matrix out(a.rows(), b.rows());
    const auto body = [&](Eigen::Index i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            out(i, j) = kernel(a.row(i).data(), b.row(j).data(), a.cols());
        }
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            body(i);
        }
    } else {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            body(i);
        }
    }
    return out;
}

Matrix gram(const Matrix& x, const KernelFunction& kernel, Execution exec) {
    const auto n = x.rows();
    Matrix out(n, n);
    const auto body = [&](Eigen::Index i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            out(i, j) = kernel(x.row(i).data(), x.row(j).data(), x.cols());
        }
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (Eigen::Index i = 0; i < n; ++i) {
            body(i);
        }
    } else {
        for (Eigen::Index i = 0; i < n; ++i) {
            body(i);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            out(i, j) = out(j, i);
        }
    }
    return out;
}

}  // namespace mesbench::kernels
