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

// Small synthetic problems shared by several test binaries.

#pragma once

#include "mesbench/dataset.hpp"
#include "mesbench/preprocess.hpp"

namespace fixtures {

struct Problem {
    mesbench::Matrix x;
    mesbench::Vector y;
};

/// Encoded full-subset matrix of a clean synthetic set (no injected defects).
inline Problem synthetic_problem(std::size_t models, std::size_t per_model, std::uint64_t seed) {
    mesbench::SynthConfig cfg;
    cfg.n_models = models;
    cfg.samples_per_model = per_model;
    cfg.missing_hours_frac = 0.0;
    cfg.duplicate_frac = 0.0;
    cfg.outlier_frac = 0.0;
    cfg.seed = seed;
    const auto synth = mesbench::synth_generate(cfg);
    const auto subset = mesbench::make_subset(synth.dataset, mesbench::SubsetId::full);
    const auto pre = mesbench::Preprocessor::fit(subset.features);
    Problem p;
    p.x = pre.transform(subset.features);
    p.y = Eigen::Map<const mesbench::Vector>(subset.target.data(),
                                             static_cast<Eigen::Index>(subset.target.size()));
    return p;
}

}  // namespace fixtures
