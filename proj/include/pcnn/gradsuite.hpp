/*
 * Copyright 2026 The PCNN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#ifndef PCNN_GRADSUITE_HPP_
#define PCNN_GRADSUITE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "pcnn/tensor.hpp"

namespace pcnn::gradsuite {

inline constexpr double kTolerance = 1e-4;

// Central-difference checks in double precision for every differentiable
// kernel, the region crop/stitch ops, the registration/fusion block and the
// full training loss on a 2 x 1 x 16 x 16 batch.
std::vector<GradReport> run(std::uint64_t seed,
                            const std::function<void(const GradReport&)>& progress = {});

}  // namespace pcnn::gradsuite

#endif  // PCNN_GRADSUITE_HPP_
