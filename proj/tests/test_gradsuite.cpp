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

#include <set>

#include "doctest.h"
#include "pcnn/gradsuite.hpp"

TEST_CASE("every differentiable op passes the gradient suite at seed 0") {
  std::set<std::string> names;
  std::size_t streamed = 0;
  const auto reports =
      pcnn::gradsuite::run(0, [&](const pcnn::GradReport&) { ++streamed; });
  CHECK(streamed == reports.size());
  for (const auto& r : reports) {
    CAPTURE(r.op_name);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error <= pcnn::gradsuite::kTolerance);
    names.insert(r.op_name);
  }
  CHECK(names.size() == reports.size());
  for (const char* op : {"conv2d k3 s2", "max_pool2d", "batch_norm", "fully_connected",
                         "softmax_cross_entropy", "grid_sample", "crop_regions",
                         "stitch_features", "mdim_forward", "pcnn_forward loss"}) {
    CAPTURE(op);
    CHECK(names.count(op) == 1);
  }
}
