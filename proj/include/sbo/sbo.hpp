// Copyright 2026 The sbo Authors. All rights reserved.
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


#ifndef SBO_SBO_HPP_
#define SBO_SBO_HPP_

#include "sbo/aggregation.hpp"
#include "sbo/convex_solver.hpp"
#include "sbo/errors.hpp"
#include "sbo/inference.hpp"
#include "sbo/kernels.hpp"
#include "sbo/preference_model.hpp"
#include "sbo/sbo_core.hpp"
#include "sbo/session_service.hpp"
#include "sbo/sim_harness.hpp"
#include "sbo/social_graph.hpp"

#endif  // SBO_SBO_HPP_
