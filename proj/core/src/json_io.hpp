// Copyright 2026 The AMLNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AMLNET_SRC_JSON_IO_HPP_
#define AMLNET_SRC_JSON_IO_HPP_

#include <string>

#include "amlnet/autodiff.hpp"
#include "amlnet/layers.hpp"
#include "json.hpp"

namespace amlnet::detail {

using Json = nlohmann::ordered_json;

Json matrix_to_json(const ad::Matrix& m);
ad::Matrix matrix_from_json(const Json& j);
Json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j);

}  // namespace amlnet::detail

#endif  // AMLNET_SRC_JSON_IO_HPP_
