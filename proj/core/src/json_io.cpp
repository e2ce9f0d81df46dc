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

#include "json_io.hpp"

#include "amlnet/errors.hpp"

namespace amlnet::detail {

Json matrix_to_json(const ad::Matrix& m) {
  Json data = Json::array();
  for (ad::Index r = 0; r < m.rows(); ++r)
    for (ad::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

ad::Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<ad::Index>();
  const auto cols = j.at("cols").get<ad::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<ad::Index>(data.size()) != rows * cols)
    throw LoadError("matrix payload does not match its shape");
  ad::Matrix m(rows, cols);
  std::size_t k = 0;
  for (ad::Index r = 0; r < rows; ++r)
    for (ad::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

Json model_config_to_json(const ModelConfig& c) {
  return Json{{"d_hid", c.d_hid},
              {"n_e", c.n_e},
              {"n_d", c.n_d},
              {"n_s", c.n_s},
              {"d_f", c.d_f},
              {"n_h", c.n_h},
              {"start_token", c.start_token},
              {"dropout", c.dropout},
              {"attn_sampling_factor", c.attn_sampling_factor},
              {"use_prob_sparse", c.use_prob_sparse},
              {"max_series", c.max_series},
              {"use_id_embedding", c.use_id_embedding},
              {"input_length", c.input_length},
              {"horizon", c.horizon},
              {"n_covariates", c.n_covariates},
              {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  try {
    j.at("d_hid").get_to(c.d_hid);
    j.at("n_e").get_to(c.n_e);
    j.at("n_d").get_to(c.n_d);
    j.at("n_s").get_to(c.n_s);
    j.at("d_f").get_to(c.d_f);
    j.at("n_h").get_to(c.n_h);
    j.at("start_token").get_to(c.start_token);
    j.at("dropout").get_to(c.dropout);
    j.at("attn_sampling_factor").get_to(c.attn_sampling_factor);
    j.at("use_prob_sparse").get_to(c.use_prob_sparse);
    j.at("max_series").get_to(c.max_series);
    j.at("use_id_embedding").get_to(c.use_id_embedding);
    j.at("input_length").get_to(c.input_length);
    j.at("horizon").get_to(c.horizon);
    j.at("n_covariates").get_to(c.n_covariates);
    j.at("init_seed").get_to(c.init_seed);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model config: ") + e.what());
  }
  return c;
}

}  // namespace amlnet::detail
