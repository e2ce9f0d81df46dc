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

#include "amlnet/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include "amlnet/errors.hpp"
#include "json_io.hpp"

namespace amlnet {

using detail::Json;

std::string serialize_checkpoint(AMLNet& model, const std::vector<data::NormStats>& norm_stats) {
  Json j;
  j["format"] = "amlnet-checkpoint";
  j["format_version"] = kCheckpointVersion;
  j["model_config"] = detail::model_config_to_json(model.config());
  Json norm = Json::array();
  for (const auto& s : norm_stats) norm.push_back({{"mean", s.mean}, {"std", s.std}});
  j["norm_stats"] = std::move(norm);
  Json params = Json::object();
  for (const ad::Parameter* p : model.all_parameters()) {
    if (params.contains(p->name)) throw ContractError("duplicate parameter name " + p->name);
    params[p->name] = detail::matrix_to_json(p->value);
  }
  j["parameters"] = std::move(params);
  Json buffers = Json::object();
  for (Discriminator* d : model.discriminators())
    buffers[d->name()] = {{"running_mean", detail::matrix_to_json(d->running_mean())},
                          {"running_var", detail::matrix_to_json(d->running_var())}};
  j["buffers"] = std::move(buffers);
  return j.dump() + "\n";
}

Checkpoint deserialize_checkpoint(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format") != "amlnet-checkpoint") throw LoadError("not an amlnet checkpoint");
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw LoadError("unsupported checkpoint version " + std::to_string(version));
    c.config = detail::model_config_from_json(j.at("model_config"));
    try {
      c.config.validate();
    } catch (const ConfigError& e) {
      throw LoadError(std::string("checkpoint config invalid: ") + e.what());
    }
    for (const auto& s : j.at("norm_stats"))
      c.norm_stats.push_back({s.at("mean").get<double>(), s.at("std").get<double>()});
    c.model = std::make_unique<AMLNet>(c.config);
    const Json& params = j.at("parameters");
    auto list = c.model->all_parameters();
    if (params.size() != list.size())
      throw LoadError("checkpoint holds " + std::to_string(params.size()) +
                      " parameters, model expects " + std::to_string(list.size()));
    for (ad::Parameter* p : list) {
      if (!params.contains(p->name)) throw LoadError("checkpoint lacks parameter " + p->name);
      ad::Matrix v = detail::matrix_from_json(params.at(p->name));
      if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
        throw LoadError("shape mismatch for parameter " + p->name);
      p->value = std::move(v);
    }
    const Json& buffers = j.at("buffers");
    for (Discriminator* d : c.model->discriminators()) {
      const Json& b = buffers.at(d->name());
      d->running_mean() = detail::matrix_from_json(b.at("running_mean"));
      d->running_var() = detail::matrix_from_json(b.at("running_var"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void save_checkpoint(const std::filesystem::path& path, AMLNet& model,
                     const std::vector<data::NormStats>& norm_stats) {
  write_file_atomic(path, serialize_checkpoint(model, norm_stats));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.config == expected))
    throw LoadError("checkpoint " + path.string() + " was written for a different model config");
  return c;
}

}  // namespace amlnet
