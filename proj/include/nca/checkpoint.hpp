#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nca/grid.hpp"
#include "nca/rule.hpp"

namespace nca {

// Everything needed to run a trained model.
struct Checkpoint {
  RuleParams<float> params;
  StepConfig step_config;
  IoLayout layout;
  ObsScaling scaling;
};

// File format: one line of JSON (version, shapes, step_config, layout)
// followed by the raw parameters as little-endian float32 in declaration
// order (each matrix column-major).
inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["version"] = 1;
  j["dtype"] = "f32";
  j["order"] = "col-major";
  j["param_count"] = RuleParams<float>::kCount;
  j["shapes"] = {
      {"perception_w", {RuleParams<float>::kPatch, RuleParams<float>::kFilters}},
      {"perception_b", {RuleParams<float>::kFilters}},
      {"hidden_w", {RuleParams<float>::kFilters, RuleParams<float>::kHidden}},
      {"hidden_b", {RuleParams<float>::kHidden}},
      {"head_w", {RuleParams<float>::kHidden, RuleParams<float>::kHead}},
      {"head_b", {RuleParams<float>::kHead}},
  };
  j["step_config"] = {{"fire_rate", ckpt.step_config.fire_rate},
                      {"noise_amp", ckpt.step_config.noise_amp}};
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& in : ckpt.layout.inputs)
    inputs.push_back({in.pos.row, in.pos.col, in.obs});
  j["layout"] = {
      {"n", ckpt.layout.n},
      {"inputs", inputs},
      {"outputs",
       {{ckpt.layout.outputs[0].row, ckpt.layout.outputs[0].col},
        {ckpt.layout.outputs[1].row, ckpt.layout.outputs[1].col}}},
      {"obs_scale", ckpt.scaling.factor},
  };

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f << j.dump() << "\n";
  f.write(reinterpret_cast<const char*>(ckpt.params.raw.data()),
          static_cast<std::streamsize>(sizeof(float) * RuleParams<float>::kCount));
  if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  std::string header;
  if (!std::getline(f, header))
    throw std::runtime_error("checkpoint missing header: " + path);
  nlohmann::json j = nlohmann::json::parse(header);

  const int count = j.at("param_count").get<int>();
  if (count != RuleParams<float>::kCount)
    throw std::runtime_error("checkpoint parameter count " +
                             std::to_string(count) + " != " +
                             std::to_string(RuleParams<float>::kCount));

  Checkpoint ckpt;
  ckpt.step_config.fire_rate = j.at("step_config").at("fire_rate").get<double>();
  ckpt.step_config.noise_amp = j.at("step_config").at("noise_amp").get<double>();
  const auto& jl = j.at("layout");
  ckpt.layout.n = jl.at("n").get<int>();
  ckpt.layout.inputs.clear();
  for (const auto& in : jl.at("inputs"))
    ckpt.layout.inputs.push_back(
        {{in.at(0).get<int>(), in.at(1).get<int>()}, in.at(2).get<int>()});
  ckpt.layout.outputs[0] = {jl.at("outputs").at(0).at(0).get<int>(),
                            jl.at("outputs").at(0).at(1).get<int>()};
  ckpt.layout.outputs[1] = {jl.at("outputs").at(1).at(0).get<int>(),
                            jl.at("outputs").at(1).at(1).get<int>()};
  for (int k = 0; k < 4; ++k)
    ckpt.scaling.factor[k] = jl.at("obs_scale").at(k).get<double>();

  f.read(reinterpret_cast<char*>(ckpt.params.raw.data()),
         static_cast<std::streamsize>(sizeof(float) * RuleParams<float>::kCount));
  if (f.gcount() != static_cast<std::streamsize>(sizeof(float) * count))
    throw std::runtime_error("checkpoint truncated: " + path);
  return ckpt;
}

}  // namespace nca
