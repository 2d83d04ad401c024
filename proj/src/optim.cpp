#include "amod/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace amod {

void adam_step(const std::vector<ParamTensor*>& params, const AdamConfig& config) {
  for (ParamTensor* p : params) {
    for (double g : p->grad.v)
      if (!std::isfinite(g))
        throw NonFiniteGradient("parameter " + p->name);
    p->adam_step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(p->adam_step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(p->adam_step));
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad.v[k];
      p->adam_m.v[k] = config.beta1 * p->adam_m.v[k] + (1.0 - config.beta1) * g;
      p->adam_v.v[k] = config.beta2 * p->adam_v.v[k] + (1.0 - config.beta2) * g * g;
      const double m_hat = p->adam_m.v[k] / bc1;
      const double v_hat = p->adam_v.v[k] / bc2;
      p->value.v[k] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
      require(std::isfinite(p->value.v[k]),
              "non-finite parameter after optimizer step: " + p->name);
    }
  }
}

void zero_grads(const std::vector<ParamTensor*>& params) {
  for (ParamTensor* p : params) p->zero_grad();
}

void polyak_update(const std::vector<ParamTensor*>& target,
                   const std::vector<ParamTensor*>& online, double tau) {
  require(target.size() == online.size(), "polyak_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    require(target[i]->value.same_shape(online[i]->value),
            "polyak_update: shape mismatch at " + target[i]->name);
    for (std::size_t k = 0; k < target[i]->value.size(); ++k)
      target[i]->value.v[k] =
          (1.0 - tau) * target[i]->value.v[k] + tau * online[i]->value.v[k];
  }
}

void copy_params(const std::vector<ParamTensor*>& dst,
                 const std::vector<ParamTensor*>& src) {
  require(dst.size() == src.size(), "copy_params: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require(dst[i]->value.same_shape(src[i]->value),
            "copy_params: shape mismatch at " + dst[i]->name);
    dst[i]->value.v = src[i]->value.v;
  }
}

namespace {
constexpr const char* kFormat = "amod-params";
constexpr int kVersion = 1;
}  // namespace

std::string params_json_text(const std::vector<const ParamTensor*>& params) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  nlohmann::json map = nlohmann::json::object();
  for (const ParamTensor* p : params) {
    require(!map.contains(p->name), "duplicate parameter name: " + p->name);
    map[p->name] = {{"shape", {p->value.rows, p->value.cols}}, {"values", p->value.v}};
  }
  j["params"] = std::move(map);
  return j.dump();
}

void save_params(const std::vector<const ParamTensor*>& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << params_json_text(params) << "\n";
}

void load_params(const std::vector<ParamTensor*>& params, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointMissing(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", -1) != kVersion)
    throw VersionMismatch("checkpoint " + path + " has an unsupported header");
  const auto& map = j.at("params");
  for (ParamTensor* p : params) {
    if (!map.contains(p->name))
      throw ParseError("checkpoint missing parameter: " + p->name);
    const auto& entry = map.at(p->name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != p->value.rows || shape[1] != p->value.cols)
      throw ShapeMismatch("checkpoint parameter " + p->name);
    const auto values = entry.at("values").get<std::vector<double>>();
    require(values.size() == p->value.size(), "checkpoint value count: " + p->name);
    p->value.v = values;
  }
}

std::uint64_t params_checksum(const std::vector<const ParamTensor*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const unsigned char* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const ParamTensor* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.v.data(), p->value.v.size() * sizeof(double));
  }
  return h;
}

}  // namespace amod
