#include "gnio/net/config.hpp"

#include <nlohmann/json.hpp>

#include "gnio/error.hpp"

namespace gnio::net {
using nlohmann::json;

std::string to_string(GateFn g) { return g == GateFn::Tanh ? "tanh" : "sigmoid"; }

std::string to_string(ScaleFn s) {
  switch (s) {
    case ScaleFn::Softplus: return "softplus";
    case ScaleFn::PosElu: return "pos_elu";
    case ScaleFn::Abs: return "abs";
    case ScaleFn::Exp: return "exp";
    case ScaleFn::Linear: return "linear";
  }
  return "?";
}

GateFn gate_fn_from(const std::string& name) {
  if (name == "tanh") return GateFn::Tanh;
  if (name == "sigmoid") return GateFn::Sigmoid;
  throw ConfigError("unknown gate_fn '" + name + "' (valid: tanh, sigmoid)");
}

ScaleFn scale_fn_from(const std::string& name) {
  if (name == "softplus") return ScaleFn::Softplus;
  if (name == "pos_elu") return ScaleFn::PosElu;
  if (name == "abs") return ScaleFn::Abs;
  if (name == "exp") return ScaleFn::Exp;
  if (name == "linear") return ScaleFn::Linear;
  throw ConfigError("unknown scale_fn '" + name +
                    "' (valid: softplus, pos_elu, abs, exp, linear)");
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.D = 64;
  c.channels = {8, 16, 32, 64};
  return c;
}

void NetConfig::validate() const {
  if (D == 0 || m == 0 || heads == 0) throw ConfigError("net: D, m and heads must be positive");
  if (D % heads != 0)
    throw ConfigError("net: D = " + std::to_string(D) + " is not divisible by heads = " +
                      std::to_string(heads));
  for (auto c : channels)
    if (c == 0) throw ConfigError("net: channel counts must be positive");
}

json to_json(const NetConfig& c) {
  return {{"D", c.D},
          {"m", c.m},
          {"heads", c.heads},
          {"channels", c.channels},
          {"gate_fn", to_string(c.gate_fn)},
          {"scale_fn", to_string(c.scale_fn)}};
}

NetConfig net_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("net config must be a JSON object");
  NetConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "D") c.D = value.get<std::size_t>();
      else if (key == "m") c.m = value.get<std::size_t>();
      else if (key == "heads") c.heads = value.get<std::size_t>();
      else if (key == "channels") {
        if (!value.is_array() || value.size() != 4)
          throw ConfigError("net: channels must list 4 stage widths");
        for (std::size_t i = 0; i < 4; ++i) c.channels[i] = value[i].get<std::size_t>();
      } else if (key == "gate_fn") c.gate_fn = gate_fn_from(value.get<std::string>());
      else if (key == "scale_fn") c.scale_fn = scale_fn_from(value.get<std::string>());
      else
        throw ConfigError("net: unknown key '" + key +
                          "' (valid: D, m, heads, channels, gate_fn, scale_fn)");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("net config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace gnio::net
