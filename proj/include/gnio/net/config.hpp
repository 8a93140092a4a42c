#pragma once

#include <array>
#include <cstddef>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace gnio::net {

enum class GateFn { Tanh, Sigmoid };
enum class ScaleFn { Softplus, PosElu, Abs, Exp, Linear };

std::string to_string(GateFn g);
std::string to_string(ScaleFn s);
GateFn gate_fn_from(const std::string& name);
ScaleFn scale_fn_from(const std::string& name);

struct NetConfig {
  std::size_t D = 512;
  std::size_t m = 64;
  std::size_t heads = 4;
  std::array<std::size_t, 4> channels{64, 128, 256, 512};
  GateFn gate_fn = GateFn::Tanh;
  ScaleFn scale_fn = ScaleFn::Softplus;

  /// Channels 8/16/32/64, D = 64.
  static NetConfig tiny();
  /// Throws ConfigError on zero sizes or D not divisible by heads.
  void validate() const;
};

nlohmann::json to_json(const NetConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
NetConfig net_config_from_json(const nlohmann::json& j);

inline constexpr std::size_t kInputChannels = 6;

}  // namespace gnio::net
