#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsx {

/// T x C grid of nonnegative relevance scores plus provenance.
/// Serialized schema (key order fixed):
///   {"shape":[T,C],"values":[...],"source":"resnet","normalized":false,
///    "channel_names":[...],"strategy":"..."(fused only),
///    "timestamps":[...](optional)}
/// values are row-major: values[t*C + c].
struct Heatmap {
  int T = 0;
  int C = 0;
  std::vector<double> values;
  std::string source;  // "resnet" | "transformer" | "fused"
  bool normalized = false;
  std::vector<double> timestamps;          // optional, length T
  std::vector<std::string> channel_names;  // optional, length C
  std::string strategy;                    // set for fused maps

  Heatmap() = default;
  Heatmap(int t, int c, std::string src)
      : T(t), C(c), values(static_cast<size_t>(t) * c, 0.0),
        source(std::move(src)) {}

  double& at(int t, int c) { return values[static_cast<size_t>(t) * C + c]; }
  double at(int t, int c) const {
    return values[static_cast<size_t>(t) * C + c];
  }
  void validate() const;  // shape/data agreement, nonnegativity, [0,1] if normalized

  nlohmann::ordered_json to_json() const;
  static Heatmap from_json(const nlohmann::ordered_json& j);
  void save(const std::string& path) const;
  static Heatmap load(const std::string& path);
};

}  // namespace tsx
