#include "tsxplain/heatmap.hpp"

#include <fstream>
#include <stdexcept>

namespace tsx {

void Heatmap::validate() const {
  if (static_cast<size_t>(T) * C != values.size())
    throw std::logic_error("heatmap: shape/data mismatch");
  for (double v : values) {
    if (!(v >= 0.0))
      throw std::logic_error("heatmap: negative or non-finite value");
    if (normalized && v > 1.0)
      throw std::logic_error("heatmap: normalized value above 1");
  }
  if (!timestamps.empty() && static_cast<int>(timestamps.size()) != T)
    throw std::logic_error("heatmap: timestamp count mismatch");
  if (!channel_names.empty() && static_cast<int>(channel_names.size()) != C)
    throw std::logic_error("heatmap: channel name count mismatch");
}

nlohmann::ordered_json Heatmap::to_json() const {
  nlohmann::ordered_json j;
  j["shape"] = {T, C};
  j["values"] = values;
  j["source"] = source;
  j["normalized"] = normalized;
  if (!channel_names.empty()) j["channel_names"] = channel_names;
  if (!timestamps.empty()) j["timestamps"] = timestamps;
  if (!strategy.empty()) j["strategy"] = strategy;
  return j;
}

Heatmap Heatmap::from_json(const nlohmann::ordered_json& j) {
  Heatmap h;
  h.T = j.at("shape").at(0);
  h.C = j.at("shape").at(1);
  h.values = j.at("values").get<std::vector<double>>();
  h.source = j.at("source");
  h.normalized = j.at("normalized");
  if (j.contains("channel_names"))
    h.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  if (j.contains("timestamps"))
    h.timestamps = j.at("timestamps").get<std::vector<double>>();
  if (j.contains("strategy")) h.strategy = j.at("strategy");
  h.validate();
  return h;
}

void Heatmap::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("heatmap: cannot write " + path);
  f << to_json().dump(2) << "\n";
}

Heatmap Heatmap::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("heatmap: cannot read " + path);
  nlohmann::ordered_json j;
  f >> j;
  return from_json(j);
}

}  // namespace tsx
