#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsxplain/dataset.hpp"
#include "tsxplain/fusion.hpp"
#include "tsxplain/heatmap.hpp"

namespace tsx {

struct SalientRegion {
  int channel = 0;
  std::string channel_name;
  int t_start = 0, t_end = 0;  // inclusive
  double peak_value = 0.0;
  int peak_time = 0;
  std::optional<double> real_start;  // native-unit bounds when known
  std::optional<double> real_end;
  nlohmann::ordered_json to_json() const;
};

enum class PatternKind { pointwise_anomaly, interval_trend, cross_channel_correlation };
enum class Direction { rising, falling, flat, spike };

std::string pattern_kind_name(PatternKind k);
std::string direction_name(Direction d);

struct PatternDescriptor {
  PatternKind kind = PatternKind::pointwise_anomaly;
  Direction direction = Direction::spike;
  std::vector<int> linked_regions;  // indices into the region list
  double strength = 1.0;
  nlohmann::ordered_json to_json() const;
};

constexpr int kMaxRegions = 5;
constexpr double kSlopeMin = 0.01;  // normalized units per timestep

/// Thresholds the normalized heatmap, attaches names and native timestamps,
/// sorts by peak value descending and keeps at most max_regions.
std::vector<SalientRegion> identify_regions(
    const Heatmap& h, const std::vector<std::string>& channel_names,
    double q, const std::vector<double>& timestamps = {},
    int max_regions = kMaxRegions);

/// Width <= 2 is a pointwise anomaly; wider regions are interval trends with
/// direction from the sign of the least-squares slope over the raw signal
/// (|slope| < kSlopeMin counts as flat).
PatternDescriptor classify_pattern(const SalientRegion& region,
                                   const std::vector<double>& sample, int T,
                                   int C);

/// Pairs of regions on different channels whose time overlap covers at least
/// half of the shorter region; strength is that overlap fraction.
std::vector<PatternDescriptor> cross_channel_correlations(
    const std::vector<SalientRegion>& regions);

struct Template {
  std::string id;
  std::string domain;  // generic | clinical | industrial
  std::string text;    // slots: [variable] [start time] [end time] [pattern] [implication]
};

/// Templates plus the (kind, direction) -> implication phrase table for one
/// domain. Loadable from JSON; defaults ship embedded.
struct TemplateSet {
  std::string domain;
  std::vector<Template> templates;
  std::map<std::string, std::string> implications;  // "kind.direction" -> phrase
  static TemplateSet builtin(const std::string& domain);
  static TemplateSet load(const std::string& path);
  void save(const std::string& path) const;
  const Template& primary() const;
};

/// Fills every slot; start/end render in native units ("timestep 12" or a
/// clock time when real timestamps are attached). Throws naming the slot if
/// a binding is missing.
std::string render_template(const PatternDescriptor& descriptor,
                            const SalientRegion& region, const Template& tpl,
                            const TemplateSet& set);

class TextClient {
 public:
  virtual ~TextClient() = default;
  virtual std::string generate(const std::string& prompt) = 0;
};

/// Deterministic test double: returns a digest of the prompt.
class StubTextClient : public TextClient {
 public:
  std::string generate(const std::string& prompt) override;
};

enum class ReportMode { template_mode, external_client };

struct ExplanationReport {
  std::string sample_id;
  nlohmann::ordered_json prediction;
  std::vector<SalientRegion> regions;
  std::vector<PatternDescriptor> descriptors;
  std::vector<std::string> sentences;
  std::string summary;
  std::string mode = "template";
  std::string notice;  // set when the external client fell back
  std::vector<std::pair<int, double>> pruning;  // (channel, variance share)
  nlohmann::ordered_json to_json() const;
  std::string to_markdown(const std::vector<std::string>& channel_names) const;
};

struct ReportRequest {
  std::string sample_id;
  nlohmann::ordered_json prediction;
  const std::vector<double>* sample = nullptr;  // T*C row-major
  int T = 0, C = 0;
  std::vector<std::string> channel_names;
  std::vector<double> timestamps;
  double threshold_quantile = 0.2;
  ReportMode mode = ReportMode::template_mode;
  TextClient* client = nullptr;
  std::vector<std::pair<int, double>> pruning;
};

ExplanationReport generate_report(const ReportRequest& req, const Heatmap& h,
                                  const TemplateSet& set);

/// Channels whose share of total variance falls below the threshold,
/// ascending by share. Shares sum to 1 across channels.
std::vector<std::pair<int, double>> flag_low_variance_channels(
    const DatasetBundle& bundle, double variance_threshold);

}  // namespace tsx
