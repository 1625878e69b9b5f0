#include "tsxplain/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsx {

std::string pattern_kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::pointwise_anomaly: return "pointwise_anomaly";
    case PatternKind::interval_trend: return "interval_trend";
    case PatternKind::cross_channel_correlation: return "cross_channel_correlation";
  }
  throw std::logic_error("bad pattern kind");
}

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::rising: return "rising";
    case Direction::falling: return "falling";
    case Direction::flat: return "flat";
    case Direction::spike: return "spike";
  }
  throw std::logic_error("bad direction");
}

nlohmann::ordered_json SalientRegion::to_json() const {
  nlohmann::ordered_json j;
  j["channel"] = channel;
  j["channel_name"] = channel_name;
  j["t_start"] = t_start;
  j["t_end"] = t_end;
  j["peak_value"] = peak_value;
  j["peak_time"] = peak_time;
  if (real_start) j["real_start"] = *real_start;
  if (real_end) j["real_end"] = *real_end;
  return j;
}

nlohmann::ordered_json PatternDescriptor::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = pattern_kind_name(kind);
  j["direction"] = direction_name(direction);
  j["linked_regions"] = linked_regions;
  j["strength"] = strength;
  return j;
}

std::vector<SalientRegion> identify_regions(
    const Heatmap& h, const std::vector<std::string>& channel_names,
    double q, const std::vector<double>& timestamps, int max_regions) {
  if (!h.normalized)
    throw std::invalid_argument("identify_regions: heatmap must be normalized");
  if (!channel_names.empty() && static_cast<int>(channel_names.size()) != h.C)
    throw std::invalid_argument("identify_regions: channel name count mismatch");
  if (!timestamps.empty() && static_cast<int>(timestamps.size()) != h.T)
    throw std::invalid_argument("identify_regions: timestamp count mismatch");

  std::vector<SalientRegion> out;
  for (const SalientCells& c : threshold_regions(h, q)) {
    SalientRegion r;
    r.channel = c.channel;
    r.channel_name = channel_names.empty() ? "channel " + std::to_string(c.channel)
                                           : channel_names[static_cast<size_t>(c.channel)];
    r.t_start = c.t_start;
    r.t_end = c.t_end;
    r.peak_value = c.peak_value;
    r.peak_time = c.peak_time;
    if (!timestamps.empty()) {
      r.real_start = timestamps[static_cast<size_t>(c.t_start)];
      r.real_end = timestamps[static_cast<size_t>(c.t_end)];
    }
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SalientRegion& a, const SalientRegion& b) {
                     return a.peak_value > b.peak_value;
                   });
  if (static_cast<int>(out.size()) > max_regions)
    out.resize(static_cast<size_t>(max_regions));
  return out;
}

PatternDescriptor classify_pattern(const SalientRegion& region,
                                   const std::vector<double>& sample, int T,
                                   int C) {
  if (region.t_start < 0 || region.t_end >= T || region.channel >= C)
    throw std::out_of_range("classify_pattern: region outside the sample");
  PatternDescriptor d;
  d.strength = std::min(1.0, std::max(0.0, region.peak_value));
  const int width = region.t_end - region.t_start + 1;
  if (width <= 2) {
    d.kind = PatternKind::pointwise_anomaly;
    d.direction = Direction::spike;
    return d;
  }
  // least-squares slope of the raw signal over the region
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int t = region.t_start; t <= region.t_end; ++t) {
    const double x = t - region.t_start;
    const double y = sample[static_cast<size_t>(t) * C + region.channel];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = width;
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  d.kind = PatternKind::interval_trend;
  if (slope >= kSlopeMin) d.direction = Direction::rising;
  else if (slope <= -kSlopeMin) d.direction = Direction::falling;
  else d.direction = Direction::flat;
  return d;
}

std::vector<PatternDescriptor> cross_channel_correlations(
    const std::vector<SalientRegion>& regions) {
  std::vector<PatternDescriptor> out;
  for (size_t i = 0; i < regions.size(); ++i)
    for (size_t j = i + 1; j < regions.size(); ++j) {
      const SalientRegion& a = regions[i];
      const SalientRegion& b = regions[j];
      if (a.channel == b.channel) continue;
      const int lo = std::max(a.t_start, b.t_start);
      const int hi = std::min(a.t_end, b.t_end);
      if (hi < lo) continue;
      const int overlap = hi - lo + 1;
      const int shorter =
          std::min(a.t_end - a.t_start + 1, b.t_end - b.t_start + 1);
      const double frac = static_cast<double>(overlap) / shorter;
      if (frac < 0.5) continue;
      PatternDescriptor d;
      d.kind = PatternKind::cross_channel_correlation;
      d.direction = Direction::flat;
      d.linked_regions = {static_cast<int>(i), static_cast<int>(j)};
      d.strength = std::min(1.0, frac);
      out.push_back(std::move(d));
    }
  return out;
}

TemplateSet TemplateSet::builtin(const std::string& domain) {
  TemplateSet s;
  s.domain = domain;
  if (domain == "generic") {
    s.templates.push_back(
        {"generic.default", "generic",
         "Model detected elevated [variable] between [start time]–[end "
         "time], suggesting [implication]."});
    s.implications = {
        {"pointwise_anomaly.spike", "a transient anomaly"},
        {"interval_trend.rising", "sustained deviation"},
        {"interval_trend.falling", "sustained decline"},
        {"interval_trend.flat", "persistent attention without trend"},
        {"cross_channel_correlation.*", "coupled behaviour across channels"},
    };
  } else if (domain == "clinical") {
    s.templates.push_back(
        {"clinical.default", "clinical",
         "Elevated [variable] between [start time]–[end time] "
         "([pattern]), suggesting [implication]."});
    s.implications = {
        {"pointwise_anomaly.spike", "an acute event requiring review"},
        {"interval_trend.rising", "a possible physiological stress response"},
        {"interval_trend.falling", "possible signal degradation"},
        {"interval_trend.flat", "a sustained abnormal plateau"},
        {"cross_channel_correlation.*", "linked physiological processes"},
    };
  } else if (domain == "industrial") {
    s.templates.push_back(
        {"industrial.default", "industrial",
         "Sensor [variable] showed a [pattern] between [start time]–[end "
         "time], suggesting [implication]."});
    s.implications = {
        {"pointwise_anomaly.spike", "a transient fault"},
        {"interval_trend.rising", "possible equipment overload"},
        {"interval_trend.falling", "possible sensor drift or shutdown"},
        {"interval_trend.flat", "a stuck-at condition"},
        {"cross_channel_correlation.*", "coupled process variables"},
    };
  } else {
    throw std::invalid_argument("unknown template domain: " + domain);
  }
  return s;
}

TemplateSet TemplateSet::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("templates: cannot read " + path);
  nlohmann::ordered_json j;
  f >> j;
  TemplateSet s;
  s.domain = j.at("domain");
  for (const auto& t : j.at("templates"))
    s.templates.push_back({t.at("id"), t.at("domain"), t.at("text")});
  for (const auto& [k, v] : j.at("implications").items())
    s.implications[k] = v;
  if (s.templates.empty())
    throw std::runtime_error("templates: empty template list in " + path);
  return s;
}

void TemplateSet::save(const std::string& path) const {
  nlohmann::ordered_json j;
  j["domain"] = domain;
  j["templates"] = nlohmann::ordered_json::array();
  for (const auto& t : templates)
    j["templates"].push_back({{"id", t.id}, {"domain", t.domain}, {"text", t.text}});
  j["implications"] = implications;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("templates: cannot write " + path);
  f << j.dump(2) << "\n";
}

const Template& TemplateSet::primary() const {
  if (templates.empty()) throw std::logic_error("templates: empty set");
  return templates.front();
}

namespace {

std::string format_time(const SalientRegion& r, bool start) {
  const std::optional<double>& real = start ? r.real_start : r.real_end;
  const int step = start ? r.t_start : r.t_end;
  // Real timestamps render as clock times when they look like epoch seconds,
  // otherwise as plain numbers; index-valued timestamps fall back to steps.
  if (real && *real != static_cast<double>(step)) {
    if (*real > 1e6) {
      const std::time_t tt = static_cast<std::time_t>(*real);
      std::tm tm{};
      gmtime_r(&tt, &tm);
      char buf[8];
      std::snprintf(buf, sizeof buf, "%02d:%02d", tm.tm_hour, tm.tm_min);
      return start ? std::string(buf) : std::string(buf);
    }
    std::ostringstream os;
    os << *real;
    return os.str();
  }
  return start ? "timestep " + std::to_string(step) : std::to_string(step);
}

std::string pattern_phrase(const PatternDescriptor& d) {
  switch (d.kind) {
    case PatternKind::pointwise_anomaly: return "sharp spike";
    case PatternKind::cross_channel_correlation: return "cross-channel correlation";
    case PatternKind::interval_trend:
      switch (d.direction) {
        case Direction::rising: return "rising trend";
        case Direction::falling: return "falling trend";
        default: return "flat interval";
      }
  }
  throw std::logic_error("bad pattern");
}

std::string implication_phrase(const PatternDescriptor& d,
                               const TemplateSet& set) {
  const std::string key =
      pattern_kind_name(d.kind) + "." + direction_name(d.direction);
  auto it = set.implications.find(key);
  if (it == set.implications.end())
    it = set.implications.find(pattern_kind_name(d.kind) + ".*");
  if (it == set.implications.end())
    throw std::runtime_error("render: no binding for slot [implication] (key " +
                             key + " in domain " + set.domain + ")");
  return it->second;
}

}  // namespace

std::string render_template(const PatternDescriptor& descriptor,
                            const SalientRegion& region, const Template& tpl,
                            const TemplateSet& set) {
  std::string out;
  const std::string& text = tpl.text;
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '[') {
      out += text[i++];
      continue;
    }
    const size_t close = text.find(']', i);
    if (close == std::string::npos)
      throw std::runtime_error("render: unterminated slot in template " + tpl.id);
    const std::string slot = text.substr(i + 1, close - i - 1);
    if (slot == "variable") out += region.channel_name;
    else if (slot == "start time") out += format_time(region, true);
    else if (slot == "end time") out += format_time(region, false);
    else if (slot == "pattern") out += pattern_phrase(descriptor);
    else if (slot == "implication") out += implication_phrase(descriptor, set);
    else
      throw std::runtime_error("render: no binding for slot [" + slot +
                               "] in template " + tpl.id);
    i = close + 1;
  }
  return out;
}

std::string StubTextClient::generate(const std::string& prompt) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "stub:%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::ordered_json ExplanationReport::to_json() const {
  nlohmann::ordered_json j;
  j["sample_id"] = sample_id;
  j["prediction"] = prediction;
  j["regions"] = nlohmann::ordered_json::array();
  for (const auto& r : regions) j["regions"].push_back(r.to_json());
  j["descriptors"] = nlohmann::ordered_json::array();
  for (const auto& d : descriptors) j["descriptors"].push_back(d.to_json());
  j["sentences"] = sentences;
  j["summary"] = summary;
  j["mode"] = mode;
  if (!notice.empty()) j["notice"] = notice;
  j["pruning"] = nlohmann::ordered_json::array();
  for (const auto& [c, share] : pruning)
    j["pruning"].push_back({{"channel", c}, {"variance_share", share}});
  return j;
}

std::string ExplanationReport::to_markdown(
    const std::vector<std::string>& channel_names) const {
  std::ostringstream md;
  md << "# Explanation report: " << sample_id << "\n\n";
  md << "## Prediction\n\n";
  for (const auto& [k, v] : prediction.items())
    md << "- " << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump())
       << "\n";
  md << "\n## Salient regions\n\n";
  if (regions.empty()) {
    md << "No salient regions above threshold.\n";
  } else {
    md << "| channel | start | end | peak value | peak time |\n";
    md << "| --- | --- | --- | --- | --- |\n";
    for (const auto& r : regions) {
      md << "| " << r.channel_name << " | " << r.t_start << " | " << r.t_end
         << " | ";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", r.peak_value);
      md << buf << " | " << r.peak_time << " |\n";
    }
  }
  md << "\n## Findings\n\n";
  if (sentences.empty()) md << "No salient regions above threshold.\n";
  for (const auto& s : sentences) md << "- " << s << "\n";
  md << "\n## Summary\n\n" << summary << "\n";
  if (!notice.empty()) md << "\n> " << notice << "\n";
  md << "\n## Pruning recommendations\n\n";
  if (pruning.empty()) {
    md << "No low-variance channels detected.\n";
  } else {
    for (const auto& [c, share] : pruning) {
      const std::string name =
          c < static_cast<int>(channel_names.size())
              ? channel_names[static_cast<size_t>(c)]
              : "channel " + std::to_string(c);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f%%", 100.0 * share);
      md << "- Consider removing " << name << " (variance share " << buf
         << ").\n";
    }
  }
  return md.str();
}

ExplanationReport generate_report(const ReportRequest& req, const Heatmap& h,
                                  const TemplateSet& set) {
  if (!req.sample) throw std::invalid_argument("report: sample missing");
  ExplanationReport rep;
  rep.sample_id = req.sample_id;
  rep.prediction = req.prediction;
  rep.pruning = req.pruning;
  rep.regions = identify_regions(h, req.channel_names, req.threshold_quantile,
                                 req.timestamps);
  for (const auto& r : rep.regions)
    rep.descriptors.push_back(classify_pattern(r, *req.sample, req.T, req.C));
  for (auto& d : cross_channel_correlations(rep.regions))
    rep.descriptors.push_back(std::move(d));
  for (size_t i = 0; i < rep.regions.size(); ++i)
    rep.sentences.push_back(render_template(rep.descriptors[i], rep.regions[i],
                                            set.primary(), set));

  std::ostringstream sum;
  if (rep.regions.empty()) {
    sum << "No salient regions above threshold.";
  } else {
    sum << rep.regions.size() << " salient region"
        << (rep.regions.size() > 1 ? "s" : "") << " identified; the strongest is on "
        << rep.regions.front().channel_name << " (peak "
        << rep.regions.front().peak_value << " at timestep "
        << rep.regions.front().peak_time << ").";
  }
  rep.summary = sum.str();

  if (req.mode == ReportMode::external_client) {
    nlohmann::ordered_json prompt_json;
    prompt_json["task"] = "summarize-saliency";
    prompt_json["prediction"] = req.prediction;
    prompt_json["regions"] = nlohmann::ordered_json::array();
    for (const auto& r : rep.regions) prompt_json["regions"].push_back(r.to_json());
    const std::string prompt = prompt_json.dump();
    try {
      if (!req.client) throw std::runtime_error("no client configured");
      rep.summary = req.client->generate(prompt);
      rep.mode = "external_client";
    } catch (const std::exception& e) {
      rep.mode = "template";
      rep.notice = std::string("External text client unavailable (") + e.what() +
                   "); template summary shown instead.";
    }
  }
  return rep;
}

std::vector<std::pair<int, double>> flag_low_variance_channels(
    const DatasetBundle& bundle, double variance_threshold) {
  const int C = bundle.C, T = bundle.T;
  std::vector<double> var(static_cast<size_t>(C), 0.0);
  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    size_t n = 0;
    for (const auto& s : bundle.samples)
      for (int t = 0; t < T; ++t) {
        const double v = s[static_cast<size_t>(t) * C + c];
        sum += v;
        sq += v * v;
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    var[static_cast<size_t>(c)] = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    total += var[static_cast<size_t>(c)];
  }
  std::vector<std::pair<int, double>> flagged;
  for (int c = 0; c < C; ++c) {
    const double share = total > 0.0 ? var[static_cast<size_t>(c)] / total : 0.0;
    if (share < variance_threshold) flagged.push_back({c, share});
  }
  std::sort(flagged.begin(), flagged.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return flagged;
}

}  // namespace tsx
