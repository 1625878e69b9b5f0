#include <doctest.h>

#include <algorithm>

#include "tsxplain/explain.hpp"

using namespace tsx;

namespace {

Heatmap norm_map(int T, int C, std::vector<double> values) {
  Heatmap h(T, C, "fused");
  h.values = std::move(values);
  h.normalized = true;
  return h;
}

}  // namespace

TEST_CASE("all-zero heatmap yields no regions") {
  Heatmap h = norm_map(10, 2, std::vector<double>(20, 0.0));
  CHECK(identify_regions(h, {"a", "b"}, 0.2).empty());
}

TEST_CASE("single spike becomes one region with the right name") {
  Heatmap h = norm_map(20, 3, std::vector<double>(60, 0.0));
  h.at(7, 2) = 1.0;
  auto regions = identify_regions(h, {"a", "b", "load"}, 0.2);
  REQUIRE(regions.size() == 1);
  CHECK(regions[0].channel == 2);
  CHECK(regions[0].channel_name == "load");
  CHECK(regions[0].t_start == 7);
  CHECK(regions[0].t_end == 7);
  CHECK(regions[0].peak_time == 7);
  CHECK(regions[0].peak_value == 1.0);
  CHECK_FALSE(regions[0].real_start.has_value());
}

TEST_CASE("regions sort by peak descending and cap at max_regions") {
  Heatmap h = norm_map(30, 1, std::vector<double>(30, 0.0));
  // seven separated bumps with distinct peaks
  const double peaks[7] = {0.3, 0.9, 0.5, 0.7, 0.4, 1.0, 0.6};
  for (int k = 0; k < 7; ++k) h.at(k * 4, 0) = peaks[k];
  auto regions = identify_regions(h, {"x"}, 0.95, {}, 5);
  REQUIRE(regions.size() == 5);
  for (size_t i = 1; i < regions.size(); ++i)
    CHECK(regions[i].peak_value <= regions[i - 1].peak_value);
  CHECK(regions[0].peak_value == 1.0);
  CHECK(regions[4].peak_value == 0.5);
}

TEST_CASE("native timestamps attach to region bounds") {
  Heatmap h = norm_map(5, 1, {0, 0, 1.0, 1.0, 0});
  std::vector<double> ts = {100, 200, 300, 400, 500};
  auto regions = identify_regions(h, {"x"}, 0.5, ts);
  REQUIRE(regions.size() == 1);
  REQUIRE(regions[0].real_start.has_value());
  CHECK(*regions[0].real_start == 300.0);
  CHECK(*regions[0].real_end == 400.0);
}

TEST_CASE("pattern classification: width, slope sign, flat band") {
  const int T = 20, C = 1;
  SalientRegion narrow;
  narrow.channel = 0;
  narrow.t_start = 4;
  narrow.t_end = 5;
  std::vector<double> flat_sample(T, 0.0);
  auto p = classify_pattern(narrow, flat_sample, T, C);
  CHECK(p.kind == PatternKind::pointwise_anomaly);
  CHECK(p.direction == Direction::spike);

  SalientRegion wide;
  wide.channel = 0;
  wide.t_start = 2;
  wide.t_end = 12;
  std::vector<double> ramp(T);
  for (int t = 0; t < T; ++t) ramp[static_cast<size_t>(t)] = 0.5 * t;
  CHECK(classify_pattern(wide, ramp, T, C).kind == PatternKind::interval_trend);
  CHECK(classify_pattern(wide, ramp, T, C).direction == Direction::rising);

  std::vector<double> fall(T);
  for (int t = 0; t < T; ++t) fall[static_cast<size_t>(t)] = -0.5 * t;
  CHECK(classify_pattern(wide, fall, T, C).direction == Direction::falling);

  std::vector<double> nearly(T);
  for (int t = 0; t < T; ++t) nearly[static_cast<size_t>(t)] = 0.001 * t;
  CHECK(classify_pattern(wide, nearly, T, C).direction == Direction::flat);
}

TEST_CASE("cross-channel correlation links overlapping regions") {
  SalientRegion a;
  a.channel = 0;
  a.t_start = 10;
  a.t_end = 20;
  SalientRegion b;
  b.channel = 3;
  b.t_start = 10;
  b.t_end = 20;
  SalientRegion c;
  c.channel = 1;
  c.t_start = 40;
  c.t_end = 45;
  auto corr = cross_channel_correlations({a, b, c});
  REQUIRE(corr.size() == 1);
  CHECK(corr[0].kind == PatternKind::cross_channel_correlation);
  CHECK(corr[0].linked_regions == std::vector<int>{0, 1});
  CHECK(corr[0].strength == doctest::Approx(1.0));

  // same channel never correlates with itself
  SalientRegion a2 = a;
  a2.t_start = 12;
  CHECK(cross_channel_correlations({a, a2}).empty());

  // less than half overlap of the shorter region does not count
  SalientRegion d;
  d.channel = 2;
  d.t_start = 19;
  d.t_end = 30;  // overlap with a = [19,20], 2 of 11 cells
  CHECK(cross_channel_correlations({a, d}).empty());
}

TEST_CASE("template rendering produces the exact documented sentence") {
  TemplateSet set = TemplateSet::builtin("generic");
  SalientRegion r;
  r.channel = 0;
  r.channel_name = "T_kitchen";
  r.t_start = 10;
  r.t_end = 30;
  r.peak_time = 15;
  PatternDescriptor p;
  p.kind = PatternKind::interval_trend;
  p.direction = Direction::rising;
  const std::string s = render_template(p, r, set.primary(), set);
  CHECK(s ==
        "Model detected elevated T_kitchen between timestep 10–30, "
        "suggesting sustained deviation.");
  CHECK(render_template(p, r, set.primary(), set) == s);  // deterministic
}

TEST_CASE("rendering with epoch timestamps uses clock times") {
  TemplateSet set = TemplateSet::builtin("generic");
  SalientRegion r;
  r.channel_name = "load";
  r.t_start = 0;
  r.t_end = 1;
  r.real_start = 1452531600.0;  // 2016-01-11 17:00 UTC
  r.real_end = 1452535200.0;
  PatternDescriptor p;
  p.kind = PatternKind::pointwise_anomaly;
  p.direction = Direction::spike;
  const std::string s = render_template(p, r, set.primary(), set);
  CHECK(s.find("17:00") != std::string::npos);
  CHECK(s.find("18:00") != std::string::npos);
  CHECK(s.find("transient anomaly") != std::string::npos);
}

TEST_CASE("missing implication binding names the slot") {
  TemplateSet set = TemplateSet::builtin("generic");
  set.implications.clear();
  SalientRegion r;
  r.channel_name = "x";
  PatternDescriptor p;
  CHECK_THROWS_WITH_AS(render_template(p, r, set.primary(), set),
                       doctest::Contains("[implication]"), std::runtime_error);
}

TEST_CASE("builtin template sets exist for all three domains") {
  for (const std::string d : {"generic", "clinical", "industrial"}) {
    TemplateSet set = TemplateSet::builtin(d);
    CHECK(set.domain == d);
    CHECK_FALSE(set.templates.empty());
    CHECK_FALSE(set.implications.empty());
    CHECK(set.primary().text.find("[variable]") != std::string::npos);
  }
  CHECK_THROWS(TemplateSet::builtin("nope"));
}

TEST_CASE("template set file round trip") {
  TemplateSet set = TemplateSet::builtin("industrial");
  const std::string path = "/tmp/tsx_templates_test.json";
  set.save(path);
  TemplateSet back = TemplateSet::load(path);
  CHECK(back.domain == set.domain);
  REQUIRE(back.templates.size() == set.templates.size());
  CHECK(back.templates[0].text == set.templates[0].text);
  CHECK(back.implications == set.implications);
  std::remove(path.c_str());
}

TEST_CASE("report generation: template mode end to end") {
  const int T = 40, C = 2;
  Heatmap h = norm_map(T, C, std::vector<double>(T * C, 0.0));
  for (int t = 10; t <= 25; ++t) h.at(t, 1) = 0.8;
  h.at(12, 1) = 1.0;
  std::vector<double> sample(static_cast<size_t>(T) * C, 0.0);
  for (int t = 0; t < T; ++t)
    sample[static_cast<size_t>(t) * C + 1] = 0.2 * t;

  ReportRequest req;
  req.sample_id = "sample-3";
  req.prediction = {{"label", 1}, {"score", 0.93}};
  req.sample = &sample;
  req.T = T;
  req.C = C;
  req.channel_names = {"pressure", "temperature"};
  TemplateSet set = TemplateSet::builtin("generic");
  ExplanationReport rep = generate_report(req, h, set);
  CHECK(rep.mode == "template");
  REQUIRE(rep.regions.size() == 1);
  CHECK(rep.sentences.size() == rep.regions.size());
  CHECK(rep.sentences[0].find("temperature") != std::string::npos);
  CHECK_FALSE(rep.summary.empty());

  const std::string md = rep.to_markdown(req.channel_names);
  CHECK(md.find("# Explanation report: sample-3") != std::string::npos);
  CHECK(md.find("## Prediction") != std::string::npos);
  CHECK(md.find("## Salient regions") != std::string::npos);
  CHECK(md.find("## Findings") != std::string::npos);
  CHECK(md.find("## Summary") != std::string::npos);

  // identical inputs, identical report
  ExplanationReport rep2 = generate_report(req, h, set);
  CHECK(rep2.to_json() == rep.to_json());
}

TEST_CASE("report with no salient regions says so") {
  const int T = 10, C = 1;
  Heatmap h = norm_map(T, C, std::vector<double>(T, 0.0));
  std::vector<double> sample(T, 0.0);
  ReportRequest req;
  req.sample_id = "empty";
  req.sample = &sample;
  req.T = T;
  req.C = C;
  req.channel_names = {"x"};
  ExplanationReport rep = generate_report(req, h, TemplateSet::builtin("generic"));
  CHECK(rep.regions.empty());
  CHECK(rep.sentences.empty());
  CHECK(rep.to_markdown(req.channel_names).find("No salient regions") !=
        std::string::npos);
}

TEST_CASE("external client mode embeds the stub digest and falls back") {
  const int T = 10, C = 1;
  Heatmap h = norm_map(T, C, std::vector<double>(T, 0.0));
  h.at(4, 0) = 1.0;
  std::vector<double> sample(T, 0.0);
  ReportRequest req;
  req.sample_id = "s";
  req.sample = &sample;
  req.T = T;
  req.C = C;
  req.channel_names = {"x"};
  req.mode = ReportMode::external_client;
  StubTextClient stub;
  req.client = &stub;
  ExplanationReport rep = generate_report(req, h, TemplateSet::builtin("generic"));
  CHECK(rep.mode == "external_client");
  CHECK(rep.summary.rfind("stub:", 0) == 0);

  req.client = nullptr;  // no client available: fall back with a notice
  ExplanationReport fb = generate_report(req, h, TemplateSet::builtin("generic"));
  CHECK(fb.mode == "template");
  CHECK_FALSE(fb.notice.empty());
}

TEST_CASE("low-variance channel flagging") {
  DatasetBundle b;
  b.T = 4;
  b.C = 3;
  b.task = Task::classification;
  // channel 0 constant, channel 1 small wiggle, channel 2 dominant
  b.samples = {{5, 0.1, 10, 5, -0.1, -10, 5, 0.1, 10, 5, -0.1, -10},
               {5, 0.2, 12, 5, -0.2, -12, 5, 0.2, 12, 5, -0.2, -12}};
  b.targets = {0, 1};
  b.split_tags = {Split::train, Split::train};
  auto flags = flag_low_variance_channels(b, 0.05);
  REQUIRE(flags.size() == 2);
  CHECK(flags[0].first == 0);   // ascending by share, constant first
  CHECK(flags[0].second == doctest::Approx(0.0));
  CHECK(flags[1].first == 1);

  CHECK(flag_low_variance_channels(b, 0.0).empty());

  auto all = flag_low_variance_channels(b, 1.1);
  double total = 0.0;
  for (auto& [c, share] : all) total += share;
  CHECK(total == doctest::Approx(1.0));
}
