#include <doctest.h>

#include <cstdio>

#include "tsxplain/heatmap.hpp"

using namespace tsx;

TEST_CASE("json round trip preserves every field") {
  Heatmap h(2, 3, "fused");
  h.values = {0.1, 0.2, 0.3, 0.4, 0.5, 1.0};
  h.normalized = true;
  h.channel_names = {"a", "b", "c"};
  h.timestamps = {10.0, 20.0};
  h.strategy = "multiplicative";
  Heatmap back = Heatmap::from_json(h.to_json());
  CHECK(back.T == h.T);
  CHECK(back.C == h.C);
  CHECK(back.values == h.values);
  CHECK(back.source == h.source);
  CHECK(back.normalized == h.normalized);
  CHECK(back.channel_names == h.channel_names);
  CHECK(back.timestamps == h.timestamps);
  CHECK(back.strategy == h.strategy);
}

TEST_CASE("serialized key order is fixed") {
  Heatmap h(1, 2, "resnet");
  h.values = {0.0, 2.0};
  const std::string s = h.to_json().dump();
  CHECK(s.find("\"shape\"") < s.find("\"values\""));
  CHECK(s.find("\"values\"") < s.find("\"source\""));
  CHECK(s.find("\"source\"") < s.find("\"normalized\""));
  CHECK(s.find("\"strategy\"") == std::string::npos);  // only on fused maps
}

TEST_CASE("validate rejects malformed maps") {
  Heatmap h(2, 2, "resnet");
  h.values = {0.0, 1.0, 2.0, 3.0};
  CHECK_NOTHROW(h.validate());

  Heatmap bad_shape = h;
  bad_shape.values.pop_back();
  CHECK_THROWS(bad_shape.validate());

  Heatmap negative = h;
  negative.values[0] = -0.5;
  CHECK_THROWS(negative.validate());

  Heatmap above_one = h;
  above_one.normalized = true;  // values contain 3.0
  CHECK_THROWS(above_one.validate());

  Heatmap bad_names = h;
  bad_names.channel_names = {"only one"};
  CHECK_THROWS(bad_names.validate());

  Heatmap bad_times = h;
  bad_times.timestamps = {1.0};
  CHECK_THROWS(bad_times.validate());
}

TEST_CASE("file save and load round trip") {
  Heatmap h(2, 1, "transformer");
  h.values = {0.25, 0.75};
  const std::string path = "/tmp/tsx_heatmap_test.json";
  h.save(path);
  Heatmap back = Heatmap::load(path);
  CHECK(back.values == h.values);
  CHECK(back.source == "transformer");
  std::remove(path.c_str());
  CHECK_THROWS(Heatmap::load("/tmp/does_not_exist_tsx.json"));
}
