// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "oracles.hpp"

using namespace mavfi;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("defaults are valid and match the reference setup") {
  const RunConfig rc;
  CHECK_NOTHROW(rc.validate());
  CHECK(rc.model.depth == 4);
  CHECK(rc.model.channels == std::vector<int>{64, 96, 144, 192, 256});
  CHECK(rc.loss.alpha == 1.0);
  CHECK(rc.loss.beta == 0.01);
  CHECK(rc.loss.gamma == 0.01);
  CHECK(rc.train.epochs == 300);
  CHECK(rc.train.batch_size == 6);
  CHECK(rc.train.lr_start == 3e-4);
  CHECK(rc.train.lr_end == 3e-5);
  CHECK(rc.train.weight_decay == 1e-4);
}

TEST_CASE("empty object yields defaults") {
  const auto rc = run_config_from_json(Json::object());
  CHECK(to_json(rc) == to_json(RunConfig{}));
}

TEST_CASE("unknown keys are rejected by name") {
  CHECK_THROWS_WITH(run_config_from_json(Json::parse(R"({"model": {"dpeth": 3}})")),
                    ContainsSubstring("model.dpeth"));
  CHECK_THROWS_WITH(run_config_from_json(Json::parse(R"({"optimizer": {}})")), ContainsSubstring("optimizer"));
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"train": {"batch": 3}})")), ConfigError);
}

TEST_CASE("wrong types are rejected") {
  CHECK_THROWS_WITH(run_config_from_json(Json::parse(R"({"train": {"epochs": "many"}})")),
                    ContainsSubstring("train.epochs"));
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"model": 4})")), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(Json::parse("[1, 2]")), ConfigError);
}

TEST_CASE("width multiplier accepts ratios") {
  auto rc = run_config_from_json(Json::parse(R"({"model": {"width_multiplier": "1/8"}})"));
  CHECK(rc.model.width_multiplier == 0.125);
  CHECK(rc.model.level_channels(0) == 8);
  rc = run_config_from_json(Json::parse(R"({"model": {"width_multiplier": 0.25}})"));
  CHECK(rc.model.level_channels(3) == 48);
  CHECK_THROWS_AS(run_config_from_json(Json::parse(R"({"model": {"width_multiplier": "abc"}})")), ConfigError);
}

TEST_CASE("validation catches out-of-range values") {
  const char* bad[] = {
      R"({"model": {"depth": 0}})",
      R"({"model": {"depth": 6}})",
      R"({"model": {"channels": [64, 32, 128, 192]}})",
      R"({"model": {"width_multiplier": "1/64"}})",
      R"({"loss": {"alpha": -1}})",
      R"({"loss": {"alpha": 0, "beta": 0, "gamma": 0}})",
      R"({"train": {"batch_size": 0}})",
      R"({"train": {"lr_start": 1e-5, "lr_end": 1e-4}})",
      R"({"train": {"holdout_fraction": 1.0}})",
      R"({"data": {"t": 1.0}})",
      R"({"data": {"width": 4}})",
  };
  for (const char* s : bad) {
    INFO(s);
    CHECK_THROWS_AS(run_config_from_json(Json::parse(s)), ConfigError);
  }
}

TEST_CASE("configuration survives a JSON round trip") {
  RunConfig rc;
  rc.model.depth = 3;
  rc.model.width_multiplier = 0.125;
  rc.model.use_frame_features = false;
  rc.loss.beta = 0.0;
  rc.train.steps = 17;
  rc.train.seed = 99;
  rc.data.rotation_probability = 0.25;
  const auto back = run_config_from_json(Json::parse(to_json(rc).dump()));
  CHECK(to_json(back) == to_json(rc));
}

TEST_CASE("fingerprint tracks the model configuration only") {
  RunConfig a, b;
  CHECK(fingerprint(a.model) == fingerprint(b.model));
  CHECK(fingerprint(a.model).size() == 16);
  b.train.epochs = 3;
  CHECK(fingerprint(a.model) == fingerprint(b.model));
  b.model.use_intermediate_feature = false;
  CHECK(fingerprint(a.model) != fingerprint(b.model));
}

TEST_CASE("missing config file is a configuration error") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}
