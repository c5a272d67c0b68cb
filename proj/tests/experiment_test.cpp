#include "gamessl/experiment.hpp"

#include <gtest/gtest.h>

#include "gamessl/error.hpp"

using namespace gamessl;
using nlohmann::json;

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentConfig c;
  c.dataset.env = "corridor";
  c.dataset.train = 123;
  c.train.method = Method::SwAV;
  c.train.encoder.stage_channels = {8, 16};
  c.train.encoder.blocks_per_stage = {2, 1};
  c.train.swav.num_prototypes = 7;
  c.train.augmentation.crop_scale_min = 0.3;
  c.probe.groups = {{"front", {0, 1}}, {"rear", {4}}};
  const json j = c.to_json();
  const auto back = ExperimentConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  ASSERT_EQ(back.probe.groups.size(), 2u);
  EXPECT_EQ(back.probe.groups[0].name, "front");
  EXPECT_EQ(back.probe.groups[0].indices, (std::vector<std::size_t>{0, 1}));
}

TEST(ExperimentConfig, GroupsFromJson) {
  const auto c = ExperimentConfig::from_json(
      json::parse(R"({"probe": {"groups": {"ball": [16, 17, 18], "team0": [0, 1, 2, 3]}}})"));
  ASSERT_EQ(c.probe.groups.size(), 2u);
  EXPECT_EQ(c.probe.groups[0].name, "ball");
  EXPECT_EQ(c.probe.groups[0].indices, (std::vector<std::size_t>{16, 17, 18}));
  EXPECT_EQ(c.probe.groups[1].indices, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(ExperimentConfig, AugmentationDefaultsFollowEnvironment) {
  const auto pitch = ExperimentConfig::from_json(json::object());
  EXPECT_EQ(pitch.train.augmentation.flip_probability, 0.5);
  const auto corridor = ExperimentConfig::from_json(json::parse(R"({"dataset": {"env": "corridor"}})"));
  EXPECT_EQ(corridor.train.augmentation.flip_probability, 0.0);
  // Explicit values win over the environment default.
  const auto explicit_flip = ExperimentConfig::from_json(
      json::parse(R"({"dataset": {"env": "corridor"}, "train": {"augmentation": {"flip_probability": 0.25}}})"));
  EXPECT_EQ(explicit_flip.train.augmentation.flip_probability, 0.25);
}

TEST(ExperimentConfig, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"dataset": {"colour": 1}})")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"train": {"epochs": "ten"}})")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"train": {"epochs": -1}})")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"probe": {"groups": {"a": [1, -2]}}})")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"probe": {"groups": [1, 2]}})")), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::parse(R"({"train": {"method": "dino"}})")), ConfigError);
}

TEST(ApplyOverride, ParsesJsonValuesAndKeepsPlainStrings) {
  json doc = json::object();
  apply_override(doc, "train.epochs=3");
  apply_override(doc, "train.method=byol");
  apply_override(doc, "train.encoder.stage_channels=[4,8]");
  EXPECT_EQ(doc["train"]["epochs"], 3);
  EXPECT_EQ(doc["train"]["method"], "byol");
  EXPECT_EQ(doc["train"]["encoder"]["stage_channels"], json::parse("[4,8]"));
  const auto c = ExperimentConfig::from_json(doc);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.method, Method::BYOL);
}

TEST(ApplyOverride, RejectsMalformedAssignments) {
  json doc = json::parse(R"({"train": {"epochs": 3}})");
  EXPECT_THROW(apply_override(doc, "train.epochs"), ConfigError);
  EXPECT_THROW(apply_override(doc, "=3"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train..epochs=3"), ConfigError);
  EXPECT_THROW(apply_override(doc, "train.epochs.x=3"), ConfigError);
}

TEST(LoadExperiment, ShippedDeskConfigParses) {
  const auto c = load_experiment(GAMESSL_SOURCE_DIR "/configs/pitch_desk.json", {"train.epochs=2"});
  EXPECT_EQ(c.dataset.env, "pitch");
  EXPECT_EQ(c.train.epochs, 2u);
  EXPECT_EQ(c.train.augmentation.flip_probability, 0.0);
  EXPECT_EQ(c.train.augmentation.grayscale_probability, 0.0);
  ASSERT_EQ(c.probe.groups.size(), 3u);
  EXPECT_NO_THROW(c.validate());
}

TEST(LoadExperiment, MissingFileIsAnError) {
  EXPECT_THROW(load_experiment("/nonexistent/config.json", {}), ConfigError);
}
