#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include <unistd.h>

#include "swarmtrack/checkpoint.hpp"
#include "swarmtrack/config.hpp"
#include "swarmtrack/errors.hpp"

using namespace swarmtrack;
using nlohmann::json;

namespace {

Checkpoint make_checkpoint() {
  Checkpoint c;
  c.net.embed_dim = 8;
  c.net.n_heads = 2;
  c.net.n_attention_blocks = 2;
  c.net.decoder_hidden = 8;
  SeededStream s(3);
  c.q1 = valuenet::init_params<float>(c.net, s);
  c.q2 = valuenet::init_params<float>(c.net, s);
  c.env_steps = 1234;
  c.policy_mode = "deterministic";
  return c;
}

}  // namespace

TEST_CASE("experiment config round trip") {
  ExperimentConfig c;
  c.world.horizon = 77;
  c.world.wall_noise_std = 0.25;
  c.net.embed_dim = 32;
  c.net.activation = valuenet::Activation::kTanh;
  c.train.alpha = {0.7, 0.01, 5000};
  c.train.mode = trainer::PolicyMode::kDeterministic;
  c.train.soft_target_policy = trainer::SoftTargetPolicy::kOnlineNets;
  c.train.reward_scale = 0.05;
  c.train.density_scaled_map = true;
  const json j = to_json(c);
  const ExperimentConfig back = parse_experiment_config(j.dump());
  CHECK(to_json(back) == j);
  CHECK(back.world.horizon == 77);
  CHECK(back.net.activation == valuenet::Activation::kTanh);
  CHECK(back.train.alpha.decay_steps == 5000);
  CHECK(back.train.soft_target_policy == trainer::SoftTargetPolicy::kOnlineNets);
  CHECK(back.train.density_scaled_map);
}

TEST_CASE("partial configs keep defaults") {
  const ExperimentConfig c = parse_experiment_config(R"({"train": {"batch_size": 32}})");
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.gamma == 0.99);
  CHECK(c.world.horizon == 200);
  CHECK(to_json(parse_experiment_config("{}")) == to_json(ExperimentConfig{}));
}

TEST_CASE("config errors") {
  for (const char* bad : {
           R"({"bogus": 1})",
           R"({"train": {"batch": 32}})",
           R"({"world": {"horizon": "long"}})",
           R"({"world": {"horizon": 2.5}})",
           R"({"train": {"alpha": {"start": 0.5, "stop": 0.1}}})",
           R"({"train": {"gamma": 1.5}})",
           R"({"train": {"mode": "greedy"}})",
           R"({"train": {"density_scaled_map": 1}})",
           R"({"net": {"n_heads": 5}})",
           R"({"net": {"input_scale": [1, 2]}})",
           "[1, 2]",
           "{not json",
       }) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
  }
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const Checkpoint c = make_checkpoint();
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(back.env_steps == 1234);
  CHECK(back.policy_mode == "deterministic");
  CHECK(back.net.n_attention_blocks == 2);
  REQUIRE(back.q1.tensors.size() == c.q1.tensors.size());
  for (std::size_t i = 0; i < c.q1.tensors.size(); ++i) {
    CHECK(back.q1.tensors[i] == c.q1.tensors[i]);
    CHECK(back.q2.tensors[i] == c.q2.tensors[i]);
  }
  CHECK(serialize_checkpoint(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() /
                    ("swarmtrack_ckpt_" + std::to_string(::getpid()) + ".ckpt");
  save_checkpoint(path, c);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Checkpoint c = make_checkpoint();
  const std::string bytes = serialize_checkpoint(c);
  const auto newline = bytes.find('\n');
  const json manifest = json::parse(bytes.substr(0, newline));
  const std::string blob = bytes.substr(newline + 1);
  auto with = [&](const json& m, const std::string& b) { return m.dump() + "\n" + b; };

  CHECK_THROWS_AS(parse_checkpoint(""), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("{}"), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("garbage\n"), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 4)), CheckpointError);

  json m = manifest;
  m["format"] = "other";
  CHECK_THROWS_AS(parse_checkpoint(with(m, blob)), CheckpointError);
  m = manifest;
  m["policy_mode"] = "greedy";
  CHECK_THROWS_AS(parse_checkpoint(with(m, blob)), CheckpointError);
  m = manifest;
  m["net"]["embed_dim"] = 16;
  CHECK_THROWS_AS(parse_checkpoint(with(m, blob)), CheckpointError);
  m = manifest;
  m["tensors"][0]["name"] = "q1/other";
  CHECK_THROWS_AS(parse_checkpoint(with(m, blob)), CheckpointError);
  m = manifest;
  m["tensors"].erase(m["tensors"].size() - 1);
  CHECK_THROWS_AS(parse_checkpoint(with(m, blob)), CheckpointError);

  std::string nan_blob = blob;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan_blob.data(), &nan, sizeof nan);
  CHECK_THROWS_AS(parse_checkpoint(with(manifest, nan_blob)), CheckpointError);

  Checkpoint bad = c;
  bad.q2.tensors.pop_back();
  CHECK_THROWS_AS(serialize_checkpoint(bad), CheckpointError);
}
