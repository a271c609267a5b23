#include "swarmtrack/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "swarmtrack/errors.hpp"

namespace swarmtrack {

using nlohmann::json;

namespace {

// Rejects non-objects and keys outside `allowed`.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("not a boolean");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError("not a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError("not an integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError("not a string");
    }
    out = it->get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <std::size_t N>
void read_array(const json& j, const char* key, std::array<double, N>& out,
                const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != N) {
    throw ConfigError(where + "." + key + ": expected an array of " + std::to_string(N) +
                      " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!(*it)[i].is_number()) throw ConfigError(where + "." + key + ": non-numeric entry");
    out[i] = (*it)[i].get<double>();
  }
}

json schedule_json(const trainer::LinearSchedule& s) {
  return {{"start", s.start}, {"end", s.end}, {"decay_steps", s.decay_steps}};
}

void read_schedule(const json& j, const char* key, trainer::LinearSchedule& out,
                   const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  const std::string here = where + "." + key;
  check_keys(*it, here, {"start", "end", "decay_steps"});
  read(*it, "start", out.start, here);
  read(*it, "end", out.end, here);
  read(*it, "decay_steps", out.decay_steps, here);
}

template <typename Fn>
void rethrow_as_config_error(Fn&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

json to_json(const env::WorldConfig& c) {
  return {{"n_agents", c.n_agents},
          {"m_targets", c.m_targets},
          {"map_side", c.map_side},
          {"horizon", c.horizon},
          {"dt", c.dt},
          {"sensing_radius", c.sensing_radius},
          {"fov_half_angle", c.fov_half_angle},
          {"v_max", c.v_max},
          {"target_noise", c.target_noise},
          {"wall_noise_std", c.wall_noise_std},
          {"seed", c.seed},
          {"filter",
           {{"process_noise", c.filter.process_noise},
            {"sigma_range", c.filter.sigma_range},
            {"sigma_bearing", c.filter.sigma_bearing},
            {"initial_cov_diag", c.filter.initial_cov_diag}}}};
}

json to_json(const valuenet::NetConfig& c) {
  return {{"feature_dim", c.feature_dim},
          {"embed_dim", c.embed_dim},
          {"n_heads", c.n_heads},
          {"n_attention_blocks", c.n_attention_blocks},
          {"decoder_hidden", c.decoder_hidden},
          {"n_actions", c.n_actions},
          {"activation", valuenet::activation_name(c.activation)},
          {"attention_normalizer", c.attention_normalizer},
          {"input_scale", c.input_scale}};
}

json to_json(const trainer::TrainConfig& c) {
  return {{"max_agents", c.max_agents},
          {"max_targets", c.max_targets},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"alpha", schedule_json(c.alpha)},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"grad_clip_norm", c.grad_clip_norm},
          {"steps_per_update", c.steps_per_update},
          {"total_env_steps", c.total_env_steps},
          {"eval_interval", c.eval_interval},
          {"mode", trainer::policy_mode_name(c.mode)},
          {"epsilon", schedule_json(c.epsilon)},
          {"warmup_steps", c.warmup_steps},
          {"reward_scale", c.reward_scale},
          {"huber_delta", c.huber_delta},
          {"density_scaled_map", c.density_scaled_map},
          {"soft_target_policy",
           c.soft_target_policy == trainer::SoftTargetPolicy::kTargetNets ? "target" : "online"}};
}

json to_json(const ExperimentConfig& c) {
  return {{"world", to_json(c.world)}, {"net", to_json(c.net)}, {"train", to_json(c.train)}};
}

void from_json(const json& j, env::WorldConfig& c) {
  const std::string w = "world";
  check_keys(j, w,
             {"n_agents", "m_targets", "map_side", "horizon", "dt", "sensing_radius",
              "fov_half_angle", "v_max", "target_noise", "wall_noise_std", "seed", "filter"});
  read(j, "n_agents", c.n_agents, w);
  read(j, "m_targets", c.m_targets, w);
  read(j, "map_side", c.map_side, w);
  read(j, "horizon", c.horizon, w);
  read(j, "dt", c.dt, w);
  read(j, "sensing_radius", c.sensing_radius, w);
  read(j, "fov_half_angle", c.fov_half_angle, w);
  read(j, "v_max", c.v_max, w);
  read(j, "target_noise", c.target_noise, w);
  read(j, "wall_noise_std", c.wall_noise_std, w);
  read(j, "seed", c.seed, w);
  if (const auto it = j.find("filter"); it != j.end()) {
    const std::string f = "world.filter";
    check_keys(*it, f, {"process_noise", "sigma_range", "sigma_bearing", "initial_cov_diag"});
    read(*it, "process_noise", c.filter.process_noise, f);
    read(*it, "sigma_range", c.filter.sigma_range, f);
    read(*it, "sigma_bearing", c.filter.sigma_bearing, f);
    read_array(*it, "initial_cov_diag", c.filter.initial_cov_diag, f);
  }
  rethrow_as_config_error([&] { c.validate(); });
}

void from_json(const json& j, valuenet::NetConfig& c) {
  const std::string w = "net";
  check_keys(j, w,
             {"feature_dim", "embed_dim", "n_heads", "n_attention_blocks", "decoder_hidden",
              "n_actions", "activation", "attention_normalizer", "input_scale"});
  read(j, "feature_dim", c.feature_dim, w);
  read(j, "embed_dim", c.embed_dim, w);
  read(j, "n_heads", c.n_heads, w);
  read(j, "n_attention_blocks", c.n_attention_blocks, w);
  read(j, "decoder_hidden", c.decoder_hidden, w);
  read(j, "n_actions", c.n_actions, w);
  std::string act = valuenet::activation_name(c.activation);
  read(j, "activation", act, w);
  read(j, "attention_normalizer", c.attention_normalizer, w);
  read_array(j, "input_scale", c.input_scale, w);
  rethrow_as_config_error([&] {
    c.activation = valuenet::activation_from_name(act);
    c.validate();
  });
}

void from_json(const json& j, trainer::TrainConfig& c) {
  const std::string w = "train";
  check_keys(j, w,
             {"max_agents", "max_targets", "gamma", "tau", "alpha", "batch_size",
              "buffer_capacity", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
              "grad_clip_norm", "steps_per_update", "total_env_steps", "eval_interval", "mode",
              "epsilon", "warmup_steps", "reward_scale", "huber_delta", "soft_target_policy",
               "density_scaled_map"});
  read(j, "max_agents", c.max_agents, w);
  read(j, "max_targets", c.max_targets, w);
  read(j, "gamma", c.gamma, w);
  read(j, "tau", c.tau, w);
  read_schedule(j, "alpha", c.alpha, w);
  read(j, "batch_size", c.batch_size, w);
  read(j, "buffer_capacity", c.buffer_capacity, w);
  read(j, "learning_rate", c.learning_rate, w);
  read(j, "adam_beta1", c.adam_beta1, w);
  read(j, "adam_beta2", c.adam_beta2, w);
  read(j, "adam_epsilon", c.adam_epsilon, w);
  read(j, "grad_clip_norm", c.grad_clip_norm, w);
  read(j, "steps_per_update", c.steps_per_update, w);
  read(j, "total_env_steps", c.total_env_steps, w);
  read(j, "eval_interval", c.eval_interval, w);
  std::string mode = trainer::policy_mode_name(c.mode);
  read(j, "mode", mode, w);
  read_schedule(j, "epsilon", c.epsilon, w);
  read(j, "warmup_steps", c.warmup_steps, w);
  read(j, "reward_scale", c.reward_scale, w);
  read(j, "huber_delta", c.huber_delta, w);
  read(j, "density_scaled_map", c.density_scaled_map, w);
  std::string stp =
      c.soft_target_policy == trainer::SoftTargetPolicy::kTargetNets ? "target" : "online";
  read(j, "soft_target_policy", stp, w);
  if (stp == "target") {
    c.soft_target_policy = trainer::SoftTargetPolicy::kTargetNets;
  } else if (stp == "online") {
    c.soft_target_policy = trainer::SoftTargetPolicy::kOnlineNets;
  } else {
    throw ConfigError("train.soft_target_policy: expected 'target' or 'online'");
  }
  rethrow_as_config_error([&] {
    c.mode = trainer::policy_mode_from_name(mode);
    c.validate();
  });
}

void from_json(const json& j, ExperimentConfig& c) {
  check_keys(j, "config", {"world", "net", "train"});
  if (const auto it = j.find("world"); it != j.end()) from_json(*it, c.world);
  if (const auto it = j.find("net"); it != j.end()) from_json(*it, c.net);
  if (const auto it = j.find("train"); it != j.end()) from_json(*it, c.train);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  from_json(j, c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace swarmtrack
