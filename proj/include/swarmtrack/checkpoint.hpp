#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "swarmtrack/valuenet.hpp"

namespace swarmtrack {

/// Both online Q-networks of a trained policy plus how they act.
///
/// On disk: one line of JSON manifest (tensor names, shapes, byte offsets,
/// network config), a newline, then the raw little-endian float32 blob with
/// tensors in manifest order.
struct Checkpoint {
  valuenet::NetConfig net;
  std::string policy_mode{"stochastic"};  // or "deterministic"
  std::int64_t env_steps{0};
  valuenet::NetParams<float> q1;
  valuenet::NetParams<float> q2;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on malformed data or shapes that disagree with the
/// embedded network config.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace swarmtrack
