#include "swarmtrack/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "swarmtrack/config.hpp"
#include "swarmtrack/errors.hpp"

namespace swarmtrack {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order");

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto layout = valuenet::param_layout(ckpt.net);
  if (ckpt.q1.tensors.size() != layout.size() || ckpt.q2.tensors.size() != layout.size()) {
    throw CheckpointError("serialize_checkpoint: parameters do not match the network config");
  }
  json tensors = json::array();
  std::size_t offset = 0;
  std::string blob;
  for (const auto* prefix : {"q1/", "q2/"}) {
    const auto& params = std::string_view(prefix) == "q1/" ? ckpt.q1 : ckpt.q2;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& t = params.tensors[i];
      if (t.rows() != layout[i].rows || t.cols() != layout[i].cols) {
        throw CheckpointError("serialize_checkpoint: shape mismatch in " + layout[i].name);
      }
      const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(float);
      tensors.push_back({{"name", prefix + layout[i].name},
                         {"shape", {t.rows(), t.cols()}},
                         {"offset", offset}});
      blob.append(reinterpret_cast<const char*>(t.data()), bytes);
      offset += bytes;
    }
  }
  const json manifest = {{"format", "swarmtrack-checkpoint-1"},
                         {"dtype", "float32-le"},
                         {"policy_mode", ckpt.policy_mode},
                         {"env_steps", ckpt.env_steps},
                         {"net", to_json(ckpt.net)},
                         {"tensors", tensors},
                         {"blob_bytes", blob.size()}};
  return manifest.dump() + "\n" + blob;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw CheckpointError("checkpoint: missing manifest line");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, newline));
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  const std::string_view blob = bytes.substr(newline + 1);

  Checkpoint ckpt;
  try {
    if (manifest.at("format") != "swarmtrack-checkpoint-1") {
      throw CheckpointError("checkpoint: unsupported format");
    }
    from_json(manifest.at("net"), ckpt.net);
    ckpt.policy_mode = manifest.at("policy_mode").get<std::string>();
    if (ckpt.policy_mode != "stochastic" && ckpt.policy_mode != "deterministic") {
      throw CheckpointError("checkpoint: unknown policy_mode " + ckpt.policy_mode);
    }
    ckpt.env_steps = manifest.at("env_steps").get<std::int64_t>();
    if (manifest.at("blob_bytes").get<std::size_t>() != blob.size()) {
      throw CheckpointError("checkpoint: blob length disagrees with manifest");
    }

    const auto layout = valuenet::param_layout(ckpt.net);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != 2 * layout.size()) {
      throw CheckpointError("checkpoint: tensor count disagrees with network config");
    }
    ckpt.q1.config = ckpt.net;
    ckpt.q2.config = ckpt.net;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const auto& spec = layout[k % layout.size()];
      const std::string prefix = k < layout.size() ? "q1/" : "q2/";
      const auto& entry = tensors[k];
      if (entry.at("name").get<std::string>() != prefix + spec.name) {
        throw CheckpointError("checkpoint: expected tensor " + prefix + spec.name);
      }
      const auto rows = entry.at("shape").at(0).get<int>();
      const auto cols = entry.at("shape").at(1).get<int>();
      if (rows != spec.rows || cols != spec.cols) {
        throw CheckpointError("checkpoint: shape mismatch for " + prefix + spec.name);
      }
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t nbytes = static_cast<std::size_t>(rows) * cols * sizeof(float);
      if (offset > blob.size() || nbytes > blob.size() - offset) {
        throw CheckpointError("checkpoint: tensor " + prefix + spec.name + " runs past the blob");
      }
      valuenet::Matrix<float> m(rows, cols);
      std::memcpy(m.data(), blob.data() + offset, nbytes);
      (k < layout.size() ? ckpt.q1 : ckpt.q2).tensors.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad network config: ") + e.what());
  }
  if (!ckpt.q1.all_finite() || !ckpt.q2.all_finite()) {
    throw CheckpointError("checkpoint: non-finite parameters");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace swarmtrack
