#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <json.hpp>

#include "compfreeze/encoder.hpp"

namespace compfreeze {

std::string hash_hex(std::uint64_t h);

/// Directory with manifest.json (path -> shape, offset) and weights.bin of
/// little-endian doubles in manifest order.
void save_base(const Encoder& encoder, const std::string& dir);
std::shared_ptr<Encoder> load_base(const std::string& dir);

/// Saves only the mask-trainable tensors plus plan, compacter config, head and
/// the hash of the frozen base. `extra` is stored verbatim (tokenizer, task).
void save_delta(const AdaptedModel& model, const std::string& dir, const nlohmann::json& extra = {});

struct LoadedDelta {
    AdaptedModel model;
    nlohmann::json extra;
};

/// Rebuilds the adapted model on a copy of `base`. Throws InvalidData if the
/// base hash does not match.
LoadedDelta load_delta(const std::string& dir, const Encoder& base);

}  // namespace compfreeze
