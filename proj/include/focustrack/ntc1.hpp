#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "focustrack/autograd.hpp"

namespace focustrack {

// NTC1 weight container:
//   "NTC1" | u64 LE manifest length | UTF-8 JSON manifest | little-endian blob
// The manifest lists {name, dtype (f32=0, f64=1), rank, shape, offset} per
// tensor, offsets relative to the start of the blob. Extra metadata (model
// config, provenance) travels under the "meta" key.
struct Ntc1Contents {
    GradientTape tensors;
    nlohmann::json meta;
};

std::string encode_ntc1(const GradientTape& tensors, const nlohmann::json& meta = nlohmann::json::object());
Ntc1Contents decode_ntc1(std::string_view bytes);

void save_ntc1(const std::filesystem::path& path, const GradientTape& tensors,
               const nlohmann::json& meta = nlohmann::json::object());
Ntc1Contents load_ntc1(const std::filesystem::path& path);

}  // namespace focustrack
