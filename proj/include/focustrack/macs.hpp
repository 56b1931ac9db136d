#pragma once

#include <cstdint>

#include <json.hpp>

#include "focustrack/model_config.hpp"

namespace focustrack {

// Analytic multiply-accumulate counts per component.
struct MacBreakdown {
    std::uint64_t patch_embed = 0;
    std::uint64_t encoder = 0;  // all L blocks
    std::uint64_t head = 0;
    std::uint64_t sra = 0;      // attention pooling + presence MLP
    std::uint64_t atm = 0;
    std::uint64_t total() const { return patch_embed + encoder + head + sra + atm; }
};

// `baseline` drops the CLS token, the presence branch and ATM.
MacBreakdown estimate_macs(const ModelConfig& cfg, bool baseline);

nlohmann::json macs_json(const MacBreakdown& m);

}  // namespace focustrack
