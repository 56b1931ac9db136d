#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "focustrack/model_config.hpp"
#include "focustrack/tracker.hpp"
#include "focustrack/training.hpp"

namespace focustrack {

// Everything a command needs, read from one flat JSON object. Unknown keys
// are rejected; CLI flags are applied on top by the caller.
struct RunConfig {
    ModelConfig model = ModelConfig::toy();
    TrackerConfig tracker;
    LossConfig loss;
    TrainConfig train = TrainConfig::toy_schedule();  // full preset uses 4e-5 / 4e-4
    std::string weights;
    std::string data;
    std::string out;

    void validate() const;
    // Without paths when `with_paths` is false, which is what output files embed.
    nlohmann::json to_json(bool with_paths = true) const;
    static RunConfig from_json(const nlohmann::json& j);
};

// Defaults when `path` is empty.
RunConfig load_run_config(const std::filesystem::path& path);

struct TrackOptions {
    bool timing = false;
    bool save_masks = false;
};

// `seq` is one sequence directory or a directory of them. Writes
// <out>/<name>.json and <out>/<name>_trace.csv per sequence.
int cmd_track(const RunConfig& cfg, const std::filesystem::path& weights, const std::filesystem::path& seq,
              const std::filesystem::path& out, const TrackOptions& opt, std::ostream& log);

// Writes the report JSON to `out` and the curves CSV next to it.
int cmd_eval(const std::filesystem::path& results, const std::filesystem::path& ann, const std::filesystem::path& out,
             std::ostream& log);

// Trains on every sequence directory under `data`; writes NTC1 weights to
// `out` and the loss trace to <out stem>_loss.csv.
int cmd_train(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out,
              bool allow_full, std::ostream& log);

// Spec JSON may carry "count" > 1 to emit <out>/<name>_NNN directories.
int cmd_synth(const std::filesystem::path& spec, const std::filesystem::path& out, std::optional<std::uint64_t> seed,
              int bit_depth, std::ostream& log);

// Prints the max relative error per loss term; nonzero exit above tolerance.
int cmd_gradcheck(const std::string& preset, std::uint64_t seed, DType dtype, std::ostream& log);

int cmd_macs(const std::string& preset, bool baseline, std::ostream& log);

// Sequence directories under `root` (itself when it holds annotation.json), sorted by name.
std::vector<std::filesystem::path> sequence_dirs(const std::filesystem::path& root);

// Per-term gradient check on one positive and one negative toy sample.
struct GradCheckSummary {
    std::vector<std::string> terms;
    std::vector<double> max_rel_err;
    std::vector<std::string> worst_param;
    double tolerance = 1e-4;
    std::size_t coordinates = 0;
    std::size_t skipped = 0;
    bool passed() const;
};
GradCheckSummary run_gradcheck(const ModelConfig& model, std::uint64_t seed);

}  // namespace focustrack
