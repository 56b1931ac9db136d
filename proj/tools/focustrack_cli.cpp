#include <iostream>

#include <CLI11.hpp>

#include "focustrack/commands.hpp"
#include "focustrack/errors.hpp"

using namespace focustrack;

int main(int argc, char** argv) {
    CLI::App app{"focustrack: single-object tracking with presence-aware search"};
    app.require_subcommand(1);

    std::string config_path, weights, seq, out, results, ann, data, spec, preset = "toy", dtype = "f64";
    std::optional<bool> use_sra, use_atm, use_window;
    std::optional<std::size_t> steps;
    std::optional<std::string> phase;
    std::optional<std::uint64_t> seed;
    bool timing = false, save_masks = false, i_know = false, baseline = false;
    int bit_depth = 8;

    auto* track = app.add_subcommand("track", "run the tracker on one sequence or a directory of sequences");
    track->add_option("--config", config_path, "run config JSON");
    track->add_option("--weights", weights, "NTC1 weights")->required();
    track->add_option("--seq", seq, "sequence directory")->required();
    track->add_option("--out", out, "output directory")->required();
    track->add_option("--use-sra", use_sra);
    track->add_option("--use-atm", use_atm);
    track->add_option("--use-window", use_window);
    track->add_flag("--timing", timing, "record per-frame wall time in the trace");
    track->add_flag("--save-masks", save_masks, "write ATM masks as PNG");

    auto* eval = app.add_subcommand("eval", "score tracker results against annotations");
    eval->add_option("--results", results, "directory of <name>.json results")->required();
    eval->add_option("--ann", ann, "annotation root")->required();
    eval->add_option("--out", out, "report JSON path")->required();

    auto* trainc = app.add_subcommand("train", "train weights on synthetic sequences");
    trainc->add_option("--config", config_path, "run config JSON");
    trainc->add_option("--data", data, "directory of sequences")->required();
    trainc->add_option("--out", out, "output NTC1 path")->required();
    trainc->add_option("--weights", weights, "initial weights");
    trainc->add_option("--steps", steps);
    trainc->add_option("--phase", phase)->check(CLI::IsMember({"single", "two"}));
    trainc->add_option("--seed", seed);
    trainc->add_flag("--i-know", i_know, "allow training the full preset");

    auto* synth = app.add_subcommand("synth", "render synthetic sequences");
    synth->add_option("--spec", spec, "synth spec JSON")->required();
    synth->add_option("--out", out, "output directory")->required();
    synth->add_option("--seed", seed);
    synth->add_option("--bit-depth", bit_depth)->check(CLI::IsMember({8, 16}));

    auto* gc = app.add_subcommand("gradcheck", "compare analytic and numeric gradients per loss term");
    gc->add_option("--preset", preset)->check(CLI::IsMember({"toy"}));
    gc->add_option("--seed", seed);
    gc->add_option("--dtype", dtype)->check(CLI::IsMember({"f32", "f64"}));

    auto* macs = app.add_subcommand("macs", "analytic MAC estimate");
    macs->add_option("--preset", preset)->check(CLI::IsMember({"toy", "full"}));
    macs->add_flag("--baseline", baseline, "plain backbone without CLS, presence branch and ATM");

    CLI11_PARSE(app, argc, argv);

    try {
        if (track->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            if (use_sra) cfg.tracker.use_sra = *use_sra;
            if (use_atm) cfg.tracker.use_atm = *use_atm;
            if (use_window) cfg.tracker.use_window = *use_window;
            return cmd_track(cfg, weights, seq, out, TrackOptions{timing, save_masks}, std::cout);
        }
        if (eval->parsed()) return cmd_eval(results, ann, out, std::cout);
        if (trainc->parsed()) {
            RunConfig cfg = load_run_config(config_path);
            if (!weights.empty()) cfg.weights = weights;
            if (steps) cfg.train.steps = *steps;
            if (phase) cfg.train.phase = *phase;
            if (seed) {
                cfg.train.seed = *seed;
                cfg.model.seed = *seed;
            }
            return cmd_train(cfg, data, out, i_know, std::cout);
        }
        if (synth->parsed()) return cmd_synth(spec, out, seed, bit_depth, std::cout);
        if (gc->parsed()) return cmd_gradcheck(preset, seed.value_or(0), dtype == "f32" ? DType::f32 : DType::f64, std::cout);
        if (macs->parsed()) return cmd_macs(preset, baseline, std::cout);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
