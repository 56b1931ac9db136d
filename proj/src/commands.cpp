#include "focustrack/commands.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "focustrack/errors.hpp"
#include "focustrack/eval.hpp"
#include "focustrack/gradcheck.hpp"
#include "focustrack/macs.hpp"
#include "focustrack/ntc1.hpp"
#include "focustrack/png_io.hpp"
#include "focustrack/synthdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace focustrack {

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw FormatError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw FormatError("cannot write " + p.string());
    out << text;
    if (!out) throw FormatError("write failed: " + p.string());
}

// Weights files carry their model config; it wins over the run config.
ModelConfig model_for_weights(const Ntc1Contents& w, const ModelConfig& fallback) {
    if (!w.meta.is_object() || !w.meta.contains("config")) return fallback;
    ModelConfig m = fallback;
    json merged;
    to_json(merged, fallback);
    for (const auto& [k, v] : w.meta.at("config").items())
        if (merged.contains(k)) merged[k] = v;
    from_json(merged, m);
    m.dtype = fallback.dtype;
    m.validate();
    return m;
}

}  // namespace

// ---- RunConfig ------------------------------------------------------------

void RunConfig::validate() const {
    model.validate();
    tracker.validate();
    loss.validate();
    train.validate();
}

json RunConfig::to_json(bool with_paths) const {
    json j;
    focustrack::to_json(j, model);
    for (const json& part : {tracker_config_to_json(tracker), loss.to_json(), train_config_to_json(train)})
        for (const auto& [k, v] : part.items()) j[k] = v;
    if (with_paths) {
        j["weights"] = weights;
        j["data"] = data;
        j["out"] = out;
    }
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    const json known = RunConfig{}.to_json(true);
    for (const auto& [k, v] : j.items())
        if (!known.contains(k)) throw ConfigError("unknown config key: " + k);

    RunConfig c;
    // A preset name selects the base dimensions; explicit keys override them.
    if (j.contains("preset")) c.model = ModelConfig::preset_named(j.at("preset").get<std::string>());
    const TrainConfig base = c.model.preset == "full" ? TrainConfig{} : TrainConfig::toy_schedule();
    json m;
    focustrack::to_json(m, c.model);
    for (const auto& [k, v] : j.items())
        if (m.contains(k)) m[k] = v;
    try {
        focustrack::from_json(m, c.model);
        c.tracker = tracker_config_from_json(j);
        c.loss = LossConfig::from_json(j);
        c.train = train_config_from_json(j, base);
        if (j.contains("weights")) c.weights = j.at("weights").get<std::string>();
        if (j.contains("data")) c.data = j.at("data").get<std::string>();
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    if (path.empty()) return RunConfig{};
    return RunConfig::from_json(read_json(path));
}

std::vector<fs::path> sequence_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw FormatError("not a directory: " + root.string());
    if (fs::exists(root / "annotation.json")) return {root};
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "annotation.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw FormatError("no sequences under " + root.string());
    return dirs;
}

// ---- track ----------------------------------------------------------------

int cmd_track(const RunConfig& cfg, const fs::path& weights_path, const fs::path& seq, const fs::path& out,
              const TrackOptions& opt, std::ostream& log) {
    cfg.validate();
    const Ntc1Contents w = load_ntc1(weights_path);
    const ModelConfig model = model_for_weights(w, cfg.model);
    const GradientTape weights = w.tensors.as_dtype(model.dtype);

    RunConfig effective = cfg;
    effective.model = model;
    const json config = effective.to_json(false);
    log << "config: " << config.dump() << "\n";

    TrackerConfig tcfg = cfg.tracker;
    tcfg.keep_mask = opt.save_masks;
    const auto dirs = sequence_dirs(seq);
    fs::create_directories(out);

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i = next++; i < dirs.size(); i = next++) {
            try {
                const Sequence s = load_sequence(dirs[i], model.encoder.channels);
                const TrackResult r = track_sequence(s, model, weights, tcfg);
                write_text(out / (s.name + ".json"), result_json(r, config).dump(2) + "\n");
                write_text(out / (s.name + "_trace.csv"), trace_csv(r, config, opt.timing));
                if (opt.save_masks) {
                    const fs::path mdir = out / (s.name + "_masks");
                    fs::create_directories(mdir);
                    for (std::size_t f = 0; f < r.frames.size(); ++f) {
                        if (!r.frames[f].mask) continue;
                        std::ostringstream fn;
                        fn << std::setw(6) << std::setfill('0') << f + 2 << ".png";
                        write_png_gray(mdir / fn.str(), *r.frames[f].mask, 8);
                    }
                }
                std::lock_guard<std::mutex> lock(mu);
                log << "tracked " << s.name << " (" << s.frames.size() << " frames)\n";
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
                next = dirs.size();
            }
        }
    };
    const std::size_t n = std::min(worker_count(cfg.train.threads), dirs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const fs::path& results, const fs::path& ann, const fs::path& out, std::ostream& log) {
    const MetricsReport r = evaluate_directory(results, ann);
    const json j = report_json(r);
    write_text(out, j.dump(2) + "\n");
    fs::path curves = out;
    curves.replace_filename(out.stem().string() + "_curves.csv");
    write_text(curves, curves_csv(r));
    log << std::fixed << std::setprecision(4) << "AUC " << r.auc << "  P20 " << r.p20 << "  Pnorm " << r.pnorm
        << "  SA " << r.sa << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out, bool allow_full, std::ostream& log) {
    cfg.validate();
    if (cfg.model.preset == "full" && !allow_full)
        throw ConfigError("training the full preset is very slow on CPU; pass --i-know to proceed");
    if (cfg.train.lr_backbone == 0.0 && cfg.train.lr_heads == 0.0)
        log << "warning: both learning rates are zero; weights will not change\n";

    std::vector<Sequence> seqs;
    for (const auto& d : sequence_dirs(data)) seqs.push_back(load_sequence(d, cfg.model.encoder.channels));
    if (seqs.size() < 2) throw ConfigError("training needs at least two sequences (negatives pair across them)");

    GradientTape init;
    ModelConfig model = cfg.model;
    if (!cfg.weights.empty()) {
        const Ntc1Contents w = load_ntc1(cfg.weights);
        model = model_for_weights(w, cfg.model);
        init = w.tensors.as_dtype(model.dtype);
    } else {
        init = init_model(model);
    }

    RunConfig effective = cfg;
    effective.model = model;
    const json config = effective.to_json(false);
    log << "config: " << config.dump() << "\n";

    const std::size_t every = std::max<std::size_t>(1, cfg.train.steps / 20);
    auto on_step = [&](std::size_t step, const LossParts& p, const GradientTape&) {
        if (step % every == 0 || step == cfg.train.steps)
            log << "step " << step << " total " << p.total << " logits " << p.l_logits << std::endl;
    };
    const TrainResult r = train(seqs, model, std::move(init), cfg.train, cfg.loss, on_step);

    save_ntc1(out, r.weights, json{{"config", config}, {"steps", r.history.size()}});
    fs::path trace = out;
    trace.replace_filename(out.stem().string() + "_loss.csv");
    write_text(trace, loss_csv(r.history, config));
    log << "wrote " << out.string() << "\n";
    return 0;
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const fs::path& spec_path, const fs::path& out, std::optional<std::uint64_t> seed, int bit_depth,
              std::ostream& log) {
    json j = read_json(spec_path);
    std::size_t count = 1;
    if (j.contains("count")) {
        count = j.at("count").get<std::size_t>();
        j.erase("count");
        if (count == 0) throw ConfigError("count must be positive");
    }
    SynthSpec base = synth_spec_from_json(j);
    if (seed) base.seed = *seed;

    for (std::size_t k = 0; k < count; ++k) {
        SynthSpec s = base;
        fs::path dir = out;
        if (count > 1) {
            std::ostringstream nm;
            nm << base.name << "_" << std::setw(3) << std::setfill('0') << k;
            s.name = nm.str();
            s.seed = base.seed + k;
            dir = out / s.name;
        }
        const Sequence seq = generate(s);
        save_sequence(seq, dir, bit_depth, synth_spec_to_json(s));
        log << "wrote " << dir.string() << " (" << seq.frames.size() << " frames)\n";
    }
    return 0;
}

// ---- gradcheck ------------------------------------------------------------

bool GradCheckSummary::passed() const {
    return std::all_of(max_rel_err.begin(), max_rel_err.end(), [this](double e) { return e <= tolerance; });
}

GradCheckSummary run_gradcheck(const ModelConfig& model, std::uint64_t seed) {
    model.validate();
    // Two short synthetic sequences: a positive pair from the first and a
    // negative pair whose search frame comes from the second.
    std::vector<Sequence> seqs;
    for (std::uint64_t k = 0; k < 2; ++k) {
        SynthSpec s;
        s.name = "gc" + std::to_string(k);
        s.frame_side = 2 * model.encoder.search_side;
        s.frames = 4;
        s.size_min = 0.12 * model.encoder.search_side;
        s.size_max = 0.2 * model.encoder.search_side;
        s.seed = seed * 2 + k;
        seqs.push_back(generate(s));
    }
    TrainConfig tc;
    tc.augment = false;
    tc.seed = seed;
    Rng rng(seed ^ 0x6763ULL);
    const TrainSample pos = materialize(seqs, PairDraw{0, 0, 0, 2, 1}, model, tc, rng);
    const TrainSample neg = materialize(seqs, PairDraw{0, 0, 1, 1, 0}, model, tc, rng);

    GradientTape params = init_model(model);
    const LossConfig lc;
    GraphLoss loss = [&](ad::Binding& b) {
        const SampleLoss p = sample_loss(pos, model, lc, b, true);
        const SampleLoss n = sample_loss(neg, model, lc, b, true);
        return std::vector<ad::Var>{p.focal,
                                    p.l1,
                                    p.giou,
                                    ad::add(p.logits, n.logits),
                                    ad::add(p.mask, n.mask),
                                    ad::add(p.total, n.total)};
    };

    GradCheckOptions opt;
    const bool f64 = model.dtype == DType::f64;
    opt.eps = f64 ? 1e-5 : 1e-3;
    opt.coords_per_tensor = 2;
    opt.probe = Probe::largest;
    opt.seed = seed;
    const GradCheckReport rep = grad_check(loss, params, opt);

    GradCheckSummary s;
    s.terms = {"l_focal", "l_l1", "l_giou", "l_logits", "l_mask", "total"};
    s.max_rel_err = rep.max_rel_err;
    s.worst_param = rep.worst_param;
    s.tolerance = f64 ? 1e-4 : 1e-2;
    s.coordinates = rep.coordinates;
    s.skipped = rep.skipped;
    return s;
}

int cmd_gradcheck(const std::string& preset, std::uint64_t seed, DType dtype, std::ostream& log) {
    if (preset != "toy") throw ConfigError("gradcheck runs on the toy preset only");
    ModelConfig m = ModelConfig::toy();
    m.dtype = dtype;
    m.seed = seed;
    if (dtype != DType::f64)
        log << "warning: f32 central differences are coarse; tolerance relaxed to 1e-2\n";
    const GradCheckSummary s = run_gradcheck(m, seed);
    log << std::scientific << std::setprecision(3);
    for (std::size_t t = 0; t < s.terms.size(); ++t)
        log << std::left << std::setw(10) << s.terms[t] << s.max_rel_err[t] << "  " << s.worst_param[t] << "\n";
    log << "coordinates " << s.coordinates << " (" << s.skipped << " unresolvable), tolerance " << s.tolerance << ": "
        << (s.passed() ? "ok" : "FAILED") << "\n";
    return s.passed() ? 0 : 1;
}

// ---- macs -----------------------------------------------------------------

int cmd_macs(const std::string& preset, bool baseline, std::ostream& log) {
    ModelConfig m = ModelConfig::preset_named(preset);
    if (baseline) m.encoder.use_cls = false;
    log << macs_json(estimate_macs(m, baseline)).dump(2) << "\n";
    return 0;
}

}  // namespace focustrack
