#include <doctest.h>

#include <fstream>
#include <sstream>

#include "focustrack/commands.hpp"
#include "focustrack/errors.hpp"
#include "focustrack/macs.hpp"
#include "focustrack/ntc1.hpp"
#include "test_util.hpp"

using namespace focustrack;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Smallest model the validators accept; keeps repeated gradient checks cheap.
ModelConfig micro() {
    ModelConfig m = ModelConfig::toy();
    m.dtype = DType::f64;
    m.encoder.embed_dim = 16;
    m.encoder.layers = 1;
    m.encoder.heads = 2;
    m.encoder.template_side = 16;
    m.encoder.search_side = 32;
    m.encoder.tap_layers = {1};
    m.head.channels = 8;
    m.presence.heads = 2;
    m.atm.blocks = 1;
    m.atm.layers_per_block = 1;
    m.atm.hidden = 8;
    m.atm.heads = 2;
    return m;
}

}  // namespace

TEST_CASE("run config") {
    CHECK_THROWS_AS(RunConfig::from_json({{"use_sra", true}, {"learning_rate", 1.0}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::array()), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"preset", "huge"}}), ConfigError);

    const RunConfig d = RunConfig::from_json(nlohmann::json::object());
    CHECK(d.model.preset == "toy");
    CHECK(d.train.lr_backbone == 1e-4);
    CHECK(d.train.lr_heads == 1e-3);
    CHECK(d.train.scale_jitter == 0.5);

    const RunConfig full = RunConfig::from_json({{"preset", "full"}});
    CHECK(full.model.encoder.embed_dim == 768);
    CHECK(full.train.lr_backbone == 4e-5);
    CHECK(full.train.lr_heads == 4e-4);
    CHECK(full.train.positive_ratio == 0.7);

    const RunConfig c = RunConfig::from_json({{"use_sra", false}, {"w_l1", 3.0}, {"steps", 7}, {"embed_dim", 32}});
    CHECK_FALSE(c.tracker.use_sra);
    CHECK(c.loss.w_l1 == 3.0);
    CHECK(c.train.steps == 7);
    CHECK(c.model.encoder.embed_dim == 32);
    const RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_FALSE(c.to_json(false).contains("weights"));
}

TEST_CASE("toy MAC count equals a hand sum") {
    // Toy: P 8, C 64, L 4, template 32 (16 tokens), search 64 (64 tokens, grid 8),
    // head channels 32/16/8, ATM 3 blocks x 3 layers at hidden 32, ffn ratio 2.
    const std::uint64_t patch = 80ull * 64 * 64;
    const std::uint64_t layer81 = 4ull * 81 * 64 * 64 + 2ull * 81 * 81 * 64 + 8ull * 81 * 64 * 64;
    const std::uint64_t layer80 = 4ull * 80 * 64 * 64 + 2ull * 80 * 80 * 64 + 8ull * 80 * 64 * 64;
    const std::uint64_t convs = 64ull * 9 * (64 * 32 + 32 * 16 + 16 * 8);
    const std::uint64_t head = 3 * convs + 64ull * 8 * (1 + 2 + 2);
    const std::uint64_t pool = 64ull * 64 + 2ull * 64 * 64 * 64 + 2ull * 64 * 64 + 64ull * 64;
    const std::uint64_t sra = pool + 64ull * 32 + 32ull * 2;
    const std::uint64_t atm_layer = (32ull * 32 + 2ull * 64 * 32 * 32 + 2ull * 64 * 32 + 32ull * 32) + 2ull * 32 * 64;
    const std::uint64_t atm = 3 * (64ull * 64 * 32 + 3 * atm_layer) + 32ull * 2;

    CHECK(layer81 == 4821120);
    CHECK(head == 4647424);
    CHECK(sra == 542784);
    CHECK(atm == 1665088);

    const MacBreakdown m = estimate_macs(ModelConfig::toy(), false);
    CHECK(m.patch_embed == patch);
    CHECK(m.encoder == 4 * layer81);
    CHECK(m.head == head);
    CHECK(m.sra == sra);
    CHECK(m.atm == atm);
    CHECK(m.total() == 26467456);

    ModelConfig base = ModelConfig::toy();
    base.encoder.use_cls = false;
    const MacBreakdown b = estimate_macs(base, true);
    CHECK(b.total() == patch + 4 * layer80 + head);
    CHECK(b.total() == 23980544);
}

TEST_CASE("full preset MACs against the published figures") {
    ModelConfig base = ModelConfig::full();
    base.encoder.use_cls = false;
    const double ours = static_cast<double>(estimate_macs(ModelConfig::full(), false).total()) / 1e9;
    const double plain = static_cast<double>(estimate_macs(base, true).total()) / 1e9;
    CHECK(std::abs(plain - 29.1) <= 0.1 * 29.1);
    CHECK(std::abs(ours - 30.1) <= 0.1 * 30.1);
    CHECK(ours > plain);
    CHECK(ours - plain < 0.05 * plain);

    std::ostringstream log;
    CHECK(cmd_macs("toy", false, log) == 0);
    CHECK(nlohmann::json::parse(log.str()).at("total").get<std::uint64_t>() == 26467456);
}

TEST_CASE("gradient check report") {
    const GradCheckSummary a = run_gradcheck(micro(), 3);
    const GradCheckSummary b = run_gradcheck(micro(), 3);
    CHECK(a.terms.size() == 6);
    CHECK(a.max_rel_err == b.max_rel_err);
    CHECK(a.worst_param == b.worst_param);
    CHECK(a.tolerance == 1e-4);
    CHECK(a.passed());

    ModelConfig f32 = micro();
    f32.dtype = DType::f32;
    // Single-precision differences are only indicative; the report carries the relaxed bound.
    const GradCheckSummary c = run_gradcheck(f32, 3);
    CHECK(c.tolerance == 1e-2);
    CHECK(c.skipped > 0);

    std::ostringstream log;
    CHECK_THROWS_AS(cmd_gradcheck("full", 0, DType::f64, log), ConfigError);
}

TEST_CASE("synth, track, eval and train commands") {
    const fs::path root = testutil::scratch_dir("cli");
    write(root / "spec.json",
          R"({"name": "s", "count": 2, "frame_side": 128, "frames": 5, "size_min": 8, "size_max": 12})");
    std::ostringstream log;
    REQUIRE(cmd_synth(root / "spec.json", root / "data", 11, 8, log) == 0);
    const auto dirs = sequence_dirs(root / "data");
    REQUIRE(dirs.size() == 2);
    CHECK(dirs[0].filename() == "s_000");
    CHECK(nlohmann::json::parse(slurp(dirs[1] / "spec.json")).at("seed") == 12);
    CHECK(sequence_dirs(dirs[0]).size() == 1);
    CHECK_THROWS_AS(sequence_dirs(root / "spec.json"), FormatError);

    RunConfig cfg;
    cfg.model.dtype = DType::f64;
    save_ntc1(root / "w.ntc1", init_model(cfg.model), {{"config", cfg.to_json(false)}});

    SUBCASE("track twice gives identical files") {
        REQUIRE(cmd_track(cfg, root / "w.ntc1", root / "data", root / "a", {}, log) == 0);
        REQUIRE(cmd_track(cfg, root / "w.ntc1", root / "data", root / "b", {}, log) == 0);
        for (const char* f : {"s_000.json", "s_000_trace.csv", "s_001.json", "s_001_trace.csv"})
            CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
        const std::string trace = slurp(root / "a" / "s_000_trace.csv");
        CHECK(std::count(trace.begin(), trace.end(), '\n') == 2 + 4);

        RunConfig off = cfg;
        off.tracker.use_sra = false;
        REQUIRE(cmd_track(off, root / "w.ntc1", root / "data", root / "c", {false, true}, log) == 0);
        std::istringstream rows(slurp(root / "c" / "s_001_trace.csv"));
        std::string line;
        std::getline(rows, line);
        std::getline(rows, line);
        while (std::getline(rows, line)) {
            std::vector<std::string> cols;
            std::stringstream ls(line);
            for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
            REQUIRE(cols.size() == 10);
            CHECK(cols[7] == "6");
        }
        CHECK(fs::exists(root / "c" / "s_001_masks" / "000002.png"));

        REQUIRE(cmd_eval(root / "a", root / "data", root / "report.json", log) == 0);
        const auto rep = nlohmann::json::parse(slurp(root / "report.json"));
        CHECK(rep.at("per_sequence").size() == 2);
        CHECK(rep.at("auc").get<double>() >= 0.0);
        CHECK(fs::exists(root / "report_curves.csv"));
    }
    SUBCASE("zero learning rates on a fixed batch leave the loss constant") {
        RunConfig t = cfg;
        t.train.steps = 3;
        t.train.batch = 2;
        t.train.lr_backbone = 0.0;
        t.train.lr_heads = 0.0;
        t.train.fixed_batch = true;
        REQUIRE(cmd_train(t, root / "data", root / "t.ntc1", false, log) == 0);
        CHECK(log.str().find("warning: both learning rates are zero") != std::string::npos);
        std::istringstream rows(slurp(root / "t_loss.csv"));
        std::string line, first;
        std::getline(rows, line);
        std::getline(rows, line);
        std::size_t n = 0;
        while (std::getline(rows, line)) {
            const std::string tail = line.substr(line.find(','));
            if (n++ == 0) first = tail;
            CHECK(tail == first);
        }
        CHECK(n == 3);
        const Ntc1Contents w = load_ntc1(root / "t.ntc1");
        CHECK(w.meta.at("steps") == 3);
        CHECK(w.meta.at("config").at("lr_heads") == 0.0);

        RunConfig full = t;
        full.model = ModelConfig::full();
        CHECK_THROWS_AS(cmd_train(full, root / "data", root / "f.ntc1", false, log), ConfigError);
    }
}
