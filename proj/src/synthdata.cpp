#include "focustrack/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "focustrack/errors.hpp"
#include "focustrack/png_io.hpp"
#include "focustrack/rng.hpp"

namespace focustrack {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Lattice value in [0, 1) for integer world cell (ix, iy).
double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::uint64_t octave) {
    std::uint64_t h = mix64(seed ^ 0x9e3779b97f4a7c15ULL * (octave + 1));
    h = mix64(h ^ static_cast<std::uint64_t>(ix) * 0xd6e8feb86659fd93ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(iy) * 0xa0761d6478bd642fULL);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Two-octave value noise in world coordinates, range [0, 1).
double value_noise(std::uint64_t seed, double wx, double wy, double cell) {
    double total = 0.0, norm = 0.0, amp = 1.0;
    for (std::uint64_t o = 0; o < 2; ++o) {
        const double c = cell / static_cast<double>(1u << o);
        const double gx = wx / c, gy = wy / c;
        const double fx = std::floor(gx), fy = std::floor(gy);
        const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
        const double tx = smooth(gx - fx), ty = smooth(gy - fy);
        const double v00 = lattice(seed, ix, iy, o), v10 = lattice(seed, ix + 1, iy, o);
        const double v01 = lattice(seed, ix, iy + 1, o), v11 = lattice(seed, ix + 1, iy + 1, o);
        const double top = v00 + (v10 - v00) * tx;
        const double bottom = v01 + (v11 - v01) * tx;
        total += amp * (top + (bottom - top) * ty);
        norm += amp;
        amp *= 0.5;
    }
    return total / norm;
}

struct Blob {
    double cx, cy, w, h, peak;
};

// Adds a gaussian blob (sigma = size / 4) truncated at its box.
void render_blob(std::vector<double>& img, std::size_t side, const Blob& b) {
    const double sx = b.w / 4.0, sy = b.h / 4.0;
    const auto lo_x = static_cast<long>(std::ceil(b.cx - b.w / 2.0));
    const auto hi_x = static_cast<long>(std::floor(b.cx + b.w / 2.0));
    const auto lo_y = static_cast<long>(std::ceil(b.cy - b.h / 2.0));
    const auto hi_y = static_cast<long>(std::floor(b.cy + b.h / 2.0));
    const long n = static_cast<long>(side);
    for (long y = std::max(0L, lo_y); y <= std::min(n - 1, hi_y); ++y) {
        const double dy = (static_cast<double>(y) - b.cy) / sy;
        for (long x = std::max(0L, lo_x); x <= std::min(n - 1, hi_x); ++x) {
            const double dx = (static_cast<double>(x) - b.cx) / sx;
            img[static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x)] +=
                b.peak * std::exp(-0.5 * (dx * dx + dy * dy));
        }
    }
}

std::string frame_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.png", index);
    return buf;
}

nlohmann::json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw FormatError("cannot open '" + p.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + p.string() + "': " + e.what());
    }
}

}  // namespace

void SynthSpec::validate() const {
    if (frame_side < 16) throw ConfigError("synth: frame_side must be at least 16");
    if (frames == 0) throw ConfigError("synth: need at least one frame");
    if (!(size_min >= 2.0) || size_max < size_min) throw ConfigError("synth: need 2 <= size_min <= size_max");
    if (size_max * 4.0 > static_cast<double>(frame_side)) throw ConfigError("synth: target too large for the frame");
    if (!(motion_std >= 0.0) || !(noise_std >= 0.0)) throw ConfigError("synth: std values must be nonnegative");
    if (!(clutter_density > 0.0) || !(clutter_intensity >= 0.0) || !(distractor_intensity >= 0.0)) {
        throw ConfigError("synth: clutter settings out of range");
    }
    if (!(target_min > 0.0) || target_max < target_min || target_max > 1.0) {
        throw ConfigError("synth: need 0 < target_min <= target_max <= 1");
    }
    for (const auto& j : jumps) {
        if (j.frame == 0 || j.frame >= frames) throw ConfigError("synth: jump frames must lie in [1, frames)");
    }
    for (const auto& o : occlusions) {
        if (o.begin == 0 || o.end <= o.begin || o.end > frames) {
            throw ConfigError("synth: occlusions must satisfy 1 <= begin < end <= frames");
        }
    }
}

nlohmann::json synth_spec_to_json(const SynthSpec& s) {
    nlohmann::json jumps = nlohmann::json::array();
    for (const auto& j : s.jumps) jumps.push_back({{"frame", j.frame}, {"dx", j.dx}, {"dy", j.dy}});
    nlohmann::json occ = nlohmann::json::array();
    for (const auto& o : s.occlusions) occ.push_back({{"begin", o.begin}, {"end", o.end}});
    return {{"name", s.name},
            {"frame_side", s.frame_side},
            {"frames", s.frames},
            {"size_min", s.size_min},
            {"size_max", s.size_max},
            {"motion_std", s.motion_std},
            {"jumps", jumps},
            {"occlusions", occ},
            {"clutter_density", s.clutter_density},
            {"clutter_intensity", s.clutter_intensity},
            {"distractors", s.distractors},
            {"distractor_intensity", s.distractor_intensity},
            {"target_min", s.target_min},
            {"target_max", s.target_max},
            {"noise_std", s.noise_std},
            {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.name = j.value("name", s.name);
        s.frame_side = j.value("frame_side", s.frame_side);
        s.frames = j.value("frames", s.frames);
        s.size_min = j.value("size_min", s.size_min);
        s.size_max = j.value("size_max", s.size_max);
        s.motion_std = j.value("motion_std", s.motion_std);
        if (j.contains("jumps")) {
            for (const auto& e : j.at("jumps")) s.jumps.push_back({e.at("frame"), e.value("dx", 0.0), e.value("dy", 0.0)});
        }
        if (j.contains("occlusions")) {
            for (const auto& e : j.at("occlusions")) s.occlusions.push_back({e.at("begin"), e.at("end")});
        }
        s.clutter_density = j.value("clutter_density", s.clutter_density);
        s.clutter_intensity = j.value("clutter_intensity", s.clutter_intensity);
        s.distractors = j.value("distractors", s.distractors);
        s.distractor_intensity = j.value("distractor_intensity", s.distractor_intensity);
        s.target_min = j.value("target_min", s.target_min);
        s.target_max = j.value("target_max", s.target_max);
        s.noise_std = j.value("noise_std", s.noise_std);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

double view_half_extent(const BoundingBox& box, double factor) {
    return 0.5 * factor * std::sqrt(box.w * box.h);
}

Sequence generate(const SynthSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    Rng setup = root.fork(1), walk = root.fork(2), noise_root = root.fork(3);
    const std::uint64_t clutter_seed = root.fork(4).next_u64();
    const double side = static_cast<double>(spec.frame_side);
    const std::size_t n = spec.frame_side;

    const double w = setup.uniform(spec.size_min, spec.size_max);
    const double h = setup.uniform(spec.size_min, spec.size_max);
    const double peak = setup.uniform(spec.target_min, spec.target_max);
    double px = side * (0.5 + setup.uniform(-0.2, 0.2));  // world position
    double py = side * (0.5 + setup.uniform(-0.2, 0.2));

    std::vector<Blob> distractors;
    const double keep_off = 3.0 * std::max(w, h);
    while (distractors.size() < spec.distractors) {
        Blob b{side * setup.uniform(0.1, 0.9), side * setup.uniform(0.1, 0.9),
               setup.uniform(spec.size_min, spec.size_max), setup.uniform(spec.size_min, spec.size_max),
               spec.distractor_intensity * setup.uniform(0.6, 1.0)};
        if (std::hypot(b.cx - px, b.cy - py) >= keep_off) distractors.push_back(b);
    }

    std::map<std::size_t, std::pair<double, double>> jumps;
    for (const auto& j : spec.jumps) {
        auto& d = jumps[j.frame];
        d.first += j.dx;
        d.second += j.dy;
    }
    auto occluded = [&](std::size_t t) {
        return std::any_of(spec.occlusions.begin(), spec.occlusions.end(),
                           [t](const Occlusion& o) { return t >= o.begin && t < o.end; });
    };

    Sequence seq;
    seq.name = spec.name;
    const double margin = std::max(w, h) + 4.0;
    double vx = 0.0, vy = 0.0, sx = 0.0, sy = 0.0;  // velocity and camera shift
    for (std::size_t t = 0; t < spec.frames; ++t) {
        if (t > 0) {
            vx = 0.85 * vx + spec.motion_std * walk.normal();
            vy = 0.85 * vy + spec.motion_std * walk.normal();
            // Steer back toward the interior instead of leaving the frame.
            if ((px + sx + vx < margin && vx < 0.0) || (px + sx + vx > side - 1.0 - margin && vx > 0.0)) vx = -vx;
            if ((py + sy + vy < margin && vy < 0.0) || (py + sy + vy > side - 1.0 - margin && vy > 0.0)) vy = -vy;
            px += vx;
            py += vy;
        }
        if (auto it = jumps.find(t); it != jumps.end()) {
            sx += it->second.first;
            sy += it->second.second;
        }

        std::vector<double> img(n * n);
        const double cell = 64.0 / spec.clutter_density;
        if (spec.clutter_intensity > 0.0) {
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x)
                    img[y * n + x] = spec.clutter_intensity *
                                     value_noise(clutter_seed, static_cast<double>(x) - sx, static_cast<double>(y) - sy, cell);
        }
        for (const auto& d : distractors) render_blob(img, n, {d.cx + sx, d.cy + sy, d.w, d.h, d.peak});

        const BoundingBox box{px + sx, py + sy, w, h};
        const bool on_frame = box.x2() > -0.5 && box.x1() < side - 0.5 && box.y2() > -0.5 && box.y1() < side - 0.5;
        const bool visible = on_frame && !occluded(t);
        if (visible) render_blob(img, n, {box.cx, box.cy, w, h, peak});

        if (spec.noise_std > 0.0) {
            Rng nr = noise_root.fork(t);
            for (auto& v : img) v += spec.noise_std * nr.normal();
        }
        for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
        seq.frames.emplace_back(Shape{n, n}, std::move(img), DType::f32);
        seq.annotation.boxes.push_back(visible ? MaybeBox(box) : std::nullopt);
        seq.annotation.exist.push_back(visible ? 1 : 0);
    }
    return seq;
}

void save_sequence(const Sequence& seq, const std::filesystem::path& dir, int bit_depth, const nlohmann::json& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        const Tensor& f = seq.frames[i];
        write_png_gray(dir / frame_name(i + 1), f.rank() == 3 ? f.reshaped({f.dim(1), f.dim(2)}) : f, bit_depth);
    }
    std::ofstream(dir / "annotation.json") << annotation_to_json(seq.annotation).dump() << "\n";
    if (!spec.is_null()) std::ofstream(dir / "spec.json") << spec.dump(2) << "\n";
}

Sequence load_sequence(const std::filesystem::path& dir, std::size_t channels) {
    namespace fs = std::filesystem;
    if (channels == 0) throw ConfigError("load_sequence: channels must be positive");
    if (!fs::is_directory(dir)) throw FormatError("load_sequence: '" + dir.string() + "' is not a directory");
    std::map<std::size_t, fs::path> numbered;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        const std::string stem = e.path().stem().string();
        if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            throw FormatError("load_sequence: frame name '" + e.path().filename().string() + "' is not numeric");
        }
        numbered.emplace(std::stoull(stem), e.path());
    }
    if (numbered.empty()) throw FormatError("load_sequence: no PNG frames in '" + dir.string() + "'");

    Sequence seq;
    seq.name = dir.filename().string();
    if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
    std::size_t expected = std::min<std::size_t>(numbered.begin()->first, 1);
    for (const auto& [index, path] : numbered) {
        if (index != expected) throw FormatError("load_sequence: missing frame " + frame_name(expected) + " in '" + dir.string() + "'");
        ++expected;
        Tensor img = read_png_gray(path);
        if (channels > 1) {
            std::vector<double> v;
            v.reserve(channels * img.size());
            for (std::size_t c = 0; c < channels; ++c) v.insert(v.end(), img.values().begin(), img.values().end());
            img = Tensor({channels, img.dim(0), img.dim(1)}, std::move(v), img.dtype());
        }
        seq.frames.push_back(std::move(img));
    }
    const fs::path ann = dir / "annotation.json";
    if (!fs::exists(ann)) throw FormatError("load_sequence: missing '" + ann.string() + "'");
    seq.annotation = annotation_from_json(read_json_file(ann));
    if (seq.annotation.size() != seq.frames.size()) {
        throw FormatError("load_sequence: '" + ann.string() + "' has " + std::to_string(seq.annotation.size()) +
                          " entries for " + std::to_string(seq.frames.size()) + " frames");
    }
    return seq;
}

}  // namespace focustrack
