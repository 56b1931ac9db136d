#include "focustrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "focustrack/errors.hpp"
#include "focustrack/tracker.hpp"

namespace focustrack {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

void augment_brightness(Tensor& img, Rng& rng) {
    const double k = rng.uniform(0.8, 1.2);
    for (auto& v : img.values()) v = std::clamp(v * k, 0.0, 1.0);
}

// Mirrors the last axis of a [ch x S x S] image.
void flip_horizontal(Tensor& img) {
    const std::size_t ch = img.dim(0), h = img.dim(1), w = img.dim(2);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w / 2; ++x) std::swap(img(c, y, x), img(c, y, w - 1 - x));
}

}  // namespace

void TrainConfig::validate() const {
    if (steps == 0 || batch == 0) throw ConfigError("train: steps and batch must be positive");
    if (!(lr_backbone >= 0.0) || !(lr_heads >= 0.0)) throw ConfigError("train: learning rates must be nonnegative");
    if (!(positive_ratio > 0.0 && positive_ratio <= 1.0)) throw ConfigError("train: positive_ratio must lie in (0, 1]");
    if (phase != "single" && phase != "two") throw ConfigError("train: phase must be 'single' or 'two'");
    if (!(phase1_fraction > 0.0 && phase1_fraction < 1.0)) throw ConfigError("train: phase1_fraction must lie in (0, 1)");
    if (!(f_base > 0.0) || f_max < f_base) throw ConfigError("train: need 0 < f_base <= f_max");
    if (!(template_factor > 0.0)) throw ConfigError("train: template_factor must be positive");
    if (!(scale_jitter >= 0.0 && scale_jitter < 1.0)) throw ConfigError("train: scale_jitter must lie in [0, 1)");
    if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be nonnegative");
}

TrainConfig TrainConfig::toy_schedule() {
    TrainConfig c;
    c.steps = 1000;
    c.lr_backbone = 1e-4;
    c.lr_heads = 1e-3;
    c.scale_jitter = 0.5;
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"steps", c.steps},
            {"batch", c.batch},
            {"lr_backbone", c.lr_backbone},
            {"lr_heads", c.lr_heads},
            {"positive_ratio", c.positive_ratio},
            {"phase", c.phase},
            {"phase1_fraction", c.phase1_fraction},
            {"phase2_trainable", c.phase2_trainable},
            {"with_atm", c.with_atm},
            {"fixed_batch", c.fixed_batch},
            {"clip_norm", c.clip_norm},
            {"train_f_base", c.f_base},
            {"train_f_max", c.f_max},
            {"template_factor", c.template_factor},
            {"scale_jitter", c.scale_jitter},
            {"augment", c.augment},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    try {
        c.steps = j.value("steps", c.steps);
        c.batch = j.value("batch", c.batch);
        c.lr_backbone = j.value("lr_backbone", c.lr_backbone);
        c.lr_heads = j.value("lr_heads", c.lr_heads);
        c.positive_ratio = j.value("positive_ratio", c.positive_ratio);
        c.phase = j.value("phase", c.phase);
        c.phase1_fraction = j.value("phase1_fraction", c.phase1_fraction);
        c.phase2_trainable = j.value("phase2_trainable", c.phase2_trainable);
        c.with_atm = j.value("with_atm", c.with_atm);
        c.fixed_batch = j.value("fixed_batch", c.fixed_batch);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.f_base = j.value("train_f_base", c.f_base);
        c.f_max = j.value("train_f_max", c.f_max);
        c.template_factor = j.value("template_factor", c.template_factor);
        c.scale_jitter = j.value("scale_jitter", c.scale_jitter);
        c.augment = j.value("augment", c.augment);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::size_t worker_count(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FOCUSTRACK_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
        throw ConfigError("FOCUSTRACK_THREADS must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

bool is_backbone_param(const std::string& name) {
    for (const char* p : {"patch_embed.", "cls.", "pos.", "id.", "blk"})
        if (starts_with(name, p)) return true;
    return false;
}

TrainSample materialize(const std::vector<Sequence>& seqs, const PairDraw& draw, const ModelConfig& model,
                        const TrainConfig& cfg, Rng& rng) {
    const auto& enc = model.encoder;
    const Sequence& ts = seqs.at(draw.template_seq);
    const MaybeBox& tb = ts.annotation.boxes.at(draw.template_frame);
    if (!tb) throw SamplingError("materialize: template frame has no visible target");
    TrainSample s;
    s.label = draw.label;
    Region tr = extract_region(ts.frames[draw.template_frame], {tb->cx, tb->cy}, crop_side(tb, cfg.template_factor),
                               enc.template_side);
    s.template_img = to_channels(tr.patch, enc.channels);

    const Sequence& ss = seqs.at(draw.search_seq);
    const Tensor& frame = ss.frames.at(draw.search_frame);
    const double f = rng.uniform(cfg.f_base, cfg.f_max);
    Region sr;
    if (draw.label == 1) {
        const MaybeBox& b = ss.annotation.boxes.at(draw.search_frame);
        if (!b) throw SamplingError("materialize: positive search frame has no visible target");
        // The reference box stands in for the previous prediction.
        const double k = std::exp(rng.uniform(-1.0, 1.0) * std::log1p(cfg.scale_jitter));
        const BoundingBox ref{b->cx, b->cy, b->w * k, b->h * k};
        const std::size_t side = crop_side(ref, f);
        const double lim = std::max(0.0, 0.5 * static_cast<double>(side) - 0.5 * std::max(b->w, b->h) - 1.0);
        const double reach = rng.bernoulli(0.5) ? std::min(lim, 0.1 * static_cast<double>(side)) : lim;
        const Point c{b->cx + rng.uniform(-reach, reach), b->cy + rng.uniform(-reach, reach)};
        sr = extract_region(frame, c, side, enc.search_side);
        s.target = to_crop(b, sr.transform);
    } else {
        const std::size_t side = crop_side(tb, f);
        const MaybeBox& other = ss.annotation.boxes.at(draw.search_frame);
        const double fw = static_cast<double>(frame.dim(frame.rank() - 1));
        const double fh = static_cast<double>(frame.dim(frame.rank() - 2));
        const double half = 0.5 * static_cast<double>(side);
        Point c{};
        for (int attempt = 0; attempt < 100; ++attempt) {
            c = {rng.uniform(0.0, fw), rng.uniform(0.0, fh)};
            if (!other) break;
            const bool outside = other->x2() < c.x - half || other->x1() > c.x + half || other->y2() < c.y - half ||
                                 other->y1() > c.y + half;
            if (outside) break;
        }
        sr = extract_region(frame, c, side, enc.search_side);
    }
    s.search_img = to_channels(sr.patch, enc.channels);

    if (cfg.augment) {
        if (rng.bernoulli(0.5)) {
            flip_horizontal(s.template_img);
            flip_horizontal(s.search_img);
            if (s.target) s.target->cx = static_cast<double>(enc.search_side) - sr.transform.scale - s.target->cx;
        }
        augment_brightness(s.template_img, rng);
        augment_brightness(s.search_img, rng);
    }
    return s;
}

Adam::Adam(const GradientTape& params, double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& [name, t] : params.params()) {
        m_[name].assign(t.size(), 0.0);
        v_[name].assign(t.size(), 0.0);
    }
}

void Adam::step(GradientTape& params, const std::function<double(const std::string&)>& lr,
                const std::function<bool(const std::string&)>& trainable) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& name : params.names()) {
        if (trainable && !trainable(name)) continue;
        const double rate = lr(name);
        Tensor& p = params.param(name);
        const Tensor& g = params.grad(name);
        auto& m = m_.at(name);
        auto& v = v_.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            p[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
        p.finalize(("adam update of " + name).c_str());
    }
}

TrainResult train(const std::vector<Sequence>& seqs, const ModelConfig& model, GradientTape weights,
                  const TrainConfig& cfg, const LossConfig& loss, const StepCallback& on_step) {
    cfg.validate();
    model.validate();
    loss.validate();
    if (seqs.size() < 2) throw SamplingError("train: need at least two sequences");

    Rng rng(cfg.seed);
    Adam adam(weights);
    const std::size_t phase1 =
        cfg.phase == "two" ? static_cast<std::size_t>(std::lround(cfg.phase1_fraction * static_cast<double>(cfg.steps))) : 0;
    const std::size_t workers = std::min(worker_count(cfg.threads), cfg.batch);
    auto lr = [&](const std::string& n) { return is_backbone_param(n) ? cfg.lr_backbone : cfg.lr_heads; };

    TrainResult result;
    std::vector<TrainSample> fixed;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const bool first_phase = step < phase1;
        std::function<bool(const std::string&)> trainable;
        double ratio = cfg.positive_ratio;
        if (cfg.phase == "two") {
            if (first_phase) {
                ratio = 1.0;
                trainable = [](const std::string& n) { return !starts_with(n, "sra."); };
            } else {
                trainable = [&cfg](const std::string& n) {
                    return std::any_of(cfg.phase2_trainable.begin(), cfg.phase2_trainable.end(),
                                       [&n](const std::string& p) { return starts_with(n, p); });
                };
            }
        }

        std::vector<TrainSample> batch;
        if (cfg.fixed_batch && !fixed.empty()) {
            batch = fixed;
        } else {
            for (const auto& d : sample_pairs(seqs, cfg.batch, ratio, rng)) batch.push_back(materialize(seqs, d, model, cfg, rng));
            if (cfg.fixed_batch) fixed = batch;
        }

        // Per-sample gradients, reduced in sample order so results do not
        // depend on the worker count.
        weights.zero_grad();
        std::vector<GradientTape> grads(batch.size());
        std::vector<LossParts> parts(batch.size());
        std::vector<std::string> errors(batch.size());
        auto work = [&](std::size_t w) {
            for (std::size_t i = w; i < batch.size(); i += workers) {
                try {
                    grads[i] = weights;
                    ad::Binding bind(weights, true, trainable);
                    SampleLoss sl = sample_loss(batch[i], model, loss, bind, cfg.with_atm);
                    ad::backward(sl.total);
                    bind.accumulate_grads(grads[i]);
                    parts[i] = sl.parts;
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
            for (auto& t : pool) t.join();
        }
        for (const auto& e : errors) {
            if (!e.empty()) throw NumericError("train: step " + std::to_string(step + 1) + ": " + e);
        }

        LossParts mean;
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            weights.accumulate(grads[i]);
            mean.l_focal += parts[i].l_focal * inv;
            mean.l_l1 += parts[i].l_l1 * inv;
            mean.l_giou += parts[i].l_giou * inv;
            mean.l_logits += parts[i].l_logits * inv;
            mean.l_mask += parts[i].l_mask * inv;
            mean.total += parts[i].total * inv;
        }
        if (!std::isfinite(mean.total)) throw NumericError("train: loss diverged at step " + std::to_string(step + 1));
        weights.scale_grads(inv);

        if (cfg.clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& n : weights.names()) {
                if (trainable && !trainable(n)) continue;
                for (double g : weights.grad(n).values()) sq += g * g;
            }
            const double norm = std::sqrt(sq);
            if (norm > cfg.clip_norm) weights.scale_grads(cfg.clip_norm / norm);
        }
        adam.step(weights, lr, trainable);
        result.history.push_back(mean);
        if (on_step) on_step(step + 1, mean, weights);
    }
    weights.zero_grad();
    result.weights = std::move(weights);
    return result;
}

std::string loss_csv(const std::vector<LossParts>& history, const nlohmann::json& config) {
    std::string s = "# config: " + config.dump() + "\n";
    s += "step,l_focal,l_l1,l_giou,l_logits,l_mask,total\n";
    char line[256];
    for (std::size_t i = 0; i < history.size(); ++i) {
        const LossParts& p = history[i];
        std::snprintf(line, sizeof line, "%zu,%.8f,%.8f,%.8f,%.8f,%.8f,%.8f\n", i + 1, p.l_focal, p.l_l1, p.l_giou,
                      p.l_logits, p.l_mask, p.total);
        s += line;
    }
    return s;
}

PresenceEval evaluate_presence(const std::vector<Sequence>& seqs, const ModelConfig& model,
                               const GradientTape& weights, std::size_t count, double positive_ratio,
                               std::uint64_t seed) {
    if (!model.encoder.use_cls) throw ConfigError("evaluate_presence: model has no presence branch");
    Rng rng(seed);
    TrainConfig cfg;
    cfg.augment = false;
    PresenceEval out;
    std::size_t correct = 0;
    for (const auto& d : sample_pairs(seqs, count, positive_ratio, rng)) {
        const TrainSample s = materialize(seqs, d, model, cfg, rng);
        const double p = run_model(s.template_img, s.search_img, model, weights, false).presence.probs[0];
        const int pred = p >= 0.5 ? 1 : 0;
        correct += pred == s.label ? 1 : 0;
        if (s.label == 1) {
            out.mean_pos += p;
            ++out.positives;
        } else {
            out.mean_neg += p;
            ++out.negatives;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(count);
    if (out.positives) out.mean_pos /= static_cast<double>(out.positives);
    if (out.negatives) out.mean_neg /= static_cast<double>(out.negatives);
    return out;
}

}  // namespace focustrack
