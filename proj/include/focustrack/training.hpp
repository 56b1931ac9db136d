#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "focustrack/model.hpp"
#include "focustrack/sequence.hpp"

namespace focustrack {

struct TrainConfig {
    std::size_t steps = 400;
    std::size_t batch = 8;
    double lr_backbone = 4e-5;
    double lr_heads = 4e-4;
    double positive_ratio = 0.7;
    std::string phase = "single";  // single | two
    double phase1_fraction = 0.5;  // share of `steps` spent on positives-only in two-phase mode
    // Parameter-name prefixes trainable in phase 2; everything else is frozen.
    std::vector<std::string> phase2_trainable{"sra."};
    bool with_atm = true;
    // Reuse one materialized batch for every step.
    bool fixed_batch = false;
    double clip_norm = 0.0;  // global gradient norm cap, 0 disables
    // Search-crop sampling for positives.
    double f_base = 6.0;
    double f_max = 8.0;
    double template_factor = 2.0;
    double scale_jitter = 0.15;
    bool augment = true;
    std::size_t threads = 0;  // 0 = FOCUSTRACK_THREADS or hardware concurrency
    std::uint64_t seed = 0;

    void validate() const;
    // From-scratch schedule for the toy preset: 1000 steps at 1e-4 / 1e-3, wide scale jitter.
    static TrainConfig toy_schedule();
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Worker count: `requested` if nonzero, else FOCUSTRACK_THREADS, else hardware concurrency.
std::size_t worker_count(std::size_t requested = 0);

// Turns a drawn pair into cropped, augmented model inputs.
TrainSample materialize(const std::vector<Sequence>& seqs, const PairDraw& draw, const ModelConfig& model,
                        const TrainConfig& cfg, Rng& rng);

// True for encoder parameters (learning rate lr_backbone).
bool is_backbone_param(const std::string& name);

class Adam {
public:
    Adam(const GradientTape& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Updates every parameter accepted by `trainable` with its group learning rate.
    void step(GradientTape& params, const std::function<double(const std::string&)>& lr,
              const std::function<bool(const std::string&)>& trainable);

private:
    double b1_, b2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct TrainResult {
    std::vector<LossParts> history;  // batch mean per step
    GradientTape weights;
};

// Called after each update with the 1-based step, the batch-mean losses and the updated weights.
using StepCallback = std::function<void(std::size_t step, const LossParts& parts, const GradientTape& weights)>;

// Mini-batch training on `seqs` starting from `weights`.
TrainResult train(const std::vector<Sequence>& seqs, const ModelConfig& model, GradientTape weights,
                  const TrainConfig& cfg, const LossConfig& loss = {}, const StepCallback& on_step = {});

// step,l_focal,l_l1,l_giou,l_logits,l_mask,total with a leading "# config:" line.
std::string loss_csv(const std::vector<LossParts>& history, const nlohmann::json& config);

struct PresenceEval {
    double accuracy = 0.0;
    double mean_pos = 0.0;  // mean probs[0] on positives
    double mean_neg = 0.0;  // mean probs[0] on negatives
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Classifies `count` freshly sampled pairs; present iff probs[0] >= 0.5.
PresenceEval evaluate_presence(const std::vector<Sequence>& seqs, const ModelConfig& model,
                               const GradientTape& weights, std::size_t count, double positive_ratio,
                               std::uint64_t seed);

}  // namespace focustrack
