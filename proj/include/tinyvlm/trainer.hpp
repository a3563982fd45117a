#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinyvlm/config.hpp"
#include "tinyvlm/model.hpp"

namespace tinyvlm {

struct TrainingSample {
    Tensor image;  // normalized [3 x H x W]
    EncodedSequence seq;
};

// AdamW over an explicit parameter list. Moment buffers exist only for the
// registered parameters; weight_decay 0 reduces to plain Adam.
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor>> params, double lr, double beta1, double beta2, double eps,
          double weight_decay);

    static AdamW for_stage(VlmModel& model, const StageConfig& stage);

    void zero_grad();
    void step();
    std::int64_t step_count() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    struct Slot {
        std::string name;
        Tensor param;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
};

// Sets requires_grad per parameter group so frozen-group gradients are never
// materialized. The vision encoder is never trainable.
void apply_freeze(VlmModel& model, const StageConfig& stage);

struct StepResult {
    double loss = 0.0;
    double tokens_per_second = 0.0;
};

// One optimizer step: forward every sample on a fresh tape, reduce as the
// mean of per-sample masked means, backward once, update trainable groups.
StepResult train_step(VlmModel& model, const std::vector<TrainingSample>& batch, const StageConfig& stage,
                      AdamW& opt);

struct LossLogRow {
    std::int64_t step = 0;
    int stage = 0;
    double loss = 0.0;
    double lr = 0.0;
    double tokens_per_second = 0.0;
};

struct StageRunResult {
    std::vector<double> step_losses;
    double final_loss = 0.0;
};

StageRunResult run_stage(VlmModel& model, const std::vector<TrainingSample>& split, const StageConfig& stage,
                         std::uint64_t seed, std::vector<LossLogRow>* log = nullptr);

struct TwoStageResult {
    StageRunResult stage1;
    StageRunResult stage2;
    std::string stage1_checkpoint;
    std::string stage2_checkpoint;
    std::string loss_csv;
};

// Stage 1 over the alignment split (projector only), checkpoint, then stage 2
// over the instruction split (projector + language model), checkpoint; the
// per-step loss log lands in <out_dir>/loss_log.csv.
TwoStageResult run_two_stage(VlmModel& model, const std::vector<TrainingSample>& align_split,
                             const std::vector<TrainingSample>& instruct_split, const StageConfig& stage1,
                             const StageConfig& stage2, const std::string& out_dir, std::uint64_t seed);

void write_loss_log(const std::vector<LossLogRow>& rows, const std::string& path);

}  // namespace tinyvlm
