#include "tinyvlm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;

namespace tinyvlm {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, double lr, double beta1, double beta2, double eps,
             double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (auto& [name, t] : params) {
        Slot s;
        s.name = name;
        s.param = t;
        s.m.assign(t.data().size(), 0.0);
        s.v.assign(t.data().size(), 0.0);
        slots_.push_back(std::move(s));
    }
}

AdamW AdamW::for_stage(VlmModel& model, const StageConfig& stage) {
    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& group : stage.trainable_groups())
        for (auto& p : model.group_parameters(group)) params.push_back(p);
    return AdamW(std::move(params), stage.learning_rate, stage.beta1, stage.beta2, stage.eps, stage.weight_decay);
}

void AdamW::zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
        auto& w = s.param.data();
        const bool has_grad = s.param.has_grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = has_grad ? s.param.grad()[i] : 0.0;
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
            const double m_hat = s.m[i] / bc1;
            const double v_hat = s.v[i] / bc2;
            const double w_t = w[i];
            w[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_));
            // decoupled decay against the pre-update weight; zero decay is
            // bitwise plain Adam
            if (weight_decay_ != 0.0) w[i] -= lr_ * weight_decay_ * w_t;
        }
    }
}

void apply_freeze(VlmModel& model, const StageConfig& stage) {
    stage.validate();
    const auto groups = stage.trainable_groups();
    auto trainable = [&](const std::string& name) {
        for (const auto& g : groups)
            if (name.rfind(g + ".", 0) == 0) return true;
        return false;
    };
    for (auto& [name, t] : model.named_parameters()) t.set_requires_grad(trainable(name));
}

StepResult train_step(VlmModel& model, const std::vector<TrainingSample>& batch, const StageConfig& stage,
                      AdamW& opt) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    apply_freeze(model, stage);
    opt.zero_grad();

    const auto start = std::chrono::steady_clock::now();
    std::int64_t tokens = 0;
    StepResult result;
    {
        Tape tape;
        Tensor total;
        for (const auto& sample : batch) {
            Tensor loss = model.sample_loss(sample.image, sample.seq);
            total = total.defined() ? add(total, loss) : loss;
            tokens += sample.seq.length() - 1 + model.config().projector.target_tokens;
        }
        Tensor batch_loss = scale(total, 1.0 / static_cast<double>(batch.size()));
        if (!std::isfinite(batch_loss.item())) throw std::runtime_error("train_step: non-finite loss");
        tape.backward(batch_loss);
        result.loss = batch_loss.item();
    }
    opt.step();
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.tokens_per_second = seconds > 0.0 ? static_cast<double>(tokens) / seconds : 0.0;
    return result;
}

StageRunResult run_stage(VlmModel& model, const std::vector<TrainingSample>& split, const StageConfig& stage,
                         std::uint64_t seed, std::vector<LossLogRow>* log) {
    if (split.empty()) throw std::invalid_argument("run_stage: empty split");
    stage.validate();
    AdamW opt = AdamW::for_stage(model, stage);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    StageRunResult result;
    std::int64_t step_index = 0;
    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(stage.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(stage.batch_size));
            std::vector<TrainingSample> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) batch.push_back(split[order[i]]);
            StepResult sr = train_step(model, batch, stage, opt);
            result.step_losses.push_back(sr.loss);
            if (log)
                log->push_back(LossLogRow{++step_index, stage.stage, sr.loss, stage.learning_rate,
                                          sr.tokens_per_second});
        }
    }
    result.final_loss = result.step_losses.empty() ? 0.0 : result.step_losses.back();
    return result;
}

void write_loss_log(const std::vector<LossLogRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write loss log " + path);
    os << "step,stage,loss,lr,tokens_per_sec\n";
    for (const auto& r : rows)
        os << r.step << "," << r.stage << "," << r.loss << "," << r.lr << "," << r.tokens_per_second << "\n";
}

TwoStageResult run_two_stage(VlmModel& model, const std::vector<TrainingSample>& align_split,
                             const std::vector<TrainingSample>& instruct_split, const StageConfig& stage1,
                             const StageConfig& stage2, const std::string& out_dir, std::uint64_t seed) {
    if (stage1.stage != 1 || stage2.stage != 2) throw std::invalid_argument("run_two_stage: stage configs out of order");
    fs::create_directories(out_dir);
    std::vector<LossLogRow> log;

    TwoStageResult result;
    result.stage1 = run_stage(model, align_split, stage1, seed, &log);
    result.stage1_checkpoint = (fs::path(out_dir) / "stage1").string();
    model.save_checkpoint(result.stage1_checkpoint);

    result.stage2 = run_stage(model, instruct_split, stage2, seed + 1, &log);
    result.stage2_checkpoint = (fs::path(out_dir) / "stage2").string();
    model.save_checkpoint(result.stage2_checkpoint);

    result.loss_csv = (fs::path(out_dir) / "loss_log.csv").string();
    write_loss_log(log, result.loss_csv);
    return result;
}

}  // namespace tinyvlm
