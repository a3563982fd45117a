#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tinyvlm/config.hpp"
#include "tinyvlm/data.hpp"
#include "tinyvlm/model.hpp"
#include "tinyvlm/trainer.hpp"

namespace tinyvlm {

struct EvalResult {
    double masked_token_accuracy = 0.0;  // teacher-forced argmax over supervised targets
    double exact_answer_accuracy = 0.0;  // greedy regeneration of full answers
    double mean_loss = 0.0;
    std::int64_t supervised_tokens = 0;
    std::int64_t answers = 0;
};

EvalResult evaluate(VlmModel& model, const std::vector<TrainingSample>& split, const Vocabulary& vocab,
                    int max_new_slack = 4);

struct AblationCell {
    std::string id;
    ModelConfig cfg;
};

struct AblationOptions {
    std::vector<AblationCell> grid;
    StageConfig stage1;
    StageConfig stage2;
    std::vector<std::uint64_t> seeds = {1};
    std::string work_dir;  // checkpoint scratch space; empty = system temp
    int bench_reps = 2;
    int bench_max_new = 8;
};

// All five projector kinds at their natural token counts on the toy grid.
std::vector<AblationCell> projector_grid(int vocab_size);
// XDP over the toy token ladder {16, 4, 1}.
std::vector<AblationCell> token_grid(int vocab_size);

struct AblationRow {
    std::string id;
    std::string projector;
    int tokens = 0;
    std::uint64_t seed = 0;
    std::string status;  // "ok" or "failed: <reason>"
    double stage1_final_loss = 0.0;
    double stage2_final_loss = 0.0;
    double masked_token_accuracy = 0.0;
    double exact_answer_accuracy = 0.0;
    double tokens_per_second = 0.0;
    std::int64_t projector_params = 0;
    std::int64_t total_params = 0;
    std::vector<double> stage2_losses;
};

// Trains every grid cell with the two-stage recipe and evaluates it on the
// corpus eval split. Per-cell failures are recorded as rows; the grid
// continues.
std::vector<AblationRow> run_ablation(const std::string& corpus_dir, const AblationOptions& options);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

struct LatencyReport {
    int reps = 0;
    std::int64_t generated_tokens = 0;
    double samples_tokens_per_s = 0.0;  // mean decode throughput
    double p50_tokens_per_s = 0.0;
    double total_s = 0.0;               // decode wall clock only
    double preprocess_s = 0.0;          // encode/build/splice, reported separately
};

// Times greedy generation over eval prompts. Preprocessing (vision encode,
// projection, sequence splice) is timed with a separate clock and excluded
// from the headline numbers.
LatencyReport benchmark_latency(VlmModel& model, const std::vector<TrainingSample>& prompts, int reps, int max_new);
void write_latency_csv(const LatencyReport& report, const std::string& path);

// Greedy answer to a single question about a raw [0,1] image; the trailing
// stop token is dropped from the decoded text.
std::string generate_answer(VlmModel& model, const Vocabulary& vocab, const Tensor& raw_image,
                            const std::string& question, int max_new = 24);

}  // namespace tinyvlm
