#include "tinyvlm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace tinyvlm {

EvalResult evaluate(VlmModel& model, const std::vector<TrainingSample>& split, const Vocabulary& vocab,
                    int max_new_slack) {
    EvalResult result;
    if (split.empty()) return result;
    const std::int64_t t = model.config().projector.target_tokens;
    const auto marker_len = static_cast<std::int64_t>(vocab.encode("Assistant :").size());
    std::int64_t correct_tokens = 0, correct_answers = 0;
    double loss_sum = 0.0;

    for (const auto& sample : split) {
        Tensor logits = model.compute_logits(sample.image, sample.seq);
        ShiftedTargets st = spliced_shift_targets(sample.seq, t);
        Tensor shifted = slice(logits, 0, 0, logits.extent(0) - 1);
        loss_sum += cross_entropy_masked(shifted, st.targets, st.target_mask).item();

        const std::int64_t vocab_size = logits.extent(1);
        for (std::size_t p = 0; p < st.target_mask.size(); ++p) {
            if (!st.target_mask[p]) continue;
            ++result.supervised_tokens;
            std::int64_t best = 0;
            double best_v = shifted.at(static_cast<std::int64_t>(p), 0);
            for (std::int64_t j = 1; j < vocab_size; ++j) {
                const double v = shifted.at(static_cast<std::int64_t>(p), j);
                if (v > best_v) {
                    best_v = v;
                    best = j;
                }
            }
            if (best == st.targets[p]) ++correct_tokens;
        }

        Tensor spliced = model.encode_and_splice(sample.image, sample.seq);
        for (const auto& span : sample.seq.turn_spans) {
            ++result.answers;
            const std::int64_t answer_begin = span.assistant_begin + marker_len;
            std::vector<std::int64_t> expected(sample.seq.ids.begin() + answer_begin,
                                               sample.seq.ids.begin() + span.assistant_end);
            // all assistant spans sit after the image slot
            const std::int64_t prefix_len = answer_begin + t - 1;
            Tensor prefix = slice(spliced, 0, 0, prefix_len);
            GenerationResult gen = model.lm().generate(prefix, static_cast<int>(expected.size()) + max_new_slack,
                                                       Vocabulary::stop_id);
            if (gen.ids == expected) ++correct_answers;
        }
    }
    result.mean_loss = loss_sum / static_cast<double>(split.size());
    result.masked_token_accuracy = result.supervised_tokens
                                       ? static_cast<double>(correct_tokens) / static_cast<double>(result.supervised_tokens)
                                       : 0.0;
    result.exact_answer_accuracy =
        result.answers ? static_cast<double>(correct_answers) / static_cast<double>(result.answers) : 0.0;
    return result;
}

std::vector<AblationCell> projector_grid(int vocab_size) {
    std::vector<AblationCell> grid;
    auto base = ModelConfig::toy(vocab_size);
    const int g = base.vision.token_count();
    for (auto kind : {ProjectorKind::Linear, ProjectorKind::Mlp, ProjectorKind::Ldp, ProjectorKind::LdpV2,
                      ProjectorKind::Xdp}) {
        ModelConfig cfg = base;
        cfg.projector.kind = kind;
        // token-preserving kinds keep the full grid; downsampling kinds reduce 75%
        cfg.projector.target_tokens = (kind == ProjectorKind::Linear || kind == ProjectorKind::Mlp) ? g : g / 4;
        grid.push_back(AblationCell{"projector_" + to_string(kind), cfg});
    }
    return grid;
}

std::vector<AblationCell> token_grid(int vocab_size) {
    std::vector<AblationCell> grid;
    for (int tokens : {16, 4, 1}) {
        ModelConfig cfg = ModelConfig::toy(vocab_size);
        cfg.projector.kind = ProjectorKind::Xdp;
        cfg.projector.target_tokens = tokens;
        grid.push_back(AblationCell{"tokens_" + std::to_string(tokens), cfg});
    }
    return grid;
}

std::vector<AblationRow> run_ablation(const std::string& corpus_dir, const AblationOptions& options) {
    CorpusPaths paths = corpus_paths(corpus_dir);
    Vocabulary vocab = Vocabulary::load(paths.vocab_file);
    const std::string work =
        options.work_dir.empty() ? (fs::temp_directory_path() / "tinyvlm_ablate").string() : options.work_dir;

    std::vector<AblationRow> rows;
    for (const auto& cell : options.grid) {
        for (auto seed : options.seeds) {
            AblationRow row;
            row.id = cell.id;
            row.projector = to_string(cell.cfg.projector.kind);
            row.tokens = cell.cfg.projector.target_tokens;
            row.seed = seed;
            try {
                auto align = load_training_split(paths.align_file, corpus_dir, vocab, cell.cfg);
                auto instruct = load_training_split(paths.instruct_file, corpus_dir, vocab, cell.cfg);
                auto eval_split = load_training_split(paths.eval_file, corpus_dir, vocab, cell.cfg);

                VlmModel model(cell.cfg, seed);
                row.projector_params = model.projector().param_count_actual();
                row.total_params = model.param_count();

                const std::string out = (fs::path(work) / (cell.id + "_seed" + std::to_string(seed))).string();
                TwoStageResult ts =
                    run_two_stage(model, align, instruct, options.stage1, options.stage2, out, seed);
                row.stage1_final_loss = ts.stage1.final_loss;
                row.stage2_final_loss = ts.stage2.final_loss;
                row.stage2_losses = ts.stage2.step_losses;

                EvalResult ev = evaluate(model, eval_split, vocab);
                row.masked_token_accuracy = ev.masked_token_accuracy;
                row.exact_answer_accuracy = ev.exact_answer_accuracy;

                LatencyReport lat = benchmark_latency(model, eval_split, options.bench_reps, options.bench_max_new);
                row.tokens_per_second = lat.samples_tokens_per_s;
                row.status = "ok";
            } catch (const std::exception& e) {
                row.status = std::string("failed: ") + e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "id,projector,tokens,seed,status,stage1_final_loss,stage2_final_loss,"
          "masked_token_accuracy,exact_answer_accuracy,tokens_per_sec,projector_params,total_params\n";
    for (const auto& r : rows) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        os << r.id << "," << r.projector << "," << r.tokens << "," << r.seed << "," << status << ","
           << r.stage1_final_loss << "," << r.stage2_final_loss << "," << r.masked_token_accuracy << ","
           << r.exact_answer_accuracy << "," << r.tokens_per_second << "," << r.projector_params << ","
           << r.total_params << "\n";
    }
}

LatencyReport benchmark_latency(VlmModel& model, const std::vector<TrainingSample>& prompts, int reps, int max_new) {
    LatencyReport report;
    report.reps = reps;
    if (reps <= 0 || prompts.empty() || max_new <= 0) return report;

    std::vector<double> per_rep_tps;
    for (int r = 0; r < reps; ++r) {
        const auto& sample = prompts[static_cast<std::size_t>(r) % prompts.size()];
        const auto pre_start = std::chrono::steady_clock::now();
        Tensor prefix = model.encode_and_splice(sample.image, sample.seq);
        report.preprocess_s += std::chrono::duration<double>(std::chrono::steady_clock::now() - pre_start).count();

        // stop id -1 never fires, so every rep decodes exactly max_new tokens
        GenerationResult gen = model.lm().generate(prefix, max_new, /*stop_id=*/-1);
        report.generated_tokens += static_cast<std::int64_t>(gen.ids.size());
        report.total_s += gen.decode_seconds;
        per_rep_tps.push_back(gen.tokens_per_second);
    }
    report.samples_tokens_per_s =
        report.total_s > 0.0 ? static_cast<double>(report.generated_tokens) / report.total_s : 0.0;
    std::sort(per_rep_tps.begin(), per_rep_tps.end());
    report.p50_tokens_per_s = per_rep_tps[per_rep_tps.size() / 2];
    return report;
}

std::string generate_answer(VlmModel& model, const Vocabulary& vocab, const Tensor& raw_image,
                            const std::string& question, int max_new) {
    ConversationSample sample;
    sample.system_message = corpus_system_message();
    sample.turns.push_back(ConversationTurn{question, "a"});  // placeholder answer, cut below
    EncodedSequence seq = build_sequence(sample, vocab, model.config().lm.max_context,
                                         model.config().projector.target_tokens);
    const auto marker_len = static_cast<std::int64_t>(vocab.encode("Assistant :").size());
    const std::int64_t answer_begin = seq.turn_spans[0].assistant_begin + marker_len;
    const std::int64_t t = model.config().projector.target_tokens;

    Tensor spliced = model.encode_and_splice(normalize_image(raw_image), seq);
    Tensor prefix = slice(spliced, 0, 0, answer_begin + t - 1);
    GenerationResult gen = model.lm().generate(prefix, max_new, Vocabulary::stop_id);
    if (!gen.ids.empty() && gen.ids.back() == Vocabulary::stop_id) gen.ids.pop_back();
    return vocab.decode(gen.ids);
}

void write_latency_csv(const LatencyReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "reps,tokens,Samples(token/s),p50(token/s),Total(s),Preprocess(s)\n";
    if (report.reps <= 0) return;  // empty report
    os << report.reps << "," << report.generated_tokens << "," << report.samples_tokens_per_s << ","
       << report.p50_tokens_per_s << "," << report.total_s << "," << report.preprocess_s << "\n";
}

}  // namespace tinyvlm
