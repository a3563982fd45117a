#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tinyvlm/data.hpp"
#include "tinyvlm/harness.hpp"
#include "tinyvlm/model.hpp"
#include "tinyvlm/trainer.hpp"

namespace fs = std::filesystem;
using namespace tinyvlm;

namespace {

struct CommonTrainArgs {
    std::string corpus;
    std::string out;
    std::string config_file;
    std::string projector;
    int visual_tokens = 0;
    std::uint64_t seed = 1;
};

ModelConfig resolve_model_config(const CommonTrainArgs& args, const Vocabulary& vocab) {
    ModelConfig cfg = ModelConfig::toy(static_cast<int>(vocab.size()));
    if (!args.config_file.empty()) apply_model_config(parse_kv_file(args.config_file), cfg);
    cfg.lm.vocab_size = static_cast<int>(vocab.size());
    if (!args.projector.empty()) cfg.projector.kind = projector_kind_from_string(args.projector);
    if (args.visual_tokens > 0) cfg.projector.target_tokens = args.visual_tokens;
    cfg.projector.in_dim = cfg.vision.embed_dim;
    cfg.projector.out_dim = cfg.lm.hidden_size;
    cfg.validate();
    return cfg;
}

std::pair<StageConfig, StageConfig> resolve_stage_configs(const std::string& config_file) {
    auto [s1, s2] = default_stage_configs();
    if (!config_file.empty()) {
        const auto kv = parse_kv_file(config_file);
        apply_stage_config(kv, "stage1", s1);
        apply_stage_config(kv, "stage2", s2);
    }
    return {s1, s2};
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::string token;
    std::istringstream is(csv);
    while (std::getline(is, token, ','))
        if (!token.empty()) seeds.push_back(std::stoull(token));
    if (seeds.empty()) seeds.push_back(1);
    return seeds;
}

int cmd_gen_data(const std::string& out, std::uint64_t seed, SyntheticSpec spec) {
    CorpusPaths paths = generate_corpus(spec, seed, out);
    const int bad = verify_corpus(out);
    std::cout << "corpus: " << paths.dir << "\n"
              << "  align=" << spec.align_count << " instruct=" << spec.instruct_count << " eval=" << spec.eval_count
              << "\n  ground-truth inconsistencies: " << bad << "\n";
    return bad == 0 ? 0 : 1;
}

int cmd_train(const CommonTrainArgs& args, const std::string& stage, const std::string& init) {
    CorpusPaths paths = corpus_paths(args.corpus);
    Vocabulary vocab = Vocabulary::load(paths.vocab_file);
    ModelConfig cfg = resolve_model_config(args, vocab);
    auto [s1, s2] = resolve_stage_configs(args.config_file);

    auto align = load_training_split(paths.align_file, args.corpus, vocab, cfg);
    auto instruct = load_training_split(paths.instruct_file, args.corpus, vocab, cfg);

    fs::create_directories(args.out);
    if (stage == "both") {
        VlmModel model(cfg, args.seed);
        TwoStageResult r = run_two_stage(model, align, instruct, s1, s2, args.out, args.seed);
        std::cout << "stage1 final loss " << r.stage1.final_loss << " -> " << r.stage1_checkpoint << "\n"
                  << "stage2 final loss " << r.stage2.final_loss << " -> " << r.stage2_checkpoint << "\n"
                  << "loss log " << r.loss_csv << "\n";
        return 0;
    }

    VlmModel model = init.empty() ? VlmModel(cfg, args.seed) : VlmModel::load_checkpoint(init);
    std::vector<LossLogRow> log;
    if (stage == "1") {
        StageRunResult r = run_stage(model, align, s1, args.seed, &log);
        std::cout << "stage1 final loss " << r.final_loss << "\n";
    } else if (stage == "2") {
        StageRunResult r = run_stage(model, instruct, s2, args.seed, &log);
        std::cout << "stage2 final loss " << r.final_loss << "\n";
    } else {
        std::cerr << "--stage must be 1, 2, or both\n";
        return 2;
    }
    const std::string ckpt = (fs::path(args.out) / ("stage" + stage)).string();
    model.save_checkpoint(ckpt);
    write_loss_log(log, (fs::path(args.out) / "loss_log.csv").string());
    std::cout << "checkpoint " << ckpt << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& split,
             const std::string& out) {
    CorpusPaths paths = corpus_paths(corpus);
    Vocabulary vocab = Vocabulary::load(paths.vocab_file);
    VlmModel model = VlmModel::load_checkpoint(checkpoint);

    std::string file;
    if (split == "eval")
        file = paths.eval_file;
    else if (split == "align")
        file = paths.align_file;
    else if (split == "instruct")
        file = paths.instruct_file;
    else {
        std::cerr << "--split must be align, instruct, or eval\n";
        return 2;
    }
    auto samples = load_training_split(file, corpus, vocab, model.config());

    EvalResult r = evaluate(model, samples, vocab);
    nlohmann::json j{{"split", split},
                     {"samples", samples.size()},
                     {"mean_loss", r.mean_loss},
                     {"masked_token_accuracy", r.masked_token_accuracy},
                     {"exact_answer_accuracy", r.exact_answer_accuracy},
                     {"supervised_tokens", r.supervised_tokens},
                     {"answers", r.answers}};
    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
        std::ofstream os(out);
        os << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_ablate(const std::string& corpus, const std::string& out, const std::string& grid, const std::string& seeds,
               const std::string& config_file, const std::string& work_dir) {
    CorpusPaths paths = corpus_paths(corpus);
    Vocabulary vocab = Vocabulary::load(paths.vocab_file);
    AblationOptions options;
    auto [s1, s2] = default_stage_configs();
    if (!config_file.empty()) {
        const auto kv = parse_kv_file(config_file);
        apply_stage_config(kv, "stage1", s1);
        apply_stage_config(kv, "stage2", s2);
    }
    options.stage1 = s1;
    options.stage2 = s2;
    options.seeds = parse_seed_list(seeds);
    options.work_dir = work_dir;

    const int vocab_size = static_cast<int>(vocab.size());
    if (grid == "projectors" || grid == "both")
        for (auto& c : projector_grid(vocab_size)) options.grid.push_back(c);
    if (grid == "tokens" || grid == "both")
        for (auto& c : token_grid(vocab_size)) options.grid.push_back(c);
    if (options.grid.empty()) {
        std::cerr << "--grid must be projectors, tokens, or both\n";
        return 2;
    }

    auto rows = run_ablation(corpus, options);
    write_ablation_csv(rows, out);
    int failures = 0;
    for (const auto& r : rows) {
        std::cout << r.id << " seed=" << r.seed << " " << r.status << " stage2_loss=" << r.stage2_final_loss
                  << " acc=" << r.exact_answer_accuracy << "\n";
        failures += r.status == "ok" ? 0 : 1;
    }
    std::cout << "wrote " << out << " (" << rows.size() << " rows, " << failures << " failed cells)\n";
    return 0;
}

int cmd_bench(const std::string& checkpoint, const std::string& corpus, int reps, int max_new,
              const std::string& out) {
    VlmModel model = VlmModel::load_checkpoint(checkpoint);
    CorpusPaths paths = corpus_paths(corpus);
    Vocabulary vocab = Vocabulary::load(paths.vocab_file);
    auto prompts = load_training_split(paths.eval_file, corpus, vocab, model.config());

    LatencyReport r = benchmark_latency(model, prompts, reps, max_new);
    if (!out.empty()) write_latency_csv(r, out);
    std::cout << "reps " << r.reps << ", tokens " << r.generated_tokens << "\n"
              << "Samples(token/s) " << r.samples_tokens_per_s << " (p50 " << r.p50_tokens_per_s << ")\n"
              << "Total(s) " << r.total_s << " (preprocess " << r.preprocess_s << "s, excluded)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tinyvlm: a desk-scale vision-language model pipeline"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic shapes corpus");
    std::string gen_out = "corpus";
    std::uint64_t gen_seed = 1;
    SyntheticSpec spec;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--image-size", spec.image_size, "square image extent");
    gen->add_option("--align", spec.align_count, "alignment (caption) sample count");
    gen->add_option("--instruct", spec.instruct_count, "instruction sample count");
    gen->add_option("--eval", spec.eval_count, "held-out sample count");
    gen->add_option("--max-objects", spec.max_objects, "max shapes per image");
    gen->add_option("--qa-turns", spec.qa_turns, "conversation turns per instruction sample");

    // train
    auto* train = app.add_subcommand("train", "run the one- or two-stage training recipe");
    CommonTrainArgs targs;
    std::string train_stage = "both", train_init;
    train->add_option("--corpus", targs.corpus, "corpus directory")->required();
    train->add_option("--out", targs.out, "output directory")->required();
    train->add_option("--stage", train_stage, "1, 2, or both");
    train->add_option("--config", targs.config_file, "key=value config file");
    train->add_option("--seed", targs.seed, "rng seed");
    train->add_option("--projector", targs.projector, "projector kind: linear|mlp|ldp|ldpv2|xdp");
    train->add_option("--visual-tokens", targs.visual_tokens, "target visual token count");
    train->add_option("--init", train_init, "checkpoint to initialize from");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
    std::string eval_ckpt, eval_corpus, eval_split = "eval", eval_out;
    ev->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    ev->add_option("--corpus", eval_corpus, "corpus directory")->required();
    ev->add_option("--split", eval_split, "align|instruct|eval");
    ev->add_option("--out", eval_out, "write metrics JSON here");

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and evaluate a projector/token grid");
    std::string ab_corpus, ab_out = "ablation.csv", ab_grid = "both", ab_seeds = "1", ab_config, ab_work;
    ab->add_option("--corpus", ab_corpus, "corpus directory")->required();
    ab->add_option("--out", ab_out, "output CSV path");
    ab->add_option("--grid", ab_grid, "projectors|tokens|both");
    ab->add_option("--seeds", ab_seeds, "comma-separated seeds");
    ab->add_option("--config", ab_config, "key=value config file for stage overrides");
    ab->add_option("--work-dir", ab_work, "checkpoint scratch directory");

    // bench
    auto* bench = app.add_subcommand("bench", "measure decode tokens/sec, preprocessing excluded");
    std::string bench_ckpt, bench_corpus, bench_out;
    int bench_reps = 5, bench_max_new = 16;
    bench->add_option("--checkpoint", bench_ckpt, "checkpoint directory")->required();
    bench->add_option("--corpus", bench_corpus, "corpus directory (prompt source)")->required();
    bench->add_option("--reps", bench_reps, "number of generate calls");
    bench->add_option("--max-new", bench_max_new, "tokens per call");
    bench->add_option("--out", bench_out, "write report CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_seed, spec);
        if (train->parsed()) return cmd_train(targs, train_stage, train_init);
        if (ev->parsed()) return cmd_eval(eval_ckpt, eval_corpus, eval_split, eval_out);
        if (ab->parsed()) return cmd_ablate(ab_corpus, ab_out, ab_grid, ab_seeds, ab_config, ab_work);
        if (bench->parsed()) return cmd_bench(bench_ckpt, bench_corpus, bench_reps, bench_max_new, bench_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
