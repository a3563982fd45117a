#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tinyvlm/codec.hpp"
#include "tinyvlm/config.hpp"
#include "tinyvlm/data.hpp"
#include "tinyvlm/harness.hpp"
#include "tinyvlm/model.hpp"
#include "tinyvlm/projector.hpp"
#include "tinyvlm/serialize.hpp"
#include "tinyvlm/tensor.hpp"
#include "tinyvlm/trainer.hpp"

namespace py = pybind11;
using namespace tinyvlm;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    Shape shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = arr.shape(i);
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
    return arr;
}

StageConfig stage_from_kwargs(int stage, const py::dict& kwargs) {
    auto [s1, s2] = default_stage_configs();
    StageConfig cfg = stage == 1 ? s1 : s2;
    for (auto item : kwargs) {
        const auto key = item.first.cast<std::string>();
        if (key == "learning_rate")
            cfg.learning_rate = item.second.cast<double>();
        else if (key == "batch_size")
            cfg.batch_size = item.second.cast<int>();
        else if (key == "epochs")
            cfg.epochs = item.second.cast<int>();
        else if (key == "weight_decay")
            cfg.weight_decay = item.second.cast<double>();
        else
            throw std::invalid_argument("unknown stage option '" + key + "'");
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "tinyvlm: a small vision-language pipeline (vision encoder, "
              "downsampling projectors, causal decoder, two-stage trainer)";

    // ---- elementwise ops ----
    m.def("mish", [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
        return array_from_tensor(mish(tensor_from_array(x)));
    });
    m.def("silu", [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
        return array_from_tensor(silu(tensor_from_array(x)));
    });
    m.def("gelu", [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
        return array_from_tensor(gelu(tensor_from_array(x)));
    });
    m.def(
        "softmax",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x, int axis) {
            return array_from_tensor(softmax(tensor_from_array(x), axis));
        },
        py::arg("x"), py::arg("axis") = 0);

    // ---- projector geometry ----
    m.def(
        "merge_plan",
        [](std::int64_t grid_side, std::int64_t target_tokens) {
            MergePlan p = merge_plan(grid_side, target_tokens);
            return py::make_tuple(p.pool_h, p.pool_w);
        },
        py::arg("grid_side"), py::arg("target_tokens"));
    m.def("valid_token_counts", &valid_token_counts, py::arg("grid_side"));
    m.def(
        "projector_param_count",
        [](const std::string& kind, int in_dim, int out_dim, int target_tokens, int grid_side) {
            return Projector::param_count(
                ProjectorConfig{projector_kind_from_string(kind), in_dim, out_dim, target_tokens}, grid_side);
        },
        py::arg("kind"), py::arg("in_dim"), py::arg("out_dim"), py::arg("target_tokens"), py::arg("grid_side"));

    // ---- text codec ----
    py::class_<Vocabulary>(m, "Vocabulary")
        .def_static("load", &Vocabulary::load, py::arg("path"))
        .def_static("from_words", &Vocabulary::from_words, py::arg("words"))
        .def("encode", &Vocabulary::encode, py::arg("text"))
        .def("decode", &Vocabulary::decode, py::arg("ids"))
        .def("token", &Vocabulary::token, py::arg("id"))
        .def_property_readonly("size", &Vocabulary::size)
        .def_property_readonly_static("stop_id", [](py::object) { return Vocabulary::stop_id; })
        .def_property_readonly_static("image_id", [](py::object) { return Vocabulary::image_id; });
    m.def("corpus_vocabulary", &corpus_vocabulary);

    // ---- configuration ----
    py::class_<ModelConfig>(m, "ModelConfig")
        .def_static("toy", &ModelConfig::toy, py::arg("vocab_size"))
        .def_static("paper_shape", &ModelConfig::paper_shape, py::arg("vocab_size"))
        .def_property(
            "projector_kind", [](const ModelConfig& c) { return to_string(c.projector.kind); },
            [](ModelConfig& c, const std::string& k) { c.projector.kind = projector_kind_from_string(k); })
        .def_property(
            "visual_tokens", [](const ModelConfig& c) { return c.projector.target_tokens; },
            [](ModelConfig& c, int t) { c.projector.target_tokens = t; })
        .def_property(
            "hidden_size", [](const ModelConfig& c) { return c.lm.hidden_size; },
            [](ModelConfig& c, int h) {
                c.lm.hidden_size = h;
                c.projector.out_dim = h;
            })
        .def_property(
            "num_layers", [](const ModelConfig& c) { return c.lm.num_layers; },
            [](ModelConfig& c, int n) { c.lm.num_layers = n; })
        .def("validate", &ModelConfig::validate);

    // ---- synthetic corpus ----
    m.def(
        "gen_corpus",
        [](const std::string& out_dir, std::uint64_t seed, int image_size, int align, int instruct, int eval_count) {
            SyntheticSpec spec;
            spec.image_size = image_size;
            spec.align_count = align;
            spec.instruct_count = instruct;
            spec.eval_count = eval_count;
            CorpusPaths p = generate_corpus(spec, seed, out_dir);
            return py::dict(py::arg("dir") = p.dir, py::arg("vocab") = p.vocab_file, py::arg("align") = p.align_file,
                            py::arg("instruct") = p.instruct_file, py::arg("eval") = p.eval_file);
        },
        py::arg("out_dir"), py::arg("seed") = 1, py::arg("image_size") = 32, py::arg("align") = 16,
        py::arg("instruct") = 16, py::arg("eval") = 4);
    m.def("verify_corpus", &verify_corpus, py::arg("dir"));

    // ---- model ----
    py::class_<VlmModel>(m, "VlmModel")
        .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 1)
        .def_static("load", &VlmModel::load_checkpoint, py::arg("checkpoint_dir"))
        .def("save", &VlmModel::save_checkpoint, py::arg("checkpoint_dir"))
        .def("param_count", &VlmModel::param_count)
        .def("projector_param_count", [](VlmModel& m_) { return m_.projector().param_count_actual(); })
        .def(
            "answer",
            [](VlmModel& model, py::array_t<double, py::array::c_style | py::array::forcecast> image,
               const std::string& question, int max_new) {
                Vocabulary vocab = corpus_vocabulary();
                if (vocab.size() != model.config().lm.vocab_size)
                    throw std::invalid_argument("model vocabulary does not match the corpus vocabulary");
                return generate_answer(model, vocab, tensor_from_array(image), question, max_new);
            },
            py::arg("image"), py::arg("question"), py::arg("max_new") = 24)
        .def(
            "answer_image_file",
            [](VlmModel& model, const std::string& image_path, const std::string& question, int max_new) {
                Vocabulary vocab = corpus_vocabulary();
                if (vocab.size() != model.config().lm.vocab_size)
                    throw std::invalid_argument("model vocabulary does not match the corpus vocabulary");
                return generate_answer(model, vocab, load_tensor(image_path), question, max_new);
            },
            py::arg("image_path"), py::arg("question"), py::arg("max_new") = 24);

    // ---- training and evaluation ----
    m.def(
        "train_two_stage",
        [](VlmModel& model, const std::string& corpus_dir, const std::string& out_dir, std::uint64_t seed,
           const py::dict& stage1, const py::dict& stage2) {
            CorpusPaths paths = corpus_paths(corpus_dir);
            Vocabulary vocab = Vocabulary::load(paths.vocab_file);
            auto align = load_training_split(paths.align_file, corpus_dir, vocab, model.config());
            auto instruct = load_training_split(paths.instruct_file, corpus_dir, vocab, model.config());
            TwoStageResult r = run_two_stage(model, align, instruct, stage_from_kwargs(1, stage1),
                                             stage_from_kwargs(2, stage2), out_dir, seed);
            return py::dict(py::arg("stage1_final_loss") = r.stage1.final_loss,
                            py::arg("stage2_final_loss") = r.stage2.final_loss,
                            py::arg("stage1_checkpoint") = r.stage1_checkpoint,
                            py::arg("stage2_checkpoint") = r.stage2_checkpoint, py::arg("loss_csv") = r.loss_csv);
        },
        py::arg("model"), py::arg("corpus_dir"), py::arg("out_dir"), py::arg("seed") = 1,
        py::arg("stage1") = py::dict(), py::arg("stage2") = py::dict());
    m.def(
        "evaluate",
        [](VlmModel& model, const std::string& corpus_dir, const std::string& split) {
            CorpusPaths paths = corpus_paths(corpus_dir);
            Vocabulary vocab = Vocabulary::load(paths.vocab_file);
            std::string file = paths.eval_file;
            if (split == "align") file = paths.align_file;
            if (split == "instruct") file = paths.instruct_file;
            auto samples = load_training_split(file, corpus_dir, vocab, model.config());
            EvalResult r = evaluate(model, samples, vocab);
            return py::dict(py::arg("mean_loss") = r.mean_loss,
                            py::arg("masked_token_accuracy") = r.masked_token_accuracy,
                            py::arg("exact_answer_accuracy") = r.exact_answer_accuracy,
                            py::arg("supervised_tokens") = r.supervised_tokens, py::arg("answers") = r.answers);
        },
        py::arg("model"), py::arg("corpus_dir"), py::arg("split") = "eval");
}
