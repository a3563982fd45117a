#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinyvlm/codec.hpp"
#include "tinyvlm/config.hpp"
#include "tinyvlm/sequence.hpp"
#include "tinyvlm/tensor.hpp"
#include "tinyvlm/trainer.hpp"

namespace tinyvlm {

// Synthetic stand-in corpora: little rendered images of colored shapes on a
// placement grid, captions and Q&A derived programmatically from the same
// scene description that drives the renderer, so every answer is exactly
// verifiable from pixels.
struct SyntheticSpec {
    int image_size = 32;
    int align_count = 64;     // single-turn caption samples
    int instruct_count = 64;  // multi-turn Q&A samples
    int eval_count = 16;
    int max_objects = 2;      // objects per image, distinct shapes and cells
    int qa_turns = 2;
};

struct SceneObject {
    int shape = 0;  // index into shape_names()
    int color = 0;  // index into color_names()
    int cell = 0;   // placement cell, row-major on a 2x2 grid
};

struct Scene {
    int image_size = 32;
    std::vector<SceneObject> objects;
};

const std::vector<std::string>& shape_names();
const std::vector<std::string>& color_names();
const std::vector<std::string>& cell_names();

// Raw pixels in [0,1], planar [3 x H x W].
Tensor render_scene(const Scene& scene);

std::string caption_for(const Scene& scene);

// Word list covering every string the generator can emit (plus role markers
// and the system message); the corpus produces zero UNK tokens by
// construction.
std::vector<std::string> corpus_word_list();
Vocabulary corpus_vocabulary();

std::string corpus_system_message();

struct CorpusPaths {
    std::string dir;
    std::string vocab_file;
    std::string align_file;
    std::string instruct_file;
    std::string eval_file;
    std::string scenes_file;
    std::string images_dir;
};

CorpusPaths corpus_paths(const std::string& dir);

// Renders images and writes JSON-lines sample files for the alignment,
// instruction, and eval splits. Deterministic per seed.
CorpusPaths generate_corpus(const SyntheticSpec& spec, std::uint64_t seed, const std::string& out_dir);

// Cross-checks every sample against the stored scene ground truth and the
// rendered pixels; returns the number of inconsistencies found.
int verify_corpus(const std::string& dir);

std::vector<ConversationSample> load_samples(const std::string& jsonl_path);

// Loads a split and prepares it for training: image loaded and normalized,
// sequence built against the vocabulary and model limits.
std::vector<TrainingSample> load_training_split(const std::string& jsonl_path, const std::string& corpus_dir,
                                                const Vocabulary& vocab, const ModelConfig& cfg);

}  // namespace tinyvlm
