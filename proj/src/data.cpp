#include "tinyvlm/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tinyvlm/model.hpp"
#include "tinyvlm/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tinyvlm {

namespace {

struct Rgb {
    double r, g, b;
};

const std::vector<Rgb>& color_values() {
    static const std::vector<Rgb> v = {
        {0.90, 0.10, 0.10},  // red
        {0.10, 0.80, 0.15},  // green
        {0.15, 0.20, 0.90},  // blue
        {0.95, 0.90, 0.10},  // yellow
        {0.60, 0.15, 0.80},  // purple
        {0.95, 0.55, 0.10},  // orange
        {0.95, 0.95, 0.95},  // white
        {0.55, 0.55, 0.55},  // gray
    };
    return v;
}

constexpr double kBackground = 0.08;

std::pair<int, int> cell_center(int image_size, int cell) {
    const int cs = image_size / 2;
    const int row = cell / 2, col = cell % 2;
    return {row * cs + cs / 2, col * cs + cs / 2};
}

int shape_radius(int image_size) { return std::max(2, image_size / 8); }

bool inside_shape(int shape, int y, int x, int cy, int cx, int r) {
    const int dy = y - cy, dx = x - cx;
    switch (shape) {
        case 0:  // circle
            return dy * dy + dx * dx <= r * r;
        case 1:  // square
            return std::abs(dy) <= r && std::abs(dx) <= r;
        case 2: {  // triangle, apex up
            if (dy < -r || dy > r) return false;
            const double half = static_cast<double>(dy + r) * r / (2.0 * r);
            return std::abs(dx) <= half;
        }
        case 3: {  // cross
            const int bar = std::max(1, r / 3);
            return (std::abs(dx) <= bar && std::abs(dy) <= r) || (std::abs(dy) <= bar && std::abs(dx) <= r);
        }
        default:
            throw std::logic_error("unknown shape index");
    }
}

std::string count_phrase(std::size_t n) {
    static const std::vector<std::string> words = {"zero", "one", "two", "three", "four"};
    if (n < words.size()) return words[n];
    return std::to_string(n);
}

const SceneObject* find_shape(const Scene& scene, const std::string& shape_word) {
    for (const auto& o : scene.objects)
        if (shape_names()[static_cast<std::size_t>(o.shape)] == shape_word) return &o;
    return nullptr;
}

const SceneObject* find_cell(const Scene& scene, const std::string& cell_word) {
    for (const auto& o : scene.objects)
        if (cell_names()[static_cast<std::size_t>(o.cell)] == cell_word) return &o;
    return nullptr;
}

}  // namespace

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v = {"circle", "square", "triangle", "cross"};
    return v;
}

const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"red", "green", "blue", "yellow", "purple", "orange", "white", "gray"};
    return v;
}

const std::vector<std::string>& cell_names() {
    static const std::vector<std::string> v = {"top left", "top right", "bottom left", "bottom right"};
    return v;
}

Tensor render_scene(const Scene& scene) {
    const int n = scene.image_size;
    if (n < 8 || n % 2 != 0) throw std::invalid_argument("scene image_size must be an even number >= 8");
    std::vector<double> px(static_cast<std::size_t>(3 * n * n), kBackground);
    for (const auto& obj : scene.objects) {
        const auto [cy, cx] = cell_center(n, obj.cell);
        const int r = shape_radius(n);
        const Rgb c = color_values()[static_cast<std::size_t>(obj.color)];
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                if (!inside_shape(obj.shape, y, x, cy, cx, r)) continue;
                px[static_cast<std::size_t>((0 * n + y) * n + x)] = c.r;
                px[static_cast<std::size_t>((1 * n + y) * n + x)] = c.g;
                px[static_cast<std::size_t>((2 * n + y) * n + x)] = c.b;
            }
    }
    return Tensor::from_data({3, n, n}, std::move(px));
}

std::string caption_for(const Scene& scene) {
    std::ostringstream os;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& o = scene.objects[i];
        if (i) os << " and ";
        os << "a " << color_names()[static_cast<std::size_t>(o.color)] << " "
           << shape_names()[static_cast<std::size_t>(o.shape)];
    }
    return os.str();
}

std::string corpus_system_message() { return "a chat about small pictures"; }

std::vector<std::string> corpus_word_list() {
    std::vector<std::string> words = {
        // role markers and punctuation
        "Human", "Assistant", ":", "?", ".", ",",
        // system message
        "a", "chat", "about", "small", "pictures",
        // caption and answer grammar
        "describe", "the", "image", "and", "what", "color", "is", "how", "many", "shapes", "shape",
        "are", "there", "where", "at", "yes", "no",
        // counts
        "zero", "one", "two", "three", "four",
        // cells
        "top", "bottom", "left", "right",
    };
    for (const auto& s : shape_names()) words.push_back(s);
    for (const auto& c : color_names()) words.push_back(c);
    return words;
}

Vocabulary corpus_vocabulary() { return Vocabulary::from_words(corpus_word_list()); }

CorpusPaths corpus_paths(const std::string& dir) {
    CorpusPaths p;
    p.dir = dir;
    p.vocab_file = (fs::path(dir) / "vocab.txt").string();
    p.align_file = (fs::path(dir) / "align.jsonl").string();
    p.instruct_file = (fs::path(dir) / "instruct.jsonl").string();
    p.eval_file = (fs::path(dir) / "eval.jsonl").string();
    p.scenes_file = (fs::path(dir) / "scenes.jsonl").string();
    p.images_dir = (fs::path(dir) / "images").string();
    return p;
}

namespace {

Scene random_scene(const SyntheticSpec& spec, std::mt19937_64& rng) {
    Scene scene;
    scene.image_size = spec.image_size;
    std::uniform_int_distribution<int> count_dist(1, std::max(1, spec.max_objects));
    const int count = count_dist(rng);

    std::vector<int> shapes(shape_names().size()), cells(cell_names().size());
    for (std::size_t i = 0; i < shapes.size(); ++i) shapes[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
    std::shuffle(shapes.begin(), shapes.end(), rng);
    std::shuffle(cells.begin(), cells.end(), rng);

    std::uniform_int_distribution<int> color_dist(0, static_cast<int>(color_names().size()) - 1);
    for (int i = 0; i < count && i < static_cast<int>(shapes.size()) && i < static_cast<int>(cells.size()); ++i)
        scene.objects.push_back(SceneObject{shapes[static_cast<std::size_t>(i)], color_dist(rng),
                                            cells[static_cast<std::size_t>(i)]});
    // row-major cell order keeps captions deterministic
    std::sort(scene.objects.begin(), scene.objects.end(),
              [](const SceneObject& a, const SceneObject& b) { return a.cell < b.cell; });
    return scene;
}

// question templates; each returns the question or empty when inapplicable
std::vector<std::string> applicable_questions(const Scene& scene, std::mt19937_64& rng) {
    std::vector<std::string> qs;
    std::uniform_int_distribution<std::size_t> pick(0, scene.objects.size() - 1);
    const auto& o = scene.objects[pick(rng)];
    const std::string shape = shape_names()[static_cast<std::size_t>(o.shape)];
    const std::string cell = cell_names()[static_cast<std::size_t>(o.cell)];
    qs.push_back("what color is the " + shape + " ?");
    qs.push_back("how many shapes are there ?");
    qs.push_back("where is the " + shape + " ?");
    qs.push_back("what shape is at the " + cell + " ?");
    // presence probe, half the time about a shape that is absent
    std::uniform_int_distribution<int> shape_dist(0, static_cast<int>(shape_names().size()) - 1);
    qs.push_back("is there a " + shape_names()[static_cast<std::size_t>(shape_dist(rng))] + " ?");
    return qs;
}

std::string derive_answer(const Scene& scene, const std::string& question);

json sample_to_json(const std::string& image_path, const ConversationSample& sample) {
    json turns = json::array();
    for (const auto& t : sample.turns) turns.push_back(json{{"human", t.human}, {"assistant", t.assistant}});
    return json{{"image_path", image_path}, {"system", sample.system_message}, {"turns", turns}};
}

json scene_to_json(const std::string& image_path, const std::string& split, const Scene& scene) {
    json objs = json::array();
    for (const auto& o : scene.objects)
        objs.push_back(json{{"shape", shape_names()[static_cast<std::size_t>(o.shape)]},
                            {"color", color_names()[static_cast<std::size_t>(o.color)]},
                            {"cell", cell_names()[static_cast<std::size_t>(o.cell)]}});
    return json{{"image_path", image_path}, {"split", split}, {"image_size", scene.image_size}, {"objects", objs}};
}

std::string derive_answer(const Scene& scene, const std::string& question) {
    auto starts = [&](const std::string& prefix) { return question.rfind(prefix, 0) == 0; };
    auto middle = [&](const std::string& prefix) {
        // strips prefix and a trailing " ?"
        std::string rest = question.substr(prefix.size());
        const auto q = rest.rfind(" ?");
        if (q != std::string::npos) rest = rest.substr(0, q);
        return rest;
    };
    if (question == "describe the image") return caption_for(scene);
    if (question == "how many shapes are there ?") {
        const auto n = scene.objects.size();
        if (n == 1) return "there is one shape";
        return "there are " + count_phrase(n) + " shapes";
    }
    if (starts("what color is the ")) {
        const std::string shape = middle("what color is the ");
        const auto* o = find_shape(scene, shape);
        if (o) return "the " + shape_names()[static_cast<std::size_t>(o->shape)] + " is " +
                      color_names()[static_cast<std::size_t>(o->color)];
        return "there is no " + shape;
    }
    if (starts("where is the ")) {
        const std::string shape = middle("where is the ");
        const auto* o = find_shape(scene, shape);
        if (o) return "the " + shape_names()[static_cast<std::size_t>(o->shape)] + " is at the " +
                      cell_names()[static_cast<std::size_t>(o->cell)];
        return "there is no " + shape;
    }
    if (starts("what shape is at the ")) {
        const auto* o = find_cell(scene, middle("what shape is at the "));
        if (o) return "there is a " + shape_names()[static_cast<std::size_t>(o->shape)];
        return "there is no shape there";
    }
    if (starts("is there a ")) {
        const std::string shape = middle("is there a ");
        if (find_shape(scene, shape)) return "yes there is a " + shape;
        return "no there is no " + shape;
    }
    throw std::invalid_argument("unrecognized question template: " + question);
}

}  // namespace

CorpusPaths generate_corpus(const SyntheticSpec& spec, std::uint64_t seed, const std::string& out_dir) {
    CorpusPaths paths = corpus_paths(out_dir);
    fs::create_directories(paths.images_dir);
    corpus_vocabulary().save(paths.vocab_file);

    std::mt19937_64 rng(seed);
    std::ofstream scenes(paths.scenes_file);
    if (!scenes) throw std::runtime_error("cannot write " + paths.scenes_file);
    int image_index = 0;

    auto emit_split = [&](const std::string& file, const std::string& split, int count, bool caption_only) {
        std::ofstream os(file);
        if (!os) throw std::runtime_error("cannot write " + file);
        for (int i = 0; i < count; ++i) {
            Scene scene = random_scene(spec, rng);
            char name[32];
            std::snprintf(name, sizeof(name), "images/img_%05d.bin", image_index++);
            const std::string rel = name;
            save_tensor((fs::path(out_dir) / rel).string(), render_scene(scene), DType::f32);

            ConversationSample sample;
            sample.image_path = rel;
            sample.system_message = corpus_system_message();
            if (caption_only) {
                sample.turns.push_back(ConversationTurn{"describe the image", caption_for(scene)});
            } else {
                auto questions = applicable_questions(scene, rng);
                std::shuffle(questions.begin(), questions.end(), rng);
                const int turns = std::min<int>(spec.qa_turns, static_cast<int>(questions.size()));
                for (int t = 0; t < turns; ++t)
                    sample.turns.push_back(ConversationTurn{questions[static_cast<std::size_t>(t)],
                                                            derive_answer(scene, questions[static_cast<std::size_t>(t)])});
            }
            os << sample_to_json(rel, sample).dump() << "\n";
            scenes << scene_to_json(rel, split, scene).dump() << "\n";
        }
    };

    emit_split(paths.align_file, "align", spec.align_count, /*caption_only=*/true);
    emit_split(paths.instruct_file, "instruct", spec.instruct_count, /*caption_only=*/false);
    emit_split(paths.eval_file, "eval", spec.eval_count, /*caption_only=*/false);
    return paths;
}

std::vector<ConversationSample> load_samples(const std::string& jsonl_path) {
    std::ifstream is(jsonl_path);
    if (!is) throw std::runtime_error("cannot open " + jsonl_path);
    std::vector<ConversationSample> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ConversationSample s;
        s.image_path = j.at("image_path").get<std::string>();
        s.system_message = j.at("system").get<std::string>();
        for (const auto& t : j.at("turns"))
            s.turns.push_back(ConversationTurn{t.at("human").get<std::string>(), t.at("assistant").get<std::string>()});
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TrainingSample> load_training_split(const std::string& jsonl_path, const std::string& corpus_dir,
                                                const Vocabulary& vocab, const ModelConfig& cfg) {
    std::vector<TrainingSample> out;
    for (const auto& s : load_samples(jsonl_path)) {
        TrainingSample ts;
        ts.image = normalize_image(load_tensor((fs::path(corpus_dir) / s.image_path).string()));
        ts.seq = build_sequence(s, vocab, cfg.lm.max_context, cfg.projector.target_tokens);
        out.push_back(std::move(ts));
    }
    return out;
}

int verify_corpus(const std::string& dir) {
    CorpusPaths paths = corpus_paths(dir);
    Vocabulary vocab = Vocabulary::load(paths.vocab_file);

    // ground-truth scenes keyed by image path
    std::map<std::string, Scene> scenes;
    {
        std::ifstream is(paths.scenes_file);
        if (!is) throw std::runtime_error("cannot open " + paths.scenes_file);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            Scene scene;
            scene.image_size = j.at("image_size").get<int>();
            for (const auto& o : j.at("objects")) {
                SceneObject obj;
                const auto& sv = shape_names();
                const auto& cv = color_names();
                const auto& lv = cell_names();
                obj.shape = static_cast<int>(std::find(sv.begin(), sv.end(), o.at("shape").get<std::string>()) - sv.begin());
                obj.color = static_cast<int>(std::find(cv.begin(), cv.end(), o.at("color").get<std::string>()) - cv.begin());
                obj.cell = static_cast<int>(std::find(lv.begin(), lv.end(), o.at("cell").get<std::string>()) - lv.begin());
                scene.objects.push_back(obj);
            }
            scenes[j.at("image_path").get<std::string>()] = scene;
        }
    }

    int inconsistencies = 0;
    auto check_split = [&](const std::string& file) {
        for (const auto& sample : load_samples(file)) {
            auto it = scenes.find(sample.image_path);
            if (it == scenes.end()) {
                ++inconsistencies;
                continue;
            }
            const Scene& scene = it->second;
            // answers re-derived from the stored scene must match exactly
            for (const auto& turn : sample.turns) {
                if (derive_answer(scene, turn.human) != turn.assistant) ++inconsistencies;
                for (auto id : vocab.encode(turn.human))
                    if (id == Vocabulary::unk_id) ++inconsistencies;
                for (auto id : vocab.encode(turn.assistant))
                    if (id == Vocabulary::unk_id) ++inconsistencies;
            }
            // rendered pixels at each object's cell center must show its color
            Tensor image = load_tensor((fs::path(dir) / sample.image_path).string());
            const int n = scene.image_size;
            for (const auto& o : scene.objects) {
                const auto [cy, cx] = cell_center(n, o.cell);
                const Rgb c = color_values()[static_cast<std::size_t>(o.color)];
                const double r = image.at(0, cy, cx), g = image.at(1, cy, cx), b = image.at(2, cy, cx);
                if (std::abs(r - c.r) > 1e-5 || std::abs(g - c.g) > 1e-5 || std::abs(b - c.b) > 1e-5) ++inconsistencies;
            }
        }
    };
    check_split(paths.align_file);
    check_split(paths.instruct_file);
    check_split(paths.eval_file);
    return inconsistencies;
}

}  // namespace tinyvlm
