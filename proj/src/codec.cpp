#include "tinyvlm/codec.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tinyvlm {

namespace {

const std::array<std::string, Vocabulary::reserved_count> kReserved = {"<PAD>", "<BOS>", "<STOP>", "<IMAGE>", "<UNK>"};

bool is_punct_token(char c) {
    return c == '.' || c == ',' || c == '?' || c == '!' || c == ':' || c == ';';
}

}  // namespace

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    v.tokens_.assign(kReserved.begin(), kReserved.end());
    for (const auto& w : words) {
        if (w.empty()) throw std::invalid_argument("vocabulary: empty word");
        for (const auto& r : kReserved)
            if (w == r) throw std::invalid_argument("vocabulary: '" + w + "' collides with a reserved token");
        if (v.word_to_id_.count(w)) throw std::invalid_argument("vocabulary: duplicate word '" + w + "'");
        v.word_to_id_[w] = static_cast<std::int64_t>(v.tokens_.size());
        v.tokens_.push_back(w);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open vocabulary file " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.size() < kReserved.size())
        throw std::runtime_error("vocabulary file " + path + " is missing the reserved tokens");
    for (std::size_t i = 0; i < kReserved.size(); ++i)
        if (lines[i] != kReserved[i])
            throw std::runtime_error("vocabulary file " + path + ": line " + std::to_string(i + 1) + " must be " +
                                     kReserved[i]);
    return from_words({lines.begin() + static_cast<std::ptrdiff_t>(kReserved.size()), lines.end()});
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write vocabulary file " + path);
    for (const auto& t : tokens_) os << t << "\n";
}

const std::string& Vocabulary::token(std::int64_t id) const {
    if (id < 0 || id >= size())
        throw std::out_of_range("token id " + std::to_string(id) + " outside [0, " + std::to_string(size()) + ")");
    return tokens_[static_cast<std::size_t>(id)];
}

std::int64_t Vocabulary::find(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? -1 : it->second;
}

std::vector<std::int64_t> Vocabulary::encode(const std::string& text) const {
    std::vector<std::int64_t> ids;
    std::vector<std::string> pieces;
    std::string cur;
    auto flush_word = [&]() {
        if (cur.empty()) return;
        pieces.push_back(cur);
        cur.clear();
    };
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            flush_word();
        } else if (is_punct_token(c)) {
            flush_word();
            pieces.emplace_back(1, c);
        } else {
            cur.push_back(c);
        }
    }
    flush_word();
    for (const auto& p : pieces) {
        const std::int64_t id = find(p);
        ids.push_back(id >= 0 ? id : unk_id);
    }
    return ids;
}

std::string Vocabulary::decode(const std::vector<std::int64_t>& ids) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ' ';
        os << token(ids[i]);
    }
    return os.str();
}

}  // namespace tinyvlm
