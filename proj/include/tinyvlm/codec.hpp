#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace tinyvlm {

// Fixed word-level tokenizer. Words are separated by whitespace; the
// punctuation characters . , ? ! : ; are peeled off as their own tokens
// so glued forms like "circle." still encode. decode joins with single
// spaces, so encode/decode round-trips exactly on canonical corpus text
// (single-space separated tokens). Immutable after construction.
class Vocabulary {
public:
    static constexpr std::int64_t pad_id = 0;
    static constexpr std::int64_t bos_id = 1;
    static constexpr std::int64_t stop_id = 2;
    static constexpr std::int64_t image_id = 3;
    static constexpr std::int64_t unk_id = 4;
    static constexpr std::int64_t reserved_count = 5;

    // Builds a vocabulary from plain words; the five reserved tokens are
    // prepended. Duplicate or reserved-looking words are rejected.
    static Vocabulary from_words(const std::vector<std::string>& words);

    // One token per line, line number = id, first five lines fixed.
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
    const std::string& token(std::int64_t id) const;

    std::vector<std::int64_t> encode(const std::string& text) const;
    std::string decode(const std::vector<std::int64_t>& ids) const;

    // Plain-word lookup (reserved tokens excluded); -1 if absent.
    std::int64_t find(const std::string& word) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int64_t> word_to_id_;  // plain words only
};

}  // namespace tinyvlm
