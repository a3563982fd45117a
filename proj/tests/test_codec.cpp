#include <cstdio>
#include <fstream>
#include <random>

#include <doctest.h>

#include "tinyvlm/codec.hpp"
#include "tinyvlm/data.hpp"

using namespace tinyvlm;

TEST_CASE("encode/decode basics") {
    Vocabulary v = corpus_vocabulary();
    CHECK(v.encode("").empty());
    CHECK(v.decode({}) == "");

    auto ids = v.encode("red circle");
    CHECK(ids.size() == 2);
    CHECK(v.decode(ids) == "red circle");
}

TEST_CASE("reserved tokens occupy the lowest ids and never leak into plain text") {
    Vocabulary v = corpus_vocabulary();
    CHECK(v.token(Vocabulary::pad_id) == "<PAD>");
    CHECK(v.token(Vocabulary::bos_id) == "<BOS>");
    CHECK(v.token(Vocabulary::stop_id) == "<STOP>");
    CHECK(v.token(Vocabulary::image_id) == "<IMAGE>");
    CHECK(v.token(Vocabulary::unk_id) == "<UNK>");

    // literal reserved spellings in plain text encode as UNK, not as the ids
    for (auto id : v.encode("<STOP> <IMAGE> red"))
        CHECK((id == Vocabulary::unk_id || id >= Vocabulary::reserved_count));
}

TEST_CASE("unknown words become UNK and decode to the replacement glyph") {
    Vocabulary v = corpus_vocabulary();
    auto ids = v.encode("zebra");
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == Vocabulary::unk_id);
    CHECK(v.decode({Vocabulary::unk_id}) == "<UNK>");
}

TEST_CASE("decode rejects out-of-range ids") {
    Vocabulary v = corpus_vocabulary();
    CHECK_THROWS_AS(v.decode({v.size()}), std::out_of_range);
    CHECK_THROWS_AS(v.decode({-1}), std::out_of_range);
}

TEST_CASE("punctuation peels off glued words") {
    Vocabulary v = corpus_vocabulary();
    auto ids = v.encode("circle.");
    REQUIRE(ids.size() == 2);
    CHECK(v.decode(ids) == "circle .");
    CHECK(v.encode("what color is the circle ?") == v.encode("what color is the circle?"));
}

TEST_CASE("round-trip on 1000 random canonical corpus strings") {
    Vocabulary v = corpus_vocabulary();
    const auto words = corpus_word_list();
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> word_dist(0, words.size() - 1);
    std::uniform_int_distribution<int> len_dist(1, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string text;
        const int len = len_dist(rng);
        for (int i = 0; i < len; ++i) {
            if (i) text += ' ';
            text += words[word_dist(rng)];
        }
        auto ids = v.encode(text);
        CHECK(v.decode(ids) == text);
        CHECK(ids == v.encode(text));  // deterministic
        for (auto id : ids) CHECK(id >= Vocabulary::reserved_count);
    }
}

TEST_CASE("vocabulary file round-trips and validates the reserved header") {
    Vocabulary v = corpus_vocabulary();
    const std::string path = "vocab_roundtrip_test.txt";
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    CHECK(loaded.size() == v.size());
    for (std::int64_t i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));

    // a file whose first lines are not the reserved set is rejected
    {
        std::ofstream os("vocab_bad_test.txt");
        os << "red\ncircle\nblue\nsquare\ngreen\n";
    }
    CHECK_THROWS(Vocabulary::load("vocab_bad_test.txt"));
    std::remove(path.c_str());
    std::remove("vocab_bad_test.txt");
}

TEST_CASE("vocabulary construction rejects duplicates and reserved collisions") {
    CHECK_THROWS(Vocabulary::from_words({"red", "red"}));
    CHECK_THROWS(Vocabulary::from_words({"<STOP>"}));
}
