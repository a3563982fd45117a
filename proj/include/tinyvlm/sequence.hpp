#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinyvlm/codec.hpp"

namespace tinyvlm {

struct ConversationTurn {
    std::string human;
    std::string assistant;
};

struct ConversationSample {
    std::string image_path;
    std::string system_message;
    std::vector<ConversationTurn> turns;
};

struct TurnSpan {
    std::int64_t human_begin = 0;    // includes the "Human :" marker through its STOP
    std::int64_t human_end = 0;
    std::int64_t assistant_begin = 0;  // includes the "Assistant :" marker through its STOP
    std::int64_t assistant_end = 0;
};

// Trainable form of a sample. loss_mask is true exactly over each assistant
// answer's tokens plus its trailing STOP; false over the system message,
// role markers, human turns, and the image slot.
struct EncodedSequence {
    std::vector<std::int64_t> ids;
    std::vector<bool> loss_mask;
    std::int64_t image_slot = -1;
    std::vector<TurnSpan> turn_spans;

    std::int64_t length() const { return static_cast<std::int64_t>(ids.size()); }
};

// Layout: [system, STOP, then per turn: "Human :" question (+ IMAGE in turn 1,
// after the question) STOP "Assistant :" answer STOP]. Throws when the length
// after replacing the image slot with visual_tokens rows would exceed
// max_context. Deterministic.
EncodedSequence build_sequence(const ConversationSample& sample, const Vocabulary& vocab,
                               std::int64_t max_context, std::int64_t visual_tokens);

struct ShiftedTargets {
    std::vector<std::int64_t> inputs;
    std::vector<std::int64_t> targets;
    std::vector<bool> target_mask;
};

// Next-token alignment: position i predicts token i+1. Throws on sequences
// shorter than 2 and propagates the empty-mask error when no supervised
// target remains.
ShiftedTargets shift_targets(const EncodedSequence& seq);

// Same alignment in spliced coordinates: the image slot is expanded to
// visual_tokens placeholder positions (never supervised), so every mask
// index past the slot shifts by visual_tokens - 1. inputs/targets carry the
// placeholder id at visual positions.
ShiftedTargets spliced_shift_targets(const EncodedSequence& seq, std::int64_t visual_tokens);

}  // namespace tinyvlm
