#include "tinyvlm/sequence.hpp"

#include <stdexcept>

namespace tinyvlm {

EncodedSequence build_sequence(const ConversationSample& sample, const Vocabulary& vocab,
                               std::int64_t max_context, std::int64_t visual_tokens) {
    if (sample.turns.empty()) throw std::invalid_argument("sample has no turns");
    for (const auto& t : sample.turns)
        if (t.human.empty() || t.assistant.empty())
            throw std::invalid_argument("sample has an empty human or assistant text");

    EncodedSequence seq;
    auto append = [&](const std::vector<std::int64_t>& ids, bool supervised) {
        for (auto id : ids) {
            seq.ids.push_back(id);
            seq.loss_mask.push_back(supervised);
        }
    };
    auto append_one = [&](std::int64_t id, bool supervised) {
        seq.ids.push_back(id);
        seq.loss_mask.push_back(supervised);
    };

    append(vocab.encode(sample.system_message), false);
    append_one(Vocabulary::stop_id, false);

    for (std::size_t t = 0; t < sample.turns.size(); ++t) {
        TurnSpan span;
        span.human_begin = seq.length();
        append(vocab.encode("Human :"), false);
        append(vocab.encode(sample.turns[t].human), false);
        if (t == 0) {
            seq.image_slot = seq.length();
            append_one(Vocabulary::image_id, false);
        }
        append_one(Vocabulary::stop_id, false);
        span.human_end = seq.length();

        span.assistant_begin = seq.length();
        append(vocab.encode("Assistant :"), false);
        append(vocab.encode(sample.turns[t].assistant), true);
        append_one(Vocabulary::stop_id, true);
        span.assistant_end = seq.length();
        seq.turn_spans.push_back(span);
    }

    const std::int64_t spliced_length = seq.length() - 1 + visual_tokens;
    if (spliced_length > max_context)
        throw std::invalid_argument("encoded sample of length " + std::to_string(seq.length()) + " (" +
                                    std::to_string(spliced_length) + " after visual splice) exceeds max_context " +
                                    std::to_string(max_context));
    return seq;
}

ShiftedTargets shift_targets(const EncodedSequence& seq) {
    const std::int64_t l = seq.length();
    if (l < 2) throw std::invalid_argument("shift_targets requires at least 2 tokens, got " + std::to_string(l));
    ShiftedTargets out;
    out.inputs.assign(seq.ids.begin(), seq.ids.end() - 1);
    out.targets.assign(seq.ids.begin() + 1, seq.ids.end());
    out.target_mask.assign(seq.loss_mask.begin() + 1, seq.loss_mask.end());
    bool any = false;
    for (bool b : out.target_mask) any = any || b;
    if (!any) throw std::invalid_argument("shift_targets: empty mask (no supervised positions)");
    return out;
}

ShiftedTargets spliced_shift_targets(const EncodedSequence& seq, std::int64_t visual_tokens) {
    if (seq.image_slot < 0 || seq.image_slot >= seq.length() ||
        seq.ids[static_cast<std::size_t>(seq.image_slot)] != Vocabulary::image_id)
        throw std::invalid_argument("spliced_shift_targets: missing image placeholder");
    if (visual_tokens <= 0) throw std::invalid_argument("spliced_shift_targets: visual_tokens must be positive");

    const std::int64_t spliced_len = seq.length() - 1 + visual_tokens;
    std::vector<std::int64_t> ids(static_cast<std::size_t>(spliced_len), Vocabulary::image_id);
    std::vector<bool> mask(static_cast<std::size_t>(spliced_len), false);
    for (std::int64_t p = 0; p < seq.image_slot; ++p) {
        ids[static_cast<std::size_t>(p)] = seq.ids[static_cast<std::size_t>(p)];
        mask[static_cast<std::size_t>(p)] = seq.loss_mask[static_cast<std::size_t>(p)];
    }
    for (std::int64_t p = seq.image_slot + 1; p < seq.length(); ++p) {
        ids[static_cast<std::size_t>(p + visual_tokens - 1)] = seq.ids[static_cast<std::size_t>(p)];
        mask[static_cast<std::size_t>(p + visual_tokens - 1)] = seq.loss_mask[static_cast<std::size_t>(p)];
    }

    ShiftedTargets out;
    out.inputs.assign(ids.begin(), ids.end() - 1);
    out.targets.assign(ids.begin() + 1, ids.end());
    out.target_mask.assign(mask.begin() + 1, mask.end());
    bool any = false;
    for (bool b : out.target_mask) any = any || b;
    if (!any) throw std::invalid_argument("spliced_shift_targets: empty mask (no supervised positions)");
    return out;
}

}  // namespace tinyvlm
