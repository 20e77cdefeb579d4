// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/stream.hpp"

#include "prunevis/errors.hpp"

namespace prunevis {

std::string to_string(Segment s) {
    switch (s) {
        case Segment::Visual: return "visual";
        case Segment::Context: return "context";
        case Segment::Question: return "question";
        case Segment::Answer: return "answer";
    }
    return "?";
}

std::string to_string(Category c) {
    switch (c) {
        case Category::Entity: return "entity";
        case Category::Attribute: return "attribute";
        case Category::Relation: return "relation";
        case Category::Filler: return "filler";
    }
    return "?";
}

std::pair<std::size_t, std::size_t> TokenStream::question_span() const {
    std::size_t begin = segments.size(), end = segments.size();
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i] != Segment::Question) continue;
        if (begin == segments.size()) begin = i;
        end = i + 1;
    }
    return {begin, end};
}

std::vector<std::size_t> TokenStream::question_positions() const {
    const auto [b, e] = question_span();
    std::vector<std::size_t> out;
    for (std::size_t i = b; i < e; ++i) out.push_back(i);
    return out;
}

TokenStream TokenStream::with_appended(int token, Category category) const {
    TokenStream out = *this;
    out.text_ids.push_back(token);
    out.segments.push_back(Segment::Answer);
    out.categories.push_back(category);
    return out;
}

void TokenStream::validate() const {
    const std::size_t n = n_visual();
    if (n == 0) throw ContractError("stream has no visual tokens");
    if (segments.size() != size()) throw ContractError("stream needs one segment label per position");
    if (categories.size() != text_count()) throw ContractError("stream needs one category per text position");
    for (std::size_t i = 0; i < size(); ++i) {
        const bool visual_slot = i < n;
        if ((segments[i] == Segment::Visual) != visual_slot) {
            throw ContractError("visual positions must strictly precede text positions");
        }
    }
    const auto [qb, qe] = question_span();
    if (qb == size()) throw ContractError("stream has no question span");
    for (std::size_t i = qb; i < qe; ++i)
        if (segments[i] != Segment::Question) throw ContractError("question span must be contiguous");
    for (std::size_t i = n; i < size(); ++i) {
        if (segments[i] == Segment::Answer && i < qe) throw ContractError("answer positions must follow the question");
        if (segments[i] == Segment::Context && i > qb) throw ContractError("context must precede the question");
    }
}

}  // namespace prunevis
