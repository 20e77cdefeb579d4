// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prunevis/tensor.hpp"

namespace prunevis {

enum class Segment : std::uint8_t { Visual, Context, Question, Answer };
enum class Category : std::uint8_t { Entity, Attribute, Relation, Filler };

inline constexpr std::size_t kCategoryCount = 4;

std::string to_string(Segment s);
std::string to_string(Category c);

/// Model input: a visual-feature prefix followed by text tokens.
///
/// Positions are numbered over the whole sequence: 0..n_visual-1 are the
/// visual rows, text position t sits at n_visual + t.
struct TokenStream {
    Tensor visual;                    ///< n_visual x d_in
    std::vector<int> text_ids;
    std::vector<Segment> segments;    ///< one per position, visual included
    std::vector<Category> categories; ///< one per text position

    std::size_t n_visual() const { return visual.rank() == 2 ? visual.rows() : 0; }
    std::size_t text_count() const { return text_ids.size(); }
    std::size_t size() const { return n_visual() + text_count(); }
    /// Final position; its logits predict the next token.
    std::size_t target_position() const { return size() - 1; }

    /// Positions [begin, end) of the question span.
    std::pair<std::size_t, std::size_t> question_span() const;
    std::vector<std::size_t> question_positions() const;

    /// Copy with `token` appended as an answer position.
    TokenStream with_appended(int token, Category category) const;

    /// Throws ContractError on a malformed stream.
    void validate() const;
};

}  // namespace prunevis
