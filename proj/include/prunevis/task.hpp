// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic visual-recall task.
//
// A scene is a 4x4 grid of cells; each cell is one visual token holding an
// (entity, attribute) pair. The question names an entity and the answer is
// the attribute of the cells holding it. The context before the question is
// distractor text whose attribute words are biased towards a "prior"
// attribute, which equals the true answer with probability prior_strength.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunevis/stream.hpp"
#include "prunevis/tensor.hpp"

namespace prunevis {

enum class TargetSize { Large, Medium, Small };

std::string to_string(TargetSize s);
TargetSize parse_target_size(const std::string& s);
/// Number of the 16 cells that carry the target entity: 8, 4 or 1.
std::size_t target_cells(TargetSize s);

inline constexpr std::size_t kSceneCells = 16;
inline constexpr int kLengthBins[] = {64, 128, 192, 256, 320};

/// Static partition of the token ids.
struct VocabLayout {
    int vocab_size = 512;
    int n_entities = 16;
    int n_attributes = 16;
    int descriptors_per_attribute = 2;
    int n_relations = 32;

    static constexpr int kPad = 0;
    static constexpr int kQuery = 1;
    static constexpr int kQuestionMark = 2;

    int entity(int i) const { return 3 + i; }
    int attribute(int a) const { return entity(n_entities) + a; }
    int descriptor(int a, int j) const { return attribute(n_attributes) + a * descriptors_per_attribute + j; }
    int relation(int i) const { return descriptor(n_attributes, 0) + i; }
    int first_filler() const { return relation(n_relations); }
    int n_fillers() const { return vocab_size - first_filler(); }

    /// Attribute index of an answer token, or -1.
    int attribute_index(int id) const;
    /// Attribute implied by a descriptor token, or -1.
    int descriptor_attribute(int id) const;
    /// Entity index of an entity token, or -1.
    int entity_index(int id) const;

    /// Throws DomainError for ids outside the vocabulary.
    Category category_of(int id) const;
    /// One-hot entity block followed by one-hot attribute block.
    std::size_t visual_dim() const { return static_cast<std::size_t>(n_entities + n_attributes); }

    void validate() const;
    friend bool operator==(const VocabLayout&, const VocabLayout&) = default;
};

/// Knobs of the distractor text.
struct GeneratorConfig {
    double p_entity = 0.2;
    double p_attribute = 0.15;
    double p_relation = 0.15;
    double p_filler = 0.5;
    /// Share of entity words that name the target entity. Every attribute
    /// word describes the closest preceding entity word: the prior attribute
    /// after a target mention, a random attribute otherwise.
    double target_mention_rate = 0.4;
    /// Std-dev of Gaussian noise added to the visual features.
    double visual_noise = 0.0;

    void validate() const;
    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct TaskSpec {
    int length_bin = 64;
    TargetSize target_size = TargetSize::Medium;
    double prior_strength = 0.0;
    std::uint64_t seed = 0;
    VocabLayout vocab;
    GeneratorConfig generator;

    void validate() const;
    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Sample {
    Tensor visual_features;  ///< 16 x visual_dim
    std::vector<int> context;
    std::vector<Category> context_categories;
    std::vector<int> question;
    int answer = 0;

    int target_entity = 0;
    int target_attribute = 0;
    int prior_attribute = 0;
    std::vector<int> cell_entity;
    std::vector<int> cell_attribute;
    TaskSpec spec;
    std::uint64_t index = 0;

    TokenStream stream() const;
};

Sample generate_sample(const TaskSpec& spec, std::uint64_t index);

/// Same sample with every visual feature set to `value`.
Sample blank_image_variant(const Sample& s, double value = 0.0);

/// Answer token read from the visual features and the question alone.
int visual_oracle(const Sample& s);
/// Most frequent attribute among the attribute words describing the
/// question's entity; attribute 0 when there are none.
int text_oracle(const Sample& s);

struct ManifestEntry {
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    TaskSpec spec;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

Sample regenerate(const ManifestEntry& e);

struct SplitPlan {
    std::vector<int> bins{64, 128, 192, 256, 320};
    std::vector<std::size_t> train_counts;  ///< per bin; empty means no training split
    std::vector<std::size_t> eval_counts;   ///< per bin
    std::vector<TargetSize> sizes{TargetSize::Large, TargetSize::Medium, TargetSize::Small};
    /// Prior strengths cycled over training samples.
    std::vector<double> train_priors{0.0};
    double eval_prior = 0.3;
    std::uint64_t seed = 0;
    std::uint64_t train_offset = 0;
    std::uint64_t eval_offset = 1ULL << 40;
    VocabLayout vocab;
    GeneratorConfig generator;
};

struct Split {
    Manifest train;
    Manifest eval;
};

/// Builds train/eval manifests. Target sizes are cycled within each bin.
/// Throws ContractError when the two index ranges overlap.
Split make_split(const SplitPlan& plan);

void to_json(nlohmann::json& j, const VocabLayout& v);
void from_json(const nlohmann::json& j, VocabLayout& v);
void to_json(nlohmann::json& j, const GeneratorConfig& g);
void from_json(const nlohmann::json& j, GeneratorConfig& g);
void to_json(nlohmann::json& j, const TaskSpec& s);
void from_json(const nlohmann::json& j, TaskSpec& s);
void to_json(nlohmann::json& j, const ManifestEntry& e);
void from_json(const nlohmann::json& j, ManifestEntry& e);

/// JSON lines, one entry per line.
void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

}  // namespace prunevis
