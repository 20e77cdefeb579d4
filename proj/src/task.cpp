// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "prunevis/errors.hpp"
#include "prunevis/rng.hpp"

namespace prunevis {

std::string to_string(TargetSize s) {
    switch (s) {
        case TargetSize::Large: return "large";
        case TargetSize::Medium: return "medium";
        case TargetSize::Small: return "small";
    }
    return "?";
}

TargetSize parse_target_size(const std::string& s) {
    if (s == "large") return TargetSize::Large;
    if (s == "medium") return TargetSize::Medium;
    if (s == "small") return TargetSize::Small;
    throw ConfigError("unknown target size '" + s + "'");
}

std::size_t target_cells(TargetSize s) {
    switch (s) {
        case TargetSize::Large: return 8;
        case TargetSize::Medium: return 4;
        case TargetSize::Small: return 1;
    }
    return 0;
}

int VocabLayout::attribute_index(int id) const {
    const int a = id - attribute(0);
    return a >= 0 && a < n_attributes ? a : -1;
}

int VocabLayout::descriptor_attribute(int id) const {
    const int d = id - descriptor(0, 0);
    return d >= 0 && d < n_attributes * descriptors_per_attribute ? d / descriptors_per_attribute : -1;
}

int VocabLayout::entity_index(int id) const {
    const int e = id - entity(0);
    return e >= 0 && e < n_entities ? e : -1;
}

Category VocabLayout::category_of(int id) const {
    if (id < 0 || id >= vocab_size) throw DomainError("token id " + std::to_string(id) + " outside the vocabulary");
    if (id == kQuery || id == kQuestionMark) return Category::Relation;
    if (id < entity(0)) return Category::Filler;
    if (id < attribute(0)) return Category::Entity;
    if (id < relation(0)) return Category::Attribute;
    if (id < first_filler()) return Category::Relation;
    return Category::Filler;
}

void VocabLayout::validate() const {
    if (n_entities < static_cast<int>(kSceneCells)) throw ConfigError("vocab needs at least 16 entities");
    if (n_attributes < 2 || descriptors_per_attribute < 1 || n_relations < 1) throw ConfigError("vocab blocks too small");
    if (n_fillers() < 1) throw ConfigError("vocab_size leaves no filler ids");
}

void GeneratorConfig::validate() const {
    for (double p : {p_entity, p_attribute, p_relation, p_filler})
        if (!(p >= 0.0)) throw ConfigError("category probabilities must be non-negative");
    if (std::abs(p_entity + p_attribute + p_relation + p_filler - 1.0) > 1e-9)
        throw ConfigError("category probabilities must sum to 1");
    if (!(target_mention_rate >= 0.0 && target_mention_rate <= 1.0))
        throw ConfigError("target_mention_rate must lie in [0, 1]");
    if (!(visual_noise >= 0.0)) throw ConfigError("visual_noise must be non-negative");
}

void TaskSpec::validate() const {
    if (std::find(std::begin(kLengthBins), std::end(kLengthBins), length_bin) == std::end(kLengthBins))
        throw ConfigError("length_bin " + std::to_string(length_bin) + " is not one of 64/128/192/256/320");
    if (!(prior_strength >= 0.0 && prior_strength <= 1.0)) throw ConfigError("prior_strength must lie in [0, 1]");
    vocab.validate();
    generator.validate();
}

TokenStream Sample::stream() const {
    TokenStream s;
    s.visual = visual_features;
    s.text_ids = context;
    s.text_ids.insert(s.text_ids.end(), question.begin(), question.end());
    s.segments.assign(kSceneCells, Segment::Visual);
    s.segments.insert(s.segments.end(), context.size(), Segment::Context);
    s.segments.insert(s.segments.end(), question.size(), Segment::Question);
    s.categories = context_categories;
    for (int id : question) s.categories.push_back(spec.vocab.category_of(id));
    return s;
}

Sample generate_sample(const TaskSpec& spec, std::uint64_t index) {
    spec.validate();
    const auto& v = spec.vocab;
    const auto& g = spec.generator;
    Rng rng(mix_seed(spec.seed, index));

    Sample s;
    s.spec = spec;
    s.index = index;

    // scene
    std::vector<int> ents(static_cast<std::size_t>(v.n_entities));
    std::iota(ents.begin(), ents.end(), 0);
    for (std::size_t i = 0; i < kSceneCells; ++i) std::swap(ents[i], ents[i + rng.below(ents.size() - i)]);
    s.target_entity = ents[0];
    s.target_attribute = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_attributes)));
    std::vector<std::size_t> cells(kSceneCells);
    std::iota(cells.begin(), cells.end(), 0);
    for (std::size_t i = 0; i + 1 < kSceneCells; ++i) std::swap(cells[i], cells[i + rng.below(kSceneCells - i)]);
    const std::size_t n_target = target_cells(spec.target_size);
    s.cell_entity.assign(kSceneCells, 0);
    s.cell_attribute.assign(kSceneCells, 0);
    for (std::size_t i = 0; i < kSceneCells; ++i) {
        const std::size_t c = cells[i];
        if (i < n_target) {
            s.cell_entity[c] = s.target_entity;
            s.cell_attribute[c] = s.target_attribute;
        } else {
            s.cell_entity[c] = ents[i - n_target + 1];
            s.cell_attribute[c] = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_attributes)));
        }
    }
    const std::size_t dv = v.visual_dim();
    std::vector<double> feat(kSceneCells * dv, 0.0);
    for (std::size_t c = 0; c < kSceneCells; ++c) {
        feat[c * dv + static_cast<std::size_t>(s.cell_entity[c])] = 1.0;
        feat[c * dv + static_cast<std::size_t>(v.n_entities + s.cell_attribute[c])] = 1.0;
    }
    if (g.visual_noise > 0.0)
        for (auto& x : feat) x += g.visual_noise * rng.normal();
    s.visual_features = Tensor({kSceneCells, dv}, std::move(feat));

    // prior channel
    s.prior_attribute = rng.bernoulli(spec.prior_strength)
                            ? s.target_attribute
                            : static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_attributes)));

    // context
    const auto lo = static_cast<std::uint64_t>(std::ceil(0.9 * spec.length_bin));
    const auto hi = static_cast<std::uint64_t>(std::floor(1.1 * spec.length_bin));
    const std::size_t len = lo + rng.below(hi - lo + 1);
    s.context.reserve(len);
    s.context_categories.reserve(len);
    const double c1 = g.p_entity, c2 = c1 + g.p_attribute, c3 = c2 + g.p_relation;
    int last_entity = -1;
    for (std::size_t i = 0; i < len; ++i) {
        const double u = rng.uniform();
        int id;
        if (u < c1) {
            last_entity = rng.bernoulli(g.target_mention_rate)
                              ? s.target_entity
                              : static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_entities)));
            id = v.entity(last_entity);
        } else if (u < c2) {
            const int a = last_entity == s.target_entity
                              ? s.prior_attribute
                              : static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_attributes)));
            id = v.descriptor(a, static_cast<int>(rng.below(static_cast<std::uint64_t>(v.descriptors_per_attribute))));
        } else if (u < c3) {
            id = v.relation(static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_relations))));
        } else {
            id = v.first_filler() + static_cast<int>(rng.below(static_cast<std::uint64_t>(v.n_fillers())));
        }
        s.context.push_back(id);
        s.context_categories.push_back(v.category_of(id));
    }

    s.question = {VocabLayout::kQuery, VocabLayout::kQuestionMark, v.entity(s.target_entity)};
    s.answer = v.attribute(s.target_attribute);
    return s;
}

Sample blank_image_variant(const Sample& s, double value) {
    Sample out = s;
    out.visual_features = Tensor::full(s.visual_features.shape(), value);
    return out;
}

int visual_oracle(const Sample& s) {
    const auto& v = s.spec.vocab;
    const int e = v.entity_index(s.question.back());
    const std::size_t dv = v.visual_dim();
    const auto f = s.visual_features.data();
    for (std::size_t c = 0; c < kSceneCells; ++c) {
        const double* row = f.data() + c * dv;
        const auto ne = static_cast<std::size_t>(v.n_entities);
        const auto ce = std::max_element(row, row + ne) - row;
        if (ce != e) continue;
        const auto ca = std::max_element(row + ne, row + dv) - (row + ne);
        return v.attribute(static_cast<int>(ca));
    }
    throw ContractError("visual_oracle: question entity not in the scene");
}

int text_oracle(const Sample& s) {
    const auto& v = s.spec.vocab;
    const int target = s.question.back();
    std::vector<int> counts(static_cast<std::size_t>(v.n_attributes), 0);
    int last_entity = -1;
    for (int id : s.context) {
        if (v.entity_index(id) >= 0) last_entity = id;
        const int a = v.descriptor_attribute(id);
        if (a >= 0 && last_entity == target) ++counts[static_cast<std::size_t>(a)];
    }
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    return v.attribute(static_cast<int>(best));
}

Sample regenerate(const ManifestEntry& e) {
    TaskSpec spec = e.spec;
    spec.seed = e.seed;
    return generate_sample(spec, e.index);
}

Split make_split(const SplitPlan& plan) {
    if (plan.bins.empty()) throw ContractError("make_split: no bins");
    if (plan.sizes.empty()) throw ContractError("make_split: no target sizes");
    if (plan.train_priors.empty()) throw ContractError("make_split: no training prior strengths");
    if (plan.eval_counts.size() != plan.bins.size() ||
        (!plan.train_counts.empty() && plan.train_counts.size() != plan.bins.size()))
        throw ContractError("make_split: one count per bin required");
    for (auto c : plan.eval_counts)
        if (c < 1) throw ContractError("make_split: counts must be at least 1");
    const std::size_t n_train = std::accumulate(plan.train_counts.begin(), plan.train_counts.end(), std::size_t{0});
    const std::size_t n_eval = std::accumulate(plan.eval_counts.begin(), plan.eval_counts.end(), std::size_t{0});
    const std::uint64_t t0 = plan.train_offset, t1 = t0 + n_train;
    const std::uint64_t e0 = plan.eval_offset, e1 = e0 + n_eval;
    if (n_train > 0 && t0 < e1 && e0 < t1) throw ContractError("make_split: train and eval index ranges overlap");

    auto build = [&](const std::vector<std::size_t>& counts, std::uint64_t offset, bool train) {
        Manifest m;
        std::uint64_t index = offset;
        for (std::size_t b = 0; b < plan.bins.size(); ++b) {
            for (std::size_t i = 0; i < counts[b]; ++i) {
                ManifestEntry e;
                e.seed = plan.seed;
                e.index = index++;
                e.spec.length_bin = plan.bins[b];
                e.spec.target_size = plan.sizes[i % plan.sizes.size()];
                e.spec.prior_strength = train ? plan.train_priors[i % plan.train_priors.size()] : plan.eval_prior;
                e.spec.seed = plan.seed;
                e.spec.vocab = plan.vocab;
                e.spec.generator = plan.generator;
                e.spec.validate();
                m.push_back(e);
            }
        }
        return m;
    };
    Split out;
    if (n_train > 0) out.train = build(plan.train_counts, t0, true);
    out.eval = build(plan.eval_counts, e0, false);
    return out;
}

void to_json(nlohmann::json& j, const VocabLayout& v) {
    j = nlohmann::json{{"vocab_size", v.vocab_size},
                       {"n_entities", v.n_entities},
                       {"n_attributes", v.n_attributes},
                       {"descriptors_per_attribute", v.descriptors_per_attribute},
                       {"n_relations", v.n_relations}};
}

void from_json(const nlohmann::json& j, VocabLayout& v) {
    v = VocabLayout{};
    v.vocab_size = j.value("vocab_size", v.vocab_size);
    v.n_entities = j.value("n_entities", v.n_entities);
    v.n_attributes = j.value("n_attributes", v.n_attributes);
    v.descriptors_per_attribute = j.value("descriptors_per_attribute", v.descriptors_per_attribute);
    v.n_relations = j.value("n_relations", v.n_relations);
}

void to_json(nlohmann::json& j, const GeneratorConfig& g) {
    j = nlohmann::json{{"p_entity", g.p_entity},     {"p_attribute", g.p_attribute}, {"p_relation", g.p_relation},
                       {"p_filler", g.p_filler},     {"target_mention_rate", g.target_mention_rate},       {"visual_noise", g.visual_noise}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& g) {
    g = GeneratorConfig{};
    g.p_entity = j.value("p_entity", g.p_entity);
    g.p_attribute = j.value("p_attribute", g.p_attribute);
    g.p_relation = j.value("p_relation", g.p_relation);
    g.p_filler = j.value("p_filler", g.p_filler);
    g.target_mention_rate = j.value("target_mention_rate", g.target_mention_rate);
    g.visual_noise = j.value("visual_noise", g.visual_noise);
}

void to_json(nlohmann::json& j, const TaskSpec& s) {
    j = nlohmann::json{{"length_bin", s.length_bin},
                       {"target_size", to_string(s.target_size)},
                       {"prior_strength", s.prior_strength},
                       {"seed", s.seed},
                       {"vocab", s.vocab},
                       {"generator", s.generator}};
}

void from_json(const nlohmann::json& j, TaskSpec& s) {
    try {
        s = TaskSpec{};
        s.length_bin = j.at("length_bin").get<int>();
        s.target_size = parse_target_size(j.at("target_size").get<std::string>());
        s.prior_strength = j.at("prior_strength").get<double>();
        s.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("vocab")) s.vocab = j.at("vocab").get<VocabLayout>();
        if (j.contains("generator")) s.generator = j.at("generator").get<GeneratorConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad task spec: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const ManifestEntry& e) {
    j = nlohmann::json{{"seed", e.seed}, {"index", e.index}, {"spec", e.spec}};
}

void from_json(const nlohmann::json& j, ManifestEntry& e) {
    try {
        e.seed = j.at("seed").get<std::uint64_t>();
        e.index = j.at("index").get<std::uint64_t>();
        e.spec = j.at("spec").get<TaskSpec>();
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("bad manifest entry: ") + ex.what());
    }
}

void write_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write manifest '" + path + "'");
    for (const auto& e : m) out << nlohmann::json(e).dump() << '\n';
    if (!out) throw ConfigError("failed writing manifest '" + path + "'");
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read manifest '" + path + "'");
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            m.push_back(nlohmann::json::parse(line).get<ManifestEntry>());
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("manifest '" + path + "': " + e.what());
        }
    }
    return m;
}

}  // namespace prunevis
