// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "prunevis/errors.hpp"
#include "prunevis/rng.hpp"

namespace prunevis {

void ModelConfig::validate() const {
    if (n_layers < 2) throw ConfigError("model needs at least 2 layers");
    if (n_heads < 1 || d_head < 1 || d_model != n_heads * d_head) throw ConfigError("d_model must equal n_heads * d_head");
    if (n_visual < 1) throw ConfigError("model needs at least one visual token");
    if (vocab_size < 1 || visual_dim < 1 || mlp_ratio < 1 || max_text < 1) throw ConfigError("model sizes must be positive");
    if (context_positions < 1 || span_positions < 1) throw ConfigError("position tables must be non-empty");
    if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},
                       {"d_model", c.d_model},
                       {"d_head", c.d_head},
                       {"mlp_ratio", c.mlp_ratio},
                       {"vocab_size", c.vocab_size},
                       {"n_visual", c.n_visual},
                       {"visual_dim", c.visual_dim},
                       {"max_text", c.max_text},
                       {"context_positions", c.context_positions},
                       {"span_positions", c.span_positions},
                       {"init_std", c.init_std},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    try {
        c = ModelConfig{};
        c.n_layers = j.value("n_layers", c.n_layers);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.d_model = j.value("d_model", c.d_model);
        c.d_head = j.value("d_head", c.d_head);
        c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.n_visual = j.value("n_visual", c.n_visual);
        c.visual_dim = j.value("visual_dim", c.visual_dim);
        c.max_text = j.value("max_text", c.max_text);
        c.context_positions = j.value("context_positions", c.context_positions);
        c.span_positions = j.value("span_positions", c.span_positions);
        c.init_std = j.value("init_std", c.init_std);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
}

namespace {

std::string layer_name(int l, const char* what) { return "layer" + std::to_string(l) + "." + what; }

}  // namespace

ModelParams ModelParams::init(const ModelConfig& c) {
    c.validate();
    ModelParams p;
    p.config = c;
    Rng rng(mix_seed(c.seed, 0x6d6f64656cULL));
    const auto d = static_cast<std::size_t>(c.d_model);
    const auto m = d * static_cast<std::size_t>(c.mlp_ratio);
    auto normal = [&](Shape shape, double std) {
        std::vector<double> v(shape_numel(shape));
        for (auto& x : v) x = std * rng.normal();
        return Tensor(std::move(shape), std::move(v));
    };
    auto add = [&](std::string name, Tensor t) {
        p.names.push_back(std::move(name));
        p.values.push_back(std::move(t));
    };
    const double proj_std = c.init_std / std::sqrt(2.0 * c.n_layers);
    add("tok_emb", normal({static_cast<std::size_t>(c.vocab_size), d}, c.init_std));
    add("pos_emb", normal({static_cast<std::size_t>(c.context_positions + c.span_positions), d}, c.init_std));
    add("vis_w", normal({static_cast<std::size_t>(c.visual_dim), d}, c.init_std));
    add("vis_b", Tensor::zeros({d}));
    for (int l = 0; l < c.n_layers; ++l) {
        add(layer_name(l, "ln1_g"), Tensor::full({d}, 1.0));
        add(layer_name(l, "ln1_b"), Tensor::zeros({d}));
        add(layer_name(l, "w_qkv"), normal({d, 3 * d}, c.init_std));
        add(layer_name(l, "w_o"), normal({d, d}, proj_std));
        add(layer_name(l, "ln2_g"), Tensor::full({d}, 1.0));
        add(layer_name(l, "ln2_b"), Tensor::zeros({d}));
        add(layer_name(l, "w_fc1"), normal({d, m}, c.init_std));
        add(layer_name(l, "b_fc1"), Tensor::zeros({m}));
        add(layer_name(l, "w_fc2"), normal({m, d}, proj_std));
        add(layer_name(l, "b_fc2"), Tensor::zeros({d}));
    }
    add("lnf_g", Tensor::full({d}, 1.0));
    add("lnf_b", Tensor::zeros({d}));
    add("w_out", normal({d, static_cast<std::size_t>(c.vocab_size)}, c.init_std));
    add("b_out", Tensor::zeros({static_cast<std::size_t>(c.vocab_size)}));
    return p;
}

std::size_t ModelParams::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ContractError("no parameter named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

void ModelParams::set(const std::string& name, Tensor t) {
    auto& slot = values[index_of(name)];
    if (slot.shape() != t.shape()) throw ShapeError("parameter '" + name + "' has shape " + shape_str(slot.shape()));
    slot = std::move(t);
}

std::size_t ModelParams::count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.numel();
    return n;
}

bool ModelParams::bit_equal(const ModelParams& other) const {
    if (!(config == other.config) || names != other.names || values.size() != other.values.size()) return false;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!values[i].bit_equal(other.values[i])) return false;
    return true;
}

std::vector<int> position_ids(const ModelConfig& c, const TokenStream& s) {
    const std::size_t n = s.n_visual();
    const std::size_t qb = s.question_span().first - n;
    std::vector<int> ids(s.text_count());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (t < qb) {
            ids[t] = static_cast<int>(std::min<std::size_t>(qb - 1 - t, static_cast<std::size_t>(c.context_positions - 1)));
        } else {
            ids[t] = c.context_positions +
                     static_cast<int>(std::min<std::size_t>(t - qb, static_cast<std::size_t>(c.span_positions - 1)));
        }
    }
    return ids;
}

std::uint64_t layer_flops(const ModelConfig& c, std::uint64_t t) {
    const std::uint64_t d = static_cast<std::uint64_t>(c.d_model);
    const std::uint64_t m = static_cast<std::uint64_t>(c.mlp_ratio);
    // qkv 6td^2, scores and AV 4t^2d, output 2td^2, MLP 4m td^2
    return (8 + 4 * m) * t * d * d + 4 * t * t * d;
}

namespace {

struct Graph {
    Var logits;
    std::vector<std::vector<Var>> attention;
    std::vector<std::vector<std::size_t>> alive;
    PruneRecord record;
    std::uint64_t flops = 0;
};

std::uint64_t stream_hash(const TokenStream& s) {
    std::uint64_t h = mix_seed(0x7374726561ULL, s.size());
    for (int id : s.text_ids) h = mix_seed(h, static_cast<std::uint64_t>(id));
    return h;
}

void check_stream(const ModelConfig& c, const TokenStream& s) {
    s.validate();
    if (s.n_visual() != static_cast<std::size_t>(c.n_visual))
        throw ContractError("stream has " + std::to_string(s.n_visual()) + " visual tokens, model expects " +
                            std::to_string(c.n_visual));
    if (s.visual.cols() != static_cast<std::size_t>(c.visual_dim))
        throw ShapeError("visual features have width " + std::to_string(s.visual.cols()) + ", model expects " +
                         std::to_string(c.visual_dim));
    if (s.text_count() > static_cast<std::size_t>(c.max_text))
        throw ContractError("text length " + std::to_string(s.text_count()) + " exceeds max_text " +
                            std::to_string(c.max_text));
}

/// Parameter vars looked up by name.
struct ParamVars {
    const ModelParams& p;
    std::vector<Var> vars;
    Var operator()(const std::string& name) const { return vars[p.index_of(name)]; }
};

Var embed_graph(Tape& tape, const ParamVars& P, const TokenStream& s) {
    const auto& c = P.p.config;
    const Var feats = tape.constant(s.visual);
    const Var vis = ad::add_row_bias(ad::matmul(feats, P("vis_w")), P("vis_b"));
    const auto pos = position_ids(c, s);
    const Var text = ad::add(ad::embedding(P("tok_emb"), s.text_ids), ad::embedding(P("pos_emb"), pos));
    return ad::concat_rows(vis, text);
}

Graph build(Tape& tape, const ParamVars& P, const TokenStream& s, const std::optional<PruneConfig>& prune,
            const PruneRecord* replay, bool hidden_grad, const AttentionHook& hook) {
    const auto& c = P.p.config;
    check_stream(c, s);
    if (prune) prune->validate(c.n_layers);
    if (replay && (!prune || replay->layers.size() != prune->layers.size()))
        throw ContractError("replayed prune record does not match the prune config");

    Graph g;
    Var h = embed_graph(tape, P, s);
    if (hidden_grad) h = tape.leaf(h.value(), true);

    const std::size_t n = s.n_visual();
    const std::size_t total = s.size();
    const auto dk = static_cast<std::size_t>(c.d_head);
    const auto d = static_cast<std::size_t>(c.d_model);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<std::size_t> alive(total);
    for (std::size_t i = 0; i < total; ++i) alive[i] = i;
    std::vector<std::size_t> budget;
    std::vector<std::size_t> protected_pos;
    if (prune) {
        const std::size_t original_text = s.text_count();
        budget = plan_layer_budget(*prune, original_text);
        if (prune->effective_protect_question()) protected_pos = s.question_positions();
        protected_pos.push_back(s.target_position());
        g.record.retained.assign(total, true);
    }
    const std::uint64_t shash = stream_hash(s);

    for (int l = 0; l < c.n_layers; ++l) {
        const std::size_t T = alive.size();
        g.alive.push_back(alive);
        const Var a = ad::layer_norm(h, P(layer_name(l, "ln1_g")), P(layer_name(l, "ln1_b")));
        const Var qkv = ad::matmul(a, P(layer_name(l, "w_qkv")));
        std::vector<Var> heads, outs;
        for (int hd = 0; hd < c.n_heads; ++hd) {
            const auto off = static_cast<std::size_t>(hd) * dk;
            const Var q = ad::slice_cols(qkv, off, dk);
            const Var k = ad::slice_cols(qkv, d + off, dk);
            const Var v = ad::slice_cols(qkv, 2 * d + off, dk);
            Var att = ad::masked_row_softmax(ad::scale(ad::matmul_nt(q, k), inv_sqrt), MaskKind::Causal);
            if (hook) att = hook(l, hd, att);
            heads.push_back(att);
            outs.push_back(ad::matmul(att, v));
        }
        g.attention.push_back(heads);
        h = ad::add(h, ad::matmul(ad::concat_cols(outs), P(layer_name(l, "w_o"))));
        const Var b = ad::layer_norm(h, P(layer_name(l, "ln2_g")), P(layer_name(l, "ln2_b")));
        const Var f = ad::gelu(ad::add_row_bias(ad::matmul(b, P(layer_name(l, "w_fc1"))), P(layer_name(l, "b_fc1"))));
        h = ad::add(h, ad::add_row_bias(ad::matmul(f, P(layer_name(l, "w_fc2"))), P(layer_name(l, "b_fc2"))));
        g.flops += layer_flops(c, T);

        if (!prune) continue;
        const auto it = std::find(prune->layers.begin(), prune->layers.end(), l);
        if (it == prune->layers.end()) continue;
        const auto slot = static_cast<std::size_t>(it - prune->layers.begin());
        LayerPruneLog log;
        log.layer = l;

        std::vector<double> scores;
        if (prune->strategy != PruneStrategy::Random) {
            std::vector<Tensor> vals;
            for (const auto& v : heads) vals.push_back(v.value());
            scores = token_scores(vals, prune->strategy);
        }
        std::vector<std::size_t> prune_rows;
        if (replay) {
            for (const auto& pt : replay->layers[slot].pruned) {
                const auto r = std::lower_bound(alive.begin(), alive.end(), pt.position);
                if (r == alive.end() || *r != pt.position) throw ContractError("replayed position is not alive");
                prune_rows.push_back(static_cast<std::size_t>(r - alive.begin()));
            }
        } else if (budget[slot] > 0) {
            std::vector<std::size_t> prot_rows;
            for (auto p : protected_pos) {
                const auto r = std::lower_bound(alive.begin(), alive.end(), p);
                if (r != alive.end() && *r == p) prot_rows.push_back(static_cast<std::size_t>(r - alive.begin()));
            }
            if (prune->strategy == PruneStrategy::Random) {
                std::vector<std::size_t> cand;
                for (std::size_t r = n; r < T; ++r)
                    if (std::find(prot_rows.begin(), prot_rows.end(), r) == prot_rows.end()) cand.push_back(r);
                prune_rows = random_prune_set(mix_seed(mix_seed(prune->seed, static_cast<std::uint64_t>(l)), shash),
                                              budget[slot], cand);
            } else {
                prune_rows = select_prune_set(scores, budget[slot], prot_rows, n);
            }
        }
        std::vector<std::size_t> prune_pos;
        for (auto r : prune_rows) {
            prune_pos.push_back(alive[r]);
            log.pruned.push_back({alive[r], scores.empty() ? 0.0 : scores[r]});
        }
        if (!prune_pos.empty()) {
            const auto keep = surviving_rows(alive, prune_pos, n);
            h = ad::gather_rows(h, keep);
            std::vector<std::size_t> next;
            next.reserve(keep.size());
            for (auto r : keep) next.push_back(alive[r]);
            alive = std::move(next);
            for (auto p : prune_pos) g.record.retained[p] = false;
            g.record.cumulative += prune_pos.size();
        }
        g.record.layers.push_back(std::move(log));
    }

    const std::size_t last = alive.size() - 1;
    const std::size_t rows[] = {last};
    const Var fin = ad::layer_norm(ad::gather_rows(h, rows), P("lnf_g"), P("lnf_b"));
    g.logits = ad::add_row_bias(ad::matmul(fin, P("w_out")), P("b_out"));
    return g;
}

ParamVars constant_params(Tape& tape, const ModelParams& p) {
    ParamVars P{p, {}};
    for (const auto& v : p.values) P.vars.push_back(tape.constant(v));
    return P;
}

ForwardTrace to_trace(const Graph& g) {
    ForwardTrace t;
    for (const auto& layer : g.attention) {
        std::vector<Tensor> hs;
        for (const auto& v : layer) hs.push_back(v.value());
        t.attention.push_back(std::move(hs));
    }
    t.alive = g.alive;
    t.logits = Tensor({g.logits.value().numel()}, g.logits.value().to_vector());
    t.flops = g.flops;
    return t;
}

ForwardResult run_forward(const ModelParams& params, const TokenStream& stream, const std::optional<PruneConfig>& prune,
                          const PruneRecord* replay) {
    Tape tape;
    const auto P = constant_params(tape, params);
    Graph g = build(tape, P, stream, prune, replay, false, {});
    ForwardResult r;
    r.trace = to_trace(g);
    r.logits = r.trace.logits;
    r.record = std::move(g.record);
    return r;
}

}  // namespace

Tensor embed(const ModelParams& params, const TokenStream& stream) {
    check_stream(params.config, stream);
    Tape tape;
    const auto P = constant_params(tape, params);
    return embed_graph(tape, P, stream).value();
}

ForwardResult forward(const ModelParams& params, const TokenStream& stream, const std::optional<PruneConfig>& prune) {
    return run_forward(params, stream, prune, nullptr);
}

double answer_loss(const ModelParams& params, const TokenStream& stream, int answer,
                   const std::optional<PruneConfig>& prune, const AttentionHook& hook) {
    Tape tape;
    const auto P = constant_params(tape, params);
    const Graph g = build(tape, P, stream, prune, nullptr, false, hook);
    const int targets[] = {answer};
    return ad::cross_entropy(g.logits, targets).value().item();
}

std::vector<int> greedy_decode(const ModelParams& params, const TokenStream& stream,
                               const std::optional<PruneConfig>& prune, int max_steps, int stop_token) {
    if (max_steps < 1) throw ContractError("greedy_decode needs max_steps >= 1");
    std::vector<int> out;
    TokenStream cur = stream;
    PruneRecord first;
    for (int step = 0; step < max_steps; ++step) {
        const auto r = run_forward(params, cur, prune, step == 0 || !prune ? nullptr : &first);
        if (step == 0) first = r.record;
        const auto lg = r.logits.data();
        const int tok = static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
        out.push_back(tok);
        if (tok == stop_token) break;
        cur = cur.with_appended(tok, Category::Filler);
    }
    return out;
}

double loss_and_gradients(const ModelParams& params, std::span<const Example> batch,
                          std::vector<std::vector<double>>& grads) {
    if (batch.empty()) throw ContractError("training batch is empty");
    grads.assign(params.values.size(), {});
    for (std::size_t i = 0; i < params.values.size(); ++i) grads[i].assign(params.values[i].numel(), 0.0);
    double loss = 0.0;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        Tape tape;
        ParamVars P{params, {}};
        for (const auto& v : params.values) P.vars.push_back(tape.leaf(v, true));
        const Graph g = build(tape, P, ex.stream, std::nullopt, nullptr, false, {});
        const int targets[] = {ex.answer};
        const Var l = ad::cross_entropy(g.logits, targets);
        loss += w * l.value().item();
        const auto gr = tape.backward(l);
        for (std::size_t i = 0; i < P.vars.size(); ++i) {
            const auto src = gr.raw(P.vars[i]);
            if (src.empty()) continue;
            auto& dst = grads[i];
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
        }
    }
    return loss;
}

double train_step(ModelParams& params, std::span<const Example> batch, AdamState& state, const AdamConfig& opt) {
    std::vector<std::vector<double>> grads;
    double loss = 0.0;
    try {
        loss = loss_and_gradients(params, batch, grads);
    } catch (const NumericError& e) {
        throw TrainingError(std::string("non-finite value at step ") + std::to_string(state.step) + ": " + e.what());
    }
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss at step " + std::to_string(state.step));
    if (state.m.empty()) {
        for (const auto& v : params.values) {
            state.m.emplace_back(v.numel(), 0.0);
            state.v.emplace_back(v.numel(), 0.0);
        }
    }
    double scale = 1.0;
    if (opt.clip > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads)
            for (double x : g) sq += x * x;
        const double norm = std::sqrt(sq);
        if (norm > opt.clip) scale = opt.clip / norm;
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        auto w = params.values[i].to_vector();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const bool decay = opt.weight_decay > 0.0 && params.values[i].rank() == 2;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double g = grads[i][j] * scale;
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g;
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g;
            double step = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt.eps);
            if (decay) step += opt.weight_decay * w[j];
            w[j] -= opt.lr * step;
        }
        params.values[i] = Tensor(params.values[i].shape(), std::move(w));
    }
    return loss;
}

AttentionGradients attention_gradients(const ModelParams& params, const TokenStream& stream, int answer,
                                       const std::optional<PruneConfig>& prune) {
    Tape tape;
    const auto P = constant_params(tape, params);
    const Graph g = build(tape, P, stream, prune, nullptr, true, {});
    const int targets[] = {answer};
    const Var l = ad::cross_entropy(g.logits, targets);
    const auto gr = tape.backward(l);
    AttentionGradients out;
    out.trace = to_trace(g);
    out.loss = l.value().item();
    for (const auto& layer : g.attention) {
        std::vector<Tensor> gs;
        for (const auto& v : layer) gs.push_back(gr.of(v));
        out.grads.push_back(std::move(gs));
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'P', 'R', 'U', 'N', 'E', 'V', 'I', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw ConfigError("checkpoint is truncated");
    return v;
}

std::string take_string(std::istream& is, std::uint64_t n) {
    if (n > (1u << 24)) throw ConfigError("checkpoint string is implausibly long");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw ConfigError("checkpoint is truncated");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write checkpoint '" + path + "'");
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    const std::string cfg = nlohmann::json(params.config).dump();
    put(os, static_cast<std::uint64_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put(os, static_cast<std::uint64_t>(params.values.size()));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const auto& name = params.names[i];
        const auto& t = params.values[i];
        put(os, static_cast<std::uint64_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(os, static_cast<std::uint64_t>(t.rank()));
        for (auto dim : t.shape()) put(os, static_cast<std::uint64_t>(dim));
        const auto data = t.data();
        os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!os) throw ConfigError("failed writing checkpoint '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read checkpoint '" + path + "'");
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ConfigError("'" + path + "' is not a checkpoint");
    if (take<std::uint32_t>(is) != kVersion) throw ConfigError("unsupported checkpoint version");
    ModelConfig cfg;
    try {
        cfg = nlohmann::json::parse(take_string(is, take<std::uint64_t>(is))).get<ModelConfig>();
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("checkpoint config: ") + e.what());
    }
    if (expected && !(*expected == cfg)) throw ConfigError("checkpoint config does not match the requested model config");
    ModelParams p = ModelParams::init(cfg);
    const auto n = take<std::uint64_t>(is);
    if (n != p.values.size()) throw ConfigError("checkpoint holds the wrong number of tensors");
    for (std::size_t i = 0; i < n; ++i) {
        const auto name = take_string(is, take<std::uint64_t>(is));
        if (name != p.names[i]) throw ConfigError("checkpoint tensor '" + name + "' out of place");
        const auto rank = take<std::uint64_t>(is);
        Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(take<std::uint64_t>(is));
        if (shape != p.values[i].shape()) throw ConfigError("checkpoint tensor '" + name + "' has the wrong shape");
        std::vector<double> data(shape_numel(shape));
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) throw ConfigError("checkpoint is truncated");
        try {
            p.values[i] = Tensor(shape, std::move(data));
        } catch (const NumericError&) {
            throw ConfigError("checkpoint tensor '" + name + "' holds non-finite values");
        }
    }
    return p;
}

}  // namespace prunevis
