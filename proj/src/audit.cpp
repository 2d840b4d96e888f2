#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "fedmem/harness.hpp"
#include "fedmem/parallel.hpp"
#include "fedmem/rng.hpp"

namespace fedmem {

const RegimeResult* AuditReport::find(Regime regime) const
{
    for (const auto& r : regimes) {
        if (r.regime == regime) return &r;
    }
    return nullptr;
}

std::vector<ClientDataset> training_view(const std::vector<ClientDataset>& clients, const std::optional<Task>& task)
{
    if (!task) return clients;
    auto out = clients;
    for (auto& c : out) {
        for (auto& s : c.samples) s.text = apply_template(s, *task);
    }
    return out;
}

std::vector<ClientDataset> audit_view(const std::vector<ClientDataset>& clients, const std::optional<Task>& task)
{
    if (!task) return clients;
    auto out = clients;
    const std::string field(audited_field(*task));
    for (auto& c : out) {
        for (auto& s : c.samples) {
            if (auto it = s.fields.find(field); it != s.fields.end()) s.text = it->second;
        }
    }
    return out;
}

namespace {

/// Runs `f`, prefixing any library error with the stage and client pair.
template <typename F>
auto staged(const std::string& stage, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.code(), stage + ": " + e.what());
    }
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string cache_key(const GenerationBackend& backend, const DecodingConfig& dec,
                      const std::vector<GenerationRequest>& requests)
{
    std::string digest = backend.tag() + '\n' + dec.fingerprint() + '\n';
    for (const auto& r : requests) {
        digest += r.prefix_id;
        digest += '\x1f';
        digest += std::to_string(r.source_client);
        digest += '\x1f';
        digest += r.prefix_text;
        digest += '\x1e';
    }
    return hex64(fnv1a(digest));
}

std::vector<Generation> generate_all(const GenerationBackend& backend, const std::vector<GenerationRequest>& requests,
                                     const DecodingConfig& dec, const std::optional<std::filesystem::path>& cache,
                                     std::size_t workers)
{
    std::map<std::string, Generation> cached;
    if (cache && std::filesystem::exists(*cache)) {
        std::ifstream in(*cache);
        const auto tag = backend.tag();
        const auto fp = dec.fingerprint();
        for (auto& g : read_generations(in)) {
            if (g.backend_tag == tag && g.decoding == fp && !g.failed) cached.emplace(g.prefix_id, std::move(g));
        }
    }

    std::vector<Generation> out(requests.size());
    parallel_for(requests.size(), workers, [&](std::size_t i) {
        const auto& r = requests[i];
        if (auto it = cached.find(r.prefix_id); it != cached.end() && it->second.source_client == r.source_client) {
            out[i] = it->second;
            return;
        }
        try {
            out[i] = generate(backend, r, dec);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::backend_error) throw;
            Generation g;
            g.prefix_id = r.prefix_id;
            g.source_client = r.source_client;
            g.backend_tag = backend.tag();
            g.decoding = dec.fingerprint();
            g.failed = true;
            out[i] = std::move(g);
        }
    });

    if (cache) {
        std::vector<Generation> ok;
        for (const auto& g : out) {
            if (!g.failed) ok.push_back(g);
        }
        std::filesystem::create_directories(cache->parent_path());
        const auto tmp = cache->string() + ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary);
            if (!f) fail(ErrorCode::data_error, "cannot write generation cache " + tmp);
            write_generations(f, ok);
        }
        std::filesystem::rename(tmp, *cache);
    }
    return out;
}

struct TrialContext {
    const AuditConfig& cfg;
    const std::vector<ClientDataset>& audit_texts;
    const std::vector<ClientWeight>& weights;
    const GenerationBackend& backend;
    const AuditOptions& options;
    Regime regime;
};

struct TrialOutput {
    MemReport report;
    TrialArtifacts artifacts;
};

TrialOutput run_trial(const TrialContext& ctx, std::size_t t)
{
    const auto& cfg = ctx.cfg;
    const std::size_t L = ctx.audit_texts.size();
    const std::uint64_t trial_seed = cfg.seed + t;
    TrialOutput out;
    auto& art = out.artifacts;

    // Sample: one evaluation set per source client, reused for every target.
    art.eval_sets.resize(L);
    for (std::size_t j = 0; j < L; ++j) {
        art.eval_sets[j] = staged("sample client " + std::to_string(j), [&] {
            return sample_eval_set(ctx.audit_texts[j], cfg.n, cfg.prefix_len, mix64(trial_seed, j));
        });
    }

    // Generate.
    DecodingConfig dec = cfg.decoding;
    dec.seed = trial_seed;
    std::vector<GenerationRequest> requests;
    for (const auto& es : art.eval_sets) {
        for (const auto& e : es.entries) {
            requests.push_back({e.sample_id, es.client, e.prefix_tokens, e.prefix_text});
        }
    }
    std::optional<std::filesystem::path> cache;
    if (ctx.options.cache_dir) {
        cache = *ctx.options.cache_dir / ("gen-" + std::string(to_string(ctx.regime)) + "-t" + std::to_string(t) +
                                          "-" + cache_key(ctx.backend, dec, requests) + ".jsonl");
    }
    art.generations = staged("generate", [&] { return generate_all(ctx.backend, requests, dec, cache, cfg.workers); });

    std::vector<ClientTally> tallies(L);
    std::size_t failed = 0;
    for (std::size_t j = 0; j < L; ++j) {
        tallies[j].client = j;
        tallies[j].sampled = art.eval_sets[j].entries.size();
    }
    for (const auto& g : art.generations) {
        auto& tally = tallies[g.source_client];
        if (g.failed) {
            ++tally.failed;
            ++failed;
        } else if (g.filtered) {
            ++tally.filtered;
        } else {
            ++tally.evaluated;
        }
    }
    if (!requests.empty() &&
        static_cast<double>(failed) > cfg.max_failure_fraction * static_cast<double>(requests.size())) {
        fail(ErrorCode::backend_failure_threshold, std::to_string(failed) + " of " + std::to_string(requests.size()) +
                                                       " generations failed (" + ctx.backend.tag() + ")");
    }
    if (ctx.options.generate_only) return out;

    for (std::size_t j = 0; j < L; ++j) {
        if (tallies[j].evaluated == 0) {
            fail(ErrorCode::data_error, "client " + std::to_string(j) + " has no usable generations in trial " +
                                            std::to_string(t));
        }
    }

    // Retrieve and discriminate.
    std::vector<SuffixIndex> indices;
    indices.reserve(L);
    for (std::size_t k = 0; k < L; ++k) {
        indices.push_back(staged("index client " + std::to_string(k),
                                 [&] { return SuffixIndex::build(art.eval_sets[k], cfg.bm25); }));
    }

    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < art.generations.size(); ++i) {
        if (!art.generations[i].failed && !art.generations[i].filtered) usable.push_back(i);
    }

    struct Hit {
        bool matched = false;
        std::vector<Category> categories;
    };
    std::vector<std::vector<Hit>> hits(usable.size(), std::vector<Hit>(L));
    parallel_for(usable.size(), cfg.workers, [&](std::size_t u) {
        const auto& g = art.generations[usable[u]];
        const SubstringMatcher matcher(g.text);
        for (std::size_t k = 0; k < L; ++k) {
            staged("detect " + std::to_string(g.source_client) + "->" + std::to_string(k), [&] {
                if (indices[k].analyze(g.text).empty()) return;
                const auto top = indices[k].query_top(g.text, cfg.n_prime);
                std::vector<bool> seen(std::size(all_categories), false);
                Hit& hit = hits[u][k];
                for (const auto& sd : top) {
                    const auto& suffix = art.eval_sets[k].entries[sd.doc].suffix_text;
                    const auto r = classify(matcher, g.text, suffix, cfg.detector);
                    if (!r.matched) continue;
                    hit.matched = true;
                    for (auto c : r.categories()) seen[static_cast<std::size_t>(c)] = true;
                }
                for (auto c : all_categories) {
                    if (seen[static_cast<std::size_t>(c)]) hit.categories.push_back(c);
                }
            });
        }
    });

    art.pairs.resize(L * L);
    for (std::size_t j = 0; j < L; ++j) {
        for (std::size_t k = 0; k < L; ++k) {
            art.pairs[j * L + k].source = j;
            art.pairs[j * L + k].target = k;
        }
    }
    for (std::size_t u = 0; u < usable.size(); ++u) {
        const auto& g = art.generations[usable[u]];
        const std::size_t j = g.source_client;
        for (std::size_t k = 0; k < L; ++k) {
            auto& pair = art.pairs[j * L + k];
            pair.evaluated.insert(g.prefix_id);
            if (!hits[u][k].matched) continue;
            pair.memorizing.insert(g.prefix_id);
            for (auto c : hits[u][k].categories) pair.per_category[c].insert(g.prefix_id);
        }
    }

    out.report = build_report(art.pairs, L, ctx.weights, ctx.regime, std::move(tallies));
    out.report.label = "trial " + std::to_string(t);
    return out;
}

}  // namespace

AuditReport run_audit(const AuditConfig& cfg, const std::vector<ClientDataset>& clients, const AuditOptions& options)
{
    cfg.validate();
    const std::size_t L = clients.size();
    if (L == 0) fail(ErrorCode::data_error, "no clients");
    for (std::size_t j = 0; j < L; ++j) {
        if (clients[j].client != j) fail(ErrorCode::data_error, "client datasets must be indexed 0..L-1 in order");
    }

    std::vector<Regime> regimes;
    if (cfg.regime != RegimeSelection::cl) regimes.push_back(Regime::fl);
    if (cfg.regime != RegimeSelection::fl) regimes.push_back(Regime::cl);
    if (L < 2 && cfg.regime != RegimeSelection::cl) {
        fail(ErrorCode::data_error, "the FL regime needs at least 2 clients");
    }

    std::vector<ClientWeight> weights = cfg.train.weights;
    if (weights.empty()) {
        weights = data_size_weights(clients);
    } else if (weights.size() != L) {
        fail(ErrorCode::config_error, std::to_string(weights.size()) + " weights for " + std::to_string(L) + " clients");
    }

    const auto audit_texts = audit_view(clients, cfg.task);
    std::optional<std::vector<ClientDataset>> train_texts;
    TrainConfig train = cfg.train;
    train.workers = cfg.workers;

    AuditReport report;
    for (auto regime : regimes) {
        std::optional<NGramModel> model;
        std::optional<NGramBackend> builtin;
        const GenerationBackend* backend = options.backend;
        if (backend == nullptr) {
            const NGramModel* given = regime == Regime::fl ? options.fl_model : options.cl_model;
            if (given == nullptr) {
                if (!train_texts) train_texts = training_view(clients, cfg.task);
                model = staged(std::string("train ") + std::string(to_string(regime)), [&] {
                    return regime == Regime::fl ? train_federated(*train_texts, train)
                                                : train_centralized(*train_texts, train);
                });
                given = &*model;
            }
            builtin.emplace(*given, cfg.train.smoothing_lambda);
            backend = &*builtin;
        }

        RegimeResult rr;
        rr.regime = regime;
        const TrialContext ctx{cfg, audit_texts, weights, *backend, options, regime};
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            auto trial = run_trial(ctx, t);
            rr.trials.push_back(std::move(trial.report));
            rr.artifacts.push_back(std::move(trial.artifacts));
        }
        if (!options.generate_only) rr.mean = mean_report(rr.trials, "mean");
        report.regimes.push_back(std::move(rr));
    }
    return report;
}

std::optional<SweepFactor> parse_sweep_factor(std::string_view name)
{
    if (name == "decoding") return SweepFactor::decoding;
    if (name == "prefix_len" || name == "prefix") return SweepFactor::prefix_len;
    if (name == "algorithm") return SweepFactor::algorithm;
    if (name == "rounds") return SweepFactor::rounds;
    if (name == "model_order" || name == "order") return SweepFactor::model_order;
    return std::nullopt;
}

std::string_view to_string(SweepFactor factor) noexcept
{
    switch (factor) {
    case SweepFactor::decoding: return "decoding";
    case SweepFactor::prefix_len: return "prefix_len";
    case SweepFactor::algorithm: return "algorithm";
    case SweepFactor::rounds: return "rounds";
    case SweepFactor::model_order: return "model_order";
    }
    return "decoding";
}

namespace {

long long parse_positive(const std::string& value, SweepFactor factor)
{
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size() || v <= 0) {
        fail(ErrorCode::config_error,
             "'" + value + "' is not a positive integer for sweep factor " + std::string(to_string(factor)));
    }
    return v;
}

}  // namespace

AuditConfig with_factor(const AuditConfig& base, SweepFactor factor, const std::string& value)
{
    AuditConfig c = base;
    switch (factor) {
    case SweepFactor::decoding: {
        auto s = parse_strategy(value);
        if (!s) fail(ErrorCode::config_error, "unknown decoding strategy '" + value + "'");
        c.decoding.strategy = *s;
        break;
    }
    case SweepFactor::prefix_len: c.prefix_len = static_cast<std::size_t>(parse_positive(value, factor)); break;
    case SweepFactor::algorithm: {
        auto a = parse_algorithm(value);
        if (!a) fail(ErrorCode::config_error, "unknown algorithm '" + value + "'");
        c.train.algorithm = *a;
        break;
    }
    case SweepFactor::rounds: c.train.rounds = static_cast<int>(parse_positive(value, factor)); break;
    case SweepFactor::model_order: {
        const auto v = parse_positive(value, factor);
        if (v < 2) fail(ErrorCode::config_error, "model order must be at least 2");
        c.train.order = static_cast<int>(v);
        break;
    }
    }
    c.validate();
    return c;
}

std::vector<AuditReport> run_sweep(const AuditConfig& base, const SweepSpec& sweep,
                                   const std::vector<ClientDataset>& clients, const AuditOptions& options)
{
    if (sweep.values.empty()) fail(ErrorCode::config_error, "sweep needs at least one value");
    std::vector<AuditConfig> configs;
    for (const auto& v : sweep.values) configs.push_back(with_factor(base, sweep.factor, v));

    std::vector<AuditReport> out;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        auto r = run_audit(configs[i], clients, options);
        r.label = std::string(to_string(sweep.factor)) + "=" + sweep.values[i];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace fedmem
