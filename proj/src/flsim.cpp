#include "fedmem/flsim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "fedmem/error.hpp"
#include "fedmem/parallel.hpp"
#include "fedmem/rng.hpp"

namespace fedmem {

namespace {

void recompute_mass(NGramModel::Table& table)
{
    for (auto& [ctx, row] : table) {
        row.mass = 0.0;
        for (const auto& [tok, c] : row.next) {
            row.mass += c;
        }
    }
}

}  // namespace

NGramModel::NGramModel(int order) : m_order(order), m_vocab(canonical_vocab({})) {}

NGramModel::NGramModel(int order, std::vector<std::string> vocab, Table table, double samples)
    : m_order(order), m_vocab(std::move(vocab)), m_table(std::move(table)), m_samples(samples)
{
    for (const auto& [ctx, row] : m_table) {
        if (static_cast<int>(ctx.size()) == m_order - 1) {
            m_total += row.mass;
        }
    }
}

std::optional<TokenId> NGramModel::id_of(std::string_view token) const
{
    if (token == begin_marker) return begin_id;
    if (token == end_marker) return end_id;
    if (m_vocab.size() <= 2) return std::nullopt;
    auto it = std::lower_bound(m_vocab.begin() + 2, m_vocab.end(), token);
    if (it == m_vocab.end() || *it != token) {
        return std::nullopt;
    }
    return static_cast<TokenId>(it - m_vocab.begin());
}

double NGramModel::count(const std::vector<std::string>& context, std::string_view next) const
{
    Context ctx;
    for (const auto& t : context) {
        auto id = id_of(t);
        if (!id) return 0.0;
        ctx.push_back(*id);
    }
    auto nid = id_of(next);
    if (!nid) return 0.0;
    auto row = m_table.find(ctx);
    if (row == m_table.end()) return 0.0;
    auto cell = row->second.next.find(*nid);
    return cell == row->second.next.end() ? 0.0 : cell->second;
}

std::vector<std::string> canonical_vocab(std::vector<std::string> tokens)
{
    std::erase_if(tokens, [](const std::string& t) { return t == begin_marker || t == end_marker; });
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    tokens.insert(tokens.begin(), {std::string(begin_marker), std::string(end_marker)});
    return tokens;
}

// ---------------------------------------------------------------------------

NGramModel fit_counts(const std::vector<std::vector<std::string>>& documents, int order)
{
    if (order < 2) {
        fail(ErrorCode::invalid_argument, "n-gram order must be at least 2");
    }
    if (documents.empty()) {
        fail(ErrorCode::empty_dataset, "cannot fit a model on zero samples");
    }
    std::vector<std::string> all;
    for (const auto& d : documents) {
        all.insert(all.end(), d.begin(), d.end());
    }
    std::vector<std::string> vocab = canonical_vocab(std::move(all));
    auto lookup = [&](const std::string& t) {
        return static_cast<TokenId>(std::lower_bound(vocab.begin() + 2, vocab.end(), t) - vocab.begin());
    };

    const double w = 1.0 / static_cast<double>(documents.size());
    const std::size_t pad = static_cast<std::size_t>(order - 1);
    NGramModel::Table table;
    std::vector<TokenId> seq;
    for (const auto& doc : documents) {
        seq.assign(pad, begin_id);
        for (const auto& t : doc) {
            seq.push_back(lookup(t));
        }
        seq.push_back(end_id);
        for (std::size_t pos = pad; pos < seq.size(); ++pos) {
            for (std::size_t k = 1; k <= pad; ++k) {
                Context ctx(seq.begin() + static_cast<std::ptrdiff_t>(pos - k), seq.begin() + static_cast<std::ptrdiff_t>(pos));
                auto& row = table[std::move(ctx)];
                row.next[seq[pos]] += w;
            }
        }
    }
    recompute_mass(table);
    return NGramModel(order, std::move(vocab), std::move(table), static_cast<double>(documents.size()));
}

NGramModel fit_counts(const ClientDataset& dataset, int order)
{
    if (dataset.empty()) {
        fail(ErrorCode::empty_dataset, "client " + std::to_string(dataset.client) + " has no samples");
    }
    std::vector<std::vector<std::string>> docs;
    docs.reserve(dataset.size());
    for (const auto& s : dataset.samples) {
        docs.push_back(tokenize(s.text));
    }
    return fit_counts(docs, order);
}

// ---------------------------------------------------------------------------

std::vector<double> next_distribution_ids(const NGramModel& model, std::span<const TokenId> history, double lambda)
{
    const std::size_t V = model.vocab_size();
    std::vector<double> dist(V, 0.0);
    if (V == 0) {
        return dist;
    }
    const double scale = model.samples() > 0.0 ? model.samples() : 1.0;
    const std::size_t max_ctx = static_cast<std::size_t>(std::max(model.order() - 1, 0));
    // history shorter than the context is left-padded with begin markers
    Context padded(max_ctx > history.size() ? max_ctx - history.size() : 0, begin_id);
    const std::size_t take = std::min(max_ctx, history.size());
    padded.insert(padded.end(), history.end() - static_cast<std::ptrdiff_t>(take), history.end());

    for (std::size_t k = max_ctx; k >= 1; --k) {
        Context ctx(padded.end() - static_cast<std::ptrdiff_t>(k), padded.end());
        auto it = model.table().find(ctx);
        if (it == model.table().end() || !(it->second.mass > 0.0)) {
            continue;
        }
        const double denom = it->second.mass * scale + lambda * static_cast<double>(V);
        std::fill(dist.begin(), dist.end(), lambda / denom);
        for (const auto& [tok, c] : it->second.next) {
            dist[tok] = (c * scale + lambda) / denom;
        }
        return dist;
    }
    std::fill(dist.begin(), dist.end(), 1.0 / static_cast<double>(V));
    return dist;
}

std::vector<double> next_distribution(const NGramModel& model, const std::vector<std::string>& context, double lambda)
{
    // an out-of-vocabulary token can never match; it truncates the usable history
    std::vector<TokenId> history;
    history.reserve(context.size());
    for (const auto& t : context) {
        auto id = model.id_of(t);
        if (!id) {
            history.clear();
            history.push_back(std::numeric_limits<TokenId>::max());
            continue;
        }
        history.push_back(*id);
    }
    return next_distribution_ids(model, history, lambda);
}

// ---------------------------------------------------------------------------

std::vector<ClientWeight> data_size_weights(const std::vector<ClientDataset>& clients)
{
    double total = 0.0;
    for (const auto& c : clients) {
        total += static_cast<double>(c.size());
    }
    if (!(total > 0.0)) {
        fail(ErrorCode::empty_dataset, "all clients are empty");
    }
    std::vector<ClientWeight> out;
    out.reserve(clients.size());
    for (const auto& c : clients) {
        out.push_back({c.client, static_cast<double>(c.size()) / total});
    }
    return out;
}

void validate_weights(const std::vector<ClientWeight>& weights)
{
    if (weights.empty()) {
        fail(ErrorCode::invalid_weights, "no client weights");
    }
    double sum = 0.0;
    for (const auto& w : weights) {
        if (!(w.weight >= 0.0) || w.weight > 1.0) {
            fail(ErrorCode::invalid_weights, "weight of client " + std::to_string(w.client) + " outside [0, 1]");
        }
        sum += w.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        fail(ErrorCode::invalid_weights, "weights sum to " + std::to_string(sum));
    }
}

namespace {

std::vector<std::string> union_vocab(const std::vector<const NGramModel*>& models)
{
    std::vector<std::string> all;
    for (const auto* m : models) {
        all.insert(all.end(), m->vocab().begin(), m->vocab().end());
    }
    return canonical_vocab(std::move(all));
}

/// Ids of `from`'s vocabulary inside `merged`. Both are canonical, so the map
/// is monotone and preserves context ordering.
std::vector<TokenId> remap(const NGramModel& from, const std::vector<std::string>& merged)
{
    std::vector<TokenId> ids(from.vocab_size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < from.vocab_size(); ++i) {
        if (i < 2) {
            ids[i] = static_cast<TokenId>(i);
            continue;
        }
        j = std::max<std::size_t>(j, 2);
        while (merged[j] != from.vocab()[i]) {
            ++j;
        }
        ids[i] = static_cast<TokenId>(j);
    }
    return ids;
}

/// Accumulates scale * model into `acc` under the merged vocabulary.
void accumulate(NGramModel::Table& acc, const NGramModel& model, const std::vector<TokenId>& ids, double scale)
{
    for (const auto& [ctx, row] : model.table()) {
        Context mapped(ctx.size());
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            mapped[i] = ids[ctx[i]];
        }
        auto& dst = acc[mapped];
        for (const auto& [tok, c] : row.next) {
            dst.next[ids[tok]] += scale * c;
        }
    }
}

}  // namespace

NGramModel fedavg_aggregate(const std::vector<NGramModel>& models, const std::vector<ClientWeight>& weights)
{
    if (models.empty()) {
        fail(ErrorCode::invalid_argument, "no models to aggregate");
    }
    if (models.size() != weights.size()) {
        fail(ErrorCode::invalid_weights, std::to_string(weights.size()) + " weights for " +
                                             std::to_string(models.size()) + " models");
    }
    validate_weights(weights);
    std::vector<const NGramModel*> ptrs;
    for (const auto& m : models) {
        if (m.order() != models.front().order()) {
            fail(ErrorCode::incompatible_models, "orders " + std::to_string(models.front().order()) + " and " +
                                                     std::to_string(m.order()));
        }
        ptrs.push_back(&m);
    }
    auto vocab = union_vocab(ptrs);
    NGramModel::Table table;
    double samples = 0.0;
    for (std::size_t j = 0; j < models.size(); ++j) {
        accumulate(table, models[j], remap(models[j], vocab), weights[j].weight);
        samples += models[j].samples();
    }
    recompute_mass(table);
    return NGramModel(models.front().order(), std::move(vocab), std::move(table), samples);
}

NGramModel fedprox_localize(const NGramModel& local_mle, const NGramModel& global_model, double mu)
{
    if (!(mu >= 0.0)) {
        fail(ErrorCode::invalid_argument, "proximal strength mu must be non-negative");
    }
    if (local_mle.order() != global_model.order()) {
        fail(ErrorCode::incompatible_models, "local and global models differ in order");
    }
    if (mu == 0.0) {
        return local_mle;
    }
    auto vocab = union_vocab({&local_mle, &global_model});
    NGramModel::Table table;
    accumulate(table, local_mle, remap(local_mle, vocab), 1.0 / (1.0 + mu));
    accumulate(table, global_model, remap(global_model, vocab), mu / (1.0 + mu));
    recompute_mass(table);
    return NGramModel(local_mle.order(), std::move(vocab), std::move(table), local_mle.samples());
}

double max_abs_diff(const NGramModel& a, const NGramModel& b)
{
    if (a.order() != b.order()) {
        return std::numeric_limits<double>::infinity();
    }
    auto vocab = union_vocab({&a, &b});
    NGramModel::Table ta, tb;
    accumulate(ta, a, remap(a, vocab), 1.0);
    accumulate(tb, b, remap(b, vocab), -1.0);
    // ta - tb via a merged walk
    for (const auto& [ctx, row] : tb) {
        auto& dst = ta[ctx];
        for (const auto& [tok, c] : row.next) {
            dst.next[tok] += c;
        }
    }
    double worst = 0.0;
    for (const auto& [ctx, row] : ta) {
        for (const auto& [tok, c] : row.next) {
            worst = std::max(worst, std::abs(c));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------

std::optional<Algorithm> parse_algorithm(std::string_view name)
{
    if (name == "fedavg") return Algorithm::fedavg;
    if (name == "fedprox") return Algorithm::fedprox;
    if (name == "centralized") return Algorithm::centralized;
    return std::nullopt;
}

std::string_view to_string(Algorithm algorithm) noexcept
{
    switch (algorithm) {
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::fedprox: return "fedprox";
    case Algorithm::centralized: return "centralized";
    }
    return "";
}

void TrainConfig::validate() const
{
    if (rounds < 1) fail(ErrorCode::config_error, "rounds must be at least 1");
    if (order < 2) fail(ErrorCode::config_error, "n-gram order must be at least 2");
    if (!(smoothing_lambda > 0.0)) fail(ErrorCode::config_error, "smoothing_lambda must be positive");
    if (!(mu >= 0.0)) fail(ErrorCode::config_error, "mu must be non-negative");
}

NGramModel train_federated(const std::vector<ClientDataset>& clients, const TrainConfig& cfg)
{
    cfg.validate();
    if (cfg.algorithm == Algorithm::centralized) {
        return train_centralized(clients, cfg);
    }
    if (clients.size() < 2) {
        fail(ErrorCode::invalid_argument, "federated training needs at least 2 clients");
    }
    const auto weights = cfg.weights.empty() ? data_size_weights(clients) : cfg.weights;

    // local data is static, so each client's MLE is the same in every round
    std::vector<NGramModel> local(clients.size());
    parallel_for(clients.size(), cfg.workers, [&](std::size_t j) { local[j] = fit_counts(clients[j], cfg.order); });

    const double mu = cfg.algorithm == Algorithm::fedprox ? cfg.mu : 0.0;
    NGramModel global(cfg.order);
    for (int round = 0; round < cfg.rounds; ++round) {
        if (mu == 0.0) {
            global = fedavg_aggregate(local, weights);
            continue;
        }
        std::vector<NGramModel> updated(clients.size());
        parallel_for(clients.size(), cfg.workers,
                     [&](std::size_t j) { updated[j] = fedprox_localize(local[j], global, mu); });
        global = fedavg_aggregate(updated, weights);
    }
    return global;
}

NGramModel train_centralized(const std::vector<ClientDataset>& clients, const TrainConfig& cfg)
{
    cfg.validate();
    ClientDataset pooled;
    for (const auto& c : clients) {
        pooled.samples.insert(pooled.samples.end(), c.samples.begin(), c.samples.end());
    }
    if (pooled.empty()) {
        fail(ErrorCode::empty_dataset, "all clients are empty");
    }
    return fit_counts(pooled, cfg.order);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view model_magic = "fedmem-ngram";
constexpr int model_version = 1;

std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

[[noreturn]] void bad_model(const std::string& what)
{
    fail(ErrorCode::data_error, "malformed model dump: " + what);
}

}  // namespace

void save_model(std::ostream& out, const NGramModel& model)
{
    out << model_magic << ' ' << model_version << '\n';
    out << "order " << model.order() << '\n';
    out << "samples " << format_double(model.samples()) << '\n';
    out << "vocab " << model.vocab_size() << '\n';
    for (const auto& t : model.vocab()) {
        out << t << '\n';
    }
    out << "rows " << model.table().size() << '\n';
    for (const auto& [ctx, row] : model.table()) {
        out << ctx.size();
        for (auto id : ctx) {
            out << ' ' << id;
        }
        out << ' ' << row.next.size();
        for (const auto& [tok, c] : row.next) {
            out << ' ' << tok << ' ' << format_double(c);
        }
        out << '\n';
    }
}

NGramModel load_model(std::istream& in)
{
    std::string magic, key;
    int version = 0;
    if (!(in >> magic >> version) || magic != model_magic) bad_model("missing header");
    if (version != model_version) bad_model("unsupported version " + std::to_string(version));
    int order = 0;
    std::size_t nvocab = 0, nrows = 0;
    if (!(in >> key >> order) || key != "order" || order < 2) bad_model("order");
    std::string samples_text;
    if (!(in >> key >> samples_text) || key != "samples") bad_model("samples");
    const double samples = std::strtod(samples_text.c_str(), nullptr);
    if (!(samples >= 0.0)) bad_model("samples");
    if (!(in >> key >> nvocab) || key != "vocab" || nvocab < 2) bad_model("vocab");
    std::vector<std::string> vocab(nvocab);
    for (auto& t : vocab) {
        if (!(in >> t)) bad_model("vocab entry");
    }
    if (canonical_vocab(vocab) != vocab) bad_model("vocabulary not canonical");
    if (!(in >> key >> nrows) || key != "rows") bad_model("rows");
    NGramModel::Table table;
    for (std::size_t r = 0; r < nrows; ++r) {
        std::size_t k = 0, n = 0;
        if (!(in >> k) || k == 0 || k >= static_cast<std::size_t>(order)) bad_model("context length");
        Context ctx(k);
        for (auto& id : ctx) {
            if (!(in >> id) || id >= nvocab) bad_model("context id");
        }
        if (!(in >> n)) bad_model("row size");
        CountRow row;
        for (std::size_t i = 0; i < n; ++i) {
            TokenId tok = 0;
            std::string value;
            if (!(in >> tok >> value) || tok >= nvocab) bad_model("cell");
            double c = std::strtod(value.c_str(), nullptr);
            if (!(c >= 0.0)) bad_model("negative count");
            row.next[tok] = c;
        }
        table[std::move(ctx)] = std::move(row);
    }
    recompute_mass(table);
    return NGramModel(order, std::move(vocab), std::move(table), samples);
}

void save_model_file(const std::string& path, const NGramModel& model)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::data_error, "cannot write " + path);
    save_model(out, model);
}

NGramModel load_model_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::data_error, "cannot open " + path);
    return load_model(in);
}

std::string model_fingerprint(const NGramModel& model)
{
    std::ostringstream os;
    save_model(os, model);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
    return buf;
}

}  // namespace fedmem
