#include "fedmem/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fedmem/error.hpp"
#include "fedmem/utf8.hpp"

namespace fedmem {

bool PairResult::consistent() const
{
    if (!std::includes(evaluated.begin(), evaluated.end(), memorizing.begin(), memorizing.end())) {
        return false;
    }
    PrefixSet all;
    for (const auto& [c, set] : per_category) {
        if (!std::includes(memorizing.begin(), memorizing.end(), set.begin(), set.end())) {
            return false;
        }
        all.insert(set.begin(), set.end());
    }
    return all == memorizing;
}

double mr_pairwise(const PairResult& pair)
{
    if (pair.evaluated.empty()) {
        fail(ErrorCode::undefined_ratio, "no evaluated prefixes for pair " + std::to_string(pair.source) + "->" +
                                             std::to_string(pair.target));
    }
    return static_cast<double>(pair.memorizing.size()) / static_cast<double>(pair.evaluated.size());
}

namespace {

void check_square(const Matrix& matrix, const std::vector<ClientWeight>& weights)
{
    for (const auto& row : matrix) {
        if (row.size() != matrix.size()) {
            fail(ErrorCode::invalid_argument, "memorization matrix is not square");
        }
    }
    if (weights.size() != matrix.size()) {
        fail(ErrorCode::invalid_weights, std::to_string(weights.size()) + " weights for " +
                                             std::to_string(matrix.size()) + " clients");
    }
    validate_weights(weights);
}

}  // namespace

double mr_intra(const Matrix& matrix, const std::vector<ClientWeight>& weights)
{
    check_square(matrix, weights);
    double sum = 0.0;
    for (std::size_t j = 0; j < matrix.size(); ++j) {
        sum += weights[j].weight * matrix[j][j];
    }
    return sum;
}

double mr_inter(const Matrix& matrix, const std::vector<ClientWeight>& weights)
{
    check_square(matrix, weights);
    const std::size_t L = matrix.size();
    if (L < 2) {
        fail(ErrorCode::undefined_inter, "inter-client ratio needs at least 2 clients");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
        double row = 0.0;
        for (std::size_t k = 0; k < L; ++k) {
            if (k != j) row += matrix[j][k];
        }
        sum += weights[j].weight * row / static_cast<double>(L - 1);
    }
    return sum;
}

double mr_total(const std::vector<PairResult>& pairs)
{
    std::map<ClientId, const PrefixSet*> evaluated_by_source;
    PrefixSet evaluated, memorizing;
    for (const auto& p : pairs) {
        auto [it, inserted] = evaluated_by_source.emplace(p.source, &p.evaluated);
        if (!inserted && *it->second != p.evaluated) {
            fail(ErrorCode::inconsistent_input, "evaluated prefixes of client " + std::to_string(p.source) +
                                                    " differ between targets");
        }
        evaluated.insert(p.evaluated.begin(), p.evaluated.end());
        memorizing.insert(p.memorizing.begin(), p.memorizing.end());
    }
    if (evaluated.empty()) {
        fail(ErrorCode::undefined_ratio, "no evaluated prefixes");
    }
    return static_cast<double>(memorizing.size()) / static_cast<double>(evaluated.size());
}

Matrix pairwise_matrix(const std::vector<PairResult>& pairs, std::size_t num_clients)
{
    Matrix m(num_clients, std::vector<double>(num_clients, 0.0));
    std::vector<std::vector<bool>> seen(num_clients, std::vector<bool>(num_clients, false));
    for (const auto& p : pairs) {
        if (p.source >= num_clients || p.target >= num_clients) {
            fail(ErrorCode::inconsistent_input, "pair outside the client range");
        }
        if (seen[p.source][p.target]) {
            fail(ErrorCode::inconsistent_input, "duplicate pair " + std::to_string(p.source) + "->" +
                                                    std::to_string(p.target));
        }
        seen[p.source][p.target] = true;
        m[p.source][p.target] = mr_pairwise(p);
    }
    for (std::size_t j = 0; j < num_clients; ++j) {
        for (std::size_t k = 0; k < num_clients; ++k) {
            if (!seen[j][k]) {
                fail(ErrorCode::inconsistent_input, "missing pair " + std::to_string(j) + "->" + std::to_string(k));
            }
        }
    }
    return m;
}

std::vector<PairResult> category_pairs(const std::vector<PairResult>& pairs, Category category)
{
    std::vector<PairResult> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        PairResult q;
        q.source = p.source;
        q.target = p.target;
        q.evaluated = p.evaluated;
        if (auto it = p.per_category.find(category); it != p.per_category.end()) {
            q.memorizing = it->second;
            q.per_category[category] = it->second;
        }
        out.push_back(std::move(q));
    }
    return out;
}

std::string_view to_string(Regime regime) noexcept
{
    return regime == Regime::fl ? "FL" : "CL";
}

std::optional<Regime> parse_regime(std::string_view name)
{
    if (name == "fl" || name == "FL") return Regime::fl;
    if (name == "cl" || name == "CL") return Regime::cl;
    return std::nullopt;
}

Aggregates aggregate(const std::vector<PairResult>& pairs, std::size_t num_clients,
                     const std::vector<ClientWeight>& weights)
{
    Aggregates a;
    a.matrix = pairwise_matrix(pairs, num_clients);
    a.mr_intra = mr_intra(a.matrix, weights);
    a.mr_inter = num_clients >= 2 ? mr_inter(a.matrix, weights) : 0.0;
    a.mr_total = mr_total(pairs);
    return a;
}

std::map<Category, Aggregates> category_breakdown(const std::vector<PairResult>& pairs, std::size_t num_clients,
                                                  const std::vector<ClientWeight>& weights)
{
    std::map<Category, Aggregates> out;
    for (auto c : all_categories) {
        out[c] = aggregate(category_pairs(pairs, c), num_clients, weights);
    }
    return out;
}

MemReport build_report(const std::vector<PairResult>& pairs, std::size_t num_clients,
                       const std::vector<ClientWeight>& weights, Regime regime, std::vector<ClientTally> tallies)
{
    MemReport r;
    r.regime = regime;
    r.num_clients = num_clients;
    r.weights = weights;
    r.overall = aggregate(pairs, num_clients, weights);
    r.per_category = category_breakdown(pairs, num_clients, weights);
    r.tallies = std::move(tallies);
    return r;
}

namespace {

void add_into(Aggregates& acc, const Aggregates& x)
{
    if (acc.matrix.empty()) {
        acc.matrix.assign(x.matrix.size(), std::vector<double>(x.matrix.size(), 0.0));
    }
    for (std::size_t j = 0; j < x.matrix.size(); ++j) {
        for (std::size_t k = 0; k < x.matrix.size(); ++k) {
            acc.matrix[j][k] += x.matrix[j][k];
        }
    }
    acc.mr_intra += x.mr_intra;
    acc.mr_inter += x.mr_inter;
    acc.mr_total += x.mr_total;
}

void scale(Aggregates& a, double f)
{
    for (auto& row : a.matrix) {
        for (auto& v : row) v *= f;
    }
    a.mr_intra *= f;
    a.mr_inter *= f;
    a.mr_total *= f;
}

}  // namespace

MemReport mean_report(const std::vector<MemReport>& trials, std::string label)
{
    if (trials.empty()) {
        fail(ErrorCode::invalid_argument, "no trials to average");
    }
    MemReport out;
    out.label = std::move(label);
    out.regime = trials.front().regime;
    out.num_clients = trials.front().num_clients;
    out.weights = trials.front().weights;
    for (const auto& t : trials) {
        if (t.num_clients != out.num_clients) {
            fail(ErrorCode::inconsistent_input, "trials disagree on the number of clients");
        }
        add_into(out.overall, t.overall);
        for (const auto& [c, a] : t.per_category) {
            add_into(out.per_category[c], a);
        }
        if (out.tallies.empty()) {
            out.tallies = t.tallies;
        } else {
            for (std::size_t i = 0; i < std::min(out.tallies.size(), t.tallies.size()); ++i) {
                out.tallies[i].sampled += t.tallies[i].sampled;
                out.tallies[i].evaluated += t.tallies[i].evaluated;
                out.tallies[i].filtered += t.tallies[i].filtered;
                out.tallies[i].failed += t.tallies[i].failed;
            }
        }
    }
    const double f = 1.0 / static_cast<double>(trials.size());
    scale(out.overall, f);
    for (auto& [c, a] : out.per_category) {
        scale(a, f);
    }
    return out;
}

double rouge_l(std::string_view candidate, std::string_view reference)
{
    const auto c = tokenize(candidate);
    const auto r = tokenize(reference);
    if (c.empty() || r.empty()) {
        return 0.0;
    }
    std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
    for (std::size_t i = 1; i <= c.size(); ++i) {
        for (std::size_t j = 1; j <= r.size(); ++j) {
            cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[r.size()]);
    if (lcs == 0.0) {
        return 0.0;
    }
    const double precision = lcs / static_cast<double>(c.size());
    const double recall = lcs / static_cast<double>(r.size());
    return 2.0 * precision * recall / (precision + recall);
}

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& references)
{
    if (predictions.size() != references.size()) {
        fail(ErrorCode::invalid_argument, "predictions and references differ in length");
    }
    if (predictions.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        hits += utf8::trim(predictions[i]) == utf8::trim(references[i]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace fedmem
