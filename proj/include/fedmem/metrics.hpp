#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedmem/corpus.hpp"
#include "fedmem/detector.hpp"
#include "fedmem/flsim.hpp"

namespace fedmem {

using PrefixSet = std::set<std::string>;
using Matrix = std::vector<std::vector<double>>;

/// Outcome of auditing source client j's prefixes against target client k.
struct PairResult {
    ClientId source = 0;
    ClientId target = 0;
    /// Prefixes that produced a usable generation.
    PrefixSet evaluated;
    /// Prefixes whose generation matched some retrieved suffix of the target.
    PrefixSet memorizing;
    std::map<Category, PrefixSet> per_category;

    /// memorizing within evaluated, per_category within memorizing, and the
    /// union of per_category equal to memorizing.
    bool consistent() const;
};

/// |memorizing| / |evaluated|.
double mr_pairwise(const PairResult& pair);

/// sum_j w_j * M[j][j].
double mr_intra(const Matrix& matrix, const std::vector<ClientWeight>& weights);

/// sum_j w_j * mean_{k != j} M[j][k].
double mr_inter(const Matrix& matrix, const std::vector<ClientWeight>& weights);

/// |union of memorizing| / |union of evaluated|; a prefix that leaks several
/// clients' suffixes counts once.
double mr_total(const std::vector<PairResult>& pairs);

/// L x L matrix of pairwise ratios. Pairs must cover every (j, k) once.
Matrix pairwise_matrix(const std::vector<PairResult>& pairs, std::size_t num_clients);

/// The pairs restricted to one category's prefix sets.
std::vector<PairResult> category_pairs(const std::vector<PairResult>& pairs, Category category);

enum class Regime { fl, cl };

std::string_view to_string(Regime regime) noexcept;
std::optional<Regime> parse_regime(std::string_view name);

struct Aggregates {
    Matrix matrix;
    double mr_intra = 0.0;
    double mr_inter = 0.0;
    double mr_total = 0.0;

    bool operator==(const Aggregates&) const = default;
};

/// Per-client bookkeeping of how many prefixes survived each stage.
struct ClientTally {
    ClientId client = 0;
    std::size_t sampled = 0;
    std::size_t evaluated = 0;
    std::size_t filtered = 0;
    std::size_t failed = 0;

    bool operator==(const ClientTally&) const = default;
};

struct MemReport {
    std::string label;
    Regime regime = Regime::fl;
    std::size_t num_clients = 0;
    std::vector<ClientWeight> weights;
    Aggregates overall;
    std::map<Category, Aggregates> per_category;
    std::vector<ClientTally> tallies;
};

/// All aggregate formulas applied to the any-category sets and to each
/// category's sets. MR_Inter is left at 0 for a single client.
Aggregates aggregate(const std::vector<PairResult>& pairs, std::size_t num_clients,
                     const std::vector<ClientWeight>& weights);

std::map<Category, Aggregates> category_breakdown(const std::vector<PairResult>& pairs, std::size_t num_clients,
                                                  const std::vector<ClientWeight>& weights);

MemReport build_report(const std::vector<PairResult>& pairs, std::size_t num_clients,
                       const std::vector<ClientWeight>& weights, Regime regime,
                       std::vector<ClientTally> tallies = {});

/// Elementwise mean of per-trial reports (matrices and aggregates); tallies
/// are summed.
MemReport mean_report(const std::vector<MemReport>& trials, std::string label = "mean");

/// Token-level LCS F1.
double rouge_l(std::string_view candidate, std::string_view reference);

/// Fraction of exact matches after whitespace trimming.
double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& references);

}  // namespace fedmem
