#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedmem/corpus.hpp"

namespace fedmem {

using TokenId = std::uint32_t;
using Context = std::vector<TokenId>;

inline constexpr std::string_view begin_marker = "<s>";
inline constexpr std::string_view end_marker = "</s>";
inline constexpr TokenId begin_id = 0;
inline constexpr TokenId end_id = 1;

/// Weighted next-token counts for one context.
struct CountRow {
    std::map<TokenId, double> next;
    double mass = 0.0;

    bool operator==(const CountRow&) const = default;
};

/// Count-based backoff n-gram model.
///
/// Counts are stored for every context length 1..order-1. Each sample of the
/// training set contributes weight 1/|D|, so a model is the per-sample mean
/// count table and FedAvg over data-size weights reproduces the pooled model
/// exactly. `samples()` records how many samples the table stands for; the
/// smoothing floor is applied on the raw-count scale count * samples so that
/// lambda keeps the same meaning regardless of corpus size.
///
/// The vocabulary is canonical: the two markers first, then all other tokens
/// in byte order. Token ids therefore agree between any two models over the
/// same vocabulary.
class NGramModel {
  public:
    using Table = std::map<Context, CountRow>;

    NGramModel() = default;
    explicit NGramModel(int order);
    NGramModel(int order, std::vector<std::string> vocab, Table table, double samples);

    int order() const noexcept { return m_order; }
    const std::vector<std::string>& vocab() const noexcept { return m_vocab; }
    std::size_t vocab_size() const noexcept { return m_vocab.size(); }
    const Table& table() const noexcept { return m_table; }
    double total_tokens() const noexcept { return m_total; }
    double samples() const noexcept { return m_samples; }

    std::optional<TokenId> id_of(std::string_view token) const;
    const std::string& token(TokenId id) const { return m_vocab.at(id); }

    /// Weighted count of `next` after `context` (token strings); 0 if absent.
    double count(const std::vector<std::string>& context, std::string_view next) const;

    bool operator==(const NGramModel&) const = default;

  private:
    int m_order = 0;
    std::vector<std::string> m_vocab;
    Table m_table;
    double m_total = 0.0;
    double m_samples = 0.0;
};

/// Sorted token set with the two markers in front.
std::vector<std::string> canonical_vocab(std::vector<std::string> tokens);

NGramModel fit_counts(const ClientDataset& dataset, int order);
NGramModel fit_counts(const std::vector<std::vector<std::string>>& documents, int order);

/// Stupid backoff over context lengths order-1..1 with an add-lambda floor:
/// P(t) = (count(t) + lambda) / (mass + lambda * |V|) for the longest context
/// with nonzero mass, uniform when no context matches. Counts and mass are
/// taken on the raw scale (times `samples()`).
std::vector<double> next_distribution(const NGramModel& model, const std::vector<std::string>& context,
                                      double lambda = 1e-6);
std::vector<double> next_distribution_ids(const NGramModel& model, std::span<const TokenId> history,
                                          double lambda = 1e-6);

struct ClientWeight {
    ClientId client = 0;
    double weight = 0.0;
};

/// w_j = |D_j| / sum_i |D_i|.
std::vector<ClientWeight> data_size_weights(const std::vector<ClientDataset>& clients);

void validate_weights(const std::vector<ClientWeight>& weights);

/// Cellwise sum_j w_j * count_j over the union vocabulary. The result stands
/// for the sum of the inputs' sample counts.
NGramModel fedavg_aggregate(const std::vector<NGramModel>& models, const std::vector<ClientWeight>& weights);

/// Closed-form minimizer of |theta - local|^2 + mu |theta - global|^2,
/// i.e. (local + mu * global) / (1 + mu) per cell. mu = 0 returns `local`.
/// Keeps the local sample count.
NGramModel fedprox_localize(const NGramModel& local_mle, const NGramModel& global_model, double mu);

/// Largest absolute cellwise count difference, matching cells by token
/// strings. Sample counts are not compared.
/// Infinity when orders differ.
double max_abs_diff(const NGramModel& a, const NGramModel& b);

enum class Algorithm { fedavg, fedprox, centralized };

std::optional<Algorithm> parse_algorithm(std::string_view name);
std::string_view to_string(Algorithm algorithm) noexcept;

struct TrainConfig {
    Algorithm algorithm = Algorithm::fedavg;
    int rounds = 3;
    double mu = 0.01;
    int order = 4;
    double smoothing_lambda = 1e-6;
    /// Overrides data-size weights when non-empty.
    std::vector<ClientWeight> weights;
    std::size_t workers = 1;

    void validate() const;
};

NGramModel train_federated(const std::vector<ClientDataset>& clients, const TrainConfig& cfg);
NGramModel train_centralized(const std::vector<ClientDataset>& clients, const TrainConfig& cfg);

/// Versioned text dump; byte-stable for equal models.
void save_model(std::ostream& out, const NGramModel& model);
NGramModel load_model(std::istream& in);
void save_model_file(const std::string& path, const NGramModel& model);
NGramModel load_model_file(const std::string& path);

/// FNV-1a of the dump; identifies a model in generation caches.
std::string model_fingerprint(const NGramModel& model);

}  // namespace fedmem
