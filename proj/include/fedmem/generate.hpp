#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedmem/corpus.hpp"
#include "fedmem/flsim.hpp"

namespace fedmem {

enum class Strategy { greedy, temperature, top_k, top_p };

std::optional<Strategy> parse_strategy(std::string_view name);
std::string_view to_string(Strategy strategy) noexcept;

/// Exactly one transform is applied per strategy; the other knobs are kept
/// in the config but ignored.
struct DecodingConfig {
    Strategy strategy = Strategy::top_k;
    double temperature = 1.0;
    std::size_t k = 40;
    double p = 0.8;
    std::size_t max_new_tokens = 128;
    std::uint64_t seed = 0;

    void validate() const;

    /// Canonical one-line description; part of every generation cache key.
    std::string fingerprint() const;
};

/// q_i proportional to dist_i^(1/T), computed in log space. T = 1 returns the
/// input unchanged.
std::vector<double> apply_temperature(std::span<const double> dist, double temperature);

/// Keeps the k most probable tokens (ties to the lower index) and renormalizes.
std::vector<double> truncate_top_k(std::span<const double> dist, std::size_t k);

/// Keeps the shortest descending-probability prefix whose mass reaches p
/// (ties to the lower index) and renormalizes.
std::vector<double> truncate_top_p(std::span<const double> dist, double p);

/// The strategy's transform. Greedy maps to top-1.
std::vector<double> decode_transform(std::span<const double> dist, const DecodingConfig& cfg);

/// Inverse-CDF draw for u in [0, 1). Never returns a zero-probability index.
std::size_t sample_index(std::span<const double> dist, double u);

/// Lowest index of the maximum.
std::size_t argmax(std::span<const double> dist);

/// True iff some 3-token window occurs at least `min_repeats` times.
bool is_degenerate(std::string_view text, std::size_t min_repeats = 10);

// ---------------------------------------------------------------------------

struct GenerationRequest {
    std::string prefix_id;
    ClientId source_client = 0;
    std::vector<std::string> prefix_tokens;
    std::string prefix_text;
};

struct Generation {
    std::string prefix_id;
    ClientId source_client = 0;
    std::string text;
    std::string backend_tag;
    std::string decoding;
    bool filtered = false;
    bool failed = false;

    bool operator==(const Generation&) const = default;
};

/// Source of continuations. Implementations must be safe to call from
/// several threads at once.
class GenerationBackend {
  public:
    virtual ~GenerationBackend() = default;

    virtual std::string tag() const = 0;

    /// Continuation text only, without the prompt.
    virtual std::string complete(const GenerationRequest& request, const DecodingConfig& cfg) const = 0;
};

/// Autoregressive sampling from an n-gram model. Step t of prefix `id` draws
/// u = counter_uniform(seed, fnv1a(id), t).
class NGramBackend final : public GenerationBackend {
  public:
    explicit NGramBackend(const NGramModel& model, double lambda = 1e-6);

    std::string tag() const override { return m_tag; }
    std::string complete(const GenerationRequest& request, const DecodingConfig& cfg) const override;

  private:
    const NGramModel& m_model;
    double m_lambda;
    std::string m_tag;
};

/// Plain-JSON completion endpoint. POSTs
///   {"prompt", "max_tokens", "strategy", "temperature", "top_k", "top_p", "seed"}
/// and expects a 2xx response {"text": "..."}. Failed attempts are retried
/// with exponential backoff.
class HttpBackend final : public GenerationBackend {
  public:
    struct Options {
        std::size_t retries = 3;
        std::chrono::milliseconds backoff{200};
        std::chrono::seconds timeout{60};
    };

    explicit HttpBackend(std::string url);
    HttpBackend(std::string url, Options options);

    std::string tag() const override { return "http:" + m_url; }
    std::string complete(const GenerationRequest& request, const DecodingConfig& cfg) const override;

    /// Request body for one prefix; exposed for tests and documentation.
    static std::string request_body(const GenerationRequest& request, const DecodingConfig& cfg);

  private:
    std::string m_url;
    std::string m_host;
    std::string m_path;
    Options m_options;
};

/// One call to the backend plus the degeneracy flag. Backend exceptions are
/// rethrown as backend_error tagged with the backend.
Generation generate(const GenerationBackend& backend, const GenerationRequest& request, const DecodingConfig& cfg);

/// Line-delimited cache records.
void write_generations(std::ostream& out, const std::vector<Generation>& generations);
std::vector<Generation> read_generations(std::istream& in);

}  // namespace fedmem
