#include "fedmem/generate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "fedmem/error.hpp"
#include "fedmem/rng.hpp"

namespace fedmem {

std::optional<Strategy> parse_strategy(std::string_view name)
{
    if (name == "greedy") return Strategy::greedy;
    if (name == "temperature") return Strategy::temperature;
    if (name == "top_k") return Strategy::top_k;
    if (name == "top_p") return Strategy::top_p;
    return std::nullopt;
}

std::string_view to_string(Strategy strategy) noexcept
{
    switch (strategy) {
    case Strategy::greedy: return "greedy";
    case Strategy::temperature: return "temperature";
    case Strategy::top_k: return "top_k";
    case Strategy::top_p: return "top_p";
    }
    return "";
}

void DecodingConfig::validate() const
{
    if (max_new_tokens < 1) fail(ErrorCode::config_error, "max_new_tokens must be at least 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        fail(ErrorCode::config_error, "temperature must be positive");
    }
    if (k < 1) fail(ErrorCode::config_error, "top_k needs k >= 1");
    if (!(p > 0.0 && p <= 1.0)) fail(ErrorCode::config_error, "top_p needs 0 < p <= 1");
}

std::string DecodingConfig::fingerprint() const
{
    char buf[160];
    switch (strategy) {
    case Strategy::greedy:
        std::snprintf(buf, sizeof buf, "greedy;max=%zu;seed=%llu", max_new_tokens,
                      static_cast<unsigned long long>(seed));
        break;
    case Strategy::temperature:
        std::snprintf(buf, sizeof buf, "temperature;t=%.17g;max=%zu;seed=%llu", temperature, max_new_tokens,
                      static_cast<unsigned long long>(seed));
        break;
    case Strategy::top_k:
        std::snprintf(buf, sizeof buf, "top_k;k=%zu;max=%zu;seed=%llu", k, max_new_tokens,
                      static_cast<unsigned long long>(seed));
        break;
    case Strategy::top_p:
        std::snprintf(buf, sizeof buf, "top_p;p=%.17g;max=%zu;seed=%llu", p, max_new_tokens,
                      static_cast<unsigned long long>(seed));
        break;
    }
    return buf;
}

// ---------------------------------------------------------------------------

namespace {

void renormalize(std::vector<double>& v)
{
    const double sum = std::accumulate(v.begin(), v.end(), 0.0);
    if (sum > 0.0) {
        for (auto& x : v) {
            x /= sum;
        }
    }
}

/// Indices of the `m` most probable entries, descending, ties by lower index.
std::vector<std::size_t> top_indices(std::span<const double> dist, std::size_t m)
{
    std::vector<std::size_t> idx(dist.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    m = std::min(m, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] > dist[b] || (dist[a] == dist[b] && a < b); });
    idx.resize(m);
    return idx;
}

std::vector<double> keep_only(std::span<const double> dist, const std::vector<std::size_t>& keep)
{
    std::vector<double> out(dist.size(), 0.0);
    for (auto i : keep) {
        out[i] = dist[i];
    }
    renormalize(out);
    return out;
}

}  // namespace

std::vector<double> apply_temperature(std::span<const double> dist, double temperature)
{
    if (!(temperature > 0.0)) {
        fail(ErrorCode::invalid_argument, "temperature must be positive");
    }
    std::vector<double> out(dist.begin(), dist.end());
    if (temperature == 1.0 || out.empty()) {
        return out;
    }
    const double top = *std::max_element(out.begin(), out.end());
    if (!(top > 0.0)) {
        return out;
    }
    const double log_top = std::log(top);
    for (auto& x : out) {
        x = x > 0.0 ? std::exp((std::log(x) - log_top) / temperature) : 0.0;
    }
    renormalize(out);
    return out;
}

std::vector<double> truncate_top_k(std::span<const double> dist, std::size_t k)
{
    if (k < 1) {
        fail(ErrorCode::invalid_argument, "k must be at least 1");
    }
    if (k >= dist.size()) {
        return {dist.begin(), dist.end()};
    }
    return keep_only(dist, top_indices(dist, k));
}

std::vector<double> truncate_top_p(std::span<const double> dist, double p)
{
    if (!(p > 0.0 && p <= 1.0)) {
        fail(ErrorCode::invalid_argument, "p must lie in (0, 1]");
    }
    if (p == 1.0) {
        return {dist.begin(), dist.end()};
    }
    // the nucleus is usually tiny; widen the sorted window only when needed
    constexpr double slack = 1e-12;
    for (std::size_t window = 64;; window *= 2) {
        auto idx = top_indices(dist, window);
        double cum = 0.0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            cum += dist[idx[i]];
            if (cum >= p - slack) {
                idx.resize(i + 1);
                return keep_only(dist, idx);
            }
        }
        if (idx.size() == dist.size()) {
            return keep_only(dist, idx);
        }
    }
}

std::vector<double> decode_transform(std::span<const double> dist, const DecodingConfig& cfg)
{
    switch (cfg.strategy) {
    case Strategy::greedy: return truncate_top_k(dist, 1);
    case Strategy::temperature: return apply_temperature(dist, cfg.temperature);
    case Strategy::top_k: return truncate_top_k(dist, cfg.k);
    case Strategy::top_p: return truncate_top_p(dist, cfg.p);
    }
    return {dist.begin(), dist.end()};
}

std::size_t sample_index(std::span<const double> dist, double u)
{
    double cum = 0.0;
    std::size_t last = dist.size();
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] <= 0.0) {
            continue;
        }
        cum += dist[i];
        last = i;
        if (u < cum) {
            return i;
        }
    }
    if (last == dist.size()) {
        fail(ErrorCode::invalid_argument, "cannot sample from an all-zero distribution");
    }
    return last;
}

std::size_t argmax(std::span<const double> dist)
{
    return static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
}

bool is_degenerate(std::string_view text, std::size_t min_repeats)
{
    const auto tokens = tokenize(text);
    if (tokens.size() < 3) {
        return false;
    }
    std::unordered_map<std::string, std::size_t> seen;
    std::string key;
    for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) {
        key.clear();
        key.append(tokens[i]).push_back('\x1f');
        key.append(tokens[i + 1]).push_back('\x1f');
        key.append(tokens[i + 2]);
        if (++seen[key] >= min_repeats) {
            return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------

NGramBackend::NGramBackend(const NGramModel& model, double lambda)
    : m_model(model), m_lambda(lambda), m_tag("ngram:" + model_fingerprint(model))
{}

std::string NGramBackend::complete(const GenerationRequest& request, const DecodingConfig& cfg) const
{
    if (request.prefix_tokens.empty()) {
        fail(ErrorCode::invalid_argument, "built-in backend needs a non-empty prefix");
    }
    constexpr TokenId unknown = std::numeric_limits<TokenId>::max();
    std::vector<TokenId> history;
    history.reserve(request.prefix_tokens.size() + cfg.max_new_tokens);
    for (const auto& t : request.prefix_tokens) {
        history.push_back(m_model.id_of(t).value_or(unknown));
    }
    const std::uint64_t stream = fnv1a(request.prefix_id);
    std::vector<std::string> emitted;
    for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
        const auto dist = decode_transform(next_distribution_ids(m_model, history, m_lambda), cfg);
        const std::size_t next = cfg.strategy == Strategy::greedy
                                     ? argmax(dist)
                                     : sample_index(dist, counter_uniform(cfg.seed, stream, step));
        if (next == end_id) {
            break;
        }
        history.push_back(static_cast<TokenId>(next));
        if (next != begin_id) {
            emitted.push_back(m_model.token(static_cast<TokenId>(next)));
        }
    }
    return detokenize(emitted);
}

// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(std::string url) : HttpBackend(std::move(url), Options{}) {}

HttpBackend::HttpBackend(std::string url, Options options) : m_url(std::move(url)), m_options(options)
{
    const auto scheme = m_url.find("://");
    if (scheme == std::string::npos) {
        fail(ErrorCode::config_error, "backend url needs a scheme: " + m_url);
    }
    const auto slash = m_url.find('/', scheme + 3);
    m_host = slash == std::string::npos ? m_url : m_url.substr(0, slash);
    m_path = slash == std::string::npos ? "/" : m_url.substr(slash);
}

std::string HttpBackend::request_body(const GenerationRequest& request, const DecodingConfig& cfg)
{
    nlohmann::json body;
    body["prompt"] = request.prefix_text;
    body["max_tokens"] = cfg.max_new_tokens;
    body["strategy"] = std::string(to_string(cfg.strategy));
    body["temperature"] = cfg.strategy == Strategy::temperature ? cfg.temperature
                          : cfg.strategy == Strategy::greedy     ? 0.0
                                                                 : 1.0;
    body["top_k"] = cfg.strategy == Strategy::top_k ? cfg.k : cfg.strategy == Strategy::greedy ? 1 : 0;
    body["top_p"] = cfg.strategy == Strategy::top_p ? cfg.p : 1.0;
    body["seed"] = mix64(cfg.seed, fnv1a(request.prefix_id));
    return body.dump();
}

std::string HttpBackend::complete(const GenerationRequest& request, const DecodingConfig& cfg) const
{
    const std::string body = request_body(request, cfg);
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= m_options.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(m_options.backoff * (1LL << (attempt - 1)));
        }
        httplib::Client client(m_host);
        client.set_connection_timeout(m_options.timeout);
        client.set_read_timeout(m_options.timeout);
        auto res = client.Post(m_path, body, "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            if (j.is_object() && j.contains("text") && j["text"].is_string()) {
                return j["text"].get<std::string>();
            }
            last_error = "response has no string field 'text'";
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed response: ") + e.what();
        }
    }
    fail(ErrorCode::backend_error, tag() + ": " + last_error);
}

// ---------------------------------------------------------------------------

Generation generate(const GenerationBackend& backend, const GenerationRequest& request, const DecodingConfig& cfg)
{
    cfg.validate();
    Generation g;
    g.prefix_id = request.prefix_id;
    g.source_client = request.source_client;
    g.backend_tag = backend.tag();
    g.decoding = cfg.fingerprint();
    try {
        g.text = backend.complete(request, cfg);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::backend_error) {
            throw;
        }
        fail(ErrorCode::backend_error, g.backend_tag + ": " + e.what());
    } catch (const std::exception& e) {
        fail(ErrorCode::backend_error, g.backend_tag + ": " + e.what());
    }
    g.filtered = is_degenerate(g.text);
    return g;
}

void write_generations(std::ostream& out, const std::vector<Generation>& generations)
{
    for (const auto& g : generations) {
        nlohmann::ordered_json j;
        j["prefix_id"] = g.prefix_id;
        j["source_client"] = g.source_client;
        j["backend_tag"] = g.backend_tag;
        j["decoding"] = g.decoding;
        j["text"] = g.text;
        j["filtered"] = g.filtered;
        j["failed"] = g.failed;
        out << j.dump() << '\n';
    }
}

std::vector<Generation> read_generations(std::istream& in)
{
    std::vector<Generation> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            Generation g;
            g.prefix_id = j.at("prefix_id").get<std::string>();
            g.source_client = j.at("source_client").get<std::size_t>();
            g.backend_tag = j.at("backend_tag").get<std::string>();
            g.decoding = j.at("decoding").get<std::string>();
            g.text = j.at("text").get<std::string>();
            g.filtered = j.at("filtered").get<bool>();
            g.failed = j.value("failed", false);
            out.push_back(std::move(g));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::data_error, "generation cache line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace fedmem
