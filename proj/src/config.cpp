#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedmem/harness.hpp"

namespace fedmem {

using nlohmann::json;

std::optional<RegimeSelection> parse_regime_selection(std::string_view name)
{
    if (name == "fl" || name == "FL") return RegimeSelection::fl;
    if (name == "cl" || name == "CL") return RegimeSelection::cl;
    if (name == "both") return RegimeSelection::both;
    return std::nullopt;
}

std::string_view to_string(RegimeSelection selection) noexcept
{
    switch (selection) {
    case RegimeSelection::fl: return "fl";
    case RegimeSelection::cl: return "cl";
    case RegimeSelection::both: return "both";
    }
    return "fl";
}

void AuditConfig::validate() const
{
    auto bad = [](const std::string& what) { fail(ErrorCode::config_error, what); };
    if (n == 0) bad("audit.n must be positive");
    if (n_prime == 0) bad("audit.n_prime must be positive");
    if (prefix_len == 0) bad("audit.prefix_len must be positive");
    if (trials == 0) bad("audit.trials must be positive");
    if (workers == 0) bad("audit.workers must be positive");
    if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
        bad("audit.max_failure_fraction must lie in [0, 1]");
    }
    if (bm25.k1 <= 0.0 || !(bm25.b >= 0.0 && bm25.b <= 1.0) || bm25.max_query_tokens == 0) {
        bad("index: need k1 > 0, b in [0, 1] and max_query_tokens > 0");
    }
    if (backend.kind == BackendConfig::Kind::http && backend.url.empty()) {
        bad("backend.url is required for the http backend");
    }
    // An audit with FedProx and mu = 0 is plain FedAvg under another name.
    if (train.algorithm == Algorithm::fedprox && !(train.mu > 0.0)) {
        bad("train.mu must be positive for fedprox");
    }
    try {
        decoding.validate();
        train.validate();
        partition.validate();
        detector.validate();
    } catch (const Error& e) {
        fail(ErrorCode::config_error, e.what());
    }
}

json to_json(const AuditConfig& cfg)
{
    json weights = json::array();
    for (const auto& w : cfg.train.weights) weights.push_back(w.weight);
    return json{
        {"audit",
         {{"n", cfg.n},
          {"n_prime", cfg.n_prime},
          {"prefix_len", cfg.prefix_len},
          {"trials", cfg.trials},
          {"seed", cfg.seed},
          {"task", cfg.task ? json(std::string(to_string(*cfg.task))) : json(nullptr)},
          {"regime", std::string(to_string(cfg.regime))},
          {"workers", cfg.workers},
          {"max_failure_fraction", cfg.max_failure_fraction}}},
        {"decoding",
         {{"strategy", std::string(to_string(cfg.decoding.strategy))},
          {"temperature", cfg.decoding.temperature},
          {"k", cfg.decoding.k},
          {"p", cfg.decoding.p},
          {"max_new_tokens", cfg.decoding.max_new_tokens}}},
        {"train",
         {{"algorithm", std::string(to_string(cfg.train.algorithm))},
          {"rounds", cfg.train.rounds},
          {"mu", cfg.train.mu},
          {"order", cfg.train.order},
          {"smoothing_lambda", cfg.train.smoothing_lambda},
          {"weights", weights}}},
        {"partition",
         {{"mode", std::string(to_string(cfg.partition.mode))},
          {"num_clients", cfg.partition.num_clients},
          {"alpha", cfg.partition.alpha},
          {"seed", cfg.partition.seed},
          {"group_key", cfg.partition.group_key}}},
        {"detector",
         {{"min_match_chars", cfg.detector.min_match_chars},
          {"seed_cosine_min", cfg.detector.seed_cosine_min},
          {"seed_dice_min", cfg.detector.seed_dice_min},
          {"max_gap_sentences", cfg.detector.max_gap_sentences},
          {"passage_cosine_min", cfg.detector.passage_cosine_min},
          {"idea_length_ratio", cfg.detector.idea_length_ratio},
          {"paraphrase_confidence_split", cfg.detector.paraphrase_confidence_split}}},
        {"index",
         {{"k1", cfg.bm25.k1},
          {"b", cfg.bm25.b},
          {"max_query_tokens", cfg.bm25.max_query_tokens},
          {"remove_stopwords", cfg.bm25.remove_stopwords},
          {"stem", cfg.bm25.stem}}},
        {"backend",
         {{"kind", cfg.backend.kind == BackendConfig::Kind::http ? "http" : "builtin"},
          {"url", cfg.backend.url},
          {"retries", cfg.backend.retries},
          {"backoff_ms", cfg.backend.backoff_ms},
          {"timeout_s", cfg.backend.timeout_s}}},
    };
}

namespace {

/// Overlays `patch` on the full default document, rejecting unknown keys.
json merge_onto_defaults(const json& patch)
{
    json out = to_json(AuditConfig{});
    if (patch.is_null()) return out;
    if (!patch.is_object()) fail(ErrorCode::config_error, "config document must be an object");
    for (const auto& [section, body] : patch.items()) {
        if (!out.contains(section)) fail(ErrorCode::config_error, "unknown section '" + section + "'");
        if (!body.is_object()) fail(ErrorCode::config_error, "section '" + section + "' must be an object");
        for (const auto& [key, value] : body.items()) {
            if (!out[section].contains(key)) {
                fail(ErrorCode::config_error, "unknown key '" + section + "." + key + "'");
            }
            out[section][key] = value;
        }
    }
    return out;
}

template <typename E, typename Parse>
E parse_enum(const json& v, const std::string& where, Parse parse)
{
    const auto name = v.get<std::string>();
    auto e = parse(name);
    if (!e) fail(ErrorCode::config_error, "unknown value '" + name + "' for " + where);
    return *e;
}

}  // namespace

AuditConfig audit_config_from_json(const json& doc)
{
    const json d = merge_onto_defaults(doc);
    AuditConfig c;
    try {
        const auto& a = d["audit"];
        c.n = a["n"].get<std::size_t>();
        c.n_prime = a["n_prime"].get<std::size_t>();
        c.prefix_len = a["prefix_len"].get<std::size_t>();
        c.trials = a["trials"].get<std::size_t>();
        c.seed = a["seed"].get<std::uint64_t>();
        if (!a["task"].is_null()) c.task = parse_enum<Task>(a["task"], "audit.task", parse_task);
        c.regime = parse_enum<RegimeSelection>(a["regime"], "audit.regime", parse_regime_selection);
        c.workers = a["workers"].get<std::size_t>();
        c.max_failure_fraction = a["max_failure_fraction"].get<double>();

        const auto& dec = d["decoding"];
        c.decoding.strategy = parse_enum<Strategy>(dec["strategy"], "decoding.strategy", parse_strategy);
        c.decoding.temperature = dec["temperature"].get<double>();
        c.decoding.k = dec["k"].get<std::size_t>();
        c.decoding.p = dec["p"].get<double>();
        c.decoding.max_new_tokens = dec["max_new_tokens"].get<std::size_t>();
        c.decoding.seed = c.seed;

        const auto& t = d["train"];
        c.train.algorithm = parse_enum<Algorithm>(t["algorithm"], "train.algorithm", parse_algorithm);
        c.train.rounds = t["rounds"].get<int>();
        c.train.mu = t["mu"].get<double>();
        c.train.order = t["order"].get<int>();
        c.train.smoothing_lambda = t["smoothing_lambda"].get<double>();
        ClientId j = 0;
        for (const auto& w : t["weights"]) c.train.weights.push_back({j++, w.get<double>()});
        c.train.workers = c.workers;

        const auto& p = d["partition"];
        c.partition.mode = parse_enum<PartitionMode>(p["mode"], "partition.mode", parse_partition_mode);
        c.partition.num_clients = p["num_clients"].get<std::size_t>();
        c.partition.alpha = p["alpha"].get<double>();
        c.partition.seed = p["seed"].get<std::uint64_t>();
        c.partition.group_key = p["group_key"].get<std::string>();

        const auto& det = d["detector"];
        c.detector.min_match_chars = det["min_match_chars"].get<std::size_t>();
        c.detector.seed_cosine_min = det["seed_cosine_min"].get<double>();
        c.detector.seed_dice_min = det["seed_dice_min"].get<double>();
        c.detector.max_gap_sentences = det["max_gap_sentences"].get<std::size_t>();
        c.detector.passage_cosine_min = det["passage_cosine_min"].get<double>();
        c.detector.idea_length_ratio = det["idea_length_ratio"].get<double>();
        c.detector.paraphrase_confidence_split = det["paraphrase_confidence_split"].get<double>();

        const auto& ix = d["index"];
        c.bm25.k1 = ix["k1"].get<double>();
        c.bm25.b = ix["b"].get<double>();
        c.bm25.max_query_tokens = ix["max_query_tokens"].get<std::size_t>();
        c.bm25.remove_stopwords = ix["remove_stopwords"].get<bool>();
        c.bm25.stem = ix["stem"].get<bool>();

        const auto& b = d["backend"];
        const auto kind = b["kind"].get<std::string>();
        if (kind == "builtin") {
            c.backend.kind = BackendConfig::Kind::builtin;
        } else if (kind == "http") {
            c.backend.kind = BackendConfig::Kind::http;
        } else {
            fail(ErrorCode::config_error, "unknown value '" + kind + "' for backend.kind");
        }
        c.backend.url = b["url"].get<std::string>();
        c.backend.retries = b["retries"].get<std::size_t>();
        c.backend.backoff_ms = b["backoff_ms"].get<std::size_t>();
        c.backend.timeout_s = b["timeout_s"].get<std::size_t>();
    } catch (const json::exception& e) {
        fail(ErrorCode::config_error, e.what());
    }
    return c;
}

json apply_env_overrides(json doc, const std::function<const char*(const char*)>& getenv)
{
    auto lookup = getenv ? getenv : [](const char* name) -> const char* { return std::getenv(name); };
    json out = merge_onto_defaults(doc);
    for (auto& [section, body] : out.items()) {
        for (auto& [key, value] : body.items()) {
            std::string name = "FEDMEM_" + section + "_" + key;
            for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            const char* raw = lookup(name.c_str());
            if (raw == nullptr) continue;
            const std::string text = raw;
            if (value.is_string() || (value.is_null() && text != "null")) {
                value = text;
            } else {
                try {
                    value = json::parse(text);
                } catch (const json::parse_error&) {
                    fail(ErrorCode::config_error, name + " is not a valid value: " + text);
                }
            }
        }
    }
    return out;
}

AuditConfig load_audit_config(const std::optional<std::filesystem::path>& path,
                              const std::function<const char*(const char*)>& getenv)
{
    json doc = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) fail(ErrorCode::config_error, "cannot open config " + path->string());
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            fail(ErrorCode::config_error, path->string() + ": " + e.what());
        }
    }
    auto cfg = audit_config_from_json(apply_env_overrides(std::move(doc), getenv));
    cfg.validate();
    return cfg;
}

int exit_code_for(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::config_error:
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_weights:
        return 2;
    case ErrorCode::backend_failure_threshold:
    case ErrorCode::backend_error:
        return 3;
    default:
        return 4;
    }
}

}  // namespace fedmem
