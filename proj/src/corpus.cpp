#include "fedmem/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "fedmem/error.hpp"
#include "fedmem/rng.hpp"
#include "fedmem/utf8.hpp"

namespace fedmem {

namespace {

void push_lower(std::string& out, std::string_view s)
{
    for (char c : s) {
        out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c);
    }
}

bool is_ascii_punct_byte(char c)
{
    return utf8::is_punct(static_cast<unsigned char>(c));
}

void split_word(std::string_view text, std::size_t begin, std::size_t end, std::vector<TokenSpan>& out)
{
    // punctuation is ASCII, so byte-wise scanning from either end is safe
    std::size_t lo = begin;
    while (lo < end && is_ascii_punct_byte(text[lo])) {
        out.push_back({std::string(1, text[lo]), lo, lo + 1});
        ++lo;
    }
    std::size_t hi = end;
    while (hi > lo && is_ascii_punct_byte(text[hi - 1])) {
        --hi;
    }
    if (lo < hi) {
        TokenSpan core{{}, lo, hi};
        push_lower(core.text, text.substr(lo, hi - lo));
        out.push_back(std::move(core));
    }
    for (std::size_t i = hi; i < end; ++i) {
        out.push_back({std::string(1, text[i]), i, i + 1});
    }
}

bool attaches_left(std::string_view tok)
{
    return tok.size() == 1 && std::string_view(",.;:!?)]}%").find(tok[0]) != std::string_view::npos;
}

bool attaches_right(std::string_view tok)
{
    return tok.size() == 1 && std::string_view("([{").find(tok[0]) != std::string_view::npos;
}

}  // namespace

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text)
{
    std::vector<TokenSpan> out;
    std::size_t word_begin = std::string_view::npos;
    for (std::size_t pos = 0; pos < text.size();) {
        const std::size_t start = pos;
        const char32_t c = utf8::decode(text, pos);
        if (utf8::is_space(c)) {
            if (word_begin != std::string_view::npos) {
                split_word(text, word_begin, start, out);
                word_begin = std::string_view::npos;
            }
        } else if (word_begin == std::string_view::npos) {
            word_begin = start;
        }
    }
    if (word_begin != std::string_view::npos) {
        split_word(text, word_begin, text.size(), out);
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text)
{
    auto spans = tokenize_with_offsets(text);
    std::vector<std::string> out;
    out.reserve(spans.size());
    for (auto& s : spans) {
        out.push_back(std::move(s.text));
    }
    return out;
}

std::string detokenize(const std::vector<std::string>& tokens)
{
    std::string out;
    bool glue_next = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0 && !glue_next && !attaches_left(tokens[i])) {
            out.push_back(' ');
        }
        out += tokens[i];
        glue_next = attaches_right(tokens[i]);
    }
    return out;
}

bool is_punct_token(std::string_view token) noexcept
{
    return token.size() == 1 && is_ascii_punct_byte(token[0]);
}

std::optional<EvalEntry> split_prefix_suffix(const Sample& sample, std::size_t prefix_len)
{
    if (prefix_len == 0) {
        fail(ErrorCode::invalid_argument, "prefix_len must be at least 1");
    }
    auto spans = tokenize_with_offsets(sample.text);
    if (spans.size() <= prefix_len) {
        return std::nullopt;
    }
    EvalEntry entry;
    entry.sample_id = sample.id;
    entry.prefix_tokens.reserve(prefix_len);
    for (std::size_t i = 0; i < prefix_len; ++i) {
        entry.prefix_tokens.push_back(spans[i].text);
    }
    const std::size_t cut = spans[prefix_len - 1].end;
    entry.prefix_text = utf8::trim(std::string_view(sample.text).substr(0, cut));
    entry.suffix_text = utf8::trim(std::string_view(sample.text).substr(cut));
    return entry;
}

EvalSet sample_eval_set(const ClientDataset& dataset, std::size_t n, std::size_t prefix_len, std::uint64_t seed)
{
    if (n == 0) {
        fail(ErrorCode::invalid_argument, "eval sample size must be at least 1");
    }
    std::vector<EvalEntry> eligible;
    for (const auto& s : dataset.samples) {
        if (auto e = split_prefix_suffix(s, prefix_len)) {
            eligible.push_back(std::move(*e));
        }
    }
    if (eligible.empty()) {
        fail(ErrorCode::empty_eval_set,
             "client " + std::to_string(dataset.client) + " has no sample longer than " +
                 std::to_string(prefix_len) + " tokens");
    }
    const std::size_t take = std::min(n, eligible.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.below(eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(take);
    std::sort(eligible.begin(), eligible.end(),
              [](const EvalEntry& a, const EvalEntry& b) { return a.sample_id < b.sample_id; });
    return EvalSet{dataset.client, prefix_len, std::move(eligible)};
}

// ---------------------------------------------------------------------------

std::optional<Task> parse_task(std::string_view name)
{
    if (name == "summarization") return Task::summarization;
    if (name == "dialog") return Task::dialog;
    if (name == "qa") return Task::qa;
    if (name == "classification") return Task::classification;
    return std::nullopt;
}

std::string_view to_string(Task task) noexcept
{
    switch (task) {
    case Task::summarization: return "summarization";
    case Task::dialog: return "dialog";
    case Task::qa: return "qa";
    case Task::classification: return "classification";
    }
    return "";
}

std::string_view audited_field(Task task) noexcept
{
    switch (task) {
    case Task::summarization: return "abstract";
    case Task::dialog: return "patient";
    case Task::qa: return "context";
    case Task::classification: return "passage";
    }
    return "";
}

namespace {

const std::string& require_field(const Sample& sample, const std::string& name)
{
    if (auto it = sample.fields.find(name); it != sample.fields.end()) {
        return it->second;
    }
    if (name == "class" && sample.label) {
        return *sample.label;
    }
    fail(ErrorCode::missing_field, name);
}

std::string exchange(std::string_view user, const std::string& input, const std::string& output)
{
    std::string out = "User: ";
    out += user;
    out += '\n';
    out += input;
    out += "\n\nAssistant: ";
    out += output;
    return out;
}

}  // namespace

std::string apply_template(const Sample& sample, Task task)
{
    switch (task) {
    case Task::summarization: {
        const auto& abstract = require_field(sample, "abstract");
        const auto& title = require_field(sample, "title");
        return exchange("Please summarize the following abstract into a title.", abstract, title);
    }
    case Task::dialog: {
        const auto& patient = require_field(sample, "patient");
        const auto& doctor = require_field(sample, "doctor");
        return exchange("If you are a doctor, please answer the medical questions based on the "
                        "patient’s description.",
                        patient, doctor);
    }
    case Task::qa: {
        const auto& question = require_field(sample, "question");
        const auto& context = require_field(sample, "context");
        const auto& answer = require_field(sample, "answer");
        return exchange(question, context, answer);
    }
    case Task::classification: {
        const auto& passage = require_field(sample, "passage");
        const auto& cls = require_field(sample, "class");
        return exchange("Please classify the following passage into one of the following categories: "
                        "BACKGROUND, OBJECTIVE, METHODS, RESULTS, or CONCLUSIONS.",
                        passage, cls);
    }
    }
    fail(ErrorCode::invalid_argument, "unknown task");
}

// ---------------------------------------------------------------------------

std::optional<PartitionMode> parse_partition_mode(std::string_view name)
{
    if (name == "by_group") return PartitionMode::by_group;
    if (name == "dirichlet") return PartitionMode::dirichlet;
    return std::nullopt;
}

std::string_view to_string(PartitionMode mode) noexcept
{
    return mode == PartitionMode::by_group ? "by_group" : "dirichlet";
}

void PartitionConfig::validate() const
{
    if (num_clients < 2) {
        fail(ErrorCode::config_error, "partition needs at least 2 clients");
    }
    if (mode == PartitionMode::dirichlet && !(alpha > 0.0)) {
        fail(ErrorCode::config_error, "dirichlet alpha must be positive");
    }
    if (mode == PartitionMode::by_group && group_key.empty()) {
        fail(ErrorCode::config_error, "by_group partition needs a group_key");
    }
}

std::vector<double> dirichlet_proportions(std::size_t num_clients, double alpha, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> p(num_clients);
    double sum = 0.0;
    for (auto& x : p) {
        x = rng.gamma(alpha);
        sum += x;
    }
    for (auto& x : p) {
        x /= sum;
    }
    return p;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t total)
{
    const std::size_t n = proportions.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<double> frac(n, 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double quota = proportions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(quota);
        frac[i] = quota - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    // quotas can overshoot by an ulp when proportions sum slightly above 1
    while (assigned > total) {
        auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --assigned;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % n) {
        ++counts[order[i]];
        ++assigned;
    }
    return counts;
}

namespace {

std::string group_value(const Sample& s, const std::string& key)
{
    if (key == "label") {
        if (!s.label) {
            fail(ErrorCode::missing_field, "label (record " + s.id + ")");
        }
        return *s.label;
    }
    auto it = s.fields.find(key);
    if (it == s.fields.end()) {
        fail(ErrorCode::missing_field, key + " (record " + s.id + ")");
    }
    return it->second;
}

std::vector<ClientDataset> assemble(const std::vector<Sample>& records, const std::vector<ClientId>& owner,
                                    std::size_t num_clients)
{
    std::vector<ClientDataset> out(num_clients);
    for (std::size_t c = 0; c < num_clients; ++c) {
        out[c].client = c;
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        Sample s = records[i];
        s.client = owner[i];
        out[owner[i]].samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::vector<ClientDataset> partition(const std::vector<Sample>& records, const PartitionConfig& cfg)
{
    cfg.validate();
    const std::size_t L = cfg.num_clients;
    std::vector<ClientId> owner(records.size(), 0);

    if (cfg.mode == PartitionMode::by_group) {
        std::vector<std::string> values;
        values.reserve(records.size());
        for (const auto& r : records) {
            values.push_back(group_value(r, cfg.group_key));
        }
        std::set<std::string> distinct(values.begin(), values.end());
        if (distinct.size() < L) {
            fail(ErrorCode::invalid_partition, std::to_string(distinct.size()) + " distinct groups for " +
                                                   std::to_string(L) + " clients");
        }
        std::map<std::string, ClientId> group_client;
        ClientId next = 0;
        for (const auto& g : distinct) {
            group_client[g] = next++ % L;
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            owner[i] = group_client[values[i]];
        }
        return assemble(records, owner, L);
    }

    // Unlabeled records form one class of their own.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_label[records[i].label.value_or("")].push_back(i);
    }
    for (auto& [label, members] : by_label) {
        const std::uint64_t stream = mix64(cfg.seed, fnv1a(label));
        const auto proportions = dirichlet_proportions(L, cfg.alpha, stream);
        const auto counts = largest_remainder(proportions, members.size());
        Rng rng(mix64(stream, 1));
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[rng.below(i)]);
        }
        std::size_t cursor = 0;
        for (ClientId c = 0; c < L; ++c) {
            for (std::size_t k = 0; k < counts[c]; ++k) {
                owner[members[cursor++]] = c;
            }
        }
    }
    return assemble(records, owner, L);
}

std::vector<ClientDataset> group_by_client(const std::vector<Sample>& records)
{
    std::size_t L = 0;
    for (const auto& r : records) {
        L = std::max(L, r.client + 1);
    }
    std::vector<ClientId> owner;
    owner.reserve(records.size());
    for (const auto& r : records) {
        owner.push_back(r.client);
    }
    return assemble(records, owner, L);
}

std::vector<Sample> flatten(const std::vector<ClientDataset>& clients)
{
    std::vector<Sample> out;
    for (const auto& c : clients) {
        out.insert(out.end(), c.samples.begin(), c.samples.end());
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string scalar_string(const nlohmann::json& v, const std::string& key, std::size_t line)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer()) {
        return std::to_string(v.get<long long>());
    }
    fail(ErrorCode::data_error, "line " + std::to_string(line) + ": '" + key + "' must be a string");
}

}  // namespace

std::vector<Sample> read_records(std::istream& in, bool* has_client)
{
    std::vector<Sample> out;
    std::set<std::string> ids;
    bool all_clients = true;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (utf8::trim(line).empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::data_error, "line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("text")) {
            fail(ErrorCode::data_error, "line " + std::to_string(lineno) + ": record needs 'id' and 'text'");
        }
        Sample s;
        s.id = scalar_string(j["id"], "id", lineno);
        s.text = scalar_string(j["text"], "text", lineno);
        if (utf8::trim(s.text).empty()) {
            fail(ErrorCode::data_error, "line " + std::to_string(lineno) + ": empty text for record " + s.id);
        }
        if (!ids.insert(s.id).second) {
            fail(ErrorCode::data_error, "line " + std::to_string(lineno) + ": duplicate id " + s.id);
        }
        if (auto it = j.find("client"); it != j.end() && !it->is_null()) {
            if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
                fail(ErrorCode::data_error, "line " + std::to_string(lineno) + ": 'client' must be a non-negative integer");
            }
            s.client = it->get<std::size_t>();
        } else {
            all_clients = false;
        }
        if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
            s.label = scalar_string(*it, "label", lineno);
        }
        if (auto it = j.find("fields"); it != j.end() && !it->is_null()) {
            if (!it->is_object()) {
                fail(ErrorCode::data_error, "line " + std::to_string(lineno) + ": 'fields' must be an object");
            }
            for (const auto& [k, v] : it->items()) {
                s.fields[k] = scalar_string(v, k, lineno);
            }
        }
        out.push_back(std::move(s));
    }
    if (has_client) {
        *has_client = all_clients && !out.empty();
    }
    return out;
}

std::vector<Sample> read_records_file(const std::string& path, bool* has_client)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::data_error, "cannot open " + path);
    }
    return read_records(in, has_client);
}

void write_records(std::ostream& out, const std::vector<Sample>& records)
{
    for (const auto& s : records) {
        nlohmann::json j;
        j["id"] = s.id;
        j["client"] = s.client;
        j["text"] = s.text;
        if (s.label) {
            j["label"] = *s.label;
        }
        if (!s.fields.empty()) {
            j["fields"] = s.fields;
        }
        out << j.dump() << '\n';
    }
}

void write_records_file(const std::string& path, const std::vector<Sample>& records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorCode::data_error, "cannot write " + path);
    }
    write_records(out, records);
}

}  // namespace fedmem
