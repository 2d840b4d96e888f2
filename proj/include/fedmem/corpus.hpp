#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedmem {

using ClientId = std::size_t;

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

/// A token together with the byte range it was cut from.
struct TokenSpan {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Lowercases (ASCII), splits on Unicode whitespace, and splits leading and
/// trailing ASCII punctuation off each word as single-character tokens.
std::vector<std::string> tokenize(std::string_view text);

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text);

/// Joins tokens with single spaces, except that closing punctuation attaches
/// to the preceding token and opening brackets attach to the following one.
/// tokenize(detokenize(tokenize(t))) == tokenize(t).
std::string detokenize(const std::vector<std::string>& tokens);

/// True when the token is a single punctuation character.
bool is_punct_token(std::string_view token) noexcept;

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct Sample {
    std::string id;
    ClientId client = 0;
    std::string text;
    std::optional<std::string> label;
    std::map<std::string, std::string> fields;
};

struct ClientDataset {
    ClientId client = 0;
    std::vector<Sample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

struct EvalEntry {
    std::string sample_id;
    std::vector<std::string> prefix_tokens;
    std::string prefix_text;
    std::string suffix_text;
};

struct EvalSet {
    ClientId client = 0;
    std::size_t prefix_len = 0;
    std::vector<EvalEntry> entries;
};

/// Splits a sample into its first `prefix_len` tokens and the raw text
/// remainder. Returns nullopt when the sample has at most `prefix_len` tokens.
std::optional<EvalEntry> split_prefix_suffix(const Sample& sample, std::size_t prefix_len);

/// Uniform sample without replacement of min(n, eligible) entries, sorted by
/// sample id. Throws empty_eval_set when no sample is long enough.
EvalSet sample_eval_set(const ClientDataset& dataset, std::size_t n, std::size_t prefix_len, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Chat templates
// ---------------------------------------------------------------------------

enum class Task { summarization, dialog, qa, classification };

std::optional<Task> parse_task(std::string_view name);
std::string_view to_string(Task task) noexcept;

/// Name of the field whose text is audited for memorization in each task.
std::string_view audited_field(Task task) noexcept;

/// Formats a sample as a User/Assistant exchange. Throws missing_field naming
/// the first absent field.
std::string apply_template(const Sample& sample, Task task);

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

enum class PartitionMode { by_group, dirichlet };

struct PartitionConfig {
    PartitionMode mode = PartitionMode::dirichlet;
    std::size_t num_clients = 3;
    double alpha = 5.0;
    std::uint64_t seed = 0;
    std::string group_key = "group";

    void validate() const;
};

std::optional<PartitionMode> parse_partition_mode(std::string_view name);
std::string_view to_string(PartitionMode mode) noexcept;

/// Client proportions for one label class, drawn from Dirichlet(alpha, ..., alpha).
std::vector<double> dirichlet_proportions(std::size_t num_clients, double alpha, std::uint64_t seed);

/// Integer counts summing to `total`, by largest remainder on total * proportion.
/// Ties in the fractional part go to the lower client index.
std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t total);

std::vector<ClientDataset> partition(const std::vector<Sample>& records, const PartitionConfig& cfg);

/// Groups records by their pre-assigned `client` field. Client count is
/// 1 + the largest index seen.
std::vector<ClientDataset> group_by_client(const std::vector<Sample>& records);

std::vector<Sample> flatten(const std::vector<ClientDataset>& clients);

// ---------------------------------------------------------------------------
// Line-delimited JSON records
// ---------------------------------------------------------------------------

/// Reads one JSON object per line. `has_client` is set when every record
/// carries a `client` key.
std::vector<Sample> read_records(std::istream& in, bool* has_client = nullptr);
std::vector<Sample> read_records_file(const std::string& path, bool* has_client = nullptr);

void write_records(std::ostream& out, const std::vector<Sample>& records);
void write_records_file(const std::string& path, const std::vector<Sample>& records);

}  // namespace fedmem
