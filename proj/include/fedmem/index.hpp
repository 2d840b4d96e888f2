#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedmem/corpus.hpp"

namespace fedmem {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    /// Longer queries are cut to their first `max_query_tokens` terms.
    std::size_t max_query_tokens = 256;
    bool remove_stopwords = false;
    bool stem = false;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); always positive.
double bm25_idf(std::size_t num_docs, std::size_t doc_freq) noexcept;

/// Harman "S" stemmer: strips English plural endings.
std::string s_stem(std::string_view word);

bool is_stopword(std::string_view word) noexcept;

using DocId = std::uint32_t;

struct Posting {
    DocId doc = 0;
    std::uint32_t tf = 0;
};

struct ScoredDoc {
    DocId doc = 0;
    double score = 0.0;
};

/// Immutable inverted index over a set of suffixes. Documents are numbered in
/// insertion order; ranking ties go to the lower number.
class SuffixIndex {
  public:
    static SuffixIndex build(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params = {});
    static SuffixIndex build(const EvalSet& eval_set, Bm25Params params = {});

    std::size_t size() const noexcept { return m_ids.size(); }
    double avg_doc_len() const noexcept { return m_avg_len; }
    const Bm25Params& params() const noexcept { return m_params; }
    const std::string& id(DocId doc) const { return m_ids.at(doc); }
    std::size_t doc_len(DocId doc) const { return m_lengths.at(doc); }

    /// Postings of an analyzed term, sorted by doc; empty if absent.
    const std::vector<Posting>& postings(const std::string& term) const;
    std::size_t num_terms() const noexcept { return m_postings.size(); }

    /// Tokenizer plus the configured filters, without punctuation tokens.
    std::vector<std::string> analyze(std::string_view text) const;

    /// Top-n' documents by BM25, descending, ties by ascending doc number.
    /// Only documents with a positive score are returned.
    std::vector<ScoredDoc> query_top(std::string_view text, std::size_t n_prime) const;

    /// Sorted, versioned text dump for debugging.
    void dump(std::ostream& out) const;

  private:
    Bm25Params m_params;
    std::vector<std::string> m_ids;
    std::vector<std::size_t> m_lengths;
    std::unordered_map<std::string, std::vector<Posting>> m_postings;
    double m_avg_len = 0.0;
};

}  // namespace fedmem
