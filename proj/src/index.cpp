#include "fedmem/index.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "fedmem/error.hpp"

namespace fedmem {

double bm25_idf(std::size_t num_docs, std::size_t doc_freq) noexcept
{
    const double n = static_cast<double>(num_docs);
    const double df = static_cast<double>(doc_freq);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix)
{
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string s_stem(std::string_view word)
{
    std::string w(word);
    if (ends_with(w, "ies") && !ends_with(w, "eies") && !ends_with(w, "aies")) {
        w.replace(w.size() - 3, 3, "y");
    } else if (ends_with(w, "es") && !ends_with(w, "aes") && !ends_with(w, "ees") && !ends_with(w, "oes")) {
        w.pop_back();
    } else if (ends_with(w, "s") && !ends_with(w, "us") && !ends_with(w, "ss") && w.size() > 1) {
        w.pop_back();
    }
    return w;
}

bool is_stopword(std::string_view word) noexcept
{
    // Lucene's English stop set
    static constexpr std::array<std::string_view, 33> words = {
        "a",    "an",   "and",  "are",   "as",    "at",   "be",   "but",  "by",   "for", "if",
        "in",   "into", "is",   "it",    "no",    "not",  "of",   "on",   "or",   "such", "that",
        "the",  "their", "then", "there", "these", "they", "this", "to",   "was",  "will", "with"};
    return std::find(words.begin(), words.end(), word) != words.end();
}

std::vector<std::string> SuffixIndex::analyze(std::string_view text) const
{
    std::vector<std::string> out;
    for (auto& t : tokenize(text)) {
        if (is_punct_token(t)) continue;
        if (m_params.remove_stopwords && is_stopword(t)) continue;
        out.push_back(m_params.stem ? s_stem(t) : std::move(t));
    }
    return out;
}

SuffixIndex SuffixIndex::build(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params)
{
    if (docs.empty()) {
        fail(ErrorCode::empty_index, "no suffixes to index");
    }
    SuffixIndex index;
    index.m_params = params;
    std::size_t total = 0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto terms = index.analyze(docs[d].second);
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : terms) {
            ++tf[t];
        }
        for (const auto& [term, f] : tf) {
            index.m_postings[term].push_back({static_cast<DocId>(d), f});
        }
        index.m_ids.push_back(docs[d].first);
        index.m_lengths.push_back(terms.size());
        total += terms.size();
    }
    index.m_avg_len = static_cast<double>(total) / static_cast<double>(docs.size());
    return index;
}

SuffixIndex SuffixIndex::build(const EvalSet& eval_set, Bm25Params params)
{
    std::vector<std::pair<std::string, std::string>> docs;
    docs.reserve(eval_set.entries.size());
    for (const auto& e : eval_set.entries) {
        docs.emplace_back(e.sample_id, e.suffix_text);
    }
    return build(docs, params);
}

const std::vector<Posting>& SuffixIndex::postings(const std::string& term) const
{
    static const std::vector<Posting> none;
    auto it = m_postings.find(term);
    return it == m_postings.end() ? none : it->second;
}

std::vector<ScoredDoc> SuffixIndex::query_top(std::string_view text, std::size_t n_prime) const
{
    if (n_prime < 1) {
        fail(ErrorCode::invalid_argument, "n_prime must be at least 1");
    }
    auto terms = analyze(text);
    if (terms.empty()) {
        fail(ErrorCode::empty_query, "query has no indexable terms");
    }
    if (terms.size() > m_params.max_query_tokens) {
        terms.resize(m_params.max_query_tokens);
    }
    // repeated query terms contribute once per occurrence
    std::vector<std::pair<std::string, std::size_t>> qtf;
    for (auto& t : terms) {
        auto it = std::find_if(qtf.begin(), qtf.end(), [&](const auto& e) { return e.first == t; });
        if (it == qtf.end()) {
            qtf.emplace_back(std::move(t), 1);
        } else {
            ++it->second;
        }
    }
    std::vector<double> score(size(), 0.0);
    std::vector<bool> hit(size(), false);
    const double k1 = m_params.k1;
    const double b = m_params.b;
    for (const auto& [term, count] : qtf) {
        const auto& plist = postings(term);
        if (plist.empty()) continue;
        const double idf = bm25_idf(size(), plist.size());
        for (const auto& p : plist) {
            const double tf = p.tf;
            const double norm = 1.0 - b + b * static_cast<double>(m_lengths[p.doc]) / m_avg_len;
            score[p.doc] += static_cast<double>(count) * idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            hit[p.doc] = true;
        }
    }
    std::vector<ScoredDoc> ranked;
    for (std::size_t d = 0; d < size(); ++d) {
        if (hit[d] && score[d] > 0.0) {
            ranked.push_back({static_cast<DocId>(d), score[d]});
        }
    }
    const std::size_t keep = std::min(n_prime, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                      [](const ScoredDoc& a, const ScoredDoc& c) {
                          return a.score > c.score || (a.score == c.score && a.doc < c.doc);
                      });
    ranked.resize(keep);
    return ranked;
}

void SuffixIndex::dump(std::ostream& out) const
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", m_avg_len);
    out << "fedmem-index 1\n";
    out << "docs " << size() << " avg_len " << buf << '\n';
    for (std::size_t d = 0; d < size(); ++d) {
        out << d << ' ' << m_ids[d] << ' ' << m_lengths[d] << '\n';
    }
    std::map<std::string, const std::vector<Posting>*> sorted;
    for (const auto& [term, plist] : m_postings) {
        sorted.emplace(term, &plist);
    }
    out << "terms " << sorted.size() << '\n';
    for (const auto& [term, plist] : sorted) {
        out << term;
        for (const auto& p : *plist) {
            out << ' ' << p.doc << ':' << p.tf;
        }
        out << '\n';
    }
}

}  // namespace fedmem
