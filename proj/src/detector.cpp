#include "fedmem/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>

#include "fedmem/corpus.hpp"
#include "fedmem/error.hpp"
#include "fedmem/utf8.hpp"

namespace fedmem {

std::string_view to_string(Category category) noexcept
{
    switch (category) {
    case Category::verbatim: return "verbatim";
    case Category::paraphrase_high: return "paraphrase_high";
    case Category::paraphrase_low: return "paraphrase_low";
    case Category::idea: return "idea";
    }
    return "";
}

void DetectorConfig::validate() const
{
    if (min_match_chars < 1) fail(ErrorCode::config_error, "min_match_chars must be at least 1");
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(seed_cosine_min)) fail(ErrorCode::config_error, "seed_cosine_min must lie in [0, 1]");
    if (!unit(seed_dice_min)) fail(ErrorCode::config_error, "seed_dice_min must lie in [0, 1]");
    if (!unit(passage_cosine_min)) fail(ErrorCode::config_error, "passage_cosine_min must lie in [0, 1]");
    if (!unit(idea_length_ratio)) fail(ErrorCode::config_error, "idea_length_ratio must lie in [0, 1]");
    if (!unit(paraphrase_confidence_split)) {
        fail(ErrorCode::config_error, "paraphrase_confidence_split must lie in [0, 1]");
    }
}

// ---------------------------------------------------------------------------

namespace {

CharRange trim_range(std::string_view text, CharRange r)
{
    std::size_t begin = r.end;
    std::size_t end = r.begin;
    for (std::size_t pos = r.begin; pos < r.end;) {
        const std::size_t start = pos;
        if (!utf8::is_space(utf8::decode(text, pos))) {
            begin = std::min(begin, start);
            end = pos;
        }
    }
    return begin < end ? CharRange{begin, end} : CharRange{r.begin, r.begin};
}

std::vector<std::string> words(std::string_view text)
{
    auto tokens = tokenize(text);
    std::erase_if(tokens, [](const std::string& t) { return is_punct_token(t); });
    return tokens;
}

bool space_at(std::string_view text, std::size_t pos)
{
    if (pos >= text.size()) return true;
    return utf8::is_space(utf8::decode(text, pos));
}

std::string_view slice(std::string_view text, CharRange r)
{
    return text.substr(r.begin, r.size());
}

}  // namespace

std::vector<CharRange> split_sentences(std::string_view text)
{
    std::vector<CharRange> raw;
    std::size_t start = 0;
    auto close = [&](std::size_t end, std::size_t next_start) {
        auto r = trim_range(text, {start, end});
        if (r.size() > 0) raw.push_back(r);
        start = next_start;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            close(i, i + 1);
        } else if ((c == '.' || c == '?' || c == '!') && space_at(text, i + 1)) {
            close(i + 1, i + 1);
        }
    }
    close(text.size(), text.size());

    std::vector<CharRange> out;
    std::optional<std::size_t> pending_begin;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CharRange r = raw[i];
        if (pending_begin) {
            r.begin = *pending_begin;
            pending_begin.reset();
        }
        const bool short_sentence = words(slice(text, r)).size() < 3;
        if (short_sentence && i + 1 < raw.size()) {
            pending_begin = r.begin;
            continue;
        }
        if (short_sentence && !out.empty()) {
            out.back().end = r.end;
            continue;
        }
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------

int SubstringMatcher::State::go(char32_t c) const noexcept
{
    auto it = std::lower_bound(next.begin(), next.end(), c, [](const auto& e, char32_t x) { return e.first < x; });
    return it != next.end() && it->first == c ? it->second : -1;
}

void SubstringMatcher::State::set(char32_t c, int target)
{
    auto it = std::lower_bound(next.begin(), next.end(), c, [](const auto& e, char32_t x) { return e.first < x; });
    if (it != next.end() && it->first == c) {
        it->second = target;
    } else {
        next.insert(it, {c, target});
    }
}

SubstringMatcher::SubstringMatcher(std::string_view text)
{
    auto norm = utf8::normalize(text);
    m_byte_begin = std::move(norm.byte_begin);
    m_byte_end = std::move(norm.byte_end);
    m_states.reserve(2 * norm.chars.size() + 1);
    m_states.push_back(State{});
    int last = 0;
    for (std::size_t pos = 0; pos < norm.chars.size(); ++pos) {
        const char32_t c = norm.chars[pos];
        const int cur = static_cast<int>(m_states.size());
        m_states.push_back(State{m_states[last].len + 1, -1, pos, {}});
        int p = last;
        while (p != -1 && m_states[p].go(c) == -1) {
            m_states[p].set(c, cur);
            p = m_states[p].link;
        }
        if (p == -1) {
            m_states[cur].link = 0;
        } else {
            const int q = m_states[p].go(c);
            if (m_states[p].len + 1 == m_states[q].len) {
                m_states[cur].link = q;
            } else {
                const int clone = static_cast<int>(m_states.size());
                State copy = m_states[q];
                copy.len = m_states[p].len + 1;
                m_states.push_back(std::move(copy));
                while (p != -1 && m_states[p].go(c) == q) {
                    m_states[p].set(c, clone);
                    p = m_states[p].link;
                }
                m_states[q].link = clone;
                m_states[cur].link = clone;
            }
        }
        last = cur;
    }
}

CommonSubstring SubstringMatcher::longest_common(std::string_view other) const
{
    const auto norm = utf8::normalize(other);
    int v = 0;
    std::size_t len = 0;
    CommonSubstring best;
    std::size_t best_b_end = 0;
    int best_state = 0;
    for (std::size_t i = 0; i < norm.chars.size(); ++i) {
        const char32_t c = norm.chars[i];
        while (v != 0 && m_states[v].go(c) == -1) {
            v = m_states[v].link;
            len = m_states[v].len;
        }
        if (const int t = m_states[v].go(c); t != -1) {
            v = t;
            ++len;
        } else {
            v = 0;
            len = 0;
        }
        if (len > best.length) {
            best.length = len;
            best_b_end = i;
            best_state = v;
        }
    }
    if (best.length > 0) {
        const std::size_t a_end = m_states[best_state].first_end;
        const std::size_t a_begin = a_end + 1 - best.length;
        const std::size_t b_begin = best_b_end + 1 - best.length;
        best.in_a = {m_byte_begin[a_begin], m_byte_end[a_end]};
        best.in_b = {norm.byte_begin[b_begin], norm.byte_end[best_b_end]};
    }
    return best;
}

CommonSubstring longest_common_substring(std::string_view a, std::string_view b)
{
    return SubstringMatcher(a).longest_common(b);
}

std::size_t longest_common_substring_len(std::string_view a, std::string_view b)
{
    return longest_common_substring(a, b).length;
}

// ---------------------------------------------------------------------------

namespace {

/// Sparse tf-idf vector sorted by term id.
using TermVector = std::vector<std::pair<int, double>>;

double cosine(const TermVector& a, const TermVector& b)
{
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, w] : a) na += w * w;
    for (const auto& [t, w] : b) nb += w * w;
    for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
        if (a[i].first < b[j].first) {
            ++i;
        } else if (b[j].first < a[i].first) {
            ++j;
        } else {
            dot += a[i++].second * b[j++].second;
        }
    }
    return na > 0.0 && nb > 0.0 ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
}

/// Dice coefficient of two sorted, duplicate-free id lists.
double dice(const std::vector<int>& a, const std::vector<int>& b)
{
    if (a.empty() && b.empty()) return 0.0;
    std::size_t common = 0;
    for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++common, ++i, ++j;
        }
    }
    return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

std::vector<int> unique_sorted(std::vector<int> ids)
{
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

/// Sentences, their word tokens and the shared idf table for one pair.
/// Terms are interned to small integers local to the pair.
class PairAlignment {
  public:
    PairAlignment(std::string_view gen, std::string_view suffix)
        : m_gen(gen), m_suf(suffix), m_gen_sents(split_sentences(gen)), m_suf_sents(split_sentences(suffix))
    {
        std::vector<std::size_t> df;
        auto collect = [&](std::string_view text, const std::vector<CharRange>& sents,
                           std::vector<std::vector<int>>& ids, std::vector<std::vector<int>>& uniq) {
            for (const auto& r : sents) {
                std::vector<int> v;
                for (const auto& w : words(slice(text, r))) {
                    auto [it, inserted] = m_dict.emplace(w, static_cast<int>(m_dict.size()));
                    if (inserted) df.push_back(0);
                    v.push_back(it->second);
                }
                uniq.push_back(unique_sorted(v));
                for (int t : uniq.back()) ++df[static_cast<std::size_t>(t)];
                ids.push_back(std::move(v));
            }
        };
        collect(gen, m_gen_sents, m_gen_ids, m_gen_uniq);
        collect(suffix, m_suf_sents, m_suf_ids, m_suf_uniq);
        const double S = static_cast<double>(m_gen_sents.size() + m_suf_sents.size());
        m_idf.resize(df.size());
        for (std::size_t t = 0; t < df.size(); ++t) {
            m_idf[t] = std::log(1.0 + S / static_cast<double>(df[t]));
        }
    }

    TermVector weigh(std::vector<int> ids) const
    {
        std::sort(ids.begin(), ids.end());
        TermVector v;
        for (std::size_t i = 0; i < ids.size();) {
            std::size_t j = i;
            while (j < ids.size() && ids[j] == ids[i]) ++j;
            v.emplace_back(ids[i], static_cast<double>(j - i) * m_idf[static_cast<std::size_t>(ids[i])]);
            i = j;
        }
        return v;
    }

    /// Ids of a passage's words; words outside both texts' sentences carry no weight.
    std::vector<int> passage_ids(std::string_view text) const
    {
        std::vector<int> out;
        for (const auto& w : words(text)) {
            if (auto it = m_dict.find(w); it != m_dict.end()) out.push_back(it->second);
        }
        return out;
    }

    std::vector<Seed> seeds(const DetectorConfig& cfg) const
    {
        std::vector<TermVector> gv, sv;
        for (const auto& t : m_gen_ids) gv.push_back(weigh(t));
        for (const auto& t : m_suf_ids) sv.push_back(weigh(t));
        std::vector<Seed> out;
        for (std::size_t i = 0; i < gv.size(); ++i) {
            for (std::size_t j = 0; j < sv.size(); ++j) {
                const double c = cosine(gv[i], sv[j]);
                if (c < cfg.seed_cosine_min) continue;
                const double d = dice(m_gen_uniq[i], m_suf_uniq[j]);
                if (d < cfg.seed_dice_min) continue;
                out.push_back({i, j, c, d});
            }
        }
        return out;
    }

    std::vector<AlignmentSpan> extend(const std::vector<Seed>& seeds, const DetectorConfig& cfg) const
    {
        struct Cluster {
            std::size_t gen_lo, gen_hi, suf_lo, suf_hi;
            std::vector<double> cosines;
        };
        auto distance = [](std::size_t x, std::size_t lo, std::size_t hi) -> std::size_t {
            return x < lo ? lo - x : x > hi ? x - hi : 0;
        };
        std::vector<Seed> sorted = seeds;
        std::sort(sorted.begin(), sorted.end(), [](const Seed& a, const Seed& b) {
            return a.gen_sentence != b.gen_sentence ? a.gen_sentence < b.gen_sentence : a.suf_sentence < b.suf_sentence;
        });
        std::vector<Cluster> clusters;
        for (const auto& s : sorted) {
            auto it = std::find_if(clusters.begin(), clusters.end(), [&](const Cluster& c) {
                return distance(s.gen_sentence, c.gen_lo, c.gen_hi) <= cfg.max_gap_sentences &&
                       distance(s.suf_sentence, c.suf_lo, c.suf_hi) <= cfg.max_gap_sentences;
            });
            if (it == clusters.end()) {
                clusters.push_back({s.gen_sentence, s.gen_sentence, s.suf_sentence, s.suf_sentence, {s.cosine}});
                continue;
            }
            it->gen_lo = std::min(it->gen_lo, s.gen_sentence);
            it->gen_hi = std::max(it->gen_hi, s.gen_sentence);
            it->suf_lo = std::min(it->suf_lo, s.suf_sentence);
            it->suf_hi = std::max(it->suf_hi, s.suf_sentence);
            it->cosines.push_back(s.cosine);
        }

        std::vector<AlignmentSpan> out;
        for (auto& c : clusters) {
            const CharRange g{m_gen_sents[c.gen_lo].begin, m_gen_sents[c.gen_hi].end};
            const CharRange s{m_suf_sents[c.suf_lo].begin, m_suf_sents[c.suf_hi].end};
            if (utf8::length(slice(m_gen, g)) < cfg.min_match_chars ||
                utf8::length(slice(m_suf, s)) < cfg.min_match_chars) {
                continue;
            }
            if (cosine(weigh(passage_ids(slice(m_gen, g))), weigh(passage_ids(slice(m_suf, s)))) <
                cfg.passage_cosine_min) {
                continue;
            }
            AlignmentSpan span;
            span.gen_range = g;
            span.suf_range = s;
            span.seed_cosines = std::move(c.cosines);
            out.push_back(std::move(span));
        }
        return out;
    }

  private:
    std::string_view m_gen;
    std::string_view m_suf;
    std::vector<CharRange> m_gen_sents;
    std::vector<CharRange> m_suf_sents;
    std::unordered_map<std::string, int> m_dict;
    std::vector<std::vector<int>> m_gen_ids, m_suf_ids;
    std::vector<std::vector<int>> m_gen_uniq, m_suf_uniq;
    std::vector<double> m_idf;
};

void categorize(AlignmentSpan& span, std::string_view gen, std::string_view suffix, const DetectorConfig& cfg)
{
    const auto g = slice(gen, span.gen_range);
    const auto s = slice(suffix, span.suf_range);
    if (longest_common_substring_len(g, s) >= cfg.min_match_chars) {
        span.category = Category::verbatim;
        return;
    }
    const double lg = static_cast<double>(utf8::length(g));
    const double ls = static_cast<double>(utf8::length(s));
    if (std::min(lg, ls) <= cfg.idea_length_ratio * std::max(lg, ls)) {
        span.category = Category::idea;
        return;
    }
    span.confidence = span.seed_cosines.empty()
                          ? 0.0
                          : std::accumulate(span.seed_cosines.begin(), span.seed_cosines.end(), 0.0) /
                                static_cast<double>(span.seed_cosines.size());
    span.category =
        span.confidence > cfg.paraphrase_confidence_split ? Category::paraphrase_high : Category::paraphrase_low;
}

}  // namespace

std::vector<Seed> find_seeds(std::string_view gen, std::string_view suffix, const DetectorConfig& cfg)
{
    return PairAlignment(gen, suffix).seeds(cfg);
}

std::vector<AlignmentSpan> extend_seeds(std::string_view gen, std::string_view suffix, const std::vector<Seed>& seeds,
                                        const DetectorConfig& cfg)
{
    return PairAlignment(gen, suffix).extend(seeds, cfg);
}

bool DetectionResult::has(Category c) const noexcept
{
    return std::any_of(spans.begin(), spans.end(), [c](const AlignmentSpan& s) { return s.category == c; });
}

std::vector<Category> DetectionResult::categories() const
{
    std::vector<Category> out;
    for (auto c : all_categories) {
        if (has(c)) out.push_back(c);
    }
    return out;
}

DetectionResult classify(const SubstringMatcher& gen_matcher, std::string_view gen, std::string_view suffix,
                         const DetectorConfig& cfg)
{
    DetectionResult result;
    const PairAlignment pair(gen, suffix);
    result.spans = pair.extend(pair.seeds(cfg), cfg);
    for (auto& span : result.spans) {
        categorize(span, gen, suffix, cfg);
    }
    if (!result.has(Category::verbatim)) {
        const auto common = gen_matcher.longest_common(suffix);
        if (common.length >= cfg.min_match_chars) {
            AlignmentSpan probe;
            probe.gen_range = common.in_a;
            probe.suf_range = common.in_b;
            probe.category = Category::verbatim;
            result.spans.push_back(std::move(probe));
        }
    }
    for (const auto& span : result.spans) {
        if (span.category == Category::paraphrase_high || span.category == Category::paraphrase_low) {
            result.confidence = std::max(result.confidence, span.confidence);
        }
    }
    result.matched = !result.spans.empty();
    return result;
}

DetectionResult classify(std::string_view gen, std::string_view suffix, const DetectorConfig& cfg)
{
    return classify(SubstringMatcher(gen), gen, suffix, cfg);
}

Discrimination discriminate(std::string_view gen, const std::vector<std::string_view>& candidates,
                            const DetectorConfig& cfg)
{
    Discrimination out;
    if (candidates.empty()) {
        return out;
    }
    const SubstringMatcher matcher(gen);
    for (const auto& c : candidates) {
        out.results.push_back(classify(matcher, gen, c, cfg));
        out.matched = out.matched || out.results.back().matched;
    }
    return out;
}

}  // namespace fedmem
