#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fedmem {

enum class Category : std::uint8_t { verbatim, paraphrase_high, paraphrase_low, idea };

inline constexpr Category all_categories[] = {Category::verbatim, Category::idea, Category::paraphrase_high,
                                              Category::paraphrase_low};

std::string_view to_string(Category category) noexcept;

struct DetectorConfig {
    std::size_t min_match_chars = 50;
    double seed_cosine_min = 0.30;
    double seed_dice_min = 0.30;
    std::size_t max_gap_sentences = 4;
    double passage_cosine_min = 0.34;
    double idea_length_ratio = 0.5;
    double paraphrase_confidence_split = 0.5;

    void validate() const;
};

/// Half-open byte range.
struct CharRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool operator==(const CharRange&) const = default;
};

/// Splits on . ? ! followed by whitespace and on newlines. Sentences with
/// fewer than three word tokens merge into the following sentence; a short
/// trailing sentence merges into the preceding one. Ranges are trimmed.
std::vector<CharRange> split_sentences(std::string_view text);

struct CommonSubstring {
    /// Length in code points after case folding and whitespace collapsing.
    std::size_t length = 0;
    CharRange in_a;
    CharRange in_b;
};

/// Suffix automaton over the normalized code points of one text. Matching
/// another text against it finds the longest common substring in linear time.
class SubstringMatcher {
  public:
    explicit SubstringMatcher(std::string_view text);

    CommonSubstring longest_common(std::string_view other) const;

  private:
    struct State {
        std::size_t len = 0;
        int link = -1;
        std::size_t first_end = 0;
        std::vector<std::pair<char32_t, int>> next;  // sorted by char

        int go(char32_t c) const noexcept;
        void set(char32_t c, int target);
    };

    std::vector<std::size_t> m_byte_begin;
    std::vector<std::size_t> m_byte_end;
    std::vector<State> m_states;
};

CommonSubstring longest_common_substring(std::string_view a, std::string_view b);

/// Case-folded, whitespace-normalized longest common substring length.
std::size_t longest_common_substring_len(std::string_view a, std::string_view b);

struct Seed {
    std::size_t gen_sentence = 0;
    std::size_t suf_sentence = 0;
    double cosine = 0.0;
    double dice = 0.0;
};

/// Sentence pairs passing both the tf-idf cosine and the Dice thresholds.
/// idf = ln(1 + S / df) over the sentences of both texts.
std::vector<Seed> find_seeds(std::string_view gen, std::string_view suffix, const DetectorConfig& cfg);

struct AlignmentSpan {
    CharRange gen_range;
    CharRange suf_range;
    std::vector<double> seed_cosines;
    Category category = Category::verbatim;
    /// Mean seed cosine; meaningful for paraphrase spans only.
    double confidence = 0.0;
};

/// Greedy seed clustering and passage filtering. Categories are not assigned.
std::vector<AlignmentSpan> extend_seeds(std::string_view gen, std::string_view suffix, const std::vector<Seed>& seeds,
                                        const DetectorConfig& cfg);

struct DetectionResult {
    bool matched = false;
    std::vector<AlignmentSpan> spans;
    /// Highest paraphrase confidence among spans, 0 without paraphrase spans.
    double confidence = 0.0;

    bool has(Category c) const noexcept;
    std::vector<Category> categories() const;
};

DetectionResult classify(std::string_view gen, std::string_view suffix, const DetectorConfig& cfg);
DetectionResult classify(const SubstringMatcher& gen_matcher, std::string_view gen, std::string_view suffix,
                         const DetectorConfig& cfg);

struct Discrimination {
    bool matched = false;
    std::vector<DetectionResult> results;
};

/// Matched iff classify matches at least one candidate.
Discrimination discriminate(std::string_view gen, const std::vector<std::string_view>& candidates,
                            const DetectorConfig& cfg);

}  // namespace fedmem
