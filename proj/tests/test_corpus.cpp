#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fedmem/corpus.hpp"
#include "fedmem/error.hpp"
#include "fedmem/rng.hpp"
#include "support.hpp"

using namespace fedmem;

TEST(Tokenizer, SplitsEdgePunctuationAndLowercases)
{
    EXPECT_EQ(tokenize("Hello, World!"), (std::vector<std::string>{"hello", ",", "world", "!"}));
    EXPECT_EQ(tokenize("  (a)  b.c  "), (std::vector<std::string>{"(", "a", ")", "b.c"}));
    EXPECT_EQ(tokenize("..."), (std::vector<std::string>{".", ".", "."}));
    EXPECT_TRUE(tokenize(" \n\t ").empty());
}

TEST(Tokenizer, OffsetsPointIntoTheText)
{
    const std::string text = "Ab, cd ef.";
    for (const auto& t : tokenize_with_offsets(text)) {
        std::string piece = text.substr(t.begin, t.end - t.begin);
        std::transform(piece.begin(), piece.end(), piece.begin(), [](unsigned char c) { return std::tolower(c); });
        EXPECT_EQ(piece, t.text);
    }
}

TEST(Tokenizer, DetokenizeAttachesPunctuation)
{
    EXPECT_EQ(detokenize({"hello", ",", "world", "!"}), "hello, world!");
    EXPECT_EQ(detokenize({"(", "a", ")", "b"}), "(a) b");
}

TEST(Tokenizer, RoundTripFuzz)
{
    Rng rng(1);
    const std::string alphabet = "abcXYZ019 .,;:!?()[]{}%'\"-\n\t";
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        const std::size_t len = rng.below(60);
        for (std::size_t k = 0; k < len; ++k) s += alphabet[rng.below(alphabet.size())];
        if (i % 10 == 0) s += "été  café";
        const auto tokens = tokenize(s);
        EXPECT_EQ(tokenize(detokenize(tokens)), tokens) << "input: " << s;
    }
}

TEST(Split, PrefixAndSuffix)
{
    Sample s{"x", 0, "one two, three four five", std::nullopt, {}};
    auto e = split_prefix_suffix(s, 3);
    ASSERT_TRUE(e);
    EXPECT_EQ(e->prefix_tokens, (std::vector<std::string>{"one", "two", ","}));
    EXPECT_EQ(e->prefix_text, "one two,");
    EXPECT_EQ(e->suffix_text, "three four five");
    EXPECT_FALSE(split_prefix_suffix(s, 6));
    EXPECT_THROW(split_prefix_suffix(s, 0), Error);
}

TEST(Sample, ClampsSortsAndIsDeterministic)
{
    auto clients = synth::disjoint_clients(3, 1, 50, 40, 4);
    const auto a = sample_eval_set(clients[0], 20, 5, 9);
    const auto b = sample_eval_set(clients[0], 20, 5, 9);
    ASSERT_EQ(a.entries.size(), 20u);
    EXPECT_TRUE(std::is_sorted(a.entries.begin(), a.entries.end(),
                               [](const auto& x, const auto& y) { return x.sample_id < y.sample_id; }));
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(a.entries[i].sample_id, b.entries[i].sample_id);
    EXPECT_EQ(sample_eval_set(clients[0], 4000, 5, 9).entries.size(), 50u);

    try {
        sample_eval_set(clients[0], 10, 10000, 1);
        FAIL() << "expected empty-eval-set";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::empty_eval_set);
    }
}

TEST(Templates, ExactStrings)
{
    Sample s;
    s.id = "q1";
    s.fields = {{"question", "Who?"}, {"context", "Ctx."}, {"answer", "Me."}};
    EXPECT_EQ(apply_template(s, Task::qa), "User: Who?\nCtx.\n\nAssistant: Me.");

    Sample missing;
    missing.id = "m";
    try {
        apply_template(missing, Task::qa);
        FAIL() << "expected missing-field";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::missing_field);
        EXPECT_NE(std::string(e.what()).find("question"), std::string::npos);
    }
    for (auto t : {Task::summarization, Task::dialog, Task::qa, Task::classification}) {
        EXPECT_EQ(parse_task(to_string(t)), t);
    }
}

TEST(Partition, ByGroupRoundRobin)
{
    std::vector<Sample> records;
    for (int i = 0; i < 9; ++i) {
        Sample s{"r" + std::to_string(i), 0, "text " + std::to_string(i), std::nullopt, {}};
        s.fields["group"] = std::string(1, static_cast<char>('c' - i % 3));
        records.push_back(s);
    }
    PartitionConfig cfg;
    cfg.mode = PartitionMode::by_group;
    const auto clients = partition(records, cfg);
    ASSERT_EQ(clients.size(), 3u);
    const std::string expected_group[] = {"a", "b", "c"};
    for (std::size_t c = 0; c < 3; ++c) {
        ASSERT_EQ(clients[c].size(), 3u);
        for (const auto& s : clients[c].samples) {
            EXPECT_EQ(s.fields.at("group"), expected_group[c]);
            EXPECT_EQ(s.client, c);
        }
    }
    cfg.num_clients = 4;
    EXPECT_THROW(partition(records, cfg), Error);
}

TEST(Partition, DirichletIsAPartitionAndDeterministic)
{
    std::vector<Sample> records;
    for (int i = 0; i < 300; ++i) {
        records.push_back({"r" + std::to_string(i), 0, "t", std::string(1, static_cast<char>('a' + i % 4)), {}});
    }
    PartitionConfig cfg;
    cfg.seed = 42;
    const auto a = partition(records, cfg);
    const auto b = partition(records, cfg);
    ASSERT_EQ(a.size(), 3u);
    std::multiset<std::string> seen;
    for (std::size_t c = 0; c < 3; ++c) {
        ASSERT_EQ(a[c].size(), b[c].size());
        for (std::size_t i = 0; i < a[c].size(); ++i) {
            EXPECT_EQ(a[c].samples[i].id, b[c].samples[i].id);
            seen.insert(a[c].samples[i].id);
        }
    }
    EXPECT_EQ(seen.size(), 300u);
    EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 300u);
}

TEST(Partition, DirichletWithoutLabelsKeepsEveryRecord)
{
    std::vector<Sample> records;
    for (int i = 0; i < 50; ++i) records.push_back({"u" + std::to_string(i), 0, "t", std::nullopt, {}});
    PartitionConfig cfg;
    std::size_t total = 0;
    for (const auto& c : partition(records, cfg)) total += c.size();
    EXPECT_EQ(total, 50u);
}

TEST(Partition, ProportionsOnSimplexAndLargestRemainder)
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto p = dirichlet_proportions(3, 5.0, seed);
        double sum = 0.0;
        for (double v : p) {
            EXPECT_GE(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    EXPECT_EQ(largest_remainder({0.5, 0.5}, 3), (std::vector<std::size_t>{2, 1}));
    EXPECT_EQ(largest_remainder({0.2, 0.3, 0.5}, 10), (std::vector<std::size_t>{2, 3, 5}));
}

TEST(Records, JsonlRoundTrip)
{
    std::vector<Sample> in = {{"a", 1, "x \"quoted\"", std::string("L"), {{"abstract", "abs"}}},
                              {"b", 0, "café", std::nullopt, {}}};
    std::stringstream ss;
    write_records(ss, in);
    bool has_client = false;
    const auto out = read_records(ss, &has_client);
    EXPECT_TRUE(has_client);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].text, in[0].text);
    EXPECT_EQ(out[0].label, in[0].label);
    EXPECT_EQ(out[0].fields, in[0].fields);
    EXPECT_EQ(out[1].client, 0u);

    std::stringstream dup("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
    EXPECT_THROW(read_records(dup), Error);
}
