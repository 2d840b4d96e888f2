#pragma once

// Synthetic corpora and small helpers shared by the unit and acceptance tests.

#include <set>
#include <string>
#include <vector>

#include "fedmem/corpus.hpp"
#include "fedmem/harness.hpp"
#include "fedmem/rng.hpp"

namespace fedmem::synth {

inline std::string random_word(Rng& rng, std::size_t min_len = 3, std::size_t max_len = 8)
{
    static constexpr char letters[] = "abcdefghijklmnopqrstuvwxyz";
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w += letters[rng.below(26)];
    return w;
}

/// `size` fresh words, none of which is already in `taken`; they are added to it.
inline std::vector<std::string> fresh_vocab(Rng& rng, std::size_t size, std::set<std::string>& taken)
{
    std::vector<std::string> out;
    while (out.size() < size) {
        auto w = random_word(rng);
        if (taken.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

inline std::string random_text(Rng& rng, const std::vector<std::string>& vocab, std::size_t sentences,
                               std::size_t min_words = 8, std::size_t max_words = 14)
{
    std::string text;
    for (std::size_t s = 0; s < sentences; ++s) {
        const std::size_t n = min_words + rng.below(max_words - min_words + 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (!text.empty()) text += ' ';
            text += vocab[rng.below(vocab.size())];
        }
        text += '.';
    }
    return text;
}

inline ClientDataset make_client(ClientId id, std::vector<std::string> texts)
{
    ClientDataset c;
    c.client = id;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Sample s;
        char buf[32];
        std::snprintf(buf, sizeof buf, "c%zu-%04zu", id, i);
        s.id = buf;
        s.client = id;
        s.text = std::move(texts[i]);
        c.samples.push_back(std::move(s));
    }
    return c;
}

/// Clients with pairwise disjoint vocabularies, `per_client` samples each.
inline std::vector<ClientDataset> disjoint_clients(std::uint64_t seed, std::size_t num_clients, std::size_t per_client,
                                                   std::size_t vocab_size = 300, std::size_t sentences = 6)
{
    Rng rng(seed);
    std::set<std::string> taken;
    std::vector<ClientDataset> out;
    for (std::size_t c = 0; c < num_clients; ++c) {
        const auto vocab = fresh_vocab(rng, vocab_size, taken);
        std::vector<std::string> texts;
        for (std::size_t i = 0; i < per_client; ++i) texts.push_back(random_text(rng, vocab, sentences));
        out.push_back(make_client(c, std::move(texts)));
    }
    return out;
}

/// The suffix (after `prefix_len` tokens) of the sample.
inline std::string suffix_of(const Sample& s, std::size_t prefix_len)
{
    auto e = split_prefix_suffix(s, prefix_len);
    return e ? e->suffix_text : std::string();
}

/// Three disjoint-vocabulary clients where `copies` samples of client `to`
/// carry client `from`'s suffixes after their own prefix.
inline std::vector<ClientDataset> planted_leak_clients(std::uint64_t seed, std::size_t per_client = 200,
                                                       std::size_t copies = 20, ClientId from = 0, ClientId to = 1,
                                                       std::size_t prefix_len = 30, std::size_t sentences = 6)
{
    auto clients = disjoint_clients(seed, 3, per_client, 300, sentences);
    for (std::size_t i = 0; i < copies; ++i) {
        auto& target = clients[to].samples[i];
        auto own = split_prefix_suffix(target, prefix_len);
        target.text = own->prefix_text + " " + suffix_of(clients[from].samples[i], prefix_len);
    }
    return clients;
}

/// A config small enough for unit tests.
inline AuditConfig small_config()
{
    AuditConfig cfg;
    cfg.n = 200;
    cfg.trials = 1;
    cfg.seed = 7;
    return cfg;
}

}  // namespace fedmem::synth
