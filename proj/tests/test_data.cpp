#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pftadb/data.hpp"

using namespace pftadb;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("pftadb_data_" + name)).string();
}

std::string write_file(const std::string& name, const std::string& body) {
    const std::string path = temp_path(name);
    std::ofstream(path) << body;
    return path;
}

}  // namespace

TEST(Tsv, RoundTrip) {
    const std::vector<LabeledUtterance> rows{{"Book a table for two.", "book"}, {"what's the weather", "weather"}};
    const std::string path = temp_path("rt.tsv");
    write_tsv(path, rows);
    EXPECT_EQ(load_tsv(path), rows);
    std::filesystem::remove(path);
}

TEST(Tsv, AcceptsCrlf) {
    const std::string path = write_file("crlf.tsv", "hello there\tgreet\r\nbye\tleave\r\n");
    const auto rows = load_tsv(path);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].label, "greet");
    EXPECT_EQ(rows[1].label, "leave");
    std::filesystem::remove(path);
}

TEST(Tsv, ParseErrorsNameTheLine) {
    for (const char* body : {"ok\tfine\nno tab here\n", "ok\tfine\ttoo\tmany\n", "ok\tfine\n\tempty\n"}) {
        const std::string path = write_file("bad.tsv", body);
        try {
            load_tsv(path);
            FAIL() << body;
        } catch (const ParseError& e) {
            EXPECT_NE(std::string(e.what()).find(":"), std::string::npos);
        }
        std::filesystem::remove(path);
    }
    EXPECT_THROW(load_tsv(temp_path("missing.tsv")), IoError);
    EXPECT_THROW(write_tsv(temp_path("w.tsv"), {{"a\tb", "c"}}), DataError);
}

TEST(Split, KnownClassCount) {
    EXPECT_EQ(known_class_count(0.5, 12), 6u);
    EXPECT_EQ(known_class_count(0.25, 150), 38u);
    EXPECT_EQ(known_class_count(0.75, 77), 58u);
    EXPECT_EQ(known_class_count(1.0, 9), 9u);
    bool clamped = false;
    EXPECT_EQ(known_class_count(0.01, 10, &clamped), 1u);
    EXPECT_TRUE(clamped);
}

TEST(Split, Properties) {
    const auto corpus = synth_corpus(10, 30, 1);
    for (double kir : {0.25, 0.5, 0.75}) {
        const Split s = make_split(corpus, SplitSpec{kir, 3});
        const std::size_t n_known = known_class_count(kir, 10);
        EXPECT_EQ(s.known_classes.size(), n_known);
        EXPECT_EQ(s.open_classes.size(), 10 - n_known);
        EXPECT_EQ(s.open_label(), static_cast<int>(n_known));

        std::set<std::string> known(s.known_classes.begin(), s.known_classes.end());
        std::set<std::size_t> seen;
        std::size_t open_in_test = 0;
        for (const auto* part : {&s.train, &s.dev, &s.test}) {
            EXPECT_TRUE(std::is_sorted(part->begin(), part->end(),
                                       [](const auto& a, const auto& b) { return a.index < b.index; }));
            for (const auto& e : *part) {
                EXPECT_TRUE(seen.insert(e.index).second) << "sample in two partitions";
                EXPECT_EQ(e.text, corpus[e.index].text);
                if (known.count(e.intent)) {
                    EXPECT_EQ(s.known_classes[static_cast<std::size_t>(e.label)], e.intent);
                } else {
                    EXPECT_EQ(part, &s.test) << "open sample outside test";
                    EXPECT_EQ(e.label, s.open_label());
                    ++open_in_test;
                }
            }
        }
        EXPECT_EQ(seen.size(), corpus.size());
        EXPECT_EQ(open_in_test, 30 * (10 - n_known));
        // per known class: 6 test, 2 dev, 22 train
        EXPECT_EQ(s.train.size(), 22 * n_known);
        EXPECT_EQ(s.dev.size(), 2 * n_known);
        EXPECT_EQ(s.test.size(), 6 * n_known + open_in_test);
    }
}

TEST(Split, DeterministicPerSeed) {
    const auto corpus = synth_corpus(8, 20, 2);
    const Split a = make_split(corpus, SplitSpec{0.5, 11}), b = make_split(corpus, SplitSpec{0.5, 11});
    EXPECT_EQ(a.known_classes, b.known_classes);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].index, b.train[i].index);
    bool differs = false;
    for (std::uint64_t seed = 12; seed < 20 && !differs; ++seed) {
        differs = make_split(corpus, SplitSpec{0.5, seed}).known_classes != a.known_classes;
    }
    EXPECT_TRUE(differs);
}

TEST(Split, FullRatioHasNoOpenClass) {
    const Split s = make_split(synth_corpus(4, 10, 0), SplitSpec{1.0, 0});
    EXPECT_TRUE(s.open_classes.empty());
    for (const auto& e : s.test) EXPECT_LT(e.label, 4);
}

TEST(Split, TinyRatioWarns) {
    const Split s = make_split(synth_corpus(4, 10, 0), SplitSpec{0.05, 0});
    EXPECT_EQ(s.known_classes.size(), 1u);
    EXPECT_EQ(s.warnings.size(), 1u);
}

TEST(Split, Errors) {
    EXPECT_THROW(make_split(synth_corpus(4, 5, 0), SplitSpec{0.0, 0}), ConfigError);
    EXPECT_THROW(make_split(synth_corpus(4, 5, 0), SplitSpec{1.5, 0}), ConfigError);
    EXPECT_THROW(make_split(synth_corpus(4, 5, 0), SplitSpec{0.5, 0, 0.5, 0.1, 0.1}), ConfigError);
    EXPECT_THROW(make_split({{"a", "x"}, {"b", "x"}}, SplitSpec{}), DataError);
}

TEST(Tokenize, WordsAndSpecialTokens) {
    EXPECT_EQ(split_words("Hello, WORLD!  it's"), (std::vector<std::string>{"hello", "world", "it", "s"}));
    const Vocabulary v = Vocabulary::build({"book a table", "a flight"});
    EXPECT_EQ(v.size(), 7u);
    EXPECT_EQ(v.id("book"), 3u);
    EXPECT_EQ(v.id("flight"), 6u);
    EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);

    const TokenSequence t = tokenize("Book the flight", v, 6);
    EXPECT_EQ(t.ids, (std::vector<std::size_t>{1, 3, 2, 6, 0, 0}));
    EXPECT_EQ(t.mask, (Mask{1, 1, 1, 1, 0, 0}));

    const TokenSequence cut = tokenize("a a a a a", v, 3);
    EXPECT_EQ(cut.ids, (std::vector<std::size_t>{1, 4, 4}));
    EXPECT_EQ(tokenize("a", v, 4, false).ids.size(), 2u);
    EXPECT_THROW(tokenize("a", v, 0), LengthError);
}

TEST(Tokenize, EncodeExamplesKeepsLabelsAndIds) {
    const Vocabulary v = Vocabulary::build({"x y"});
    const auto enc = encode_examples({{7, "x y", "i", 1}, {9, "y", "j", 2}}, v, 4);
    ASSERT_EQ(enc.size(), 2u);
    EXPECT_EQ(enc[0].id, "u7");
    EXPECT_EQ(enc[1].label, 2);
    EXPECT_EQ(enc[1].tokens.ids, (std::vector<std::size_t>{1, 4, 0, 0}));
}

TEST(Vocab, SaveLoadRoundTrip) {
    const Vocabulary v = Vocabulary::build({"alpha beta", "gamma alpha"});
    const std::string path = temp_path("vocab.txt");
    v.save(path);
    const Vocabulary w = Vocabulary::load(path);
    EXPECT_EQ(w.tokens(), v.tokens());
    std::ofstream(path) << "foo\nbar\n";
    EXPECT_THROW(Vocabulary::load(path), ParseError);
    std::filesystem::remove(path);
}

TEST(Synth, ShapeLabelsAndDeterminism) {
    const auto a = synth_corpus(12, 60, 0);
    EXPECT_EQ(a.size(), 720u);
    std::set<std::string> labels;
    for (const auto& u : a) labels.insert(u.label);
    EXPECT_EQ(labels.size(), 12u);
    EXPECT_EQ(*labels.begin(), "intent_00");
    EXPECT_EQ(a, synth_corpus(12, 60, 0));
    EXPECT_NE(a, synth_corpus(12, 60, 1));
    EXPECT_THROW(synth_corpus(1, 5, 0), ConfigError);
}

TEST(Synth, KeywordPoolsDisjoint) {
    std::set<std::string> pool;
    for (std::size_t k = 0; k < 50 * kSynthKeywordsPerIntent; ++k) EXPECT_TRUE(pool.insert(detail::synth_keyword(k)).second);
    for (const auto& w : detail::filler_words()) EXPECT_EQ(pool.count(w), 0u) << w;
}

TEST(Synth, KeywordMatchOracleLabelsEverySample) {
    const auto corpus = synth_corpus(12, 60, 4);
    for (const auto& u : corpus) {
        std::set<std::size_t> owners;
        for (const auto& w : split_words(u.text)) {
            for (std::size_t k = 0; k < 12 * kSynthKeywordsPerIntent; ++k)
                if (w == detail::synth_keyword(k)) owners.insert(k / kSynthKeywordsPerIntent);
        }
        ASSERT_EQ(owners.size(), 1u) << u.text;
        EXPECT_EQ(synth_intent_name(*owners.begin()), u.label);
    }
}
