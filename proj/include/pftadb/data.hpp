#ifndef PFTADB_DATA_HPP
#define PFTADB_DATA_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pftadb/encoder.hpp"
#include "pftadb/error.hpp"
#include "pftadb/rng.hpp"

namespace pftadb {

struct LabeledUtterance {
    std::string text;
    std::string label;

    friend bool operator==(const LabeledUtterance&, const LabeledUtterance&) = default;
};

/// One record per line: text, a single TAB, label. No header.
inline std::vector<LabeledUtterance> load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<LabeledUtterance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected exactly one TAB separating text and label");
        }
        LabeledUtterance u{line.substr(0, tab), line.substr(tab + 1)};
        if (u.text.empty() || u.label.empty()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty text or label");
        }
        out.push_back(std::move(u));
    }
    return out;
}

inline void write_tsv(const std::string& path, const std::vector<LabeledUtterance>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& r : rows) {
        if (r.text.find_first_of("\t\n") != std::string::npos || r.label.find_first_of("\t\n") != std::string::npos) {
            throw DataError("utterance or label contains a TAB or newline: " + r.text);
        }
        out << r.text << '\t' << r.label << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Known-intent split
// ---------------------------------------------------------------------------

struct SplitSpec {
    double known_intent_ratio = 0.5;
    std::uint64_t seed = 0;
    double train_fraction = 0.72;
    double dev_fraction = 0.08;
    double test_fraction = 0.20;

    void validate() const {
        if (!(known_intent_ratio > 0.0 && known_intent_ratio <= 1.0)) {
            throw ConfigError("known intent ratio must lie in (0, 1]");
        }
        if (train_fraction <= 0.0 || dev_fraction < 0.0 || test_fraction < 0.0) {
            throw ConfigError("split fractions must be non-negative with a positive train share");
        }
        if (std::abs(train_fraction + dev_fraction + test_fraction - 1.0) > 1e-9) {
            throw ConfigError("split fractions must sum to 1");
        }
    }
};

struct SplitExample {
    std::size_t index = 0;  // position in the input corpus
    std::string text;
    std::string intent;     // original label
    int label = 0;          // known class id, or the open id (= number of known classes)
};

struct Split {
    std::vector<SplitExample> train;
    std::vector<SplitExample> dev;
    std::vector<SplitExample> test;
    std::vector<std::string> known_classes;  // label id -> name
    std::vector<std::string> open_classes;
    std::vector<std::string> warnings;

    int open_label() const { return static_cast<int>(known_classes.size()); }
};

/// Number of known classes: round-to-nearest of ratio * classes, at least 1.
inline std::size_t known_class_count(double ratio, std::size_t num_classes, bool* clamped = nullptr) {
    auto n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(num_classes)));
    if (clamped) *clamped = n == 0;
    return std::clamp<std::size_t>(n, 1, num_classes);
}

/// Draws the known classes uniformly and partitions the corpus.
///
/// Known-class samples are split per class into train/dev/test by the requested
/// fractions. Every open-class sample goes to test with the open label, so
/// train and dev never see an open sample and no sample is dropped.
inline Split make_split(const std::vector<LabeledUtterance>& data, const SplitSpec& spec) {
    spec.validate();
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
    if (by_class.size() < 2) throw DataError("splitting needs at least two distinct classes");

    Split split;
    bool clamped = false;
    const std::size_t n_known = known_class_count(spec.known_intent_ratio, by_class.size(), &clamped);
    if (clamped) {
        split.warnings.push_back("known intent ratio " + std::to_string(spec.known_intent_ratio) +
                                 " selects no class; using one known class");
    }

    Rng rng(spec.seed);
    std::vector<std::string> classes;
    for (const auto& [name, _] : by_class) classes.push_back(name);
    rng.shuffle(classes);
    split.known_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_known));
    split.open_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(n_known), classes.end());
    std::sort(split.known_classes.begin(), split.known_classes.end());
    std::sort(split.open_classes.begin(), split.open_classes.end());

    const int open = split.open_label();
    auto make = [&data](std::size_t i, int label) { return SplitExample{i, data[i].text, data[i].label, label}; };

    const double pool = spec.train_fraction + spec.dev_fraction;
    for (std::size_t k = 0; k < split.known_classes.size(); ++k) {
        std::vector<std::size_t> idx = by_class[split.known_classes[k]];
        rng.shuffle(idx);
        const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(idx.size())));
        const std::size_t rest = idx.size() - std::min(n_test, idx.size());
        const auto n_dev = static_cast<std::size_t>(std::llround(spec.dev_fraction / pool * static_cast<double>(rest)));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            auto& dst = j < n_test ? split.test : (j < n_test + n_dev ? split.dev : split.train);
            dst.push_back(make(idx[j], static_cast<int>(k)));
        }
    }
    for (const std::string& name : split.open_classes) {
        for (std::size_t i : by_class[name]) split.test.push_back(make(i, open));
    }
    auto by_index = [](const SplitExample& a, const SplitExample& b) { return a.index < b.index; };
    std::sort(split.train.begin(), split.train.end(), by_index);
    std::sort(split.dev.begin(), split.dev.end(), by_index);
    std::sort(split.test.begin(), split.test.end(), by_index);
    return split;
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

/// Lowercased words; ASCII whitespace and punctuation separate, other bytes are kept.
inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (c < 0x80 && !std::isalnum(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kCls = 1;
    static constexpr std::size_t kUnk = 2;

    Vocabulary() : tokens_{"[PAD]", "[CLS]", "[UNK]"} {
        for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], i);
    }

    /// Ids in order of first appearance.
    static Vocabulary build(const std::vector<std::string>& texts) {
        Vocabulary v;
        for (const auto& t : texts)
            for (const auto& w : split_words(t)) v.add(w);
        return v;
    }

    std::size_t add(const std::string& token) {
        auto [it, inserted] = ids_.emplace(token, tokens_.size());
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    std::size_t id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) != 0; }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open " + path + " for writing");
        for (const auto& t : tokens_) out << t << '\n';
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path);
        Vocabulary v;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            if (n++ < 3) {
                if (line != v.tokens_[n - 1]) throw ParseError(path + ": reserved tokens missing");
                continue;
            }
            v.add(line);
        }
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

/// [CLS] followed by word ids (unknown words map to [UNK]), truncated to
/// max_len and, when `pad` is set, padded to max_len with masked [PAD].
inline TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, std::size_t max_len, bool pad = true) {
    if (max_len == 0) throw LengthError("max_len must be positive");
    TokenSequence seq;
    seq.ids.push_back(Vocabulary::kCls);
    for (const auto& w : split_words(text)) {
        if (seq.ids.size() == max_len) break;
        seq.ids.push_back(vocab.id(w));
    }
    seq.mask.assign(seq.ids.size(), 1);
    if (pad) {
        seq.ids.resize(max_len, Vocabulary::kPad);
        seq.mask.resize(max_len, 0);
    }
    return seq;
}

struct EncodedExample {
    std::string id;
    TokenSequence tokens;
    int label = 0;
};

inline std::vector<EncodedExample> encode_examples(const std::vector<SplitExample>& rows, const Vocabulary& vocab,
                                                   std::size_t max_len) {
    std::vector<EncodedExample> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back({"u" + std::to_string(r.index), tokenize(r.text, vocab, max_len), r.label});
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "please", "can",   "you",   "i",     "want",  "to",    "my",    "the",  "help", "with",
        "about",  "need",  "tell",  "me",    "how",   "do",    "a",     "for",  "some", "information",
        "would",  "like",  "know",  "now",   "today", "again", "this",  "that", "is",   "it",
        "check",  "could", "there", "what",  "where", "when",  "still", "just", "get",  "our",
    };
    return words;
}

inline std::string synth_keyword(std::size_t k) {
    static const char* syllables[] = {"ba", "ke", "lo", "mi", "nu", "ra", "si", "to", "vu", "ze", "qa", "do",
                                      "fe", "gi", "hu", "jo", "pa", "re", "su", "ti", "wo", "xa", "yo", "zu"};
    constexpr std::size_t s = 24;
    return std::string(syllables[k % s]) + syllables[(k / s) % s] + syllables[(k / (s * s)) % s] + "x";
}

}  // namespace detail

inline constexpr std::size_t kSynthKeywordsPerIntent = 6;

inline std::string synth_intent_name(std::size_t k) {
    const std::string n = std::to_string(k);
    return "intent_" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

/// Template utterances: 3-7 shared filler words with 1-2 keywords from the
/// intent's own pool inserted at random positions. Keyword pools are disjoint
/// across intents and from the filler words.
inline std::vector<LabeledUtterance> synth_corpus(std::size_t num_intents, std::size_t samples_per_intent,
                                                  std::uint64_t seed) {
    if (num_intents < 2) throw ConfigError("synthetic corpus needs at least two intents");
    const auto& fillers = detail::filler_words();
    Rng rng(seed);
    std::vector<LabeledUtterance> out;
    out.reserve(num_intents * samples_per_intent);
    for (std::size_t k = 0; k < num_intents; ++k) {
        const std::string label = synth_intent_name(k);
        for (std::size_t s = 0; s < samples_per_intent; ++s) {
            std::vector<std::string> words;
            const std::size_t n_fill = 3 + rng.index(5);
            for (std::size_t i = 0; i < n_fill; ++i) words.push_back(fillers[rng.index(fillers.size())]);
            const std::size_t n_kw = 1 + rng.index(2);
            for (std::size_t i = 0; i < n_kw; ++i) {
                const std::string kw = detail::synth_keyword(k * kSynthKeywordsPerIntent + rng.index(kSynthKeywordsPerIntent));
                words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)), kw);
            }
            std::string text;
            for (std::size_t i = 0; i < words.size(); ++i) text += (i ? " " : "") + words[i];
            text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
            out.push_back({text + (rng.index(2) ? "?" : "."), label});
        }
    }
    return out;
}

}  // namespace pftadb

#endif  // PFTADB_DATA_HPP
