#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "diln/errors.hpp"
#include "diln/rng.hpp"

namespace diln {

class Vocabulary {
  public:
    Vocabulary() = default;

    explicit Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
        if (terms_.empty()) throw validate_error("vocabulary: empty");
        std::unordered_set<std::string> seen;
        for (const auto& t : terms_) {
            if (!seen.insert(t).second) throw validate_error("vocabulary: duplicate term '" + t + "'");
        }
    }

    std::size_t size() const { return terms_.size(); }
    const std::string& term(std::size_t v) const { return terms_[v]; }
    const std::vector<std::string>& terms() const { return terms_; }

  private:
    std::vector<std::string> terms_;
};

// Sparse bag of words: unique term indices with positive counts.
struct Document {
    std::vector<std::pair<int, int>> entries;  // (term index, count)
    std::int64_t total = 0;                    // token count, equals sum of counts

    std::size_t unique_terms() const { return entries.size(); }
};

struct Corpus {
    Vocabulary vocabulary;
    std::vector<Document> documents;

    std::size_t num_documents() const { return documents.size(); }
    std::size_t vocab_size() const { return vocabulary.size(); }

    std::int64_t total_tokens() const {
        std::int64_t n = 0;
        for (const auto& d : documents) n += d.total;
        return n;
    }
};

namespace detail {

inline Document parse_document_line(const std::string& line, std::size_t line_no, std::size_t vocab_size) {
    std::istringstream in(line);
    std::int64_t declared = 0;
    if (!(in >> declared)) {
        throw parse_error("docs line " + std::to_string(line_no) + ": missing token count");
    }
    Document doc;
    std::unordered_set<int> seen;
    std::string pair_token;
    while (in >> pair_token) {
        auto colon = pair_token.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == pair_token.size()) {
            throw parse_error("docs line " + std::to_string(line_no) + ": malformed pair '" + pair_token + "'");
        }
        int index = 0;
        int count = 0;
        try {
            std::size_t used = 0;
            index = std::stoi(pair_token.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument("trailing");
            std::string count_str = pair_token.substr(colon + 1);
            count = std::stoi(count_str, &used);
            if (used != count_str.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw parse_error("docs line " + std::to_string(line_no) + ": malformed pair '" + pair_token + "'");
        }
        if (index < 0 || static_cast<std::size_t>(index) >= vocab_size) {
            throw validate_error("docs line " + std::to_string(line_no) + ": term index " +
                                 std::to_string(index) + " outside vocabulary of size " +
                                 std::to_string(vocab_size));
        }
        if (count < 1) {
            throw validate_error("docs line " + std::to_string(line_no) + ": count must be >= 1");
        }
        if (!seen.insert(index).second) {
            throw validate_error("docs line " + std::to_string(line_no) + ": duplicate term index " +
                                 std::to_string(index));
        }
        doc.entries.emplace_back(index, count);
        doc.total += count;
    }
    if (doc.total != declared) {
        throw validate_error("docs line " + std::to_string(line_no) + ": declared N=" +
                             std::to_string(declared) + " != sum of counts " + std::to_string(doc.total));
    }
    if (doc.total < 1) {
        throw validate_error("docs line " + std::to_string(line_no) + ": empty document");
    }
    return doc;
}

}  // namespace detail

inline Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open vocab file '" + path + "'");
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        terms.push_back(line);
    }
    if (terms.empty()) throw validate_error("vocab file '" + path + "' has no terms");
    return Vocabulary(std::move(terms));
}

// Docs file: one document per line, "N idx:count idx:count ...", where N
// is the token total of the line.
inline Corpus load_corpus(const std::string& docs_path, const std::string& vocab_path) {
    Corpus corpus;
    corpus.vocabulary = load_vocabulary(vocab_path);
    std::ifstream in(docs_path);
    if (!in) throw io_error("cannot open docs file '" + docs_path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        corpus.documents.push_back(detail::parse_document_line(line, line_no, corpus.vocab_size()));
    }
    if (corpus.documents.empty()) throw validate_error("docs file '" + docs_path + "' has no documents");
    return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& docs_path, const std::string& vocab_path) {
    {
        std::ofstream out(vocab_path);
        if (!out) throw io_error("cannot write vocab file '" + vocab_path + "'");
        for (const auto& t : corpus.vocabulary.terms()) out << t << '\n';
    }
    std::ofstream out(docs_path);
    if (!out) throw io_error("cannot write docs file '" + docs_path + "'");
    for (const auto& doc : corpus.documents) {
        out << doc.total;
        for (const auto& [index, count] : doc.entries) out << ' ' << index << ':' << count;
        out << '\n';
    }
}

// Deterministic partition into train/test by seeded shuffle of document ids.
inline std::pair<Corpus, Corpus> split_heldout(const Corpus& corpus, std::size_t n_test, std::uint64_t seed) {
    const std::size_t m = corpus.num_documents();
    if (n_test == 0 || n_test >= m) {
        throw domain_error("split: n_test must be in (0, M); got " + std::to_string(n_test) +
                           " with M=" + std::to_string(m));
    }
    std::vector<std::size_t> ids(m);
    for (std::size_t i = 0; i < m; ++i) ids[i] = i;
    Rng rng(seed);
    rng.shuffle(ids);
    std::vector<bool> is_test(m, false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[ids[i]] = true;

    Corpus train{corpus.vocabulary, {}};
    Corpus test{corpus.vocabulary, {}};
    for (std::size_t i = 0; i < m; ++i) {
        (is_test[i] ? test : train).documents.push_back(corpus.documents[i]);
    }
    return {std::move(train), std::move(test)};
}

// Token-level halving: expand counts to a token multiset, shuffle, cut at
// ceil(N/2), re-aggregate. Returns nullopt when the document has fewer
// than two tokens and cannot be halved.
inline std::optional<std::pair<Document, Document>> split_document_halves(const Document& doc,
                                                                          std::uint64_t seed) {
    if (doc.total < 2) return std::nullopt;
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(doc.total));
    for (const auto& [index, count] : doc.entries) {
        for (int i = 0; i < count; ++i) tokens.push_back(index);
    }
    Rng rng(seed);
    rng.shuffle(tokens);
    const std::size_t cut = (tokens.size() + 1) / 2;

    auto aggregate = [](std::vector<int> part) {
        std::sort(part.begin(), part.end());
        Document d;
        for (std::size_t i = 0; i < part.size();) {
            std::size_t j = i;
            while (j < part.size() && part[j] == part[i]) ++j;
            d.entries.emplace_back(part[i], static_cast<int>(j - i));
            d.total += static_cast<std::int64_t>(j - i);
            i = j;
        }
        return d;
    };
    return std::make_pair(aggregate({tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut)}),
                          aggregate({tokens.begin() + static_cast<std::ptrdiff_t>(cut), tokens.end()}));
}

}  // namespace diln
