#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "diln/corpus.hpp"
#include "diln/rng.hpp"

using namespace diln;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / fs::path("diln_corpus_test");
        fs::create_directories(path);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

Corpus corpus_from_lines(const std::string& docs, const std::string& vocab) {
    TempDir dir;
    write_file(dir.file("docs.txt"), docs);
    write_file(dir.file("vocab.txt"), vocab);
    return load_corpus(dir.file("docs.txt"), dir.file("vocab.txt"));
}

Document make_doc(std::vector<std::pair<int, int>> entries) {
    Document d;
    d.entries = std::move(entries);
    for (const auto& [v, c] : d.entries) d.total += c;
    return d;
}

}  // namespace

TEST_CASE("load_corpus parses the sparse line format") {
    Corpus corpus = corpus_from_lines("3 0:2 1:1\n", "a\nb\n");
    REQUIRE(corpus.num_documents() == 1);
    REQUIRE(corpus.vocab_size() == 2);
    const Document& doc = corpus.documents[0];
    REQUIRE(doc.total == 3);
    REQUIRE(doc.entries == std::vector<std::pair<int, int>>{{0, 2}, {1, 1}});
}

TEST_CASE("load_corpus accepts a missing trailing newline") {
    Corpus corpus = corpus_from_lines("2 1:2", "a\nb\n");
    REQUIRE(corpus.documents[0].total == 2);
}

TEST_CASE("load_corpus rejects malformed and inconsistent lines") {
    REQUIRE_THROWS_AS(corpus_from_lines("2 0:1 0:1\n", "a\nb\n"), Error);  // duplicate index
    REQUIRE_THROWS_AS(corpus_from_lines("5 0:2 1:1\n", "a\nb\n"), Error);  // declared N mismatch
    REQUIRE_THROWS_AS(corpus_from_lines("1 7:1\n", "a\nb\n"), Error);      // index out of range
    REQUIRE_THROWS_AS(corpus_from_lines("1 0:x\n", "a\nb\n"), Error);      // malformed pair
    REQUIRE_THROWS_AS(corpus_from_lines("", "a\nb\n"), Error);             // empty corpus
    REQUIRE_THROWS_AS(corpus_from_lines("1 0:1\n", "a\na\n"), Error);      // duplicate vocab term

    try {
        corpus_from_lines("1 0:1\n3 0:1 1:1\n", "a\nb\n");
        FAIL("expected error");
    } catch (const Error& e) {
        REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("corpus round-trips through save and load") {
    Rng rng(33);
    Corpus corpus;
    std::vector<std::string> terms;
    for (int v = 0; v < 17; ++v) terms.push_back("t" + std::to_string(v));
    corpus.vocabulary = Vocabulary(terms);
    for (int m = 0; m < 25; ++m) {
        Document doc;
        for (int v = 0; v < 17; ++v) {
            if (rng.uniform() < 0.3) {
                const int count = 1 + static_cast<int>(rng.uniform_index(5));
                doc.entries.emplace_back(v, count);
                doc.total += count;
            }
        }
        if (doc.entries.empty()) {
            doc.entries.emplace_back(0, 1);
            doc.total = 1;
        }
        corpus.documents.push_back(doc);
    }

    TempDir dir;
    save_corpus(corpus, dir.file("rt_docs.txt"), dir.file("rt_vocab.txt"));
    Corpus reloaded = load_corpus(dir.file("rt_docs.txt"), dir.file("rt_vocab.txt"));
    REQUIRE(reloaded.vocabulary.terms() == corpus.vocabulary.terms());
    REQUIRE(reloaded.num_documents() == corpus.num_documents());
    for (std::size_t m = 0; m < corpus.num_documents(); ++m) {
        REQUIRE(reloaded.documents[m].entries == corpus.documents[m].entries);
        REQUIRE(reloaded.documents[m].total == corpus.documents[m].total);
    }
}

TEST_CASE("split_heldout partitions deterministically") {
    Corpus corpus;
    corpus.vocabulary = Vocabulary({"a", "b"});
    for (int m = 0; m < 10; ++m) corpus.documents.push_back(make_doc({{0, m + 1}}));

    auto [train, test] = split_heldout(corpus, 2, 1);
    REQUIRE(train.num_documents() == 8);
    REQUIRE(test.num_documents() == 2);

    // disjoint: every document accounted for exactly once (totals are unique ids here)
    std::vector<std::int64_t> totals;
    for (const auto& d : train.documents) totals.push_back(d.total);
    for (const auto& d : test.documents) totals.push_back(d.total);
    std::sort(totals.begin(), totals.end());
    for (int m = 0; m < 10; ++m) REQUIRE(totals[static_cast<std::size_t>(m)] == m + 1);

    auto [train2, test2] = split_heldout(corpus, 2, 1);
    for (std::size_t m = 0; m < test.num_documents(); ++m) {
        REQUIRE(test2.documents[m].total == test.documents[m].total);
    }

    REQUIRE_THROWS_AS(split_heldout(corpus, 10, 1), Error);
    REQUIRE_THROWS_AS(split_heldout(corpus, 0, 1), Error);
}

TEST_CASE("split_document_halves balances and conserves counts") {
    Document doc = make_doc({{0, 2}, {1, 2}});
    auto halves = split_document_halves(doc, 5);
    REQUIRE(halves);
    REQUIRE(halves->first.total == 2);
    REQUIRE(halves->second.total == 2);

    auto rerun = split_document_halves(doc, 5);
    REQUIRE(rerun->first.entries == halves->first.entries);
    REQUIRE(rerun->second.entries == halves->second.entries);

    REQUIRE_FALSE(split_document_halves(make_doc({{0, 1}}), 5));

    // property: per-term counts are conserved for random documents and seeds
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        Document d;
        for (int v = 0; v < 8; ++v) {
            if (rng.uniform() < 0.5) {
                const int count = 1 + static_cast<int>(rng.uniform_index(6));
                d.entries.emplace_back(v, count);
                d.total += count;
            }
        }
        if (d.total < 2) continue;
        auto split = split_document_halves(d, 1000 + static_cast<std::uint64_t>(trial));
        REQUIRE(split);
        REQUIRE(std::abs(split->first.total - split->second.total) <= 1);
        std::map<int, int> combined;
        for (const auto& [v, c] : split->first.entries) combined[v] += c;
        for (const auto& [v, c] : split->second.entries) combined[v] += c;
        for (const auto& [v, c] : d.entries) {
            REQUIRE(combined[v] == c);
            combined.erase(v);
        }
        REQUIRE(combined.empty());
    }
}
