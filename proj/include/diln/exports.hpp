#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/model.hpp"

namespace diln {

// Empirical topic usage: total phi mass assigned to each topic, read off
// the Dirichlet parameters as sum_v (gamma_kv - gamma0).
inline VectorXd topic_usage(const GlobalState& state, double gamma0) {
    VectorXd usage = state.gamma.rowwise().sum();
    usage.array() -= gamma0 * static_cast<double>(state.vocab_size());
    return usage.cwiseMax(0.0);
}

inline std::vector<int> rank_topics_by_usage(const GlobalState& state, double gamma0) {
    const VectorXd usage = topic_usage(state, gamma0);
    std::vector<int> order(static_cast<std::size_t>(state.truncation()));
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return usage[a] > usage[b]; });
    return order;
}

struct TopicRow {
    int topic = 0;      // original topic index
    double usage = 0.0;
    std::vector<int> top_words;  // vocabulary indices, most probable first
};

// Top-n words per topic by gamma_{k,v}, ties broken by vocabulary index;
// topics ordered by usage.
inline std::vector<TopicRow> top_topic_words(const GlobalState& state, double gamma0, int n_words) {
    const int V = state.vocab_size();
    n_words = std::min(n_words, V);
    if (n_words < 1) throw domain_error("export-topics: n_words must be >= 1");
    const VectorXd usage = topic_usage(state, gamma0);

    std::vector<TopicRow> rows;
    std::vector<int> word_order(static_cast<std::size_t>(V));
    for (int topic : rank_topics_by_usage(state, gamma0)) {
        for (std::size_t v = 0; v < word_order.size(); ++v) word_order[v] = static_cast<int>(v);
        std::stable_sort(word_order.begin(), word_order.end(), [&](int a, int b) {
            return state.gamma(topic, a) > state.gamma(topic, b);
        });
        TopicRow row;
        row.topic = topic;
        row.usage = usage[topic];
        row.top_words.assign(word_order.begin(), word_order.begin() + n_words);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void export_topics(const GlobalState& state, double gamma0, const Vocabulary& vocab,
                          int n_words, const std::string& path) {
    const auto rows = top_topic_words(state, gamma0, n_words);
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write topics file '" + path + "'");
    std::fprintf(f, "rank\ttopic\tusage\twords\n");
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::fprintf(f, "%zu\t%d\t%.6g\t", r + 1, rows[r].topic, rows[r].usage);
        for (std::size_t i = 0; i < rows[r].top_words.size(); ++i) {
            std::fprintf(f, "%s%s", i ? " " : "",
                         vocab.term(static_cast<std::size_t>(rows[r].top_words[i])).c_str());
        }
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

// Cosine similarity of the topic locations; unit diagonal, entries in
// [-1, 1]. Zero-norm locations report 0 with a warning.
inline MatrixXd correlation_matrix(const GlobalState& state) {
    if (state.mode == Mode::HDP) {
        throw mode_error("export-correlations: HDP checkpoints carry no topic locations");
    }
    const Eigen::Index T = state.truncation();
    VectorXd norms(T);
    for (Eigen::Index k = 0; k < T; ++k) {
        norms[k] = state.ell.row(k).norm();
        if (norms[k] == 0.0) {
            std::fprintf(stderr, "warning: topic %ld has a zero-norm location\n", static_cast<long>(k));
        }
    }
    MatrixXd corr = MatrixXd::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
        if (norms[i] == 0.0) continue;
        corr(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < T; ++j) {
            if (norms[j] == 0.0) continue;
            const double value =
                std::clamp(state.ell.row(i).dot(state.ell.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
            corr(i, j) = value;
            corr(j, i) = value;
        }
    }
    return corr;
}

inline void export_correlations(const GlobalState& state, const std::string& path) {
    const MatrixXd corr = correlation_matrix(state);
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write correlations file '" + path + "'");
    std::fprintf(f, "topic");
    for (Eigen::Index k = 0; k < corr.cols(); ++k) std::fprintf(f, "\t%ld", static_cast<long>(k));
    std::fprintf(f, "\n");
    for (Eigen::Index i = 0; i < corr.rows(); ++i) {
        std::fprintf(f, "%ld", static_cast<long>(i));
        for (Eigen::Index j = 0; j < corr.cols(); ++j) std::fprintf(f, "\t%.10g", corr(i, j));
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

struct SimilarDoc {
    std::size_t doc = 0;
    double cosine = 0.0;
};

// Documents ranked by cosine similarity of their locations to the query
// document, query excluded, ties broken by document index.
inline std::vector<SimilarDoc> rank_similar_documents(std::span<const DocumentState> states,
                                                      std::size_t query, std::size_t top_n,
                                                      Mode mode) {
    if (mode == Mode::HDP) {
        throw mode_error("export-doc-similarity: HDP runs carry no document locations");
    }
    if (query >= states.size()) throw domain_error("doc-similarity: query index out of range");
    const VectorXd& q = states[query].u_hat;
    const double qn = q.norm();
    std::vector<SimilarDoc> ranked;
    for (std::size_t m = 0; m < states.size(); ++m) {
        if (m == query) continue;
        const double n = states[m].u_hat.norm();
        const double cosine = (qn == 0.0 || n == 0.0) ? 0.0 : q.dot(states[m].u_hat) / (qn * n);
        ranked.push_back({m, cosine});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const SimilarDoc& a, const SimilarDoc& b) {
        if (a.cosine != b.cosine) return a.cosine > b.cosine;
        return a.doc < b.doc;
    });
    if (ranked.size() > top_n) ranked.resize(top_n);
    return ranked;
}

inline void export_doc_similarity(std::span<const DocumentState> states, std::size_t query,
                                  std::size_t top_n, Mode mode, const std::string& path) {
    const auto ranked = rank_similar_documents(states, query, top_n, mode);
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write similarity file '" + path + "'");
    std::fprintf(f, "rank\tdoc\tcosine\n");
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        std::fprintf(f, "%zu\t%zu\t%.10g\n", r + 1, ranked[r].doc, ranked[r].cosine);
    }
    std::fclose(f);
}

}  // namespace diln
