// Small random model/document builders shared by the unit tests.
#pragma once

#include "diln/corpus.hpp"
#include "diln/model.hpp"
#include "diln/rng.hpp"
#include "diln/vb_core.hpp"

namespace testutil {

using namespace diln;

inline GlobalState random_global(int T, int V, int d, Mode mode, Rng& rng) {
    GlobalState g;
    g.mode = mode;
    g.gamma.resize(T, V);
    for (int k = 0; k < T; ++k) {
        for (int v = 0; v < V; ++v) g.gamma(k, v) = 0.2 + 5.0 * rng.uniform();
    }
    g.v_stick.resize(T);
    for (int k = 0; k + 1 < T; ++k) g.v_stick[k] = 0.05 + 0.9 * rng.uniform();
    g.v_stick[T - 1] = 1.0;
    g.ell.resize(T, d);
    for (int k = 0; k < T; ++k) {
        for (int j = 0; j < d; ++j) g.ell(k, j) = rng.normal(0.0, 0.4);
    }
    g.alpha = 0.5 + 2.0 * rng.uniform();
    g.beta = 0.5 + 2.0 * rng.uniform();
    return g;
}

inline Document random_document(int V, Rng& rng, int max_unique = 5) {
    Document doc;
    const int n_unique = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(max_unique)));
    std::vector<int> terms(static_cast<std::size_t>(V));
    for (int v = 0; v < V; ++v) terms[static_cast<std::size_t>(v)] = v;
    rng.shuffle(terms);
    for (int u = 0; u < n_unique && u < V; ++u) {
        const int count = 1 + static_cast<int>(rng.uniform_index(4));
        doc.entries.emplace_back(terms[static_cast<std::size_t>(u)], count);
        doc.total += count;
    }
    std::sort(doc.entries.begin(), doc.entries.end());
    return doc;
}

inline DocumentState random_doc_state(const Document& doc, const GlobalState& g, Rng& rng) {
    DocumentState state;
    const auto T = static_cast<Eigen::Index>(g.truncation());
    state.phi.resize(static_cast<Eigen::Index>(doc.entries.size()), T);
    for (Eigen::Index u = 0; u < state.phi.rows(); ++u) {
        double sum = 0.0;
        for (Eigen::Index k = 0; k < T; ++k) {
            state.phi(u, k) = 0.05 + rng.uniform();
            sum += state.phi(u, k);
        }
        state.phi.row(u) /= sum;
    }
    state.a.resize(T);
    state.b.resize(T);
    for (Eigen::Index k = 0; k < T; ++k) {
        state.a[k] = 0.5 + 3.0 * rng.uniform();
        state.b[k] = 0.5 + 3.0 * rng.uniform();
    }
    state.xi = (state.a.array() / state.b.array()).sum();
    state.u_hat.resize(g.latent_dim());
    for (Eigen::Index j = 0; j < state.u_hat.size(); ++j) state.u_hat[j] = rng.normal(0.0, 0.5);
    if (g.mode == Mode::HDP) state.u_hat.setZero();
    return state;
}

inline Corpus random_corpus(int M, int V, Rng& rng, int max_unique = 5) {
    Corpus corpus;
    std::vector<std::string> terms;
    for (int v = 0; v < V; ++v) terms.push_back("t" + std::to_string(v));
    corpus.vocabulary = Vocabulary(terms);
    for (int m = 0; m < M; ++m) corpus.documents.push_back(random_document(V, rng, max_unique));
    return corpus;
}

}  // namespace testutil
