#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/model.hpp"
#include "diln/rng.hpp"
#include "diln/vb_core.hpp"

namespace diln {

struct PredictiveEstimate {
    double log_prob = 0.0;     // ln p(second half | first half)
    std::int64_t n_words = 0;  // tokens in the second half
    int n_samples = 0;
    double std_err = 0.0;      // delta-method error of log_prob
};

// Monte-Carlo estimate of the conditional marginal: fit the document
// state on the first half, then average the second-half likelihood over
// i.i.d. draws from the fitted Q(Z) and Q(eta).
inline PredictiveEstimate approx_predictive(const Document& first_half, const Document& second_half,
                                            const GlobalView& view, const FitOptions& fit_opts,
                                            int n_samples, std::uint64_t seed) {
    if (first_half.total < 1 || first_half.entries.empty()) {
        throw validate_error("approx_predictive: empty first half");
    }
    if (n_samples < 1) throw domain_error("approx_predictive: need at least one sample");
    const GlobalState& g = view.global();
    const Eigen::Index T = g.truncation();

    const DocumentState state = fit_document(first_half, view, fit_opts);

    // Only the second half's coordinates of each eta are needed; the
    // Dirichlet aggregation property lumps the rest into one draw.
    const auto n_unique = static_cast<Eigen::Index>(second_half.entries.size());
    MatrixXd gamma_needed(T, n_unique);
    VectorXd gamma_rest(T);
    for (Eigen::Index k = 0; k < T; ++k) {
        double needed = 0.0;
        for (Eigen::Index u = 0; u < n_unique; ++u) {
            gamma_needed(k, u) = g.gamma(k, second_half.entries[static_cast<std::size_t>(u)].first);
            needed += gamma_needed(k, u);
        }
        gamma_rest[k] = g.gamma.row(k).sum() - needed;
    }

    Rng rng(seed);
    std::vector<double> log_weights(static_cast<std::size_t>(n_samples));
    VectorXd z(T);
    MatrixXd eta(T, n_unique);
    for (int s = 0; s < n_samples; ++s) {
        for (Eigen::Index k = 0; k < T; ++k) z[k] = rng.gamma(state.a[k], state.b[k]);
        const double z_sum = z.sum();
        for (Eigen::Index k = 0; k < T; ++k) {
            double total = (gamma_rest[k] > 0.0) ? rng.gamma(gamma_rest[k], 1.0) : 0.0;
            for (Eigen::Index u = 0; u < n_unique; ++u) {
                eta(k, u) = rng.gamma(gamma_needed(k, u), 1.0);
                total += eta(k, u);
            }
            eta.row(k) /= total;
        }
        double log_w = 0.0;
        for (Eigen::Index u = 0; u < n_unique; ++u) {
            double word_prob = 0.0;
            for (Eigen::Index k = 0; k < T; ++k) word_prob += eta(k, u) * z[k] / z_sum;
            log_w += second_half.entries[static_cast<std::size_t>(u)].second * std::log(word_prob);
        }
        log_weights[static_cast<std::size_t>(s)] = log_w;
    }

    PredictiveEstimate est;
    est.n_words = second_half.total;
    est.n_samples = n_samples;
    const double lse = log_sum_exp(log_weights);
    if (!std::isfinite(lse)) {
        std::fprintf(stderr, "warning: degenerate predictive estimate, clamping\n");
        est.log_prob = -1e100;
        est.std_err = 0.0;
        return est;
    }
    est.log_prob = lse - std::log(static_cast<double>(n_samples));

    if (n_samples > 1) {
        double max_lw = *std::max_element(log_weights.begin(), log_weights.end());
        double mean_w = 0.0;
        for (double lw : log_weights) mean_w += std::exp(lw - max_lw);
        mean_w /= static_cast<double>(n_samples);
        double var_w = 0.0;
        for (double lw : log_weights) {
            const double dev = std::exp(lw - max_lw) - mean_w;
            var_w += dev * dev;
        }
        var_w /= static_cast<double>(n_samples - 1);
        est.std_err = std::sqrt(var_w / static_cast<double>(n_samples)) / mean_w;
    }
    return est;
}

// exp of the pooled negative per-word log likelihood over the test set.
inline double perplexity(std::span<const PredictiveEstimate> estimates) {
    if (estimates.empty()) throw domain_error("perplexity: empty estimate list");
    double log_total = 0.0;
    std::int64_t words = 0;
    for (const auto& e : estimates) {
        log_total += e.log_prob;
        words += e.n_words;
    }
    if (words == 0) throw domain_error("perplexity: zero test words");
    return std::exp(-log_total / static_cast<double>(words));
}

struct EvalResult {
    std::vector<std::size_t> doc_ids;
    std::vector<PredictiveEstimate> estimates;
    double perplexity = 0.0;
    std::int64_t skipped = 0;
};

// Halve each test document, fit on one half, score the other. Documents
// too short to halve are excluded with a warning.
inline EvalResult evaluate_corpus(const Corpus& test, const GlobalView& view,
                                  const FitOptions& fit_opts, int n_samples, std::uint64_t seed) {
    EvalResult result;
    Rng master(seed);
    for (std::size_t m = 0; m < test.num_documents(); ++m) {
        const Document& doc = test.documents[m];
        const auto halves = split_document_halves(doc, master.derive(2 * m).engine()());
        if (!halves) {
            std::fprintf(stderr, "warning: test document %zu has fewer than 2 tokens, skipped\n", m);
            ++result.skipped;
            continue;
        }
        const auto doc_seed = master.derive(2 * m + 1).engine()();
        result.doc_ids.push_back(m);
        result.estimates.push_back(
            approx_predictive(halves->first, halves->second, view, fit_opts, n_samples, doc_seed));
    }
    if (result.estimates.empty()) throw validate_error("evaluate: no usable test documents");
    result.perplexity = perplexity(result.estimates);
    return result;
}

inline void write_eval_report(const EvalResult& result, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write eval report '" + path + "'");
    std::fprintf(f, "doc\tlog_prob\tn_words\tstd_err\n");
    for (std::size_t i = 0; i < result.estimates.size(); ++i) {
        const auto& e = result.estimates[i];
        std::fprintf(f, "%zu\t%.10g\t%lld\t%.4g\n", result.doc_ids[i], e.log_prob,
                     static_cast<long long>(e.n_words), e.std_err);
    }
    std::fprintf(f, "perplexity\t%.10g\n", result.perplexity);
    std::fclose(f);
}

}  // namespace diln
