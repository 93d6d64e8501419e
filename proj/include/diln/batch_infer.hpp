#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/model.hpp"
#include "diln/rng.hpp"
#include "diln/vb_core.hpp"

namespace diln {

struct TrainConfig {
    ModelConfig model;
    double rel_tol = 1e-3;   // on the fractional change of the bound
    int max_iters = 100;
    FitOptions fit;
    int location_steps = 20; // gradient steps per topic-location update
    std::uint64_t seed = 1;

    void validate() const {
        model.validate();
        if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw config_error("train: rel_tol must be in (0,1)");
        if (max_iters < 1) throw config_error("train: max_iters must be >= 1");
        if (fit.max_iters < 1) throw config_error("train: inner iterations must be >= 1");
    }
};

struct TrainTrace {
    std::vector<double> bound;
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<double> seconds;
    std::vector<double> rho;             // stochastic runs only
    std::vector<std::int64_t> docs_seen; // stochastic runs only
};

// Corpus aggregates consumed by the corpus-level updates. For minibatch
// runs the sums are rescaled so doc_count plays the role of M.
struct SufficientStats {
    MatrixXd word_topic;  // T x V sums of count * phi
    VectorXd sum_elog_z;  // per topic, sum over documents of E[ln Z_k]
    VectorXd sum_dot;     // per topic, sum over documents of ell_k . u_m
    double doc_count = 0.0;

    static SufficientStats zero(Eigen::Index T, Eigen::Index V) {
        SufficientStats s;
        s.word_topic = MatrixXd::Zero(T, V);
        s.sum_elog_z = VectorXd::Zero(T);
        s.sum_dot = VectorXd::Zero(T);
        return s;
    }

    void rescale(double factor) {
        word_topic *= factor;
        sum_elog_z *= factor;
        sum_dot *= factor;
        doc_count *= factor;
    }
};

inline void accumulate_stats(const Document& doc, const DocumentState& state,
                             const GlobalState& global, SufficientStats& stats) {
    for (std::size_t u = 0; u < doc.entries.size(); ++u) {
        const auto [v, count] = doc.entries[u];
        stats.word_topic.col(v) += count * state.phi.row(static_cast<Eigen::Index>(u)).transpose();
    }
    stats.sum_elog_z += expected_log_z(state);
    if (global.mode == Mode::DILN) stats.sum_dot += global.ell * state.u_hat;
    stats.doc_count += 1.0;
}

inline SufficientStats collect_stats(std::span<const Document> docs,
                                     std::span<const DocumentState> states,
                                     const GlobalState& global) {
    SufficientStats stats = SufficientStats::zero(global.truncation(), global.vocab_size());
    for (std::size_t m = 0; m < docs.size(); ++m) {
        accumulate_stats(docs[m], states[m], global, stats);
    }
    return stats;
}

// ---------------------------------------------------------------------
// Initialization: three L1 k-means iterations on the empirical word
// distributions, topics reordered by usage, centroids smoothed into the
// Dirichlet parameters.

inline GlobalState init_topics(const Corpus& corpus, const TrainConfig& cfg) {
    const int T = cfg.model.truncation;
    const auto V = static_cast<Eigen::Index>(corpus.vocab_size());
    const auto M = corpus.num_documents();
    if (T < 1) throw config_error("init: truncation must be >= 1");

    // Documents enter as sparse empirical word distributions; only the
    // centroids are dense.
    auto scatter_freq = [&](const Document& doc, Eigen::Ref<Eigen::RowVectorXd> row) {
        row.setZero();
        for (const auto& [v, count] : doc.entries) {
            row[v] = static_cast<double>(count) / static_cast<double>(doc.total);
        }
    };
    VectorXd corpus_mean = VectorXd::Zero(V);
    for (const Document& doc : corpus.documents) {
        for (const auto& [v, count] : doc.entries) {
            corpus_mean[v] += static_cast<double>(count) / static_cast<double>(doc.total);
        }
    }
    corpus_mean /= static_cast<double>(M);

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(M);
    for (std::size_t m = 0; m < M; ++m) order[m] = m;
    rng.shuffle(order);

    RowMatrixXd centroids(T, V);
    for (int k = 0; k < T; ++k) {
        if (static_cast<std::size_t>(k) < M) {
            scatter_freq(corpus.documents[order[static_cast<std::size_t>(k)]], centroids.row(k));
        } else {
            // fewer documents than topics: pad around the corpus mean
            centroids.row(k) = corpus_mean.transpose();
            for (Eigen::Index v = 0; v < V; ++v) centroids(k, v) += 0.01 * rng.uniform();
        }
    }

    std::vector<int> assignment(M, 0);
    std::vector<std::int64_t> cluster_size(static_cast<std::size_t>(T), 0);
    VectorXd centroid_l1(T);
    for (int iter = 0; iter < 3; ++iter) {
        // L1 distance touching only a document's nonzeros:
        // |p - c|_1 = |c|_1 + sum_{v in doc} (|p_v - c_v| - c_v)
        for (int k = 0; k < T; ++k) centroid_l1[k] = centroids.row(k).cwiseAbs().sum();
        std::fill(cluster_size.begin(), cluster_size.end(), 0);
        for (std::size_t m = 0; m < M; ++m) {
            const Document& doc = corpus.documents[m];
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int k = 0; k < T; ++k) {
                double dist = centroid_l1[k];
                for (const auto& [v, count] : doc.entries) {
                    const double p = static_cast<double>(count) / static_cast<double>(doc.total);
                    dist += std::abs(p - centroids(k, v)) - std::abs(centroids(k, v));
                }
                if (dist < best_dist) {
                    best_dist = dist;
                    best = k;
                }
            }
            assignment[m] = best;
            ++cluster_size[static_cast<std::size_t>(best)];
        }
        RowMatrixXd next = RowMatrixXd::Zero(T, V);
        for (std::size_t m = 0; m < M; ++m) {
            const Document& doc = corpus.documents[m];
            for (const auto& [v, count] : doc.entries) {
                next(assignment[m], v) += static_cast<double>(count) / static_cast<double>(doc.total);
            }
        }
        for (int k = 0; k < T; ++k) {
            if (cluster_size[static_cast<std::size_t>(k)] > 0) {
                centroids.row(k) = next.row(k) / static_cast<double>(cluster_size[static_cast<std::size_t>(k)]);
            }
        }
    }

    // Most used topic first.
    std::vector<int> topic_order(static_cast<std::size_t>(T));
    for (int k = 0; k < T; ++k) topic_order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(topic_order.begin(), topic_order.end(), [&](int a, int b) {
        return cluster_size[static_cast<std::size_t>(a)] > cluster_size[static_cast<std::size_t>(b)];
    });

    const double mean_length =
        static_cast<double>(corpus.total_tokens()) / static_cast<double>(M);

    GlobalState state;
    state.mode = cfg.model.mode;
    state.gamma.resize(T, V);
    for (int k = 0; k < T; ++k) {
        const auto src = topic_order[static_cast<std::size_t>(k)];
        for (Eigen::Index v = 0; v < V; ++v) {
            state.gamma(k, v) = mean_length * centroids(src, v) + cfg.model.gamma0 +
                                0.01 * mean_length * rng.uniform();
        }
    }
    state.v_stick = VectorXd::Constant(T, 0.5);  // 1/(1 + alpha0) with alpha0 = 1
    state.v_stick[T - 1] = 1.0;
    state.alpha = 1.0;
    state.beta = 5.0;
    const double sd = std::sqrt(cfg.model.kernel.location_var);
    state.ell.resize(T, cfg.model.kernel.latent_dim);
    for (int k = 0; k < T; ++k) {
        for (int j = 0; j < cfg.model.kernel.latent_dim; ++j) state.ell(k, j) = rng.normal(0.0, sd);
    }
    return state;
}

// ---------------------------------------------------------------------
// Corpus-level coordinate updates.

inline void update_eta(GlobalState& state, const SufficientStats& stats, double gamma0) {
    if ((stats.word_topic.array() < -1e-9).any()) {
        throw validate_error("update_eta: negative sufficient statistic");
    }
    state.gamma = stats.word_topic.array().max(0.0) + gamma0;
}

// p_k/V_k - sum_{j>k} p_j/(1-V_k); telescopes to zero when the final
// stick is pinned to one, which is why the gradient keeps the per-topic
// aggregate inside the sum rather than factoring it out.
inline double stick_bracket(const VectorXd& v_stick, const VectorXd& p, Eigen::Index k) {
    double tail = 0.0;
    for (Eigen::Index j = k + 1; j < p.size(); ++j) tail += p[j];
    return p[k] / v_stick[k] - tail / (1.0 - v_stick[k]);
}

namespace detail {

// Bound terms that move with the sticks: the Beta(1, alpha) prior plus
// the gamma-rate terms through p.
inline double v_stick_objective(const VectorXd& v_stick, const SufficientStats& stats,
                                double alpha, double beta) {
    const VectorXd p = stick_weights(v_stick);
    double f = 0.0;
    for (Eigen::Index k = 0; k + 1 < v_stick.size(); ++k) {
        f += (alpha - 1.0) * std::log1p(-v_stick[k]);
    }
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double bk = stats.sum_elog_z[k] - stats.sum_dot[k];
        f += beta * p[k] * bk - stats.doc_count * std::lgamma(beta * p[k]);
    }
    return f;
}

}  // namespace detail

// Exact gradient of the bound in the free sticks k = 1..T-1, using
// dp_i/dV_k = p_i/V_k for i = k and -p_i/(1-V_k) for i > k.
inline VectorXd grad_v_stick(const GlobalState& state, const SufficientStats& stats) {
    const Eigen::Index T = state.v_stick.size();
    const VectorXd p = stick_weights(state.v_stick);
    VectorXd per_topic(T);  // A_i = B_i - M psi(beta p_i)
    for (Eigen::Index i = 0; i < T; ++i) {
        const double bi = stats.sum_elog_z[i] - stats.sum_dot[i];
        per_topic[i] = bi - stats.doc_count * digamma(state.beta * p[i]);
    }
    VectorXd grad(T - 1);
    double suffix = per_topic[T - 1] * p[T - 1];  // sum_{j>k} A_j p_j
    for (Eigen::Index k = T - 2; k >= 0; --k) {
        grad[k] = -(state.alpha - 1.0) / (1.0 - state.v_stick[k]) +
                  state.beta * (per_topic[k] * p[k] / state.v_stick[k] -
                                suffix / (1.0 - state.v_stick[k]));
        suffix += per_topic[k] * p[k];
    }
    return grad;
}

inline constexpr double kStickClip = 1e-6;

// Steepest ascent with backtracking; sticks clipped away from {0,1}.
inline void update_v_stick(GlobalState& state, const SufficientStats& stats, int ascent_steps = 5) {
    const Eigen::Index T = state.v_stick.size();
    if (T < 2) return;
    double f = detail::v_stick_objective(state.v_stick, stats, state.alpha, state.beta);
    for (int step_iter = 0; step_iter < ascent_steps; ++step_iter) {
        const VectorXd grad = grad_v_stick(state, stats);
        const double grad_inf = grad.cwiseAbs().maxCoeff();
        if (grad_inf < 1e-12) break;
        double step = 0.05 / grad_inf;  // first trial moves no stick more than 0.05
        bool accepted = false;
        for (int halving = 0; halving < 10; ++halving) {
            VectorXd candidate = state.v_stick;
            for (Eigen::Index k = 0; k + 1 < T; ++k) {
                candidate[k] = std::clamp(state.v_stick[k] + step * grad[k], kStickClip, 1.0 - kStickClip);
            }
            const double f_new = detail::v_stick_objective(candidate, stats, state.alpha, state.beta);
            if (std::isfinite(f_new) && f_new >= f - 1e-12 * std::abs(f)) {
                state.v_stick = candidate;
                accepted = f_new > f;
                f = f_new;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
}

// Gradient ascent on each topic location with rho_s = (1/M)(3+s)^{-1};
// steps that would lower the bound are halved, then dropped.
inline void update_ell(GlobalState& state, std::span<const DocumentState> doc_states,
                       const VectorXd& p, double location_var, int steps, double doc_scale = 1.0) {
    if (state.mode == Mode::HDP) return;
    const auto M = doc_states.size();
    if (M == 0) return;
    const double m_eff = doc_scale * static_cast<double>(M);
    const Eigen::Index T = state.truncation();
    const Eigen::Index d = state.latent_dim();

    MatrixXd u_all(M, d);
    MatrixXd ez_all(M, T);
    for (std::size_t m = 0; m < M; ++m) {
        u_all.row(static_cast<Eigen::Index>(m)) = doc_states[m].u_hat.transpose();
        ez_all.row(static_cast<Eigen::Index>(m)) = expected_z(doc_states[m]).transpose();
    }

    auto objective = [&](Eigen::Index k, const VectorXd& ell_k) {
        const VectorXd dots = u_all * ell_k;
        double f = -ell_k.squaredNorm() / (2.0 * location_var);
        double data = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            const double dot = clamp_exponent(dots[static_cast<Eigen::Index>(m)]);
            data += -state.beta * p[k] * dot -
                    std::exp(-dot) * ez_all(static_cast<Eigen::Index>(m), k);
        }
        return f + doc_scale * data;
    };

    for (Eigen::Index k = 0; k < T; ++k) {
        VectorXd ell_k = state.ell.row(k).transpose();
        double f = objective(k, ell_k);
        bool warned = false;
        for (int s = 1; s <= steps; ++s) {
            const VectorXd dots = u_all * ell_k;
            VectorXd coeff(static_cast<Eigen::Index>(M));
            for (std::size_t m = 0; m < M; ++m) {
                const auto mi = static_cast<Eigen::Index>(m);
                coeff[mi] = ez_all(mi, k) * std::exp(-clamp_exponent(dots[mi])) - state.beta * p[k];
            }
            const VectorXd grad = doc_scale * (u_all.transpose() * coeff) - ell_k / location_var;
            if (!grad.allFinite()) {
                if (!warned) {
                    std::fprintf(stderr, "warning: non-finite location gradient, topic %ld skipped\n",
                                 static_cast<long>(k));
                    warned = true;
                }
                break;
            }
            double rho = 1.0 / (m_eff * (3.0 + static_cast<double>(s)));
            bool accepted = false;
            for (int halving = 0; halving < 10; ++halving) {
                const VectorXd candidate = ell_k + rho * grad;
                const double f_new = objective(k, candidate);
                if (std::isfinite(f_new) && f_new >= f - 1e-12 * std::abs(f)) {
                    ell_k = candidate;
                    f = f_new;
                    accepted = true;
                    break;
                }
                rho *= 0.5;
            }
            if (!accepted) break;
        }
        state.ell.row(k) = ell_k.transpose();
    }
}

// Closed-form maximizer of the stick prior plus the Gamma(tau1, tau2)
// prior on alpha.
inline void update_alpha(GlobalState& state, double tau1, double tau2) {
    const Eigen::Index T = state.v_stick.size();
    if (T < 2) return;  // no free sticks to inform alpha
    double log_tail = 0.0;
    for (Eigen::Index k = 0; k + 1 < T; ++k) log_tail += std::log1p(-state.v_stick[k]);
    state.alpha = (static_cast<double>(T) + tau1 - 2.0) / (tau2 - log_tail);
}

namespace detail {

inline double beta_objective(double beta, const VectorXd& p, const VectorXd& per_topic_b,
                             double doc_count, double kappa1, double kappa2) {
    double f = (kappa1 - 1.0) * std::log(beta) - kappa2 * beta;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        f += beta * p[k] * per_topic_b[k] - doc_count * std::lgamma(beta * p[k]);
    }
    return f;
}

}  // namespace detail

inline double grad_beta(const GlobalState& state, const SufficientStats& stats, double kappa1,
                        double kappa2) {
    const VectorXd p = stick_weights(state.v_stick);
    double g = (kappa1 - 1.0) / state.beta - kappa2;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double bk = stats.sum_elog_z[k] - stats.sum_dot[k];
        g += p[k] * (bk - stats.doc_count * digamma(state.beta * p[k]));
    }
    return g;
}

// Newton ascent with halving; the objective is concave in beta for
// kappa1 >= 1, so this converges quickly and never leaves (0, inf).
inline double optimize_beta(double beta0, const VectorXd& p, const SufficientStats& stats,
                            double kappa1, double kappa2, double tol = 1e-6, int max_steps = 100) {
    VectorXd per_topic_b = stats.sum_elog_z - stats.sum_dot;
    double beta = beta0;
    double f = detail::beta_objective(beta, p, per_topic_b, stats.doc_count, kappa1, kappa2);
    for (int it = 0; it < max_steps; ++it) {
        double g = (kappa1 - 1.0) / beta - kappa2;
        double curvature = (kappa1 - 1.0) / (beta * beta);
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            g += p[k] * (per_topic_b[k] - stats.doc_count * digamma(beta * p[k]));
            curvature += stats.doc_count * p[k] * p[k] * trigamma(beta * p[k]);
        }
        double delta = (curvature > 0.0) ? g / curvature : g * beta / (std::abs(g) + 1.0);
        bool accepted = false;
        for (int halving = 0; halving < 30; ++halving) {
            const double candidate = beta + delta;
            if (candidate > 0.0) {
                const double f_new =
                    detail::beta_objective(candidate, p, per_topic_b, stats.doc_count, kappa1, kappa2);
                if (std::isfinite(f_new) && f_new >= f - 1e-12 * std::abs(f)) {
                    if (std::abs(candidate - beta) < tol * (1.0 + beta)) {
                        return candidate;
                    }
                    beta = candidate;
                    f = f_new;
                    accepted = true;
                    break;
                }
            }
            delta *= 0.5;
        }
        if (!accepted) break;
    }
    return beta;
}

inline void update_beta(GlobalState& state, const SufficientStats& stats, double kappa1,
                        double kappa2) {
    const VectorXd p = stick_weights(state.v_stick);
    state.beta = optimize_beta(state.beta, p, stats, kappa1, kappa2);
}

// ---------------------------------------------------------------------
// Batch trainer: full E-step over all documents, then the corpus-level
// updates, until the bound stalls.

struct BatchResult {
    GlobalState state;
    std::vector<DocumentState> doc_states;
    TrainTrace trace;
    int iterations = 0;
};

inline BatchResult train_batch(const Corpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    BatchResult result;
    result.state = init_topics(corpus, cfg);
    GlobalView view = make_view(result.state);

    result.doc_states.reserve(corpus.num_documents());
    for (const Document& doc : corpus.documents) {
        result.doc_states.push_back(init_document_state(doc, view));
    }

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        // E-step: a fresh fit lets documents re-pick topics under the
        // current global prior (merging duplicate topics); the warm
        // state is kept and refined whenever it scores higher, so the
        // bound never decreases.
        for (std::size_t m = 0; m < corpus.num_documents(); ++m) {
            const Document& doc = corpus.documents[m];
            DocumentState fresh = init_document_state(doc, view);
            fit_document_state(doc, fresh, view, cfg.fit);
            if (document_bound(doc, fresh, view) >
                document_bound(doc, result.doc_states[m], view)) {
                result.doc_states[m] = std::move(fresh);
            } else {
                fit_document_state(doc, result.doc_states[m], view, cfg.fit);
            }
        }
        SufficientStats stats = collect_stats(corpus.documents, result.doc_states, result.state);

        update_eta(result.state, stats, cfg.model.gamma0);
        update_v_stick(result.state, stats);
        view = make_view(result.state);
        update_ell(result.state, result.doc_states, view.p, cfg.model.kernel.location_var,
                   cfg.location_steps);
        update_alpha(result.state, cfg.model.tau1, cfg.model.tau2);
        update_beta(result.state, stats, cfg.model.kappa1, cfg.model.kappa2);

        const BoundValue bound =
            compute_bound(corpus.documents, result.doc_states, view, cfg.model);
        result.trace.bound.push_back(bound.total);
        result.trace.alpha.push_back(result.state.alpha);
        result.trace.beta.push_back(result.state.beta);
        result.trace.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        result.iterations = iter + 1;

        if (iter >= 1) {
            const double prev = result.trace.bound[static_cast<std::size_t>(iter) - 1];
            const double cur = bound.total;
            if (std::abs(cur - prev) / std::abs(cur) < cfg.rel_tol) break;
        }
    }
    return result;
}

}  // namespace diln
