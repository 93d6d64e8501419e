#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "diln/batch_infer.hpp"
#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/model.hpp"
#include "diln/rng.hpp"
#include "diln/vb_core.hpp"

namespace diln {

// rho_t = (zeta + t)^{-kappa}; kappa in (0.5, 1] makes the step sums
// satisfy the Robbins-Monro conditions.
struct StepSchedule {
    double zeta = 25.0;
    double kappa = 0.75;

    void validate() const {
        if (!(zeta > 0.0)) throw config_error("schedule: zeta must be > 0");
        if (!(kappa > 0.5 && kappa <= 1.0)) throw config_error("schedule: kappa must be in (0.5, 1]");
    }
};

inline double step_size(std::int64_t t, const StepSchedule& schedule) {
    return std::pow(schedule.zeta + static_cast<double>(t), -schedule.kappa);
}

struct MinibatchPlan {
    int batch_size = 750;

    void validate(std::size_t corpus_size) const {
        if (batch_size < 1 || static_cast<std::size_t>(batch_size) > corpus_size) {
            throw config_error("minibatch: batch size must be in [1, M]");
        }
    }
};

// Natural-gradient topic update: interpolate toward the rescaled
// minibatch target. With rho = 1 and a full batch this is exactly the
// batch Dirichlet update.
inline void stoch_update_gamma(GlobalState& state, const MatrixXd& batch_word_topic, double rho,
                               double corpus_size, double batch_docs, double gamma0) {
    const double scale = corpus_size / batch_docs;
    state.gamma = (1.0 - rho) * state.gamma.array() + rho * (gamma0 + scale * batch_word_topic.array());
}

// Inverse negative Hessian of the location objective for topic k:
// (c^{-1} I + sum_m E[Z_k] e^{-ell_k.u_m} u_m u_m^T)^{-1}, sums scaled up
// to corpus size.
inline MatrixXd precondition_ell(const GlobalState& state, std::span<const DocumentState> doc_states,
                                 Eigen::Index k, double location_var, double doc_scale) {
    const Eigen::Index d = state.latent_dim();
    MatrixXd a_inv = MatrixXd::Identity(d, d) / location_var;
    const VectorXd ell_k = state.ell.row(k).transpose();
    for (const DocumentState& doc : doc_states) {
        const double dot = clamp_exponent(ell_k.dot(doc.u_hat));
        const double weight = (doc.a[k] / doc.b[k]) * std::exp(-dot);
        a_inv.noalias() += doc_scale * weight * doc.u_hat * doc.u_hat.transpose();
    }
    double damping = 0.0;  // damping only when the factorization fails
    for (int attempt = 0; attempt < 14; ++attempt) {
        Eigen::LLT<MatrixXd> llt(a_inv + damping * MatrixXd::Identity(d, d));
        if (llt.info() == Eigen::Success) {
            const MatrixXd a = llt.solve(MatrixXd::Identity(d, d));
            if (a.allFinite()) return a;
        }
        damping = (damping == 0.0) ? 1e-6 : damping * 10.0;
    }
    throw domain_error("precondition_ell: could not factor the preconditioner");
}

// Newton-direction step on every topic location using the minibatch.
inline void stoch_update_ell(GlobalState& state, std::span<const DocumentState> doc_states,
                             const VectorXd& p, double location_var, double rho, double doc_scale) {
    if (state.mode == Mode::HDP) return;
    const Eigen::Index T = state.truncation();
    for (Eigen::Index k = 0; k < T; ++k) {
        const VectorXd ell_k = state.ell.row(k).transpose();
        VectorXd grad = -ell_k / location_var;
        VectorXd data_grad = VectorXd::Zero(state.latent_dim());
        for (const DocumentState& doc : doc_states) {
            const double dot = clamp_exponent(ell_k.dot(doc.u_hat));
            const double coeff = (doc.a[k] / doc.b[k]) * std::exp(-dot) - state.beta * p[k];
            data_grad.noalias() += coeff * doc.u_hat;
        }
        grad += doc_scale * data_grad;
        const MatrixXd a = precondition_ell(state, doc_states, k, location_var, doc_scale);
        const VectorXd step = rho * (a * grad);
        if (!step.allFinite()) {
            std::fprintf(stderr, "warning: non-finite location step, topic %ld skipped\n",
                         static_cast<long>(k));
            continue;
        }
        state.ell.row(k) += step.transpose();
    }
}

// Negative Hessian of the bound in the free sticks. Let J(i,k) be the
// stick-breaking Jacobian dp_i/dV_k; then
//   -d2L/dV_k dV_r = (alpha-1)/(1-V_k)^2 [k=r]
//                  + beta^2 M sum_i psi'(beta p_i) J(i,k) J(i,r)
//                  - beta sum_i A_i J(i,k) J(i,r) / p_i   [k != r],
// the last sum being the multilinear second derivative of p.
inline MatrixXd neg_hessian_v_stick(const GlobalState& state, const SufficientStats& stats) {
    const Eigen::Index T = state.v_stick.size();
    const Eigen::Index F = T - 1;
    const VectorXd p = stick_weights(state.v_stick);

    MatrixXd jac = MatrixXd::Zero(T, F);  // J(i,k) = dp_i/dV_k
    for (Eigen::Index i = 0; i < T; ++i) {
        for (Eigen::Index k = 0; k < F; ++k) {
            if (k == i) {
                jac(i, k) = p[i] / state.v_stick[k];
            } else if (k < i) {
                jac(i, k) = -p[i] / (1.0 - state.v_stick[k]);
            }
        }
    }

    VectorXd per_topic(T);   // A_i
    VectorXd curvature(T);   // psi'(beta p_i)
    for (Eigen::Index i = 0; i < T; ++i) {
        const double bi = stats.sum_elog_z[i] - stats.sum_dot[i];
        per_topic[i] = bi - stats.doc_count * digamma(state.beta * p[i]);
        curvature[i] = trigamma(state.beta * p[i]);
    }

    MatrixXd neg_h = state.beta * state.beta * stats.doc_count *
                     (jac.transpose() * curvature.asDiagonal() * jac);
    const MatrixXd cross = jac.transpose() * (per_topic.array() / p.array()).matrix().asDiagonal() * jac;
    neg_h -= state.beta * cross;
    neg_h += state.beta * cross.diagonal().asDiagonal();  // second derivative vanishes on the diagonal
    for (Eigen::Index k = 0; k < F; ++k) {
        neg_h(k, k) += (state.alpha - 1.0) / ((1.0 - state.v_stick[k]) * (1.0 - state.v_stick[k]));
    }
    return neg_h;
}

// Preconditioned stick update, falling back to a 1/T-scaled gradient
// step when no damping renders the Hessian positive definite.
inline void stoch_update_v_stick(GlobalState& state, const SufficientStats& stats, double rho) {
    const Eigen::Index T = state.v_stick.size();
    if (T < 2) return;
    const Eigen::Index F = T - 1;
    const VectorXd grad = grad_v_stick(state, stats);
    const MatrixXd neg_h = neg_hessian_v_stick(state, stats);

    VectorXd delta;
    double damping = 1e-6;
    bool solved = false;
    for (int attempt = 0; attempt < 13; ++attempt) {
        Eigen::LLT<MatrixXd> llt(neg_h + damping * MatrixXd::Identity(F, F));
        if (llt.info() == Eigen::Success) {
            delta = llt.solve(grad);
            solved = delta.allFinite();
            if (solved) break;
        }
        damping *= 10.0;
    }
    if (!solved) delta = grad / static_cast<double>(T);

    for (Eigen::Index k = 0; k < F; ++k) {
        state.v_stick[k] = std::clamp(state.v_stick[k] + rho * delta[k], kStickClip, 1.0 - kStickClip);
    }
}

// Batch-specific optimum of the beta objective, interpolated into the
// running estimate.
inline void stoch_update_beta(GlobalState& state, const SufficientStats& scaled_stats, double rho,
                              double kappa1, double kappa2) {
    const VectorXd p = stick_weights(state.v_stick);
    const double beta_tilde = optimize_beta(state.beta, p, scaled_stats, kappa1, kappa2, 1e-6, 100);
    state.beta = (1.0 - rho) * state.beta + rho * beta_tilde;
}

struct StochasticResult {
    GlobalState state;
    TrainTrace trace;
    std::int64_t iterations = 0;
};

using EvalHook = std::function<void(std::int64_t iteration, std::int64_t docs_seen, const GlobalState&)>;

struct StochasticOptions {
    int epochs = 1;
    int eval_every = 10;  // batches between eval hook calls
    EvalHook hook;
};

// One pass of Algorithm-style stochastic inference: subsample, fit the
// batch, take natural-gradient / preconditioned steps on the globals.
inline StochasticResult train_stochastic(const Corpus& corpus, const TrainConfig& cfg,
                                         const StepSchedule& schedule, const MinibatchPlan& plan,
                                         const StochasticOptions& opts = {}) {
    cfg.validate();
    schedule.validate();
    plan.validate(corpus.num_documents());
    const auto start = std::chrono::steady_clock::now();

    StochasticResult result;
    result.state = init_topics(corpus, cfg);
    GlobalView view = make_view(result.state);

    const auto M = corpus.num_documents();
    const double corpus_size = static_cast<double>(M);
    Rng batch_rng = Rng(cfg.seed).derive(0x5b5);

    std::vector<std::size_t> order(M);
    for (std::size_t i = 0; i < M; ++i) order[i] = i;

    std::int64_t t = 0;
    std::int64_t docs_seen = 0;
    std::vector<const Document*> batch_docs;
    std::vector<Document> batch_copy;
    std::vector<DocumentState> batch_states;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t begin = 0; begin < M; begin += static_cast<std::size_t>(plan.batch_size)) {
            const std::size_t end = std::min(M, begin + static_cast<std::size_t>(plan.batch_size));
            const auto batch_size = static_cast<double>(end - begin);

            batch_copy.clear();
            batch_states.clear();
            for (std::size_t i = begin; i < end; ++i) {
                batch_copy.push_back(corpus.documents[order[i]]);
            }
            for (const Document& doc : batch_copy) {
                batch_states.push_back(fit_document(doc, view, cfg.fit));
            }

            SufficientStats stats = collect_stats(batch_copy, batch_states, result.state);
            const double rho = step_size(t, schedule);
            const double scale = corpus_size / batch_size;

            stoch_update_gamma(result.state, stats.word_topic, rho, corpus_size, batch_size,
                               cfg.model.gamma0);
            SufficientStats scaled = stats;
            scaled.rescale(scale);
            stoch_update_v_stick(result.state, scaled, rho);
            stoch_update_ell(result.state, batch_states, stick_weights(result.state.v_stick),
                             cfg.model.kernel.location_var, rho, scale);
            stoch_update_beta(result.state, scaled, rho, cfg.model.kappa1, cfg.model.kappa2);
            update_alpha(result.state, cfg.model.tau1, cfg.model.tau2);

            view = make_view(result.state);
            docs_seen += static_cast<std::int64_t>(end - begin);
            const BoundValue estimate =
                compute_bound(batch_copy, batch_states, view, cfg.model, scale);
            result.trace.bound.push_back(estimate.total);
            result.trace.alpha.push_back(result.state.alpha);
            result.trace.beta.push_back(result.state.beta);
            result.trace.rho.push_back(rho);
            result.trace.docs_seen.push_back(docs_seen);
            result.trace.seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

            ++t;
            if (opts.hook && opts.eval_every > 0 && t % opts.eval_every == 0) {
                opts.hook(t, docs_seen, result.state);
            }
        }
    }
    result.iterations = t;
    return result;
}

}  // namespace diln
