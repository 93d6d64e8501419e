#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/math_util.hpp"
#include "diln/model.hpp"

namespace diln {

inline VectorXd expected_z(const DocumentState& state) {
    return state.a.array() / state.b.array();
}

// E[ln Z_k] = psi(a_k) - ln b_k.
inline VectorXd expected_log_z(const DocumentState& state) {
    VectorXd out(state.a.size());
    for (Eigen::Index k = 0; k < state.a.size(); ++k) {
        out[k] = digamma(state.a[k]) - std::log(state.b[k]);
    }
    return out;
}

// Cached per-iteration expectations of the corpus-level state. Document
// updates share one view; the view is rebuilt whenever the state moves.
struct GlobalView {
    const GlobalState* state = nullptr;
    VectorXd p;          // stick weights of v_stick
    MatrixXd elog_eta;   // T x V, E[ln eta_k(v)]

    const GlobalState& global() const { return *state; }
};

inline GlobalView make_view(const GlobalState& state) {
    GlobalView view;
    view.state = &state;
    view.p = stick_weights(state.v_stick);
    view.elog_eta.resize(state.gamma.rows(), state.gamma.cols());
    for (Eigen::Index k = 0; k < state.gamma.rows(); ++k) {
        const double psi_total = digamma(state.gamma.row(k).sum());
        for (Eigen::Index v = 0; v < state.gamma.cols(); ++v) {
            view.elog_eta(k, v) = digamma(state.gamma(k, v)) - psi_total;
        }
    }
    return view;
}

// phi_{u,k} proportional to exp{ E[ln eta_k(x_u)] + E[ln Z_k] }, one row
// per unique term; multiplicities enter through counts elsewhere.
inline void update_phi(const Document& doc, DocumentState& state, const GlobalView& view) {
    const VectorXd elog_z = expected_log_z(state);
    state.phi.resize(static_cast<Eigen::Index>(doc.entries.size()), elog_z.size());
    for (std::size_t u = 0; u < doc.entries.size(); ++u) {
        const int v = doc.entries[u].first;
        state.phi.row(static_cast<Eigen::Index>(u)) = (view.elog_eta.col(v) + elog_z).transpose();
        softmax_row(state.phi.row(static_cast<Eigen::Index>(u)));
    }
}

// a_k = beta p_k + sum_n phi_{n,k};  b_k = exp(-ell_k.u) + N/xi, with the
// first term pinned to one in HDP mode.
inline void update_z(const Document& doc, DocumentState& state, const GlobalView& view) {
    const GlobalState& g = view.global();
    const Eigen::Index T = g.truncation();
    state.a = g.beta * view.p;
    for (std::size_t u = 0; u < doc.entries.size(); ++u) {
        state.a += doc.entries[u].second * state.phi.row(static_cast<Eigen::Index>(u)).transpose();
    }
    const double n_over_xi = static_cast<double>(doc.total) / state.xi;
    state.b.resize(T);
    if (g.mode == Mode::DILN) {
        const VectorXd dots = g.ell * state.u_hat;
        for (Eigen::Index k = 0; k < T; ++k) {
            state.b[k] = std::exp(-clamp_exponent(dots[k])) + n_over_xi;
        }
    } else {
        state.b.setConstant(1.0 + n_over_xi);
    }
}

// Tightens the Taylor surrogate: xi = sum_k E[Z_k].
inline void update_xi(DocumentState& state) {
    state.xi = expected_z(state).sum();
}

// Bound terms that depend on the document location.
inline double doc_location_objective(const DocumentState& state, const GlobalView& view,
                                     const VectorXd& ez, const VectorXd& u) {
    const GlobalState& g = view.global();
    double f = -0.5 * u.squaredNorm();
    const VectorXd dots = g.ell * u;
    for (Eigen::Index k = 0; k < ez.size(); ++k) {
        const double dot = clamp_exponent(dots[k]);
        f += -g.beta * view.p[k] * dot - std::exp(-dot) * ez[k];
    }
    return f;
}

// Gradient ascent on u_hat with step rho_s = (1/T) (3+s)^{-1}. Each step
// is accepted only if the location objective does not decrease; the
// schedule value is the first trial step.
inline void update_u(DocumentState& state, const GlobalView& view, int steps) {
    const GlobalState& g = view.global();
    if (g.mode == Mode::HDP) return;
    const double t_inv = 1.0 / static_cast<double>(g.truncation());
    const VectorXd ez = expected_z(state);
    double f = doc_location_objective(state, view, ez, state.u_hat);
    for (int s = 1; s <= steps; ++s) {
        const VectorXd dots = g.ell * state.u_hat;
        VectorXd coeff(ez.size());
        for (Eigen::Index k = 0; k < ez.size(); ++k) {
            coeff[k] = ez[k] * std::exp(-clamp_exponent(dots[k])) - g.beta * view.p[k];
        }
        const VectorXd grad = g.ell.transpose() * coeff - state.u_hat;
        if (!grad.allFinite()) break;
        double rho = t_inv / (3.0 + static_cast<double>(s));
        bool accepted = false;
        for (int halving = 0; halving < 10; ++halving) {
            const VectorXd candidate = state.u_hat + rho * grad;
            const double f_new = doc_location_objective(state, view, ez, candidate);
            if (std::isfinite(f_new) && f_new >= f - 1e-12 * std::abs(f)) {
                state.u_hat = candidate;
                f = f_new;
                accepted = true;
                break;
            }
            rho *= 0.5;
        }
        if (!accepted) break;
    }
}

struct BoundValue {
    double total = 0.0;
    std::vector<double> per_document;
};

namespace detail {

inline double checked(double x, const char* component) {
    if (!std::isfinite(x)) {
        throw domain_error(std::string("bound: non-finite term '") + component + "'");
    }
    return x;
}

}  // namespace detail

// Document-level bound terms: word likelihood, indicator term with the
// log-normalizer surrogate, Z prior, location prior and q entropies.
inline double document_bound(const Document& doc, const DocumentState& state,
                             const GlobalView& view) {
    const GlobalState& g = view.global();
    const Eigen::Index T = g.truncation();
    const VectorXd ez = expected_z(state);
    const VectorXd elog_z = expected_log_z(state);
    const double n_m = static_cast<double>(doc.total);

    double word_lik = 0.0;
    double indicator = 0.0;
    double phi_entropy = 0.0;
    for (std::size_t u = 0; u < doc.entries.size(); ++u) {
        const auto [v, count] = doc.entries[u];
        const auto row = state.phi.row(static_cast<Eigen::Index>(u));
        for (Eigen::Index k = 0; k < T; ++k) {
            const double phi = row[k];
            if (phi <= 0.0) continue;
            word_lik += count * phi * view.elog_eta(k, v);
            indicator += count * phi * elog_z[k];
            phi_entropy -= count * phi * std::log(phi);
        }
    }
    // -E[ln sum_k Z_k] >= -ln xi - (sum_k E[Z_k] - xi)/xi
    indicator += n_m * (-std::log(state.xi) - (ez.sum() - state.xi) / state.xi);

    double z_prior = 0.0;
    if (g.mode == Mode::DILN) {
        const VectorXd dots = g.ell * state.u_hat;
        for (Eigen::Index k = 0; k < T; ++k) {
            const double bp = g.beta * view.p[k];
            const double dot = clamp_exponent(dots[k]);
            z_prior += -bp * dot + (bp - 1.0) * elog_z[k] - std::exp(-dot) * ez[k] - std::lgamma(bp);
        }
    } else {
        for (Eigen::Index k = 0; k < T; ++k) {
            const double bp = g.beta * view.p[k];
            z_prior += (bp - 1.0) * elog_z[k] - ez[k] - std::lgamma(bp);
        }
    }

    double z_entropy = 0.0;
    for (Eigen::Index k = 0; k < T; ++k) z_entropy += gamma_entropy(state.a[k], state.b[k]);

    double total = detail::checked(word_lik, "word_likelihood") +
                   detail::checked(indicator, "indicator") +
                   detail::checked(z_prior, "z_prior") +
                   detail::checked(phi_entropy, "phi_entropy") +
                   detail::checked(z_entropy, "z_entropy");
    if (g.mode == Mode::DILN) {
        const double d = static_cast<double>(g.latent_dim());
        const double u_prior =
            -0.5 * d * std::log(2.0 * M_PI) - 0.5 * state.u_hat.squaredNorm();
        total += detail::checked(u_prior, "doc_location_prior");
    }
    return total;
}

// Corpus-level bound terms shared by every document.
inline double corpus_bound(const GlobalView& view, const ModelConfig& config) {
    const GlobalState& g = view.global();
    const Eigen::Index T = g.truncation();
    const Eigen::Index V = g.vocab_size();

    double eta_terms = 0.0;
    const double prior_norm =
        std::lgamma(config.gamma0 * static_cast<double>(V)) -
        static_cast<double>(V) * std::lgamma(config.gamma0);
    for (Eigen::Index k = 0; k < T; ++k) {
        double elog_sum = 0.0;
        for (Eigen::Index v = 0; v < V; ++v) elog_sum += view.elog_eta(k, v);
        eta_terms += prior_norm + (config.gamma0 - 1.0) * elog_sum;
        eta_terms += dirichlet_entropy(g.gamma.row(k).transpose());
    }

    double stick_prior = 0.0;
    for (Eigen::Index k = 0; k + 1 < T; ++k) {
        stick_prior += std::log(g.alpha) + (g.alpha - 1.0) * std::log1p(-g.v_stick[k]);
    }

    const double alpha_prior = config.tau1 * std::log(config.tau2) - std::lgamma(config.tau1) +
                               (config.tau1 - 1.0) * std::log(g.alpha) - config.tau2 * g.alpha;
    const double beta_prior = config.kappa1 * std::log(config.kappa2) - std::lgamma(config.kappa1) +
                              (config.kappa1 - 1.0) * std::log(g.beta) - config.kappa2 * g.beta;

    double total = detail::checked(eta_terms, "eta_terms") +
                   detail::checked(stick_prior, "stick_prior") +
                   detail::checked(alpha_prior, "alpha_prior") +
                   detail::checked(beta_prior, "beta_prior");
    if (g.mode == Mode::DILN) {
        const double d = static_cast<double>(g.latent_dim());
        const double c = config.kernel.location_var;
        double loc_prior = 0.0;
        for (Eigen::Index k = 0; k < T; ++k) {
            loc_prior += -0.5 * d * std::log(2.0 * M_PI * c) - g.ell.row(k).squaredNorm() / (2.0 * c);
        }
        total += detail::checked(loc_prior, "location_prior");
    }
    return total;
}

// Full surrogate bound. doc_scale != 1 gives the subsampled objective
// where each document term stands in for doc_scale documents.
inline BoundValue compute_bound(std::span<const Document> docs,
                                std::span<const DocumentState> states, const GlobalView& view,
                                const ModelConfig& config, double doc_scale = 1.0) {
    BoundValue bound;
    bound.per_document.reserve(docs.size());
    double doc_total = 0.0;
    for (std::size_t m = 0; m < docs.size(); ++m) {
        const double term = document_bound(docs[m], states[m], view);
        bound.per_document.push_back(term);
        doc_total += term;
    }
    bound.total = doc_scale * doc_total + corpus_bound(view, config);
    return bound;
}

struct FitOptions {
    int max_iters = 50;
    double tol = 1e-4;       // on the mean absolute change of E[Z]/sum E[Z]
    int location_steps = 20;
};

inline DocumentState init_document_state(const Document& doc, const GlobalView& view) {
    const GlobalState& g = view.global();
    const Eigen::Index T = g.truncation();
    DocumentState state;
    state.phi = MatrixXd::Constant(static_cast<Eigen::Index>(doc.entries.size()), T,
                                   1.0 / static_cast<double>(T));
    const double n_m = static_cast<double>(doc.total);
    state.a = (g.beta * view.p).array() + n_m / static_cast<double>(T);
    state.xi = state.a.sum();  // unit-rate means
    state.b = VectorXd::Constant(T, 1.0 + n_m / state.xi);
    state.u_hat = VectorXd::Zero(g.latent_dim());
    return state;
}

// Coordinate ascent over phi, (a,b), xi and u_hat until the normalized
// topic proportions stop moving.
inline void fit_document_state(const Document& doc, DocumentState& state, const GlobalView& view,
                               const FitOptions& opts) {
    VectorXd proportions = expected_z(state);
    proportions /= proportions.sum();
    for (int it = 0; it < opts.max_iters; ++it) {
        update_phi(doc, state, view);
        update_z(doc, state, view);
        update_xi(state);
        update_u(state, view, opts.location_steps);
        VectorXd next = expected_z(state);
        next /= next.sum();
        const double change = (next - proportions).cwiseAbs().mean();
        proportions.swap(next);
        if (change < opts.tol) break;
    }
}

inline DocumentState fit_document(const Document& doc, const GlobalView& view,
                                  const FitOptions& opts = {}) {
    if (doc.total < 1 || doc.entries.empty()) throw validate_error("fit_document: empty document");
    DocumentState state = init_document_state(doc, view);
    fit_document_state(doc, state, view, opts);
    return state;
}

}  // namespace diln
