#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diln/corpus.hpp"
#include "diln/errors.hpp"
#include "diln/model.hpp"
#include "diln/rng.hpp"

namespace diln {

// One draw of the truncated top-level process: sticks, their weights, a
// word distribution and a latent location per atom.
struct TopLevelDraw {
    VectorXd v_sticks;  // (0,1]^T, last entry 1
    VectorXd p;         // stick weights, sums to 1
    MatrixXd eta;       // T x V word distributions
    MatrixXd ell;       // T x d locations
};

// One group-level draw conditioned on a TopLevelDraw.
struct GroupDraw {
    VectorXd u;  // group location
    VectorXd w;  // w_k = ell_k . u
    VectorXd z;  // unnormalized atom masses
    VectorXd g;  // z normalized to the simplex
};

inline VectorXd stick_breaking(const VectorXd& v_sticks) {
    const Eigen::Index T = v_sticks.size();
    if (T < 1) throw domain_error("stick_breaking: empty stick vector");
    for (Eigen::Index k = 0; k < T; ++k) {
        if (!(v_sticks[k] > 0.0 && v_sticks[k] <= 1.0)) {
            throw domain_error("stick_breaking: stick " + std::to_string(k) + " outside (0,1]");
        }
    }
    if (v_sticks[T - 1] != 1.0) throw domain_error("stick_breaking: last stick must be 1");
    return stick_weights(v_sticks);
}

inline TopLevelDraw sample_top_level(double alpha, double gamma0, const KernelConfig& kernel,
                                     int truncation, int vocab_size, Rng& rng) {
    if (alpha <= 0.0) throw domain_error("sample_top_level: alpha must be > 0");
    if (gamma0 <= 0.0) throw domain_error("sample_top_level: gamma0 must be > 0");
    if (truncation < 1) throw domain_error("sample_top_level: truncation must be >= 1");
    kernel.validate();

    TopLevelDraw draw;
    draw.v_sticks.resize(truncation);
    for (int k = 0; k + 1 < truncation; ++k) draw.v_sticks[k] = rng.beta_one(alpha);
    draw.v_sticks[truncation - 1] = 1.0;
    draw.p = stick_weights(draw.v_sticks);

    draw.eta.resize(truncation, vocab_size);
    for (int k = 0; k < truncation; ++k) {
        auto row = rng.dirichlet_symmetric(gamma0, static_cast<std::size_t>(vocab_size));
        for (int v = 0; v < vocab_size; ++v) draw.eta(k, v) = row[static_cast<std::size_t>(v)];
    }
    const double sd = std::sqrt(kernel.location_var);
    draw.ell.resize(truncation, kernel.latent_dim);
    for (int k = 0; k < truncation; ++k) {
        for (int j = 0; j < kernel.latent_dim; ++j) draw.ell(k, j) = rng.normal(0.0, sd);
    }
    return draw;
}

// Z_k ~ Gamma(beta p_k, exp(-w_k)) with w_k evaluated at the given group
// location. Passing u = 0 reduces to the plain gamma-process group draw.
inline GroupDraw sample_group_at(const TopLevelDraw& top, double beta, const VectorXd& u, Rng& rng) {
    if (beta <= 0.0) throw domain_error("sample_group: beta must be > 0");
    GroupDraw draw;
    draw.u = u;
    draw.w = top.ell * u;
    const Eigen::Index T = top.p.size();
    draw.z.resize(T);
    for (Eigen::Index k = 0; k < T; ++k) {
        draw.z[k] = rng.gamma(beta * top.p[k], std::exp(-draw.w[k]));
    }
    draw.g = draw.z / draw.z.sum();
    return draw;
}

inline GroupDraw sample_group(const TopLevelDraw& top, double beta, Rng& rng) {
    VectorXd u(top.ell.cols());
    for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = rng.normal();
    return sample_group_at(top, beta, u, rng);
}

struct Moments {
    double mean_i = 0.0;
    double var_i = 0.0;
    double cov_ij = 0.0;
};

namespace detail {

inline void check_symmetric(const MatrixXd& K) {
    if (K.rows() != K.cols()) throw domain_error("moments: K must be square");
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < K.cols(); ++j) {
            if (std::abs(K(i, j) - K(j, i)) > 1e-12 * std::max(1.0, std::abs(K(i, j)))) {
                throw domain_error("moments: K is not symmetric");
            }
        }
    }
}

}  // namespace detail

// Moments of Z_i, Z_j given the stick weights and the location Gram
// matrix, with the group location integrated out.
inline Moments conditional_moments(double beta, const VectorXd& p, const MatrixXd& K,
                                   Eigen::Index i, Eigen::Index j) {
    detail::check_symmetric(K);
    if (i < 0 || i >= p.size() || j < 0 || j >= p.size()) throw domain_error("moments: index out of range");
    const double kii = K(i, i);
    const double kjj = K(j, j);
    const double kij = K(i, j);
    Moments m;
    m.mean_i = beta * p[i] * std::exp(0.5 * kii);
    m.var_i = beta * p[i] * std::exp(2.0 * kii) +
              beta * beta * p[i] * p[i] * std::exp(kii) * (std::exp(kii) - 1.0);
    m.cov_ij = (i == j) ? m.var_i
                        : beta * beta * p[i] * p[j] * std::exp(0.5 * (kii + kjj)) * (std::exp(kij) - 1.0);
    return m;
}

// Expectations of stick weights under Beta(1, alpha) sticks; atom indices
// are zero-based here, the classic formulas are one-based.
inline double expected_stick_weight(double alpha, Eigen::Index i) {
    const double n = static_cast<double>(i) + 1.0;
    return std::pow(alpha, n - 1.0) / std::pow(1.0 + alpha, n);
}

inline double expected_stick_weight_sq(double alpha, Eigen::Index i) {
    const double n = static_cast<double>(i) + 1.0;
    return 2.0 * std::pow(alpha, n - 1.0) / ((1.0 + alpha) * std::pow(2.0 + alpha, n));
}

inline double expected_stick_weight_cross(double alpha, Eigen::Index i, Eigen::Index j) {
    // requires i > j
    const double ni = static_cast<double>(i) + 1.0;
    const double nj = static_cast<double>(j) + 1.0;
    return std::pow(alpha, ni - 1.0) /
           (std::pow(2.0 + alpha, nj) * std::pow(1.0 + alpha, ni - nj + 1.0));
}

// Same moments with the top-level process integrated out as well.
inline Moments marginal_moments(double alpha, double beta, const MatrixXd& K,
                                Eigen::Index i, Eigen::Index j) {
    detail::check_symmetric(K);
    if (i < 0 || j < 0 || i >= K.rows() || j >= K.rows()) throw domain_error("moments: index out of range");
    if (i < j) std::swap(i, j);  // cross-moment formula needs i > j
    const double kii = K(i, i);
    const double kjj = K(j, j);
    const double kij = K(i, j);
    const double epi = expected_stick_weight(alpha, i);
    const double epj = expected_stick_weight(alpha, j);

    Moments m;
    m.mean_i = beta * epi * std::exp(0.5 * kii);
    m.var_i = beta * epi * std::exp(2.0 * kii) +
              beta * beta * expected_stick_weight_sq(alpha, i) * std::exp(2.0 * kii) -
              beta * beta * epi * epi * std::exp(kii);
    if (i == j) {
        m.cov_ij = m.var_i;
    } else {
        m.cov_ij = beta * beta * expected_stick_weight_cross(alpha, i, j) *
                       std::exp(0.5 * (kii + kjj) + kij) -
                   beta * beta * epi * epj * std::exp(0.5 * (kii + kjj));
    }
    return m;
}

// Closed form of beta * E[exp(c/2 u.u)] for u ~ Normal(0, I_d); upper
// bound on the mean of the unnormalized total mass. Defined for c < 1.
inline double normalizer_bound(double beta, const KernelConfig& kernel) {
    if (beta <= 0.0) throw domain_error("normalizer_bound: beta must be > 0");
    if (kernel.location_var >= 1.0) {
        throw domain_error("normalizer_bound: undefined for location variance >= 1");
    }
    return beta * std::pow(1.0 - kernel.location_var, -0.5 * kernel.latent_dim);
}

// ---------------------------------------------------------------------
// Synthetic corpora with known topics, used by the sample subcommand and
// the recovery tests.

struct SyntheticConfig {
    int num_documents = 1000;
    int vocab_size = 200;
    int num_topics = 10;        // truncation of the generating process
    double alpha = 10.0;
    double beta = 5.0;
    double topic_gamma0 = 0.05; // sparsity of the topic word distributions
    KernelConfig kernel{5, 0.2};
    double mean_doc_length = 120.0;
    Mode mode = Mode::DILN;
    std::uint64_t seed = 1;
};

struct SyntheticCorpus {
    Corpus corpus;
    TopLevelDraw truth;
};

inline SyntheticCorpus generate_corpus(const SyntheticConfig& cfg) {
    if (cfg.num_documents < 1) throw config_error("sample: need at least one document");
    if (cfg.vocab_size < 2) throw config_error("sample: vocabulary too small");
    if (cfg.mean_doc_length < 1.0) throw config_error("sample: mean document length must be >= 1");

    Rng rng(cfg.seed);
    SyntheticCorpus out;
    out.truth = sample_top_level(cfg.alpha, cfg.topic_gamma0, cfg.kernel, cfg.num_topics,
                                 cfg.vocab_size, rng);

    std::vector<std::string> terms(static_cast<std::size_t>(cfg.vocab_size));
    char buf[32];
    for (int v = 0; v < cfg.vocab_size; ++v) {
        std::snprintf(buf, sizeof(buf), "w%04d", v);
        terms[static_cast<std::size_t>(v)] = buf;
    }
    out.corpus.vocabulary = Vocabulary(std::move(terms));

    std::poisson_distribution<int> length_dist(cfg.mean_doc_length);
    const VectorXd zero_u = VectorXd::Zero(cfg.kernel.latent_dim);
    std::vector<int> counts(static_cast<std::size_t>(cfg.vocab_size));
    for (int m = 0; m < cfg.num_documents; ++m) {
        GroupDraw group = (cfg.mode == Mode::DILN) ? sample_group(out.truth, cfg.beta, rng)
                                                   : sample_group_at(out.truth, cfg.beta, zero_u, rng);
        const int length = std::max(1, length_dist(rng.engine()));
        std::fill(counts.begin(), counts.end(), 0);
        std::discrete_distribution<int> topic_dist(group.g.data(), group.g.data() + group.g.size());
        for (int n = 0; n < length; ++n) {
            const int k = topic_dist(rng.engine());
            double r = rng.uniform();
            int v = 0;
            for (; v + 1 < cfg.vocab_size; ++v) {
                r -= out.truth.eta(k, v);
                if (r <= 0.0) break;
            }
            ++counts[static_cast<std::size_t>(v)];
        }
        Document doc;
        for (int v = 0; v < cfg.vocab_size; ++v) {
            if (counts[static_cast<std::size_t>(v)] > 0) {
                doc.entries.emplace_back(v, counts[static_cast<std::size_t>(v)]);
                doc.total += counts[static_cast<std::size_t>(v)];
            }
        }
        out.corpus.documents.push_back(std::move(doc));
    }
    return out;
}

// Sidecar with the generating weights, topics and locations.
inline void save_ground_truth(const TopLevelDraw& truth, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write ground truth '" + path + "'");
    std::fprintf(f, "diln-truth 1\n");
    std::fprintf(f, "dims %d %d %d\n", static_cast<int>(truth.eta.rows()),
                 static_cast<int>(truth.eta.cols()), static_cast<int>(truth.ell.cols()));
    std::fprintf(f, "p");
    for (Eigen::Index k = 0; k < truth.p.size(); ++k) std::fprintf(f, " %.17g", truth.p[k]);
    std::fprintf(f, "\neta\n");
    for (Eigen::Index k = 0; k < truth.eta.rows(); ++k) {
        for (Eigen::Index v = 0; v < truth.eta.cols(); ++v) std::fprintf(f, " %.17g", truth.eta(k, v));
        std::fprintf(f, "\n");
    }
    std::fprintf(f, "ell\n");
    for (Eigen::Index k = 0; k < truth.ell.rows(); ++k) {
        for (Eigen::Index j = 0; j < truth.ell.cols(); ++j) std::fprintf(f, " %.17g", truth.ell(k, j));
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

inline TopLevelDraw load_ground_truth(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw io_error("cannot open ground truth '" + path + "'");
    struct Closer {
        std::FILE* f;
        ~Closer() { std::fclose(f); }
    } closer{f};
    detail::expect_tag(f, "diln-truth");
    if (detail::read_int(f) != 1) throw parse_error("ground truth: unsupported version");
    detail::expect_tag(f, "dims");
    const auto T = detail::read_int(f);
    const auto V = detail::read_int(f);
    const auto d = detail::read_int(f);
    TopLevelDraw truth;
    detail::expect_tag(f, "p");
    truth.p.resize(T);
    for (Eigen::Index k = 0; k < T; ++k) truth.p[k] = detail::read_double(f);
    detail::expect_tag(f, "eta");
    truth.eta.resize(T, V);
    for (Eigen::Index k = 0; k < T; ++k) {
        for (Eigen::Index v = 0; v < V; ++v) truth.eta(k, v) = detail::read_double(f);
    }
    detail::expect_tag(f, "ell");
    truth.ell.resize(T, d);
    for (Eigen::Index k = 0; k < T; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) truth.ell(k, j) = detail::read_double(f);
    }
    return truth;
}

}  // namespace diln
