#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diln/errors.hpp"
#include "diln/math_util.hpp"

namespace diln {

// HDP mode drops the location machinery: the gamma rate term is fixed at
// one and topic/document locations never enter any update.
enum class Mode { DILN, HDP };

inline const char* to_string(Mode m) { return m == Mode::DILN ? "diln" : "hdp"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "diln") return Mode::DILN;
    if (s == "hdp") return Mode::HDP;
    throw config_error("unknown mode '" + s + "' (expected diln or hdp)");
}

struct KernelConfig {
    int latent_dim = 20;       // d
    double location_var = 0.05;  // c, prior variance of each location coordinate

    void validate() const {
        if (latent_dim < 1) throw config_error("kernel: latent dim must be >= 1");
        if (location_var <= 0.0) throw config_error("kernel: location variance must be > 0");
        if (location_var >= 1.0) {
            std::fprintf(stderr,
                         "warning: location variance %g >= 1 leaves the unnormalized mass "
                         "without a finite mean bound\n",
                         location_var);
        }
    }
};

struct ModelConfig {
    int truncation = 200;  // T
    KernelConfig kernel;
    double gamma0 = 0.5;   // topic Dirichlet prior
    double tau1 = 1.0;     // Gamma prior on alpha
    double tau2 = 1e-3;
    double kappa1 = 1.0;   // Gamma prior on beta
    double kappa2 = 1e-3;
    Mode mode = Mode::DILN;

    void validate() const {
        if (truncation < 1) throw config_error("model: truncation must be >= 1");
        kernel.validate();
        if (gamma0 <= 0.0) throw config_error("model: gamma0 must be > 0");
        if (tau1 <= 0.0 || tau2 <= 0.0) throw config_error("model: tau prior must be > 0");
        if (kappa1 <= 0.0 || kappa2 <= 0.0) throw config_error("model: kappa prior must be > 0");
    }
};

// Corpus-level variational parameters.
struct GlobalState {
    MatrixXd gamma;     // T x V topic Dirichlet parameters
    VectorXd v_stick;   // T sticks in (0,1], last pinned to 1
    MatrixXd ell;       // T x d topic locations
    double alpha = 1.0;
    double beta = 1.0;
    Mode mode = Mode::DILN;

    int truncation() const { return static_cast<int>(gamma.rows()); }
    int vocab_size() const { return static_cast<int>(gamma.cols()); }
    int latent_dim() const { return static_cast<int>(ell.cols()); }
};

// Per-document variational parameters; phi has one row per unique term.
struct DocumentState {
    RowMatrixXd phi; // U x T, rows on the simplex
    VectorXd a;     // T gamma shapes
    VectorXd b;     // T gamma rates
    double xi = 1.0;
    VectorXd u_hat; // document location

    VectorXd expected_z() const { return a.array() / b.array(); }
};

// p_k = V_k prod_{j<k} (1 - V_j).
inline VectorXd stick_weights(const VectorXd& v_stick) {
    VectorXd p(v_stick.size());
    double remaining = 1.0;
    for (Eigen::Index k = 0; k < v_stick.size(); ++k) {
        p[k] = v_stick[k] * remaining;
        remaining *= 1.0 - v_stick[k];
    }
    return p;
}

struct Checkpoint {
    ModelConfig config;
    GlobalState state;
    std::int64_t iteration = 0;
};

namespace detail {

inline void write_double(std::FILE* f, double x) { std::fprintf(f, " %a", x); }

inline double read_double(std::FILE* f) {
    char buf[64];
    if (std::fscanf(f, "%63s", buf) != 1) throw parse_error("checkpoint: truncated file");
    char* end = nullptr;
    double x = std::strtod(buf, &end);
    if (end == buf) throw parse_error("checkpoint: bad float token");
    return x;
}

inline std::int64_t read_int(std::FILE* f) {
    std::int64_t x = 0;
    if (std::fscanf(f, "%" SCNd64, &x) != 1) throw parse_error("checkpoint: truncated file");
    return x;
}

inline void expect_tag(std::FILE* f, const char* tag) {
    char buf[64];
    if (std::fscanf(f, "%63s", buf) != 1 || std::strcmp(buf, tag) != 0) {
        throw parse_error(std::string("checkpoint: expected '") + tag + "'");
    }
}

}  // namespace detail

// Text checkpoint with hex floats; reload is bit exact.
inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write checkpoint '" + path + "'");
    const GlobalState& s = ckpt.state;
    std::fprintf(f, "diln-checkpoint 1\n");
    std::fprintf(f, "mode %s\n", to_string(s.mode));
    std::fprintf(f, "dims %d %d %d\n", s.truncation(), s.vocab_size(), s.latent_dim());
    std::fprintf(f, "iteration %" PRId64 "\n", ckpt.iteration);
    std::fprintf(f, "priors");
    for (double x : {ckpt.config.gamma0, ckpt.config.kernel.location_var, ckpt.config.tau1,
                     ckpt.config.tau2, ckpt.config.kappa1, ckpt.config.kappa2}) {
        detail::write_double(f, x);
    }
    std::fprintf(f, "\nconcentrations");
    detail::write_double(f, s.alpha);
    detail::write_double(f, s.beta);
    std::fprintf(f, "\nv_stick");
    for (Eigen::Index k = 0; k < s.v_stick.size(); ++k) detail::write_double(f, s.v_stick[k]);
    std::fprintf(f, "\nell\n");
    for (Eigen::Index k = 0; k < s.ell.rows(); ++k) {
        for (Eigen::Index j = 0; j < s.ell.cols(); ++j) detail::write_double(f, s.ell(k, j));
        std::fprintf(f, "\n");
    }
    std::fprintf(f, "gamma\n");
    for (Eigen::Index k = 0; k < s.gamma.rows(); ++k) {
        for (Eigen::Index v = 0; v < s.gamma.cols(); ++v) detail::write_double(f, s.gamma(k, v));
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw io_error("cannot open checkpoint '" + path + "'");
    struct Closer {
        std::FILE* f;
        ~Closer() { std::fclose(f); }
    } closer{f};

    detail::expect_tag(f, "diln-checkpoint");
    if (detail::read_int(f) != 1) throw parse_error("checkpoint: unsupported version");
    Checkpoint ckpt;
    detail::expect_tag(f, "mode");
    char mode_buf[16];
    if (std::fscanf(f, "%15s", mode_buf) != 1) throw parse_error("checkpoint: missing mode");
    ckpt.state.mode = mode_from_string(mode_buf);
    ckpt.config.mode = ckpt.state.mode;

    detail::expect_tag(f, "dims");
    const auto T = detail::read_int(f);
    const auto V = detail::read_int(f);
    const auto d = detail::read_int(f);
    if (T < 1 || V < 1 || d < 1) throw parse_error("checkpoint: bad dimensions");
    ckpt.config.truncation = static_cast<int>(T);
    ckpt.config.kernel.latent_dim = static_cast<int>(d);

    detail::expect_tag(f, "iteration");
    ckpt.iteration = detail::read_int(f);

    detail::expect_tag(f, "priors");
    ckpt.config.gamma0 = detail::read_double(f);
    ckpt.config.kernel.location_var = detail::read_double(f);
    ckpt.config.tau1 = detail::read_double(f);
    ckpt.config.tau2 = detail::read_double(f);
    ckpt.config.kappa1 = detail::read_double(f);
    ckpt.config.kappa2 = detail::read_double(f);

    detail::expect_tag(f, "concentrations");
    ckpt.state.alpha = detail::read_double(f);
    ckpt.state.beta = detail::read_double(f);

    detail::expect_tag(f, "v_stick");
    ckpt.state.v_stick.resize(T);
    for (Eigen::Index k = 0; k < T; ++k) ckpt.state.v_stick[k] = detail::read_double(f);

    detail::expect_tag(f, "ell");
    ckpt.state.ell.resize(T, d);
    for (Eigen::Index k = 0; k < T; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) ckpt.state.ell(k, j) = detail::read_double(f);
    }
    detail::expect_tag(f, "gamma");
    ckpt.state.gamma.resize(T, V);
    for (Eigen::Index k = 0; k < T; ++k) {
        for (Eigen::Index v = 0; v < V; ++v) ckpt.state.gamma(k, v) = detail::read_double(f);
    }
    ckpt.config.validate();

    if (!(ckpt.state.alpha > 0.0) || !(ckpt.state.beta > 0.0)) {
        throw parse_error("checkpoint: concentrations must be positive");
    }
    if ((ckpt.state.gamma.array() <= 0.0).any() || !ckpt.state.gamma.allFinite()) {
        throw parse_error("checkpoint: topic Dirichlet parameters must be positive");
    }
    for (Eigen::Index k = 0; k < T; ++k) {
        const double v = ckpt.state.v_stick[k];
        if (!(v > 0.0 && v <= 1.0)) throw parse_error("checkpoint: stick outside (0,1]");
    }
    if (ckpt.state.v_stick[T - 1] != 1.0) throw parse_error("checkpoint: final stick must be 1");
    return ckpt;
}

}  // namespace diln
