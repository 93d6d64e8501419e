#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <Eigen/Dense>

namespace diln {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Row-major layout for matrices that are consumed one row at a time.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }

// Dot products feed exp(-x); values beyond this are clipped so the
// updates stay finite.
inline constexpr double kExponentClamp = 30.0;

inline double clamp_exponent(double x) {
    return std::clamp(x, -kExponentClamp, kExponentClamp);
}

inline double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// In-place softmax of one row, stabilised by the max trick.
inline void softmax_row(Eigen::Ref<Eigen::RowVectorXd> row) {
    double m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
}

// E[ln eta_v] for eta ~ Dirichlet(gamma): psi(gamma_v) - psi(sum gamma).
inline VectorXd dirichlet_expected_log(const VectorXd& gamma) {
    double psi_total = digamma(gamma.sum());
    VectorXd out(gamma.size());
    for (Eigen::Index v = 0; v < gamma.size(); ++v) out[v] = digamma(gamma[v]) - psi_total;
    return out;
}

inline double dirichlet_entropy(const VectorXd& gamma) {
    double total = gamma.sum();
    double h = -std::lgamma(total) + (total - static_cast<double>(gamma.size())) * digamma(total);
    for (Eigen::Index v = 0; v < gamma.size(); ++v) {
        h += std::lgamma(gamma[v]) - (gamma[v] - 1.0) * digamma(gamma[v]);
    }
    return h;
}

// Entropy of Gamma(a, b) in the shape/rate parameterisation.
inline double gamma_entropy(double a, double b) {
    return a - std::log(b) + std::lgamma(a) + (1.0 - a) * digamma(a);
}

}  // namespace diln
