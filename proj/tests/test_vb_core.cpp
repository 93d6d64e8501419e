#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "diln/vb_core.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace diln;
using testutil::random_corpus;
using testutil::random_doc_state;
using testutil::random_document;
using testutil::random_global;

namespace {

DocumentState state_with(std::vector<double> a, std::vector<double> b) {
    DocumentState s;
    s.a = Eigen::Map<VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    s.b = Eigen::Map<VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    return s;
}

}  // namespace

TEST_CASE("gamma expectations") {
    auto s = state_with({1.0, 2.0}, {1.0, 1.0});
    REQUIRE(expected_z(s)[0] == Catch::Approx(1.0));
    REQUIRE(expected_z(s)[1] == Catch::Approx(2.0));

    auto s1 = state_with({1.0}, {1.0});
    REQUIRE(expected_log_z(s1)[0] == Catch::Approx(-0.57721566490153286).epsilon(1e-12));

    auto s2 = state_with({10.0}, {2.0});
    const double expect = static_cast<double>(oracle::digamma_integer(10)) - std::log(2.0);
    REQUIRE(expected_log_z(s2)[0] == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("update_phi yields uniform rows under symmetric expectations") {
    Rng rng(3);
    GlobalState g = random_global(4, 6, 2, Mode::DILN, rng);
    g.gamma.setConstant(2.5);  // all topics identical
    GlobalView view = make_view(g);

    Document doc;
    doc.entries = {{1, 2}, {4, 1}};
    doc.total = 3;
    DocumentState state = init_document_state(doc, view);
    state.a.setConstant(1.7);
    state.b.setConstant(0.9);
    update_phi(doc, state, view);
    for (Eigen::Index u = 0; u < state.phi.rows(); ++u) {
        for (Eigen::Index k = 0; k < 4; ++k) REQUIRE(state.phi(u, k) == Catch::Approx(0.25));
    }
}

TEST_CASE("update_phi resolves a ln 3 advantage to 3:1 odds") {
    // two topics with E[ln Z] differing by ln 3, identical word expectations
    Rng rng(4);
    GlobalState g = random_global(2, 3, 2, Mode::DILN, rng);
    g.gamma.row(1) = g.gamma.row(0);
    GlobalView view = make_view(g);

    Document doc;
    doc.entries = {{0, 1}};
    doc.total = 1;
    DocumentState state = init_document_state(doc, view);
    state.a << 3.0, 1.0;  // E[ln Z] gap: digamma cancels only if shapes match, so use b
    state.a.setConstant(1.0);
    state.b << 1.0, 3.0;  // E[ln Z_1] - E[ln Z_2] = ln 3
    update_phi(doc, state, view);
    REQUIRE(state.phi(0, 0) == Catch::Approx(0.75).epsilon(1e-12));
    REQUIRE(state.phi(0, 1) == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("update_phi matches a long-double reference to 1e-10") {
    Rng rng(5);
    const int T = 3, V = 5;
    GlobalState g = random_global(T, V, 2, Mode::DILN, rng);
    GlobalView view = make_view(g);
    Document doc = random_document(V, rng, 3);
    DocumentState state = random_doc_state(doc, g, rng);
    update_phi(doc, state, view);

    for (std::size_t u = 0; u < doc.entries.size(); ++u) {
        const int v = doc.entries[u].first;
        long double row[3];
        long double row_max = -1e30L;
        for (int k = 0; k < T; ++k) {
            long double gamma_sum = 0.0L;
            for (int w = 0; w < V; ++w) gamma_sum += static_cast<long double>(g.gamma(k, w));
            row[k] = oracle::ref_digamma(g.gamma(k, v)) - oracle::ref_digamma(gamma_sum) +
                     oracle::ref_digamma(state.a[k]) - std::log(static_cast<long double>(state.b[k]));
            row_max = std::max(row_max, row[k]);
        }
        long double norm = 0.0L;
        for (int k = 0; k < T; ++k) norm += std::exp(row[k] - row_max);
        for (int k = 0; k < T; ++k) {
            const double expect = static_cast<double>(std::exp(row[k] - row_max) / norm);
            REQUIRE(state.phi(static_cast<Eigen::Index>(u), k) == Catch::Approx(expect).margin(1e-10));
        }
    }
}

TEST_CASE("softmax is invariant to constant shifts and immune to overflow") {
    Eigen::RowVectorXd a(4), b(4), c(4);
    a << 0.3, -1.2, 2.0, 0.0;
    b = a.array() + 123.456;
    c = a.array() + 5000.0;  // would overflow exp without the max shift
    softmax_row(a);
    softmax_row(b);
    softmax_row(c);
    Eigen::Index arg_a, arg_b, arg_c;
    a.maxCoeff(&arg_a);
    b.maxCoeff(&arg_b);
    c.maxCoeff(&arg_c);
    REQUIRE(arg_a == arg_b);
    REQUIRE(arg_a == arg_c);
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((a - c).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(c.sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(std::isfinite(c.maxCoeff()));
}

TEST_CASE("update_z substitutions and the HDP switch") {
    Rng rng(6);
    GlobalState g = random_global(2, 4, 2, Mode::DILN, rng);
    g.beta = 1.0;
    g.v_stick << 0.5, 1.0;  // p = (0.5, 0.5)
    GlobalView view = make_view(g);

    Document doc;
    doc.entries = {{0, 2}};
    doc.total = 2;
    DocumentState state = init_document_state(doc, view);
    state.phi.setConstant(1.0);  // all mass on each topic row-wise; sum phi = 2 per topic
    state.phi.col(1).setZero();
    state.xi = 5.0;
    state.u_hat.setZero();
    g.ell.setZero();
    update_z(doc, state, view);
    REQUIRE(state.a[0] == Catch::Approx(1.0 * 0.5 + 2.0));
    REQUIRE(state.a[1] == Catch::Approx(0.5));
    REQUIRE(state.b[0] == Catch::Approx(1.0 + 2.0 / 5.0));

    // N = 10, xi = 5, zero dot: b = 1 + 2 = 3
    Document doc10;
    doc10.entries = {{0, 10}};
    doc10.total = 10;
    DocumentState s10 = init_document_state(doc10, view);
    s10.xi = 5.0;
    s10.u_hat.setZero();
    update_z(doc10, s10, view);
    REQUIRE(s10.b[0] == Catch::Approx(3.0));

    // HDP: b ignores locations entirely
    GlobalState h = g;
    h.mode = Mode::HDP;
    h.ell.setRandom();
    GlobalView hview = make_view(h);
    DocumentState hs = init_document_state(doc10, hview);
    hs.xi = 5.0;
    hs.u_hat << 3.0, -2.0;
    update_z(doc10, hs, hview);
    REQUIRE(hs.b[0] == Catch::Approx(3.0));
    REQUIRE(hs.b[1] == Catch::Approx(3.0));
}

TEST_CASE("a_k never drops below beta p_k") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        GlobalState g = random_global(5, 8, 2, Mode::DILN, rng);
        GlobalView view = make_view(g);
        Document doc = random_document(8, rng);
        DocumentState state = random_doc_state(doc, g, rng);
        update_phi(doc, state, view);
        update_z(doc, state, view);
        const VectorXd floor = g.beta * view.p;
        for (Eigen::Index k = 0; k < 5; ++k) {
            REQUIRE(state.a[k] >= floor[k] - 1e-12);
            REQUIRE(state.b[k] > 0.0);
        }
        // every phi row is a probability vector
        for (Eigen::Index u = 0; u < state.phi.rows(); ++u) {
            REQUIRE(state.phi.row(u).sum() == Catch::Approx(1.0).margin(1e-12));
            REQUIRE(state.phi.row(u).minCoeff() >= 0.0);
        }
    }
}

TEST_CASE("update_xi equals the sum of gamma means and tightens the surrogate") {
    auto s = state_with({1.0, 2.0}, {1.0, 1.0});
    update_xi(s);
    REQUIRE(s.xi == Catch::Approx(3.0));

    // surrogate at the expansion point equals -ln sum E[Z]
    auto surrogate = [](double xi, double ez_sum) { return -std::log(xi) - (ez_sum - xi) / xi; };
    REQUIRE(surrogate(3.0, 3.0) == Catch::Approx(-std::log(3.0)));
    // away from the optimum it sits strictly below
    REQUIRE(surrogate(1.0, 3.0) == Catch::Approx(-2.0));
    REQUIRE(surrogate(1.0, 3.0) < -std::log(3.0));
    REQUIRE(surrogate(6.0, 3.0) < -std::log(3.0));
}

TEST_CASE("update_u fixed points and decay") {
    Rng rng(8);
    GlobalState g = random_global(3, 5, 2, Mode::DILN, rng);
    GlobalView view = make_view(g);

    Document doc = random_document(5, rng);
    DocumentState state = random_doc_state(doc, g, rng);
    // stationary: E[Z_k] = beta p_k and u = 0
    state.a = g.beta * view.p;
    state.b.setConstant(1.0);
    state.u_hat.setZero();
    update_u(state, view, 20);
    REQUIRE(state.u_hat.cwiseAbs().maxCoeff() == 0.0);

    // zero locations: u shrinks by exactly (1 - rho_s) each step
    GlobalState g0 = g;
    g0.ell.setZero();
    GlobalView view0 = make_view(g0);
    DocumentState s2 = random_doc_state(doc, g0, rng);
    s2.u_hat << 1.0, -2.0;
    const VectorXd before = s2.u_hat;
    update_u(s2, view0, 20);
    double factor = 1.0;
    for (int s = 1; s <= 20; ++s) factor *= 1.0 - (1.0 / 3.0) / (3.0 + s);
    REQUIRE(s2.u_hat[0] == Catch::Approx(before[0] * factor).epsilon(1e-12));
    REQUIRE(s2.u_hat[1] == Catch::Approx(before[1] * factor).epsilon(1e-12));
}

TEST_CASE("document-location gradient matches finite differences of the bound") {
    Rng rng(9);
    GlobalState g = random_global(4, 6, 3, Mode::DILN, rng);
    GlobalView view = make_view(g);
    Document doc = random_document(6, rng);
    DocumentState state = random_doc_state(doc, g, rng);
    ModelConfig cfg;
    cfg.truncation = 4;
    cfg.kernel = {3, 0.3};

    const VectorXd ez = expected_z(state);
    const VectorXd dots = g.ell * state.u_hat;
    VectorXd coeff(4);
    for (int k = 0; k < 4; ++k) {
        coeff[k] = ez[k] * std::exp(-clamp_exponent(dots[k])) - g.beta * view.p[k];
    }
    const VectorXd grad = g.ell.transpose() * coeff - state.u_hat;

    std::vector<Document> docs{doc};
    for (int j = 0; j < 3; ++j) {
        auto f = [&](double x) {
            DocumentState perturbed = state;
            perturbed.u_hat[j] = x;
            std::vector<DocumentState> states{perturbed};
            return compute_bound(docs, states, view, cfg).total;
        };
        const double fd = oracle::central_difference(f, state.u_hat[j], 1e-5);
        REQUIRE(std::abs(fd - grad[j]) / std::max(1e-12, std::abs(fd)) < 1e-4);
    }
}

TEST_CASE("closed-form updates never decrease the bound on a 5-doc corpus") {
    Rng rng(10);
    const int T = 4, V = 10;
    Corpus corpus = random_corpus(5, V, rng);
    GlobalState g = random_global(T, V, 2, Mode::DILN, rng);
    GlobalView view = make_view(g);
    ModelConfig cfg;
    cfg.truncation = T;
    cfg.kernel = {2, 0.3};

    std::vector<DocumentState> states;
    for (const auto& doc : corpus.documents) states.push_back(random_doc_state(doc, g, rng));

    double bound = compute_bound(corpus.documents, states, view, cfg).total;
    const double slack = 1e-8;
    for (int sweep = 0; sweep < 3; ++sweep) {
        for (std::size_t m = 0; m < states.size(); ++m) update_phi(corpus.documents[m], states[m], view);
        double next = compute_bound(corpus.documents, states, view, cfg).total;
        REQUIRE(next >= bound - slack);
        bound = next;

        for (std::size_t m = 0; m < states.size(); ++m) update_z(corpus.documents[m], states[m], view);
        next = compute_bound(corpus.documents, states, view, cfg).total;
        REQUIRE(next >= bound - slack);
        bound = next;

        for (auto& s : states) update_xi(s);
        next = compute_bound(corpus.documents, states, view, cfg).total;
        REQUIRE(next >= bound - slack);
        bound = next;

        for (auto& s : states) update_u(s, view, 20);
        next = compute_bound(corpus.documents, states, view, cfg).total;
        REQUIRE(next >= bound - slack);
        bound = next;
    }
}

TEST_CASE("doubling xi away from the optimum lowers the surrogate term") {
    Rng rng(11);
    GlobalState g = random_global(3, 6, 2, Mode::DILN, rng);
    GlobalView view = make_view(g);
    Document doc = random_document(6, rng);
    DocumentState state = random_doc_state(doc, g, rng);
    update_xi(state);
    ModelConfig cfg;
    cfg.truncation = 3;
    cfg.kernel = {2, 0.3};
    std::vector<Document> docs{doc};
    std::vector<DocumentState> states{state};
    const double at_opt = compute_bound(docs, states, view, cfg).total;
    states[0].xi *= 2.0;
    const double doubled = compute_bound(docs, states, view, cfg).total;
    REQUIRE(doubled < at_opt);
}

TEST_CASE("bound on a one-topic two-word corpus matches a hand expansion") {
    ModelConfig cfg;
    cfg.truncation = 1;
    cfg.kernel = {1, 0.25};
    cfg.gamma0 = 0.7;
    cfg.tau1 = 1.0;
    cfg.tau2 = 1e-3;
    cfg.kappa1 = 1.0;
    cfg.kappa2 = 1e-3;

    GlobalState g;
    g.mode = Mode::DILN;
    g.gamma.resize(1, 2);
    g.gamma << 1.4, 2.2;
    g.v_stick = VectorXd::Ones(1);
    g.ell.resize(1, 1);
    g.ell << 0.3;
    g.alpha = 1.2;
    g.beta = 1.7;

    Document doc;
    doc.entries = {{0, 1}, {1, 1}};
    doc.total = 2;

    DocumentState state;
    state.phi = RowMatrixXd::Ones(2, 1);
    state.a = VectorXd::Constant(1, 2.3);
    state.b = VectorXd::Constant(1, 1.6);
    state.xi = 1.9;
    state.u_hat = VectorXd::Constant(1, -0.5);

    GlobalView view = make_view(g);
    std::vector<Document> docs{doc};
    std::vector<DocumentState> states{state};
    const double got = compute_bound(docs, states, view, cfg).total;

    // independent scalar expansion in long double
    using oracle::ref_digamma;
    const long double gsum = 1.4L + 2.2L;
    const long double elog_eta0 = ref_digamma(1.4L) - ref_digamma(gsum);
    const long double elog_eta1 = ref_digamma(2.2L) - ref_digamma(gsum);
    const long double elog_z = ref_digamma(2.3L) - std::log(1.6L);
    const long double ez = 2.3L / 1.6L;
    const long double dot = 0.3L * -0.5L;
    const long double bp = 1.7L;  // beta * p, p = 1

    long double expect = 0.0L;
    expect += elog_eta0 + elog_eta1;                                    // word likelihoods
    expect += 2.0L * elog_z;                                            // indicator, Z part
    expect += 2.0L * (-std::log(1.9L) - (ez - 1.9L) / 1.9L);            // surrogate
    expect += -bp * dot + (bp - 1.0L) * elog_z - std::exp(-dot) * ez -
              std::lgamma(static_cast<double>(bp));                     // Z prior
    expect += -0.5L * std::log(2.0L * M_PI) - 0.5L * 0.25L;             // u prior
    expect += 2.3L - std::log(1.6L) + std::lgamma(2.3) + (1.0L - 2.3L) * ref_digamma(2.3L);
    // eta prior and entropy
    expect += std::lgamma(1.4) - (1.4L - 1.0L) * ref_digamma(1.4L);
    expect += std::lgamma(2.2) - (2.2L - 1.0L) * ref_digamma(2.2L);
    expect += -std::lgamma(static_cast<double>(gsum)) + (gsum - 2.0L) * ref_digamma(gsum);
    expect += std::lgamma(2.0 * 0.7) - 2.0L * std::lgamma(0.7) + (0.7L - 1.0L) * (elog_eta0 + elog_eta1);
    // location prior
    expect += -0.5L * std::log(2.0L * M_PI * 0.25L) - 0.09L / 0.5L;
    // alpha and beta priors (tau1 = kappa1 = 1)
    expect += std::log(1e-3L) - 1e-3L * 1.2L;
    expect += std::log(1e-3L) - 1e-3L * 1.7L;

    REQUIRE(got == Catch::Approx(static_cast<double>(expect)).margin(1e-8));
}

TEST_CASE("update_z maximizes the bound in (a, b)") {
    Rng rng(12);
    ModelConfig cfg;
    cfg.truncation = 3;
    cfg.kernel = {2, 0.3};
    for (int trial = 0; trial < 20; ++trial) {
        GlobalState g = random_global(3, 7, 2, Mode::DILN, rng);
        GlobalView view = make_view(g);
        Document doc = random_document(7, rng);
        DocumentState state = random_doc_state(doc, g, rng);
        update_phi(doc, state, view);
        update_z(doc, state, view);

        std::vector<Document> docs{doc};
        std::vector<DocumentState> states{state};
        const double at_opt = compute_bound(docs, states, view, cfg).total;
        for (double scale : {0.99, 1.01}) {
            for (int which = 0; which < 2; ++which) {
                states[0] = state;
                if (which == 0) {
                    states[0].a *= scale;
                } else {
                    states[0].b *= scale;
                }
                REQUIRE(compute_bound(docs, states, view, cfg).total < at_opt);
            }
        }
    }
}

TEST_CASE("fit_document concentrates on a separable topic") {
    // topic 0 owns words {0,1}; topic 1 owns words {2,3}
    GlobalState g;
    g.mode = Mode::DILN;
    g.gamma.resize(2, 4);
    g.gamma << 50.0, 50.0, 0.01, 0.01,
               0.01, 0.01, 50.0, 50.0;
    g.v_stick.resize(2);
    g.v_stick << 0.5, 1.0;
    g.ell = MatrixXd::Zero(2, 2);
    g.alpha = 1.0;
    g.beta = 1.0;
    GlobalView view = make_view(g);

    Document doc;
    doc.entries = {{0, 3}, {1, 2}};
    doc.total = 5;
    DocumentState state = fit_document(doc, view);
    for (Eigen::Index u = 0; u < state.phi.rows(); ++u) {
        REQUIRE(state.phi(u, 0) > 0.99);
    }

    Document empty;
    REQUIRE_THROWS_AS(fit_document(empty, view), Error);
}

TEST_CASE("fit_document is deterministic and mode-consistent") {
    Rng rng(13);
    GlobalState g = random_global(4, 9, 3, Mode::HDP, rng);
    GlobalView view = make_view(g);
    Document doc = random_document(9, rng);

    DocumentState s1 = fit_document(doc, view);
    DocumentState s2 = fit_document(doc, view);
    REQUIRE(oracle::bitwise_equal(s1.phi, s2.phi));
    REQUIRE(oracle::bitwise_equal(s1.a, s2.a));
    REQUIRE(oracle::bitwise_equal(s1.b, s2.b));

    // HDP outputs are invariant to arbitrary location changes
    GlobalState g2 = g;
    g2.ell.setRandom();
    g2.ell *= 7.0;
    GlobalView view2 = make_view(g2);
    DocumentState s3 = fit_document(doc, view2);
    REQUIRE(oracle::bitwise_equal(s1.phi, s3.phi));
    REQUIRE(oracle::bitwise_equal(s1.a, s3.a));
    REQUIRE(oracle::bitwise_equal(s1.b, s3.b));
    REQUIRE(s1.xi == s3.xi);
}
