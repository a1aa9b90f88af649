#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "mvfuse/models.hpp"

using namespace mvfuse;

namespace {

// Unpenalized logistic MLE by damped Newton iterations; independent of the
// coordinate-descent solver under test.
std::pair<Vector, double> newton_logistic(const Matrix& x, const std::vector<int>& y) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Matrix xi(n, d + 1);
    xi.col(0).setOnes();
    xi.rightCols(d) = x;
    Vector beta = Vector::Zero(d + 1);
    for (int it = 0; it < 200; ++it) {
        Vector eta = xi * beta;
        Vector p = 1.0 / (1.0 + (-eta.array()).exp());
        Vector grad = Vector::Zero(d + 1);
        for (Eigen::Index i = 0; i < n; ++i)
            grad += (p(i) - static_cast<double>(y[static_cast<size_t>(i)])) * xi.row(i).transpose();
        Vector w = p.array() * (1.0 - p.array());
        Matrix hess = xi.transpose() * w.asDiagonal() * xi;
        hess.diagonal().array() += 1e-12;
        Vector step = hess.ldlt().solve(grad);
        beta -= step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-12) break;
    }
    Vector coef = beta.tail(d);
    return {coef, beta(0)};
}

// KKT residual of the lasso-logistic stationarity conditions, evaluated in
// the standardized coordinates the solver works in.
double logistic_kkt_residual(const Matrix& x, const std::vector<int>& y, const FittedModel& fit) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Vector means = x.colwise().mean();
    Vector stds(d);
    for (Eigen::Index j = 0; j < d; ++j)
        stds(j) = std::sqrt((x.col(j).array() - means(j)).square().sum() / static_cast<double>(n));

    Vector eta = x * fit.coefficients;
    eta.array() += *fit.intercept;
    Vector p = 1.0 / (1.0 + (-eta.array()).exp());
    const double lam = fit.penalty.alpha;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (stds(j) < 1e-12) continue;
        double g = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            g += (x(i, j) - means(j)) / stds(j) * (p(i) - static_cast<double>(y[static_cast<size_t>(i)]));
        g /= static_cast<double>(n);
        double beta_std = fit.coefficients(j) * stds(j);
        double r = beta_std != 0.0 ? std::abs(g + lam * (beta_std > 0 ? 1.0 : -1.0))
                                   : std::max(0.0, std::abs(g) - lam);
        worst = std::max(worst, r);
    }
    double g0 = (p.array() - 0.0).sum();
    g0 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) g0 += p(i) - static_cast<double>(y[static_cast<size_t>(i)]);
    worst = std::max(worst, std::abs(g0) / static_cast<double>(n));
    return worst;
}

Matrix random_matrix(std::mt19937& rng, Eigen::Index n, Eigen::Index d) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = dist(rng);
    return x;
}

std::vector<std::string> names(int d) {
    std::vector<std::string> out;
    for (int j = 0; j < d; ++j) out.push_back("x" + std::to_string(j + 1));
    return out;
}

}  // namespace

TEST_CASE("unpenalized logistic matches the Newton oracle") {
    std::mt19937 rng(42);
    for (int rep = 0; rep < 5; ++rep) {
        int n = 120, d = 4;
        Matrix x = random_matrix(rng, n, d);
        Vector truth(d);
        truth << 1.0, -0.5, 0.25, 0.0;
        std::vector<int> y;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            double p = 1.0 / (1.0 + std::exp(-(x.row(i).dot(truth) - 0.2)));
            y.push_back(u(rng) < p ? 1 : 0);
        }
        auto fit = logistic_l1_fit(x, y, names(d), PenaltyConfig{0.0, 1.0, true});
        auto [oracle_coef, oracle_icpt] = newton_logistic(x, y);
        for (int j = 0; j < d; ++j)
            CHECK(std::abs(fit.coefficients(j) - oracle_coef(j)) <= 1e-5);
        CHECK(std::abs(*fit.intercept - oracle_icpt) <= 1e-5);

        // Wald intervals are reported for the unpenalized fit
        for (const auto& fi : fit.interpretation) {
            REQUIRE(fi.standard_error.has_value());
            CHECK(*fi.ci_low < fi.estimate);
            CHECK(*fi.ci_high > fi.estimate);
        }
    }
}

TEST_CASE("penalized logistic satisfies the KKT conditions and drops noise features") {
    std::mt19937 rng(7);
    int n = 200, d = 6;
    Matrix x = random_matrix(rng, n, d);
    std::vector<int> y;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        double p = 1.0 / (1.0 + std::exp(-(2.0 * x(i, 0) - 1.5 * x(i, 1))));
        y.push_back(u(rng) < p ? 1 : 0);
    }
    for (double alpha : {0.01, 0.05, 0.2}) {
        auto fit = logistic_l1_fit(x, y, names(d), PenaltyConfig{alpha, 1.0, true});
        CHECK(fit.converged);
        CHECK(logistic_kkt_residual(x, y, fit) <= 1e-6);
        for (const auto& fi : fit.interpretation) {
            CHECK(fi.selected == (fi.estimate != 0.0));
            CHECK_FALSE(fi.standard_error.has_value());
        }
    }
    // strong penalty: coefficients vanish, intercept equals logit(prevalence)
    auto strong = logistic_l1_fit(x, y, names(d), PenaltyConfig{1e6, 1.0, true});
    CHECK(strong.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
    double prev = 0.0;
    for (int v : y) prev += v;
    prev /= static_cast<double>(n);
    CHECK(std::abs(*strong.intercept - std::log(prev / (1.0 - prev))) <= 1e-6);
}

TEST_CASE("logistic handles a constant feature and rejects degenerate labels") {
    Matrix x(6, 2);
    x << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
    std::vector<int> y{0, 0, 0, 1, 1, 1};
    auto fit = logistic_l1_fit(x, y, names(2), PenaltyConfig{0.1, 1.0, true});
    CHECK(fit.coefficients(1) == 0.0);

    CHECK_THROWS_AS(logistic_l1_fit(x, {1, 1, 1, 1, 1, 1}, names(2), PenaltyConfig{}),
                    DegenerateLabelsError);
}

TEST_CASE("logistic_predict_proba is monotone in the linear predictor") {
    Matrix x(4, 1);
    x << -2, -1, 1, 2;
    std::vector<int> y{0, 0, 1, 1};
    auto fit = logistic_l1_fit(x, y, names(1), PenaltyConfig{0.05, 1.0, true});
    Vector p = logistic_predict_proba(fit, x);
    for (int i = 0; i < 4; ++i) {
        CHECK(p(i) > 0.0);
        CHECK(p(i) < 1.0);
    }
    CHECK(p(0) < p(3));
}

TEST_CASE("cox partial likelihood on a hand-checked fixture") {
    // two subjects, one event at t=1 with risk set {1,2}:
    // nll = log(e^b1 + e^b2) - b1
    Matrix x(2, 1);
    x << 1.0, 0.0;
    Vector time{{1.0, 2.0}};
    std::vector<int> event{1, 0};
    Vector beta{{0.7}};
    double expected = std::log(std::exp(0.7) + 1.0) - 0.7;
    CHECK(cox_negative_log_likelihood(x, time, event, beta) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("unpenalized cox solves the score equation of the three-subject fixture") {
    Matrix x(3, 1);
    x << 0.0, 1.0, 0.0;
    Vector time{{1.0, 2.0, 3.0}};
    std::vector<int> event{1, 1, 1};
    auto fit = coxph_elasticnet_fit(x, time, event, names(1), PenaltyConfig{0.0, 1.0, true});
    CHECK(std::abs(fit.coefficients(0) - 0.5 * std::log(2.0)) <= 1e-4);
    CHECK(std::abs(fit.coefficients(0) - 0.34657) <= 1e-4);
    CHECK_FALSE(fit.intercept.has_value());
    REQUIRE(fit.interpretation[0].standard_error.has_value());
}

TEST_CASE("penalized cox: zero solution at huge alpha, objective decreases with alpha") {
    std::mt19937 rng(3);
    int n = 80;
    Matrix x = random_matrix(rng, n, 3);
    Vector time(n);
    std::vector<int> event;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        time(i) = -std::log(u(rng)) / std::exp(0.8 * x(i, 0));
        event.push_back(u(rng) < 0.7 ? 1 : 0);
    }
    event[0] = 1;

    auto fit_small = coxph_elasticnet_fit(x, time, event, names(3), PenaltyConfig{0.01, 1.0, true});
    auto fit_big = coxph_elasticnet_fit(x, time, event, names(3), PenaltyConfig{1e5, 1.0, true});
    CHECK(fit_big.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(fit_small.coefficients(0) > 0.0);

    // elastic-net mixing shrinks but keeps more features than pure lasso
    auto net = coxph_elasticnet_fit(x, time, event, names(3), PenaltyConfig{0.5, 0.5, true});
    CHECK(net.converged);

    std::vector<int> no_events(static_cast<size_t>(n), 0);
    CHECK_THROWS_AS(coxph_elasticnet_fit(x, time, no_events, names(3), PenaltyConfig{}),
                    NoEventsError);
    Vector bad_time = time;
    bad_time(0) = 0.0;
    CHECK_THROWS_AS(coxph_elasticnet_fit(x, bad_time, event, names(3), PenaltyConfig{}), DataError);
}

TEST_CASE("cox risk score is the linear predictor") {
    Matrix x(3, 2);
    x << 1, 0, 0, 1, 1, 1;
    FittedModel m;
    m.kind = ModelKind::Cox;
    m.coefficients = Vector{{0.5, -0.25}};
    Vector r = coxph_risk_score(m, x);
    CHECK(r(0) == doctest::Approx(0.5));
    CHECK(r(1) == doctest::Approx(-0.25));
    CHECK(r(2) == doctest::Approx(0.25));
}

TEST_CASE("gaussian naive bayes separates well-separated classes") {
    std::mt19937 rng(9);
    std::normal_distribution<double> dist(0.0, 0.3);
    int n = 60;
    Matrix x(n, 2);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
        int c = i % 2;
        x(i, 0) = (c ? 3.0 : 0.0) + dist(rng);
        x(i, 1) = (c ? -3.0 : 0.0) + dist(rng);
        y.push_back(c);
    }
    Vector p = gaussian_nb_fit_predict(x, y, x);
    for (int i = 0; i < n; ++i) {
        if (y[static_cast<size_t>(i)])
            CHECK(p(i) > 0.9);
        else
            CHECK(p(i) < 0.1);
    }
    CHECK_THROWS_AS(gaussian_nb_fit_predict(x, std::vector<int>(static_cast<size_t>(n), 0), x),
                    DegenerateLabelsError);
}

TEST_CASE("gaussian naive bayes matches a hand computation") {
    Matrix xtr(4, 1);
    xtr << 0.0, 1.0, 10.0, 11.0;
    std::vector<int> y{0, 0, 1, 1};
    Matrix xte(1, 1);
    xte << 0.5;
    // symmetric setup: test point at the class-0 mean
    Vector p = gaussian_nb_fit_predict(xtr, y, xte);
    CHECK(p(0) < 1e-6);
}

TEST_CASE("k-means recovers separated blobs and is deterministic") {
    std::mt19937 rng(13);
    std::normal_distribution<double> dist(0.0, 0.2);
    int n = 40;
    Matrix x(n, 2);
    for (int i = 0; i < n; ++i) {
        double cx = i < n / 2 ? 0.0 : 5.0;
        x(i, 0) = cx + dist(rng);
        x(i, 1) = cx + dist(rng);
    }
    auto res = kmeans(x, 2, 1);
    REQUIRE(res.assignments.size() == static_cast<size_t>(n));
    for (int i = 1; i < n / 2; ++i) CHECK(res.assignments[static_cast<size_t>(i)] == res.assignments[0]);
    for (int i = n / 2; i < n; ++i)
        CHECK(res.assignments[static_cast<size_t>(i)] == res.assignments[static_cast<size_t>(n / 2)]);
    CHECK(res.assignments[0] != res.assignments[static_cast<size_t>(n / 2)]);
    REQUIRE(res.centroids.has_value());

    auto res2 = kmeans(x, 2, 1);
    CHECK(res2.assignments == res.assignments);

    CHECK_THROWS_AS(kmeans(x, n + 1, 0), InsufficientSamplesError);
    CHECK_THROWS_AS(kmeans(x, 0, 0), ConfigError);
}

TEST_CASE("dbscan finds dense clusters and flags noise") {
    Matrix x(9, 2);
    x << 0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.1, 0.1,  // cluster A
        5.0, 5.0, 5.1, 5.0, 5.0, 5.1, 5.1, 5.1,   // cluster B
        50.0, 50.0;                                // isolated noise point
    auto res = dbscan(x, 0.5, 3);
    REQUIRE(res.assignments.size() == 9);
    CHECK(res.assignments[0] == res.assignments[1]);
    CHECK(res.assignments[0] == res.assignments[3]);
    CHECK(res.assignments[4] == res.assignments[7]);
    CHECK(res.assignments[0] != res.assignments[4]);
    CHECK(res.assignments[8] == -1);
    CHECK_THROWS_AS(dbscan(x, -1.0, 3), ConfigError);
    CHECK_THROWS_AS(dbscan(x, 0.5, 0), ConfigError);
}
