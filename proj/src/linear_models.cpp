#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvfuse/models.hpp"

namespace mvfuse {

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

struct Scaler {
    Vector means;
    Vector stds;  // constant columns keep std 0; their standardized column is all zeros

    static Scaler fit(const Matrix& x) {
        Scaler s;
        const double n = static_cast<double>(x.rows());
        s.means = x.colwise().mean();
        s.stds.resize(x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            s.stds(j) = std::sqrt((x.col(j).array() - s.means(j)).square().sum() / n);
        return s;
    }

    Matrix transform(const Matrix& x) const {
        Matrix out = x;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (s_const(j))
                out.col(j).setZero();
            else
                out.col(j) = (x.col(j).array() - means(j)) / stds(j);
        }
        return out;
    }

    bool s_const(Eigen::Index j) const { return stds(j) < 1e-12; }
};

void fill_interpretation(FittedModel& model, const std::optional<Vector>& se) {
    model.interpretation.clear();
    for (Eigen::Index j = 0; j < model.coefficients.size(); ++j) {
        FeatureInterpretation fi;
        fi.name = model.feature_names[static_cast<size_t>(j)];
        fi.estimate = model.coefficients(j);
        fi.selected = model.coefficients(j) != 0.0;
        if (se) {
            fi.standard_error = (*se)(j);
            fi.ci_low = fi.estimate - 1.959963984540054 * (*se)(j);
            fi.ci_high = fi.estimate + 1.959963984540054 * (*se)(j);
        }
        model.interpretation.push_back(std::move(fi));
    }
}

}  // namespace

FittedModel logistic_l1_fit(const Matrix& x, const std::vector<int>& y,
                            const std::vector<std::string>& feature_names,
                            const PenaltyConfig& penalty, int max_iter) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (static_cast<Eigen::Index>(y.size()) != n)
        throw SchemaError("logistic_l1_fit: label count does not match rows");
    int pos = 0;
    for (int v : y) pos += (v != 0);
    if (pos == 0 || pos == static_cast<int>(y.size()))
        throw DegenerateLabelsError("logistic_l1_fit: both classes required");

    Scaler scaler = Scaler::fit(x);
    Matrix xs = penalty.standardize ? scaler.transform(x) : x;

    const double lam1 = penalty.alpha * penalty.l1_ratio;
    const double lam2 = penalty.alpha * (1.0 - penalty.l1_ratio);
    const double inv_n = 1.0 / static_cast<double>(n);

    // Per-coordinate curvature bound: sigmoid'' <= 1/4.
    Vector lip(d);
    for (Eigen::Index j = 0; j < d; ++j)
        lip(j) = std::max(0.25 * xs.col(j).squaredNorm() * inv_n, 1e-12);

    Vector beta = Vector::Zero(d);
    double beta0 = 0.0;
    Vector eta = Vector::Zero(n);

    int it = 0;
    bool converged = false;
    for (; it < max_iter; ++it) {
        double max_change = 0.0;
        Vector prob = (1.0 / (1.0 + (-eta.array()).exp()));

        // intercept, unpenalized
        double g0 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) g0 += prob(i) - static_cast<double>(y[static_cast<size_t>(i)]);
        g0 *= inv_n;
        double d0 = -g0 / 0.25;
        beta0 += d0;
        eta.array() += d0;
        max_change = std::abs(d0);

        for (Eigen::Index j = 0; j < d; ++j) {
            prob = (1.0 / (1.0 + (-eta.array()).exp()));
            double g = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                g += xs(i, j) * (prob(i) - static_cast<double>(y[static_cast<size_t>(i)]));
            g *= inv_n;
            double z = lip(j) * beta(j) - g;
            double updated = soft_threshold(z, lam1) / (lip(j) + lam2);
            double delta = updated - beta(j);
            if (delta != 0.0) {
                beta(j) = updated;
                eta += xs.col(j) * delta;
            }
            max_change = std::max(max_change, std::abs(delta));
        }
        if (max_change < 1e-8) {
            converged = true;
            ++it;
            break;
        }
    }

    FittedModel model;
    model.kind = ModelKind::Logistic;
    model.feature_names = feature_names;
    model.penalty = penalty;
    model.iterations = it;
    model.converged = converged;

    if (penalty.standardize) {
        model.coefficients = Vector::Zero(d);
        double icpt = beta0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (scaler.s_const(j)) continue;
            model.coefficients(j) = beta(j) / scaler.stds(j);
            icpt -= beta(j) * scaler.means(j) / scaler.stds(j);
        }
        model.intercept = icpt;
    } else {
        model.coefficients = beta;
        model.intercept = beta0;
    }

    std::optional<Vector> se;
    if (penalty.alpha == 0.0) {
        // Wald standard errors from the observed information on original scale.
        Matrix xi(n, d + 1);
        xi.col(0).setOnes();
        xi.rightCols(d) = x;
        Vector eta_orig = xi.rightCols(d) * model.coefficients;
        eta_orig.array() += *model.intercept;
        Vector w = (1.0 / (1.0 + (-eta_orig.array()).exp()));
        w = w.array() * (1.0 - w.array());
        Matrix info = xi.transpose() * w.asDiagonal() * xi;
        info.diagonal().array() += 1e-12;
        Matrix cov = info.llt().solve(Matrix::Identity(d + 1, d + 1));
        Vector s(d);
        for (Eigen::Index j = 0; j < d; ++j) s(j) = std::sqrt(std::max(0.0, cov(j + 1, j + 1)));
        se = s;
    }
    fill_interpretation(model, se);
    return model;
}

Vector logistic_predict_proba(const FittedModel& model, const Matrix& x) {
    if (x.cols() != model.coefficients.size())
        throw SchemaError("logistic_predict_proba: feature count mismatch");
    Vector eta = x * model.coefficients;
    eta.array() += model.intercept.value_or(0.0);
    return 1.0 / (1.0 + (-eta.array()).exp());
}

double cox_negative_log_likelihood(const Matrix& x, const Vector& time,
                                   const std::vector<int>& event, const Vector& beta) {
    const Eigen::Index n = x.rows();
    Vector eta = x * beta;
    double eta_max = eta.maxCoeff();

    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return time(a) > time(b); });

    // walk from the latest time, accumulating the risk set
    double risk_sum = 0.0;
    double nll = 0.0;
    size_t idx = 0;
    while (idx < order.size()) {
        size_t start = idx;
        double t = time(order[idx]);
        while (idx < order.size() && time(order[idx]) == t) {
            risk_sum += std::exp(eta(order[idx]) - eta_max);
            ++idx;
        }
        for (size_t k = start; k < idx; ++k) {
            Eigen::Index i = order[k];
            if (event[static_cast<size_t>(i)])
                nll += std::log(risk_sum) + eta_max - eta(i);
        }
    }
    return nll;
}

namespace {

// Gradient and curvature of the Breslow negative partial log-likelihood for
// one feature, in a single pass over times descending.
void cox_feature_derivatives(const Matrix& x, const Vector& time, const std::vector<int>& event,
                             const Vector& eta, const std::vector<Eigen::Index>& order,
                             Eigen::Index j, double& grad, double& curv) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    const double eta_max = eta.maxCoeff();
    grad = 0.0;
    curv = 0.0;
    size_t idx = 0;
    while (idx < order.size()) {
        size_t start = idx;
        double t = time(order[idx]);
        while (idx < order.size() && time(order[idx]) == t) {
            Eigen::Index i = order[idx];
            double w = std::exp(eta(i) - eta_max);
            s0 += w;
            s1 += w * x(i, j);
            s2 += w * x(i, j) * x(i, j);
            ++idx;
        }
        for (size_t k = start; k < idx; ++k) {
            Eigen::Index i = order[k];
            if (!event[static_cast<size_t>(i)]) continue;
            double mean = s1 / s0;
            grad += mean - x(i, j);
            curv += s2 / s0 - mean * mean;
        }
    }
}

}  // namespace

FittedModel coxph_elasticnet_fit(const Matrix& x, const Vector& time, const std::vector<int>& event,
                                 const std::vector<std::string>& feature_names,
                                 const PenaltyConfig& penalty, int max_iter) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (time.size() != n || static_cast<Eigen::Index>(event.size()) != n)
        throw SchemaError("coxph_elasticnet_fit: row count mismatch");
    for (Eigen::Index i = 0; i < n; ++i)
        if (time(i) <= 0.0) throw DataError("coxph_elasticnet_fit: times must be positive");
    int n_events = 0;
    for (int e : event) n_events += (e != 0);
    if (n_events == 0) throw NoEventsError("coxph_elasticnet_fit: no events observed");

    Scaler scaler = Scaler::fit(x);
    Matrix xs = penalty.standardize ? scaler.transform(x) : x;

    const double lam1 = penalty.alpha * penalty.l1_ratio;
    const double lam2 = penalty.alpha * (1.0 - penalty.l1_ratio);

    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return time(a) > time(b); });

    auto objective = [&](const Vector& b) {
        return cox_negative_log_likelihood(xs, time, event, b) + lam1 * b.lpNorm<1>() +
               0.5 * lam2 * b.squaredNorm();
    };

    Vector beta = Vector::Zero(d);
    Vector eta = Vector::Zero(n);
    double obj = objective(beta);

    int it = 0;
    bool converged = false;
    for (; it < max_iter; ++it) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            double g, h;
            cox_feature_derivatives(xs, time, event, eta, order, j, g, h);
            if (h < 1e-12) continue;  // constant (or degenerate) covariate stays at 0
            double z = h * beta(j) - g;
            double proposed = soft_threshold(z, lam1) / (h + lam2);
            double delta = proposed - beta(j);
            if (delta == 0.0) continue;

            // step halving keeps the penalized objective non-increasing
            double step = 1.0;
            for (int half = 0; half < 30; ++half) {
                Vector cand = beta;
                cand(j) = beta(j) + step * delta;
                double cand_obj = objective(cand);
                if (cand_obj <= obj + 1e-12) {
                    eta += xs.col(j) * (cand(j) - beta(j));
                    max_change = std::max(max_change, std::abs(cand(j) - beta(j)));
                    beta = cand;
                    obj = cand_obj;
                    break;
                }
                step *= 0.5;
            }
        }
        if (max_change < 1e-8) {
            converged = true;
            ++it;
            break;
        }
    }

    FittedModel model;
    model.kind = ModelKind::Cox;
    model.feature_names = feature_names;
    model.penalty = penalty;
    model.iterations = it;
    model.converged = converged;
    model.intercept = std::nullopt;

    if (penalty.standardize) {
        model.coefficients = Vector::Zero(d);
        for (Eigen::Index j = 0; j < d; ++j)
            if (!scaler.s_const(j)) model.coefficients(j) = beta(j) / scaler.stds(j);
    } else {
        model.coefficients = beta;
    }

    std::optional<Vector> se;
    if (penalty.alpha == 0.0) {
        // observed information via the full Hessian of the partial likelihood
        Vector eta_orig = x * model.coefficients;
        Matrix info = Matrix::Zero(d, d);
        double s0 = 0.0;
        Vector s1 = Vector::Zero(d);
        Matrix s2 = Matrix::Zero(d, d);
        const double eta_max = eta_orig.maxCoeff();
        size_t idx = 0;
        while (idx < order.size()) {
            size_t start = idx;
            double t = time(order[idx]);
            while (idx < order.size() && time(order[idx]) == t) {
                Eigen::Index i = order[idx];
                double w = std::exp(eta_orig(i) - eta_max);
                s0 += w;
                s1 += w * x.row(i).transpose();
                s2 += w * x.row(i).transpose() * x.row(i);
                ++idx;
            }
            for (size_t k = start; k < idx; ++k) {
                if (!event[static_cast<size_t>(order[k])]) continue;
                Vector mean = s1 / s0;
                info += s2 / s0 - mean * mean.transpose();
            }
        }
        info.diagonal().array() += 1e-12;
        Matrix cov = info.llt().solve(Matrix::Identity(d, d));
        Vector s(d);
        for (Eigen::Index j = 0; j < d; ++j) s(j) = std::sqrt(std::max(0.0, cov(j, j)));
        se = s;
    }
    fill_interpretation(model, se);
    return model;
}

Vector coxph_risk_score(const FittedModel& model, const Matrix& x) {
    if (x.cols() != model.coefficients.size())
        throw SchemaError("coxph_risk_score: feature count mismatch");
    return x * model.coefficients;
}

Vector gaussian_nb_fit_predict(const Matrix& x_train, const std::vector<int>& y_train,
                               const Matrix& x_test) {
    const Eigen::Index n = x_train.rows(), d = x_train.cols();
    if (static_cast<Eigen::Index>(y_train.size()) != n)
        throw SchemaError("gaussian_nb: label count mismatch");
    if (x_test.cols() != d) throw SchemaError("gaussian_nb: feature count mismatch");

    std::array<std::vector<Eigen::Index>, 2> members;
    for (Eigen::Index i = 0; i < n; ++i) members[y_train[static_cast<size_t>(i)] != 0 ? 1 : 0].push_back(i);
    if (members[0].empty() || members[1].empty())
        throw DegenerateLabelsError("gaussian_nb: both classes required");

    // global variance smoothing, scaled by the largest feature variance
    Vector global_var(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double m = x_train.col(j).mean();
        global_var(j) = (x_train.col(j).array() - m).square().sum() / static_cast<double>(n);
    }
    const double smoothing = 1e-9 * std::max(global_var.maxCoeff(), 1e-300);

    Matrix mu(2, d), var(2, d);
    Vector log_prior(2);
    for (int c = 0; c < 2; ++c) {
        const auto& rows = members[static_cast<size_t>(c)];
        log_prior(c) = std::log(static_cast<double>(rows.size()) / static_cast<double>(n));
        for (Eigen::Index j = 0; j < d; ++j) {
            double m = 0.0;
            for (auto i : rows) m += x_train(i, j);
            m /= static_cast<double>(rows.size());
            double v = 0.0;
            for (auto i : rows) v += (x_train(i, j) - m) * (x_train(i, j) - m);
            v /= static_cast<double>(rows.size());
            mu(c, j) = m;
            var(c, j) = v + smoothing;
        }
    }

    Vector out(x_test.rows());
    for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
        double ll[2];
        for (int c = 0; c < 2; ++c) {
            double s = log_prior(c);
            for (Eigen::Index j = 0; j < d; ++j) {
                double z = x_test(i, j) - mu(c, j);
                s += -0.5 * (std::log(2.0 * M_PI * var(c, j)) + z * z / var(c, j));
            }
            ll[c] = s;
        }
        double m = std::max(ll[0], ll[1]);
        double p1 = std::exp(ll[1] - m);
        out(i) = p1 / (std::exp(ll[0] - m) + p1);
    }
    return out;
}

}  // namespace mvfuse
