#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <Eigen/SVD>

#include "mvfuse/internal.hpp"

namespace mvfuse {

namespace {

constexpr double kGammaA0 = 1e-3;
constexpr double kGammaB0 = 1e-3;

double digamma(double x) {
    // asymptotic expansion with upward recurrence; x > 0
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return result;
}

// Variational state for the factor model. All expectations are under q.
struct GfaState {
    int n_factors;
    Eigen::Index n_samples;
    std::vector<Matrix> y;        // per view, unobserved rows zeroed
    std::vector<std::vector<Eigen::Index>> observed;  // sample indices per view
    std::vector<uint64_t> pattern;                    // per sample bitmask of observed views

    Matrix z_mean;                                 // N x M
    std::map<uint64_t, Matrix> z_cov;              // shared by observation pattern
    std::vector<Matrix> w_mean;                    // per view: D_i x M
    std::vector<std::vector<Matrix>> w_cov;        // per view, per feature: M x M
    std::vector<Vector> tau_b;                     // per view, per feature
    std::vector<double> tau_a;                     // per view scalar a0 + N_i/2
    Vector alpha_b;                                // per factor
    double alpha_a = 0.0;

    std::vector<Vector> e_tau;   // per view, per feature
    Vector e_alpha;              // per factor

    std::vector<Matrix> weighted_moment;  // C_i = sum_d tau_id E[w w^T], M x M
    std::vector<Matrix> z_gram;           // G_i = sum_{n in O_i} E[z z^T], M x M
};

void refresh_weighted_moments(GfaState& s) {
    const int M = s.n_factors;
    for (size_t i = 0; i < s.y.size(); ++i) {
        Matrix c = Matrix::Zero(M, M);
        for (Eigen::Index d = 0; d < s.y[i].cols(); ++d)
            c += s.e_tau[i](d) *
                 (s.w_mean[i].row(d).transpose() * s.w_mean[i].row(d) + s.w_cov[i][static_cast<size_t>(d)]);
        s.weighted_moment[i] = c;
    }
}

void update_z(GfaState& s) {
    const int M = s.n_factors;
    refresh_weighted_moments(s);

    std::map<uint64_t, Matrix> cov;
    for (uint64_t p : s.pattern) {
        if (cov.count(p)) continue;
        Matrix lambda = Matrix::Identity(M, M);
        for (size_t i = 0; i < s.y.size(); ++i)
            if (p & (uint64_t{1} << i)) lambda += s.weighted_moment[i];
        cov[p] = lambda.llt().solve(Matrix::Identity(M, M));
    }
    s.z_cov = std::move(cov);

    Matrix b = Matrix::Zero(s.n_samples, M);
    for (size_t i = 0; i < s.y.size(); ++i)
        b += s.y[i] * (s.e_tau[i].asDiagonal() * s.w_mean[i]);
    for (Eigen::Index n = 0; n < s.n_samples; ++n)
        s.z_mean.row(n) = b.row(n) * s.z_cov.at(s.pattern[static_cast<size_t>(n)]);
}

void refresh_z_gram(GfaState& s) {
    const int M = s.n_factors;
    for (size_t i = 0; i < s.y.size(); ++i) {
        Matrix g = Matrix::Zero(M, M);
        for (Eigen::Index n : s.observed[i]) {
            g += s.z_mean.row(n).transpose() * s.z_mean.row(n);
            g += s.z_cov.at(s.pattern[static_cast<size_t>(n)]);
        }
        s.z_gram[i] = g;
    }
}

void update_w(GfaState& s) {
    refresh_z_gram(s);
    for (size_t i = 0; i < s.y.size(); ++i) {
        Matrix t = s.y[i].transpose() * s.z_mean;  // D_i x M, zero rows drop out
        for (Eigen::Index d = 0; d < s.y[i].cols(); ++d) {
            Matrix lambda = Matrix(s.e_alpha.asDiagonal()) + s.e_tau[i](d) * s.z_gram[i];
            Matrix phi = lambda.llt().solve(Matrix::Identity(s.n_factors, s.n_factors));
            s.w_cov[i][static_cast<size_t>(d)] = phi;
            s.w_mean[i].row(d) = s.e_tau[i](d) * (phi * t.row(d).transpose()).transpose();
        }
    }
}

void update_tau(GfaState& s) {
    for (size_t i = 0; i < s.y.size(); ++i) {
        Matrix t = s.y[i].transpose() * s.z_mean;
        for (Eigen::Index d = 0; d < s.y[i].cols(); ++d) {
            double ss = s.y[i].col(d).squaredNorm();
            double cross = s.w_mean[i].row(d).dot(t.row(d));
            Matrix ewwt = s.w_mean[i].row(d).transpose() * s.w_mean[i].row(d) +
                          s.w_cov[i][static_cast<size_t>(d)];
            double quad = (s.z_gram[i] * ewwt).trace();
            s.tau_b[i](d) = kGammaB0 + 0.5 * (ss - 2.0 * cross + quad);
            s.e_tau[i](d) = s.tau_a[i] / s.tau_b[i](d);
        }
    }
}

void update_alpha(GfaState& s) {
    const int M = s.n_factors;
    Vector b = Vector::Constant(M, kGammaB0);
    for (size_t i = 0; i < s.y.size(); ++i)
        for (Eigen::Index d = 0; d < s.y[i].cols(); ++d)
            for (int k = 0; k < M; ++k)
                b(k) += 0.5 * (s.w_mean[i](d, k) * s.w_mean[i](d, k) +
                               s.w_cov[i][static_cast<size_t>(d)](k, k));
    s.alpha_b = b;
    for (int k = 0; k < M; ++k) s.e_alpha(k) = s.alpha_a / s.alpha_b(k);
}

double gamma_kl_term(double qa, double qb, double e_log, double e_val) {
    return kGammaA0 * std::log(kGammaB0) - std::lgamma(kGammaA0) +
           (kGammaA0 - qa) * e_log - kGammaB0 * e_val - qa * std::log(qb) +
           std::lgamma(qa) + qa;
}

double compute_elbo(GfaState& s) {
    const int M = s.n_factors;
    const double log2pi = std::log(2.0 * M_PI);
    double elbo = 0.0;

    refresh_weighted_moments(s);
    refresh_z_gram(s);

    // Likelihood over observed (sample, view) pairs.
    for (size_t i = 0; i < s.y.size(); ++i) {
        const auto n_obs = static_cast<double>(s.observed[i].size());
        const Eigen::Index d_i = s.y[i].cols();
        double sum_logtau = 0.0, sum_tau_ss = 0.0;
        for (Eigen::Index d = 0; d < d_i; ++d) {
            sum_logtau += digamma(s.tau_a[i]) - std::log(s.tau_b[i](d));
            sum_tau_ss += s.e_tau[i](d) * s.y[i].col(d).squaredNorm();
        }
        Matrix wt = s.e_tau[i].asDiagonal() * s.w_mean[i];  // D_i x M
        double cross = (s.z_mean.cwiseProduct(s.y[i] * wt)).sum();
        double quad = (s.z_gram[i] * s.weighted_moment[i]).trace();
        elbo += 0.5 * (n_obs * sum_logtau - n_obs * static_cast<double>(d_i) * log2pi -
                       (sum_tau_ss - 2.0 * cross + quad));
    }

    // KL(q(Z) || p(Z))
    std::map<uint64_t, std::pair<double, double>> cov_stats;  // logdet, trace
    for (const auto& [p, cov] : s.z_cov) {
        double ld = std::log(cov.llt().matrixL().determinant()) * 2.0;
        cov_stats[p] = {ld, cov.trace()};
    }
    for (Eigen::Index n = 0; n < s.n_samples; ++n) {
        const auto& [ld, tr] = cov_stats.at(s.pattern[static_cast<size_t>(n)]);
        elbo += 0.5 * (ld + M - tr - s.z_mean.row(n).squaredNorm());
    }

    // KL(q(W) || p(W|alpha))
    Vector e_log_alpha(M);
    for (int k = 0; k < M; ++k) e_log_alpha(k) = digamma(s.alpha_a) - std::log(s.alpha_b(k));
    for (size_t i = 0; i < s.y.size(); ++i) {
        for (Eigen::Index d = 0; d < s.y[i].cols(); ++d) {
            const Matrix& phi = s.w_cov[i][static_cast<size_t>(d)];
            double ld = std::log(phi.llt().matrixL().determinant()) * 2.0;
            double penalty = 0.0;
            for (int k = 0; k < M; ++k)
                penalty += s.e_alpha(k) * (s.w_mean[i](d, k) * s.w_mean[i](d, k) + phi(k, k));
            elbo += 0.5 * (e_log_alpha.sum() - penalty + ld + M);
        }
    }

    // Gamma prior/posterior terms.
    for (int k = 0; k < M; ++k)
        elbo += gamma_kl_term(s.alpha_a, s.alpha_b(k), e_log_alpha(k), s.e_alpha(k));
    for (size_t i = 0; i < s.y.size(); ++i)
        for (Eigen::Index d = 0; d < s.y[i].cols(); ++d)
            elbo += gamma_kl_term(s.tau_a[i], s.tau_b[i](d),
                                  digamma(s.tau_a[i]) - std::log(s.tau_b[i](d)), s.e_tau[i](d));
    return elbo;
}

// R2 of each factor in each view, restricted to the view's observed rows.
Matrix masked_variance_explained(const GfaState& s) {
    const int M = s.n_factors;
    Matrix r2 = Matrix::Zero(M, static_cast<Eigen::Index>(s.y.size()));
    for (size_t i = 0; i < s.y.size(); ++i) {
        double total = 0.0;
        for (Eigen::Index n : s.observed[i]) total += s.y[i].row(n).squaredNorm();
        if (total < 1e-24) continue;
        for (int k = 0; k < M; ++k) {
            double rss = 0.0;
            for (Eigen::Index n : s.observed[i])
                rss += (s.y[i].row(n) - s.z_mean(n, k) * s.w_mean[i].col(k).transpose())
                           .squaredNorm();
            r2(k, static_cast<Eigen::Index>(i)) = 1.0 - rss / total;
        }
    }
    return r2;
}

}  // namespace

int GfaModel::n_active() const {
    return static_cast<int>(std::count(active_factors.begin(), active_factors.end(), true));
}

IntegrationResult gfa_fit(const std::vector<ModalityDataset>& datasets,
                          const IntegrationConfig& config,
                          const std::optional<ViewMask>& observed_mask) {
    detail::check_aligned(datasets);
    if (datasets.size() > 64) throw ConfigError("gfa_fit: more than 64 views unsupported");
    const Eigen::Index n = datasets[0].n_samples();
    const size_t n_views = datasets.size();
    const int M = config.max_factors;
    if (M < 1) throw ConfigError("gfa_fit: max_factors must be >= 1");

    ViewMask mask = observed_mask
                        ? *observed_mask
                        : ViewMask::Constant(n, static_cast<Eigen::Index>(n_views), true);
    if (mask.rows() != n || mask.cols() != static_cast<Eigen::Index>(n_views))
        throw SchemaError("gfa_fit: observed_mask shape mismatch");

    GfaState s;
    s.n_factors = M;
    s.n_samples = n;
    for (size_t i = 0; i < n_views; ++i) {
        Matrix y = datasets[i].values;
        std::vector<Eigen::Index> obs;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (mask(r, static_cast<Eigen::Index>(i)))
                obs.push_back(r);
            else
                y.row(r).setZero();
        }
        if (static_cast<int>(obs.size()) < config.max_factors)
            throw InsufficientSamplesError("gfa_fit: view '" + datasets[i].name +
                                           "' observed by fewer samples than max_factors");
        s.y.push_back(std::move(y));
        s.observed.push_back(std::move(obs));
    }
    s.pattern.resize(static_cast<size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
        uint64_t p = 0;
        for (size_t i = 0; i < n_views; ++i)
            if (mask(r, static_cast<Eigen::Index>(i))) p |= uint64_t{1} << i;
        if (p == 0)
            throw MissingAllViewsError("gfa_fit: sample '" + datasets[0].sample_ids[static_cast<size_t>(r)] +
                                       "' observes no views");
        s.pattern[static_cast<size_t>(r)] = p;
    }

    // Initialization: factor means from the PCA of the concatenated data
    // (missing blocks as zeros), remaining factors seeded with small noise.
    Eigen::Index total_d = 0;
    for (const auto& y : s.y) total_d += y.cols();
    Matrix concat(n, total_d);
    {
        Eigen::Index at = 0;
        for (const auto& y : s.y) {
            concat.middleCols(at, y.cols()) = y;
            at += y.cols();
        }
    }
    Matrix centered = concat.rowwise() - concat.colwise().mean();
    Eigen::BDCSVD<Matrix> init_svd(centered, Eigen::ComputeThinU);
    std::mt19937 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    s.z_mean = Matrix::Zero(n, M);
    const int init_rank = static_cast<int>(std::min<Eigen::Index>(M, init_svd.singularValues().size()));
    for (int k = 0; k < init_rank; ++k) {
        double sv = init_svd.singularValues()(k);
        if (sv > 1e-12 * init_svd.singularValues()(0))
            s.z_mean.col(k) = init_svd.matrixU().col(k) * std::sqrt(static_cast<double>(n));
    }
    for (int k = 0; k < M; ++k)
        if (s.z_mean.col(k).squaredNorm() == 0.0)
            for (Eigen::Index r = 0; r < n; ++r) s.z_mean(r, k) = 0.01 * gauss(rng);

    for (uint64_t p : s.pattern)
        if (!s.z_cov.count(p)) s.z_cov[p] = Matrix::Zero(M, M);
    for (size_t i = 0; i < n_views; ++i) {
        const Eigen::Index d_i = s.y[i].cols();
        s.w_mean.push_back(Matrix::Zero(d_i, M));
        s.w_cov.emplace_back(static_cast<size_t>(d_i), Matrix::Zero(M, M));
        s.tau_a.push_back(kGammaA0 + static_cast<double>(s.observed[i].size()) / 2.0);
        s.tau_b.push_back(Vector::Ones(d_i));
        s.e_tau.push_back(Vector::Ones(d_i));
        s.weighted_moment.push_back(Matrix::Zero(M, M));
        s.z_gram.push_back(Matrix::Zero(M, M));
    }
    s.alpha_a = kGammaA0 + static_cast<double>(total_d) / 2.0;
    s.alpha_b = Vector::Ones(M);
    s.e_alpha = Vector::Ones(M);

    // Seed W and precisions from the initial factors before the main loop.
    update_w(s);
    update_tau(s);
    update_alpha(s);

    GfaModel model;
    bool converged = false;
    int it = 0;
    double prev_elbo = 0.0;
    for (; it < config.gfa_max_iter; ++it) {
        update_z(s);
        update_w(s);
        update_tau(s);
        update_alpha(s);
        double elbo = compute_elbo(s);
        model.elbo_trace.push_back(elbo);
        if (it > 0 && std::abs(elbo - prev_elbo) <
                          config.gfa_tolerance * (std::abs(elbo) + 1e-12)) {
            converged = true;
            ++it;
            break;
        }
        prev_elbo = elbo;
    }
    model.converged = converged;
    model.iterations = it;

    // Factor pruning: drop factors below the variance threshold in every view,
    // then one refit pass of W and noise on the survivors.
    Matrix r2 = masked_variance_explained(s);
    std::vector<bool> active(static_cast<size_t>(M), false);
    for (int k = 0; k < M; ++k)
        for (size_t i = 0; i < n_views; ++i)
            if (r2(k, static_cast<Eigen::Index>(i)) >= config.prune_fraction) active[static_cast<size_t>(k)] = true;

    std::vector<int> keep, dropped;
    for (int k = 0; k < M; ++k) (active[static_cast<size_t>(k)] ? keep : dropped).push_back(k);

    // Canonical order among survivors: total variance explained, descending.
    std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) {
        return r2.row(a).sum() > r2.row(b).sum();
    });
    std::vector<int> order = keep;
    order.insert(order.end(), dropped.begin(), dropped.end());
    const int n_active = static_cast<int>(keep.size());

    auto permute_cols = [&](const Matrix& x) {
        Matrix out(x.rows(), x.cols());
        for (int k = 0; k < M; ++k) out.col(k) = x.col(order[static_cast<size_t>(k)]);
        return out;
    };
    s.z_mean = permute_cols(s.z_mean);
    for (size_t i = 0; i < n_views; ++i) s.w_mean[i] = permute_cols(s.w_mean[i]);
    {
        Vector ea(M), ab(M);
        for (int k = 0; k < M; ++k) {
            ea(k) = s.e_alpha(order[static_cast<size_t>(k)]);
            ab(k) = s.alpha_b(order[static_cast<size_t>(k)]);
        }
        s.e_alpha = ea;
        s.alpha_b = ab;
    }
    for (size_t i = 0; i < n_views; ++i)
        for (auto& phi : s.w_cov[i]) {
            Matrix p(M, M);
            for (int a = 0; a < M; ++a)
                for (int b = 0; b < M; ++b) p(a, b) = phi(order[static_cast<size_t>(a)], order[static_cast<size_t>(b)]);
            phi = p;
        }
    {
        std::map<uint64_t, Matrix> cov;
        for (const auto& [p, c] : s.z_cov) {
            Matrix pc(M, M);
            for (int a = 0; a < M; ++a)
                for (int b = 0; b < M; ++b) pc(a, b) = c(order[static_cast<size_t>(a)], order[static_cast<size_t>(b)]);
            cov[p] = pc;
        }
        s.z_cov = std::move(cov);
    }

    // Refit restricted to active factors. Pruned factors can hold a slice of
    // shared signal while they are alive, so dropping their columns without
    // re-optimising leaves the survivors slightly rotated; re-running the
    // coordinate updates on the reduced model recovers it.
    if (n_active < M && n_active > 0) {
        GfaState rs;
        rs.n_factors = n_active;
        rs.n_samples = s.n_samples;
        rs.y = s.y;
        rs.observed = s.observed;
        rs.pattern = s.pattern;
        rs.z_mean = s.z_mean.leftCols(n_active);
        for (const auto& [p, c] : s.z_cov) rs.z_cov[p] = c.topLeftCorner(n_active, n_active);
        for (size_t i = 0; i < n_views; ++i) {
            rs.w_mean.push_back(s.w_mean[i].leftCols(n_active));
            rs.w_cov.emplace_back();
            for (const auto& phi : s.w_cov[i])
                rs.w_cov.back().push_back(phi.topLeftCorner(n_active, n_active));
            rs.tau_b.push_back(s.tau_b[i]);
            rs.e_tau.push_back(s.e_tau[i]);
            rs.weighted_moment.push_back(Matrix::Zero(n_active, n_active));
            rs.z_gram.push_back(Matrix::Zero(n_active, n_active));
        }
        rs.tau_a = s.tau_a;
        rs.alpha_a = s.alpha_a;
        rs.alpha_b = s.alpha_b.head(n_active);
        rs.e_alpha = s.e_alpha.head(n_active);

        double refit_prev = 0.0;
        for (int rit = 0; rit < config.gfa_max_iter; ++rit) {
            update_z(rs);
            update_w(rs);
            update_tau(rs);
            update_alpha(rs);
            double elbo = compute_elbo(rs);
            if (rit > 0 && std::abs(elbo - refit_prev) <
                               config.gfa_tolerance * (std::abs(elbo) + 1e-12))
                break;
            refit_prev = elbo;
        }

        s.z_mean.leftCols(n_active) = rs.z_mean;
        s.z_mean.rightCols(M - n_active).setZero();
        for (auto& [p, c] : s.z_cov) {
            c.setZero();
            c.topLeftCorner(n_active, n_active) = rs.z_cov.at(p);
        }
        for (size_t i = 0; i < n_views; ++i) {
            s.w_mean[i].setZero();
            s.w_mean[i].leftCols(n_active) = rs.w_mean[i];
            for (size_t d = 0; d < s.w_cov[i].size(); ++d) {
                s.w_cov[i][d].setZero();
                s.w_cov[i][d].topLeftCorner(n_active, n_active) = rs.w_cov[i][d];
            }
            s.tau_b[i] = rs.tau_b[i];
            s.e_tau[i] = rs.e_tau[i];
        }
        s.alpha_b.head(n_active) = rs.alpha_b;
        s.e_alpha.head(n_active) = rs.e_alpha;
    } else if (n_active == 0) {
        s.z_mean.setZero();
        for (size_t i = 0; i < n_views; ++i) s.w_mean[i].setZero();
    }

    // Sign convention: largest-|loading| entry positive per factor.
    for (int k = 0; k < n_active; ++k) {
        double best = 0.0, sign = 1.0;
        for (size_t i = 0; i < n_views; ++i)
            for (Eigen::Index d = 0; d < s.w_mean[i].rows(); ++d)
                if (std::abs(s.w_mean[i](d, k)) > best) {
                    best = std::abs(s.w_mean[i](d, k));
                    sign = s.w_mean[i](d, k) >= 0 ? 1.0 : -1.0;
                }
        if (sign < 0) {
            s.z_mean.col(k) *= -1.0;
            for (size_t i = 0; i < n_views; ++i) s.w_mean[i].col(k) *= -1.0;
            for (size_t i = 0; i < n_views; ++i)
                for (auto& phi : s.w_cov[i]) {
                    phi.row(k) *= -1.0;
                    phi.col(k) *= -1.0;
                }
            for (auto& [p, c] : s.z_cov) {
                c.row(k) *= -1.0;
                c.col(k) *= -1.0;
            }
        }
    }

    // Package the model.
    model.factors = s.z_mean;
    model.factor_precisions = s.e_alpha;
    model.active_factors.assign(static_cast<size_t>(M), false);
    for (int k = 0; k < n_active; ++k) model.active_factors[static_cast<size_t>(k)] = true;
    for (size_t i = 0; i < n_views; ++i) {
        model.loadings.push_back(s.w_mean[i]);
        model.noise_variances.push_back(s.e_tau[i].cwiseInverse());
    }
    refresh_weighted_moments(s);
    for (size_t i = 0; i < n_views; ++i) {
        model.view_precision_blocks.push_back(s.weighted_moment[i].topLeftCorner(n_active, n_active));
        model.view_score_maps.push_back(s.e_tau[i].asDiagonal() * s.w_mean[i].leftCols(n_active));
    }

    IntegrationResult res;
    res.fitted.config = config;
    MergedRepresentation& merged = res.merged;
    merged.sample_ids = datasets[0].sample_ids;
    merged.scores = s.z_mean.leftCols(n_active);
    for (int k = 0; k < n_active; ++k)
        merged.component_labels.push_back({ComponentLabel::Kind::Factor, "", k + 1});
    for (size_t i = 0; i < n_views; ++i) {
        res.fitted.view_names.push_back(datasets[i].name);
        res.fitted.view_features.push_back(datasets[i].feature_names);
        res.fitted.view_pca.push_back(std::nullopt);
        merged.view_names.push_back(datasets[i].name);
        merged.weight_tables.push_back(s.w_mean[i].leftCols(n_active));
    }
    Matrix final_r2 = masked_variance_explained(s);
    merged.variance_explained = final_r2.topRows(n_active);

    res.fitted.gfa = std::move(model);
    return res;
}

Matrix gfa_impute_latent(const GfaModel& model, const std::vector<Matrix>& view_values,
                         const ViewMask& observed) {
    const int m_act = model.n_active();
    if (view_values.empty()) throw EmptyInputError("gfa_impute_latent: no views");
    const Eigen::Index n = view_values[0].rows();
    if (observed.rows() != n || observed.cols() != static_cast<Eigen::Index>(view_values.size()))
        throw SchemaError("gfa_impute_latent: mask shape mismatch");
    for (size_t i = 0; i < view_values.size(); ++i)
        if (view_values[i].cols() != model.loadings[i].rows())
            throw SchemaError("gfa_impute_latent: feature count mismatch for view " +
                              std::to_string(i));

    Matrix out(n, m_act);
    std::map<uint64_t, Matrix> cov_cache;
    for (Eigen::Index r = 0; r < n; ++r) {
        uint64_t p = 0;
        for (size_t i = 0; i < view_values.size(); ++i)
            if (observed(r, static_cast<Eigen::Index>(i))) p |= uint64_t{1} << i;
        if (p == 0)
            throw MissingAllViewsError("gfa_impute_latent: sample " + std::to_string(r) +
                                       " observes no views");
        auto it = cov_cache.find(p);
        if (it == cov_cache.end()) {
            Matrix lambda = Matrix::Identity(m_act, m_act);
            for (size_t i = 0; i < view_values.size(); ++i)
                if (p & (uint64_t{1} << i)) lambda += model.view_precision_blocks[i];
            it = cov_cache.emplace(p, lambda.llt().solve(Matrix::Identity(m_act, m_act))).first;
        }
        Vector b = Vector::Zero(m_act);
        for (size_t i = 0; i < view_values.size(); ++i)
            if (observed(r, static_cast<Eigen::Index>(i)))
                b += model.view_score_maps[i].transpose() * view_values[i].row(r).transpose();
        out.row(r) = (it->second * b).transpose();
    }
    return out;
}

}  // namespace mvfuse
