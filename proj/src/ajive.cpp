#include <Eigen/SVD>
#include <algorithm>
#include <numeric>
#include <random>

#include "mvfuse/internal.hpp"

namespace mvfuse {

namespace {

struct ViewSvd {
    Matrix scores_basis;   // A_i: N x m_i, left singular vectors
    Matrix loadings;       // B_i: D_i x m_i
    Vector singular_values;  // full spectrum
    int rank;                // m_i
};

ViewSvd view_svd(const ModalityDataset& ds, int m) {
    Eigen::BDCSVD<Matrix> svd(ds.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ViewSvd out;
    out.scores_basis = svd.matrixU().leftCols(m);
    out.loadings = svd.matrixV().leftCols(m);
    out.singular_values = svd.singularValues();
    out.rank = m;
    return out;
}

// 95th-percentile style quantile on a copy, index = ceil(q*n)-1.
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    auto idx = static_cast<size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
    idx = std::min(idx, v.size() - 1);
    return v[idx];
}

}  // namespace

IntegrationResult ajive_fit(const std::vector<ModalityDataset>& datasets,
                            const IntegrationConfig& config) {
    detail::check_aligned(datasets);
    if (datasets.size() < 2) throw ConfigError("ajive_fit: need at least 2 views");

    const Eigen::Index n_samples = datasets[0].n_samples();
    const size_t n_views = datasets.size();

    std::vector<ViewSvd> svds;
    Eigen::Index total_rank = 0;
    for (size_t i = 0; i < n_views; ++i) {
        int m = detail::resolve_view_rank(config, datasets[i], i);
        total_rank += m;
        svds.push_back(view_svd(datasets[i], m));
    }
    if (total_rank > n_samples)
        throw RankError("ajive_fit: sum of per-view ranks exceeds the sample count");

    // Stack the per-view orthonormal score bases and SVD the stack.
    Matrix stacked(n_samples, total_rank);
    {
        Eigen::Index at = 0;
        for (const auto& s : svds) {
            stacked.middleCols(at, s.rank) = s.scores_basis;
            at += s.rank;
        }
    }
    Eigen::BDCSVD<Matrix> stack_svd(stacked, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& lambda = stack_svd.singularValues();

    // Random-direction null: squared singular statistic of random unit vectors.
    std::mt19937 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> null_stats;
    null_stats.reserve(static_cast<size_t>(config.ajive_resamples));
    for (int r = 0; r < config.ajive_resamples; ++r) {
        Vector v(n_samples);
        for (Eigen::Index j = 0; j < n_samples; ++j) v(j) = gauss(rng);
        v.normalize();
        null_stats.push_back((stacked.transpose() * v).squaredNorm());
    }
    double rand_threshold = quantile(null_stats, config.ajive_percentile);

    // Wedin-style cap from per-view trailing singular values.
    double wedin_threshold = 0.0;
    for (const auto& s : svds) {
        double noise = (s.rank < s.singular_values.size()) ? s.singular_values(s.rank) : 0.0;
        double signal = s.singular_values(s.rank - 1);
        double sin_theta = (signal > 0) ? std::min(1.0, noise / signal) : 1.0;
        wedin_threshold += 1.0 - sin_theta * sin_theta;
    }
    const double threshold = std::max(rand_threshold, wedin_threshold);

    int min_view_rank = svds[0].rank;
    for (const auto& s : svds) min_view_rank = std::min(min_view_rank, s.rank);
    int joint_rank = 0;
    for (Eigen::Index k = 0; k < lambda.size() && joint_rank < min_view_rank; ++k) {
        if (lambda(k) * lambda(k) >= threshold - 1e-9)
            ++joint_rank;
        else
            break;
    }

    AjiveDecomposition dec;
    dec.joint_rank = joint_rank;
    dec.joint_scores = stack_svd.matrixU().leftCols(joint_rank);
    const Matrix& S = dec.joint_scores;

    // Linear map reproducing S from the raw views: S = sum_i Y_i G_i.
    {
        Eigen::Index at = 0;
        for (const auto& s : svds) {
            Matrix q_block = stack_svd.matrixV().block(at, 0, s.rank, joint_rank);
            Matrix g = s.loadings *
                       s.singular_values.head(s.rank).cwiseInverse().asDiagonal() * q_block;
            for (int k = 0; k < joint_rank; ++k) g.col(k) /= lambda(k);
            dec.joint_score_map.push_back(std::move(g));
            at += s.rank;
        }
    }

    for (size_t i = 0; i < n_views; ++i) {
        const auto& s = svds[i];
        const Matrix& Y = datasets[i].values;

        dec.view_ranks.push_back(s.rank);
        dec.joint_weights.push_back(Y.transpose() * S);
        dec.signal_projector.push_back(s.loadings * s.loadings.transpose());

        // Individual structure: the signal approximation with the joint span
        // projected out, truncated by the view's noise level.
        Matrix signal = Y * dec.signal_projector[i];
        Matrix jpw = signal.transpose() * S;  // D_i x M
        Matrix resid = signal - S * jpw.transpose();
        dec.joint_part_weights.push_back(std::move(jpw));

        Eigen::BDCSVD<Matrix> rsvd(resid, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& gamma = rsvd.singularValues();
        double noise = (s.rank < s.singular_values.size()) ? s.singular_values(s.rank) : 0.0;
        double cut = std::max(noise, 1e-8 * s.singular_values(0));
        int mi = 0;
        while (mi < gamma.size() && gamma(mi) > cut) ++mi;

        dec.individual_ranks.push_back(mi);
        dec.individual_scores.push_back(rsvd.matrixU().leftCols(mi));
        dec.individual_weights.push_back(rsvd.matrixV().leftCols(mi) *
                                         gamma.head(mi).asDiagonal());
        dec.individual_singular_values.push_back(gamma.head(mi));
    }

    // Assemble the merged representation: [S | S_1 | ... | S_n].
    IntegrationResult res;
    res.fitted.config = config;
    MergedRepresentation& merged = res.merged;
    merged.sample_ids = datasets[0].sample_ids;
    Eigen::Index K = joint_rank;
    for (int mi : dec.individual_ranks) K += mi;
    merged.scores.resize(n_samples, K);
    merged.scores.leftCols(joint_rank) = S;
    {
        Eigen::Index at = joint_rank;
        for (size_t i = 0; i < n_views; ++i) {
            merged.scores.middleCols(at, dec.individual_ranks[i]) = dec.individual_scores[i];
            at += dec.individual_ranks[i];
        }
    }
    for (int k = 0; k < joint_rank; ++k)
        merged.component_labels.push_back({ComponentLabel::Kind::Joint, "", k + 1});
    for (size_t i = 0; i < n_views; ++i)
        for (int k = 0; k < dec.individual_ranks[i]; ++k)
            merged.component_labels.push_back(
                {ComponentLabel::Kind::Individual, datasets[i].name, k + 1});

    for (size_t i = 0; i < n_views; ++i) {
        res.fitted.view_names.push_back(datasets[i].name);
        res.fitted.view_features.push_back(datasets[i].feature_names);
        res.fitted.view_pca.push_back(std::nullopt);
        merged.view_names.push_back(datasets[i].name);
        Matrix w = Matrix::Zero(datasets[i].n_features(), K);
        w.leftCols(joint_rank) = dec.joint_weights[i];
        Eigen::Index at = joint_rank;
        for (size_t v = 0; v < n_views; ++v) {
            if (v == i) w.middleCols(at, dec.individual_ranks[v]) = dec.individual_weights[v];
            at += dec.individual_ranks[v];
        }
        merged.weight_tables.push_back(std::move(w));
    }

    // Canonical sign/order per block, then mirror the changes back into the
    // decomposition so projection maps stay consistent with merged.scores.
    detail::canonicalize_block(merged, datasets, 0, joint_rank);
    {
        Eigen::Index at = joint_rank;
        for (size_t i = 0; i < n_views; ++i) {
            detail::canonicalize_block(merged, datasets, at, at + dec.individual_ranks[i]);
            at += dec.individual_ranks[i];
        }
    }

    dec.joint_scores = merged.scores.leftCols(joint_rank);
    for (size_t i = 0; i < n_views; ++i)
        dec.joint_weights[i] = merged.weight_tables[i].leftCols(joint_rank);
    {
        // Recover the per-component transform (signed permutation) applied to the
        // joint block and apply it to the projection maps.
        // S_new = S_old T  =>  G_i_new = G_i_old T, jpw_new = jpw_old T.
        if (joint_rank > 0) {
            Matrix old_S(n_samples, joint_rank);
            // reconstruct old S from maps: S_old = sum_i Y_i G_i
            old_S.setZero();
            for (size_t i = 0; i < n_views; ++i) old_S += datasets[i].values * dec.joint_score_map[i];
            Matrix transform = old_S.transpose() * dec.joint_scores;  // orthonormal cols
            for (size_t i = 0; i < n_views; ++i) {
                dec.joint_score_map[i] = dec.joint_score_map[i] * transform;
                dec.joint_part_weights[i] = dec.joint_part_weights[i] * transform;
            }
        }
        Eigen::Index at = joint_rank;
        for (size_t i = 0; i < n_views; ++i) {
            int mi = dec.individual_ranks[i];
            if (mi > 0) {
                Matrix transform = dec.individual_scores[i].transpose() *
                                   merged.scores.middleCols(at, mi);
                dec.individual_scores[i] = merged.scores.middleCols(at, mi);
                dec.individual_weights[i] = merged.weight_tables[i].middleCols(at, mi);
                // gamma follows the permutation encoded in the transform
                Vector g = dec.individual_singular_values[i];
                Vector gp(mi);
                for (int k = 0; k < mi; ++k) {
                    Eigen::Index src;
                    transform.col(k).cwiseAbs().maxCoeff(&src);
                    gp(k) = g(src);
                }
                dec.individual_singular_values[i] = gp;
            }
            at += mi;
        }
    }

    merged.variance_explained = variance_explained(merged, datasets);
    res.fitted.ajive = std::move(dec);
    return res;
}

namespace detail {

Matrix ajive_project(const AjiveDecomposition& dec, const std::vector<ModalityDataset>& datasets) {
    const Eigen::Index n = datasets[0].n_samples();
    const size_t n_views = datasets.size();

    Matrix S = Matrix::Zero(n, dec.joint_rank);
    for (size_t i = 0; i < n_views; ++i) S += datasets[i].values * dec.joint_score_map[i];

    Eigen::Index K = dec.joint_rank;
    for (int mi : dec.individual_ranks) K += mi;
    Matrix out(n, K);
    out.leftCols(dec.joint_rank) = S;

    Eigen::Index at = dec.joint_rank;
    for (size_t i = 0; i < n_views; ++i) {
        int mi = dec.individual_ranks[i];
        if (mi > 0) {
            Matrix resid = datasets[i].values * dec.signal_projector[i] -
                           S * dec.joint_part_weights[i].transpose();
            // V_i carries the singular values, so divide them out twice:
            // scores = resid * H * diag(1/gamma) with H = V_i * diag(1/gamma).
            Matrix h = dec.individual_weights[i] *
                       dec.individual_singular_values[i].cwiseInverse().asDiagonal();
            out.middleCols(at, mi) =
                resid * h * dec.individual_singular_values[i].cwiseInverse().asDiagonal();
        }
        at += mi;
    }
    return out;
}

}  // namespace detail

}  // namespace mvfuse
