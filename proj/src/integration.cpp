#include "mvfuse/integration.hpp"

#include <algorithm>
#include <numeric>

#include "mvfuse/internal.hpp"

namespace mvfuse {

std::string ComponentLabel::to_string() const {
    switch (kind) {
        case Kind::Joint:
            return "Joint" + std::to_string(index);
        case Kind::Individual:
            return view + "_Ind" + std::to_string(index);
        case Kind::Factor:
        default:
            return "Factor" + std::to_string(index);
    }
}

namespace detail {

void check_aligned(const std::vector<ModalityDataset>& datasets) {
    if (datasets.empty()) throw EmptyCohortError("integration: no datasets");
    for (size_t i = 1; i < datasets.size(); ++i)
        if (datasets[i].sample_ids != datasets[0].sample_ids)
            throw AlignmentError("integration: dataset '" + datasets[i].name +
                                 "' sample ids differ from '" + datasets[0].name + "'");
}

int resolve_view_rank(const IntegrationConfig& config, const ModalityDataset& ds, size_t view_idx) {
    const int cap = static_cast<int>(std::min(ds.n_samples(), ds.n_features()));
    if (config.per_view_ranks) {
        if (view_idx >= config.per_view_ranks->size())
            throw ConfigError("integration: per_view_ranks has too few entries");
        int m = (*config.per_view_ranks)[view_idx];
        if (m < 1 || m > cap)
            throw RankError("integration: rank " + std::to_string(m) + " for view '" + ds.name +
                            "' exceeds min(N, D) = " + std::to_string(cap));
        return m;
    }
    if (config.variance_fraction) {
        auto res = pca(ds, RankSelector::fraction(*config.variance_fraction));
        return static_cast<int>(res.model.components.cols());
    }
    throw ConfigError("integration: neither per_view_ranks nor variance_fraction set");
}

}  // namespace detail

Matrix variance_explained(const MergedRepresentation& merged,
                          const std::vector<ModalityDataset>& datasets) {
    if (datasets.size() != merged.view_names.size())
        throw SchemaError("variance_explained: dataset count does not match merged views");
    const Eigen::Index K = merged.n_components();
    Matrix r2(K, static_cast<Eigen::Index>(datasets.size()));
    for (size_t i = 0; i < datasets.size(); ++i) {
        const auto& ds = datasets[i];
        if (ds.n_features() != merged.weight_tables[i].rows())
            throw SchemaError("variance_explained: feature count mismatch for view '" + ds.name + "'");
        Matrix centered = ds.values.rowwise() - ds.values.colwise().mean();
        const double total = centered.squaredNorm();
        for (Eigen::Index k = 0; k < K; ++k) {
            if (total < 1e-24) {
                r2(k, static_cast<Eigen::Index>(i)) = 0.0;
                continue;
            }
            Matrix recon = merged.scores.col(k) * merged.weight_tables[i].col(k).transpose();
            double val = 1.0 - (centered - recon).squaredNorm() / total;
            r2(k, static_cast<Eigen::Index>(i)) = val;
        }
    }
    return r2;
}

namespace detail {

// Shared sign and ordering conventions: within each index range [begin, end)
// of components, flip signs so the largest-|weight| entry (stacked across
// views) is positive, then order by total variance explained descending.
void canonicalize_block(MergedRepresentation& merged, const std::vector<ModalityDataset>& datasets,
                        Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index k = begin; k < end; ++k) {
        double best = 0.0;
        double sign = 1.0;
        for (const auto& w : merged.weight_tables)
            for (Eigen::Index d = 0; d < w.rows(); ++d)
                if (std::abs(w(d, k)) > best) {
                    best = std::abs(w(d, k));
                    sign = w(d, k) >= 0 ? 1.0 : -1.0;
                }
        if (sign < 0) {
            merged.scores.col(k) *= -1.0;
            for (auto& w : merged.weight_tables) w.col(k) *= -1.0;
        }
    }

    Matrix r2 = variance_explained(merged, datasets);
    std::vector<Eigen::Index> order(static_cast<size_t>(end - begin));
    std::iota(order.begin(), order.end(), begin);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return r2.row(a).sum() > r2.row(b).sum();
    });

    Matrix scores = merged.scores;
    std::vector<Matrix> weights = merged.weight_tables;
    for (Eigen::Index k = begin; k < end; ++k) {
        Eigen::Index src = order[static_cast<size_t>(k - begin)];
        merged.scores.col(k) = scores.col(src);
        for (size_t i = 0; i < weights.size(); ++i)
            merged.weight_tables[i].col(k) = weights[i].col(src);
    }
    // re-number labels inside the block
    int idx = 1;
    for (Eigen::Index k = begin; k < end; ++k) merged.component_labels[static_cast<size_t>(k)].index = idx++;
}

}  // namespace detail

IntegrationResult early_fusion(const std::vector<ModalityDataset>& datasets,
                               const IntegrationConfig& config) {
    detail::check_aligned(datasets);
    if (config.method != IntegrationMethod::Early && config.method != IntegrationMethod::EarlyPca)
        throw ConfigError("early_fusion: config method is not early/early_pca");

    const bool use_pca = config.method == IntegrationMethod::EarlyPca;
    const Eigen::Index n = datasets[0].n_samples();

    IntegrationResult res;
    res.fitted.config = config;
    MergedRepresentation& merged = res.merged;
    merged.sample_ids = datasets[0].sample_ids;

    std::vector<Matrix> blocks;
    std::vector<Eigen::Index> block_cols;
    for (size_t i = 0; i < datasets.size(); ++i) {
        res.fitted.view_names.push_back(datasets[i].name);
        res.fitted.view_features.push_back(datasets[i].feature_names);
        merged.view_names.push_back(datasets[i].name);
        if (use_pca) {
            RankSelector sel = config.per_view_ranks
                                   ? RankSelector::fixed(detail::resolve_view_rank(config, datasets[i], i))
                                   : RankSelector::fraction(config.variance_fraction.value_or(0.0));
            auto p = pca(datasets[i], sel);
            blocks.push_back(p.scores);
            block_cols.push_back(p.scores.cols());
            res.fitted.view_pca.push_back(p.model);
        } else {
            blocks.push_back(datasets[i].values);
            block_cols.push_back(datasets[i].n_features());
            res.fitted.view_pca.push_back(std::nullopt);
        }
    }

    Eigen::Index K = std::accumulate(block_cols.begin(), block_cols.end(), Eigen::Index{0});
    merged.scores.resize(n, K);
    Eigen::Index at = 0;
    for (size_t i = 0; i < blocks.size(); ++i) {
        merged.scores.middleCols(at, block_cols[i]) = blocks[i];
        for (Eigen::Index j = 0; j < block_cols[i]; ++j)
            merged.component_labels.push_back({ComponentLabel::Kind::Individual, datasets[i].name,
                                               static_cast<int>(j) + 1});
        at += block_cols[i];
    }

    // Weight tables: PCA components when reduced, else identity blocks.
    at = 0;
    for (size_t i = 0; i < datasets.size(); ++i) {
        Matrix w = Matrix::Zero(datasets[i].n_features(), K);
        if (use_pca)
            w.middleCols(at, block_cols[i]) = res.fitted.view_pca[i]->components;
        else
            w.middleCols(at, block_cols[i]) = Matrix::Identity(datasets[i].n_features(), block_cols[i]);
        merged.weight_tables.push_back(std::move(w));
        at += block_cols[i];
    }

    merged.variance_explained = variance_explained(merged, datasets);
    return res;
}

Matrix project_new(const FittedIntegration& fitted, const std::vector<ModalityDataset>& datasets,
                   const std::optional<ViewMask>& observed_mask) {
    if (datasets.size() != fitted.view_names.size())
        throw SchemaError("project_new: view count mismatch");
    for (size_t i = 0; i < datasets.size(); ++i)
        if (datasets[i].feature_names != fitted.view_features[i])
            throw SchemaError("project_new: feature names of '" + datasets[i].name +
                              "' do not match training view '" + fitted.view_names[i] + "'");

    const Eigen::Index n = datasets[0].n_samples();
    const auto method = fitted.config.method;

    if (method != IntegrationMethod::Gfa) {
        if (observed_mask && !observed_mask->all())
            throw MissingViewUnsupportedError(
                "project_new: missing views are only supported for the GFA method");
    }

    switch (method) {
        case IntegrationMethod::Early:
        case IntegrationMethod::EarlyPca: {
            std::vector<Matrix> blocks;
            Eigen::Index K = 0;
            for (size_t i = 0; i < datasets.size(); ++i) {
                if (fitted.view_pca[i]) {
                    const auto& m = *fitted.view_pca[i];
                    blocks.push_back((datasets[i].values.rowwise() - m.means.transpose()) * m.components);
                } else {
                    blocks.push_back(datasets[i].values);
                }
                K += blocks.back().cols();
            }
            Matrix out(n, K);
            Eigen::Index at = 0;
            for (const auto& b : blocks) {
                out.middleCols(at, b.cols()) = b;
                at += b.cols();
            }
            return out;
        }
        case IntegrationMethod::Ajive:
            return detail::ajive_project(*fitted.ajive, datasets);
        case IntegrationMethod::Gfa: {
            std::vector<Matrix> values;
            for (const auto& d : datasets) values.push_back(d.values);
            ViewMask mask = observed_mask
                                ? *observed_mask
                                : ViewMask::Constant(n, static_cast<Eigen::Index>(datasets.size()), true);
            return gfa_impute_latent(*fitted.gfa, values, mask);
        }
    }
    throw ConfigError("project_new: unknown integration method");
}

}  // namespace mvfuse
