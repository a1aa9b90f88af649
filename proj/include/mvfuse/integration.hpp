#ifndef MVFUSE_INTEGRATION_HPP
#define MVFUSE_INTEGRATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "mvfuse/tabular.hpp"

namespace mvfuse {

/// Observation mask, samples x views. True = view observed for that sample.
using ViewMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class IntegrationMethod { Early, EarlyPca, Ajive, Gfa };

struct IntegrationConfig {
    IntegrationMethod method = IntegrationMethod::Ajive;
    std::optional<std::vector<int>> per_view_ranks;   // m_i, one per view
    std::optional<double> variance_fraction;          // P in (0,1]
    int max_factors = 10;                             // GFA initial factor count
    double prune_fraction = 0.05;                     // drop factors below this R2 in every view
    unsigned seed = 0;
    double gfa_tolerance = 1e-6;
    int gfa_max_iter = 1000;
    int ajive_resamples = 1000;
    double ajive_percentile = 0.95;
};

struct ComponentLabel {
    enum class Kind { Joint, Individual, Factor };
    Kind kind = Kind::Factor;
    std::string view;  // set for Individual only
    int index = 1;     // 1-based within its group

    std::string to_string() const;
};

struct MergedRepresentation {
    std::vector<std::string> sample_ids;
    Matrix scores;  // N x K
    std::vector<ComponentLabel> component_labels;
    std::vector<std::string> view_names;
    std::vector<Matrix> weight_tables;       // per view: D_i x K
    Matrix variance_explained;               // K x n_views, R2 per component per view

    Eigen::Index n_components() const { return scores.cols(); }
};

struct AjiveDecomposition {
    Matrix joint_scores;                  // S: N x M, orthonormal
    std::vector<Matrix> joint_weights;    // U_i: D_i x M
    std::vector<Matrix> individual_scores;   // S_i: N x M_i
    std::vector<Matrix> individual_weights;  // V_i: D_i x M_i
    int joint_rank = 0;
    std::vector<int> individual_ranks;
    std::vector<int> view_ranks;  // m_i used in the per-view reduction

    // Linear maps for projecting new samples (rows in view feature space).
    std::vector<Matrix> signal_projector;    // B_i B_i^T: D_i x D_i
    std::vector<Matrix> joint_score_map;     // G_i: D_i x M, S = sum_i Y_i G_i
    std::vector<Matrix> joint_part_weights;  // B_i B_i^T Y_i^T S: D_i x M
    std::vector<Vector> individual_singular_values;  // per view, length M_i
};

struct GfaModel {
    Matrix factors;                     // Z posterior means: N x M
    std::vector<Matrix> loadings;       // W_i posterior means: D_i x M
    std::vector<Vector> noise_variances;  // per view, per feature
    Vector factor_precisions;           // ARD scales, length M
    std::vector<double> elbo_trace;
    std::vector<bool> active_factors;   // after pruning
    bool converged = false;
    int iterations = 0;

    // Precomputed conditioning blocks for latent imputation / projection.
    std::vector<Matrix> view_precision_blocks;  // C_i = sum_d tau_id E[w w^T]: M x M
    std::vector<Matrix> view_score_maps;        // diag(tau_i) W_i: D_i x M

    int n_active() const;
};

/// Everything needed to reapply a trained integration to new samples.
struct FittedIntegration {
    IntegrationConfig config;
    std::vector<std::string> view_names;
    std::vector<std::vector<std::string>> view_features;
    std::vector<std::optional<PcaModel>> view_pca;  // early_pca only
    std::optional<AjiveDecomposition> ajive;
    std::optional<GfaModel> gfa;
};

struct IntegrationResult {
    FittedIntegration fitted;
    MergedRepresentation merged;
};

IntegrationResult early_fusion(const std::vector<ModalityDataset>& datasets,
                               const IntegrationConfig& config);

IntegrationResult ajive_fit(const std::vector<ModalityDataset>& datasets,
                            const IntegrationConfig& config);

IntegrationResult gfa_fit(const std::vector<ModalityDataset>& datasets,
                          const IntegrationConfig& config,
                          const std::optional<ViewMask>& observed_mask = std::nullopt);

/// Posterior-mean factors for new samples given their observed views.
/// Rows of the view matrices correspond across views; mask says which
/// (sample, view) pairs are present. Returns N_new x n_active scores.
Matrix gfa_impute_latent(const GfaModel& model, const std::vector<Matrix>& view_values,
                         const ViewMask& observed);

/// R2 per component per view, recomputed against the given (training) datasets.
Matrix variance_explained(const MergedRepresentation& merged,
                          const std::vector<ModalityDataset>& datasets);

/// Deterministic projection of new aligned samples into the trained merged space.
/// For GFA a mask may mark missing views; AJIVE and early fusion require all views.
Matrix project_new(const FittedIntegration& fitted, const std::vector<ModalityDataset>& datasets,
                   const std::optional<ViewMask>& observed_mask = std::nullopt);

}  // namespace mvfuse

#endif
