#ifndef MVFUSE_TABULAR_HPP
#define MVFUSE_TABULAR_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mvfuse/errors.hpp"

namespace mvfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One modality's samples x features table. Rows follow sample_ids,
/// columns follow feature_names; every entry is finite.
struct ModalityDataset {
    std::string name;
    std::vector<std::string> sample_ids;
    std::vector<std::string> feature_names;
    Matrix values;

    Eigen::Index n_samples() const { return values.rows(); }
    Eigen::Index n_features() const { return values.cols(); }

    /// Throws if shape/uniqueness/finiteness invariants are violated.
    void validate() const;
};

struct PcaModel {
    Vector means;                     // length D
    Matrix components;                // D x m, orthonormal columns
    Vector explained_variance;        // length m, non-increasing
    Vector explained_variance_ratio;  // length m, in [0,1]
};

/// Either a fixed component count or a variance fraction in (0,1].
struct RankSelector {
    std::optional<int> rank;
    std::optional<double> variance_fraction;

    static RankSelector fixed(int m) { return {m, std::nullopt}; }
    static RankSelector fraction(double p) { return {std::nullopt, p}; }
};

ModalityDataset load_modality_csv(const std::string& path, const std::string& id_column);

/// Restrict all datasets to the lexicographically sorted intersection of their sample ids.
std::vector<ModalityDataset> align_samples(const std::vector<ModalityDataset>& datasets);

struct StandardizeResult {
    std::vector<ModalityDataset> transformed;
    Vector means;
    Vector stds;  // population convention; constant columns keep std 0 and map to zeros
};

StandardizeResult standardize(const ModalityDataset& train,
                              const std::vector<ModalityDataset>& apply_to);

struct VifResult {
    ModalityDataset filtered;
    std::vector<std::string> removed;  // in removal order
};

/// Iteratively drop the feature with the largest VIF above threshold,
/// recomputing after each removal. Ties go to the larger column index.
VifResult vif_filter(const ModalityDataset& dataset, double threshold);

struct PcaResult {
    PcaModel model;
    Matrix scores;  // N x m
};

PcaResult pca(const ModalityDataset& dataset, const RankSelector& selector);

}  // namespace mvfuse

#endif
