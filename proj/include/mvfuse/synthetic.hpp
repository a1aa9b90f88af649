#ifndef MVFUSE_SYNTHETIC_HPP
#define MVFUSE_SYNTHETIC_HPP

#include <string>
#include <vector>

#include "mvfuse/cohort.hpp"
#include "mvfuse/tabular.hpp"

namespace mvfuse {

struct SyntheticConfig {
    int n_samples = 500;
    int n_views = 3;
    std::vector<int> view_dims;      // defaults to 20 per view
    double joint_strength = 1.0;     // scale of the shared rank-1 signal
    double individual_strength = 1.0;
    double noise_sigma = 0.01;
    unsigned seed = 0;
};

/// Multi-view data with one planted shared factor and one planted
/// individual factor per view; loadings are unit vectors, mutually
/// orthogonal within each view.
struct SyntheticData {
    std::vector<std::string> sample_ids;
    std::vector<ModalityDataset> views;
    Vector joint_scores;                     // N
    std::vector<Vector> individual_scores;   // per view, N
    std::vector<Vector> joint_loadings;      // per view, D_i, unit norm
    std::vector<Vector> individual_loadings;
};

SyntheticData generate_multiview(const SyntheticConfig& config);

/// Binary outcomes driven by the planted factors through a logistic link.
std::vector<int> generate_outcomes(const SyntheticData& data, double joint_weight,
                                   double individual_weight, unsigned seed);

/// Write a runnable bundle under dir: one CSV per view, cohort.csv,
/// events.csv (ICD-10 I48 incident events for cases), and data/model
/// YAML configuration files.
void write_synthetic_bundle(const std::string& dir, const SyntheticConfig& config,
                            double missing_view2_fraction = 0.0);

}  // namespace mvfuse

#endif
