#ifndef MVFUSE_MODELS_HPP
#define MVFUSE_MODELS_HPP

#include <optional>
#include <string>
#include <vector>

#include "mvfuse/tabular.hpp"

namespace mvfuse {

struct PenaltyConfig {
    double alpha = 0.0;    // overall strength, >= 0
    double l1_ratio = 1.0;  // 1 = pure lasso
    bool standardize = true;
};

enum class ModelKind { Logistic, Cox, GaussianNb, KMeans, Dbscan };

struct FeatureInterpretation {
    std::string name;
    double estimate = 0.0;
    std::optional<double> standard_error;  // only defined for unpenalized fits
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    bool selected = false;
};

struct FittedModel {
    ModelKind kind = ModelKind::Logistic;
    std::vector<std::string> feature_names;
    Vector coefficients;
    std::optional<double> intercept;
    PenaltyConfig penalty;
    std::vector<FeatureInterpretation> interpretation;
    unsigned seed = 0;
    int iterations = 0;
    bool converged = true;
};

struct ClusteringResult {
    std::vector<int> assignments;  // -1 = DBSCAN noise
    std::optional<Matrix> centroids;
    std::string algorithm;
    double param_a = 0.0;  // k for k-means, eps for DBSCAN
    double param_b = 0.0;  // min_pts for DBSCAN
};

/// L1-penalized logistic regression by cyclic coordinate descent on
/// standardized features; the intercept is never penalized. Coefficients
/// are reported on the original feature scale.
FittedModel logistic_l1_fit(const Matrix& x, const std::vector<int>& y,
                            const std::vector<std::string>& feature_names,
                            const PenaltyConfig& penalty, int max_iter = 10000);

Vector logistic_predict_proba(const FittedModel& model, const Matrix& x);

/// Elastic-net Cox proportional hazards (Breslow ties) by proximal
/// coordinate descent.
FittedModel coxph_elasticnet_fit(const Matrix& x, const Vector& time, const std::vector<int>& event,
                                 const std::vector<std::string>& feature_names,
                                 const PenaltyConfig& penalty, int max_iter = 10000);

Vector coxph_risk_score(const FittedModel& model, const Matrix& x);

/// Per-class Gaussian features with variance smoothing; empirical priors.
Vector gaussian_nb_fit_predict(const Matrix& x_train, const std::vector<int>& y_train,
                               const Matrix& x_test);

ClusteringResult kmeans(const Matrix& x, int k, unsigned seed, int max_iter = 300);

ClusteringResult dbscan(const Matrix& x, double eps, int min_pts);

/// Negative Breslow partial log-likelihood; exposed for the solvers and tests.
double cox_negative_log_likelihood(const Matrix& x, const Vector& time,
                                   const std::vector<int>& event, const Vector& beta);

}  // namespace mvfuse

#endif
