#ifndef MVFUSE_EVALUATION_HPP
#define MVFUSE_EVALUATION_HPP

#include <string>
#include <vector>

#include "mvfuse/tabular.hpp"

namespace mvfuse {

enum class TestSided { Greater, TwoSided };

struct EvaluationConfig {
    double test_size = 0.2;
    int n_folds = 10;
    unsigned seed = 0;
    double comparison_level = 0.10;
    TestSided comparison_sided = TestSided::Greater;
};

struct ModelEvaluation {
    std::string model;
    std::string metric_name;  // "auc" or "concordance"
    std::vector<double> fold_metrics;
    double fold_mean = 0.0;
    double fold_std = 0.0;  // sample standard deviation over folds
    double test_metric = 0.0;
};

struct ModelComparison {
    std::string model_a;
    std::string model_b;
    double p_value = 1.0;
    bool significant = false;
    bool all_tied = false;  // identical fold metrics; p reported as 1
};

struct EvaluationReport {
    std::vector<ModelEvaluation> models;
    std::vector<ModelComparison> comparisons;
    int n_train = 0;
    int n_test = 0;
    int n_cases = 0;
};

struct SplitResult {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Per-stratum test allocation rounds half up; shuffling is seeded.
SplitResult stratified_split(const std::vector<std::string>& ids, const std::vector<int>& labels,
                             double test_size, unsigned seed);

/// Round-robin fold assignment per stratum after a seeded shuffle.
std::vector<int> stratified_kfold(const std::vector<std::string>& ids,
                                  const std::vector<int>& labels, int n_folds, unsigned seed);

/// Mann–Whitney AUC; ties count one half.
double auc(const std::vector<int>& labels, const Vector& scores);

/// Harrell's concordance; pairs with equal event times are not comparable.
double concordance_index(const Vector& time, const std::vector<int>& event,
                         const Vector& risk_scores);

struct WilcoxonResult {
    double p_value = 1.0;
    bool significant = false;
    double statistic = 0.0;  // W+ over mid-ranks of nonzero |differences|
    int n_effective = 0;
};

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    TestSided sided, double level);

std::vector<ModelComparison> compare_models(const std::vector<ModelEvaluation>& models,
                                            TestSided sided, double level);

}  // namespace mvfuse

#endif
