#ifndef MVFUSE_PIPELINE_HPP
#define MVFUSE_PIPELINE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvfuse/cohort.hpp"
#include "mvfuse/evaluation.hpp"
#include "mvfuse/integration.hpp"
#include "mvfuse/models.hpp"

namespace mvfuse {

struct ModalitySpec {
    std::string name;
    std::string path;  // resolved against the data YAML's directory
    std::string id_column = "sample_id";
    std::vector<std::string> features;  // empty = all
    RankSelector rank_selector;         // default: 90% variance fraction
};

struct CohortSpec {
    std::string path;  // directory
    std::string file;  // filename within path
    std::string id_column = "subject_id";
    std::string baseline_column = "baseline_date";
    std::optional<std::string> censor_column;
    std::vector<std::string> covariate_columns;
};

struct DataConfig {
    std::vector<ModalitySpec> modalities;
    CohortSpec cohort;
    EndpointDefinition endpoint;
    std::string events_path;
};

enum class TaskKind { Classification, Survival, Clustering };

struct PredictionSpec {
    std::string algorithm;  // logregrssm | coxnet | gaussiannb | kmeans | dbscan
    double alpha = 1.0;
    std::vector<double> alpha_grid;  // optional; CV picks from it
    double l1_ratio = 1.0;           // coxnet only
    int k = 2;                       // kmeans
    double eps = 0.5;                // dbscan
    int min_pts = 5;                 // dbscan
};

struct ModelConfig {
    std::string integration_key;  // early | early_pca | ajive | gfa
    IntegrationConfig integration;
    PredictionSpec prediction;
    TaskKind task = TaskKind::Classification;
    double years_risk_classification = 5.0;
    bool latent_impute = false;
    double test_size = 0.2;
    int n_folds = 10;
    unsigned seed = 0;
    std::string end_study_date;  // YYYY-MM-DD
    std::vector<std::string> cohort_cov;
    std::string out_path;
    bool force = false;
};

std::pair<DataConfig, ModelConfig> parse_configs(const std::string& data_path,
                                                 const std::string& model_path);

struct RunSummary {
    int n_merged_samples = 0;   // samples with a merged representation
    int n_cohort_rows = 0;      // cohort file rows
    int n_after_exclusion = 0;  // incident-eligible at baseline
    int n_labeled = 0;          // rows entering the downstream model
    int n_train = 0;
    int n_test = 0;
    int n_cases = 0;
    double chosen_alpha = 0.0;
    std::vector<double> fold_metrics;
    double fold_mean = 0.0;
    double fold_std = 0.0;
    double test_metric = 0.0;
    std::string metric_name;
    std::vector<std::string> written_files;
};

RunSummary run_pipeline(const DataConfig& data, const ModelConfig& model);

}  // namespace mvfuse

#endif
