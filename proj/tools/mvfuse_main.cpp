#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvfuse/pipeline.hpp"
#include "mvfuse/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mvfuse: multi-modal tabular data integration and disease prediction"};
    app.require_subcommand(1);

    // ---- run ----
    auto* run = app.add_subcommand("run", "Integrate modalities and fit the downstream task");
    std::string config_data, config_model;
    run->add_option("--config-data", config_data, "Data configuration YAML")->required();
    run->add_option("--config-model", config_model, "Model configuration YAML")->required();

    std::string cohort_path, cohort_file, end_study_date, out_path;
    std::vector<std::string> cohort_cov;
    double test_size = -1.0;
    int n_folds = -1;
    long long seed = -1;
    bool latent_impute = false, force = false;
    run->add_option("--cohort-path", cohort_path, "Override cohort directory");
    run->add_option("--cohort-file", cohort_file, "Override cohort filename");
    run->add_option("--end-study-date", end_study_date, "Override end of study (YYYY-MM-DD)");
    run->add_option("--out-path", out_path, "Override output directory");
    run->add_option("--cohort-cov", cohort_cov, "Override cohort covariates to include");
    run->add_flag("--latent-impute", latent_impute, "Enable latent-space imputation (GFA only)");
    run->add_option("--test-size", test_size, "Override held-out test fraction");
    run->add_option("--n-folds", n_folds, "Override CV fold count");
    run->add_option("--seed", seed, "Override random seed");
    run->add_flag("--force", force, "Allow writing into a non-empty output directory");

    // ---- generate-synthetic ----
    auto* gen = app.add_subcommand("generate-synthetic",
                                   "Write a runnable synthetic multi-view bundle");
    std::string gen_dir;
    int gen_n = 500, gen_views = 3;
    unsigned gen_seed = 0;
    double gen_sigma = 0.01, gen_missing = 0.0;
    gen->add_option("--out-dir", gen_dir, "Target directory")->required();
    gen->add_option("--n-samples", gen_n, "Number of subjects");
    gen->add_option("--n-views", gen_views, "Number of modalities");
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--noise-sigma", gen_sigma, "Noise standard deviation");
    gen->add_option("--missing-view2-fraction", gen_missing,
                    "Fraction of subjects absent from view2");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            mvfuse::SyntheticConfig cfg;
            cfg.n_samples = gen_n;
            cfg.n_views = gen_views;
            cfg.noise_sigma = gen_sigma;
            cfg.seed = gen_seed;
            mvfuse::write_synthetic_bundle(gen_dir, cfg, gen_missing);
            std::cerr << "[generate] bundle written to " << gen_dir << "\n";
            return 0;
        }

        auto [data, model] = mvfuse::parse_configs(config_data, config_model);
        if (!cohort_path.empty()) data.cohort.path = cohort_path;
        if (!cohort_file.empty()) data.cohort.file = cohort_file;
        if (!end_study_date.empty()) model.end_study_date = end_study_date;
        if (!out_path.empty()) model.out_path = out_path;
        if (!cohort_cov.empty()) model.cohort_cov = cohort_cov;
        if (latent_impute) {
            if (model.integration.method != mvfuse::IntegrationMethod::Gfa)
                throw mvfuse::ConfigError("--latent-impute requires the gfa integration method");
            model.latent_impute = true;
        }
        if (test_size >= 0.0) model.test_size = test_size;
        if (n_folds >= 0) model.n_folds = n_folds;
        if (seed >= 0) {
            model.seed = static_cast<unsigned>(seed);
            model.integration.seed = model.seed;
        }
        if (force) model.force = true;

        mvfuse::run_pipeline(data, model);
        return 0;
    } catch (const mvfuse::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mvfuse::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const mvfuse::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
