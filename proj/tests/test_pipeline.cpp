#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvfuse/errors.hpp"
#include "mvfuse/pipeline.hpp"
#include "mvfuse/synthetic.hpp"

using namespace mvfuse;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) {
        path = fs::temp_directory_path() / name;
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

SyntheticConfig small_config(unsigned seed = 3) {
    SyntheticConfig cfg;
    cfg.n_samples = 160;
    cfg.n_views = 3;
    cfg.view_dims = {12, 12, 12};
    cfg.noise_sigma = 0.05;
    cfg.seed = seed;
    return cfg;
}

// model.yaml text with replaceable pieces, for exercising the validator
std::string model_yaml(const std::string& integration_block,
                       const std::string& prediction_block,
                       const std::string& tail) {
    return "integration:\n" + integration_block + "prediction:\n" + prediction_block +
           "task: classification\n" + tail;
}

const std::string kAjiveBlock = "  ajive:\n    use: true\n";
const std::string kLogregBlock = "  logregrssm:\n    use: true\n    params:\n      alpha: 0.5\n";
const std::string kGoodTail = "end_study_date: 2016-06-30\nout_path: out\n";

template <typename Fn>
std::string config_error_message(Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("parse_configs reads a generated bundle") {
    TempDir dir("mvfuse_parse_bundle");
    write_synthetic_bundle(dir.path.string(), small_config());

    auto [data, model] = parse_configs((dir.path / "data.yaml").string(),
                                       (dir.path / "model.yaml").string());

    REQUIRE(data.modalities.size() == 3);
    CHECK(data.modalities[0].name == "view1");
    CHECK(data.modalities[0].id_column == "sample_id");
    REQUIRE(data.modalities[1].rank_selector.rank.has_value());
    CHECK(*data.modalities[1].rank_selector.rank == 3);
    CHECK(fs::path(data.modalities[2].path).is_absolute());
    CHECK(data.cohort.file == "cohort.csv");
    CHECK(data.cohort.covariate_columns == std::vector<std::string>{"age"});
    REQUIRE(data.endpoint.event_codes.size() == 1);
    CHECK(data.endpoint.event_codes[0].prefix == "I48");

    CHECK(model.integration_key == "ajive");
    CHECK(model.integration.method == IntegrationMethod::Ajive);
    CHECK(model.prediction.algorithm == "logregrssm");
    CHECK(model.prediction.alpha == doctest::Approx(0.01));
    CHECK(model.task == TaskKind::Classification);
    CHECK(model.n_folds == 10);
    CHECK(model.test_size == doctest::Approx(0.2));
    CHECK(model.end_study_date == "2016-06-30");
    CHECK(fs::path(model.out_path).filename() == "out");
    CHECK(!model.latent_impute);
}

TEST_CASE("model config validation rejects bad inputs with useful messages") {
    TempDir dir("mvfuse_parse_errors");
    write_synthetic_bundle(dir.path.string(), small_config());
    const std::string data_yaml = (dir.path / "data.yaml").string();
    const fs::path my = dir.path / "bad_model.yaml";
    auto parse = [&] { parse_configs(data_yaml, my.string()); };

    SUBCASE("missing out_path") {
        write_file(my, model_yaml(kAjiveBlock, kLogregBlock, "end_study_date: 2016-06-30\n"));
        std::string msg = config_error_message(parse);
        CHECK(msg.find("out_path") != std::string::npos);
    }
    SUBCASE("latent_impute requires gfa") {
        write_file(my, model_yaml(kAjiveBlock, kLogregBlock,
                                  "latent_impute: true\n" + kGoodTail));
        std::string msg = config_error_message(parse);
        CHECK(msg.find("gfa") != std::string::npos);
    }
    SUBCASE("two integration methods enabled") {
        write_file(my, model_yaml("  ajive:\n    use: true\n  gfa:\n    use: true\n",
                                  kLogregBlock, kGoodTail));
        std::string msg = config_error_message(parse);
        CHECK(msg.find("use: true") != std::string::npos);
    }
    SUBCASE("no prediction algorithm enabled") {
        write_file(my, model_yaml(kAjiveBlock, "  logregrssm:\n    use: false\n", kGoodTail));
        CHECK_THROWS_AS(parse(), ConfigError);
    }
    SUBCASE("unknown prediction key lists the valid ones") {
        write_file(my, model_yaml(kAjiveBlock, "  randomforest:\n    use: true\n", kGoodTail));
        std::string msg = config_error_message(parse);
        CHECK(msg.find("randomforest") != std::string::npos);
        CHECK(msg.find("coxnet") != std::string::npos);
        CHECK(msg.find("logregrssm") != std::string::npos);
    }
    SUBCASE("task and algorithm must agree") {
        write_file(my, "integration:\n" + kAjiveBlock + "prediction:\n" + kLogregBlock +
                           "task: survival\n" + kGoodTail);
        std::string msg = config_error_message(parse);
        CHECK(msg.find("survival") != std::string::npos);
    }
}

TEST_CASE("run_pipeline writes the full output set and is repeatable") {
    TempDir dir("mvfuse_run_full");
    write_synthetic_bundle(dir.path.string(), small_config());
    auto [data, model] = parse_configs((dir.path / "data.yaml").string(),
                                       (dir.path / "model.yaml").string());
    model.out_path = (dir.path / "out_a").string();
    RunSummary summary = run_pipeline(data, model);

    const std::vector<std::string> expected = {
        "merged_scores.csv",  "weights_view1.csv", "weights_view2.csv",
        "weights_view3.csv",  "variance_explained.csv", "cv_metrics.csv",
        "predictions.csv",    "model_summary.json", "run_manifest.json"};
    for (const auto& f : expected) {
        INFO("expected output file: " << f);
        CHECK(fs::exists(fs::path(model.out_path) / f));
    }
    CHECK(summary.written_files.size() == expected.size());
    CHECK(summary.n_merged_samples == 160);
    CHECK(summary.n_cohort_rows == 160);
    CHECK(summary.n_labeled > 0);
    CHECK(summary.n_train + summary.n_test == summary.n_labeled);
    CHECK(summary.metric_name == "auc");
    CHECK(static_cast<int>(summary.fold_metrics.size()) == model.n_folds);
    CHECK(summary.test_metric > 0.5);  // planted signal should be learnable

    // refusing to clobber an existing non-empty output directory
    CHECK_THROWS_AS(run_pipeline(data, model), OutputExistsError);
    model.force = true;
    CHECK_NOTHROW(run_pipeline(data, model));

    // a second run with the same seed reproduces every CSV byte for byte
    ModelConfig model_b = model;
    model_b.out_path = (dir.path / "out_b").string();
    model_b.force = false;
    run_pipeline(data, model_b);
    for (const auto& f : expected) {
        if (f == "run_manifest.json") continue;  // contains wall-clock timing
        INFO("comparing " << f);
        CHECK(slurp(fs::path(model.out_path) / f) == slurp(fs::path(model_b.out_path) / f));
    }
}

TEST_CASE("gfa latent imputation keeps subjects missing a view") {
    TempDir dir("mvfuse_run_impute");
    SyntheticConfig cfg = small_config(11);
    write_synthetic_bundle(dir.path.string(), cfg, 0.3);
    auto [data, model] = parse_configs((dir.path / "data.yaml").string(),
                                       (dir.path / "model.yaml").string());
    model.integration_key = "gfa";
    model.integration.method = IntegrationMethod::Gfa;
    model.integration.max_factors = 6;

    // intersection semantics drop every subject without view2
    model.out_path = (dir.path / "out_intersect").string();
    RunSummary base = run_pipeline(data, model);
    CHECK(base.n_merged_samples == 160 - 48);

    model.latent_impute = true;
    model.out_path = (dir.path / "out_union").string();
    RunSummary imputed = run_pipeline(data, model);
    CHECK(imputed.n_merged_samples == 160);
    CHECK(imputed.n_labeled > base.n_labeled);
}
