#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "mvfuse/internal.hpp"
#include "mvfuse/synthetic.hpp"

namespace mvfuse {

namespace {

Vector random_normal(std::mt19937& rng, Eigen::Index n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
    return v;
}

}  // namespace

SyntheticData generate_multiview(const SyntheticConfig& config) {
    if (config.n_samples < 2 || config.n_views < 1)
        throw ConfigError("generate_multiview: need at least 2 samples and 1 view");
    std::vector<int> dims = config.view_dims;
    if (dims.empty()) dims.assign(static_cast<size_t>(config.n_views), 20);
    if (static_cast<int>(dims.size()) != config.n_views)
        throw ConfigError("generate_multiview: view_dims size does not match n_views");

    std::mt19937 rng(config.seed);
    const Eigen::Index n = config.n_samples;

    SyntheticData data;
    data.sample_ids.reserve(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "S%05d", static_cast<int>(i + 1));
        data.sample_ids.emplace_back(buf);
    }

    data.joint_scores = random_normal(rng, n);

    for (int v = 0; v < config.n_views; ++v) {
        const Eigen::Index d = dims[static_cast<size_t>(v)];
        Vector u = random_normal(rng, d);
        u.normalize();
        Vector w = random_normal(rng, d);
        w -= u * u.dot(w);  // individual loading orthogonal to the joint one
        w.normalize();
        Vector zi = random_normal(rng, n);

        Matrix x = config.joint_strength * data.joint_scores * u.transpose() +
                   config.individual_strength * zi * w.transpose();
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                x(i, j) += config.noise_sigma * std::normal_distribution<double>(0.0, 1.0)(rng);

        ModalityDataset ds;
        ds.name = "view" + std::to_string(v + 1);
        ds.sample_ids = data.sample_ids;
        for (Eigen::Index j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j + 1));
        ds.values = std::move(x);

        data.views.push_back(std::move(ds));
        data.individual_scores.push_back(std::move(zi));
        data.joint_loadings.push_back(std::move(u));
        data.individual_loadings.push_back(std::move(w));
    }
    return data;
}

std::vector<int> generate_outcomes(const SyntheticData& data, double joint_weight,
                                   double individual_weight, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Eigen::Index n = data.joint_scores.size();
    Vector lin = joint_weight * data.joint_scores;
    for (const auto& zi : data.individual_scores) lin += individual_weight * zi;
    lin.array() -= lin.mean();

    std::vector<int> labels(static_cast<size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 1.0 / (1.0 + std::exp(-(lin(i) - 1.0)));  // shift keeps cases a minority
        labels[static_cast<size_t>(i)] = unif(rng) < p ? 1 : 0;
    }
    return labels;
}

namespace {

void write_view_csv(const std::filesystem::path& path, const ModalityDataset& ds,
                    const std::vector<bool>& keep) {
    std::ofstream out(path);
    out << "sample_id";
    for (const auto& f : ds.feature_names) out << "," << f;
    out << "\n";
    for (Eigen::Index i = 0; i < ds.values.rows(); ++i) {
        if (!keep[static_cast<size_t>(i)]) continue;
        out << ds.sample_ids[static_cast<size_t>(i)];
        for (Eigen::Index j = 0; j < ds.values.cols(); ++j)
            out << "," << detail::fmt_num(ds.values(i, j));
        out << "\n";
    }
}

}  // namespace

void write_synthetic_bundle(const std::string& dir, const SyntheticConfig& config,
                            double missing_view2_fraction) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    SyntheticData data = generate_multiview(config);
    const size_t n = data.sample_ids.size();

    // optionally drop a deterministic subset of subjects from view2
    std::vector<std::vector<bool>> keep(data.views.size(), std::vector<bool>(n, true));
    if (missing_view2_fraction > 0.0 && data.views.size() >= 2) {
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937 rng(config.seed + 17);
        std::shuffle(idx.begin(), idx.end(), rng);
        size_t n_missing = static_cast<size_t>(std::floor(missing_view2_fraction * static_cast<double>(n)));
        for (size_t k = 0; k < n_missing; ++k) keep[1][idx[k]] = false;
    }

    for (size_t v = 0; v < data.views.size(); ++v)
        write_view_csv(fs::path(dir) / (data.views[v].name + ".csv"), data.views[v], keep[v]);

    std::vector<int> labels = generate_outcomes(data, 2.0, 1.0, config.seed + 1);

    const Date baseline = parse_date("2010-01-01");
    std::mt19937 rng(config.seed + 2);
    std::normal_distribution<double> age_dist(55.0, 5.0);
    std::uniform_int_distribution<int> gap_days(30, 1500);  // events well inside a 5-year horizon

    {
        std::ofstream cohort(fs::path(dir) / "cohort.csv");
        cohort << "subject_id,baseline_date,age\n";
        for (size_t i = 0; i < n; ++i)
            cohort << data.sample_ids[i] << ",2010-01-01," << detail::fmt_num(age_dist(rng)) << "\n";
    }
    {
        std::ofstream events(fs::path(dir) / "events.csv");
        events << "subject_id,code_system,code,date\n";
        for (size_t i = 0; i < n; ++i) {
            if (!labels[i]) continue;
            Date d{baseline.serial + gap_days(rng)};
            events << data.sample_ids[i] << ",icd10,I48," << format_date(d) << "\n";
        }
    }
    {
        std::ofstream yml(fs::path(dir) / "data.yaml");
        yml << "modalities:\n";
        for (const auto& view : data.views)
            yml << "  - name: " << view.name << "\n    path: " << view.name
                << ".csv\n    id_column: sample_id\n    rank: 3\n";
        yml << "cohort:\n  path: .\n  file: cohort.csv\n  id_column: subject_id\n"
               "  baseline_column: baseline_date\n  covariate_columns: [age]\n"
               "events_path: events.csv\n"
               "endpoint:\n  name: AA\n  event_codes:\n    - {system: icd10, prefix: I48}\n"
               "  exclusion_codes:\n    - {system: icd10, prefix: I48}\n";
    }
    {
        std::ofstream yml(fs::path(dir) / "model.yaml");
        yml << "integration:\n  ajive:\n    use: true\n"
               "prediction:\n  logregrssm:\n    use: true\n    params:\n      alpha: 0.01\n"
               "task: classification\nyears_risk_classification: 5\n"
               "test_size: 0.2\nn_folds: 10\nseed: " << config.seed << "\n"
               "end_study_date: 2016-06-30\nout_path: out\n";
    }
}

}  // namespace mvfuse
