#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <unordered_map>

#include <yaml-cpp/yaml.h>

#include "mvfuse/internal.hpp"
#include "json.hpp"
#include "mvfuse/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mvfuse {

namespace {

[[noreturn]] void missing_key(const std::string& path) {
    throw ConfigError("missing required config key: " + path);
}

std::string resolve_path(const fs::path& base_dir, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return path.lexically_normal().string();
    return (base_dir / path).lexically_normal().string();
}

DataConfig parse_data_config(const std::string& data_path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(data_path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot parse data config '" + data_path + "': " + e.what());
    }
    const fs::path base = fs::path(data_path).parent_path();

    DataConfig cfg;
    auto mods = root["modalities"];
    if (!mods || !mods.IsSequence() || mods.size() == 0) missing_key("modalities");
    for (const auto& m : mods) {
        ModalitySpec spec;
        if (!m["name"]) missing_key("modalities[].name");
        spec.name = m["name"].as<std::string>();
        if (!m["path"]) missing_key("modalities[].path");
        spec.path = resolve_path(base, m["path"].as<std::string>());
        if (m["id_column"]) spec.id_column = m["id_column"].as<std::string>();
        if (m["features"])
            for (const auto& f : m["features"]) spec.features.push_back(f.as<std::string>());
        if (m["rank"] && m["variance_fraction"])
            throw ConfigError("modality '" + spec.name + "': give rank or variance_fraction, not both");
        if (m["rank"])
            spec.rank_selector = RankSelector::fixed(m["rank"].as<int>());
        else if (m["variance_fraction"])
            spec.rank_selector = RankSelector::fraction(m["variance_fraction"].as<double>());
        else
            spec.rank_selector = RankSelector::fraction(0.9);
        cfg.modalities.push_back(std::move(spec));
    }

    auto cohort = root["cohort"];
    if (!cohort) missing_key("cohort");
    if (!cohort["path"]) missing_key("cohort.path");
    cfg.cohort.path = resolve_path(base, cohort["path"].as<std::string>());
    if (!cohort["file"]) missing_key("cohort.file");
    cfg.cohort.file = cohort["file"].as<std::string>();
    if (cohort["id_column"]) cfg.cohort.id_column = cohort["id_column"].as<std::string>();
    if (cohort["baseline_column"])
        cfg.cohort.baseline_column = cohort["baseline_column"].as<std::string>();
    if (cohort["censor_column"])
        cfg.cohort.censor_column = cohort["censor_column"].as<std::string>();
    if (cohort["covariate_columns"])
        for (const auto& c : cohort["covariate_columns"])
            cfg.cohort.covariate_columns.push_back(c.as<std::string>());

    if (!root["events_path"]) missing_key("events_path");
    cfg.events_path = resolve_path(base, root["events_path"].as<std::string>());

    auto ep = root["endpoint"];
    if (!ep) missing_key("endpoint");
    if (!ep["name"]) missing_key("endpoint.name");
    cfg.endpoint.name = ep["name"].as<std::string>();
    auto parse_codes = [](const YAML::Node& seq, const char* where) {
        std::vector<CodePrefix> out;
        for (const auto& c : seq) {
            if (!c["system"] || !c["prefix"])
                throw ConfigError(std::string(where) + " entries need system and prefix");
            out.push_back({parse_code_system(c["system"].as<std::string>()),
                           c["prefix"].as<std::string>()});
        }
        return out;
    };
    if (!ep["event_codes"]) missing_key("endpoint.event_codes");
    cfg.endpoint.event_codes = parse_codes(ep["event_codes"], "endpoint.event_codes");
    if (ep["exclusion_codes"])
        cfg.endpoint.exclusion_codes = parse_codes(ep["exclusion_codes"], "endpoint.exclusion_codes");
    if (cfg.endpoint.event_codes.empty()) throw ConfigError("endpoint.event_codes is empty");
    return cfg;
}

const std::vector<std::string> kIntegrationKeys = {"early", "early_pca", "ajive", "gfa"};
const std::vector<std::string> kPredictionKeys = {"logregrssm", "coxnet", "gaussiannb", "kmeans",
                                                  "dbscan"};

std::string pick_used_key(const YAML::Node& section, const std::vector<std::string>& valid,
                          const std::string& section_name) {
    if (!section || !section.IsMap()) missing_key(section_name);
    std::string used;
    for (const auto& entry : section) {
        std::string key = entry.first.as<std::string>();
        if (std::find(valid.begin(), valid.end(), key) == valid.end()) {
            std::string list;
            for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
            throw ConfigError(section_name + ": unknown key '" + key + "' (valid: " + list + ")");
        }
        if (entry.second["use"] && entry.second["use"].as<bool>()) {
            if (!used.empty())
                throw ConfigError(section_name + ": multiple entries with use: true ('" + used +
                                  "' and '" + key + "')");
            used = key;
        }
    }
    if (used.empty()) throw ConfigError(section_name + ": exactly one entry must set use: true");
    return used;
}

ModelConfig parse_model_config(const std::string& model_path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(model_path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot parse model config '" + model_path + "': " + e.what());
    }
    const fs::path base = fs::path(model_path).parent_path();

    ModelConfig cfg;
    cfg.integration_key = pick_used_key(root["integration"], kIntegrationKeys, "integration");
    if (cfg.integration_key == "early")
        cfg.integration.method = IntegrationMethod::Early;
    else if (cfg.integration_key == "early_pca")
        cfg.integration.method = IntegrationMethod::EarlyPca;
    else if (cfg.integration_key == "ajive")
        cfg.integration.method = IntegrationMethod::Ajive;
    else
        cfg.integration.method = IntegrationMethod::Gfa;

    auto iparams = root["integration"][cfg.integration_key]["params"];
    if (iparams) {
        if (iparams["max_factors"]) cfg.integration.max_factors = iparams["max_factors"].as<int>();
        if (iparams["prune_fraction"])
            cfg.integration.prune_fraction = iparams["prune_fraction"].as<double>();
        if (iparams["variance_fraction"])
            cfg.integration.variance_fraction = iparams["variance_fraction"].as<double>();
        if (iparams["gfa_tolerance"]) cfg.integration.gfa_tolerance = iparams["gfa_tolerance"].as<double>();
        if (iparams["gfa_max_iter"]) cfg.integration.gfa_max_iter = iparams["gfa_max_iter"].as<int>();
        if (iparams["ajive_resamples"])
            cfg.integration.ajive_resamples = iparams["ajive_resamples"].as<int>();
        if (iparams["ajive_percentile"])
            cfg.integration.ajive_percentile = iparams["ajive_percentile"].as<double>();
    }

    cfg.prediction.algorithm = pick_used_key(root["prediction"], kPredictionKeys, "prediction");
    auto pparams = root["prediction"][cfg.prediction.algorithm]["params"];
    if (pparams) {
        if (pparams["alpha"]) cfg.prediction.alpha = pparams["alpha"].as<double>();
        if (pparams["alpha_grid"])
            for (const auto& a : pparams["alpha_grid"])
                cfg.prediction.alpha_grid.push_back(a.as<double>());
        if (pparams["l1_ratio"]) cfg.prediction.l1_ratio = pparams["l1_ratio"].as<double>();
        if (pparams["k"]) cfg.prediction.k = pparams["k"].as<int>();
        if (pparams["eps"]) cfg.prediction.eps = pparams["eps"].as<double>();
        if (pparams["min_pts"]) cfg.prediction.min_pts = pparams["min_pts"].as<int>();
    }

    if (root["task"]) {
        std::string t = root["task"].as<std::string>();
        if (t == "classification")
            cfg.task = TaskKind::Classification;
        else if (t == "survival")
            cfg.task = TaskKind::Survival;
        else if (t == "clustering")
            cfg.task = TaskKind::Clustering;
        else
            throw ConfigError("task: unknown value '" + t +
                              "' (valid: classification, survival, clustering)");
    } else {
        if (cfg.prediction.algorithm == "coxnet")
            cfg.task = TaskKind::Survival;
        else if (cfg.prediction.algorithm == "kmeans" || cfg.prediction.algorithm == "dbscan")
            cfg.task = TaskKind::Clustering;
        else
            cfg.task = TaskKind::Classification;
    }
    const bool clustering_algo =
        cfg.prediction.algorithm == "kmeans" || cfg.prediction.algorithm == "dbscan";
    if ((cfg.task == TaskKind::Survival) != (cfg.prediction.algorithm == "coxnet") ||
        (cfg.task == TaskKind::Clustering) != clustering_algo)
        throw ConfigError("task '" + std::string(cfg.task == TaskKind::Classification
                                                     ? "classification"
                                                     : cfg.task == TaskKind::Survival ? "survival"
                                                                                      : "clustering") +
                          "' does not match prediction algorithm '" + cfg.prediction.algorithm + "'");

    if (root["years_risk_classification"])
        cfg.years_risk_classification = root["years_risk_classification"].as<double>();
    if (cfg.years_risk_classification <= 0.0)
        throw ConfigError("years_risk_classification must be positive");
    if (root["latent_impute"]) cfg.latent_impute = root["latent_impute"].as<bool>();
    if (cfg.latent_impute && cfg.integration.method != IntegrationMethod::Gfa)
        throw ConfigError("latent_impute: true requires the gfa integration method");
    if (root["test_size"]) cfg.test_size = root["test_size"].as<double>();
    if (root["n_folds"]) cfg.n_folds = root["n_folds"].as<int>();
    if (root["seed"]) cfg.seed = root["seed"].as<unsigned>();
    cfg.integration.seed = cfg.seed;
    if (root["end_study_date"]) cfg.end_study_date = root["end_study_date"].as<std::string>();
    if (root["cohort_cov"])
        for (const auto& c : root["cohort_cov"]) cfg.cohort_cov.push_back(c.as<std::string>());
    if (!root["out_path"]) missing_key("out_path");
    cfg.out_path = resolve_path(base, root["out_path"].as<std::string>());
    if (root["force"]) cfg.force = root["force"].as<bool>();
    return cfg;
}

}  // namespace

std::pair<DataConfig, ModelConfig> parse_configs(const std::string& data_path,
                                                 const std::string& model_path) {
    return {parse_data_config(data_path), parse_model_config(model_path)};
}

namespace {

void log_stage(const std::string& stage, const std::string& msg) {
    std::cerr << "[" << stage << "] " << msg << "\n";
}

struct AlignedData {
    std::vector<ModalityDataset> views;  // common sample order; missing rows zeroed
    std::vector<std::string> sample_ids;
    std::optional<ViewMask> mask;  // set only for latent_impute
    int n_dropped = 0;             // samples without all views (intersection mode)
};

AlignedData align_for_integration(std::vector<ModalityDataset> views, bool latent_impute) {
    AlignedData out;
    std::set<std::string> union_ids;
    for (const auto& v : views) union_ids.insert(v.sample_ids.begin(), v.sample_ids.end());

    if (!latent_impute) {
        out.views = align_samples(views);
        out.sample_ids = out.views[0].sample_ids;
        out.n_dropped = static_cast<int>(union_ids.size() - out.sample_ids.size());
        return out;
    }

    out.sample_ids.assign(union_ids.begin(), union_ids.end());
    const Eigen::Index n = static_cast<Eigen::Index>(out.sample_ids.size());
    ViewMask mask(n, static_cast<Eigen::Index>(views.size()));
    mask.setConstant(false);
    std::unordered_map<std::string, Eigen::Index> pos;
    for (Eigen::Index i = 0; i < n; ++i) pos[out.sample_ids[static_cast<size_t>(i)]] = i;

    for (size_t v = 0; v < views.size(); ++v) {
        ModalityDataset expanded;
        expanded.name = views[v].name;
        expanded.feature_names = views[v].feature_names;
        expanded.sample_ids = out.sample_ids;
        expanded.values = Matrix::Zero(n, views[v].n_features());
        for (size_t r = 0; r < views[v].sample_ids.size(); ++r) {
            Eigen::Index i = pos.at(views[v].sample_ids[r]);
            expanded.values.row(i) = views[v].values.row(static_cast<Eigen::Index>(r));
            mask(i, static_cast<Eigen::Index>(v)) = true;
        }
        out.views.push_back(std::move(expanded));
    }
    out.mask = mask;
    return out;
}

// Center/scale each view; with a mask, moments come from observed rows only
// and unobserved rows stay zero.
void standardize_views(AlignedData& data) {
    for (size_t v = 0; v < data.views.size(); ++v) {
        auto& ds = data.views[v];
        if (!data.mask) {
            ds = standardize(ds, {ds}).transformed[0];
            continue;
        }
        std::vector<Eigen::Index> obs;
        for (Eigen::Index i = 0; i < ds.n_samples(); ++i)
            if ((*data.mask)(i, static_cast<Eigen::Index>(v))) obs.push_back(i);
        if (obs.empty()) throw EmptyCohortError("view '" + ds.name + "' has no observed samples");
        const double n = static_cast<double>(obs.size());
        for (Eigen::Index j = 0; j < ds.n_features(); ++j) {
            double mean = 0.0;
            for (auto i : obs) mean += ds.values(i, j);
            mean /= n;
            double var = 0.0;
            for (auto i : obs) var += (ds.values(i, j) - mean) * (ds.values(i, j) - mean);
            double sd = std::sqrt(var / n);
            for (auto i : obs) ds.values(i, j) = sd < 1e-12 ? 0.0 : (ds.values(i, j) - mean) / sd;
        }
    }
}

std::vector<int> resolve_view_ranks(const std::vector<ModalitySpec>& specs,
                                    const std::vector<ModalityDataset>& views) {
    std::vector<int> ranks;
    for (size_t v = 0; v < views.size(); ++v) {
        const auto& sel = specs[v].rank_selector;
        if (sel.rank) {
            ranks.push_back(*sel.rank);
        } else {
            ranks.push_back(static_cast<int>(pca(views[v], sel).scores.cols()));
        }
    }
    return ranks;
}

struct DownstreamData {
    std::vector<std::string> ids;
    Matrix x;
    std::vector<std::string> feature_names;
    std::vector<int> labels;      // classification; event indicator for survival
    Vector time_years;            // survival only
};

double evaluate_metric(const ModelConfig& model, const Matrix& x_tr, const std::vector<int>& y_tr,
                       const Vector& t_tr, const Matrix& x_te, const std::vector<int>& y_te,
                       const Vector& t_te, const std::vector<std::string>& names, double alpha) {
    if (model.prediction.algorithm == "logregrssm") {
        PenaltyConfig pen{alpha, 1.0, true};
        auto fit = logistic_l1_fit(x_tr, y_tr, names, pen);
        return auc(y_te, logistic_predict_proba(fit, x_te));
    }
    if (model.prediction.algorithm == "coxnet") {
        PenaltyConfig pen{alpha, model.prediction.l1_ratio, true};
        auto fit = coxph_elasticnet_fit(x_tr, t_tr, y_tr, names, pen);
        return concordance_index(t_te, y_te, coxph_risk_score(fit, x_te));
    }
    // gaussiannb
    return auc(y_te, gaussian_nb_fit_predict(x_tr, y_tr, x_te));
}

void write_text(const fs::path& path, const std::string& content, RunSummary& summary) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    summary.written_files.push_back(path.filename().string());
}

json config_echo(const DataConfig& data, const ModelConfig& model) {
    json d;
    for (const auto& m : data.modalities) {
        json mj{{"name", m.name}, {"path", m.path}, {"id_column", m.id_column}};
        if (!m.features.empty()) mj["features"] = m.features;
        if (m.rank_selector.rank)
            mj["rank"] = *m.rank_selector.rank;
        else
            mj["variance_fraction"] = *m.rank_selector.variance_fraction;
        d["modalities"].push_back(mj);
    }
    d["cohort"] = {{"path", data.cohort.path},
                   {"file", data.cohort.file},
                   {"id_column", data.cohort.id_column},
                   {"baseline_column", data.cohort.baseline_column},
                   {"covariate_columns", data.cohort.covariate_columns}};
    if (data.cohort.censor_column) d["cohort"]["censor_column"] = *data.cohort.censor_column;
    d["events_path"] = data.events_path;
    json ev = json::array(), ex = json::array();
    for (const auto& c : data.endpoint.event_codes)
        ev.push_back({{"system", code_system_name(c.system)}, {"prefix", c.prefix}});
    for (const auto& c : data.endpoint.exclusion_codes)
        ex.push_back({{"system", code_system_name(c.system)}, {"prefix", c.prefix}});
    d["endpoint"] = {{"name", data.endpoint.name}, {"event_codes", ev}, {"exclusion_codes", ex}};

    json m;
    json ij{{"method", model.integration_key},
            {"max_factors", model.integration.max_factors},
            {"prune_fraction", model.integration.prune_fraction},
            {"gfa_tolerance", model.integration.gfa_tolerance},
            {"gfa_max_iter", model.integration.gfa_max_iter},
            {"ajive_resamples", model.integration.ajive_resamples},
            {"ajive_percentile", model.integration.ajive_percentile}};
    if (model.integration.variance_fraction)
        ij["variance_fraction"] = *model.integration.variance_fraction;
    m["integration"] = ij;
    json p{{"algorithm", model.prediction.algorithm},
           {"alpha", model.prediction.alpha},
           {"l1_ratio", model.prediction.l1_ratio}};
    if (!model.prediction.alpha_grid.empty()) p["alpha_grid"] = model.prediction.alpha_grid;
    if (model.prediction.algorithm == "kmeans") p["k"] = model.prediction.k;
    if (model.prediction.algorithm == "dbscan") {
        p["eps"] = model.prediction.eps;
        p["min_pts"] = model.prediction.min_pts;
    }
    m["prediction"] = p;
    m["task"] = model.task == TaskKind::Classification
                    ? "classification"
                    : model.task == TaskKind::Survival ? "survival" : "clustering";
    m["years_risk_classification"] = model.years_risk_classification;
    m["latent_impute"] = model.latent_impute;
    m["test_size"] = model.test_size;
    m["n_folds"] = model.n_folds;
    m["seed"] = model.seed;
    m["end_study_date"] = model.end_study_date;
    m["cohort_cov"] = model.cohort_cov;
    m["out_path"] = model.out_path;
    return json{{"data", d}, {"model", m}};
}

}  // namespace

RunSummary run_pipeline(const DataConfig& data, const ModelConfig& model) {
    const auto t_start = std::chrono::steady_clock::now();
    RunSummary summary;

    if (model.end_study_date.empty()) missing_key("end_study_date");
    const Date end_study = parse_date(model.end_study_date);

    // ------------------------------------------------------------------ load
    std::vector<ModalityDataset> raw_views;
    for (const auto& spec : data.modalities) {
        ModalityDataset ds = load_modality_csv(spec.path, spec.id_column);
        ds.name = spec.name;
        if (!spec.features.empty()) {
            ModalityDataset sub;
            sub.name = ds.name;
            sub.sample_ids = ds.sample_ids;
            sub.values.resize(ds.n_samples(), static_cast<Eigen::Index>(spec.features.size()));
            for (size_t j = 0; j < spec.features.size(); ++j) {
                auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(),
                                    spec.features[j]);
                if (it == ds.feature_names.end())
                    throw SchemaError("modality '" + ds.name + "': feature '" + spec.features[j] +
                                      "' not found");
                sub.feature_names.push_back(spec.features[j]);
                sub.values.col(static_cast<Eigen::Index>(j)) =
                    ds.values.col(it - ds.feature_names.begin());
            }
            ds = std::move(sub);
        }
        log_stage("load", spec.name + ": " + std::to_string(ds.n_samples()) + " samples, " +
                              std::to_string(ds.n_features()) + " features");
        raw_views.push_back(std::move(ds));
    }

    // ----------------------------------------------------------------- align
    AlignedData aligned = align_for_integration(std::move(raw_views), model.latent_impute);
    summary.n_merged_samples = static_cast<int>(aligned.sample_ids.size());
    if (aligned.n_dropped > 0)
        log_stage("align", std::to_string(aligned.n_dropped) +
                               " subjects dropped (missing in at least one modality)");
    log_stage("align", std::to_string(aligned.sample_ids.size()) + " subjects aligned");

    // ------------------------------------------------------------ standardize
    standardize_views(aligned);

    // -------------------------------------------------------------- integrate
    IntegrationConfig icfg = model.integration;
    icfg.per_view_ranks = resolve_view_ranks(data.modalities, aligned.views);
    IntegrationResult integration;
    switch (icfg.method) {
        case IntegrationMethod::Early:
        case IntegrationMethod::EarlyPca:
            integration = early_fusion(aligned.views, icfg);
            break;
        case IntegrationMethod::Ajive:
            integration = ajive_fit(aligned.views, icfg);
            break;
        case IntegrationMethod::Gfa:
            integration = gfa_fit(aligned.views, icfg, aligned.mask);
            break;
    }
    const MergedRepresentation& merged = integration.merged;
    log_stage("integrate", std::to_string(merged.n_components()) + " merged components");

    // ----------------------------------------------------------------- cohort
    const std::string cohort_csv = (fs::path(data.cohort.path) / data.cohort.file).string();
    CohortTable cohort = load_cohort_csv(cohort_csv, data.cohort.id_column,
                                         data.cohort.baseline_column, data.cohort.censor_column,
                                         data.cohort.covariate_columns, end_study);
    summary.n_cohort_rows = static_cast<int>(cohort.rows.size());
    auto events = load_events_csv(data.events_path);
    auto endpoint_dates = derive_endpoint(events, data.endpoint);
    CohortTable eligible = apply_baseline_exclusion(cohort, endpoint_dates);
    summary.n_after_exclusion = static_cast<int>(eligible.rows.size());
    log_stage("cohort", std::to_string(cohort.rows.size()) + " subjects, " +
                            std::to_string(eligible.rows.size()) + " disease-free at baseline");

    CohortTable labeled;
    if (model.task == TaskKind::Classification)
        labeled = label_classification(eligible, model.years_risk_classification);
    else if (model.task == TaskKind::Survival)
        labeled = build_survival_outcome(eligible);
    else
        labeled = eligible;

    // join with the merged representation
    std::unordered_map<std::string, Eigen::Index> merged_pos;
    for (size_t i = 0; i < merged.sample_ids.size(); ++i)
        merged_pos[merged.sample_ids[i]] = static_cast<Eigen::Index>(i);

    std::vector<int> cov_idx;
    for (const auto& cov : model.cohort_cov) {
        auto it = std::find(labeled.covariate_names.begin(), labeled.covariate_names.end(), cov);
        if (it == labeled.covariate_names.end())
            throw ConfigError("cohort_cov: column '" + cov + "' not among cohort covariates");
        cov_idx.push_back(static_cast<int>(it - labeled.covariate_names.begin()));
    }

    DownstreamData ds;
    ds.feature_names.reserve(static_cast<size_t>(merged.n_components()) + cov_idx.size());
    for (const auto& l : merged.component_labels) ds.feature_names.push_back(l.to_string());
    for (const auto& cov : model.cohort_cov) ds.feature_names.push_back(cov);

    std::vector<const CohortRow*> kept;
    int no_representation = 0;
    for (const auto& row : labeled.rows) {
        if (!merged_pos.count(row.subject_id)) {
            ++no_representation;
            continue;
        }
        if (model.task == TaskKind::Survival && *row.time_years <= 0.0) continue;
        kept.push_back(&row);
    }
    if (no_representation > 0)
        log_stage("cohort", std::to_string(no_representation) +
                                " labeled subjects excluded (no merged representation)");
    if (kept.empty()) throw EmptyCohortError("no labeled subjects with a merged representation");

    ds.x.resize(static_cast<Eigen::Index>(kept.size()),
                merged.n_components() + static_cast<Eigen::Index>(cov_idx.size()));
    if (model.task == TaskKind::Survival) ds.time_years.resize(static_cast<Eigen::Index>(kept.size()));
    for (size_t r = 0; r < kept.size(); ++r) {
        const CohortRow& row = *kept[r];
        ds.ids.push_back(row.subject_id);
        ds.x.row(static_cast<Eigen::Index>(r)).head(merged.n_components()) =
            merged.scores.row(merged_pos.at(row.subject_id));
        for (size_t c = 0; c < cov_idx.size(); ++c)
            ds.x(static_cast<Eigen::Index>(r),
                 merged.n_components() + static_cast<Eigen::Index>(c)) =
                row.covariates[static_cast<size_t>(cov_idx[c])];
        if (model.task == TaskKind::Classification)
            ds.labels.push_back(*row.label);
        else if (model.task == TaskKind::Survival) {
            ds.labels.push_back(*row.event_indicator);
            ds.time_years(static_cast<Eigen::Index>(r)) = *row.time_years;
        }
    }
    summary.n_labeled = static_cast<int>(ds.ids.size());
    summary.n_cases = static_cast<int>(std::count(ds.labels.begin(), ds.labels.end(), 1));
    log_stage("cohort", std::to_string(ds.ids.size()) + " subjects enter the downstream task (" +
                            std::to_string(summary.n_cases) + " cases)");

    // ------------------------------------------------------------- downstream
    std::optional<FittedModel> final_model;
    std::optional<ClusteringResult> clusters;
    Vector final_scores;  // per labeled subject, train+test
    std::vector<int> split_assignment(ds.ids.size(), 0);  // 0 train, 1 test

    if (model.task == TaskKind::Clustering) {
        clusters = model.prediction.algorithm == "kmeans"
                       ? kmeans(ds.x, model.prediction.k, model.seed)
                       : dbscan(ds.x, model.prediction.eps, model.prediction.min_pts);
        summary.metric_name = "none";
        summary.n_train = static_cast<int>(ds.ids.size());
    } else {
        SplitResult split = stratified_split(ds.ids, ds.labels, model.test_size, model.seed);
        std::set<std::string> test_ids(split.test_ids.begin(), split.test_ids.end());
        std::vector<Eigen::Index> train_rows, test_rows;
        for (size_t i = 0; i < ds.ids.size(); ++i) {
            if (test_ids.count(ds.ids[i])) {
                split_assignment[i] = 1;
                test_rows.push_back(static_cast<Eigen::Index>(i));
            } else {
                train_rows.push_back(static_cast<Eigen::Index>(i));
            }
        }
        summary.n_train = static_cast<int>(train_rows.size());
        summary.n_test = static_cast<int>(test_rows.size());

        auto subset = [&](const std::vector<Eigen::Index>& rows) {
            DownstreamData out;
            out.x.resize(static_cast<Eigen::Index>(rows.size()), ds.x.cols());
            if (ds.time_years.size() > 0)
                out.time_years.resize(static_cast<Eigen::Index>(rows.size()));
            for (size_t r = 0; r < rows.size(); ++r) {
                out.ids.push_back(ds.ids[static_cast<size_t>(rows[r])]);
                out.x.row(static_cast<Eigen::Index>(r)) = ds.x.row(rows[r]);
                out.labels.push_back(ds.labels[static_cast<size_t>(rows[r])]);
                if (ds.time_years.size() > 0)
                    out.time_years(static_cast<Eigen::Index>(r)) = ds.time_years(rows[r]);
            }
            return out;
        };
        DownstreamData train = subset(train_rows), test = subset(test_rows);

        std::vector<int> fold_of = stratified_kfold(train.ids, train.labels, model.n_folds, model.seed);

        std::vector<double> alphas = model.prediction.alpha_grid;
        if (alphas.empty() || model.prediction.algorithm == "gaussiannb")
            alphas = {model.prediction.alpha};
        std::sort(alphas.begin(), alphas.end());

        std::vector<std::vector<double>> fold_metrics_per_alpha(alphas.size());
        for (size_t a = 0; a < alphas.size(); ++a) {
            for (int f = 0; f < model.n_folds; ++f) {
                std::vector<Eigen::Index> in_rows, out_rows;
                for (size_t i = 0; i < fold_of.size(); ++i)
                    (fold_of[i] == f ? out_rows : in_rows).push_back(static_cast<Eigen::Index>(i));
                DownstreamData cv_tr, cv_te;
                {
                    auto sub2 = [&](const std::vector<Eigen::Index>& rows) {
                        DownstreamData out;
                        out.x.resize(static_cast<Eigen::Index>(rows.size()), train.x.cols());
                        if (train.time_years.size() > 0)
                            out.time_years.resize(static_cast<Eigen::Index>(rows.size()));
                        for (size_t r = 0; r < rows.size(); ++r) {
                            out.x.row(static_cast<Eigen::Index>(r)) = train.x.row(rows[r]);
                            out.labels.push_back(train.labels[static_cast<size_t>(rows[r])]);
                            if (train.time_years.size() > 0)
                                out.time_years(static_cast<Eigen::Index>(r)) =
                                    train.time_years(rows[r]);
                        }
                        return out;
                    };
                    cv_tr = sub2(in_rows);
                    cv_te = sub2(out_rows);
                }
                fold_metrics_per_alpha[a].push_back(
                    evaluate_metric(model, cv_tr.x, cv_tr.labels, cv_tr.time_years, cv_te.x,
                                    cv_te.labels, cv_te.time_years, ds.feature_names, alphas[a]));
            }
        }

        // one-standard-deviation rule: largest alpha whose mean metric stays
        // within one fold-SD of the best mean
        auto mean_sd = [&](const std::vector<double>& v) {
            double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double s2 = 0.0;
            for (double x : v) s2 += (x - m) * (x - m);
            double sd = v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0;
            return std::pair<double, double>(m, sd);
        };
        size_t best = 0;
        double best_mean = -1.0;
        for (size_t a = 0; a < alphas.size(); ++a) {
            double m = mean_sd(fold_metrics_per_alpha[a]).first;
            if (m > best_mean) {
                best_mean = m;
                best = a;
            }
        }
        double threshold = best_mean - mean_sd(fold_metrics_per_alpha[best]).second;
        size_t chosen = best;
        for (size_t a = alphas.size(); a-- > 0;) {
            if (mean_sd(fold_metrics_per_alpha[a]).first >= threshold) {
                chosen = std::max(chosen, a);
                break;
            }
        }
        summary.chosen_alpha = alphas[chosen];
        summary.fold_metrics = fold_metrics_per_alpha[chosen];
        auto [fm, fsd] = mean_sd(summary.fold_metrics);
        summary.fold_mean = fm;
        summary.fold_std = fsd;
        summary.metric_name =
            model.prediction.algorithm == "coxnet" ? "concordance" : "auc";

        // final fit on the full training split, evaluated on the test split
        final_scores.resize(static_cast<Eigen::Index>(ds.ids.size()));
        if (model.prediction.algorithm == "logregrssm") {
            PenaltyConfig pen{summary.chosen_alpha, 1.0, true};
            final_model = logistic_l1_fit(train.x, train.labels, ds.feature_names, pen);
            final_scores = logistic_predict_proba(*final_model, ds.x);
            summary.test_metric = auc(test.labels, logistic_predict_proba(*final_model, test.x));
        } else if (model.prediction.algorithm == "coxnet") {
            PenaltyConfig pen{summary.chosen_alpha, model.prediction.l1_ratio, true};
            final_model = coxph_elasticnet_fit(train.x, train.time_years, train.labels,
                                               ds.feature_names, pen);
            final_scores = coxph_risk_score(*final_model, ds.x);
            summary.test_metric =
                concordance_index(test.time_years, test.labels, coxph_risk_score(*final_model, test.x));
        } else {  // gaussiannb
            final_scores = gaussian_nb_fit_predict(train.x, train.labels, ds.x);
            summary.test_metric =
                auc(test.labels, gaussian_nb_fit_predict(train.x, train.labels, test.x));
        }
        log_stage("evaluate", summary.metric_name + ": CV mean " + detail::fmt_num(summary.fold_mean) +
                                  " (sd " + detail::fmt_num(summary.fold_std) + "), test " +
                                  detail::fmt_num(summary.test_metric));
    }

    // ---------------------------------------------------------------- outputs
    const fs::path out_dir(model.out_path);
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !model.force)
        throw OutputExistsError("output directory '" + model.out_path +
                                "' is not empty (use force to overwrite)");
    fs::create_directories(out_dir);

    {
        std::string csv = "sample_id";
        for (const auto& l : merged.component_labels) csv += "," + l.to_string();
        csv += "\n";
        for (size_t i = 0; i < merged.sample_ids.size(); ++i) {
            csv += merged.sample_ids[i];
            for (Eigen::Index k = 0; k < merged.n_components(); ++k)
                csv += "," + detail::fmt_num(merged.scores(static_cast<Eigen::Index>(i), k));
            csv += "\n";
        }
        write_text(out_dir / "merged_scores.csv", csv, summary);
    }
    for (size_t v = 0; v < merged.view_names.size(); ++v) {
        std::string csv = "feature";
        for (const auto& l : merged.component_labels) csv += "," + l.to_string();
        csv += "\n";
        const auto& feats = integration.fitted.view_features[v];
        for (size_t j = 0; j < feats.size(); ++j) {
            csv += feats[j];
            for (Eigen::Index k = 0; k < merged.n_components(); ++k)
                csv += "," + detail::fmt_num(merged.weight_tables[v](static_cast<Eigen::Index>(j), k));
            csv += "\n";
        }
        write_text(out_dir / ("weights_" + merged.view_names[v] + ".csv"), csv, summary);
    }
    {
        std::string csv = "component";
        for (const auto& name : merged.view_names) csv += "," + name;
        csv += "\n";
        for (Eigen::Index k = 0; k < merged.n_components(); ++k) {
            csv += merged.component_labels[static_cast<size_t>(k)].to_string();
            for (Eigen::Index v = 0; v < merged.variance_explained.cols(); ++v)
                csv += "," + detail::fmt_num(merged.variance_explained(k, v));
            csv += "\n";
        }
        write_text(out_dir / "variance_explained.csv", csv, summary);
    }
    {
        std::string csv = "model,fold,metric_name,value\n";
        for (size_t f = 0; f < summary.fold_metrics.size(); ++f)
            csv += model.prediction.algorithm + "," + std::to_string(f) + "," +
                   summary.metric_name + "," + detail::fmt_num(summary.fold_metrics[f]) + "\n";
        write_text(out_dir / "cv_metrics.csv", csv, summary);
    }
    {
        std::string csv;
        if (model.task == TaskKind::Clustering) {
            csv = "subject_id,cluster\n";
            for (size_t i = 0; i < ds.ids.size(); ++i)
                csv += ds.ids[i] + "," + std::to_string(clusters->assignments[i]) + "\n";
        } else if (model.task == TaskKind::Classification) {
            csv = "subject_id,split,label,score\n";
            for (size_t i = 0; i < ds.ids.size(); ++i)
                csv += ds.ids[i] + "," + (split_assignment[i] ? "test" : "train") + "," +
                       std::to_string(ds.labels[i]) + "," +
                       detail::fmt_num(final_scores(static_cast<Eigen::Index>(i))) + "\n";
        } else {
            csv = "subject_id,split,time_years,event,risk_score\n";
            for (size_t i = 0; i < ds.ids.size(); ++i)
                csv += ds.ids[i] + "," + (split_assignment[i] ? "test" : "train") + "," +
                       detail::fmt_num(ds.time_years(static_cast<Eigen::Index>(i))) + "," +
                       std::to_string(ds.labels[i]) + "," +
                       detail::fmt_num(final_scores(static_cast<Eigen::Index>(i))) + "\n";
        }
        write_text(out_dir / "predictions.csv", csv, summary);
    }
    {
        json js;
        js["algorithm"] = model.prediction.algorithm;
        js["task"] = model.task == TaskKind::Classification
                         ? "classification"
                         : model.task == TaskKind::Survival ? "survival" : "clustering";
        if (final_model) {
            js["alpha"] = summary.chosen_alpha;
            if (model.prediction.algorithm == "coxnet") js["l1_ratio"] = model.prediction.l1_ratio;
            if (final_model->intercept) js["intercept"] = *final_model->intercept;
            js["iterations"] = final_model->iterations;
            js["converged"] = final_model->converged;
            json coefs = json::array();
            for (const auto& fi : final_model->interpretation) {
                json c{{"name", fi.name}, {"estimate", fi.estimate}, {"selected", fi.selected}};
                if (fi.standard_error) {
                    c["standard_error"] = *fi.standard_error;
                    c["ci_low"] = *fi.ci_low;
                    c["ci_high"] = *fi.ci_high;
                }
                coefs.push_back(c);
            }
            js["coefficients"] = coefs;
        }
        if (clusters) {
            js["params"] = {{"a", clusters->param_a}, {"b", clusters->param_b}};
            std::map<int, int> sizes;
            for (int c : clusters->assignments) ++sizes[c];
            json sz;
            for (const auto& [c, n] : sizes) sz[std::to_string(c)] = n;
            js["cluster_sizes"] = sz;
        }
        if (!summary.metric_name.empty() && summary.metric_name != "none") {
            js["metric"] = {{"name", summary.metric_name},
                            {"cv_mean", summary.fold_mean},
                            {"cv_std", summary.fold_std},
                            {"test", summary.test_metric}};
        }
        write_text(out_dir / "model_summary.json", js.dump(2) + "\n", summary);
    }
    {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t_start)
                                 .count();
        json js;
        js["tool"] = "mvfuse";
        js["version"] = "0.1.0";
        js["seed"] = model.seed;
        js["config"] = config_echo(data, model);
        js["cohort_sizes"] = {{"merged_samples", summary.n_merged_samples},
                              {"cohort_rows", summary.n_cohort_rows},
                              {"after_baseline_exclusion", summary.n_after_exclusion},
                              {"labeled", summary.n_labeled},
                              {"train", summary.n_train},
                              {"test", summary.n_test},
                              {"cases", summary.n_cases}};
        js["elapsed_ms"] = elapsed;
        write_text(out_dir / "run_manifest.json", js.dump(2) + "\n", summary);
    }
    std::sort(summary.written_files.begin(), summary.written_files.end());
    log_stage("write", std::to_string(summary.written_files.size()) + " files in " + model.out_path);
    return summary;
}

}  // namespace mvfuse
