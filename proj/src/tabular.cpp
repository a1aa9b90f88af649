#include "mvfuse/tabular.hpp"

#include "mvfuse/internal.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mvfuse {

void ModalityDataset::validate() const {
    if (values.rows() != static_cast<Eigen::Index>(sample_ids.size()))
        throw SchemaError("dataset '" + name + "': row count does not match sample_ids");
    if (values.cols() != static_cast<Eigen::Index>(feature_names.size()))
        throw SchemaError("dataset '" + name + "': column count does not match feature_names");
    std::unordered_set<std::string> seen;
    for (const auto& id : sample_ids)
        if (!seen.insert(id).second)
            throw DuplicateIdError("dataset '" + name + "': duplicate sample id '" + id + "'");
    seen.clear();
    for (const auto& f : feature_names)
        if (!seen.insert(f).second)
            throw DuplicateIdError("dataset '" + name + "': duplicate feature name '" + f + "'");
    if (!values.allFinite())
        throw DataFormatError("dataset '" + name + "': non-finite values present");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string file_stem(const std::string& path) {
    auto slash = path.find_last_of("/\\");
    std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
    auto dot = base.find_last_of('.');
    return (dot == std::string::npos) ? base : base.substr(0, dot);
}

}  // namespace

ModalityDataset load_modality_csv(const std::string& path, const std::string& id_column) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataFormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    auto header = split_csv_line(line);
    Eigen::Index id_idx = -1;
    for (size_t j = 0; j < header.size(); ++j)
        if (header[j] == id_column) id_idx = static_cast<Eigen::Index>(j);
    if (id_idx < 0) throw DataFormatError(path + ": id column '" + id_column + "' not found");

    ModalityDataset ds;
    ds.name = file_stem(path);
    for (size_t j = 0; j < header.size(); ++j)
        if (static_cast<Eigen::Index>(j) != id_idx) ds.feature_names.push_back(header[j]);

    std::vector<std::vector<double>> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataFormatError(path + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(header.size()));
        std::vector<double> row;
        row.reserve(cells.size() - 1);
        for (size_t j = 0; j < cells.size(); ++j) {
            if (static_cast<Eigen::Index>(j) == id_idx) {
                ds.sample_ids.push_back(cells[j]);
                continue;
            }
            char* end = nullptr;
            double v = std::strtod(cells[j].c_str(), &end);
            if (end == cells[j].c_str() || *end != '\0' || !std::isfinite(v))
                throw DataFormatError(path + ": line " + std::to_string(line_no) + ", column '" +
                                      header[j] + "': cannot parse '" + cells[j] +
                                      "' as a finite number");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }

    ds.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(ds.feature_names.size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            ds.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

    ds.validate();
    return ds;
}

std::vector<ModalityDataset> align_samples(const std::vector<ModalityDataset>& datasets) {
    if (datasets.empty()) throw EmptyCohortError("align_samples: no datasets");

    std::set<std::string> common(datasets[0].sample_ids.begin(), datasets[0].sample_ids.end());
    for (size_t k = 1; k < datasets.size(); ++k) {
        std::unordered_set<std::string> ids(datasets[k].sample_ids.begin(),
                                            datasets[k].sample_ids.end());
        for (auto it = common.begin(); it != common.end();)
            it = ids.count(*it) ? std::next(it) : common.erase(it);
    }
    if (common.empty()) throw EmptyCohortError("align_samples: no samples shared by all datasets");

    std::vector<std::string> ordered(common.begin(), common.end());  // set is sorted

    std::vector<ModalityDataset> out;
    out.reserve(datasets.size());
    for (const auto& ds : datasets) {
        std::unordered_map<std::string, Eigen::Index> pos;
        for (size_t i = 0; i < ds.sample_ids.size(); ++i)
            pos[ds.sample_ids[i]] = static_cast<Eigen::Index>(i);
        ModalityDataset r;
        r.name = ds.name;
        r.feature_names = ds.feature_names;
        r.sample_ids = ordered;
        r.values.resize(static_cast<Eigen::Index>(ordered.size()), ds.n_features());
        for (size_t i = 0; i < ordered.size(); ++i)
            r.values.row(static_cast<Eigen::Index>(i)) = ds.values.row(pos.at(ordered[i]));
        out.push_back(std::move(r));
    }
    return out;
}

StandardizeResult standardize(const ModalityDataset& train,
                              const std::vector<ModalityDataset>& apply_to) {
    if (train.n_samples() == 0) throw EmptyCohortError("standardize: empty training dataset");

    const double n = static_cast<double>(train.n_samples());
    Vector means = train.values.colwise().mean();
    Vector stds(train.n_features());
    for (Eigen::Index j = 0; j < train.n_features(); ++j) {
        double var = (train.values.col(j).array() - means(j)).square().sum() / n;
        stds(j) = std::sqrt(var);
    }

    StandardizeResult res;
    res.means = means;
    res.stds = stds;
    for (const auto& ds : apply_to) {
        if (ds.feature_names != train.feature_names)
            throw SchemaError("standardize: feature names of '" + ds.name +
                              "' do not match training dataset '" + train.name + "'");
        ModalityDataset t = ds;
        for (Eigen::Index j = 0; j < t.n_features(); ++j) {
            if (stds(j) < 1e-12)
                t.values.col(j).setZero();
            else
                t.values.col(j) = (t.values.col(j).array() - means(j)) / stds(j);
        }
        res.transformed.push_back(std::move(t));
    }
    return res;
}

namespace {

// VIF of each column: 1/(1-R^2) from regressing it (with intercept) on the
// remaining columns, ridge jitter on the Gram matrix to survive exact
// collinearity. Capped at 1e12.
std::vector<double> compute_vifs(const Matrix& X) {
    const Eigen::Index n = X.rows(), d = X.cols();
    Matrix C = X.rowwise() - X.colwise().mean();  // intercept via centering
    std::vector<double> vifs(static_cast<size_t>(d), 1.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        double tss = C.col(j).squaredNorm();
        if (tss < 1e-24 || d == 1) {
            vifs[static_cast<size_t>(j)] = 1.0;
            continue;
        }
        Matrix Xo(n, d - 1);
        Eigen::Index c = 0;
        for (Eigen::Index k = 0; k < d; ++k)
            if (k != j) Xo.col(c++) = C.col(k);
        Matrix gram = Xo.transpose() * Xo;
        gram.diagonal().array() += 1e-10;
        Vector beta = gram.ldlt().solve(Xo.transpose() * C.col(j));
        double rss = (C.col(j) - Xo * beta).squaredNorm();
        double r2 = 1.0 - rss / tss;
        double vif = (r2 >= 1.0) ? 1e12 : 1.0 / (1.0 - r2);
        vifs[static_cast<size_t>(j)] = std::min(vif, 1e12);
    }
    return vifs;
}

ModalityDataset drop_column(const ModalityDataset& ds, Eigen::Index j) {
    ModalityDataset r;
    r.name = ds.name;
    r.sample_ids = ds.sample_ids;
    r.values.resize(ds.n_samples(), ds.n_features() - 1);
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < ds.n_features(); ++k) {
        if (k == j) continue;
        r.feature_names.push_back(ds.feature_names[static_cast<size_t>(k)]);
        r.values.col(c++) = ds.values.col(k);
    }
    return r;
}

}  // namespace

VifResult vif_filter(const ModalityDataset& dataset, double threshold) {
    if (dataset.n_samples() < 3) throw InsufficientSamplesError("vif_filter: need at least 3 samples");
    if (threshold <= 1.0) throw ConfigError("vif_filter: threshold must exceed 1");

    VifResult res;
    res.filtered = dataset;
    while (res.filtered.n_features() > 1) {
        auto vifs = compute_vifs(res.filtered.values);
        Eigen::Index worst = -1;
        double worst_vif = threshold;
        for (Eigen::Index j = 0; j < res.filtered.n_features(); ++j) {
            double v = vifs[static_cast<size_t>(j)];
            if (v > threshold && v >= worst_vif - 1e-9) {
                // >= with tolerance: ties resolve to the larger column index
                worst = j;
                worst_vif = std::max(worst_vif, v);
            }
        }
        if (worst < 0) break;
        res.removed.push_back(res.filtered.feature_names[static_cast<size_t>(worst)]);
        res.filtered = drop_column(res.filtered, worst);
    }
    return res;
}

PcaResult pca(const ModalityDataset& dataset, const RankSelector& selector) {
    const Eigen::Index n = dataset.n_samples(), d = dataset.n_features();
    if (n == 0 || d == 0) throw DegenerateDataError("pca: empty dataset");

    Vector means = dataset.values.colwise().mean();
    Matrix centered = dataset.values.rowwise() - means.transpose();
    double total_var = centered.squaredNorm() / static_cast<double>(n);
    if (total_var < 1e-24) throw DegenerateDataError("pca: dataset has zero variance");

    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const Eigen::Index r = std::min(n, d);

    Vector var = sv.array().square() / static_cast<double>(n);
    Vector ratio = var / total_var;

    Eigen::Index m;
    if (selector.rank) {
        m = *selector.rank;
        if (m < 1 || m > r) throw ConfigError("pca: requested rank out of range");
    } else if (selector.variance_fraction) {
        double p = *selector.variance_fraction;
        if (p <= 0.0 || p > 1.0) throw ConfigError("pca: variance fraction must be in (0,1]");
        double cum = 0.0;
        m = r;
        for (Eigen::Index k = 0; k < r; ++k) {
            cum += ratio(k);
            if (cum >= p - 1e-12) {
                m = k + 1;
                break;
            }
        }
    } else {
        throw ConfigError("pca: selector has neither rank nor variance fraction");
    }

    PcaResult res;
    res.model.means = means;
    res.model.components = svd.matrixV().leftCols(m);
    res.model.explained_variance = var.head(m);
    res.model.explained_variance_ratio = ratio.head(m);

    // Sign convention: largest-|entry| loading positive per component.
    for (Eigen::Index k = 0; k < m; ++k) {
        Eigen::Index imax;
        res.model.components.col(k).cwiseAbs().maxCoeff(&imax);
        if (res.model.components(imax, k) < 0) res.model.components.col(k) *= -1.0;
    }
    res.scores = centered * res.model.components;
    return res;
}


namespace detail {

std::string fmt_num(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

}  // namespace detail

}  // namespace mvfuse
