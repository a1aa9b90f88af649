#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "mvfuse/integration.hpp"
#include "mvfuse/synthetic.hpp"

using namespace mvfuse;

namespace {

ModalityDataset make_view(const std::string& name, const Matrix& values) {
    ModalityDataset ds;
    ds.name = name;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        ds.sample_ids.push_back("s" + std::to_string(100 + i));
    for (Eigen::Index j = 0; j < values.cols(); ++j)
        ds.feature_names.push_back(name + "_f" + std::to_string(j + 1));
    ds.values = values;
    return ds;
}

Matrix random_gaussian(std::mt19937& rng, Eigen::Index n, Eigen::Index d, double sigma = 1.0) {
    std::normal_distribution<double> dist(0.0, sigma);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = dist(rng);
    return x;
}

Matrix orthonormal_cols(std::mt19937& rng, Eigen::Index n, Eigen::Index k) {
    Matrix g = random_gaussian(rng, n, k);
    Eigen::HouseholderQR<Matrix> qr(g);
    return Matrix(qr.householderQ()).leftCols(k);
}

void center_columns(Matrix& x) {
    x.rowwise() -= x.colwise().mean();
}

double principal_angle_deg(const Vector& a, const Vector& b) {
    double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
    return std::acos(std::min(1.0, c)) * 180.0 / M_PI;
}

IntegrationConfig ajive_config(std::vector<int> ranks, unsigned seed = 0) {
    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Ajive;
    cfg.per_view_ranks = std::move(ranks);
    cfg.seed = seed;
    return cfg;
}

void check_ajive_invariants(const IntegrationResult& res) {
    const auto& dec = *res.fitted.ajive;
    const Matrix& s = dec.joint_scores;
    if (s.cols() > 0) {
        Matrix gram = s.transpose() * s;
        CHECK((gram - Matrix::Identity(s.cols(), s.cols())).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
    for (const auto& si : dec.individual_scores)
        if (s.cols() > 0 && si.cols() > 0)
            CHECK((s.transpose() * si).lpNorm<Eigen::Infinity>() <= 1e-6);
}

}  // namespace

TEST_CASE("early fusion concatenates views in order") {
    std::mt19937 rng(1);
    Matrix a = random_gaussian(rng, 20, 2), b = random_gaussian(rng, 20, 3);
    std::vector<ModalityDataset> views{make_view("v1", a), make_view("v2", b)};

    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Early;
    auto res = early_fusion(views, cfg);
    CHECK(res.merged.n_components() == 5);
    CHECK(res.merged.scores.leftCols(2) == a);
    CHECK(res.merged.scores.rightCols(3) == b);
    CHECK(res.merged.component_labels[0].to_string() == "v1_Ind1");
    CHECK(res.merged.component_labels[2].to_string() == "v2_Ind1");

    // single view, no PCA: identity
    auto single = early_fusion({make_view("v1", a)}, cfg);
    CHECK(single.merged.scores == a);

    // per-view PCA with m = (1, 1)
    IntegrationConfig pca_cfg;
    pca_cfg.method = IntegrationMethod::EarlyPca;
    pca_cfg.per_view_ranks = std::vector<int>{1, 1};
    auto reduced = early_fusion(views, pca_cfg);
    CHECK(reduced.merged.n_components() == 2);

    // misaligned ids
    auto bad = make_view("v2", b);
    bad.sample_ids[0] = "other";
    CHECK_THROWS_AS(early_fusion({make_view("v1", a), bad}, cfg), AlignmentError);
}

TEST_CASE("ajive on two identical rank-2 views finds a rank-2 joint space only") {
    std::mt19937 rng(2);
    Matrix scores = random_gaussian(rng, 50, 2);
    Matrix loadings = random_gaussian(rng, 6, 2);
    Matrix y = scores * loadings.transpose();
    center_columns(y);
    std::vector<ModalityDataset> views{make_view("v1", y), make_view("v2", y)};

    auto res = ajive_fit(views, ajive_config({2, 2}));
    const auto& dec = *res.fitted.ajive;
    CHECK(dec.joint_rank == 2);
    CHECK(dec.individual_ranks[0] == 0);
    CHECK(dec.individual_ranks[1] == 0);
    check_ajive_invariants(res);

    // the joint part reconstructs each view almost exactly
    Matrix joint_recon = dec.joint_scores * (dec.joint_scores.transpose() * y);
    CHECK((y - joint_recon).norm() / y.norm() < 1e-8);
}

TEST_CASE("ajive recovers planted joint and individual structure") {
    SyntheticConfig cfg;
    cfg.n_samples = 500;
    cfg.n_views = 3;
    cfg.noise_sigma = 0.01;
    cfg.seed = 11;
    auto data = generate_multiview(cfg);

    auto res = ajive_fit(data.views, ajive_config({2, 2, 2}, 11));
    const auto& dec = *res.fitted.ajive;
    CHECK(dec.joint_rank == 1);
    for (int mi : dec.individual_ranks) CHECK(mi == 1);
    check_ajive_invariants(res);

    Vector z = data.joint_scores;
    z.array() -= z.mean();
    CHECK(principal_angle_deg(dec.joint_scores.col(0), z) < 5.0);

    // merged columns: [Joint | v1_Ind | v2_Ind | v3_Ind]
    REQUIRE(res.merged.n_components() == 4);
    CHECK(res.merged.component_labels[0].to_string() == "Joint1");
    CHECK(res.merged.component_labels[1].to_string() == "view1_Ind1");

    // projecting the training data recovers the stored scores
    Matrix projected = project_new(res.fitted, data.views);
    CHECK((projected - res.merged.scores).lpNorm<Eigen::Infinity>() <= 1e-8);

    // a missing view is not supported for AJIVE projection
    ViewMask mask(data.views[0].n_samples(), 3);
    mask.setConstant(true);
    mask(0, 1) = false;
    CHECK_THROWS_AS(project_new(res.fitted, data.views, mask), MissingViewUnsupportedError);
}

TEST_CASE("ajive on independent subspaces finds no joint structure") {
    std::mt19937 rng(3);
    Matrix u1 = orthonormal_cols(rng, 500, 2), u2 = orthonormal_cols(rng, 500, 2);
    Matrix y1 = u1 * random_gaussian(rng, 8, 2).transpose() * 10.0;
    Matrix y2 = u2 * random_gaussian(rng, 8, 2).transpose() * 10.0;
    center_columns(y1);
    center_columns(y2);
    auto res = ajive_fit({make_view("v1", y1), make_view("v2", y2)}, ajive_config({2, 2}));
    CHECK(res.fitted.ajive->joint_rank == 0);
    check_ajive_invariants(res);
}

TEST_CASE("ajive joint rank does not grow when noise columns are appended") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        SyntheticConfig cfg;
        cfg.n_samples = 200;
        cfg.noise_sigma = 0.01;
        cfg.seed = 100 + seed;
        auto data = generate_multiview(cfg);
        auto base = ajive_fit(data.views, ajive_config({2, 2, 2}, seed));

        std::mt19937 rng(seed);
        auto noisy = data.views;
        Matrix extra = random_gaussian(rng, cfg.n_samples, 5, 0.5);
        Matrix widened(cfg.n_samples, noisy[0].n_features() + 5);
        widened << noisy[0].values, extra;
        noisy[0].values = widened;
        for (int j = 0; j < 5; ++j) noisy[0].feature_names.push_back("noise" + std::to_string(j));

        auto wide = ajive_fit(noisy, ajive_config({2, 2, 2}, seed));
        CHECK(wide.fitted.ajive->joint_rank <= base.fitted.ajive->joint_rank);
    }
}

TEST_CASE("ajive is deterministic and validates rank requests") {
    SyntheticConfig cfg;
    cfg.n_samples = 60;
    cfg.seed = 5;
    auto data = generate_multiview(cfg);
    auto a = ajive_fit(data.views, ajive_config({2, 2, 2}, 9));
    auto b = ajive_fit(data.views, ajive_config({2, 2, 2}, 9));
    CHECK(a.merged.scores == b.merged.scores);

    CHECK_THROWS_AS(ajive_fit(data.views, ajive_config({100, 2, 2})), RankError);
}

TEST_CASE("gfa matches the truncated-SVD oracle on an exact rank-1 view") {
    std::mt19937 rng(4);
    Vector z = random_gaussian(rng, 60, 1).col(0);
    Vector w = random_gaussian(rng, 8, 1).col(0);
    Matrix y = z * w.transpose();
    center_columns(y);

    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 3;
    cfg.prune_fraction = 0.05;
    cfg.seed = 4;
    auto res = gfa_fit({make_view("v1", y)}, cfg);
    const auto& model = *res.fitted.gfa;
    CHECK(model.n_active() == 1);
    Matrix recon = res.merged.scores * res.merged.weight_tables[0].transpose();
    CHECK((y - recon).norm() / y.norm() < 1e-3);

    // ELBO is non-decreasing (slack 1e-6)
    for (size_t i = 1; i < model.elbo_trace.size(); ++i)
        CHECK(model.elbo_trace[i] >= model.elbo_trace[i - 1] - 1e-6);

    // determinism: bit-identical scores on a re-run
    auto res2 = gfa_fit({make_view("v1", y)}, cfg);
    CHECK(res.merged.scores == res2.merged.scores);
}

TEST_CASE("gfa with an all-true mask equals the no-mask code path exactly") {
    SyntheticConfig scfg;
    scfg.n_samples = 80;
    scfg.n_views = 2;
    scfg.seed = 6;
    scfg.noise_sigma = 0.1;
    auto data = generate_multiview(scfg);

    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 5;
    cfg.seed = 6;
    auto plain = gfa_fit(data.views, cfg);
    ViewMask mask(scfg.n_samples, 2);
    mask.setConstant(true);
    auto masked = gfa_fit(data.views, cfg, mask);
    CHECK(plain.merged.scores == masked.merged.scores);
    CHECK(plain.fitted.gfa->elbo_trace == masked.fitted.gfa->elbo_trace);
}

TEST_CASE("gfa imputes factors for samples missing a duplicate view") {
    std::mt19937 rng(7);
    const int n = 120;
    Vector z = random_gaussian(rng, n, 1).col(0);
    Vector w = random_gaussian(rng, 10, 1).col(0) * 2.0;
    Matrix y1 = z * w.transpose() + random_gaussian(rng, n, 10, 0.05);
    Matrix y2 = y1;  // duplicate view
    center_columns(y1);
    center_columns(y2);
    std::vector<ModalityDataset> views{make_view("v1", y1), make_view("v2", y2)};

    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 4;
    cfg.seed = 7;
    auto full = gfa_fit(views, cfg);

    ViewMask mask(n, 2);
    mask.setConstant(true);
    for (int i = 0; i < n; i += 4) mask(i, 1) = false;  // 25% missing view2
    auto partial = gfa_fit(views, cfg, mask);

    REQUIRE(full.fitted.gfa->n_active() >= 1);
    REQUIRE(partial.fitted.gfa->n_active() >= 1);

    // compare the dominant factor over the masked samples, up to sign
    Vector f_full(n / 4 + (n % 4 ? 1 : 0)), f_part(f_full.size());
    Eigen::Index k = 0;
    for (int i = 0; i < n; i += 4) {
        f_full(k) = full.merged.scores(i, 0);
        f_part(k) = partial.merged.scores(i, 0);
        ++k;
    }
    double cosine = std::abs(f_full.dot(f_part)) / (f_full.norm() * f_part.norm());
    CHECK(cosine > 0.99);
}

TEST_CASE("gfa_impute_latent conditioning") {
    std::mt19937 rng(8);
    const int n = 100;
    Vector z = random_gaussian(rng, n, 1).col(0);
    Vector w = random_gaussian(rng, 12, 1).col(0) * 3.0;
    Matrix y = z * w.transpose();  // noiseless
    center_columns(y);
    std::vector<ModalityDataset> views{make_view("v1", y), make_view("v2", y)};

    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 3;
    cfg.seed = 8;
    auto res = gfa_fit(views, cfg);
    const auto& model = *res.fitted.gfa;
    REQUIRE(model.n_active() >= 1);

    // fully observed sample: imputation equals the projection path
    ViewMask all(2, 2);
    all.setConstant(true);
    std::vector<Matrix> new_views{y.topRows(2), y.topRows(2)};
    Matrix cond = gfa_impute_latent(model, new_views, all);
    Matrix proj = project_new(res.fitted, {make_view("v1", y.topRows(2)), make_view("v2", y.topRows(2))});
    CHECK((cond - proj).lpNorm<Eigen::Infinity>() <= 1e-10);

    // observing only the duplicate view1 recovers nearly the same factor
    ViewMask only1(2, 2);
    only1.setConstant(false);
    only1.col(0).setConstant(true);
    Matrix cond1 = gfa_impute_latent(model, new_views, only1);
    // noiseless duplicate: relative deviation is tiny
    CHECK((cond1 - cond).norm() / cond.norm() < 1e-3);

    ViewMask none(2, 2);
    none.setConstant(false);
    CHECK_THROWS_AS(gfa_impute_latent(model, new_views, none), MissingAllViewsError);
}

TEST_CASE("gfa reconstruction is scale equivariant") {
    SyntheticConfig scfg;
    scfg.n_samples = 90;
    scfg.n_views = 2;
    scfg.seed = 9;
    scfg.noise_sigma = 0.1;
    auto data = generate_multiview(scfg);
    for (auto& v : data.views) center_columns(v.values);

    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 4;
    cfg.seed = 9;

    auto rel_err = [](const IntegrationResult& r, const Matrix& y, int view) {
        Matrix recon = r.merged.scores * r.merged.weight_tables[static_cast<size_t>(view)].transpose();
        return (y - recon).norm() / y.norm();
    };

    auto base = gfa_fit(data.views, cfg);
    double e0 = rel_err(base, data.views[0].values, 0);

    auto scaled_views = data.views;
    scaled_views[0].values *= 7.0;
    auto scaled = gfa_fit(scaled_views, cfg);
    double e1 = rel_err(scaled, scaled_views[0].values, 0);
    CHECK(std::abs(e0 - e1) < 1e-3);
}

TEST_CASE("gfa rejects samples with no observed views") {
    std::mt19937 rng(10);
    Matrix y = random_gaussian(rng, 30, 4);
    std::vector<ModalityDataset> views{make_view("v1", y), make_view("v2", y)};
    ViewMask mask(30, 2);
    mask.setConstant(true);
    mask.row(3).setConstant(false);
    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 2;
    CHECK_THROWS_AS(gfa_fit(views, cfg, mask), MissingAllViewsError);
}

TEST_CASE("variance explained conventions") {
    std::mt19937 rng(12);
    // two orthogonal score directions with a 3:1 variance split
    Matrix u = orthonormal_cols(rng, 200, 2);
    Vector w1 = Vector::Zero(6), w2 = Vector::Zero(6);
    w1(0) = std::sqrt(3.0);
    w2(1) = 1.0;
    Matrix y = u.col(0) * w1.transpose() + u.col(1) * w2.transpose();
    center_columns(y);

    auto res = ajive_fit({make_view("v1", y), make_view("v2", y)}, ajive_config({2, 2}));
    REQUIRE(res.fitted.ajive->joint_rank == 2);
    const Matrix& ve = res.merged.variance_explained;
    double r1 = ve(0, 0), r2 = ve(1, 0);
    CHECK(r1 / (r1 + r2) == doctest::Approx(0.75).epsilon(0.02));
    CHECK(r2 / (r1 + r2) == doctest::Approx(0.25).epsilon(0.02));
    CHECK(r1 + r2 == doctest::Approx(1.0).epsilon(1e-6));

    // near-noiseless rank-1 data: the single surviving factor explains
    // essentially all of the view
    Vector w_dense(6);
    w_dense << 1.5, -0.8, 0.6, 1.1, -1.2, 0.9;
    Matrix y1 = std::sqrt(200.0) * u.col(0) * w_dense.transpose() +
                random_gaussian(rng, 200, 6, 0.01);
    center_columns(y1);
    IntegrationConfig cfg;
    cfg.method = IntegrationMethod::Gfa;
    cfg.max_factors = 3;
    cfg.seed = 12;
    auto g = gfa_fit({make_view("v1", y1)}, cfg);
    REQUIRE(g.fitted.gfa->n_active() == 1);
    CHECK(g.merged.variance_explained(0, 0) == doctest::Approx(1.0).epsilon(1e-3));

    // a component with all-zero weights in a view explains none of it
    MergedRepresentation fake;
    fake.sample_ids = g.merged.sample_ids;
    fake.scores = g.merged.scores;
    fake.component_labels = g.merged.component_labels;
    fake.view_names = {"v1"};
    fake.weight_tables = {Matrix::Zero(6, g.merged.n_components())};
    Matrix table = variance_explained(fake, {make_view("v1", y1)});
    CHECK(table(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}
