#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "mvfuse/evaluation.hpp"

namespace mvfuse {

namespace {

// Indices of each stratum, shuffled deterministically.
std::map<int, std::vector<size_t>> shuffled_strata(const std::vector<int>& labels, unsigned seed) {
    std::map<int, std::vector<size_t>> strata;
    for (size_t i = 0; i < labels.size(); ++i) strata[labels[i]].push_back(i);
    std::mt19937 rng(seed);
    for (auto& [label, idx] : strata) std::shuffle(idx.begin(), idx.end(), rng);
    return strata;
}

}  // namespace

SplitResult stratified_split(const std::vector<std::string>& ids, const std::vector<int>& labels,
                             double test_size, unsigned seed) {
    if (ids.size() != labels.size()) throw SchemaError("stratified_split: ids/labels length mismatch");
    if (!(test_size > 0.0 && test_size < 1.0))
        throw ConfigError("stratified_split: test_size must be in (0,1)");
    auto strata = shuffled_strata(labels, seed);
    if (strata.size() < 2) throw DegenerateLabelsError("stratified_split: both classes required");

    SplitResult out;
    for (auto& [label, idx] : strata) {
        size_t n_test = static_cast<size_t>(
            std::floor(test_size * static_cast<double>(idx.size()) + 0.5));
        if (n_test < 1 || n_test >= idx.size())
            throw StratificationError("stratified_split: stratum " + std::to_string(label) +
                                      " too small for test_size " + std::to_string(test_size));
        for (size_t k = 0; k < idx.size(); ++k)
            (k < n_test ? out.test_ids : out.train_ids).push_back(ids[idx[k]]);
    }
    std::sort(out.train_ids.begin(), out.train_ids.end());
    std::sort(out.test_ids.begin(), out.test_ids.end());
    return out;
}

std::vector<int> stratified_kfold(const std::vector<std::string>& ids,
                                  const std::vector<int>& labels, int n_folds, unsigned seed) {
    if (ids.size() != labels.size()) throw SchemaError("stratified_kfold: ids/labels length mismatch");
    if (n_folds < 2) throw ConfigError("stratified_kfold: n_folds must be at least 2");
    auto strata = shuffled_strata(labels, seed);
    size_t minority = ids.size();
    for (auto& [label, idx] : strata) minority = std::min(minority, idx.size());
    if (minority < static_cast<size_t>(n_folds))
        throw StratificationError("stratified_kfold: minority class smaller than n_folds");

    std::vector<int> fold(ids.size(), 0);
    for (auto& [label, idx] : strata)
        for (size_t k = 0; k < idx.size(); ++k)
            fold[idx[k]] = static_cast<int>(k % static_cast<size_t>(n_folds));
    return fold;
}

double auc(const std::vector<int>& labels, const Vector& scores) {
    if (static_cast<Eigen::Index>(labels.size()) != scores.size())
        throw SchemaError("auc: labels/scores length mismatch");
    size_t n_pos = 0;
    for (int v : labels) n_pos += (v != 0);
    size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DegenerateLabelsError("auc: both classes required");

    // rank-sum form: U = R_pos - n_pos(n_pos+1)/2 with mid-ranks for ties
    std::vector<size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores(static_cast<Eigen::Index>(a)) <
                                               scores(static_cast<Eigen::Index>(b)); });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores(static_cast<Eigen::Index>(order[j])) ==
                                       scores(static_cast<Eigen::Index>(order[i])))
            ++j;
        double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += mid_rank;
        i = j;
    }
    double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double concordance_index(const Vector& time, const std::vector<int>& event,
                         const Vector& risk_scores) {
    const Eigen::Index n = time.size();
    if (static_cast<Eigen::Index>(event.size()) != n || risk_scores.size() != n)
        throw SchemaError("concordance_index: input length mismatch");
    double concordant = 0.0;
    long comparable = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!event[static_cast<size_t>(i)]) continue;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j || time(j) <= time(i)) continue;
            ++comparable;
            if (risk_scores(i) > risk_scores(j))
                concordant += 1.0;
            else if (risk_scores(i) == risk_scores(j))
                concordant += 0.5;
        }
    }
    if (comparable == 0) throw NoComparablePairsError("concordance_index: no comparable pairs");
    return concordant / static_cast<double>(comparable);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    TestSided sided, double level) {
    if (a.size() != b.size()) throw SchemaError("wilcoxon_signed_rank: length mismatch");
    std::vector<double> diff;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    if (diff.empty()) throw AllTiedError("wilcoxon_signed_rank: all differences are zero");
    const size_t n = diff.size();

    // mid-ranks of |d|; doubled ranks are exact integers
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return std::abs(diff[x]) < std::abs(diff[y]); });
    std::vector<long> rank2(n, 0);  // 2 x mid-rank
    std::vector<long> tie_sizes;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
        long r2 = static_cast<long>(i + 1 + j);
        for (size_t k = i; k < j; ++k) rank2[order[k]] = r2;
        tie_sizes.push_back(static_cast<long>(j - i));
        i = j;
    }

    long w2_plus = 0;
    for (size_t k = 0; k < n; ++k)
        if (diff[k] > 0.0) w2_plus += rank2[k];
    long total2 = static_cast<long>(n * (n + 1));  // sum of doubled ranks

    double p;
    if (n <= 25) {
        // exact distribution of W+ over all 2^n sign assignments
        std::vector<double> count(static_cast<size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        for (size_t k = 0; k < n; ++k)
            for (long s = total2; s >= rank2[k]; --s)
                count[static_cast<size_t>(s)] += count[static_cast<size_t>(s - rank2[k])];
        const double denom = std::pow(2.0, static_cast<double>(n));
        auto tail_ge = [&](long w) {
            double t = 0.0;
            for (long s = std::max(w, 0L); s <= total2; ++s) t += count[static_cast<size_t>(s)];
            return t / denom;
        };
        auto tail_le = [&](long w) {
            double t = 0.0;
            for (long s = 0; s <= std::min(w, total2); ++s) t += count[static_cast<size_t>(s)];
            return t / denom;
        };
        if (sided == TestSided::Greater)
            p = tail_ge(w2_plus);
        else
            p = std::min(1.0, 2.0 * std::min(tail_ge(w2_plus), tail_le(w2_plus)));
    } else {
        double nn = static_cast<double>(n);
        double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        for (long t : tie_sizes) {
            double td = static_cast<double>(t);
            var -= (td * td * td - td) / 48.0;
        }
        double w = 0.5 * static_cast<double>(w2_plus);
        double z = (w - mean - 0.5) / std::sqrt(var);
        double upper = 0.5 * std::erfc(z / std::sqrt(2.0));
        if (sided == TestSided::Greater) {
            p = upper;
        } else {
            double z2 = (std::abs(w - mean) - 0.5) / std::sqrt(var);
            p = std::min(1.0, std::erfc(z2 / std::sqrt(2.0)));
        }
    }

    WilcoxonResult out;
    out.p_value = p;
    out.significant = p < level;
    out.statistic = 0.5 * static_cast<double>(w2_plus);
    out.n_effective = static_cast<int>(n);
    return out;
}

std::vector<ModelComparison> compare_models(const std::vector<ModelEvaluation>& models,
                                            TestSided sided, double level) {
    for (size_t i = 1; i < models.size(); ++i)
        if (models[i].fold_metrics.size() != models[0].fold_metrics.size())
            throw SchemaError("compare_models: fold count mismatch between '" + models[0].model +
                              "' and '" + models[i].model + "'");
    std::vector<ModelComparison> out;
    for (size_t i = 0; i < models.size(); ++i) {
        for (size_t j = i + 1; j < models.size(); ++j) {
            ModelComparison c;
            c.model_a = models[i].model;
            c.model_b = models[j].model;
            try {
                auto w = wilcoxon_signed_rank(models[i].fold_metrics, models[j].fold_metrics,
                                              sided, level);
                c.p_value = w.p_value;
                c.significant = w.significant;
            } catch (const AllTiedError&) {
                c.p_value = 1.0;
                c.significant = false;
                c.all_tied = true;
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

}  // namespace mvfuse
