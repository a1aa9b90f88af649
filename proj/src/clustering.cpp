#include <algorithm>
#include <deque>
#include <limits>
#include <random>

#include "mvfuse/models.hpp"

namespace mvfuse {

ClusteringResult kmeans(const Matrix& x, int k, unsigned seed, int max_iter) {
    const Eigen::Index n = x.rows();
    if (k <= 0) throw ConfigError("kmeans: k must be positive");
    if (static_cast<Eigen::Index>(k) > n)
        throw InsufficientSamplesError("kmeans: k exceeds sample count");

    std::mt19937 rng(seed);
    Matrix centroids(k, x.cols());

    // k-means++ seeding
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = x.row(first(rng));
    Vector d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        centroids.row(c) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<size_t>(n), -1);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = (x.row(i) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && it > 0) break;

        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<Eigen::Index> counts(static_cast<size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<size_t>(i)]) += x.row(i);
            ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
            } else {
                // move an empty cluster to the point farthest from its centroid
                Eigen::Index far = 0;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    double d = (x.row(i) - centroids.row(assign[static_cast<size_t>(i)])).squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centroids.row(c) = x.row(far);
                assign[static_cast<size_t>(far)] = c;
            }
        }
    }

    ClusteringResult out;
    out.assignments = std::move(assign);
    out.centroids = centroids;
    out.algorithm = "kmeans";
    out.param_a = static_cast<double>(k);
    return out;
}

ClusteringResult dbscan(const Matrix& x, double eps, int min_pts) {
    const Eigen::Index n = x.rows();
    if (eps <= 0.0) throw ConfigError("dbscan: eps must be positive");
    if (min_pts < 1) throw ConfigError("dbscan: min_pts must be at least 1");

    const double eps2 = eps * eps;
    auto neighbors = [&](Eigen::Index i) {
        std::vector<Eigen::Index> out;
        for (Eigen::Index j = 0; j < n; ++j)
            if ((x.row(i) - x.row(j)).squaredNorm() <= eps2) out.push_back(j);
        return out;
    };

    constexpr int kUnvisited = -2, kNoise = -1;
    std::vector<int> label(static_cast<size_t>(n), kUnvisited);
    int cluster = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (label[static_cast<size_t>(i)] != kUnvisited) continue;
        auto nb = neighbors(i);
        if (static_cast<int>(nb.size()) < min_pts) {
            label[static_cast<size_t>(i)] = kNoise;
            continue;
        }
        label[static_cast<size_t>(i)] = cluster;
        std::deque<Eigen::Index> queue(nb.begin(), nb.end());
        while (!queue.empty()) {
            Eigen::Index q = queue.front();
            queue.pop_front();
            if (label[static_cast<size_t>(q)] == kNoise) label[static_cast<size_t>(q)] = cluster;
            if (label[static_cast<size_t>(q)] != kUnvisited) continue;
            label[static_cast<size_t>(q)] = cluster;
            auto qn = neighbors(q);
            if (static_cast<int>(qn.size()) >= min_pts)
                queue.insert(queue.end(), qn.begin(), qn.end());
        }
        ++cluster;
    }

    ClusteringResult out;
    out.assignments = std::move(label);
    out.algorithm = "dbscan";
    out.param_a = eps;
    out.param_b = static_cast<double>(min_pts);
    return out;
}

}  // namespace mvfuse
