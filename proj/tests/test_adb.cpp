#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <iostream>

#include "pftadb/adb.hpp"

using namespace pftadb;

namespace {

struct Blobs {
    Tensor reps;
    std::vector<int> labels;
};

// Isotropic Gaussian blobs around the given centres.
Blobs make_blobs(const std::vector<std::vector<double>>& centres, std::size_t per_class, double sd, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t dim = centres.front().size();
    Blobs b{Tensor({centres.size() * per_class, dim}), {}};
    std::size_t row = 0;
    for (std::size_t k = 0; k < centres.size(); ++k) {
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            for (std::size_t j = 0; j < dim; ++j) b.reps(row, j) = centres[k][j] + rng.normal(0.0, sd);
            b.labels.push_back(static_cast<int>(k));
        }
    }
    return b;
}

BoundarySet random_boundaries(Rng& rng, std::size_t k) {
    BoundarySet s;
    for (std::size_t i = 0; i < k; ++i) {
        s.centroids.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
        s.raw_radii.push_back(rng.uniform(-1.0, 1.5));
    }
    return s;
}

// argmin over centroids (first wins ties), then threshold.
int rule_oracle(const std::vector<double>& x, const BoundarySet& s) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < s.centroids.size(); ++k) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) d2 += (x[j] - s.centroids[k][j]) * (x[j] - s.centroids[k][j]);
        if (std::sqrt(d2) < best_d) {
            best_d = std::sqrt(d2);
            best = k;
        }
    }
    const double radius = std::log1p(std::exp(s.raw_radii[best]));
    return best_d <= radius ? static_cast<int>(best) : static_cast<int>(s.centroids.size());
}

}  // namespace

TEST(Centroids, Examples) {
    const auto c = compute_centroids(Tensor::matrix({{0, 0}, {2, 2}, {5, -1}}), std::vector<int>{0, 0, 1}, 2);
    EXPECT_EQ(c[0], (std::vector<double>{1, 1}));
    EXPECT_EQ(c[1], (std::vector<double>{5, -1}));
}

TEST(Centroids, SubsetMeanOracle) {
    Rng rng(2);
    Tensor reps({40, 3});
    for (double& v : reps.data()) v = rng.uniform(-4, 4);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) labels[i] = static_cast<int>(i % 4);
    const auto c = compute_centroids(reps, labels, 4);
    for (int k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < 40; ++i)
                if (labels[i] == k) {
                    s += reps(i, j);
                    ++n;
                }
            EXPECT_NEAR(c[k][j], s / n, 1e-12);
        }
    }
}

TEST(Centroids, EmptyClassNamesIt) {
    try {
        compute_centroids(Tensor::matrix({{1, 1}}), std::vector<int>{0}, 3);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
    }
    EXPECT_THROW(compute_centroids(Tensor::matrix({{1, 1}}), std::vector<int>{4}, 3), LabelError);
}

TEST(BoundaryLoss, Examples) {
    const std::vector<std::vector<double>> c{{0.0, 0.0}};
    const std::vector<int> y{0};
    // d = 2, delta = softplus(raw) = 1
    const double raw_one = std::log(std::expm1(1.0));
    EXPECT_NEAR(boundary_loss(Tensor::matrix({{2, 0}}), y, c, std::vector<double>{raw_one}), 1.0, 1e-12);
    // on the boundary: d = ln 2 = softplus(0)
    EXPECT_NEAR(boundary_loss(Tensor::matrix({{0, std::log(2.0)}}), y, c, std::vector<double>{0.0}), 0.0, 1e-15);
}

TEST(BoundaryLoss, ScalarOracle) {
    Rng rng(3);
    const Blobs b = make_blobs({{0, 0, 0}, {4, 4, 4}, {-4, 0, 4}}, 15, 1.0, 4);
    const auto c = compute_centroids(b.reps, b.labels, 3);
    const std::vector<double> raw{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    double oracle = 0.0;
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        const auto k = static_cast<std::size_t>(b.labels[i]);
        double d2 = 0.0;
        for (std::size_t j = 0; j < 3; ++j) d2 += (b.reps(i, j) - c[k][j]) * (b.reps(i, j) - c[k][j]);
        const double d = std::sqrt(d2), delta = std::log1p(std::exp(raw[k]));
        oracle += d > delta ? d - delta : delta - d;
    }
    EXPECT_NEAR(boundary_loss(b.reps, b.labels, c, raw), oracle / static_cast<double>(b.labels.size()), 1e-12);
}

TEST(Learn, RadiusSettlesAtMedianDistance) {
    const Blobs b = make_blobs({{0, 0, 0, 0}, {10, 0, 0, 0}}, 51, 1.0, 5);
    AdbConfig cfg;
    cfg.epochs = 400;
    const BoundarySet s = learn_boundaries(b.reps, b.labels, 2, cfg);
    const auto d = centroid_distances(b.reps, b.labels, s.centroids);
    for (int k = 0; k < 2; ++k) {
        std::vector<double> dk;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (b.labels[i] == k) dk.push_back(d[i]);
        std::sort(dk.begin(), dk.end());
        const double median = dk[dk.size() / 2];
        const double inside =
            static_cast<double>(std::count_if(dk.begin(), dk.end(), [&](double v) { return v <= s.radius(k); })) /
            static_cast<double>(dk.size());
        std::cout << "class " << k << ": radius " << s.radius(k) << ", median distance " << median
                  << ", fraction inside " << inside << "\n";
        EXPECT_NEAR(s.radius(k), median, 0.15);
        EXPECT_GE(inside, 0.35);
        EXPECT_LE(inside, 0.65);
    }
}

TEST(Learn, RadiiStayPositive) {
    const Blobs b = make_blobs({{0, 0}, {3, 3}}, 20, 0.01, 6);  // tight blobs pull delta toward 0
    BoundaryTrace trace;
    AdbConfig cfg;
    cfg.epochs = 300;
    cfg.learning_rate = 0.2;
    learn_boundaries(b.reps, b.labels, 2, cfg, &trace);
    ASSERT_EQ(trace.radii.size(), 300u);
    for (const auto& step : trace.radii)
        for (double r : step) EXPECT_GT(r, 0.0);
}

TEST(Learn, CollapsedClassShrinksRadius) {
    Tensor reps({6, 2}, 1.0);
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    for (std::size_t i = 3; i < 6; ++i) reps(i, 0) = 5.0;
    BoundaryTrace trace;
    AdbConfig cfg;
    cfg.epochs = 50;
    learn_boundaries(reps, y, 2, cfg, &trace);
    for (std::size_t t = 1; t < trace.radii.size(); ++t) EXPECT_LT(trace.radii[t][0], trace.radii[t - 1][0]);
}

TEST(Learn, LossNonIncreasingWithSmallRate) {
    const Blobs b = make_blobs({{0, 0, 0}, {20, 0, 0}}, 20, 2.0, 7);
    BoundaryTrace trace;
    AdbConfig cfg;
    cfg.epochs = 60;
    cfg.learning_rate = 1e-3;
    learn_boundaries(b.reps, b.labels, 2, cfg, &trace);
    for (std::size_t t = 1; t < trace.losses.size(); ++t) EXPECT_LE(trace.losses[t], trace.losses[t - 1] + 1e-15);
}

TEST(Learn, CentroidsAreClassMeans) {
    const Blobs b = make_blobs({{1, 2}, {-3, 0}}, 10, 0.5, 8);
    const BoundarySet s = learn_boundaries(b.reps, b.labels, 2);
    EXPECT_EQ(s.centroids, compute_centroids(b.reps, b.labels, 2));
    EXPECT_EQ(s.open_label(), 2);
}

TEST(Predict, Examples) {
    BoundarySet s;
    s.centroids = {{0, 0}, {2, 0}};
    const double raw_one = std::log(std::expm1(1.0));
    s.raw_radii = {raw_one, raw_one};
    EXPECT_EQ(predict_open(std::vector<double>{0, 0}, s), 0);
    EXPECT_EQ(predict_open(std::vector<double>{5, 5}, s), 2);
    EXPECT_EQ(predict_open(std::vector<double>{1, 0}, s), 0);  // equidistant: lowest id
    EXPECT_EQ(predict_open(std::vector<double>{2.5, 0.5}, s), 1);
}

TEST(Predict, CentreWithHalfRadius) {
    BoundarySet s;
    s.centroids = {{3, 3}};
    s.raw_radii = {std::log(std::expm1(0.5))};
    EXPECT_NEAR(s.radius(0), 0.5, 1e-12);
    EXPECT_EQ(predict_open(std::vector<double>{3, 3}, s), 0);
}

TEST(Predict, GridMatchesRuleOracle) {
    Rng rng(9);
    for (int set = 0; set < 5; ++set) {
        const BoundarySet s = random_boundaries(rng, 2 + rng.index(4));
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j) {
                const std::vector<double> x{-8.0 + 16.0 * i / 49.0, -8.0 + 16.0 * j / 49.0};
                ASSERT_EQ(predict_open(x, s), rule_oracle(x, s));
            }
    }
}

TEST(Predict, ScaleConsistent) {
    Rng rng(10);
    const BoundarySet s = random_boundaries(rng, 4);
    for (double lambda : {0.25, 3.0}) {
        BoundarySet t = s;
        for (auto& c : t.centroids)
            for (double& v : c) v *= lambda;
        for (std::size_t k = 0; k < t.raw_radii.size(); ++k) {
            const double r = s.radius(k) * lambda;
            t.raw_radii[k] = r > 30 ? r : std::log(std::expm1(r));
        }
        for (int i = 0; i < 400; ++i) {
            const std::vector<double> x{rng.uniform(-8, 8), rng.uniform(-8, 8)};
            const std::vector<double> y{x[0] * lambda, x[1] * lambda};
            // skip points within round-off of a boundary
            double slack = INFINITY;
            for (std::size_t k = 0; k < s.centroids.size(); ++k)
                slack = std::min(slack, std::abs(euclidean(x, s.centroids[k]) - s.radius(k)));
            if (slack < 1e-9) continue;
            EXPECT_EQ(predict_open(x, s), predict_open(y, t));
        }
    }
}

TEST(Predict, InsideOwnBoundaryIsKnown) {
    const Blobs b = make_blobs({{0, 0}, {6, 0}}, 30, 1.0, 11);
    const BoundarySet s = learn_boundaries(b.reps, b.labels, 2);
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        const auto row = b.reps.row(i);
        const auto k = static_cast<std::size_t>(b.labels[i]);
        const bool nearest_own = euclidean(row, s.centroids[k]) <= euclidean(row, s.centroids[1 - k]);
        if (nearest_own && euclidean(row, s.centroids[k]) <= s.radius(k)) {
            EXPECT_EQ(predict_open(row, s), b.labels[i]);
        }
    }
}

TEST(Predict, ShrinkingRadiiRaiseOpenRateMonotonically) {
    const Blobs b = make_blobs({{0, 0}, {4, 0}, {0, 4}}, 20, 1.5, 12);
    BoundarySet s = learn_boundaries(b.reps, b.labels, 3);
    double last = -1.0;
    for (double shift = 0.0; shift <= 40.0; shift += 2.0) {
        BoundarySet t = s;
        for (double& r : t.raw_radii) r -= shift;
        std::size_t open = 0;
        for (std::size_t i = 0; i < b.labels.size(); ++i) open += predict_open(b.reps.row(i), t) == 3;
        const double rate = static_cast<double>(open) / static_cast<double>(b.labels.size());
        EXPECT_GE(rate, last);
        last = rate;
    }
    EXPECT_EQ(last, 1.0);
}

TEST(Files, RepresentationsAndBoundariesRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path();
    const std::vector<IntentRepresentation> reps{{"u1", 0, {0.1, 1.0 / 3.0}}, {"u2", 2, {-5e-300, 7.25}}};
    write_representations((dir / "pftadb_reps.tsv").string(), reps);
    const auto back = read_representations((dir / "pftadb_reps.tsv").string());
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].id, reps[i].id);
        EXPECT_EQ(back[i].label, reps[i].label);
        EXPECT_EQ(back[i].features, reps[i].features);
    }
    BoundarySet s;
    s.centroids = {{1.0 / 7.0, 2.0}, {-3.0, 0.1}};
    s.raw_radii = {0.3, -1.0 / 3.0};
    write_boundaries((dir / "pftadb_bounds.tsv").string(), s);
    const BoundarySet t = read_boundaries((dir / "pftadb_bounds.tsv").string());
    EXPECT_EQ(t.centroids, s.centroids);
    EXPECT_EQ(t.raw_radii, s.raw_radii);
    std::filesystem::remove(dir / "pftadb_reps.tsv");
    std::filesystem::remove(dir / "pftadb_bounds.tsv");
}

TEST(Files, MalformedBoundariesRejected) {
    const auto path = (std::filesystem::temp_directory_path() / "pftadb_bad.tsv").string();
    {
        std::ofstream out(path);
        out << "0\t1 2\t0.5\n";
    }
    EXPECT_THROW(read_boundaries(path), ParseError);
    std::filesystem::remove(path);
    EXPECT_THROW(read_boundaries(path), IoError);
}
