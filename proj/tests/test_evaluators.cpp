#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spsafs/data_io.hpp"
#include "spsafs/evaluators.hpp"

using namespace spsafs;

namespace {

Table table_from(std::vector<std::vector<double>> rows) {
    Table t(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

Dataset two_clusters(std::size_t per_class, double separation, double spread,
                     std::uint64_t seed) {
    Dataset d;
    d.n = 2 * per_class;
    d.p = 2;
    d.task = TaskKind::classification;
    d.label_table = {"0", "1"};
    d.feature_names = {"f0", "f1"};
    d.x.resize(d.n * d.p);
    Xoshiro256 rng(seed);
    for (std::size_t i = 0; i < d.n; ++i) {
        const int label = i < per_class ? 0 : 1;
        const double center = label == 0 ? -separation : separation;
        d.x[i * 2] = center + spread * rng.normal();
        d.x[i * 2 + 1] = center + spread * rng.normal();
        d.labels.push_back(label);
    }
    d.validate();
    return d;
}

}  // namespace

TEST_CASE("knn basics") {
    SUBCASE("a test point equal to a training point takes its label at k=1") {
        const Table train = table_from({{0.0}, {5.0}});
        const Table test = table_from({{0.0}, {5.0}});
        CHECK(fit_predict_knn(train, {0, 1}, test, 1) == std::vector<int>{0, 1});
    }
    SUBCASE("three-point hand vote: 2 votes beat 1") {
        const Table train = table_from({{0.0}, {1.0}, {2.0}});
        const Table test = table_from({{1.6}});
        CHECK(fit_predict_knn(train, {0, 0, 1}, test, 3) == std::vector<int>{0});
    }
    SUBCASE("global vote tie resolves to the smaller label code") {
        const Table train = table_from({{0.0}, {1.0}, {2.0}, {3.0}});
        const Table test = table_from({{-10.0}, {1.4}, {10.0}});
        const auto pred = fit_predict_knn(train, {1, 0, 0, 1}, test, 4);
        CHECK(pred == std::vector<int>{0, 0, 0});
    }
    SUBCASE("distance ties prefer the lower training index") {
        // two training points equidistant from the test point
        const Table train = table_from({{1.0}, {-1.0}, {8.0}});
        const Table test = table_from({{0.0}});
        CHECK(fit_predict_knn(train, {1, 0, 0}, test, 1) == std::vector<int>{1});
    }
}

TEST_CASE("gaussian nb basics") {
    SUBCASE("well separated means classify their centers") {
        const Table train = table_from({{-5.0}, {-4.8}, {5.0}, {5.2}});
        const Table test = table_from({{-5.0}, {5.1}});
        CHECK(fit_predict_gnb(train, {0, 0, 1, 1}, 2, test) == std::vector<int>{0, 1});
    }
    SUBCASE("a single training class predicts itself everywhere") {
        const Table train = table_from({{1.0}, {2.0}});
        const Table test = table_from({{-100.0}, {100.0}});
        CHECK(fit_predict_gnb(train, {1, 1}, 2, test) == std::vector<int>{1, 1});
    }
    SUBCASE("identical likelihoods fall back to the prior: 3:1 favours the majority") {
        const Table train = table_from({{1.0}, {1.0}, {1.0}, {1.0}});
        const Table test = table_from({{1.0}});
        CHECK(fit_predict_gnb(train, {0, 0, 0, 1}, 2, test) == std::vector<int>{0});
    }
}

TEST_CASE("cart basics") {
    SUBCASE("a single clean threshold yields a depth-1 pure tree") {
        const Table train = table_from({{0.0}, {1.0}, {2.0}, {3.0}});
        const std::vector<int> labels = {0, 0, 1, 1};
        const auto pred = fit_predict_cart(train, labels, 2, train, 1, 1);
        CHECK(pred == labels);
    }
    SUBCASE("uniform labels give a single leaf") {
        const Table train = table_from({{0.0}, {1.0}, {5.0}});
        const Table test = table_from({{-3.0}, {9.0}});
        CHECK(fit_predict_cart(train, {1, 1, 1}, 2, test, 4, 1) == std::vector<int>{1, 1});
    }
    SUBCASE("xor needs depth two") {
        const Table train = table_from({{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}});
        const std::vector<int> labels = {0, 1, 1, 0};

        const auto deep = fit_predict_cart(train, labels, 2, train, 2, 1);
        CHECK(deep == labels);

        // exhaustive split-enumeration oracle for the best depth-1 error:
        // every (feature, threshold) candidate with majority leaves
        std::size_t oracle_best = labels.size();
        for (std::size_t j = 0; j < 2; ++j) {
            for (double thr : {0.5}) {
                std::size_t left_ones = 0, left_n = 0, right_ones = 0, right_n = 0;
                for (std::size_t i = 0; i < 4; ++i) {
                    if (train.at(i, j) < thr) {
                        ++left_n;
                        left_ones += labels[i];
                    } else {
                        ++right_n;
                        right_ones += labels[i];
                    }
                }
                const std::size_t errors = std::min(left_ones, left_n - left_ones) +
                                           std::min(right_ones, right_n - right_ones);
                oracle_best = std::min(oracle_best, errors);
            }
        }
        const auto shallow = fit_predict_cart(train, labels, 2, train, 1, 1);
        std::size_t shallow_errors = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            if (shallow[i] != labels[i]) ++shallow_errors;
        }
        CHECK(shallow_errors >= 1);
        CHECK(shallow_errors == oracle_best);
    }
}

TEST_CASE("ols basics") {
    SUBCASE("an exactly linear response is reproduced") {
        const Table train = table_from({{0.0}, {1.0}, {2.0}, {3.0}});
        const std::vector<double> y = {1.0, 3.0, 5.0, 7.0};  // y = 2x + 1
        const Table test = table_from({{4.0}});
        const auto pred = fit_predict_ols(train, y, test);
        CHECK(pred[0] == doctest::Approx(9.0).epsilon(1e-9));

        const auto fitted = fit_predict_ols(train, y, train);
        CHECK(r_squared(y, fitted) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("predicting the mean gives r-squared zero") {
        const std::vector<double> actual = {1.0, 2.0, 3.0};
        CHECK(r_squared(actual, {2.0, 2.0, 2.0}) == 0.0);
    }
    SUBCASE("zero response variance defines r-squared as zero") {
        CHECK(r_squared({2.0, 2.0}, {1.0, 3.0}) == 0.0);
    }
    SUBCASE("a duplicated column predicts like the single copy") {
        const Table single = table_from({{0.0}, {1.0}, {2.0}, {3.0}});
        const Table dup = table_from({{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}});
        const std::vector<double> y = {1.0, 3.0, 5.0, 7.0};
        const Table test_single = table_from({{4.0}});
        const Table test_dup = table_from({{4.0, 4.0}});

        // closed-form single-feature oracle: slope cov/var = 2, intercept 1
        const double oracle = 2.0 * 4.0 + 1.0;
        const auto pred_single = fit_predict_ols(single, y, test_single);
        const auto pred_dup = fit_predict_ols(dup, y, test_dup);
        CHECK(pred_single[0] == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(std::abs(pred_dup[0] - pred_single[0]) < 1e-6);
    }
}

TEST_CASE("cv_loss on a separable two-cluster dataset is exactly zero") {
    const Dataset data = two_clusters(20, 10.0, 0.5, 77);
    ModelSpec model;
    model.kind = ModelKind::knn;
    model.k = 1;
    CvConfig cv;
    cv.folds = 5;
    CHECK(cv_loss(data, FeatureMask::all_ones(2), model, cv, 123) == 0.0);
    cv.folds = 4;
    CHECK(cv_loss(data, FeatureMask::all_ones(2), model, cv, 9) == 0.0);
}

TEST_CASE("cv_loss on an exactly linear regression is numerically zero") {
    SyntheticSpec spec;
    spec.n = 60;
    spec.p = 5;
    spec.informative_indices = {0, 2};
    spec.noise_sd = 0.0;
    spec.task_kind = TaskKind::regression;
    spec.seed = 4;
    const Dataset data = make_synthetic(spec);

    ModelSpec model;
    model.kind = ModelKind::ols;
    CvConfig cv;
    cv.folds = 5;
    const double loss =
        cv_loss(data, FeatureMask::from_indices(5, {0, 2}), model, cv, 11);
    CHECK(loss <= 1e-9);
}

TEST_CASE("a label permutation drives classification loss to chance") {
    // permutation-null oracle: random labels uncorrelated with the features
    // should sit near loss 0.5, averaged over independent shuffles
    const std::size_t n = 60;
    SyntheticSpec spec;
    spec.n = n;
    spec.p = 4;
    spec.informative_indices = {0};
    spec.noise_sd = 0.0;
    spec.seed = 21;
    Dataset data = make_synthetic(spec);

    ModelSpec model;
    model.kind = ModelKind::knn;
    model.k = 5;
    CvConfig cv;
    cv.folds = 5;

    double total = 0.0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
        Dataset shuffled = data;
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 0 : 1;
        Xoshiro256 rng(derive_seed(1000, "perm", trial));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(labels[i - 1], labels[rng.below(i)]);
        }
        shuffled.labels = labels;
        total += cv_loss(shuffled, FeatureMask::all_ones(4), model, cv,
                         derive_seed(2000, "noise", trial));
    }
    const double mean = total / trials;
    CHECK(mean > 0.4);
    CHECK(mean < 0.6);
}

TEST_CASE("fold partitions cover every row exactly once and stay stratified") {
    SyntheticSpec spec;
    spec.n = 37;
    spec.p = 3;
    spec.informative_indices = {0};
    spec.noise_sd = 0.5;
    spec.seed = 8;
    const Dataset data = make_synthetic(spec);

    for (std::size_t folds : {2u, 5u, 7u}) {
        for (bool stratified : {true, false}) {
            CvConfig cv;
            cv.folds = folds;
            cv.stratified = stratified;
            const auto fold_of = assign_folds(data, cv, 555);
            REQUIRE(fold_of.size() == data.n);

            std::vector<std::size_t> sizes(folds, 0);
            for (std::size_t f : fold_of) {
                REQUIRE(f < folds);
                ++sizes[f];
            }
            std::size_t assigned = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
            CHECK(assigned == data.n);
            for (std::size_t s : sizes) CHECK(s > 0);

            if (stratified) {
                for (int cls = 0; cls < 2; ++cls) {
                    std::vector<std::size_t> per_fold(folds, 0);
                    for (std::size_t i = 0; i < data.n; ++i) {
                        if (data.labels[i] == cls) ++per_fold[fold_of[i]];
                    }
                    const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
                    CHECK(*hi - *lo <= 1);
                }
            }
        }
    }
}

TEST_CASE("fold assignment is a pure function of the noise seed") {
    const Dataset data = two_clusters(15, 5.0, 1.0, 3);
    CvConfig cv;
    cv.folds = 5;
    CHECK(assign_folds(data, cv, 42) == assign_folds(data, cv, 42));
    CHECK(assign_folds(data, cv, 42) != assign_folds(data, cv, 43));
}

TEST_CASE("training r-squared grows monotonically along nested subsets") {
    SyntheticSpec spec;
    spec.n = 40;
    spec.p = 8;
    spec.informative_indices = {0, 1, 2};
    spec.noise_sd = 0.8;
    spec.task_kind = TaskKind::regression;
    spec.seed = 13;
    const Dataset data = make_synthetic(spec);

    ModelSpec model;
    model.kind = ModelKind::ols;
    CvConfig diag;
    diag.folds = 1;  // training-loss diagnostic mode

    Xoshiro256 rng(313);
    for (int pair = 0; pair < 100; ++pair) {
        std::vector<std::uint8_t> small(8, 0), big(8, 0);
        for (std::size_t j = 0; j < 8; ++j) {
            const auto draw = rng.below(3);
            if (draw == 2) {
                small[j] = big[j] = 1;
            } else if (draw == 1) {
                big[j] = 1;
            }
        }
        if (std::find(small.begin(), small.end(), 1) == small.end()) small[rng.below(8)] = 1;
        for (std::size_t j = 0; j < 8; ++j) big[j] |= small[j];

        const double loss_small = cv_loss(data, FeatureMask(std::move(small)), model, diag, 1);
        const double loss_big = cv_loss(data, FeatureMask(std::move(big)), model, diag, 1);
        // 1 - R^2 can only shrink when features are added
        CHECK(loss_big <= loss_small + 1e-9);
    }
}

TEST_CASE("cv_loss is invariant to a consistent feature permutation") {
    SyntheticSpec spec;
    spec.n = 50;
    spec.p = 6;
    spec.informative_indices = {0, 4};
    spec.noise_sd = 0.6;
    spec.seed = 17;
    const Dataset data = make_synthetic(spec);

    const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};  // new position of column j
    Dataset permuted = data;
    for (std::size_t i = 0; i < data.n; ++i) {
        for (std::size_t j = 0; j < data.p; ++j) {
            permuted.x[i * data.p + perm[j]] = data.at(i, j);
        }
    }
    const FeatureMask mask = FeatureMask::from_indices(6, {0, 3, 4});
    std::vector<std::size_t> mapped;
    for (std::size_t j : mask.indices()) mapped.push_back(perm[j]);
    const FeatureMask permuted_mask = FeatureMask::from_indices(6, mapped);

    // cart is excluded: its equal-gain tie rule resolves by feature index,
    // and indices are exactly what a permutation changes
    for (ModelKind kind : {ModelKind::knn, ModelKind::gaussian_nb}) {
        ModelSpec model;
        model.kind = kind;
        model.k = 3;
        CvConfig cv;
        cv.folds = 5;
        const double a = cv_loss(data, mask, model, cv, 7);
        const double b = cv_loss(permuted, permuted_mask, model, cv, 7);
        CHECK(std::abs(a - b) <= 1e-9);
    }

    SyntheticSpec rspec = spec;
    rspec.task_kind = TaskKind::regression;
    const Dataset rdata = make_synthetic(rspec);
    Dataset rpermuted = rdata;
    for (std::size_t i = 0; i < rdata.n; ++i) {
        for (std::size_t j = 0; j < rdata.p; ++j) {
            rpermuted.x[i * rdata.p + perm[j]] = rdata.at(i, j);
        }
    }
    ModelSpec ols;
    ols.kind = ModelKind::ols;
    CvConfig cv;
    cv.folds = 5;
    CHECK(std::abs(cv_loss(rdata, mask, ols, cv, 7) -
                   cv_loss(rpermuted, permuted_mask, ols, cv, 7)) <= 1e-9);
}

TEST_CASE("classification losses stay in the unit interval") {
    const Dataset data = two_clusters(12, 1.0, 2.0, 5);  // heavily overlapping
    CvConfig cv;
    cv.folds = 4;
    Xoshiro256 rng(6);
    for (ModelKind kind : {ModelKind::knn, ModelKind::gaussian_nb, ModelKind::cart}) {
        ModelSpec model;
        model.kind = kind;
        model.k = 3;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<std::uint8_t> bits(2);
            bits[0] = rng.below(2) ? 1 : 0;
            bits[1] = bits[0] ? (rng.below(2) ? 1 : 0) : 1;
            const double loss = cv_loss(data, FeatureMask(std::move(bits)), model, cv, trial);
            CHECK(loss >= 0.0);
            CHECK(loss <= 1.0);
        }
    }
}

TEST_CASE("cv_loss rejects contract violations") {
    const Dataset data = two_clusters(10, 4.0, 0.5, 2);
    ModelSpec knn;
    knn.kind = ModelKind::knn;
    CvConfig cv;
    cv.folds = 5;

    CHECK_THROWS_AS(cv_loss(data, FeatureMask(std::vector<std::uint8_t>(2, 0)), knn, cv, 1),
                    std::invalid_argument);  // empty mask

    CvConfig too_many;
    too_many.folds = 100;
    CHECK_THROWS_AS(cv_loss(data, FeatureMask::all_ones(2), knn, too_many, 1),
                    std::invalid_argument);  // folds > n

    ModelSpec ols;
    ols.kind = ModelKind::ols;
    CHECK_THROWS_AS(cv_loss(data, FeatureMask::all_ones(2), ols, cv, 1),
                    std::invalid_argument);  // regression model on labels
}
