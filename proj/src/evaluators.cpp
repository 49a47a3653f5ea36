#include "spsafs/evaluators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spsafs {

namespace {

constexpr double kVarianceFloor = 1e-9;
constexpr double kRidgeJitter = 1e-8;
constexpr double kScaleFloor = 1e-12;

void fisher_yates(std::vector<std::size_t>& items, Xoshiro256& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

int majority_label(const std::vector<std::size_t>& counts) {
    int best = 0;
    std::size_t best_count = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > best_count) {
            best_count = counts[c];
            best = static_cast<int>(c);
        }
    }
    return best;
}

}  // namespace

void CvConfig::validate(std::size_t n) const {
    if (folds < 1) throw std::invalid_argument("folds must be >= 1");
    if (folds > n) throw std::invalid_argument("fold count exceeds the number of rows");
}

void ModelSpec::validate() const {
    if (kind == ModelKind::knn && k < 1) throw std::invalid_argument("knn k must be >= 1");
    if (kind == ModelKind::cart && max_depth < 1)
        throw std::invalid_argument("cart max_depth must be >= 1");
    if (kind == ModelKind::cart && min_leaf < 1)
        throw std::invalid_argument("cart min_leaf must be >= 1");
}

std::string ModelSpec::name() const {
    switch (kind) {
        case ModelKind::knn: return "knn";
        case ModelKind::gaussian_nb: return "gaussian_nb";
        case ModelKind::cart: return "cart";
        case ModelKind::ols: return "ols";
    }
    return "unknown";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "knn") return ModelKind::knn;
    if (name == "gaussian_nb" || name == "nb") return ModelKind::gaussian_nb;
    if (name == "cart") return ModelKind::cart;
    if (name == "ols") return ModelKind::ols;
    throw std::invalid_argument("unknown model kind: " + name);
}

std::vector<int> fit_predict_knn(const Table& train_x, const std::vector<int>& train_y,
                                 const Table& test_x, std::size_t k) {
    if (train_x.rows == 0) throw std::invalid_argument("knn requires a non-empty training set");
    const std::size_t k_eff = std::min(k, train_x.rows);
    const int n_classes = 1 + *std::max_element(train_y.begin(), train_y.end());

    std::vector<int> predictions(test_x.rows);
    std::vector<std::pair<double, std::size_t>> dist(train_x.rows);
    std::vector<std::size_t> votes(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < test_x.rows; ++i) {
        for (std::size_t r = 0; r < train_x.rows; ++r) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < train_x.cols; ++j) {
                const double diff = test_x.at(i, j) - train_x.at(r, j);
                d2 += diff * diff;
            }
            dist[r] = {d2, r};
        }
        // total order on (distance, index): the k smallest are exactly the
        // k nearest with ties resolved toward lower training indices
        std::nth_element(dist.begin(), dist.begin() + (k_eff - 1), dist.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t r = 0; r < k_eff; ++r) {
            ++votes[static_cast<std::size_t>(train_y[dist[r].second])];
        }
        predictions[i] = majority_label(votes);
    }
    return predictions;
}

std::vector<int> fit_predict_gnb(const Table& train_x, const std::vector<int>& train_y,
                                 std::size_t n_classes, const Table& test_x) {
    const std::size_t d = train_x.cols;
    std::vector<std::size_t> counts(n_classes, 0);
    std::vector<double> mean(n_classes * d, 0.0);
    std::vector<double> var(n_classes * d, 0.0);

    for (std::size_t r = 0; r < train_x.rows; ++r) {
        const auto c = static_cast<std::size_t>(train_y[r]);
        ++counts[c];
        for (std::size_t j = 0; j < d; ++j) mean[c * d + j] += train_x.at(r, j);
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) mean[c * d + j] /= static_cast<double>(counts[c]);
    }
    for (std::size_t r = 0; r < train_x.rows; ++r) {
        const auto c = static_cast<std::size_t>(train_y[r]);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = train_x.at(r, j) - mean[c * d + j];
            var[c * d + j] += diff * diff;
        }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            var[c * d + j] = std::max(var[c * d + j] / static_cast<double>(counts[c]),
                                      kVarianceFloor);
        }
    }

    const double log_n = std::log(static_cast<double>(train_x.rows));
    std::vector<int> predictions(test_x.rows);
    for (std::size_t i = 0; i < test_x.rows; ++i) {
        double best_score = -std::numeric_limits<double>::infinity();
        int best_class = 0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (counts[c] == 0) continue;
            double score = std::log(static_cast<double>(counts[c])) - log_n;
            for (std::size_t j = 0; j < d; ++j) {
                const double v = var[c * d + j];
                const double diff = test_x.at(i, j) - mean[c * d + j];
                score += -0.5 * std::log(6.283185307179586 * v) - diff * diff / (2.0 * v);
            }
            if (score > best_score) {
                best_score = score;
                best_class = static_cast<int>(c);
            }
        }
        predictions[i] = best_class;
    }
    return predictions;
}

namespace {

struct CartNode {
    bool leaf = true;
    int label = 0;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
};

double gini(const std::vector<std::size_t>& counts, std::size_t total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    for (std::size_t c : counts) {
        const double frac = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += frac * frac;
    }
    return 1.0 - sum_sq;
}

struct CartBuilder {
    const Table& x;
    const std::vector<int>& y;
    std::size_t n_classes;
    std::size_t max_depth;
    std::size_t min_leaf;
    std::vector<CartNode> nodes;

    std::size_t build(std::vector<std::size_t> rows, std::size_t depth) {
        std::vector<std::size_t> counts(n_classes, 0);
        for (std::size_t r : rows) ++counts[static_cast<std::size_t>(y[r])];
        const double node_gini = gini(counts, rows.size());

        CartNode node;
        node.label = majority_label(counts);
        const std::size_t index = nodes.size();
        nodes.push_back(node);

        if (depth >= max_depth || node_gini == 0.0 || rows.size() < 2 * min_leaf) {
            return index;
        }

        // scan features ascending, thresholds ascending: the first strictly
        // best candidate wins, which encodes the tie rule
        bool found = false;
        double best_gain = -1.0;
        std::size_t best_feature = 0;
        double best_threshold = 0.0;

        std::vector<std::pair<double, int>> ordered(rows.size());
        std::vector<std::size_t> left_counts(n_classes);
        for (std::size_t j = 0; j < x.cols; ++j) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                ordered[i] = {x.at(rows[i], j), y[rows[i]]};
            }
            std::sort(ordered.begin(), ordered.end());
            std::fill(left_counts.begin(), left_counts.end(), 0);
            for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
                ++left_counts[static_cast<std::size_t>(ordered[i].second)];
                if (ordered[i].first == ordered[i + 1].first) continue;
                const std::size_t n_left = i + 1;
                const std::size_t n_right = ordered.size() - n_left;
                if (n_left < min_leaf || n_right < min_leaf) continue;
                std::vector<std::size_t> right_counts(n_classes);
                for (std::size_t c = 0; c < n_classes; ++c) {
                    right_counts[c] = counts[c] - left_counts[c];
                }
                const double weighted =
                    (static_cast<double>(n_left) * gini(left_counts, n_left) +
                     static_cast<double>(n_right) * gini(right_counts, n_right)) /
                    static_cast<double>(ordered.size());
                const double gain = node_gini - weighted;
                if (gain < 0.0) continue;
                if (!found || gain > best_gain) {
                    found = true;
                    best_gain = gain;
                    best_feature = j;
                    best_threshold = 0.5 * (ordered[i].first + ordered[i + 1].first);
                }
            }
        }

        if (!found) return index;

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            if (x.at(r, best_feature) < best_threshold) {
                left_rows.push_back(r);
            } else {
                right_rows.push_back(r);
            }
        }
        rows.clear();
        rows.shrink_to_fit();

        const std::size_t left_index = build(std::move(left_rows), depth + 1);
        const std::size_t right_index = build(std::move(right_rows), depth + 1);
        nodes[index].leaf = false;
        nodes[index].feature = best_feature;
        nodes[index].threshold = best_threshold;
        nodes[index].left = left_index;
        nodes[index].right = right_index;
        return index;
    }
};

}  // namespace

std::vector<int> fit_predict_cart(const Table& train_x, const std::vector<int>& train_y,
                                  std::size_t n_classes, const Table& test_x,
                                  std::size_t max_depth, std::size_t min_leaf) {
    CartBuilder builder{train_x, train_y, n_classes, max_depth, std::max<std::size_t>(1, min_leaf), {}};
    std::vector<std::size_t> all(train_x.rows);
    std::iota(all.begin(), all.end(), 0);
    const std::size_t root = builder.build(std::move(all), 0);

    std::vector<int> predictions(test_x.rows);
    for (std::size_t i = 0; i < test_x.rows; ++i) {
        std::size_t node = root;
        while (!builder.nodes[node].leaf) {
            const auto& nd = builder.nodes[node];
            node = test_x.at(i, nd.feature) < nd.threshold ? nd.left : nd.right;
        }
        predictions[i] = builder.nodes[node].label;
    }
    return predictions;
}

namespace {

// Cholesky in place; returns false on a non-positive pivot.
bool cholesky(std::vector<double>& a, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = a[i * d + j];
            for (std::size_t m = 0; m < j; ++m) sum -= a[i * d + m] * a[j * d + m];
            if (i == j) {
                if (sum <= 0.0) return false;
                a[i * d + i] = std::sqrt(sum);
            } else {
                a[i * d + j] = sum / a[j * d + j];
            }
        }
    }
    return true;
}

std::vector<double> cholesky_solve(const std::vector<double>& chol, std::size_t d,
                                   std::vector<double> b) {
    for (std::size_t i = 0; i < d; ++i) {
        double sum = b[i];
        for (std::size_t m = 0; m < i; ++m) sum -= chol[i * d + m] * b[m];
        b[i] = sum / chol[i * d + i];
    }
    for (std::size_t i = d; i-- > 0;) {
        double sum = b[i];
        for (std::size_t m = i + 1; m < d; ++m) sum -= chol[m * d + i] * b[m];
        b[i] = sum / chol[i * d + i];
    }
    return b;
}

}  // namespace

std::vector<double> fit_predict_ols(const Table& train_x, const std::vector<double>& train_y,
                                    const Table& test_x) {
    const std::size_t d = train_x.cols + 1;  // intercept first
    std::vector<double> gram(d * d, 0.0);
    std::vector<double> rhs(d, 0.0);

    auto design = [&](const Table& t, std::size_t row, std::size_t col) {
        return col == 0 ? 1.0 : t.at(row, col - 1);
    };
    for (std::size_t r = 0; r < train_x.rows; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = design(train_x, r, i);
            rhs[i] += xi * train_y[r];
            for (std::size_t j = 0; j <= i; ++j) {
                gram[i * d + j] += xi * design(train_x, r, j);
            }
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) gram[i * d + j] = gram[j * d + i];
    }

    std::vector<double> chol = gram;
    if (!cholesky(chol, d)) {
        chol = gram;
        for (std::size_t i = 0; i < d; ++i) chol[i * d + i] += kRidgeJitter;
        if (!cholesky(chol, d)) {
            throw std::runtime_error("ols normal equations not solvable after ridge jitter");
        }
    }
    const std::vector<double> beta = cholesky_solve(chol, d, rhs);

    std::vector<double> predictions(test_x.rows);
    for (std::size_t i = 0; i < test_x.rows; ++i) {
        double value = beta[0];
        for (std::size_t j = 0; j < test_x.cols; ++j) value += beta[j + 1] * test_x.at(i, j);
        predictions[i] = value;
    }
    return predictions;
}

double r_squared(const std::vector<double>& actual, const std::vector<double>& predicted) {
    if (actual.size() != predicted.size()) throw std::invalid_argument("size mismatch");
    if (actual.empty()) return 0.0;
    const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) /
                        static_cast<double>(actual.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double res = actual[i] - predicted[i];
        const double dev = actual[i] - mean;
        ss_res += res * res;
        ss_tot += dev * dev;
    }
    if (ss_tot == 0.0) return 0.0;
    return 1.0 - ss_res / ss_tot;
}

std::vector<std::size_t> assign_folds(const Dataset& data, const CvConfig& cv,
                                      std::uint64_t noise_seed) {
    cv.validate(data.n);
    const std::uint64_t seed = derive_seed(noise_seed, "folds", cv.shuffle_seed_base);
    std::vector<std::size_t> fold_of(data.n, 0);
    if (cv.folds == 1) return fold_of;

    if (cv.stratified && data.task == TaskKind::classification) {
        // per-class round robin with a rotating start so small classes do
        // not pile onto the earliest folds
        std::size_t offset = 0;
        for (std::size_t c = 0; c < data.n_classes(); ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < data.n; ++i) {
                if (data.labels[i] == static_cast<int>(c)) members.push_back(i);
            }
            Xoshiro256 rng(derive_seed(seed, "strat", c));
            fisher_yates(members, rng);
            for (std::size_t pos = 0; pos < members.size(); ++pos) {
                fold_of[members[pos]] = (offset + pos) % cv.folds;
            }
            offset = (offset + members.size()) % cv.folds;
        }
    } else {
        std::vector<std::size_t> order(data.n);
        std::iota(order.begin(), order.end(), 0);
        Xoshiro256 rng(derive_seed(seed, "shuffle", 0));
        fisher_yates(order, rng);
        for (std::size_t pos = 0; pos < data.n; ++pos) {
            fold_of[order[pos]] = pos % cv.folds;
        }
    }
    return fold_of;
}

namespace {

struct FoldSlice {
    Table train_x;
    Table test_x;
    std::vector<int> train_labels;
    std::vector<double> train_y;
    std::vector<std::size_t> test_rows;  // original indices, ascending
};

FoldSlice slice_fold(const Dataset& data, const std::vector<std::size_t>& selected,
                     const std::vector<std::size_t>& fold_of, std::size_t fold,
                     bool train_is_all) {
    FoldSlice s;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < data.n; ++i) {
        const bool in_test = fold_of[i] == fold;
        if (in_test) s.test_rows.push_back(i);
        if (train_is_all || !in_test) train_rows.push_back(i);
    }
    s.train_x = Table(train_rows.size(), selected.size());
    s.test_x = Table(s.test_rows.size(), selected.size());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
        for (std::size_t j = 0; j < selected.size(); ++j) {
            s.train_x.at(r, j) = data.at(train_rows[r], selected[j]);
        }
    }
    for (std::size_t r = 0; r < s.test_rows.size(); ++r) {
        for (std::size_t j = 0; j < selected.size(); ++j) {
            s.test_x.at(r, j) = data.at(s.test_rows[r], selected[j]);
        }
    }
    if (data.task == TaskKind::classification) {
        s.train_labels.reserve(train_rows.size());
        for (std::size_t r : train_rows) s.train_labels.push_back(data.labels[r]);
    } else {
        s.train_y.reserve(train_rows.size());
        for (std::size_t r : train_rows) s.train_y.push_back(data.y[r]);
    }
    return s;
}

// train-fold mean/sd scaling applied to both slices; near-constant columns
// keep unit scale
void standardize(Table& train, Table& test) {
    for (std::size_t j = 0; j < train.cols; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < train.rows; ++r) mean += train.at(r, j);
        mean /= static_cast<double>(train.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < train.rows; ++r) {
            const double diff = train.at(r, j) - mean;
            var += diff * diff;
        }
        var /= static_cast<double>(train.rows);
        const double sd = std::sqrt(var);
        const double scale = sd < kScaleFloor ? 1.0 : sd;
        for (std::size_t r = 0; r < train.rows; ++r) {
            train.at(r, j) = (train.at(r, j) - mean) / scale;
        }
        for (std::size_t r = 0; r < test.rows; ++r) {
            test.at(r, j) = (test.at(r, j) - mean) / scale;
        }
    }
}

}  // namespace

double cv_loss(const Dataset& data, const FeatureMask& mask, const ModelSpec& model,
               const CvConfig& cv, std::uint64_t noise_seed) {
    model.validate();
    cv.validate(data.n);
    if (mask.size() != data.p) throw std::invalid_argument("mask width must equal p");
    if (mask.none()) throw std::invalid_argument("cv_loss requires a non-empty mask");
    const bool regression = data.task == TaskKind::regression;
    if (regression != model.is_regression_model()) {
        throw std::invalid_argument("model kind incompatible with dataset task");
    }

    const std::vector<std::size_t> selected = mask.indices();
    const std::vector<std::size_t> fold_of = assign_folds(data, cv, noise_seed);
    const bool diagnostic = cv.folds == 1;

    if (regression) {
        std::vector<double> pooled(data.n, 0.0);
        for (std::size_t fold = 0; fold < cv.folds; ++fold) {
            FoldSlice s = slice_fold(data, selected, fold_of, fold, diagnostic);
            if (s.test_rows.empty()) continue;
            standardize(s.train_x, s.test_x);
            const std::vector<double> pred = fit_predict_ols(s.train_x, s.train_y, s.test_x);
            for (std::size_t i = 0; i < s.test_rows.size(); ++i) {
                pooled[s.test_rows[i]] = pred[i];
            }
        }
        return 1.0 - r_squared(data.y, pooled);
    }

    double rate_sum = 0.0;
    std::size_t scored_folds = 0;
    for (std::size_t fold = 0; fold < cv.folds; ++fold) {
        FoldSlice s = slice_fold(data, selected, fold_of, fold, diagnostic);
        if (s.test_rows.empty()) continue;
        std::vector<int> pred;
        switch (model.kind) {
            case ModelKind::knn:
                standardize(s.train_x, s.test_x);
                pred = fit_predict_knn(s.train_x, s.train_labels, s.test_x, model.k);
                break;
            case ModelKind::gaussian_nb:
                pred = fit_predict_gnb(s.train_x, s.train_labels, data.n_classes(), s.test_x);
                break;
            case ModelKind::cart:
                pred = fit_predict_cart(s.train_x, s.train_labels, data.n_classes(), s.test_x,
                                        model.max_depth, model.min_leaf);
                break;
            case ModelKind::ols:
                throw std::invalid_argument("ols is not a classifier");
        }
        std::size_t errors = 0;
        for (std::size_t i = 0; i < s.test_rows.size(); ++i) {
            if (pred[i] != data.labels[s.test_rows[i]]) ++errors;
        }
        rate_sum += static_cast<double>(errors) / static_cast<double>(s.test_rows.size());
        ++scored_folds;
    }
    return rate_sum / static_cast<double>(scored_folds);
}

}  // namespace spsafs
