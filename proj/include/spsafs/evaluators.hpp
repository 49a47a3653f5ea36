#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spsafs/core.hpp"
#include "spsafs/spsa.hpp"

namespace spsafs {

// Cross-validation layout. Fold assignment is a pure function of
// (noise_seed, shuffle_seed_base, n, folds, labels); every observation lands
// in exactly one validation fold, and stratified assignment keeps class
// counts per fold within one of each other.
//
// folds == 1 is a diagnostic mode: the model is fit and scored on the full
// data (training loss). Normal operation uses folds >= 2.
struct CvConfig {
    std::size_t folds = 5;
    std::uint64_t shuffle_seed_base = 0;
    bool stratified = true;

    void validate(std::size_t n) const;
};

enum class ModelKind { knn, gaussian_nb, cart, ols };

struct ModelSpec {
    ModelKind kind = ModelKind::knn;
    std::size_t k = 5;           // knn neighbours (odd by default)
    std::size_t max_depth = 4;   // cart
    std::size_t min_leaf = 1;    // cart

    void validate() const;
    bool is_regression_model() const { return kind == ModelKind::ols; }
    std::string name() const;
};

ModelKind model_kind_from_name(const std::string& name);

// Dense row-major matrix used to hand fold slices to the model routines.
struct Table {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Table() = default;
    Table(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

// k-nearest neighbours with Euclidean distance over the given columns.
// Distance ties break toward the lower training index, vote ties toward the
// smaller label code. k is clamped to the training size.
std::vector<int> fit_predict_knn(const Table& train_x, const std::vector<int>& train_y,
                                 const Table& test_x, std::size_t k);

// Gaussian naive Bayes with per-class per-feature variances floored at
// 1e-9. Ties in the posterior argmax go to the smaller label code.
std::vector<int> fit_predict_gnb(const Table& train_x, const std::vector<int>& train_y,
                                 std::size_t n_classes, const Table& test_x);

// CART with axis-aligned splits chosen by Gini impurity decrease. Split
// points sit midway between consecutive distinct sorted values; equal-gain
// ties resolve to the lower feature index, then the lower threshold. An
// impure node splits even at zero gain (depth permitting), which is what
// lets a depth-2 tree carve an XOR pattern exactly. Leaves predict the
// majority class.
std::vector<int> fit_predict_cart(const Table& train_x, const std::vector<int>& train_y,
                                  std::size_t n_classes, const Table& test_x,
                                  std::size_t max_depth, std::size_t min_leaf);

// Ordinary least squares via the normal equations with an intercept. A
// singular Gram matrix gets a one-shot ridge jitter of 1e-8 on the diagonal.
std::vector<double> fit_predict_ols(const Table& train_x, const std::vector<double>& train_y,
                                    const Table& test_x);

// 1 - SS_res / SS_tot; defined as 0 when SS_tot == 0.
double r_squared(const std::vector<double>& actual, const std::vector<double>& predicted);

// Cross-validated loss of a model restricted to the masked features:
// classification gives the mean misclassification rate over folds (in
// [0,1]); regression gives 1 - R^2 over pooled out-of-fold predictions
// (unclamped, so it may exceed 1 when out-of-fold R^2 goes negative).
// knn and ols standardize features with train-fold statistics; gnb and cart
// operate on raw values.
double cv_loss(const Dataset& data, const FeatureMask& mask, const ModelSpec& model,
               const CvConfig& cv, std::uint64_t noise_seed);

// Validation-fold index for every row; exposed for fold-partition tests.
std::vector<std::size_t> assign_folds(const Dataset& data, const CvConfig& cv,
                                      std::uint64_t noise_seed);

// LossEvaluator adapter over cv_loss. Holds the dataset by reference.
class CvLossEvaluator : public LossEvaluator {
public:
    CvLossEvaluator(const Dataset& data, ModelSpec model, CvConfig cv)
        : data_(data), model_(model), cv_(cv) {
        model_.validate();
        cv_.validate(data.n);
    }

    double evaluate(const FeatureMask& mask, std::uint64_t noise_seed) const override {
        return cv_loss(data_, mask, model_, cv_, noise_seed);
    }

private:
    const Dataset& data_;
    ModelSpec model_;
    CvConfig cv_;
};

}  // namespace spsafs
