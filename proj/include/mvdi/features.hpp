#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mvdi::features {

struct FeatureVector {
  std::vector<double> values;
  std::string sample_id;
  int label = 0;
};

/// Row-major n x d sample matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

Matrix stack_rows(const std::vector<std::vector<double>>& rows);

/// Concatenates in ascending group order. Every id in `expected_groups` must
/// be present.
FeatureVector concat_group_features(const std::map<int, std::vector<double>>& per_group,
                                    std::span<const int> expected_groups);

void l2_normalize(std::span<double> v);

struct PcaModel {
  std::vector<double> mean;
  Matrix components;  // k x d, orthonormal rows
  std::vector<double> eigenvalues;
  bool whiten = false;

  std::size_t k() const { return components.rows; }
};

/// Top-k eigenvectors of the sample covariance, descending eigenvalue order,
/// each with its first non-zero entry positive. Uses the d x d covariance for
/// d <= 2048 and the n x n Gram matrix otherwise.
PcaModel pca_fit(const Matrix& x, std::size_t k, bool whiten = false);
std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x);
Matrix pca_transform(const PcaModel& model, const Matrix& x);

/// min(1000, n - 1, d).
std::size_t default_pca_dim(std::size_t n, std::size_t d, std::size_t target = 1000);

/// One-vs-rest linear classifiers with a bias. Each binary problem minimizes
/// 0.5|w|^2 + (C/n) * sum_i max(0, 1 - y_i (w.x_i + b)), the bias being
/// regularized through an appended constant feature.
struct SvmModel {
  std::vector<std::vector<double>> weights;  // [class][d]
  std::vector<double> bias;
  double C = 1.0;

  int num_classes() const { return static_cast<int>(weights.size()); }
  std::size_t dim() const { return weights.empty() ? 0 : weights.front().size(); }
};

struct SvmOptions {
  double tolerance = 1e-4;  // relative primal-dual gap
  int max_epochs = 2000;
};

SvmModel svm_train(const Matrix& x, std::span<const int> y, double C, std::uint64_t seed,
                   const SvmOptions& opt = {});

struct Prediction {
  int label = 0;
  std::vector<double> scores;
};

/// Argmax of one-vs-rest scores; ties go to the lowest class index.
Prediction svm_predict(const SvmModel& model, std::span<const double> x);
int argmax_lowest(std::span<const double> scores);

struct CvResult {
  double best_c = 0.0;
  std::vector<double> c_grid;
  std::vector<double> mean_accuracy;             // per C
  std::vector<std::vector<double>> fold_scores;  // [C][fold]
  bool stratified = true;  // false when a class had fewer samples than folds
};

std::vector<int> assign_folds(std::span<const int> y, int folds, std::uint64_t seed,
                              bool& stratified);

/// Seeded (stratified where possible) k-fold CV; best mean accuracy wins,
/// ties go to the smaller C.
CvResult svm_cv_select(const Matrix& x, std::span<const int> y, std::vector<double> c_grid,
                       int folds, std::uint64_t seed, const SvmOptions& opt = {});

/// {2^-5, 2^-3, ..., 2^5}.
std::vector<double> default_c_grid();

/// Sum of per-group softmax vectors, argmax with lowest-index ties.
Prediction softmax_sum_fusion(const std::map<int, std::vector<double>>& per_group_logits);
std::vector<double> softmax(std::span<const double> logits);

void save_pca(const PcaModel& model, const std::string& path);
PcaModel load_pca(const std::string& path);
void save_svm(const SvmModel& model, const std::string& path);
SvmModel load_svm(const std::string& path);

}  // namespace mvdi::features
