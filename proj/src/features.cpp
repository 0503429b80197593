#include "mvdi/features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mvdi/blockio.hpp"
#include "mvdi/error.hpp"

namespace mvdi::features {

Matrix stack_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols) throw DataError("feature rows of unequal dimension");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

FeatureVector concat_group_features(const std::map<int, std::vector<double>>& per_group,
                                    std::span<const int> expected_groups) {
  std::vector<int> groups(expected_groups.begin(), expected_groups.end());
  std::sort(groups.begin(), groups.end());
  FeatureVector fv;
  for (int g : groups) {
    auto it = per_group.find(g);
    if (it == per_group.end()) throw DataError("missing features for group " + std::to_string(g));
    fv.values.insert(fv.values.end(), it->second.begin(), it->second.end());
  }
  return fv;
}

void l2_normalize(std::span<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s <= 0.0) return;
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
}

// ---------------------------------------------------------------------------
// PCA

std::size_t default_pca_dim(std::size_t n, std::size_t d, std::size_t target) {
  if (n < 2) return 0;
  return std::min({target, n - 1, d});
}

namespace {

void fix_sign(std::span<double> v) {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0) {
        for (double& y : v) y = -y;
      }
      return;
    }
  }
}

}  // namespace

PcaModel pca_fit(const Matrix& x, std::size_t k, bool whiten) {
  const std::size_t n = x.rows, d = x.cols;
  if (n < 2) throw DataError("pca_fit: need at least 2 samples");
  if (k < 1 || k > std::min(d, n - 1)) {
    throw ConfigError("pca_fit: k=" + std::to_string(k) + " exceeds min(d, n-1)=" +
                      std::to_string(std::min(d, n - 1)));
  }
  PcaModel m;
  m.whiten = whiten;
  m.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x(i, j);
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered(i, j) = x(i, j) - m.mean[j];
  }
  if (centered.cwiseAbs().maxCoeff() == 0.0) throw DataError("pca_fit: degenerate data (all rows equal)");

  m.components = Matrix(k, d);
  m.eigenvalues.resize(k);
  const double denom = static_cast<double>(n - 1);
  if (d <= 2048) {
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    for (std::size_t c = 0; c < k; ++c) {
      const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
      m.eigenvalues[c] = std::max(0.0, es.eigenvalues()(col));
      for (std::size_t j = 0; j < d; ++j) m.components(c, j) = es.eigenvectors()(static_cast<Eigen::Index>(j), col);
    }
  } else {
    const Eigen::MatrixXd gram = (centered * centered.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
    const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const Eigen::Index col = static_cast<Eigen::Index>(n - 1 - c);
      const double lam = es.eigenvalues()(col);
      m.eigenvalues[c] = std::max(0.0, lam);
      Eigen::VectorXd comp(d);
      if (lam > 1e-12 * std::max(1.0, top)) {
        comp = centered.transpose() * es.eigenvectors().col(col);
      } else {
        // Null direction: complete the basis from the standard axes.
        comp.setZero();
        comp(static_cast<Eigen::Index>(c % d)) = 1.0;
      }
      for (std::size_t p = 0; p < c; ++p) {
        double proj = 0.0;
        for (std::size_t j = 0; j < d; ++j) proj += m.components(p, j) * comp(static_cast<Eigen::Index>(j));
        for (std::size_t j = 0; j < d; ++j) comp(static_cast<Eigen::Index>(j)) -= proj * m.components(p, j);
      }
      const double nrm = comp.norm();
      if (!(nrm > 0)) throw NumericError("pca_fit: could not complete the component basis");
      for (std::size_t j = 0; j < d; ++j) m.components(c, j) = comp(static_cast<Eigen::Index>(j)) / nrm;
    }
  }
  for (std::size_t c = 0; c < k; ++c) fix_sign(m.components.row(c));
  return m;
}

std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x) {
  const std::size_t d = model.mean.size();
  if (x.size() != d) throw DataError("pca_transform: dimension mismatch");
  std::vector<double> out(model.k(), 0.0);
  for (std::size_t c = 0; c < model.k(); ++c) {
    const auto row = model.components.row(c);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * (x[j] - model.mean[j]);
    if (model.whiten) s /= std::sqrt(std::max(model.eigenvalues[c], 1e-12));
    out[c] = s;
  }
  return out;
}

Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  Matrix out(x.rows, model.k());
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = pca_transform(model, x.row(i));
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear SVM

namespace {

struct Binary {
  std::vector<double> w;  // d weights + bias
};

// Dual coordinate descent for the L1-loss (hinge) SVM with per-sample bound
// U = C/n; x is augmented with a trailing 1 for the bias.
Binary train_binary(const Matrix& x, const std::vector<double>& yb, double C, std::mt19937_64& rng,
                    const SvmOptions& opt) {
  const std::size_t n = x.rows, d = x.cols;
  const double U = C / static_cast<double>(n);
  std::vector<double> alpha(n, 0.0), w(d + 1, 0.0), qd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 1.0;
    for (double v : x.row(i)) s += v * v;
    qd[i] = s;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto margin = [&](std::size_t i) {
    const auto r = x.row(i);
    double s = w[d];
    for (std::size_t j = 0; j < d; ++j) s += w[j] * r[j];
    return s;
  };
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const double G = yb[i] * margin(i) - 1.0;
      double pg = G;
      if (alpha[i] == 0.0) pg = std::min(G, 0.0);
      else if (alpha[i] == U) pg = std::max(G, 0.0);
      if (pg == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = std::clamp(old - G / qd[i], 0.0, U);
      const double delta = (alpha[i] - old) * yb[i];
      if (delta == 0.0) continue;
      const auto r = x.row(i);
      for (std::size_t j = 0; j < d; ++j) w[j] += delta * r[j];
      w[d] += delta;
    }
    double wsq = 0.0, hinge = 0.0, asum = 0.0;
    for (double v : w) wsq += v * v;
    for (std::size_t i = 0; i < n; ++i) {
      hinge += std::max(0.0, 1.0 - yb[i] * margin(i));
      asum += alpha[i];
    }
    const double primal = 0.5 * wsq + U * hinge;
    const double dual = asum - 0.5 * wsq;
    if (primal - dual <= opt.tolerance * std::max(1.0, std::abs(primal))) break;
  }
  return {std::move(w)};
}

}  // namespace

SvmModel svm_train(const Matrix& x, std::span<const int> y, double C, std::uint64_t seed,
                   const SvmOptions& opt) {
  if (x.rows != y.size()) throw DataError("svm_train: sample/label count mismatch");
  if (!(C > 0.0)) throw ConfigError("svm_train: C must be > 0");
  if (x.rows == 0) throw DataError("svm_train: no samples");
  const int classes = *std::max_element(y.begin(), y.end()) + 1;
  std::vector<int> present(classes, 0);
  for (int v : y) {
    if (v < 0) throw DataError("svm_train: negative label");
    present[v] = 1;
  }
  if (std::accumulate(present.begin(), present.end(), 0) < 2) {
    throw DataError("svm_train: need at least two classes");
  }
  SvmModel m;
  m.C = C;
  std::mt19937_64 rng(seed);
  std::vector<double> yb(x.rows);
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < x.rows; ++i) yb[i] = y[i] == c ? 1.0 : -1.0;
    auto b = train_binary(x, yb, C, rng, opt);
    m.bias.push_back(b.w.back());
    b.w.pop_back();
    m.weights.push_back(std::move(b.w));
  }
  return m;
}

int argmax_lowest(std::span<const double> scores) {
  int best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = static_cast<int>(c);
  }
  return best;
}

Prediction svm_predict(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) throw DataError("svm_predict: dimension mismatch");
  Prediction p;
  for (int c = 0; c < model.num_classes(); ++c) {
    double s = model.bias[c];
    for (std::size_t j = 0; j < x.size(); ++j) s += model.weights[c][j] * x[j];
    p.scores.push_back(s);
  }
  p.label = argmax_lowest(p.scores);
  return p;
}

std::vector<double> default_c_grid() {
  std::vector<double> g;
  for (int e = -5; e <= 5; e += 2) g.push_back(std::ldexp(1.0, e));
  return g;
}

std::vector<int> assign_folds(std::span<const int> y, int folds, std::uint64_t seed,
                              bool& stratified) {
  std::mt19937_64 rng(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  stratified = true;
  for (const auto& [c, idx] : by_class) {
    if (static_cast<int>(idx.size()) < folds) stratified = false;
  }
  std::vector<int> fold(y.size(), 0);
  if (stratified) {
    // Deal each shuffled class round-robin, continuing where the previous
    // class stopped so fold sizes stay balanced.
    int next = 0;
    for (auto& [c, idx] : by_class) {
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t i : idx) {
        fold[i] = next;
        next = (next + 1) % folds;
      }
    }
  } else {
    std::vector<std::size_t> all(y.size());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    for (std::size_t k = 0; k < all.size(); ++k) fold[all[k]] = static_cast<int>(k % folds);
  }
  return fold;
}

CvResult svm_cv_select(const Matrix& x, std::span<const int> y, std::vector<double> c_grid,
                       int folds, std::uint64_t seed, const SvmOptions& opt) {
  if (folds < 2) throw ConfigError("svm_cv_select: folds must be >= 2");
  if (x.rows < static_cast<std::size_t>(folds)) throw DataError("svm_cv_select: fewer samples than folds");
  if (c_grid.empty()) throw ConfigError("svm_cv_select: empty C grid");
  CvResult r;
  r.c_grid = c_grid;
  const auto fold = assign_folds(y, folds, seed, r.stratified);
  for (std::size_t ci = 0; ci < c_grid.size(); ++ci) {
    std::vector<double> scores;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> tr, va;
      for (std::size_t i = 0; i < x.rows; ++i) (fold[i] == f ? va : tr).push_back(i);
      if (va.empty() || tr.empty()) continue;
      Matrix xt(tr.size(), x.cols);
      std::vector<int> yt(tr.size());
      for (std::size_t k = 0; k < tr.size(); ++k) {
        std::copy(x.row(tr[k]).begin(), x.row(tr[k]).end(), xt.row(k).begin());
        yt[k] = y[tr[k]];
      }
      int distinct = 0;
      {
        std::vector<int> u = yt;
        std::sort(u.begin(), u.end());
        distinct = static_cast<int>(std::unique(u.begin(), u.end()) - u.begin());
      }
      int correct = 0;
      if (distinct < 2) {
        for (std::size_t i : va) correct += y[i] == yt.front();
      } else {
        const auto model = svm_train(xt, yt, c_grid[ci], seed + static_cast<std::uint64_t>(f), opt);
        for (std::size_t i : va) correct += svm_predict(model, x.row(i)).label == y[i];
      }
      scores.push_back(static_cast<double>(correct) / static_cast<double>(va.size()));
    }
    r.fold_scores.push_back(scores);
    r.mean_accuracy.push_back(scores.empty() ? 0.0
                                             : std::accumulate(scores.begin(), scores.end(), 0.0) /
                                                   static_cast<double>(scores.size()));
  }
  // Highest mean accuracy; ties to the smaller C.
  std::size_t best = 0;
  for (std::size_t ci = 1; ci < c_grid.size(); ++ci) {
    const double a = r.mean_accuracy[ci], b = r.mean_accuracy[best];
    if (a > b + 1e-12 || (std::abs(a - b) <= 1e-12 && c_grid[ci] < c_grid[best])) best = ci;
  }
  r.best_c = c_grid[best];
  return r;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) s += (p[k] = std::exp(logits[k] - mx));
  for (double& v : p) v /= s;
  return p;
}

Prediction softmax_sum_fusion(const std::map<int, std::vector<double>>& per_group_logits) {
  if (per_group_logits.empty()) throw DataError("softmax_sum_fusion: no groups");
  const std::size_t C = per_group_logits.begin()->second.size();
  Prediction p;
  p.scores.assign(C, 0.0);
  for (const auto& [g, logits] : per_group_logits) {
    if (logits.size() != C) throw DataError("softmax_sum_fusion: logit length mismatch");
    const auto s = softmax(logits);
    for (std::size_t k = 0; k < C; ++k) p.scores[k] += s[k];
  }
  p.label = argmax_lowest(p.scores);
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

void save_pca(const PcaModel& model, const std::string& path) {
  blockio::Container c;
  c.kind = blockio::Kind::pca;
  c.header = {static_cast<std::int64_t>(model.mean.size()), static_cast<std::int64_t>(model.k()),
              model.whiten ? 1 : 0};
  c.blocks = {model.mean, model.components.data, model.eigenvalues};
  blockio::write(c, path);
}

PcaModel load_pca(const std::string& path) {
  const auto c = blockio::read(path, blockio::Kind::pca);
  if (c.header.size() != 3 || c.blocks.size() != 3) throw DataError("malformed PCA model: " + path);
  PcaModel m;
  const auto d = static_cast<std::size_t>(c.header[0]);
  const auto k = static_cast<std::size_t>(c.header[1]);
  m.whiten = c.header[2] != 0;
  m.mean = c.blocks[0];
  m.components.rows = k;
  m.components.cols = d;
  m.components.data = c.blocks[1];
  m.eigenvalues = c.blocks[2];
  if (m.mean.size() != d || m.components.data.size() != k * d || m.eigenvalues.size() != k) {
    throw DataError("malformed PCA model: " + path);
  }
  return m;
}

void save_svm(const SvmModel& model, const std::string& path) {
  blockio::Container c;
  c.kind = blockio::Kind::svm;
  c.header = {model.num_classes(), static_cast<std::int64_t>(model.dim())};
  c.blocks.push_back({model.C});
  c.blocks.push_back(model.bias);
  for (const auto& w : model.weights) c.blocks.push_back(w);
  blockio::write(c, path);
}

SvmModel load_svm(const std::string& path) {
  const auto c = blockio::read(path, blockio::Kind::svm);
  if (c.header.size() != 2 || c.blocks.size() < 2) throw DataError("malformed SVM model: " + path);
  const auto classes = static_cast<std::size_t>(c.header[0]);
  const auto d = static_cast<std::size_t>(c.header[1]);
  if (c.blocks.size() != 2 + classes || c.blocks[0].size() != 1 || c.blocks[1].size() != classes) {
    throw DataError("malformed SVM model: " + path);
  }
  SvmModel m;
  m.C = c.blocks[0][0];
  m.bias = c.blocks[1];
  for (std::size_t k = 0; k < classes; ++k) {
    if (c.blocks[2 + k].size() != d) throw DataError("malformed SVM model: " + path);
    m.weights.push_back(c.blocks[2 + k]);
  }
  return m;
}

}  // namespace mvdi::features
