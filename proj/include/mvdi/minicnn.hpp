#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvdi/rankpool.hpp"

namespace mvdi::cnn {

struct ConvSpec {
  int filters = 8;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  bool pool = false;  // 2x2 max-pool after the rectifier

  bool operator==(const ConvSpec&) const = default;
};

/// Network shape shared by every stream: a single-channel square input, a
/// conv stack, then per-stream hidden dense layers and a logit layer. The
/// last hidden layer is the feature layer.
struct Arch {
  int input_size = 32;
  std::vector<ConvSpec> conv;
  std::vector<int> hidden;

  /// conv(8, 5x5, s1, p2, pool) -> conv(16, 3x3, s1, p1, pool) -> dense(64).
  static Arch desk_default();
  void validate() const;
  bool operator==(const Arch&) const = default;
};

/// "8x5s1p2P,16x3s1p1P" (trailing P = pool) and "64,32".
std::vector<ConvSpec> parse_conv_specs(const std::string& s);
std::string format_conv_specs(const std::vector<ConvSpec>& specs);

struct ConvLayer {
  ConvSpec spec;
  int in_c = 1, in_h = 0, in_w = 0;
  int conv_h = 0, conv_w = 0;  // after convolution
  int out_h = 0, out_w = 0;    // after optional pooling
  std::vector<double> weight;  // [filters][in_c][k][k]
  std::vector<double> bias;    // [filters]

  int fan_in() const { return in_c * spec.kernel * spec.kernel; }
};

struct ConvStack {
  std::vector<ConvLayer> layers;

  int out_dim() const;
};

struct DenseLayer {
  int in = 0, out = 0;
  std::vector<double> weight;  // [out][in]
  std::vector<double> bias;
};

struct FcStack {
  std::vector<DenseLayer> layers;  // hidden..., logits
  int feature_layer = 0;
};

class MultiStreamModel {
 public:
  /// Read-only view of one sub-network. Every view refers to the same
  /// convolutional block.
  struct StreamView {
    const ConvStack& conv;
    const FcStack& fc;
  };

  Arch arch;
  int num_classes = 0;
  ConvStack shared;
  std::vector<FcStack> streams;

  int num_groups() const { return static_cast<int>(streams.size()); }
  int feature_dim() const;
  StreamView stream(int group) const;
  void validate() const;

  std::vector<std::vector<double>*> shared_blocks();
  std::vector<const std::vector<double>*> shared_blocks() const;
  std::vector<std::vector<double>*> stream_blocks(int group);
  std::vector<const std::vector<double>*> stream_blocks(int group) const;
};

enum class Precision { f32, f64 };

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 8;
  int iters = 100;
  std::uint64_t seed = 0;
  double dropout = 0.5;
  Precision precision = Precision::f64;

  void validate() const;
};

/// Zero-mean Gaussian filters with std sqrt(2 / fan_in); zero biases.
MultiStreamModel init_model(const Arch& arch, int num_groups, int num_classes, std::uint64_t seed);

double init_std(int fan_in);

struct Output {
  std::vector<double> logits;
  std::vector<double> feature;
};

/// Inference-mode pass (no dropout) through stream `group`.
Output forward(const MultiStreamModel& model, int group, std::span<const double> image);
std::vector<double> extract_feature(const MultiStreamModel& model, int group,
                                    std::span<const double> image);

struct Batch {
  std::vector<std::vector<double>> images;
  std::vector<int> labels;
};

/// Gradient blocks in the order of shared_blocks() / stream_blocks(group).
struct Gradients {
  int group = 0;
  std::vector<std::vector<double>> shared;
  std::vector<std::vector<double>> stream;
};

struct LossGrad {
  double loss = 0.0;
  Gradients grads;
};

/// Mean softmax cross-entropy plus (weight_decay/2)|theta|^2 over the shared
/// block and stream `group`. Dropout masks come from `dropout_seed` when
/// cfg.dropout > 0.
LossGrad loss_and_grads(const MultiStreamModel& model, int group, const Batch& batch,
                        const TrainConfig& cfg, std::uint64_t dropout_seed);
LossGrad loss_and_grads(const MultiStreamModel& model, int group, const Batch& batch,
                        const TrainConfig& cfg);

struct Velocity {
  std::vector<std::vector<double>> shared;
  std::vector<std::vector<std::vector<double>>> streams;

  static Velocity zeros_like(const MultiStreamModel& model);
};

/// Classical momentum: v <- mu*v - lr*g; p <- p + v, on the shared block and
/// stream grads.group only.
void sgd_step(MultiStreamModel& model, const Gradients& grads, const TrainConfig& cfg,
              Velocity& velocity);

/// One training example; each batch draws one of `candidates` at random
/// (whole-video and segment dynamic images of the same sample).
struct TrainItem {
  std::vector<std::vector<double>> candidates;
  int label = 0;
};
using GroupDataset = std::vector<TrainItem>;

struct LossRecord {
  int iteration = 0;
  int group = 0;
  double loss = 0.0;
};

using StepObserver = std::function<void(const MultiStreamModel&, int iteration, int group)>;

/// Each outer iteration visits groups 0..n-1 in order; group i takes one SGD
/// step on a batch from datasets[i]. Because every stream reads the same conv
/// block, stream i always starts from the conv weights left by stream i-1
/// (and stream 0 from stream n-1 of the previous iteration).
std::vector<LossRecord> train_round_robin(MultiStreamModel& model,
                                          const std::vector<GroupDataset>& datasets,
                                          const TrainConfig& cfg, const StepObserver& observer = {});

struct BlockCheck {
  std::string name;  // e.g. "conv0.weight", "g1.dense2.bias"
  double max_rel_error = 0.0;
  int checked = 0;
  int kinks = 0;  // entries whose +-h step changes a rectifier sign or pool winner
};

/// Compares loss_and_grads (f64, no dropout) against central differences with
/// step h. Relative error is |a - n| / max(|a|, |n|, 1e-6). Entries whose
/// finite-difference interval crosses a non-differentiable point are counted
/// in `kinks` instead of compared.
std::vector<BlockCheck> gradient_check(const MultiStreamModel& model, int group, const Batch& batch,
                                       double weight_decay, double h = 1e-5);

/// Nearest-neighbour resize to size x size, scaled to [0, 1].
std::vector<double> prepare_input(const DynamicImage& image, int size);

void save_model(const MultiStreamModel& model, const std::string& path);
MultiStreamModel load_model(const std::string& path);

}  // namespace mvdi::cnn
