#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvdi/config.hpp"
#include "mvdi/depthio.hpp"
#include "mvdi/minicnn.hpp"
#include "mvdi/rankpool.hpp"
#include "mvdi/viewsynth.hpp"

namespace mvdi {

enum class Representation { dynamic_image, dmm };
enum class Classifier { svm, softmax_sum };
/// Which images represent a view at test time: the whole-video dynamic image,
/// or the mean feature over whole + segment images.
enum class TestTimeImages { whole, segment_mean };

struct PipelineConfig {
  std::string manifest;
  SplitSpec split;
  std::vector<int> groups = {1, 2, 3, 4, 5};  // ids into default_view_groups()
  ProjectionConfig projection;
  PoolConfig pool;
  SegmentSpec segments;
  bool proposal = true;
  int proposal_margin = -1;  // < 0: 30 px scaled by frame_width / 320
  bool proposal_from_skeleton = false;
  double dmm_epsilon = 50.0;
  Representation representation = Representation::dynamic_image;
  cnn::Arch arch = cnn::Arch::desk_default();
  cnn::TrainConfig train;
  Classifier classifier = Classifier::svm;
  int pca_dim = 1000;
  bool pca_whiten = false;
  bool l2_normalize = false;
  TestTimeImages test_time = TestTimeImages::whole;
  std::vector<double> c_grid;
  int cv_folds = 5;
  std::string output_dir;
  std::uint64_t seed = 7;

  void validate() const;

  /// Relative paths in `map` are resolved against `base_dir`.
  static PipelineConfig from_map(const ConfigMap& map, const std::string& base_dir = "");
  static PipelineConfig load(const std::string& path);
  ConfigMap to_map() const;
};

struct StageTimes {
  double projection = 0.0;
  double dynamic_image = 0.0;
  double proposal = 0.0;
  double feature_extraction = 0.0;
  double classification = 0.0;

  double overall() const {
    return projection + dynamic_image + proposal + feature_extraction + classification;
  }
};

struct RunReport {
  double accuracy = 0.0;
  int correct = 0;
  int total = 0;
  std::vector<double> per_class_accuracy;
  std::vector<int> support;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  std::vector<std::string> test_ids;
  std::vector<int> predictions;
  std::size_t feature_dim = 0;  // before PCA
  std::size_t pca_dim = 0;
  double selected_c = 0.0;
  std::vector<double> cv_mean_accuracy;
  std::vector<double> final_losses;  // mean loss over the last 10% of iterations, per group
  StageTimes mean_times;             // per test video, seconds
  PipelineConfig config;
};

/// Deterministic structured text (no timings).
std::string format_report(const RunReport& report);
/// Per-stage mean seconds per test video, plus overall.
std::string report_timings(const RunReport& report);

/// Number of sample-level workers: MVDI_THREADS if set, else hardware threads.
int worker_count();
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Runs the whole train/evaluate pipeline. Writes report.txt, timings.txt and
/// the fitted models into config.output_dir when it is non-empty.
RunReport run(const PipelineConfig& config, int workers = 0);

/// Prepares the listed samples and trains one stream per configured group,
/// ignoring the split and classifier settings.
cnn::MultiStreamModel train_model(const PipelineConfig& config, const std::vector<std::string>& sample_ids,
                                  int workers = 0, std::vector<cnn::LossRecord>* trace = nullptr);

enum class AblationAxis { representation, view_groups, proposal, classifier };
AblationAxis parse_axis(const std::string& s);
std::string to_string(AblationAxis a);

struct AblationRow {
  std::string setting;
  double accuracy = 0.0;
};

std::vector<AblationRow> run_ablation(const PipelineConfig& base, AblationAxis axis, int workers = 0);
std::string format_ablation(AblationAxis axis, const std::vector<AblationRow>& rows);

std::string to_string(Representation r);
std::string to_string(Classifier c);

}  // namespace mvdi
