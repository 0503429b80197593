#include <doctest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "mvdi/error.hpp"
#include "mvdi/pipeline.hpp"
#include "oracles.hpp"

using namespace mvdi;

namespace {

std::string small_dataset() {
  static const std::string dir = [] {
    const auto d = oracle::temp_dir("pipeline_data");
    SynthConfig s;
    s.num_classes = 2;
    s.samples_per_class = 8;
    s.width = 16;
    s.height = 16;
    s.frames = 8;
    s.num_subjects = 2;
    synth_dataset(s, 5, d.string());
    return d.string();
  }();
  return dir;
}

PipelineConfig small_config(const std::string& out) {
  PipelineConfig c;
  c.manifest = small_dataset() + "/manifest.csv";
  c.split.mode = SplitMode::cross_subject;
  c.split.train_keys = {0};
  c.groups = {1, 3};
  c.arch.input_size = 16;
  c.arch.conv = cnn::parse_conv_specs("4x3s1p1P");
  c.arch.hidden = {64};
  c.train.iters = 20;
  c.train.learning_rate = 0.01;
  c.c_grid = {0.1, 1};
  c.cv_folds = 2;
  c.output_dir = out;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config text round trips") {
  auto c = small_config("");
  c.representation = Representation::dmm;
  c.classifier = Classifier::softmax_sum;
  c.pool.step_size = 0.002;
  c.proposal_margin = 4;
  const auto map = c.to_map();
  const auto back = PipelineConfig::from_map(ConfigMap::parse(map.to_text()));
  CHECK(back.to_map().to_text() == map.to_text());
  CHECK(back.representation == Representation::dmm);
  CHECK(back.classifier == Classifier::softmax_sum);
  CHECK(back.groups == c.groups);
  CHECK(back.arch == c.arch);
  CHECK(back.pool.step_size == 0.002);
  CHECK(back.proposal_margin == 4);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(PipelineConfig::from_map(ConfigMap::parse("train.itres = 5\n")), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_map(ConfigMap::parse("representation = hog\n")), ConfigError);
  auto c = small_config("");
  c.manifest = "/nonexistent/manifest.csv";
  CHECK_THROWS(c.validate());
  c = small_config("");
  c.groups = {6};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("relative paths resolve against the config file") {
  const auto dir = oracle::temp_dir("pipeline_cfg");
  std::filesystem::copy(small_dataset(), dir / "data", std::filesystem::copy_options::recursive);
  std::ofstream(dir / "run.cfg") << "manifest = data/manifest.csv\noutput_dir = out\n";
  const auto c = PipelineConfig::from_map(ConfigMap::load((dir / "run.cfg").string()), dir.string());
  CHECK(c.manifest == (dir / "data/manifest.csv").string());
  CHECK(c.output_dir == (dir / "out").string());
}

TEST_CASE("parallel_for covers every index and reports the first failure") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::accumulate(hits.begin(), hits.end(), 0) == 100);
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 30) throw DataError("bad " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad 7") != std::string::npos);
  }
}

TEST_CASE("end-to-end run report invariants") {
  const auto out = oracle::temp_dir("pipeline_run");
  const auto c = small_config(out.string());
  const auto r = run(c, 1);

  CHECK(r.feature_dim == 2 * 64);
  CHECK(r.total == static_cast<int>(r.test_ids.size()));
  CHECK(r.total == 8);
  int trace = 0;
  for (std::size_t k = 0; k < r.confusion.size(); ++k) {
    trace += r.confusion[k][k];
    CHECK(std::accumulate(r.confusion[k].begin(), r.confusion[k].end(), 0) == r.support[k]);
  }
  CHECK(trace == r.correct);
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(trace) / r.total));
  CHECK(r.final_losses.size() == 2);
  CHECK((r.selected_c == 0.1 || r.selected_c == 1.0));

  const auto& t = r.mean_times;
  CHECK(t.projection > 0);
  CHECK(t.dynamic_image > 0);
  CHECK(t.proposal > 0);
  CHECK(t.feature_extraction > 0);
  CHECK(t.classification > 0);
  CHECK(t.overall() == doctest::Approx(t.projection + t.dynamic_image + t.proposal +
                                       t.feature_extraction + t.classification)
                           .epsilon(0.01));

  const auto timings = report_timings(r);
  for (const char* stage : {"projection", "dynamic_image", "proposal", "feature_extraction",
                            "classification", "overall"})
    CHECK(timings.find(stage) != std::string::npos);

  const auto text = format_report(r);
  CHECK(slurp((out / "report.txt").string()) == text);
  CHECK(std::filesystem::exists(out / "timings.txt"));
  CHECK(std::filesystem::exists(out / "model.bin"));
  CHECK(std::filesystem::exists(out / "pca.bin"));
  CHECK(std::filesystem::exists(out / "svm.bin"));
  CHECK(text.find("seconds") == std::string::npos);
}

TEST_CASE("reports are identical across worker counts and runs") {
  auto c = small_config("");
  const auto a = format_report(run(c, 1));
  const auto b = format_report(run(c, 3));
  const auto again = format_report(run(c, 1));
  CHECK(a == b);
  CHECK(a == again);
}

TEST_CASE("feature dimension grows with the number of groups") {
  auto c = small_config("");
  c.classifier = Classifier::softmax_sum;
  for (std::vector<int> groups : {std::vector<int>{3}, std::vector<int>{1, 3, 5}}) {
    c.groups = groups;
    const auto r = run(c, 1);
    CHECK(r.feature_dim == groups.size() * 64);
  }
}

TEST_CASE("representation swap is recorded in the report") {
  auto c = small_config("");
  c.representation = Representation::dmm;
  c.groups = {3};
  const auto text = format_report(run(c, 1));
  CHECK(text.find("representation = dmm") != std::string::npos);
}

TEST_CASE("report config reproduces the run") {
  const auto out = oracle::temp_dir("pipeline_repro");
  auto c = small_config("");
  c.groups = {3};
  const auto first = run(c, 1);
  std::ofstream(out / "cfg.txt") << first.config.to_map().to_text();
  const auto replay = PipelineConfig::load((out / "cfg.txt").string());
  CHECK(format_report(run(replay, 1)) == format_report(first));
}

TEST_CASE("ablation axes") {
  CHECK(parse_axis("view_groups") == AblationAxis::view_groups);
  CHECK(to_string(AblationAxis::proposal) == "proposal");
  CHECK_THROWS_AS(parse_axis("lighting"), ConfigError);

  auto c = small_config("");
  c.train.iters = 4;
  const auto rep = run_ablation(c, AblationAxis::representation, 1);
  REQUIRE(rep.size() == 2);
  CHECK(rep[0].setting == "DMM");
  CHECK(rep[1].setting == "Dynamic image");
  const auto prop = run_ablation(c, AblationAxis::proposal, 1);
  REQUIRE(prop.size() == 2);
  CHECK(prop[0].setting == "MVDI-O");
  CHECK(prop[1].setting == "MVDI-AP");
  const auto cls = run_ablation(c, AblationAxis::classifier, 1);
  REQUIRE(cls.size() == 2);
  CHECK(cls[0].setting == "Softmax");
  CHECK(cls[1].setting == "SVM");
  const auto table = format_ablation(AblationAxis::proposal, prop);
  CHECK(table.find("MVDI-AP") != std::string::npos);
}

TEST_CASE("per-sample failures name the sample") {
  const auto dir = oracle::temp_dir("pipeline_broken");
  std::filesystem::copy(small_dataset(), dir.string(), std::filesystem::copy_options::recursive);
  const auto m = load_manifest((dir / "manifest.csv").string());
  const auto victim = m.records.front().sample_id;
  for (const auto& e : std::filesystem::directory_iterator(m.records.front().video_path)) {
    std::filesystem::resize_file(e.path(), 10);
    break;
  }
  auto c = small_config("");
  c.manifest = (dir / "manifest.csv").string();
  try {
    run(c, 1);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(victim) != std::string::npos);
  }
}
