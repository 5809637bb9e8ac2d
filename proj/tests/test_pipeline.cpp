#include <doctest.h>

#include <opencv2/videoio.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "onfire/errors.hpp"
#include "onfire/image_io.hpp"
#include "onfire/manifest.hpp"
#include "onfire/metrics.hpp"
#include "onfire/pipeline.hpp"
#include "onfire/random.hpp"
#include "onfire/synth.hpp"
#include "onfire/trainer.hpp"

using namespace onfire;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "onfire_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void make_class_dirs(const fs::path& root, int fire, int nofire) {
  for (auto [name, n] : {std::pair{"fire", fire}, std::pair{"nofire", nofire}}) {
    fs::create_directories(root / name);
    for (int i = 0; i < n; ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "img_%03d.png", i);
      save_image(Image(4, 4, 3, 0.1f * (i % 10)), root / name / file);
    }
  }
}

ModelOptions toy_options() {
  ModelOptions o;
  o.input_size = 64;
  o.width_divisor = 4;
  return o;
}

// One small trained model shared by the detection and CLI tests.
const fs::path& toy_model() {
  static const fs::path path = [] {
    const fs::path dir = scratch("model");
    auto net = make_network(toy_options(), 1);
    const Dataset train_set = synth_dataset(150, 64, 21);
    const Dataset val_set = synth_dataset(40, 64, 22);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 32;
    cfg.seed = 1;
    cfg.stop_at_train_accuracy = 0.97;
    cfg.stop_at_val_accuracy = 0.95;
    const TrainResult r = train(*net, train_set, &val_set, cfg);
    save_model(*net, r.checkpoint, dir / "toy.ckpt");
    return dir / "toy.ckpt";
  }();
  return path;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ONFIRE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("metrics worked example") {
  const MetricsReport r = compute_metrics({9, 2, 8, 1});
  CHECK(*r.tpr == doctest::Approx(0.9));
  CHECK(*r.fpr == doctest::Approx(0.2));
  CHECK(*r.precision == doctest::Approx(0.8182).epsilon(1e-4));
  CHECK(*r.accuracy == doctest::Approx(0.85));
  CHECK(*r.f_score == doctest::Approx(0.8571).epsilon(1e-4));
  CHECK(*r.tpr == 0.9);
  CHECK(*r.fpr == 0.2);
  CHECK(*r.accuracy == 0.85);

  const MetricsReport perfect = compute_metrics({50, 0, 50, 0});
  CHECK(*perfect.tpr == 1.0);
  CHECK(*perfect.fpr == 0.0);
  CHECK(*perfect.f_score == 1.0);
  CHECK(*perfect.accuracy == 1.0);

  CHECK(accuracy_to_complexity(94.4, 0.96) == doctest::Approx(98.33).epsilon(1e-4));
  CHECK_THROWS_AS(accuracy_to_complexity(94.4, 0.0), ContractError);

  const MetricsReport no_positives = compute_metrics({0, 0, 10, 0});
  CHECK_FALSE(no_positives.tpr.has_value());
  CHECK_FALSE(no_positives.precision.has_value());
  CHECK_FALSE(no_positives.f_score.has_value());
  CHECK(*no_positives.fpr == 0.0);
  CHECK(metrics_json(no_positives).find("\"tpr\":null") != std::string::npos);
  CHECK(metrics_table(r).find("85.0") != std::string::npos);
  const auto csv = lines_of(metrics_csv(r));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0].rfind("tp,fp,tn,fn", 0) == 0);

  const std::vector<int> labels{1, 1, 0, 0, 1}, preds{1, 0, 0, 1, 1};
  CHECK(confusion_from(labels, preds) == Confusion{2, 1, 1, 1});
}

TEST_CASE("metrics identities over random confusion matrices") {
  Rng rng(42);
  for (int i = 0; i < 10000; ++i) {
    const Confusion c{static_cast<std::int64_t>(rng.below(1000)), static_cast<std::int64_t>(rng.below(1000)),
                      static_cast<std::int64_t>(rng.below(1000)), static_cast<std::int64_t>(rng.below(1000))};
    const MetricsReport r = compute_metrics(c, 1.5);
    const double tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
    REQUIRE(r.tpr.has_value() == (tp + fn > 0));
    REQUIRE(r.fpr.has_value() == (fp + tn > 0));
    REQUIRE(r.precision.has_value() == (tp + fp > 0));
    if (r.tpr) CHECK(*r.tpr == tp / (tp + fn));
    if (r.fpr) CHECK(*r.fpr == fp / (fp + tn));
    if (r.precision) CHECK(*r.precision == tp / (tp + fp));
    if (c.total() > 0) {
      CHECK(*r.accuracy == (tp + tn) / c.total());
      CHECK(*r.a_to_c == doctest::Approx(100.0 * *r.accuracy / 1.5));
    }
    if (r.f_score) {
      const double p = tp / (tp + fp), rec = tp / (tp + fn);
      CHECK(*r.f_score == doctest::Approx(2 * p * rec / (p + rec)));
    }
    for (const auto& v : {r.tpr, r.fpr, r.precision, r.f_score, r.accuracy}) {
      if (v) CHECK((*v >= 0.0 && *v <= 1.0));
    }
  }
}

TEST_CASE("ingest splits each class with a seeded shuffle") {
  const fs::path root = scratch("ingest");
  make_class_dirs(root, 100, 100);
  const DatasetManifest m = ingest(root, parse_ratios("80:20"), 7);
  CHECK(m.entries.size() == 200);
  CHECK(m.count(kFireClass, "train") + m.count(kNoFireClass, "train") == 160);
  CHECK(m.count(kFireClass, "val") + m.count(kNoFireClass, "val") == 40);
  CHECK(std::abs(static_cast<int>(m.count(kFireClass, "train")) - 80) <= 1);
  CHECK(std::abs(static_cast<int>(m.count(kNoFireClass, "val")) - 20) <= 1);
  CHECK(m.warnings.empty());

  // Replay: Fisher-Yates over the sorted per-class paths with the class seed.
  for (int label : {kFireClass, kNoFireClass}) {
    std::vector<std::string> paths;
    for (int i = 0; i < 100; ++i) {
      char file[48];
      std::snprintf(file, sizeof file, "%s/img_%03d.png", label_name(label), i);
      paths.push_back(file);
    }
    Rng rng(derive_seed(7, std::string("ingest/") + label_name(label)));
    for (std::size_t i = paths.size(); i > 1; --i) std::swap(paths[i - 1], paths[rng.below(i)]);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto it = std::find_if(m.entries.begin(), m.entries.end(),
                                   [&](const ManifestEntry& e) { return e.path == paths[i]; });
      REQUIRE(it != m.entries.end());
      CHECK(it->label == label);
      CHECK(it->split == (i < 80 ? "train" : "val"));
    }
  }

  const DatasetManifest again = ingest(root, parse_ratios("80:20"), 7);
  CHECK(again.entries == m.entries);
  const DatasetManifest other = ingest(root, parse_ratios("80:20"), 8);
  CHECK_FALSE(other.entries == m.entries);

  const DatasetManifest all_train = ingest(root, parse_ratios("100:0"), 7);
  CHECK(all_train.count(kFireClass, "val") + all_train.count(kNoFireClass, "val") == 0);
  CHECK(all_train.warnings.size() == 1);

  const DatasetManifest three = ingest(root, parse_ratios("70:20:10"), 7);
  CHECK(three.count(kFireClass, "test") == 10);

  const fs::path file = root / "manifest.csv";
  write_manifest(m, file);
  const DatasetManifest back = read_manifest(file);
  CHECK(back.entries == m.entries);
  CHECK(back.seed == 7);
  CHECK(back.root == m.root);

  const Dataset val = load_split(m, "val", 16, 16);
  CHECK(val.size() == 40);
  CHECK(val.images[0].height == 16);

  // cwd-relative root, manifest written somewhere else
  const DatasetManifest rel = ingest(fs::relative(root, fs::current_path()), parse_ratios("80:20"), 7);
  const fs::path elsewhere = scratch("ingest_manifest") / "nested" / "manifest.csv";
  fs::create_directories(elsewhere.parent_path());
  write_manifest(rel, elsewhere);
  CHECK(load_split(read_manifest(elsewhere), "train", 16, 16).size() == 160);

  const auto gone = std::find_if(m.entries.begin(), m.entries.end(),
                                 [](const ManifestEntry& e) { return e.split == "val"; });
  fs::remove(root / gone->path);
  CHECK_THROWS_AS(load_split(m, "val", 16, 16), LookupError);
}

TEST_CASE("ingest error handling") {
  const fs::path root = scratch("ingest_errors");
  make_class_dirs(root, 5, 5);
  std::ofstream(root / "fire" / "broken.png") << "not an image";
  const DatasetManifest m = ingest(root, parse_ratios("80:20"), 1);
  const auto it = std::find_if(m.entries.begin(), m.entries.end(),
                               [](const ManifestEntry& e) { return e.path == "fire/broken.png"; });
  REQUIRE(it != m.entries.end());
  CHECK(it->split == "skipped");
  REQUIRE(m.warnings.size() == 1);
  CHECK(m.warnings[0].find("broken.png") != std::string::npos);

  const fs::path empty = scratch("ingest_empty");
  make_class_dirs(empty, 3, 0);
  CHECK_THROWS_AS(ingest(empty, parse_ratios("80:20"), 1), ContractError);
  CHECK_THROWS_AS(ingest(scratch("ingest_missing"), parse_ratios("80:20"), 1), ContractError);
  CHECK_THROWS_AS(parse_ratios("80"), ContractError);

  const fs::path bad = empty / "bad.csv";
  std::ofstream(bad) << "# root=/x\n# seed=1\n# ratios=80:20:0\npath,label,split\nfire/a.png,smoke,train\n";
  try {
    read_manifest(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
}

TEST_CASE("synthetic data generator") {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  write_synth_dataset(a, 6, 48, 3);
  write_synth_dataset(b, 6, 48, 3);
  const auto fa = list_images(a / "fire"), na = list_images(a / "nofire");
  CHECK(fa.size() == 6);
  CHECK(na.size() == 6);
  for (const auto& dir : {"fire", "nofire"}) {
    for (const fs::path& p : list_images(a / dir)) CHECK(read_file(p) == read_file(b / dir / p.filename()));
  }

  const Dataset d = synth_dataset(20, 48, 5);
  CHECK(d.count(kFireClass) == 20);
  CHECK(d.count(kNoFireClass) == 20);

  // Circular mean hue of flame pixels lies in the red-to-yellow band.
  double sx = 0.0, sy = 0.0, sat = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 30; ++i) {
    const SynthFrame f = synth_frame(64, kFireClass, 9, i);
    CHECK(f.label == kFireClass);
    for (std::size_t p = 0; p < f.fire_mask.size(); ++p) {
      if (!f.fire_mask[p]) continue;
      const float* px = &f.image.data[p * 3];
      const double h = hue_of(px[0], px[1], px[2]) * M_PI / 180.0;
      sx += std::cos(h);
      sy += std::sin(h);
      sat += saturation_of(px[0], px[1], px[2]);
      ++n;
    }
    CHECK(std::count(f.fire_mask.begin(), f.fire_mask.end(), 1) > 0);
  }
  REQUIRE(n > 0);
  const double mean_hue = std::atan2(sy, sx) * 180.0 / M_PI;
  CHECK(mean_hue >= 0.0);
  CHECK(mean_hue <= 60.0);
  CHECK(sat / n > 0.5);
  CHECK(synth_frame(64, kNoFireClass, 9, 0).image == synth_frame(64, kNoFireClass, 9, 0).image);
  for (int i = 0; i < 10; ++i) {
    const SynthFrame f = synth_frame(64, kNoFireClass, 9, i);
    CHECK(std::count(f.fire_mask.begin(), f.fire_mask.end(), 1) == 0);
  }
}

TEST_CASE("audit and model construction") {
  const AuditReport v4 = audit("InceptionV4-OnFire", 96.0);
  CHECK(std::abs(v4.params.millions() - 7.18) <= 0.25 * 7.18);
  CHECK(*v4.a_to_c == doctest::Approx(96.0 / v4.params.millions()));
  CHECK(v4.text().find("InceptionV4-OnFire") != std::string::npos);
  CHECK(lines_of(v4.csv()).size() >= 2);
  CHECK_THROWS_AS(audit("InceptionV9"), LookupError);

  const ArchSpec s = model_spec(toy_options());
  CHECK(s.input_height == 64);
  CHECK(s.width_divisor == 4);
  CHECK(parse_norm("lrn") == Norm::lrn);
  CHECK_THROWS_AS(parse_norm("groupnorm"), ContractError);
}

TEST_CASE("model save and load") {
  const fs::path dir = scratch("save_load");
  auto net = make_network(toy_options(), 3);
  save_model(*net, capture(*net, 2, 99), dir / "m.ckpt");
  CHECK(fs::exists(dir / "m.ckpt.arch"));
  auto back = load_model(dir / "m.ckpt");
  CHECK(back->graph() == net->graph());
  const Image frame = synth_frame(80, kFireClass, 4, 0).image;
  const FrameVerdict a = classify_frame(*net, frame, "f"), b = classify_frame(*back, frame, "f");
  CHECK(a.score == b.score);
  CHECK(a.fire == b.fire);
  CHECK_THROWS_AS(load_model(dir / "missing.ckpt"), Error);
}

TEST_CASE("detection") {
  auto net = load_model(toy_model());
  const Dataset held_out = synth_dataset(30, 64, 77);
  const EvaluationReport report = evaluate_model(*net, held_out);
  CHECK(report.frames == 60);
  CHECK(*report.metrics.accuracy >= 0.8);
  CHECK_THROWS_AS(evaluate_model(*net, Dataset{}), ContractError);

  const Image black(64, 64, 3, 0.0f);
  const FrameVerdict v = classify_frame(*net, black, "black");
  CHECK_FALSE(v.fire);
  CHECK(v.score > 0.5f);
  CHECK(v.score <= 1.0f);
  const FrameVerdict again = classify_frame(*net, black, "black");
  CHECK(verdict_json(v) == verdict_json(again));

  const fs::path dir = scratch("detect");
  for (int i = 0; i < 7; ++i) {
    save_image(synth_frame(90, i % 2 ? kFireClass : kNoFireClass, 8, i).image,
               dir / ("frame_" + std::to_string(i) + ".png"));
  }
  std::vector<FrameVerdict> seen;
  CHECK(detect(*net, dir, {}, [&](const FrameVerdict& fv) { seen.push_back(fv); }) == 7);
  REQUIRE(seen.size() == 7);
  for (const FrameVerdict& fv : seen) {
    CHECK_FALSE(fv.error);
    CHECK(fv.score >= 0.5f);
  }
  // Decoded-from-disk verdicts equal direct calls on the decoded images.
  const FrameVerdict direct = classify_frame(*net, load_image(dir / "frame_3.png"), seen[3].frame_id);
  CHECK(verdict_json(direct) == verdict_json(seen[3]));

  std::ofstream(dir / "frame_9.png") << "garbage";
  seen.clear();
  CHECK(detect(*net, dir, {}, [&](const FrameVerdict& fv) { seen.push_back(fv); }) == 8);
  CHECK(std::count_if(seen.begin(), seen.end(), [](const FrameVerdict& fv) { return fv.error; }) == 1);
  seen.clear();
  detect(*net, dir / "frame_9.png", {}, [&](const FrameVerdict& fv) { seen.push_back(fv); });
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].error);
  CHECK(verdict_json(seen[0]).find("\"error\"") != std::string::npos);
}

TEST_CASE("video detection visits every sampled frame") {
  auto net = load_model(toy_model());
  const fs::path file = scratch("video") / "clip.avi";
  {
    cv::VideoWriter writer(file.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), 10.0, cv::Size(64, 64));
    if (!writer.isOpened()) {
      MESSAGE("no video writer available; skipping");
      return;
    }
    for (int i = 0; i < 9; ++i) writer.write(cv::Mat(64, 64, CV_8UC3, cv::Scalar(i * 20, 40, 200)));
  }
  std::vector<FrameVerdict> seen;
  CHECK(detect(*net, file, {}, [&](const FrameVerdict& v) { seen.push_back(v); }) == 9);
  seen.clear();
  DetectOptions skip;
  skip.frame_skip = 2;
  CHECK(detect(*net, file, skip, [&](const FrameVerdict& v) { seen.push_back(v); }) == 3);
  REQUIRE(seen.size() == 3);
  CHECK(seen[1].frame_id.find("#3") != std::string::npos);
}

TEST_CASE("bench harness") {
  auto net = make_network(toy_options(), 1);
  std::vector<Image> frames;
  for (int i = 0; i < 10; ++i) frames.push_back(synth_frame(64, i % 2, 3, i).image);
  const BenchReport r = bench_fps(*net, frames, 2, 3);
  CHECK(r.fps > 0.0);
  CHECK(r.p95_ms >= r.p50_ms);
  CHECK(r.model == "InceptionV3-OnFire");
  CHECK(r.input_height == 64);
  CHECK(r.threads >= 1);
  CHECK(r.fps_per_repetition.size() == 3);
  CHECK(r.json().find("\"threads\"") != std::string::npos);
  CHECK_THROWS_AS(bench_fps(*net, {}, 1, 1), ContractError);
}

TEST_CASE("localisation through the network") {
  auto net = load_model(toy_model());
  const Image frame = synth_frame(96, kFireClass, 5, 1).image;
  SlicParams p;
  p.k = 12;
  const Localization loc = localize_frame(*net, frame, p, 3);
  CHECK(static_cast<int>(loc.verdicts.size()) == loc.map.count());
  const fs::path dir = scratch("localize");
  write_localization(loc, dir, "frame");
  CHECK(fs::exists(dir / "frame_overlay.png"));
  int h = 0, w = 0;
  CHECK(load_label_image(dir / "frame_labels.png", &h, &w) == loc.map.labels);
  CHECK(lines_of(read_file(dir / "frame_regions.txt")).size() >= static_cast<std::size_t>(loc.map.count()));

  auto mismatched = make_network(ModelOptions{"InceptionV3-OnFire", 80, 4, {}}, 1);
  CHECK_THROWS_AS(localize(frame, network_classifier(*mismatched), p, 64), ContractError);
}

TEST_CASE("command line agrees with library calls") {
  const fs::path dir = scratch("cli");
  const fs::path frames = dir / "frames";
  fs::create_directories(frames);
  for (int i = 0; i < 4; ++i) {
    save_image(synth_frame(70, i % 2, 12, i).image, frames / ("f" + std::to_string(i) + ".png"));
  }
  const std::string model = toy_model().string();

  REQUIRE(run_cli("detect --model " + model + " --input " + frames.string() + " --out " +
                  (dir / "v.jsonl").string()) == 0);
  auto net = load_model(model);
  std::string expected;
  detect(*net, frames, {}, [&](const FrameVerdict& v) { expected += verdict_json(v) + "\n"; });
  CHECK(read_file(dir / "v.jsonl") == expected);

  REQUIRE(run_cli("localize --model " + model + " --input " + (frames / "f1.png").string() + " --out-dir " +
                  (dir / "loc").string() + " --k 10") == 0);
  SlicParams p;
  p.k = 10;
  const Localization lib = localize_frame(*net, load_image(frames / "f1.png"), p, 0);
  write_localization(lib, dir / "lib", "f1");
  CHECK(read_file(dir / "loc" / "f1_regions.txt") == read_file(dir / "lib" / "f1_regions.txt"));
  CHECK(read_file(dir / "loc" / "f1_labels.png") == read_file(dir / "lib" / "f1_labels.png"));

  REQUIRE(run_cli("ingest --root " + (dir / "data").string() + " --seed 3 --out " + (dir / "m.csv").string()) != 0);
  make_class_dirs(dir / "data", 10, 10);
  REQUIRE(run_cli("ingest --root " + (dir / "data").string() + " --seed 3 --out " + (dir / "m.csv").string()) == 0);
  CHECK(read_manifest(dir / "m.csv").entries == ingest(dir / "data", SplitRatios{}, 3).entries);

  CHECK(run_cli("audit --arch NoSuchNet") == 2);
  CHECK(run_cli("arch list") == 0);
}
