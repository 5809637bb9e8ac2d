#include "onfire/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <opencv2/videoio.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "onfire/errors.hpp"
#include "onfire/image_io.hpp"
#include "onfire/parallel.hpp"
#include "onfire/synth.hpp"
#include "onfire/trainer.hpp"

namespace onfire {

namespace fs = std::filesystem;

Norm parse_norm(const std::string& text) {
  if (text == "batch_norm" || text == "bn") return Norm::batch_norm;
  if (text == "lrn") return Norm::lrn;
  if (text == "none") return Norm::none;
  throw ContractError("unknown normalization '" + text + "' (expected batch_norm, lrn or none)");
}

ArchSpec model_spec(const ModelOptions& options) {
  ArchSpec spec = find_arch(options.arch);
  spec.input_height = options.input_size;
  spec.input_width = options.input_size;
  spec.width_divisor = options.width_divisor;
  if (options.norm) spec.norm = options.norm;
  return spec;
}

std::unique_ptr<Network> make_network(const ModelOptions& options, std::uint64_t seed) {
  return std::make_unique<Network>(build_graph(model_spec(options)), seed);
}

void save_model(const Network& network, const Checkpoint& checkpoint, const fs::path& path) {
  save_checkpoint(checkpoint, path);
  std::ofstream out(path.string() + ".arch");
  if (!out) throw Error("cannot write '" + path.string() + ".arch'");
  out << serialize_arch(network.graph());
}

std::unique_ptr<Network> load_model(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const fs::path sidecar = path.string() + ".arch";
  Graph graph;
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    graph = deserialize_arch(text);
  } else {
    graph = build_arch(ckpt.architecture);
  }
  if (graph.name != ckpt.architecture) {
    throw ContractError("checkpoint is for '" + ckpt.architecture + "' but its manifest describes '" +
                        graph.name + "'");
  }
  auto network = std::make_unique<Network>(std::move(graph));
  restore(*network, ckpt);
  return network;
}

std::string verdict_json(const FrameVerdict& v) {
  std::string id;
  for (char c : v.frame_id) {
    if (c == '"' || c == '\\') id.push_back('\\');
    id.push_back(c);
  }
  std::ostringstream out;
  out << "{\"frame\":\"" << id << "\",\"class\":\"" << (v.fire ? "fire" : "nofire")
      << "\",\"score\":" << v.score;
  if (v.error) out << ",\"error\":true,\"message\":\"" << v.message << "\"";
  out << "}";
  return out.str();
}

namespace {

float fire_probability(Network& network, const Image& input) {
  const Tensor probs = network.forward(to_batch({&input}), Mode::infer);
  return probs[kFireClass];
}

Image prepare(const Network& network, const Image& frame) {
  const InputSpec& in = network.input_spec();
  return letterbox(frame, in.height, in.width);
}

FrameVerdict error_verdict(const std::string& id, const std::string& message) {
  FrameVerdict v;
  v.frame_id = id;
  v.error = true;
  v.message = message;
  return v;
}

Image from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<unsigned char>(y);
    for (int i = 0; i < rgb.cols * 3; ++i) {
      img.data[static_cast<std::size_t>(y) * rgb.cols * 3 + i] = row[i] / 255.0f;
    }
  }
  return img;
}

double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * values.size()));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

FrameVerdict classify_frame(Network& network, const Image& frame, const std::string& id) {
  const float p = fire_probability(network, prepare(network, frame));
  FrameVerdict v;
  v.frame_id = id;
  v.fire = p > 0.5f;
  v.score = v.fire ? p : 1.0f - p;
  return v;
}

std::size_t detect(Network& network, const fs::path& input, const DetectOptions& options,
                   const VerdictSink& sink) {
  if (options.frame_skip < 0) throw ContractError("frame_skip must be >= 0");
  std::size_t emitted = 0;
  auto emit = [&](const FrameVerdict& v) {
    ++emitted;
    if (sink) sink(v);
  };
  auto one_image = [&](const fs::path& p) {
    const std::string id = p.string();
    if (auto img = try_load_image(p)) {
      emit(classify_frame(network, *img, id));
    } else {
      emit(error_verdict(id, "undecodable image"));
    }
  };
  if (fs::is_directory(input)) {
    for (const fs::path& p : list_images(input)) one_image(p);
  } else if (is_video_file(input)) {
    cv::VideoCapture capture(input.string());
    if (!capture.isOpened()) {
      emit(error_verdict(input.string(), "cannot open video"));
      return emitted;
    }
    cv::Mat frame;
    for (long index = 0; capture.read(frame); ++index) {
      if (index % (options.frame_skip + 1) != 0) continue;
      const std::string id = input.string() + "#" + std::to_string(index);
      if (frame.empty() || frame.channels() != 3) {
        emit(error_verdict(id, "undecodable frame"));
      } else {
        emit(classify_frame(network, from_bgr(frame), id));
      }
    }
  } else if (fs::exists(input)) {
    one_image(input);
  } else {
    throw ContractError("input '" + input.string() + "' does not exist");
  }
  return emitted;
}

EvaluationReport evaluate_model(Network& network, const Dataset& data, int batch_size) {
  if (data.empty()) throw ContractError("evaluation split is empty");
  const EvalResult r = evaluate_dataset(network, data, batch_size);
  EvaluationReport report;
  report.frames = data.size();
  report.metrics = compute_metrics(confusion_from(data.labels, r.predictions),
                                   count_parameters(network.graph()).millions());
  return report;
}

std::string BenchReport::json() const {
  std::ostringstream out;
  out << "{\"model\":\"" << model << "\",\"input\":[" << input_height << ',' << input_width
      << "],\"threads\":" << threads << ",\"frames\":" << frames << ",\"warmup\":" << warmup
      << ",\"repetitions\":" << repetitions << ",\"fps\":" << fps << ",\"p50_ms\":" << p50_ms
      << ",\"p95_ms\":" << p95_ms << "}";
  return out.str();
}

std::string BenchReport::text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "model      %s\ninput      %dx%d\nthreads    %d\nframes     %d x %d repetitions "
                "(%d warmup)\nfps        %.2f (median)\nlatency    p50 %.2f ms, p95 %.2f ms\n",
                model.c_str(), input_height, input_width, threads, frames, repetitions, warmup,
                fps, p50_ms, p95_ms);
  return buf;
}

BenchReport bench_fps(Network& network, const std::vector<Image>& frames, int warmup,
                      int repetitions) {
  if (frames.empty()) throw ContractError("bench needs at least one frame");
  if (warmup < 0 || repetitions < 1) throw ContractError("bench needs warmup >= 0, repetitions >= 1");
  using clock = std::chrono::steady_clock;
  BenchReport report;
  report.model = network.name();
  report.input_height = network.input_spec().height;
  report.input_width = network.input_spec().width;
  report.threads = num_threads();
  report.frames = static_cast<int>(frames.size());
  report.warmup = warmup;
  report.repetitions = repetitions;
  for (int i = 0; i < warmup; ++i) {
    fire_probability(network, prepare(network, frames[i % frames.size()]));
  }
  std::vector<double> latencies;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto start = clock::now();
    for (const Image& f : frames) {
      const auto t0 = clock::now();
      fire_probability(network, prepare(network, f));
      latencies.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
    const double seconds = std::chrono::duration<double>(clock::now() - start).count();
    report.fps_per_repetition.push_back(static_cast<double>(frames.size()) /
                                        std::max(seconds, 1e-9));
  }
  report.fps = median(report.fps_per_repetition);
  report.p50_ms = percentile(latencies, 0.50);
  report.p95_ms = percentile(latencies, 0.95);
  return report;
}

AuditReport audit(const ArchSpec& spec, std::optional<double> accuracy_percent) {
  AuditReport r;
  r.arch = spec.name;
  r.input_height = spec.input_height;
  r.input_width = spec.input_width;
  r.params = count_parameters(build_graph(spec));
  r.accuracy_percent = accuracy_percent;
  if (accuracy_percent) r.a_to_c = accuracy_to_complexity(*accuracy_percent, r.params.millions());
  return r;
}

AuditReport audit(const std::string& arch_name, std::optional<double> accuracy_percent) {
  return audit(find_arch(arch_name), accuracy_percent);
}

std::string AuditReport::text() const {
  std::ostringstream out;
  std::size_t width = 5;
  for (const auto& l : params.per_layer) width = std::max(width, l.name.size());
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %-12s %12s %12s\n", static_cast<int>(width), "layer", "kind",
                "trainable", "running");
  out << buf;
  for (const auto& l : params.per_layer) {
    if (l.trainable == 0 && l.non_trainable == 0) continue;
    std::snprintf(buf, sizeof buf, "%-*s  %-12s %12lld %12lld\n", static_cast<int>(width),
                  l.name.c_str(), std::string(kind_name(l.kind)).c_str(),
                  static_cast<long long>(l.trainable), static_cast<long long>(l.non_trainable));
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "\narchitecture  %s (%dx%d input)\nC             %lld (%.3fM)\n",
                arch.c_str(), input_height, input_width, static_cast<long long>(params.total),
                params.millions());
  out << buf;
  if (accuracy_percent && a_to_c) {
    std::snprintf(buf, sizeof buf, "A             %.1f%%\nA:C           %.2f\n", *accuracy_percent,
                  *a_to_c);
    out << buf;
  }
  return out.str();
}

std::string AuditReport::csv() const {
  std::ostringstream out;
  out << "layer,kind,trainable,running\n";
  for (const auto& l : params.per_layer) {
    out << l.name << ',' << kind_name(l.kind) << ',' << l.trainable << ',' << l.non_trainable << '\n';
  }
  out << "total,," << params.total << ',' << params.non_trainable << '\n';
  return out.str();
}

PatchClassifier network_classifier(Network& network) {
  return [&network](const Image& patch) {
    const InputSpec& in = network.input_spec();
    if (patch.height != in.height || patch.width != in.width || patch.channels != in.channels) {
      throw ContractError("patch is " + std::to_string(patch.height) + "x" +
                          std::to_string(patch.width) + " but the classifier expects " +
                          std::to_string(in.height) + "x" + std::to_string(in.width));
    }
    return fire_probability(network, patch);
  };
}

Localization localize_frame(Network& network, const Image& frame, const SlicParams& params,
                            int frame_id) {
  const InputSpec& in = network.input_spec();
  if (in.height != in.width) throw ContractError("superpixel classifier input must be square");
  return localize(frame, network_classifier(network), params, in.height, frame_id);
}

void write_localization(const Localization& result, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  save_image(result.overlay, dir / (stem + "_overlay.png"));
  save_label_image(result.map.labels, result.map.height, result.map.width,
                   dir / (stem + "_labels.png"));
  std::ofstream out(dir / (stem + "_regions.txt"));
  out << "label pixels min_x min_y max_x max_y centroid_x centroid_y class score\n";
  char buf[256];
  for (const auto& v : result.verdicts) {
    const Region& r = result.map.regions[v.label];
    std::snprintf(buf, sizeof buf, "%d %d %d %d %d %d %.2f %.2f %s %.4f\n", r.label, r.pixel_count,
                  r.min_x, r.min_y, r.max_x, r.max_y, r.centroid_x, r.centroid_y,
                  v.fire ? "fire" : "nofire", v.score);
    out << buf;
  }
}

void write_synth_dataset(const fs::path& dir, int n_per_class, int size, std::uint64_t seed) {
  if (n_per_class < 1) throw ContractError("n_per_class must be >= 1");
  for (int label : {kFireClass, kNoFireClass}) {
    const std::string name = label == kFireClass ? "fire" : "nofire";
    fs::create_directories(dir / name);
    for (int i = 0; i < n_per_class; ++i) {
      char file[64];
      std::snprintf(file, sizeof file, "%s_%05d.png", name.c_str(), i);
      save_image(synth_frame(size, label, seed, i).image, dir / name / file);
    }
  }
}

}  // namespace onfire
