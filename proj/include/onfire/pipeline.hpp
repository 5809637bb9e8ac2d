#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "onfire/checkpoint.hpp"
#include "onfire/dataset.hpp"
#include "onfire/metrics.hpp"
#include "onfire/network.hpp"
#include "onfire/slic.hpp"
#include "onfire/zoo.hpp"

namespace onfire {

struct ModelOptions {
  std::string arch = "InceptionV3-OnFire";
  int input_size = 224;
  int width_divisor = 1;
  std::optional<Norm> norm;
};

Norm parse_norm(const std::string& text);

// Catalog entry with the input size, width divisor and normalisation applied.
ArchSpec model_spec(const ModelOptions& options);
std::unique_ptr<Network> make_network(const ModelOptions& options, std::uint64_t seed = 0);

// Writes the checkpoint and, next to it, "<path>.arch" holding the graph
// manifest so the exact topology can be rebuilt.
void save_model(const Network& network, const Checkpoint& checkpoint,
                const std::filesystem::path& path);
// Rebuilds from the sidecar manifest (or the catalog at 224x224 when it is
// absent) and restores the weights.
std::unique_ptr<Network> load_model(const std::filesystem::path& path);

struct FrameVerdict {
  std::string frame_id;
  bool fire = false;
  float score = 0.0f;  // softmax probability of the predicted class
  bool error = false;
  std::string message;
};

std::string verdict_json(const FrameVerdict& verdict);

// Letterboxes to the network input and classifies.
FrameVerdict classify_frame(Network& network, const Image& frame, const std::string& id);

struct DetectOptions {
  int frame_skip = 0;  // process every (frame_skip + 1)-th video frame
};

using VerdictSink = std::function<void(const FrameVerdict&)>;

// input: an image, a video or a directory of images. Every frame is judged
// independently; undecodable frames yield an error verdict.
std::size_t detect(Network& network, const std::filesystem::path& input,
                   const DetectOptions& options, const VerdictSink& sink);

struct EvaluationReport {
  MetricsReport metrics;
  std::size_t frames = 0;
};

EvaluationReport evaluate_model(Network& network, const Dataset& data, int batch_size = 32);

struct BenchReport {
  std::string model;
  int input_height = 0;
  int input_width = 0;
  int threads = 1;
  int frames = 0;
  int warmup = 0;
  int repetitions = 0;
  double fps = 0.0;  // median over repetitions
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::vector<double> fps_per_repetition;

  std::string json() const;
  std::string text() const;
};

// Frames are preloaded; timing covers letterboxing plus inference.
BenchReport bench_fps(Network& network, const std::vector<Image>& frames, int warmup,
                      int repetitions);

struct AuditReport {
  std::string arch;
  int input_height = 224;
  int input_width = 224;
  ParamReport params;
  std::optional<double> accuracy_percent;
  std::optional<double> a_to_c;

  std::string text() const;
  std::string csv() const;
};

AuditReport audit(const ArchSpec& spec, std::optional<double> accuracy_percent = std::nullopt);
AuditReport audit(const std::string& arch_name,
                  std::optional<double> accuracy_percent = std::nullopt);

// Wraps a network as a patch classifier; patches must match its input size.
PatchClassifier network_classifier(Network& network);

Localization localize_frame(Network& network, const Image& frame, const SlicParams& params,
                            int frame_id = 0);

// <stem>_overlay.png, <stem>_labels.png (16-bit) and <stem>_regions.txt.
void write_localization(const Localization& result, const std::filesystem::path& dir,
                        const std::string& stem);

// dir/fire/fire_NNNNN.png and dir/nofire/nofire_NNNNN.png.
void write_synth_dataset(const std::filesystem::path& dir, int n_per_class, int size,
                         std::uint64_t seed);

}  // namespace onfire
