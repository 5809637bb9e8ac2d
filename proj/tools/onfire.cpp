// onfire: command-line front end for dataset preparation, training,
// full-frame detection, superpixel localisation, evaluation and auditing.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "onfire/errors.hpp"
#include "onfire/image_io.hpp"
#include "onfire/manifest.hpp"
#include "onfire/parallel.hpp"
#include "onfire/pipeline.hpp"
#include "onfire/synth.hpp"
#include "onfire/trainer.hpp"

namespace fs = std::filesystem;
using namespace onfire;

namespace {

struct ModelFlags {
  std::string arch = "InceptionV3-OnFire";
  int input_size = 224;
  int width_divisor = 1;
  std::string norm;

  void add(CLI::App* cmd) {
    cmd->add_option("--arch", arch, "Architecture name (see 'arch list')");
    cmd->add_option("--input-size", input_size, "Square input extent")->check(CLI::PositiveNumber);
    cmd->add_option("--width-divisor", width_divisor, "Divide every filter count by this")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--norm", norm, "batch_norm, lrn or none (default per architecture)");
  }
  ModelOptions options() const {
    ModelOptions o{arch, input_size, width_divisor, std::nullopt};
    if (!norm.empty()) o.norm = parse_norm(norm);
    return o;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"onfire - non-temporal fire detection and superpixel localisation"};
  app.set_config("--config", "", "INI-style file mirroring the command-line flags");
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (1 keeps runs bit-reproducible)")
      ->check(CLI::PositiveNumber);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a split manifest from fire/ and nofire/");
  std::string ingest_root, ingest_out = "manifest.csv", ratio_text = "80:20";
  std::uint64_t ingest_seed = 0;
  ingest_cmd->add_option("--root", ingest_root, "Dataset root")->required()->envname("ONFIRE_DATA");
  ingest_cmd->add_option("--ratio", ratio_text, "train:val[:test] ratio");
  ingest_cmd->add_option("--seed", ingest_seed, "Split seed");
  ingest_cmd->add_option("--out", ingest_out, "Manifest path")->envname("ONFIRE_MANIFEST");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fire/nofire image set");
  std::string synth_out;
  int synth_n = 500, synth_size = 224;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required()->envname("ONFIRE_DATA");
  synth_cmd->add_option("--n", synth_n, "Images per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--size", synth_size, "Image extent")->check(CLI::Range(8, 4096));
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a classifier");
  ModelFlags train_model;
  train_model.add(train_cmd);
  TrainConfig cfg;
  std::string manifest_path, ckpt_out = "model.ckpt", log_path, init_from, optimizer = "sgd_momentum";
  int synth_train = 0;
  double stop_at = 0.0;
  train_cmd->add_option("--manifest", manifest_path, "Manifest from 'ingest'")
      ->envname("ONFIRE_MANIFEST");
  train_cmd->add_option("--synthetic", synth_train,
                        "Train on N generated images per class instead of a manifest");
  train_cmd->add_option("--optimizer", optimizer, "sgd_momentum or rmsprop");
  train_cmd->add_option("--lr", cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--epochs", cfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--momentum", cfg.momentum, "SGD momentum");
  train_cmd->add_option("--rms-decay", cfg.rms_decay, "RMSProp decay");
  train_cmd->add_option("--rms-epsilon", cfg.rms_epsilon, "RMSProp epsilon");
  train_cmd->add_option("--smoothing", cfg.label_smoothing, "Label smoothing");
  train_cmd->add_option("--seed", cfg.seed, "Seed for initialisation and shuffling");
  train_cmd->add_flag("--hflip", cfg.horizontal_flip, "Random horizontal flips");
  train_cmd->add_option("--stop-at-accuracy", stop_at, "Stop once train accuracy reaches this");
  train_cmd->add_option("--out", ckpt_out, "Checkpoint path")->envname("ONFIRE_CHECKPOINT");
  train_cmd->add_option("--log", log_path, "CSV training log (appended)")->envname("ONFIRE_LOG");
  train_cmd->add_option("--init-from", init_from,
                        "Transfer-initialise from this checkpoint (head re-initialised)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a manifest split");
  std::string eval_model, eval_manifest, eval_split = "val", eval_json, eval_csv;
  int eval_synth = 0;
  std::uint64_t eval_seed = 1;
  eval_cmd->add_option("--model", eval_model, "Checkpoint")->required()->envname("ONFIRE_CHECKPOINT");
  eval_cmd->add_option("--manifest", eval_manifest, "Manifest")->envname("ONFIRE_MANIFEST");
  eval_cmd->add_option("--split", eval_split, "train, val or test");
  eval_cmd->add_option("--synthetic", eval_synth, "Score on N generated images per class");
  eval_cmd->add_option("--synthetic-seed", eval_seed, "Seed for --synthetic");
  eval_cmd->add_option("--json", eval_json, "Write the report as JSON");
  eval_cmd->add_option("--csv", eval_csv, "Write the report as CSV");

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Full-frame fire/nofire verdicts");
  std::string det_model, det_input, det_out;
  DetectOptions det_opts;
  detect_cmd->add_option("--model", det_model, "Checkpoint")->required()->envname("ONFIRE_CHECKPOINT");
  detect_cmd->add_option("--input", det_input, "Image, video or directory")->required();
  detect_cmd->add_option("--out", det_out, "JSON-lines output file (default stdout)");
  detect_cmd->add_option("--frame-skip", det_opts.frame_skip, "Skip this many frames between samples");

  // localize
  auto* loc_cmd = app.add_subcommand("localize", "Superpixel fire localisation with overlays");
  std::string loc_model, loc_input, loc_out = "localize_out";
  SlicParams slic;
  loc_cmd->add_option("--model", loc_model, "Superpixel classifier checkpoint")
      ->required()->envname("ONFIRE_CHECKPOINT");
  loc_cmd->add_option("--input", loc_input, "Image or directory of images")->required();
  loc_cmd->add_option("--out-dir", loc_out, "Overlay, label map and region index directory");
  loc_cmd->add_option("--k", slic.k, "Target superpixel count");
  loc_cmd->add_option("--compactness", slic.compactness, "SLIC compactness m");
  loc_cmd->add_option("--iters", slic.max_iters, "SLIC iterations");
  loc_cmd->add_option("--min-fraction", slic.connectivity_min_fraction,
                      "Smallest kept component, as a fraction of N/k");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Frames-per-second benchmark");
  std::string bench_model;
  ModelFlags bench_arch;
  bench_arch.add(bench_cmd);
  int bench_frames = 100, bench_warmup = 5, bench_reps = 3;
  bool bench_json = false;
  bench_cmd->add_option("--model", bench_model, "Checkpoint (else random weights for --arch)")
      ->envname("ONFIRE_CHECKPOINT");
  bench_cmd->add_option("--frames", bench_frames, "Synthetic frames")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bench_warmup, "Warm-up frames");
  bench_cmd->add_option("--reps", bench_reps, "Repetitions")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--json", bench_json, "Print JSON");

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "Parameter count and A:C for an architecture");
  ModelFlags audit_model;
  audit_model.add(audit_cmd);
  double audit_accuracy = -1.0;
  std::string audit_csv;
  audit_cmd->add_option("--accuracy", audit_accuracy, "Accuracy in percent for A:C");
  audit_cmd->add_option("--csv", audit_csv, "Per-layer CSV output");

  // arch
  auto* arch_cmd = app.add_subcommand("arch", "Inspect the architecture catalog");
  arch_cmd->require_subcommand(1);
  auto* arch_list = arch_cmd->add_subcommand("list", "List architecture names");
  auto* arch_show = arch_cmd->add_subcommand("show", "Print an architecture's graph manifest");
  std::string show_name;
  int show_size = 224;
  arch_show->add_option("name", show_name, "Architecture")->required();
  arch_show->add_option("--input-size", show_size, "Square input extent");

  CLI11_PARSE(app, argc, argv);

  try {
    set_num_threads(threads);

    if (*ingest_cmd) {
      const DatasetManifest m = ingest(ingest_root, parse_ratios(ratio_text), ingest_seed);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
      write_manifest(m, ingest_out);
      std::cout << m.summary() << "manifest written to " << ingest_out << "\n";
    } else if (*synth_cmd) {
      write_synth_dataset(synth_out, synth_n, synth_size, synth_seed);
      std::cout << "wrote " << 2 * synth_n << " images to " << synth_out << "\n";
    } else if (*train_cmd) {
      cfg.optimizer = parse_optimizer(optimizer);
      if (stop_at > 0.0) cfg.stop_at_train_accuracy = stop_at;
      const ModelOptions mo = train_model.options();
      cfg.normalization = model_spec(mo).resolved_norm();
      auto network = make_network(mo, cfg.seed);
      if (!init_from.empty()) {
        const TransferReport tr = transfer_init(*network, load_checkpoint(init_from),
                                                TransferStrategy::copy_compatible_reinit_head,
                                                cfg.seed);
        std::cout << "transfer: " << tr.copied.size() << " layers copied, "
                  << tr.reinitialized.size() << " re-initialised:";
        for (const auto& n : tr.reinitialized) std::cout << " " << n;
        std::cout << "\n";
      }
      Dataset train_set, val_set;
      if (synth_train > 0) {
        train_set = synth_dataset(synth_train, mo.input_size, cfg.seed);
        val_set = synth_dataset(std::max(1, synth_train / 4), mo.input_size, cfg.seed + 1000003);
      } else {
        if (manifest_path.empty()) throw ContractError("train needs --manifest or --synthetic");
        const DatasetManifest m = read_manifest(manifest_path);
        train_set = load_split(m, "train", mo.input_size, mo.input_size);
        val_set = load_split(m, "val", mo.input_size, mo.input_size);
      }
      std::ofstream log;
      if (!log_path.empty()) {
        const bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
        log.open(log_path, std::ios::app);
        if (fresh) log << "epoch,split,loss,accuracy\n";
      }
      const TrainResult result =
          train(*network, train_set, val_set.empty() ? nullptr : &val_set, cfg,
                [&](const EpochRecord& r) {
                  std::printf("epoch %3d  %-5s loss %.4f  accuracy %.4f\n", r.epoch, r.split.c_str(),
                              r.loss, r.accuracy);
                  std::fflush(stdout);
                  if (log.is_open()) log << format_log_csv({r}, false) << std::flush;
                });
      save_model(*network, result.checkpoint, ckpt_out);
      if (result.diverged) {
        std::cerr << "error: loss diverged; saved the last good checkpoint (epoch "
                  << result.checkpoint.epoch << ") to " << ckpt_out << "\n";
        return 3;
      }
      std::cout << "checkpoint written to " << ckpt_out << "\n";
    } else if (*eval_cmd) {
      auto network = load_model(eval_model);
      const int size = network->input_spec().height;
      Dataset data;
      if (eval_synth > 0) {
        data = synth_dataset(eval_synth, size, eval_seed);
      } else {
        if (eval_manifest.empty()) throw ContractError("evaluate needs --manifest or --synthetic");
        data = load_split(read_manifest(eval_manifest), eval_split, size, network->input_spec().width);
      }
      const EvaluationReport report = evaluate_model(*network, data);
      std::cout << metrics_table(report.metrics);
      if (!eval_json.empty()) write_text(eval_json, metrics_json(report.metrics) + "\n");
      if (!eval_csv.empty()) write_text(eval_csv, metrics_csv(report.metrics));
    } else if (*detect_cmd) {
      auto network = load_model(det_model);
      std::ofstream out;
      if (!det_out.empty()) {
        out.open(det_out);
        if (!out) throw Error("cannot write '" + det_out + "'");
      }
      std::ostream& sink = det_out.empty() ? std::cout : out;
      const std::size_t n = detect(*network, det_input, det_opts,
                                   [&](const FrameVerdict& v) { sink << verdict_json(v) << "\n"; });
      if (!det_out.empty()) std::cout << n << " verdicts written to " << det_out << "\n";
    } else if (*loc_cmd) {
      auto network = load_model(loc_model);
      std::vector<fs::path> inputs =
          fs::is_directory(loc_input) ? list_images(loc_input) : std::vector<fs::path>{loc_input};
      int frame = 0;
      for (const fs::path& p : inputs) {
        const Localization result = localize_frame(*network, load_image(p), slic, frame++);
        write_localization(result, loc_out, p.stem().string());
        std::cout << p.string() << ": " << result.map.count() << " regions, "
                  << result.fire_regions() << " fire\n";
      }
    } else if (*bench_cmd) {
      std::unique_ptr<Network> network =
          bench_model.empty() ? make_network(bench_arch.options()) : load_model(bench_model);
      std::vector<Image> frames;
      const int size = network->input_spec().height;
      for (int i = 0; i < bench_frames; ++i) {
        frames.push_back(synth_frame(size, i % 2 ? kFireClass : kNoFireClass, 7, i / 2).image);
      }
      const BenchReport report = bench_fps(*network, frames, bench_warmup, bench_reps);
      std::cout << (bench_json ? report.json() + "\n" : report.text());
    } else if (*audit_cmd) {
      const std::optional<double> acc =
          audit_accuracy >= 0.0 ? std::optional<double>(audit_accuracy) : std::nullopt;
      const AuditReport report = audit(model_spec(audit_model.options()), acc);
      std::cout << report.text();
      if (!audit_csv.empty()) write_text(audit_csv, report.csv());
    } else if (*arch_cmd) {
      if (*arch_list) {
        for (const auto& name : catalog_names()) std::cout << name << "\n";
      } else if (*arch_show) {
        const Graph g = build_arch(show_name, show_size, show_size);
        std::cout << serialize_arch(g);
        const ParamReport p = count_parameters(g);
        std::cout << "# parameters " << p.total << " (" << p.millions() << "M)\n";
      }
    }
  } catch (const LookupError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
