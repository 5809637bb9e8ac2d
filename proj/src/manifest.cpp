#include "onfire/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "onfire/errors.hpp"
#include "onfire/image_io.hpp"
#include "onfire/random.hpp"

namespace onfire {

namespace fs = std::filesystem;

SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ContractError("bad split ratio '" + text + "' (expected e.g. 80:20 or 70:20:10)");
    }
  }
  if (parts.size() < 2 || parts.size() > 3) {
    throw ContractError("bad split ratio '" + text + "' (expected 2 or 3 parts)");
  }
  SplitRatios r{parts[0], parts[1], parts.size() == 3 ? parts[2] : 0.0};
  if (r.train < 0 || r.val < 0 || r.test < 0 || r.train + r.val + r.test <= 0) {
    throw ContractError("split ratios must be non-negative with a positive sum");
  }
  return r;
}

const char* label_name(int label) { return label == kFireClass ? "fire" : "nofire"; }

int parse_label(const std::string& text) {
  if (text == "fire") return kFireClass;
  if (text == "nofire") return kNoFireClass;
  throw ContractError("unknown label '" + text + "'");
}

std::size_t DatasetManifest::count(int label, const std::string& split) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
    return e.label == label && e.split == split;
  }));
}

std::string DatasetManifest::summary() const {
  std::ostringstream out;
  out << "split    fire  nofire\n";
  for (const char* s : {"train", "val", "test", "skipped"}) {
    char line[64];
    std::snprintf(line, sizeof line, "%-7s %5zu %7zu\n", s, count(kFireClass, s),
                  count(kNoFireClass, s));
    out << line;
  }
  return out.str();
}

namespace {

bool decodable(const fs::path& p) { return try_load_image(p).has_value(); }

}  // namespace

DatasetManifest ingest(const fs::path& root, const SplitRatios& ratios, std::uint64_t seed,
                       ReadableCheck readable) {
  if (!readable) readable = decodable;
  DatasetManifest m;
  m.root = root;
  m.ratios = ratios;
  m.seed = seed;
  const double sum = ratios.train + ratios.val + ratios.test;
  if (ratios.val <= 0.0) m.warnings.push_back("validation split is empty (ratio has no val share)");

  for (int label : {kFireClass, kNoFireClass}) {
    const fs::path dir = root / label_name(label);
    if (!fs::is_directory(dir)) {
      throw ContractError("missing class directory '" + dir.string() + "'");
    }
    std::vector<std::string> usable;
    for (const fs::path& p : list_images(dir)) {
      const std::string rel = fs::relative(p, root).generic_string();
      if (readable(p)) {
        usable.push_back(rel);
      } else {
        m.warnings.push_back("skipping unreadable image '" + rel + "'");
        m.entries.push_back({rel, label, "skipped"});
      }
    }
    if (usable.empty()) {
      throw ContractError("class directory '" + dir.string() + "' has no readable images");
    }
    Rng rng(derive_seed(seed, std::string("ingest/") + label_name(label)));
    for (std::size_t i = usable.size(); i > 1; --i) std::swap(usable[i - 1], usable[rng.below(i)]);
    const auto n = static_cast<double>(usable.size());
    const std::size_t n_train = static_cast<std::size_t>(std::lround(n * ratios.train / sum));
    const std::size_t n_val = std::min(usable.size() - n_train,
                                       static_cast<std::size_t>(std::lround(n * ratios.val / sum)));
    for (std::size_t i = 0; i < usable.size(); ++i) {
      const char* split = i < n_train ? "train" : i < n_train + n_val ? "val" : "test";
      m.entries.push_back({usable[i], label, split});
    }
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest '" + path.string() + "'");
  // A relative root is stored relative to the manifest's own directory.
  fs::path root = m.root;
  if (root.is_relative()) root = fs::proximate(root, fs::absolute(path).parent_path());
  out << "# root=" << root.generic_string() << "\n";
  out << "# seed=" << m.seed << "\n";
  out << "# ratios=" << m.ratios.train << ':' << m.ratios.val << ':' << m.ratios.test << "\n";
  out << "path,label,split\n";
  for (const auto& e : m.entries) out << e.path << ',' << label_name(e.label) << ',' << e.split << '\n';
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int number = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    if (line.rfind("# root=", 0) == 0) {
      const fs::path r = line.substr(7);
      m.root = r.is_absolute() ? r : path.parent_path() / r;
    } else if (line.rfind("# seed=", 0) == 0) {
      m.seed = std::stoull(line.substr(7));
    } else if (line.rfind("# ratios=", 0) == 0) {
      m.ratios = parse_ratios(line.substr(9));
    } else if (line[0] == '#') {
      continue;
    } else if (!header) {
      if (line != "path,label,split") throw ParseError(number, "expected header 'path,label,split'");
      header = true;
    } else {
      const auto c1 = line.find(','), c2 = line.rfind(',');
      if (c1 == std::string::npos || c1 == c2) throw ParseError(number, "expected 3 fields");
      ManifestEntry e;
      e.path = line.substr(0, c1);
      try {
        e.label = parse_label(line.substr(c1 + 1, c2 - c1 - 1));
      } catch (const ContractError& err) {
        throw ParseError(number, err.what());
      }
      e.split = line.substr(c2 + 1);
      if (e.split != "train" && e.split != "val" && e.split != "test" && e.split != "skipped") {
        throw ParseError(number, "unknown split '" + e.split + "'");
      }
      m.entries.push_back(std::move(e));
    }
  }
  if (!header) throw ParseError(number, "manifest has no header");
  return m;
}

Dataset load_split(const DatasetManifest& m, const std::string& split, int height, int width) {
  Dataset d;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    auto img = try_load_image(m.root / e.path);
    if (!img) throw LookupError("manifest entry '" + (m.root / e.path).string() + "' cannot be loaded");
    d.add(letterbox(*img, height, width), e.label, e.path);
  }
  return d;
}

}  // namespace onfire
