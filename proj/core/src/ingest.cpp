#include "tss/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

#include "tss/errors.hpp"
#include "tss/image.hpp"

namespace fs = std::filesystem;

namespace tss {

namespace {

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> kExt = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kExt.contains(ext);
}

std::vector<ListingEntry> list_folder(const fs::path& root, const fs::path& rel, ClassLabel label) {
  std::vector<ListingEntry> out;
  for (const auto& entry : fs::directory_iterator(root / rel)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      out.push_back({rel / entry.path().filename(), label, std::nullopt});
    }
  }
  return out;
}

std::vector<ListingEntry> read_split_file(const fs::path& file, const fs::path& image_dir,
                                          ClassLabel label) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot read split listing: " + file.string());
  std::vector<ListingEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    out.push_back({image_dir / line, label, std::nullopt});
  }
  return out;
}

std::optional<fs::path> first_existing(const fs::path& dir, const std::array<const char*, 3>& names) {
  for (const char* n : names) {
    if (fs::exists(dir / n)) return dir / n;
  }
  return std::nullopt;
}

}  // namespace

DatasetManifest ingest_corpus(const fs::path& root, const SplitListing& listing) {
  if (!fs::is_directory(root)) throw InputError("data root not found: " + root.string());
  const fs::path base = fs::absolute(root).lexically_normal();

  std::vector<ImageRecord> records;
  std::unordered_set<std::string> ids;
  for (Split split : {Split::train, Split::test}) {
    auto it = listing.find(split);
    if (it == listing.end()) continue;
    std::vector<ImageRecord> part;
    for (const auto& entry : it->second) {
      const fs::path path = (base / entry.relative_path).lexically_normal();
      if (!fs::is_regular_file(path)) throw InputError("missing file: " + path.string());
      std::string id = path.filename().string();
      if (!ids.insert(id).second) throw InputError("duplicate image_id: " + id);
      load_image_rgb(path);  // decodability check; throws naming the path
      part.push_back(ImageRecord{std::move(id), path, entry.label, split, entry.patient_id});
    }
    std::sort(part.begin(), part.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    records.insert(records.end(), part.begin(), part.end());
  }
  if (records.empty()) throw InputError("no records");
  return DatasetManifest::downstream(std::move(records));
}

DatasetManifest merge_validation(const DatasetManifest& train, const DatasetManifest& val) {
  if (train.kind() != ManifestKind::downstream || val.kind() != ManifestKind::downstream) {
    throw InputError("merge_validation expects downstream manifests");
  }
  std::unordered_set<std::string> ids;
  std::vector<ImageRecord> merged;
  for (const auto* m : {&train, &val}) {
    for (auto r : m->downstream_records()) {
      if (r.split == Split::test) {
        throw InputError("merge_validation: test-split record " + r.image_id + " in input");
      }
      if (!ids.insert(r.image_id).second) {
        throw InputError("image_id present in both training and validation sets: " + r.image_id);
      }
      merged.push_back(std::move(r));
    }
  }
  return DatasetManifest::downstream(std::move(merged), train.fraction());
}

CorpusLayout discover_layout(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError("data root not found: " + root.string());

  if (fs::is_directory(root / "Data-split")) {
    CorpusLayout layout{"covid-ct", {}, {}};
    struct ClassSource {
      const char* split_dir;
      const char* suffix;
      const char* image_dir;
      ClassLabel label;
    };
    for (const ClassSource& src :
         {ClassSource{"COVID", "CT_COVID", "Images-processed/CT_COVID", ClassLabel::covid},
          ClassSource{"NonCOVID", "CT_NonCOVID", "Images-processed/CT_NonCOVID",
                      ClassLabel::non_covid}}) {
      const fs::path dir = root / "Data-split" / src.split_dir;
      auto load = [&](const std::string& prefix) {
        const fs::path file = dir / (prefix + src.suffix + ".txt");
        return read_split_file(file, src.image_dir, src.label);
      };
      auto append = [](std::vector<ListingEntry>& into, std::vector<ListingEntry> more) {
        into.insert(into.end(), more.begin(), more.end());
      };
      append(layout.listing[Split::train], load("train"));
      append(layout.validation, load("val"));
      append(layout.listing[Split::test], load("test"));
    }
    return layout;
  }

  CorpusLayout layout{"folders", {}, {}};
  struct ClassFolder {
    ClassLabel label;
    std::array<const char*, 3> names;
  };
  static constexpr std::array<ClassFolder, 2> kFolders{{
      {ClassLabel::covid, {"covid", "COVID", "CT_COVID"}},
      {ClassLabel::non_covid, {"non_covid", "NonCOVID", "CT_NonCOVID"}},
  }};
  static constexpr std::array<const char*, 3> kSplits{"train", "val", "test"};
  bool any = false;
  for (std::size_t target = 0; target < kSplits.size(); ++target) {
    const fs::path split_dir = root / kSplits[target];
    if (!fs::is_directory(split_dir)) continue;
    for (const ClassFolder& folder : kFolders) {
      auto dir = first_existing(split_dir, folder.names);
      if (!dir) continue;
      auto entries = list_folder(root, fs::relative(*dir, root), folder.label);
      any = any || !entries.empty();
      auto& into = target == 0   ? layout.listing[Split::train]
                   : target == 1 ? layout.validation
                                 : layout.listing[Split::test];
      into.insert(into.end(), entries.begin(), entries.end());
    }
  }
  if (!any) {
    throw InputError("no recognised corpus layout under " + root.string() +
                     " (expected Data-split/ or {train,val,test}/{covid,non_covid}/)");
  }
  return layout;
}

DatasetManifest ingest_directory(const fs::path& root) {
  const CorpusLayout layout = discover_layout(root);
  const DatasetManifest all = ingest_corpus(root, layout.listing);
  DatasetManifest train = all.filter(Split::train);
  if (!layout.validation.empty()) {
    train = merge_validation(train, ingest_corpus(root, {{Split::train, layout.validation}}));
  }
  return concatenate(train, all.filter(Split::test));
}

DatasetManifest build_pretext_dataset(const DatasetManifest& source, const fs::path& output_dir) {
  const auto& records = source.downstream_records();
  const fs::path out = fs::absolute(output_dir).lexically_normal();
  try {
    fs::create_directories(out / "original");
    fs::create_directories(out / "flipped");
  } catch (const fs::filesystem_error& e) {
    throw RuntimeFailure("cannot create pretext output directory " + out.string() + ": " +
                         e.what());
  }

  std::vector<PretextRecord> originals;
  std::vector<PretextRecord> flips;
  std::unordered_set<std::string> names;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::string name = rec.source_path.stem().string() + ".jpg";
    if (!names.insert(name).second) {
      throw InputError("two source images map to the same pretext file name: " + name);
    }
    const Image image = load_image_rgb(rec.source_path);
    const fs::path original_path = out / "original" / name;
    const fs::path flipped_path = out / "flipped" / name;
    try {
      save_jpeg(image, original_path);
      save_jpeg(horizontal_flip(image), flipped_path);
    } catch (const RuntimeFailure& e) {
      throw RuntimeFailure("pretext encode failed for image " + rec.image_id + ": " + e.what());
    }
    originals.push_back({"original/" + name, original_path, Orientation::original, rec.split, i});
    flips.push_back({"flipped/" + name, flipped_path, Orientation::flipped, rec.split, i});
  }
  originals.insert(originals.end(), flips.begin(), flips.end());
  return DatasetManifest::pretext(std::move(originals));
}

bool is_standard_fraction(double fraction) {
  return fraction == 0.25 || fraction == 0.5 || fraction == 0.75 || fraction == 1.0;
}

DatasetManifest take_fraction(const DatasetManifest& pretext, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InputError("fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  if (!is_standard_fraction(fraction)) {
    std::clog << "warning: fraction " << fraction
              << " is not one of 0.25, 0.5, 0.75, 1.0\n";
  }
  const auto& records = pretext.pretext_records();
  std::vector<std::size_t> order;
  for (const auto& r : records) {
    if (r.orientation == Orientation::original) order.push_back(r.order_index);
  }
  std::sort(order.begin(), order.end());
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size())));
  const std::set<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));

  std::vector<PretextRecord> out;
  for (const auto& r : records) {
    if (kept.contains(r.order_index)) out.push_back(r);
  }
  return DatasetManifest::pretext(std::move(out), fraction);
}

}  // namespace tss
