#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tss {

enum class ClassLabel { covid, non_covid };
enum class Split { train, test };
enum class Orientation { original, flipped };
enum class ManifestKind { downstream, pretext };

std::string_view to_string(ClassLabel v);
std::string_view to_string(Split v);
std::string_view to_string(Orientation v);
std::string_view to_string(ManifestKind v);

ClassLabel parse_class_label(std::string_view text);
Split parse_split(std::string_view text);
Orientation parse_orientation(std::string_view text);
ManifestKind parse_manifest_kind(std::string_view text);

/// One labelled image of the downstream task.
struct ImageRecord {
  std::string image_id;
  std::filesystem::path source_path;
  ClassLabel label = ClassLabel::non_covid;
  Split split = Split::train;
  std::optional<std::string> patient_id;  // in-memory only, not part of the file format

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// One image of the flip-detection task. Originals and flips are paired
/// through order_index.
struct PretextRecord {
  std::string image_id;
  std::filesystem::path source_path;
  Orientation orientation = Orientation::original;
  Split split = Split::train;
  std::size_t order_index = 0;

  friend bool operator==(const PretextRecord&, const PretextRecord&) = default;
};

/// Immutable, ordered, digested listing of the records a run sees.
///
/// Construction validates the record invariants: image ids are unique, and
/// pretext manifests pair every original with exactly one flipped record of
/// the same order_index. The content digest covers the kind and the ordered
/// records (not the fraction), so equal listings hash equal regardless of
/// how they were produced.
class DatasetManifest {
 public:
  static DatasetManifest downstream(std::vector<ImageRecord> records, double fraction = 1.0);
  static DatasetManifest pretext(std::vector<PretextRecord> records, double fraction = 1.0);

  ManifestKind kind() const { return kind_; }
  double fraction() const { return fraction_; }
  const std::string& content_digest() const { return digest_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  /// Throws InputError when the manifest holds the other record kind.
  const std::vector<ImageRecord>& downstream_records() const;
  const std::vector<PretextRecord>& pretext_records() const;

  const std::string& image_id(std::size_t i) const;
  const std::filesystem::path& source_path(std::size_t i) const;
  Split split(std::size_t i) const;
  /// Binary training target: covid -> 1, flipped -> 1.
  int binary_label(std::size_t i) const;
  /// Key shared by a downstream image and every pretext record derived from
  /// it (the filename stem); used for leakage checks across manifests.
  std::string isolation_key(std::size_t i) const;
  std::set<std::string> isolation_keys() const;

  std::size_t count(Split s) const;
  std::size_t count(ClassLabel c) const;
  std::size_t count(Orientation o) const;

  /// Records of one split, order preserved. Fraction is carried over.
  DatasetManifest filter(Split s) const;

  void write(const std::filesystem::path& path) const;
  std::string serialize() const;
  static DatasetManifest read(const std::filesystem::path& path);
  static DatasetManifest parse(std::string_view text, std::string_view origin = "<memory>");

 private:
  using Records = std::variant<std::vector<ImageRecord>, std::vector<PretextRecord>>;
  DatasetManifest(ManifestKind kind, Records records, double fraction);

  ManifestKind kind_;
  Records records_;
  double fraction_;
  std::string digest_;
};

/// Records of `head` followed by those of `tail`; both must be the same kind.
DatasetManifest concatenate(const DatasetManifest& head, const DatasetManifest& tail);

}  // namespace tss
