#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tss/manifest.hpp"

namespace tss {

/// One image named by a split listing, relative to the corpus root.
struct ListingEntry {
  std::filesystem::path relative_path;
  ClassLabel label = ClassLabel::non_covid;
  std::optional<std::string> patient_id;
};

using SplitListing = std::map<Split, std::vector<ListingEntry>>;

/// Builds a downstream manifest from an explicit split listing.
///
/// Every listed file must exist and decode. image_id is the file name, which
/// must be unique across the whole listing. Records are emitted split by
/// split (train, then test), each split sorted by file name, so the result
/// depends only on what is listed and not on listing order.
DatasetManifest ingest_corpus(const std::filesystem::path& root, const SplitListing& listing);

/// Appends validation records after the training records, all as split=train.
/// Overlapping image ids are rejected (leakage guard).
DatasetManifest merge_validation(const DatasetManifest& train, const DatasetManifest& val);

/// Split listing recovered from an on-disk corpus.
struct CorpusLayout {
  std::string name;  // "covid-ct" or "folders"
  SplitListing listing;
  std::vector<ListingEntry> validation;
};

/// Recognises two layouts:
///  - the COVID-CT repository: Data-split/{COVID,NonCOVID}/{train,val,test}CT_*.txt
///    naming files under Images-processed/CT_COVID and Images-processed/CT_NonCOVID;
///  - plain folders: {train,val,test}/{covid,non_covid}/<images>, val optional.
CorpusLayout discover_layout(const std::filesystem::path& root);

/// discover_layout + ingest + merge_validation: one manifest holding the
/// merged training split followed by the test split.
DatasetManifest ingest_directory(const std::filesystem::path& root);

/// Re-encodes every source image to <out>/original/<stem>.jpg and its
/// horizontal mirror to <out>/flipped/<stem>.jpg. Returns a pretext manifest
/// with the originals first, then the flips, both in source order; the
/// source position is the shared order_index. Splits are carried through.
DatasetManifest build_pretext_dataset(const DatasetManifest& source,
                                      const std::filesystem::path& output_dir);

/// Sequential, nested subset: the first floor(f * N) records of each
/// orientation by order_index. Fractions outside {0.25, 0.5, 0.75, 1} are
/// accepted with a warning; f <= 0 or f > 1 throws.
DatasetManifest take_fraction(const DatasetManifest& pretext, double fraction);

bool is_standard_fraction(double fraction);

}  // namespace tss
