#include "tss/manifest.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "tss/digest.hpp"
#include "tss/errors.hpp"

namespace tss {

namespace {

constexpr std::string_view kMagic = "#tss-manifest v1";
constexpr std::string_view kColumns =
    "image_id\tsource_path\tlabel\tsplit\torder_index\torientation";

[[noreturn]] void bad_value(std::string_view what, std::string_view text) {
  throw InputError("invalid " + std::string(what) + ": '" + std::string(text) + "'");
}

void check_field(std::string_view field, std::string_view what) {
  if (field.empty() || field.find_first_of("\t\n\r") != std::string_view::npos) {
    throw InputError(std::string(what) + " must be non-empty and free of tabs/newlines: '" +
                     std::string(field) + "'");
  }
}

std::string format_fraction(double f) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  return std::string(buf, res.ptr);
}

std::string record_line(const ImageRecord& r) {
  std::string line;
  line.append(r.image_id).append("\t").append(r.source_path.string()).append("\t");
  line.append(to_string(r.label)).append("\t").append(to_string(r.split));
  line.append("\t-\t-");
  return line;
}

std::string record_line(const PretextRecord& r) {
  std::string line;
  line.append(r.image_id).append("\t").append(r.source_path.string()).append("\t");
  line.append(to_string(r.orientation)).append("\t").append(to_string(r.split));
  line.append("\t").append(std::to_string(r.order_index));
  line.append("\t").append(to_string(r.orientation));
  return line;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string_view to_string(ClassLabel v) { return v == ClassLabel::covid ? "covid" : "non_covid"; }
std::string_view to_string(Split v) { return v == Split::train ? "train" : "test"; }
std::string_view to_string(Orientation v) {
  return v == Orientation::original ? "original" : "flipped";
}
std::string_view to_string(ManifestKind v) {
  return v == ManifestKind::downstream ? "downstream" : "pretext";
}

ClassLabel parse_class_label(std::string_view text) {
  if (text == "covid") return ClassLabel::covid;
  if (text == "non_covid") return ClassLabel::non_covid;
  bad_value("class label", text);
}
Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  bad_value("split", text);
}
Orientation parse_orientation(std::string_view text) {
  if (text == "original") return Orientation::original;
  if (text == "flipped") return Orientation::flipped;
  bad_value("orientation", text);
}
ManifestKind parse_manifest_kind(std::string_view text) {
  if (text == "downstream") return ManifestKind::downstream;
  if (text == "pretext") return ManifestKind::pretext;
  bad_value("manifest kind", text);
}

DatasetManifest::DatasetManifest(ManifestKind kind, Records records, double fraction)
    : kind_(kind), records_(std::move(records)), fraction_(fraction) {
  if (!(fraction_ > 0.0 && fraction_ <= 1.0)) {
    throw InputError("manifest fraction must lie in (0, 1], got " + format_fraction(fraction_));
  }
  Sha256 hash;
  hash.update(to_string(kind_)).update("\n");
  std::unordered_set<std::string> ids;
  std::visit(
      [&](const auto& recs) {
        for (const auto& r : recs) {
          check_field(r.image_id, "image_id");
          check_field(r.source_path.string(), "source_path");
          if (!ids.insert(r.image_id).second) {
            throw InputError("duplicate image_id in manifest: " + r.image_id);
          }
          hash.update(record_line(r)).update("\n");
        }
      },
      records_);
  digest_ = hash.finish();

  if (kind_ == ManifestKind::pretext) {
    // order_index -> (originals, flips)
    std::map<std::size_t, std::pair<int, int>> pairs;
    for (const auto& r : std::get<std::vector<PretextRecord>>(records_)) {
      auto& p = pairs[r.order_index];
      (r.orientation == Orientation::original ? p.first : p.second) += 1;
    }
    for (const auto& [index, p] : pairs) {
      if (p.first != 1 || p.second != 1) {
        throw InputError("pretext manifest must pair exactly one original with one flipped "
                         "record per order_index; order_index " +
                         std::to_string(index) + " has " + std::to_string(p.first) +
                         " original and " + std::to_string(p.second) + " flipped");
      }
    }
  }
}

DatasetManifest DatasetManifest::downstream(std::vector<ImageRecord> records, double fraction) {
  return DatasetManifest(ManifestKind::downstream, std::move(records), fraction);
}

DatasetManifest DatasetManifest::pretext(std::vector<PretextRecord> records, double fraction) {
  return DatasetManifest(ManifestKind::pretext, std::move(records), fraction);
}

std::size_t DatasetManifest::size() const {
  return std::visit([](const auto& recs) { return recs.size(); }, records_);
}

const std::vector<ImageRecord>& DatasetManifest::downstream_records() const {
  if (kind_ != ManifestKind::downstream) throw InputError("expected a downstream manifest");
  return std::get<std::vector<ImageRecord>>(records_);
}

const std::vector<PretextRecord>& DatasetManifest::pretext_records() const {
  if (kind_ != ManifestKind::pretext) throw InputError("expected a pretext manifest");
  return std::get<std::vector<PretextRecord>>(records_);
}

const std::string& DatasetManifest::image_id(std::size_t i) const {
  return std::visit([i](const auto& recs) -> const std::string& { return recs.at(i).image_id; },
                    records_);
}

const std::filesystem::path& DatasetManifest::source_path(std::size_t i) const {
  return std::visit(
      [i](const auto& recs) -> const std::filesystem::path& { return recs.at(i).source_path; },
      records_);
}

Split DatasetManifest::split(std::size_t i) const {
  return std::visit([i](const auto& recs) { return recs.at(i).split; }, records_);
}

int DatasetManifest::binary_label(std::size_t i) const {
  if (kind_ == ManifestKind::downstream) {
    return downstream_records().at(i).label == ClassLabel::covid ? 1 : 0;
  }
  return pretext_records().at(i).orientation == Orientation::flipped ? 1 : 0;
}

std::string DatasetManifest::isolation_key(std::size_t i) const {
  return std::filesystem::path(image_id(i)).stem().string();
}

std::set<std::string> DatasetManifest::isolation_keys() const {
  std::set<std::string> keys;
  for (std::size_t i = 0; i < size(); ++i) keys.insert(isolation_key(i));
  return keys;
}

std::size_t DatasetManifest::count(Split s) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += split(i) == s ? 1 : 0;
  return n;
}

std::size_t DatasetManifest::count(ClassLabel c) const {
  std::size_t n = 0;
  for (const auto& r : downstream_records()) n += r.label == c ? 1 : 0;
  return n;
}

std::size_t DatasetManifest::count(Orientation o) const {
  std::size_t n = 0;
  for (const auto& r : pretext_records()) n += r.orientation == o ? 1 : 0;
  return n;
}

DatasetManifest DatasetManifest::filter(Split s) const {
  return std::visit(
      [&](const auto& recs) {
        std::decay_t<decltype(recs)> kept;
        for (const auto& r : recs) {
          if (r.split == s) kept.push_back(r);
        }
        return DatasetManifest(kind_, std::move(kept), fraction_);
      },
      records_);
}

std::string DatasetManifest::serialize() const {
  std::ostringstream out;
  out << kMagic << "\n";
  out << "#kind=" << to_string(kind_) << "\n";
  out << "#fraction=" << format_fraction(fraction_) << "\n";
  out << "#content_digest=" << digest_ << "\n";
  out << "#columns=" << kColumns << "\n";
  std::visit(
      [&](const auto& recs) {
        for (const auto& r : recs) out << record_line(r) << "\n";
      },
      records_);
  return out.str();
}

void DatasetManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write manifest: " + path.string());
  out << serialize();
  if (!out) throw RuntimeFailure("failed writing manifest: " + path.string());
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read manifest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

DatasetManifest DatasetManifest::parse(std::string_view text, std::string_view origin) {
  const std::string where = std::string(origin);
  std::map<std::string, std::string, std::less<>> header;
  std::vector<ImageRecord> down;
  std::vector<PretextRecord> pre;
  bool magic_seen = false;
  std::size_t line_no = 0;

  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? end : end - start);
    start = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kMagic) throw InputError(where + ": not a tss manifest (bad magic line)");
      magic_seen = true;
      continue;
    }
    if (line.front() == '#') {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw InputError(where + ": malformed header line");
      header.emplace(std::string(line.substr(1, eq - 1)), std::string(line.substr(eq + 1)));
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() != 6) {
      throw InputError(where + ":" + std::to_string(line_no) + ": expected 6 tab-separated fields");
    }
    auto kind_it = header.find("kind");
    if (kind_it == header.end()) throw InputError(where + ": records before #kind header");
    if (parse_manifest_kind(kind_it->second) == ManifestKind::downstream) {
      down.push_back(ImageRecord{std::string(fields[0]), std::filesystem::path(fields[1]),
                                 parse_class_label(fields[2]), parse_split(fields[3]),
                                 std::nullopt});
    } else {
      std::size_t order = 0;
      auto [p, ec] = std::from_chars(fields[4].data(), fields[4].data() + fields[4].size(), order);
      if (ec != std::errc() || p != fields[4].data() + fields[4].size()) {
        bad_value("order_index", fields[4]);
      }
      const auto orientation = parse_orientation(fields[5]);
      if (parse_orientation(fields[2]) != orientation) {
        throw InputError(where + ":" + std::to_string(line_no) +
                         ": label and orientation columns disagree");
      }
      pre.push_back(PretextRecord{std::string(fields[0]), std::filesystem::path(fields[1]),
                                  orientation, parse_split(fields[3]), order});
    }
  }
  if (!magic_seen) throw InputError(where + ": empty manifest file");
  for (const char* key : {"kind", "fraction", "content_digest"}) {
    if (!header.contains(key)) throw InputError(where + ": missing #" + key + " header");
  }
  double fraction = 0.0;
  const auto& ftext = header.at("fraction");
  auto [p, ec] = std::from_chars(ftext.data(), ftext.data() + ftext.size(), fraction);
  if (ec != std::errc() || p != ftext.data() + ftext.size()) bad_value("fraction", ftext);

  DatasetManifest m = parse_manifest_kind(header.at("kind")) == ManifestKind::downstream
                          ? downstream(std::move(down), fraction)
                          : pretext(std::move(pre), fraction);
  if (m.content_digest() != header.at("content_digest")) {
    throw InputError(where + ": content digest mismatch (file edited or corrupt)");
  }
  return m;
}

DatasetManifest concatenate(const DatasetManifest& head, const DatasetManifest& tail) {
  if (head.kind() != tail.kind()) throw InputError("cannot concatenate manifests of different kinds");
  if (head.kind() == ManifestKind::downstream) {
    auto recs = head.downstream_records();
    const auto& more = tail.downstream_records();
    recs.insert(recs.end(), more.begin(), more.end());
    return DatasetManifest::downstream(std::move(recs), head.fraction());
  }
  auto recs = head.pretext_records();
  const auto& more = tail.pretext_records();
  recs.insert(recs.end(), more.begin(), more.end());
  return DatasetManifest::pretext(std::move(recs), head.fraction());
}

}  // namespace tss
