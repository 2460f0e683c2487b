#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <map>
#include <set>

#include "tss/errors.hpp"
#include "tss/pipeline.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace tss {

namespace {

const std::set<std::string> kKnownKeys = {
    "backbone",       "fraction",          "seed",           "data_root",
    "output_dir",     "weights_dir",       "weights_file",   "weights_init",
    "head_hidden_width", "head_activation"};

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw InputError("matrix config: invalid value for " + key + ": '" + text + "'");
  }
  return v;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace

std::vector<ExperimentConfig> read_matrix_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("matrix config not found: " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError("matrix config " + path.string() + ": " + e.what());
  }
  const fs::path base = fs::absolute(path).parent_path();

  std::map<std::string, std::string> defaults;
  if (auto d = tree.get_child_optional("defaults")) {
    for (const auto& [key, node] : *d) defaults[key] = node.get_value<std::string>();
  }

  std::vector<ExperimentConfig> out;
  for (const auto& [section, node] : tree) {
    if (section == "defaults") continue;
    if (node.empty()) {
      throw InputError("matrix config: key '" + section + "' outside a section");
    }
    std::map<std::string, std::string> kv = defaults;
    for (const auto& [key, value] : node) kv[key] = value.get_value<std::string>();
    for (const auto& [key, value] : kv) {
      if (!kKnownKeys.contains(key)) {
        throw InputError("matrix config: unknown key '" + key + "' in [" + section + "]");
      }
    }
    auto need = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw InputError("matrix config: [" + section + "] lacks " + key);
      return it->second;
    };

    ExperimentConfig c;
    c.id = section;
    const BackboneName name = parse_backbone_name(need("backbone"));
    WeightsInit init = name == BackboneName::tiny_test ? WeightsInit::random
                                                      : WeightsInit::imagenet_pretrained;
    if (kv.contains("weights_init")) init = parse_weights_init(kv["weights_init"]);
    fs::path weights_file;
    if (kv.contains("weights_file")) {
      weights_file = resolve(base, kv["weights_file"]);
    } else if (kv.contains("weights_dir")) {
      weights_file = resolve(base, kv["weights_dir"]) / (std::string(to_string(name)) + ".pt");
    }
    c.backbone = BackboneSpec::make(name, init, weights_file);
    if (kv.contains("head_hidden_width")) {
      c.head.hidden_width = parse_number<int>(kv["head_hidden_width"], "head_hidden_width");
    }
    if (kv.contains("head_activation")) {
      c.head.hidden_activation = parse_hidden_activation(kv["head_activation"]);
    }
    c.ss_fraction = parse_number<double>(need("fraction"), "fraction");
    c.seed = parse_number<std::uint64_t>(need("seed"), "seed");
    c.data_root = resolve(base, need("data_root"));
    c.output_dir = kv.contains("output_dir") ? resolve(base, kv["output_dir"]) : fs::path{};
    out.push_back(std::move(c));
  }
  if (out.empty()) throw InputError("matrix config " + path.string() + " defines no experiments");
  return out;
}

}  // namespace tss
