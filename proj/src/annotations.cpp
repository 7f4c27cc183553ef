#include "czforge/annotations.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "czforge/error.hpp"
#include "czforge/kvconfig.hpp"

namespace czforge {

ClassRegistry::ClassRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const std::string& n : names_) {
    if (n.empty()) throw ValidationError("class names must be non-empty");
    if (!seen.insert(n).second) throw ValidationError("duplicate class name '" + n + "'");
  }
}

ClassRegistry ClassRegistry::construction_zone() { return ClassRegistry({"cone", "barrier", "beacon"}); }

const std::string& ClassRegistry::name(ClassId id) const {
  if (!contains(id)) throw ValidationError("unknown class id " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

std::optional<ClassId> ClassRegistry::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<ClassId>(i);
  }
  return std::nullopt;
}

bool NormBBox::valid() const noexcept {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h)) return false;
  return cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 && w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0;
}

bool PixelBBox::valid() const noexcept {
  return xmin >= 0.0 && ymin >= 0.0 && xmax > xmin && ymax > ymin;
}

NormBBox to_norm(const PixelBBox& box, int width, int height) noexcept {
  const double w = width;
  const double h = height;
  return {(box.xmin + box.xmax) / (2.0 * w), (box.ymin + box.ymax) / (2.0 * h), (box.xmax - box.xmin) / w,
          (box.ymax - box.ymin) / h};
}

PixelBBox to_pixel(const NormBBox& box, int width, int height) noexcept {
  return {box.x_min() * width, box.y_min() * height, box.x_max() * width, box.y_max() * height};
}

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view name) noexcept {
  for (Split s : kAllSplits) {
    if (split_name(s) == name) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// YOLO labels

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++number;
    fn(line, number);
    pos = end + 1;
  }
}

bool parse_number(std::string_view token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

ClassId parse_class_token(std::string_view token, const ClassRegistry& registry, std::size_t line) {
  int id = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("non-numeric class id '" + std::string(token) + "'", line);
  }
  if (!registry.contains(id)) throw ParseError("unknown class id " + std::to_string(id), line);
  return id;
}

NormBBox parse_box_tokens(std::span<const std::string_view> tokens, std::size_t line) {
  static constexpr std::array<const char*, 4> kNames{"cx", "cy", "w", "h"};
  std::array<double, 4> v{};
  for (std::size_t k = 0; k < 4; ++k) {
    if (!parse_number(tokens[k], v[k])) {
      throw ParseError("non-numeric " + std::string(kNames[k]) + " '" + std::string(tokens[k]) + "'", line);
    }
  }
  for (std::size_t k = 0; k < 2; ++k) {
    if (v[k] < 0.0 || v[k] > 1.0) throw ParseError(std::string(kNames[k]) + " out of range", line);
  }
  for (std::size_t k = 2; k < 4; ++k) {
    if (v[k] <= 0.0 || v[k] > 1.0) throw ParseError(std::string(kNames[k]) + " out of range", line);
  }
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

std::vector<Annotation> parse_yolo_label(std::string_view text, const ClassRegistry& registry) {
  std::vector<Annotation> out;
  for_each_line(text, [&](std::string_view line, std::size_t number) {
    const auto fields = split_fields(line);
    if (fields.empty()) return;
    if (fields.size() != 5) {
      throw ParseError("expected 5 fields, got " + std::to_string(fields.size()), number);
    }
    Annotation a;
    a.class_id = parse_class_token(fields[0], registry, number);
    a.bbox = parse_box_tokens(std::span(fields).subspan(1), number);
    out.push_back(a);
  });
  return out;
}

std::string format_fixed6(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed, 6);
  if (ec != std::errc()) return "nan";
  std::string out(buf.data(), ptr);
  if (out == "-0.000000") out = "0.000000";
  return out;
}

std::string serialize_yolo_label(const std::vector<Annotation>& annotations) {
  std::string out;
  out.reserve(annotations.size() * 40);
  for (const Annotation& a : annotations) {
    out += std::to_string(a.class_id);
    for (double v : {a.bbox.cx, a.bbox.cy, a.bbox.w, a.bbox.h}) {
      out += ' ';
      out += format_fixed6(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset config

DatasetConfig parse_dataset_config(std::string_view text) {
  const kv::Document doc = kv::Document::parse(text);
  DatasetConfig config;
  if (const kv::Node* root = doc.find("path")) {
    if (root->kind != kv::Node::Kind::kScalar) throw ParseError("'path' must be a scalar", root->line);
    config.root_path = root->scalar;
  }
  for (Split s : kAllSplits) {
    const kv::Node* n = doc.find(split_name(s));
    if (n == nullptr) throw DataError("missing split: " + std::string(split_name(s)));
    if (n->kind != kv::Node::Kind::kScalar) throw ParseError("split path must be a scalar", n->line);
    config.split_paths[s] = n->scalar;
  }
  const kv::Node* names = doc.find("names");
  if (names == nullptr) throw DataError("missing key: names");
  if (names->kind != kv::Node::Kind::kMap || names->map.empty()) {
    throw ParseError("'names' must be a non-empty id: name map", names->line);
  }
  std::map<long long, std::string> by_id;
  for (const kv::Entry& e : names->map) {
    long long id = 0;
    auto [ptr, ec] = std::from_chars(e.key.data(), e.key.data() + e.key.size(), id);
    if (ec != std::errc() || ptr != e.key.data() + e.key.size() || id < 0) {
      throw ParseError("class id must be a non-negative integer", e.line);
    }
    if (!by_id.emplace(id, e.value).second) throw ParseError("duplicate class id " + e.key, e.line);
  }
  std::vector<std::string> ordered;
  long long expect = 0;
  for (auto& [id, name] : by_id) {
    if (id != expect++) throw DataError("non-contiguous class ids");
    ordered.push_back(name);
  }
  try {
    config.classes = ClassRegistry(std::move(ordered));
  } catch (const ValidationError& e) {
    throw DataError(e.what());
  }
  return config;
}

std::string serialize_dataset_config(const DatasetConfig& config) {
  std::string out;
  if (!config.root_path.empty()) out += "path: " + config.root_path + "\n";
  for (Split s : kAllSplits) {
    auto it = config.split_paths.find(s);
    out += std::string(split_name(s)) + ": " + (it == config.split_paths.end() ? std::string() : it->second) + "\n";
  }
  out += "names:\n";
  for (std::size_t i = 0; i < config.classes.size(); ++i) {
    out += "  " + std::to_string(i) + ": " + config.classes.names()[i] + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// CVAT XML

namespace {

namespace pt = boost::property_tree;

double cvat_number(const pt::ptree& attrs, const char* key, const std::string& where) {
  const auto value = attrs.get_optional<std::string>(key);
  if (!value) throw DataError("missing attribute '" + std::string(key) + "' in " + where);
  double out = 0.0;
  if (!parse_number(kv::trim(*value), out)) {
    throw DataError("attribute '" + std::string(key) + "' is not a number in " + where);
  }
  return out;
}

std::string stem_of(const std::string& name) {
  std::string base = name;
  if (auto slash = base.find_last_of("/\\"); slash != std::string::npos) base = base.substr(slash + 1);
  if (auto dot = base.find_last_of('.'); dot != std::string::npos && dot > 0) base = base.substr(0, dot);
  return base;
}

}  // namespace

std::vector<ImageRecord> parse_cvat_xml(std::string_view text, const ClassRegistry& registry) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(std::string("malformed markup: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  const auto root = tree.get_child_optional("annotations");
  if (!root) throw DataError("malformed markup: missing <annotations> root");

  std::vector<ImageRecord> records;
  for (const auto& [tag, node] : *root) {
    if (tag == "track") throw DataError("unsupported element <track>: only image boxes are accepted");
    if (tag != "image") continue;
    const pt::ptree& attrs = node.get_child("<xmlattr>", pt::ptree());
    const std::string name = attrs.get<std::string>("name", "");
    if (name.empty()) throw DataError("image element without a name");
    const std::string where = "image '" + name + "'";
    const double wd = cvat_number(attrs, "width", where);
    const double ht = cvat_number(attrs, "height", where);
    if (wd < 1.0 || ht < 1.0 || wd != std::floor(wd) || ht != std::floor(ht)) {
      throw DataError("invalid image dimensions in " + where);
    }
    ImageRecord rec;
    rec.image_id = stem_of(name);
    rec.width = static_cast<int>(wd);
    rec.height = static_cast<int>(ht);
    if (rec.image_id.empty()) throw DataError("empty image stem in " + where);
    for (const auto& [child_tag, child] : node) {
      if (child_tag == "<xmlattr>") continue;
      if (child_tag != "box") {
        throw DataError("unsupported element <" + child_tag + "> in " + where + ": only boxes are accepted");
      }
      const pt::ptree& battrs = child.get_child("<xmlattr>", pt::ptree());
      const std::string label = battrs.get<std::string>("label", "");
      const auto cls = registry.find(label);
      if (!cls) throw DataError("unknown label '" + label + "' in " + where);
      PixelBBox box{cvat_number(battrs, "xtl", where), cvat_number(battrs, "ytl", where),
                    cvat_number(battrs, "xbr", where), cvat_number(battrs, "ybr", where)};
      if (box.xmax <= box.xmin || box.ymax <= box.ymin) throw DataError("degenerate box (xbr <= xtl or ybr <= ytl) in " + where);
      box.xmin = std::clamp(box.xmin, 0.0, wd);
      box.xmax = std::clamp(box.xmax, 0.0, wd);
      box.ymin = std::clamp(box.ymin, 0.0, ht);
      box.ymax = std::clamp(box.ymax, 0.0, ht);
      const NormBBox nb = to_norm(box, rec.width, rec.height);
      if (!nb.valid()) throw DataError("box lies outside the image in " + where);
      rec.annotations.push_back({*cls, nb});
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Stats and filtering

DatasetStats dataset_stats(std::span<const SplitRecords> splits, const ClassRegistry& registry) {
  DatasetStats stats;
  stats.class_names = registry.names();
  stats.totals.assign(registry.size(), 0);
  for (const SplitRecords& part : splits) {
    DatasetStats::Row row;
    row.split = part.name;
    row.counts.assign(registry.size(), 0);
    row.images = part.records.size();
    for (const ImageRecord& rec : part.records) {
      for (const Annotation& a : rec.annotations) {
        if (!registry.contains(a.class_id)) throw DataError("unknown class id in record '" + rec.image_id + "'");
        ++row.counts[static_cast<std::size_t>(a.class_id)];
      }
    }
    for (std::size_t c = 0; c < row.counts.size(); ++c) stats.totals[c] += row.counts[c];
    stats.total_images += row.images;
    stats.rows.push_back(std::move(row));
  }
  return stats;
}

std::string render_stats_table(const DatasetStats& stats) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Type"};
  header.insert(header.end(), stats.class_names.begin(), stats.class_names.end());
  header.push_back("images");
  cells.push_back(header);
  auto add_row = [&](const std::string& name, const std::vector<std::size_t>& counts, std::size_t images) {
    std::vector<std::string> r{name};
    for (std::size_t c : counts) r.push_back(std::to_string(c));
    r.push_back(std::to_string(images));
    cells.push_back(std::move(r));
  };
  for (const auto& row : stats.rows) add_row(row.split, row.counts, row.images);
  add_row("total", stats.totals, stats.total_images);

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& r : cells) {
    for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : cells) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0) {
        out << std::left << std::setw(static_cast<int>(widths[i])) << r[i];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(widths[i])) << r[i];
      }
    }
    out << '\n';
  }
  return out.str();
}

FilterResult filter_records(const std::vector<ImageRecord>& records, double max_area_frac) {
  if (!(max_area_frac > 0.0 && max_area_frac <= 1.0)) {
    throw ValidationError("max area fraction must be in (0,1]");
  }
  FilterResult result;
  for (const ImageRecord& rec : records) {
    const bool too_close = std::any_of(rec.annotations.begin(), rec.annotations.end(),
                                       [&](const Annotation& a) { return a.bbox.area() > max_area_frac; });
    if (rec.annotations.empty() || too_close) {
      result.removed.push_back(rec);
    } else {
      result.kept.push_back(rec);
    }
  }
  return result;
}

}  // namespace czforge
