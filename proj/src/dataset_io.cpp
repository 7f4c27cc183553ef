#include "czforge/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "czforge/error.hpp"
#include "czforge/imaging.hpp"

namespace czforge::io {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!force) throw ValidationError("output directory '" + dir.string() + "' already exists (use --force)");
    if (!fs::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' exists and is not a directory");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path(), ec);
    if (ec) throw IoError("cannot clear '" + dir.string() + "': " + ec.message());
    return;
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

bool has_split_layout(const fs::path& root) {
  for (Split s : kAllSplits) {
    if (fs::is_directory(root / "images" / split_name(s))) return true;
  }
  return false;
}

ClassRegistry load_registry(const fs::path& root) {
  const fs::path cfg = root / "data.yaml";
  if (!fs::exists(cfg)) return ClassRegistry::construction_zone();
  try {
    return parse_dataset_config(read_text(cfg)).classes;
  } catch (const DataError& e) {
    throw DataError(cfg.string() + ": " + e.what());
  }
}

fs::path image_dir(const fs::path& root, std::string_view part) {
  return part == "all" ? root / "images" : root / "images" / std::string(part);
}

fs::path label_dir(const fs::path& root, std::string_view part) {
  return part == "all" ? root / "labels" : root / "labels" / std::string(part);
}

fs::path label_path(const fs::path& root, std::string_view part, std::string_view image_id) {
  return label_dir(root, part) / (std::string(image_id) + ".txt");
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm";
}

DatasetPart load_part(const fs::path& root, const std::string& name, const ClassRegistry& registry) {
  DatasetPart part;
  part.name = name;
  const fs::path images = image_dir(root, name);
  const fs::path labels = label_dir(root, name);
  if (!fs::is_directory(images)) throw IoError("missing image directory '" + images.string() + "'");
  if (!fs::is_directory(labels)) throw IoError("missing label directory '" + labels.string() + "'");

  std::map<std::string, fs::path> image_files;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!image_files.emplace(stem, entry.path()).second) throw DataError("duplicate image stem '" + stem + "'");
  }
  std::set<std::string> label_stems;
  for (const auto& entry : fs::directory_iterator(labels)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") label_stems.insert(entry.path().stem().string());
  }
  for (const std::string& stem : label_stems) {
    if (!image_files.contains(stem)) throw DataError("label '" + stem + ".txt' has no image in " + images.string());
  }
  for (const auto& [stem, path] : image_files) {
    if (!label_stems.contains(stem)) throw DataError("image '" + path.filename().string() + "' has no label file");
    const fs::path lp = labels / (stem + ".txt");
    ImageRecord rec;
    rec.image_id = stem;
    const ImageSize size = read_image_size(path);
    rec.width = size.width;
    rec.height = size.height;
    try {
      rec.annotations = parse_yolo_label(read_text(lp), registry);
    } catch (const DataError& e) {
      throw DataError(lp.string() + ": " + e.what());
    }
    part.records.push_back(std::move(rec));
    part.image_paths.push_back(path);
  }
  return part;
}

}  // namespace

std::vector<DatasetPart> load_dataset(const fs::path& root, const ClassRegistry& registry) {
  if (!fs::is_directory(root)) throw IoError("dataset root '" + root.string() + "' is not a directory");
  std::vector<DatasetPart> parts;
  if (has_split_layout(root)) {
    for (Split s : kAllSplits) {
      const std::string name(split_name(s));
      if (!fs::is_directory(root / "images" / name)) continue;
      parts.push_back(load_part(root, name, registry));
    }
  } else {
    parts.push_back(load_part(root, "all", registry));
  }
  return parts;
}

eval::PredictionSet load_predictions(const fs::path& dir, const ClassRegistry& registry) {
  if (!fs::is_directory(dir)) throw IoError("predictions directory '" + dir.string() + "' is not a directory");
  eval::PredictionSet out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    try {
      out.emplace(entry.path().stem().string(), eval::parse_prediction_file(read_text(entry.path()), registry));
    } catch (const DataError& e) {
      throw DataError(entry.path().string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace czforge::io
