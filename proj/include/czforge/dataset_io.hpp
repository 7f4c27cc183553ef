#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "czforge/annotations.hpp"
#include "czforge/eval.hpp"

namespace czforge::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);

/// Creates `dir`. An existing path is an error unless `force`, in which case
/// the directory's contents are removed first.
void prepare_output_dir(const fs::path& dir, bool force);

/// One group of a dataset on disk: either a named split of the standard
/// layout (<root>/images/<split>, <root>/labels/<split>) or the whole of a
/// flat layout (<root>/images, <root>/labels), named "all".
struct DatasetPart {
  std::string name;
  std::vector<ImageRecord> records;
  std::vector<fs::path> image_paths;
};

bool has_split_layout(const fs::path& root);

/// Registry from <root>/data.yaml when present, otherwise the default one.
ClassRegistry load_registry(const fs::path& root);

/// Loads every part. Each image needs a label file with the same stem and
/// vice versa; a missing partner is a DataError. Only image headers are read.
std::vector<DatasetPart> load_dataset(const fs::path& root, const ClassRegistry& registry);

/// Label file path for `image_id` within a part.
fs::path label_path(const fs::path& root, std::string_view part, std::string_view image_id);
fs::path image_dir(const fs::path& root, std::string_view part);
fs::path label_dir(const fs::path& root, std::string_view part);

/// Stem -> predictions for every .txt under `dir`.
eval::PredictionSet load_predictions(const fs::path& dir, const ClassRegistry& registry);

}  // namespace czforge::io
