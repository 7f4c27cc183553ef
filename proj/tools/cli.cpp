#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "czforge/annotations.hpp"
#include "czforge/augment.hpp"
#include "czforge/dataset_io.hpp"
#include "czforge/error.hpp"
#include "czforge/eval.hpp"
#include "czforge/parallel.hpp"
#include "czforge/splitter.hpp"
#include "czforge/synthgen.hpp"

namespace czforge::cli {
namespace {

namespace fs = std::filesystem;

void ensure_distinct(const fs::path& in, const fs::path& out) {
  std::error_code ec;
  const fs::path a = fs::weakly_canonical(in, ec);
  const fs::path b = fs::weakly_canonical(out, ec);
  if (a == b) throw ValidationError("output directory must differ from the input");
  const std::string as = a.string() + "/";
  if (b.string().rfind(as, 0) == 0) throw ValidationError("output directory must not live inside the input");
}

void copy_into(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  if (ec) throw IoError("cannot copy '" + from.string() + "' to '" + to.string() + "': " + ec.message());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

ClassRegistry registry_for(const fs::path& dataset, const std::string& config_path) {
  if (!config_path.empty()) return parse_dataset_config(io::read_text(config_path)).classes;
  return io::load_registry(dataset);
}

void write_config(const fs::path& root, const ClassRegistry& registry, bool split_layout) {
  DatasetConfig cfg;
  cfg.root_path = ".";
  for (Split s : kAllSplits) cfg.split_paths[s] = split_layout ? "images/" + std::string(split_name(s)) : "images";
  cfg.classes = registry;
  io::write_text(root / "data.yaml", serialize_dataset_config(cfg));
}

std::vector<double> parse_iou_spec(const std::string& text) {
  std::vector<double> out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ValidationError("bad IoU threshold '" + s + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ValidationError("IoU range must be start:step:stop");
    const double start = number(parts[0]);
    const double step = number(parts[1]);
    const double stop = number(parts[2]);
    if (!(step > 0.0)) throw ValidationError("IoU step must be positive");
    for (int k = 0;; ++k) {
      const double v = std::round((start + k * step) * 1e9) / 1e9;
      if (v > stop + 1e-9) break;
      out.push_back(v);
    }
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  }
  return out;
}

std::string format_threshold(double t) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << t;
  return s.str();
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string drift = "none";
  std::string pipeline;
  int width = 640;
  int height = 640;
  int min_obstacles = 1;
  int max_obstacles = 4;
  double min_distance = 0.12;
  double max_distance = 0.45;
  bool allow_overlap = false;
  unsigned workers = 1;
  bool force = false;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  synth::GenerateOptions opt;
  opt.count = a.count;
  opt.seed = a.seed;
  opt.out_root = a.out;
  opt.workers = a.workers;
  opt.distribution.width = a.width;
  opt.distribution.height = a.height;
  opt.distribution.min_obstacles = a.min_obstacles;
  opt.distribution.max_obstacles = a.max_obstacles;
  opt.distribution.min_distance = a.min_distance;
  opt.distribution.max_distance = a.max_distance;
  opt.distribution.allow_overlap = a.allow_overlap;
  if (!a.pipeline.empty()) {
    opt.drift = augment::parse_pipeline(io::read_text(a.pipeline));
    if (opt.drift->name.empty()) opt.drift->name = fs::path(a.pipeline).stem().string();
    opt.drift->master_seed = a.seed;
  } else if (a.drift != "none") {
    opt.drift = augment::preset(a.drift, a.seed);
  }
  synth::sample_scene(opt.distribution, 0);  // validates the distribution before touching the disk
  io::prepare_output_dir(a.out, a.force);
  const synth::GenerateSummary s = synth::generate_dataset(opt);
  out << "generated " << s.images << " images in " << a.out << "\n";
  for (std::size_t c = 0; c < s.class_counts.size(); ++c) {
    out << "  " << opt.registry.names()[c] << ": " << s.class_counts[c] << "\n";
  }
  if (s.omitted_obstacles > 0) out << "  omitted obstacles: " << s.omitted_obstacles << " (see generation.log)\n";
  return kOk;
}

struct AugmentArgs {
  std::string in;
  std::string out;
  std::string pipeline;
  std::string preset;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  bool force = false;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out) {
  if (a.pipeline.empty() == a.preset.empty()) throw ValidationError("give exactly one of --pipeline or --preset");
  augment::AugmentPipeline pipeline =
      a.pipeline.empty() ? augment::preset(a.preset) : augment::parse_pipeline(io::read_text(a.pipeline));
  if (a.seed) pipeline.master_seed = *a.seed;
  ensure_distinct(a.in, a.out);
  const ClassRegistry registry = io::load_registry(a.in);
  const std::vector<io::DatasetPart> parts = io::load_dataset(a.in, registry);
  io::prepare_output_dir(a.out, a.force);

  std::string provenance;
  std::size_t total = 0;
  for (const io::DatasetPart& part : parts) {
    make_dirs(io::image_dir(a.out, part.name));
    make_dirs(io::label_dir(a.out, part.name));
    std::vector<std::string> lines(part.records.size());
    parallel_for(part.records.size(), a.workers, [&](std::size_t i) {
      const ImageRecord& rec = part.records[i];
      const Rgb8Image image = load_image(part.image_paths[i]);
      augment::AugmentResult r = augment::apply_pipeline(image, rec.annotations, pipeline, rec.image_id);
      save_image(r.image, io::image_dir(a.out, part.name) / (rec.image_id + ".png"));
      io::write_text(io::label_path(a.out, part.name, rec.image_id), serialize_yolo_label(r.annotations));
      lines[i] = augment::provenance_to_json(r.provenance);
    });
    for (const std::string& l : lines) provenance += l + "\n";
    total += part.records.size();
  }
  io::write_text(fs::path(a.out) / "provenance.jsonl", provenance);
  io::write_text(fs::path(a.out) / "pipeline.txt", augment::serialize_pipeline(pipeline));
  write_config(a.out, registry, io::has_split_layout(a.in));
  out << "augmented " << total << " images into " << a.out << "\n";
  return kOk;
}

struct SplitArgs {
  std::string in;
  std::string out;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  bool dry_run = false;
  bool force = false;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
  if (a.ratios.size() != 3) throw ValidationError("--ratios needs three values: train,val,test");
  split::SplitSpec spec;
  spec.ratios = {a.ratios[0], a.ratios[1], a.ratios[2]};
  spec.seed = a.seed;
  spec.validate();
  ensure_distinct(a.in, a.out);
  if (io::has_split_layout(a.in)) throw ValidationError("input is already split; give a flat dataset");
  const ClassRegistry registry = io::load_registry(a.in);
  const std::vector<io::DatasetPart> parts = io::load_dataset(a.in, registry);
  const io::DatasetPart& flat = parts.front();
  const split::SplitResult result = split::stratified_split(flat.records, spec, registry);
  io::prepare_output_dir(a.out, a.force);

  if (a.dry_run) {
    for (Split s : kAllSplits) {
      std::string list;
      for (std::size_t i = 0; i < flat.records.size(); ++i) {
        if (result.assignment[i] == s) list += flat.records[i].image_id + "\n";
      }
      io::write_text(fs::path(a.out) / (std::string(split_name(s)) + ".txt"), list);
    }
  } else {
    for (Split s : kAllSplits) {
      make_dirs(io::image_dir(a.out, split_name(s)));
      make_dirs(io::label_dir(a.out, split_name(s)));
    }
    for (std::size_t i = 0; i < flat.records.size(); ++i) {
      const std::string part(split_name(result.assignment[i]));
      const ImageRecord& rec = flat.records[i];
      copy_into(flat.image_paths[i], io::image_dir(a.out, part) / flat.image_paths[i].filename());
      copy_into(io::label_path(a.in, "all", rec.image_id), io::label_path(a.out, part, rec.image_id));
    }
    write_config(a.out, registry, true);
  }
  io::write_text(fs::path(a.out) / "split_report.json", split::report_to_json(result.report));
  const std::string table = split::report_to_text(result.report);
  io::write_text(fs::path(a.out) / "split_report.txt", table);
  out << table;
  return kOk;
}

struct ConvertArgs {
  std::string xml;
  std::string out;
  std::string config;
  std::string images;
  bool force = false;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  const ClassRegistry registry =
      a.config.empty() ? ClassRegistry::construction_zone() : parse_dataset_config(io::read_text(a.config)).classes;
  const std::vector<ImageRecord> records = parse_cvat_xml(io::read_text(a.xml), registry);
  if (!a.images.empty()) {
    for (const ImageRecord& rec : records) {
      bool found = false;
      for (const char* ext : {".png", ".ppm"}) found = found || fs::exists(fs::path(a.images) / (rec.image_id + ext));
      if (!found) throw DataError("no image file for '" + rec.image_id + "' in " + a.images);
    }
  }
  io::prepare_output_dir(a.out, a.force);
  make_dirs(fs::path(a.out) / "labels");
  make_dirs(fs::path(a.out) / "images");
  for (const ImageRecord& rec : records) {
    io::write_text(io::label_path(a.out, "all", rec.image_id), serialize_yolo_label(rec.annotations));
    if (a.images.empty()) continue;
    for (const char* ext : {".png", ".ppm"}) {
      const fs::path src = fs::path(a.images) / (rec.image_id + ext);
      if (fs::exists(src)) {
        copy_into(src, fs::path(a.out) / "images" / src.filename());
        break;
      }
    }
  }
  write_config(a.out, registry, false);
  std::size_t boxes = 0;
  for (const ImageRecord& r : records) boxes += r.annotations.size();
  out << "converted " << records.size() << " images, " << boxes << " boxes into " << a.out << "\n";
  return kOk;
}

struct FilterArgs {
  std::string in;
  std::string out;
  double max_area = 0.35;
  bool force = false;
};

int cmd_filter(const FilterArgs& a, std::ostream& out) {
  if (!(a.max_area > 0.0 && a.max_area <= 1.0)) throw ValidationError("--max-area must be in (0,1]");
  ensure_distinct(a.in, a.out);
  const ClassRegistry registry = io::load_registry(a.in);
  const std::vector<io::DatasetPart> parts = io::load_dataset(a.in, registry);
  io::prepare_output_dir(a.out, a.force);
  std::string log;
  std::size_t kept = 0;
  std::size_t removed = 0;
  for (const io::DatasetPart& part : parts) {
    make_dirs(io::image_dir(a.out, part.name));
    make_dirs(io::label_dir(a.out, part.name));
    const FilterResult r = filter_records(part.records, a.max_area);
    std::size_t k = 0;
    for (std::size_t i = 0; i < part.records.size(); ++i) {
      const ImageRecord& rec = part.records[i];
      if (k < r.kept.size() && r.kept[k].image_id == rec.image_id) {
        ++k;
        copy_into(part.image_paths[i], io::image_dir(a.out, part.name) / part.image_paths[i].filename());
        copy_into(io::label_path(a.in, part.name, rec.image_id), io::label_path(a.out, part.name, rec.image_id));
        continue;
      }
      const std::string reason = rec.annotations.empty() ? "no obstacles" : "obstacle too close (box area > max)";
      log += part.name + "/" + rec.image_id + ": " + reason + "\n";
    }
    kept += r.kept.size();
    removed += r.removed.size();
  }
  io::write_text(fs::path(a.out) / "filter.log", log);
  write_config(a.out, registry, io::has_split_layout(a.in));
  out << "kept " << kept << ", removed " << removed << " (see filter.log)\n";
  return kOk;
}

struct StatsArgs {
  std::string in;
  std::string json;
  std::string config;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  const ClassRegistry registry = registry_for(a.in, a.config);
  const std::vector<io::DatasetPart> parts = io::load_dataset(a.in, registry);
  std::vector<SplitRecords> views;
  for (const io::DatasetPart& p : parts) views.push_back({p.name, p.records});
  const DatasetStats stats = dataset_stats(views, registry);
  out << render_stats_table(stats);
  if (!a.json.empty()) {
    nlohmann::ordered_json j;
    j["classes"] = stats.class_names;
    for (const auto& row : stats.rows) {
      nlohmann::ordered_json counts = nlohmann::ordered_json::object();
      for (std::size_t c = 0; c < row.counts.size(); ++c) counts[stats.class_names[c]] = row.counts[c];
      j["splits"][row.split] = {{"images", row.images}, {"objects", counts}};
    }
    nlohmann::ordered_json totals = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < stats.totals.size(); ++c) totals[stats.class_names[c]] = stats.totals[c];
    j["total"] = {{"images", stats.total_images}, {"objects", totals}};
    io::write_text(a.json, j.dump(2) + "\n");
  }
  return kOk;
}

struct EvalArgs {
  std::string gt;
  std::string split;
  std::string pred;
  std::string out;
  double conf = 0.2;
  std::string iou = "0.50:0.05:0.95";
  unsigned workers = 1;
  bool force = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  eval::EvalConfig config;
  config.conf_threshold = a.conf;
  config.iou_thresholds = parse_iou_spec(a.iou);
  config.workers = a.workers;
  config.validate();
  const ClassRegistry registry = io::load_registry(a.gt);
  const std::vector<io::DatasetPart> parts = io::load_dataset(a.gt, registry);
  std::vector<ImageRecord> gt;
  for (const io::DatasetPart& p : parts) {
    if (!a.split.empty() && p.name != a.split) continue;
    gt.insert(gt.end(), p.records.begin(), p.records.end());
  }
  if (!a.split.empty() && std::none_of(parts.begin(), parts.end(), [&](const auto& p) { return p.name == a.split; })) {
    throw ValidationError("dataset has no split '" + a.split + "'");
  }
  const eval::PredictionSet preds = io::load_predictions(a.pred, registry);
  const eval::EvalReport report = eval::evaluate(gt, preds, config, registry);

  io::prepare_output_dir(a.out, a.force);
  const fs::path root(a.out);
  io::write_text(root / "report.json", eval::report_to_json(report));
  io::write_text(root / "report.csv", eval::report_to_csv(report));
  make_dirs(root / "curves");
  for (const eval::PRCurve& c : report.curves) {
    const std::string name = report.class_names[static_cast<std::size_t>(c.class_id)] + "_iou" +
                             format_threshold(c.iou_threshold) + ".csv";
    io::write_text(root / "curves" / name, eval::pr_curve_to_csv(c));
  }
  out << eval::report_to_text(report);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Construction-zone obstacle dataset forge and detection evaluator", "czforge"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate synthetic construction-zone scenes with exact labels");
  g->add_option("--count,-n", gen.count, "Number of scenes")->required();
  g->add_option("--seed", gen.seed, "Master seed");
  g->add_option("--out,-o", gen.out, "Output dataset directory")->required();
  g->add_option("--drift", gen.drift, "Drift preset: none, light_drift, heavy_drift, geometric");
  g->add_option("--pipeline", gen.pipeline, "Drift pipeline file (overrides --drift)");
  g->add_option("--width", gen.width, "Image width")->check(CLI::PositiveNumber);
  g->add_option("--height", gen.height, "Image height")->check(CLI::PositiveNumber);
  g->add_option("--min-obstacles", gen.min_obstacles)->check(CLI::NonNegativeNumber);
  g->add_option("--max-obstacles", gen.max_obstacles)->check(CLI::NonNegativeNumber);
  g->add_option("--min-distance", gen.min_distance, "Nearest normalized obstacle depth");
  g->add_option("--max-distance", gen.max_distance, "Farthest normalized obstacle depth");
  g->add_flag("--allow-overlap", gen.allow_overlap, "Allow obstacles to occlude each other");
  g->add_option("--workers,-j", gen.workers, "Worker threads")->check(CLI::PositiveNumber);
  g->add_flag("--force", gen.force, "Overwrite an existing output directory");

  AugmentArgs aug;
  auto* au = app.add_subcommand("augment", "Apply a seeded augmentation pipeline to a dataset");
  au->add_option("--in,-i", aug.in, "Input dataset")->required()->check(CLI::ExistingDirectory);
  au->add_option("--out,-o", aug.out, "Output dataset")->required();
  au->add_option("--pipeline", aug.pipeline, "Pipeline description file");
  au->add_option("--preset", aug.preset, "Built-in pipeline: light_drift, heavy_drift, geometric");
  au->add_option("--seed", aug.seed, "Override the pipeline master seed");
  au->add_option("--workers,-j", aug.workers, "Worker threads")->check(CLI::PositiveNumber);
  au->add_flag("--force", aug.force, "Overwrite an existing output directory");

  SplitArgs sp;
  auto* s = app.add_subcommand("split", "Stratified train/val/test split of a flat dataset");
  s->add_option("--in,-i", sp.in, "Flat input dataset")->required()->check(CLI::ExistingDirectory);
  s->add_option("--out,-o", sp.out, "Output dataset")->required();
  s->add_option("--ratios", sp.ratios, "train,val,test fractions")->delimiter(',')->expected(3);
  s->add_option("--seed", sp.seed, "Shuffle seed");
  s->add_flag("--dry-run", sp.dry_run, "Only write train/val/test lists and the report");
  s->add_flag("--force", sp.force, "Overwrite an existing output directory");

  ConvertArgs cv;
  auto* c = app.add_subcommand("convert", "Convert a CVAT for images 1.1 XML export to YOLO labels");
  c->add_option("--xml", cv.xml, "CVAT XML file")->required()->check(CLI::ExistingFile);
  c->add_option("--out,-o", cv.out, "Output dataset")->required();
  c->add_option("--config", cv.config, "Dataset config with the class names")->check(CLI::ExistingFile);
  c->add_option("--images", cv.images, "Directory holding the annotated images")->check(CLI::ExistingDirectory);
  c->add_flag("--force", cv.force, "Overwrite an existing output directory");

  FilterArgs fl;
  auto* f = app.add_subcommand("filter", "Drop images without obstacles or with obstacles too close");
  f->add_option("--in,-i", fl.in, "Input dataset")->required()->check(CLI::ExistingDirectory);
  f->add_option("--out,-o", fl.out, "Output dataset")->required();
  f->add_option("--max-area", fl.max_area, "Largest allowed box area fraction");
  f->add_flag("--force", fl.force, "Overwrite an existing output directory");

  StatsArgs st;
  auto* t = app.add_subcommand("stats", "Per-split per-class object counts");
  t->add_option("--in,-i", st.in, "Dataset")->required()->check(CLI::ExistingDirectory);
  t->add_option("--json", st.json, "Also write the counts as JSON");
  t->add_option("--config", st.config, "Dataset config with the class names")->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate prediction files against ground truth");
  e->add_option("--gt", ev.gt, "Ground-truth dataset")->required()->check(CLI::ExistingDirectory);
  e->add_option("--split", ev.split, "Only evaluate this split (train, val, test)");
  e->add_option("--pred", ev.pred, "Directory of prediction files")->required()->check(CLI::ExistingDirectory);
  e->add_option("--out,-o", ev.out, "Report directory")->required();
  e->add_option("--conf", ev.conf, "Confidence threshold for P/R/F1 and the confusion matrix");
  e->add_option("--iou", ev.iou, "IoU thresholds: start:step:stop or a comma list");
  e->add_option("--workers,-j", ev.workers, "Worker threads")->check(CLI::PositiveNumber);
  e->add_flag("--force", ev.force, "Overwrite an existing output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "czforge: " << ex.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*au) return cmd_augment(aug, out);
    if (*s) return cmd_split(sp, out);
    if (*c) return cmd_convert(cv, out);
    if (*f) return cmd_filter(fl, out);
    if (*t) return cmd_stats(st, out);
    if (*e) return cmd_eval(ev, out);
  } catch (const ValidationError& ex) {
    err << "czforge: " << ex.what() << "\n";
    return kUsage;
  } catch (const DataError& ex) {
    err << "czforge: data error: " << ex.what() << "\n";
    return kData;
  } catch (const IoError& ex) {
    err << "czforge: i/o error: " << ex.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& ex) {
    err << "czforge: i/o error: " << ex.what() << "\n";
    return kIo;
  }
  return kUsage;
}

}  // namespace czforge::cli
