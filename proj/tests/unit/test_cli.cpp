#include "doctest.h"

#include <map>
#include <sstream>

#include "cli.hpp"
#include "czforge/annotations.hpp"
#include "czforge/dataset_io.hpp"
#include "czforge/eval.hpp"
#include "fixtures.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace czforge;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome czf(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = fixture::read_file(e.path());
  }
  return files;
}

Outcome gen(const fs::path& out, int n, const std::string& seed = "3") {
  return czf({"gen", "-n", std::to_string(n), "--seed", seed, "--out", out.string(), "--width", "128", "--height",
              "128"});
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(czf({}).code == 1);
  const Outcome help = czf({"--help"});
  CHECK(help.code == 0);
  for (const char* sub : {"gen", "augment", "split", "convert", "filter", "stats", "eval"}) {
    CHECK(help.out.find(sub) != std::string::npos);
  }
  const Outcome unknown = czf({"stats", "--in", ".", "--bogus"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("--bogus") != std::string::npos);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(czf({"frobnicate"}).code == 1);
  const Outcome missing = czf({"stats", "--in", "/nonexistent/czforge-dataset"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("/nonexistent/czforge-dataset") != std::string::npos);
}

TEST_CASE("gen refuses to overwrite without --force") {
  fixture::TempDir dir("cli-gen");
  const fs::path ds = dir / "ds";
  const Outcome first = gen(ds, 4);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("generated 4 images") != std::string::npos);
  const auto before = snapshot(ds);
  const Outcome second = gen(ds, 4);
  CHECK(second.code == 1);
  CHECK(second.err.find(ds.string()) != std::string::npos);
  CHECK(snapshot(ds) == before);
  CHECK(czf({"gen", "-n", "4", "--seed", "3", "--out", ds.string(), "--width", "128", "--height", "128", "--force"})
            .code == 0);
  CHECK(snapshot(ds) == before);
}

TEST_CASE("gen is schedule independent") {
  fixture::TempDir dir("cli-gen-j");
  REQUIRE(gen(dir / "a", 8).code == 0);
  REQUIRE(czf({"gen", "-n", "8", "--seed", "3", "--out", (dir / "b").string(), "--width", "128", "--height", "128",
               "-j", "4"})
              .code == 0);
  CHECK(snapshot(dir / "a") == snapshot(dir / "b"));
}

TEST_CASE("i/o failures exit 3") {
  fixture::TempDir dir("cli-io");
  fixture::write_file(dir / "plain.txt", "x");
  const Outcome r = gen(dir / "plain.txt" / "sub", 1);
  CHECK(r.code == 3);
  CHECK(r.err.find("plain.txt") != std::string::npos);
}

TEST_CASE("malformed labels exit 2 and name the file") {
  fixture::TempDir dir("cli-data");
  REQUIRE(gen(dir / "ds", 3).code == 0);
  fixture::write_file(dir / "ds/labels/scene_000001.txt", "0 0.5 0.5 0.2\n");
  const Outcome r = czf({"stats", "--in", (dir / "ds").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("scene_000001") != std::string::npos);
}

TEST_CASE("stats text and json agree with the generator manifest") {
  fixture::TempDir dir("cli-stats");
  REQUIRE(gen(dir / "ds", 10).code == 0);
  const Outcome r = czf({"stats", "--in", (dir / "ds").string(), "--json", (dir / "stats.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.starts_with("Type"));
  const auto manifest = nlohmann::json::parse(fixture::read_file(dir / "ds/manifest.json"));
  const auto stats = nlohmann::json::parse(fixture::read_file(dir / "stats.json"));
  CHECK(stats["total"]["images"] == 10);
  for (const std::string name : {"cone", "barrier", "beacon"}) {
    CHECK(stats["total"]["objects"][name] == manifest["class_counts"][name]);
  }
}

TEST_CASE("split writes the standard layout deterministically") {
  fixture::TempDir dir("cli-split");
  const fs::path ds = dir / "ds";
  REQUIRE(gen(ds, 20).code == 0);
  const auto input = snapshot(ds);
  const std::vector<std::string> base{"split", "--in", ds.string(), "--ratios", "0.6,0.2,0.2", "--seed", "11"};
  auto with_out = [&](const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a = base;
    a.push_back("--out");
    a.push_back(out.string());
    a.insert(a.end(), extra.begin(), extra.end());
    return czf(a);
  };
  REQUIRE(with_out(dir / "s1").code == 0);
  REQUIRE(with_out(dir / "s2").code == 0);
  CHECK(snapshot(dir / "s1") == snapshot(dir / "s2"));
  CHECK(snapshot(ds) == input);
  for (const char* s : {"train", "val", "test"}) {
    CHECK(fs::is_directory(dir / "s1" / "images" / s));
    CHECK(fs::is_directory(dir / "s1" / "labels" / s));
  }
  CHECK(fs::exists(dir / "s1/split_report.json"));
  CHECK(fs::exists(dir / "s1/data.yaml"));
  const auto parts = io::load_dataset(dir / "s1", io::load_registry(dir / "s1"));
  std::size_t images = 0;
  for (const auto& p : parts) images += p.records.size();
  CHECK(images == 20);

  REQUIRE(with_out(dir / "dry", {"--dry-run"}).code == 0);
  std::size_t listed = 0;
  for (const char* s : {"train", "val", "test"}) {
    std::istringstream lines(fixture::read_file(dir / "dry" / (std::string(s) + ".txt")));
    for (std::string l; std::getline(lines, l);) listed += !l.empty();
  }
  CHECK(listed == 20);
  CHECK_FALSE(fs::exists(dir / "dry/images"));

  CHECK(czf({"split", "--in", ds.string(), "--out", (dir / "bad").string(), "--ratios", "0.6,0.6,0.2"}).code == 1);
  CHECK(czf({"split", "--in", ds.string(), "--out", (dir / "bad").string(), "--ratios", "0.6,0.4"}).code == 1);
  CHECK(czf({"split", "--in", (dir / "s1").string(), "--out", (dir / "bad").string()}).code == 1);
  CHECK(czf({"split", "--in", ds.string(), "--out", (ds / "inner").string()}).code == 1);
}

TEST_CASE("augment twice with the same seed gives identical trees") {
  fixture::TempDir dir("cli-aug");
  const fs::path ds = dir / "ds";
  REQUIRE(gen(ds, 6).code == 0);
  const auto input = snapshot(ds);
  for (const char* name : {"a", "b"}) {
    REQUIRE(czf({"augment", "--in", ds.string(), "--out", (dir / name).string(), "--preset", "geometric", "--seed",
                 "8"})
                .code == 0);
  }
  REQUIRE(czf({"augment", "--in", ds.string(), "--out", (dir / "c").string(), "--preset", "geometric", "--seed", "8",
               "-j", "4"})
              .code == 0);
  CHECK(snapshot(dir / "a") == snapshot(dir / "b"));
  CHECK(snapshot(dir / "a") == snapshot(dir / "c"));
  CHECK(snapshot(ds) == input);
  CHECK(fs::exists(dir / "a/provenance.jsonl"));
  CHECK(fs::exists(dir / "a/pipeline.txt"));
  REQUIRE(czf({"augment", "--in", ds.string(), "--out", (dir / "d").string(), "--preset", "geometric", "--seed", "9"})
              .code == 0);
  CHECK(snapshot(dir / "a") != snapshot(dir / "d"));
  CHECK(czf({"augment", "--in", ds.string(), "--out", (dir / "e").string()}).code == 1);
  CHECK(czf({"augment", "--in", ds.string(), "--out", (dir / "e").string(), "--preset", "nope"}).code == 1);
}

TEST_CASE("eval with predictions equal to labels gives all ones") {
  fixture::TempDir dir("cli-eval");
  const fs::path ds = dir / "ds";
  REQUIRE(gen(ds, 12).code == 0);
  const ClassRegistry reg = io::load_registry(ds);
  for (const auto& e : fs::directory_iterator(ds / "labels")) {
    std::vector<eval::Prediction> preds;
    for (const Annotation& a : parse_yolo_label(fixture::read_file(e.path()), reg)) {
      preds.push_back({a.class_id, a.bbox, 1.0});
    }
    fixture::write_file(dir / "pred" / e.path().filename(), eval::serialize_prediction_file(preds));
  }
  const Outcome r = czf({"eval", "--gt", ds.string(), "--pred", (dir / "pred").string(), "--out",
                         (dir / "report").string()});
  REQUIRE(r.code == 0);
  const auto rep = nlohmann::json::parse(fixture::read_file(dir / "report/report.json"));
  std::ostringstream dump;
  dump << rep;
  CAPTURE(dump.str());
  bool any_class = false;
  for (const auto& row : rep["per_class"]) {
    if (row["instances"] == 0) continue;
    any_class = true;
    for (const char* k : {"precision", "recall", "f1", "mAP50", "mAP50-95"}) CHECK(row[k].get<double>() == 1.0);
  }
  CHECK(any_class);
  for (const char* k : {"precision", "recall", "f1", "mAP50", "mAP50-95"}) {
    CHECK(rep["aggregate"][k].get<double>() == 1.0);
  }
  CHECK(fs::exists(dir / "report/report.csv"));
  CHECK(fs::exists(dir / "report/curves/cone_iou0.50.csv"));

  // A prediction file with no ground-truth partner is a data error.
  fixture::write_file(dir / "pred/ghost.txt", "0 0.9 0.5 0.5 0.1 0.1\n");
  const Outcome orphan = czf({"eval", "--gt", ds.string(), "--pred", (dir / "pred").string(), "--out",
                              (dir / "report2").string()});
  CHECK(orphan.code == 2);
  CHECK(orphan.err.find("ghost") != std::string::npos);

  CHECK(czf({"eval", "--gt", ds.string(), "--pred", (dir / "pred").string(), "--out", (dir / "r3").string(), "--iou",
             "0.6,0.7"})
            .code == 1);
}

TEST_CASE("filter and convert") {
  fixture::TempDir dir("cli-fc");
  const fs::path src = dir / "src";
  fixture::write_png(src / "images/big.png");
  fixture::write_png(src / "images/small.png");
  fixture::write_file(src / "labels/big.txt", "0 0.5 0.5 0.9 0.9\n1 0.2 0.2 0.1 0.1\n");
  fixture::write_file(src / "labels/small.txt", "2 0.5 0.5 0.1 0.1\n");
  const Outcome f = czf({"filter", "--in", src.string(), "--out", (dir / "kept").string(), "--max-area", "0.35"});
  REQUIRE(f.code == 0);
  CHECK(fs::exists(dir / "kept/filter.log"));
  CHECK(fixture::read_file(dir / "kept/labels/small.txt") == fixture::read_file(src / "labels/small.txt"));
  CHECK_FALSE(fs::exists(dir / "kept/labels/big.txt"));
  CHECK(fixture::read_file(dir / "kept/filter.log").find("big") != std::string::npos);
  CHECK(f.out.find("kept 1, removed 1") != std::string::npos);
  CHECK(czf({"filter", "--in", src.string(), "--out", (dir / "k2").string(), "--max-area", "0"}).code == 1);

  fixture::write_file(dir / "ann.xml", R"(<annotations>
  <image id="0" name="big.png" width="8" height="8">
    <box label="cone" xtl="2" ytl="2" xbr="6" ybr="6"/>
  </image>
</annotations>)");
  const Outcome c = czf({"convert", "--xml", (dir / "ann.xml").string(), "--out", (dir / "conv").string(), "--images",
                         (src / "images").string()});
  REQUIRE(c.code == 0);
  CHECK(fixture::read_file(dir / "conv/labels/big.txt") == "0 0.500000 0.500000 0.500000 0.500000\n");
  CHECK(fs::exists(dir / "conv/images/big.png"));
  fixture::write_file(dir / "bad.xml", R"(<annotations><image id="0" name="q.png" width="8" height="8">
  <box label="pedestrian" xtl="1" ytl="1" xbr="5" ybr="5"/></image></annotations>)");
  const Outcome bad = czf({"convert", "--xml", (dir / "bad.xml").string(), "--out", (dir / "conv2").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("pedestrian") != std::string::npos);
}
