#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "irstd/metrics.hpp"
#include "irstd/pgm.hpp"
#include "irstd/synth.hpp"

using namespace irstd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("synth_test_") + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
};

}  // namespace

TEST_CASE("scene generation is deterministic in (seed, index)") {
  SceneConfig c;
  c.seed = 77;
  Sample a = generate_scene(c, 5);
  Sample b = generate_scene(c, 5);
  CHECK(a.image == b.image);
  CHECK(a.mask.v == b.mask.v);
  Sample other = generate_scene(c, 6);
  CHECK(a.image != other.image);
  SceneConfig c2 = c;
  c2.seed = 78;
  CHECK(generate_scene(c2, 5).image != a.image);
}

TEST_CASE("image values are 8-bit quantized and in range") {
  SceneConfig c;
  c.seed = 3;
  Sample s = generate_scene(c, 0);
  for (double v : s.image) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    double lvl = v * 255.0;
    CHECK(std::abs(lvl - std::round(lvl)) < 1e-9);
  }
}

TEST_CASE("zero targets per image gives an empty mask") {
  SceneConfig c;
  c.min_targets = 0;
  c.max_targets = 0;
  c.seed = 9;
  Sample s = generate_scene(c, 0);
  CHECK(s.mask.empty_mask());
  CHECK(s.targets.empty());
}

TEST_CASE("small-bucket-only mix keeps every target at most 10 px") {
  SceneConfig c;
  c.scale_mix = {1.0, 0.0, 0.0};
  c.seed = 13;
  for (int i = 0; i < 20; ++i) {
    Sample s = generate_scene(c, i);
    for (const TargetInfo& t : s.targets) {
      CHECK(t.pixel_count <= 10);
      CHECK(t.pixel_count >= 1);
      CHECK(t.bucket == 0);
    }
  }
}

TEST_CASE("mask pixel counts agree with the component labeling") {
  SceneConfig c;
  c.seed = 17;
  for (int i = 0; i < 10; ++i) {
    Sample s = generate_scene(c, i);
    ComponentLabeling cl = connected_components(s.mask);
    // targets are placed without touching, so components == targets
    CHECK(cl.components.size() == s.targets.size());
    int64_t total = 0;
    for (const TargetInfo& t : s.targets) total += t.pixel_count;
    CHECK(s.mask.count() == total);
  }
}

TEST_CASE("target centers carry bright pixels") {
  SceneConfig c;
  c.seed = 23;
  for (int i = 0; i < 5; ++i) {
    Sample s = generate_scene(c, i);
    for (const TargetInfo& t : s.targets) {
      int r = static_cast<int>(std::lround(t.row));
      int cc = static_cast<int>(std::lround(t.col));
      CHECK(s.mask.at(r, cc) == 1);
      CHECK(s.image[static_cast<size_t>(r) * s.w + cc] > c.base_level);
    }
  }
}

TEST_CASE("dataset writing: split sizes, disjoint ids, loadable") {
  TempDir tmp("dataset");
  SceneConfig c;
  c.seed = 31;
  DatasetManifest m = generate_dataset(c, 20, 5, tmp.path);
  CHECK(m.entries.size() == 25);
  std::set<int> ids;
  int train = 0, test = 0;
  for (const auto& e : m.entries) {
    ids.insert(e.id);
    (e.split == "train" ? train : test) += 1;
  }
  CHECK(ids.size() == 25);
  CHECK(train == 20);
  CHECK(test == 5);
  CHECK(fs::exists(tmp.path / "manifest.json"));
  auto train_set = load_split(tmp.path, "train");
  auto test_set = load_split(tmp.path, "test");
  CHECK(train_set.size() == 20);
  CHECK(test_set.size() == 5);
  CHECK(train_set[0].h == 64);
  // loaded image matches the generated scene bit for bit
  Sample s0 = generate_scene(c, 0);
  CHECK(train_set[0].image == s0.image);
  CHECK(train_set[0].mask.v == s0.mask.v);
  // manifest round trip
  DatasetManifest loaded = load_manifest(tmp.path);
  CHECK(loaded.entries.size() == 25);
  CHECK(loaded.seed == c.seed);
  CHECK(loaded.config_hash == scene_config_hash(c));
}

TEST_CASE("regeneration from the same seed gives an identical content hash") {
  TempDir a("regen_a"), b("regen_b");
  SceneConfig c;
  c.seed = 37;
  generate_dataset(c, 10, 3, a.path);
  generate_dataset(c, 10, 3, b.path);
  CHECK(dataset_content_hash(a.path) == dataset_content_hash(b.path));
  SceneConfig c2 = c;
  c2.seed = 38;
  TempDir d("regen_d");
  generate_dataset(c2, 10, 3, d.path);
  CHECK(dataset_content_hash(a.path) != dataset_content_hash(d.path));
}

TEST_CASE("uniform scale mix lands every bucket near a third at n=300") {
  SceneConfig c;
  c.seed = 41;
  int counts[3] = {0, 0, 0};
  int total = 0;
  // 300 targets drawn across as many scenes as needed
  for (int i = 0; total < 300; ++i) {
    Sample s = generate_scene(c, i);
    for (const TargetInfo& t : s.targets) {
      if (total >= 300) break;
      counts[t.bucket] += 1;
      ++total;
    }
  }
  for (int b = 0; b < 3; ++b) {
    double frac = counts[b] / 300.0;
    CHECK(frac >= 0.23);
    CHECK(frac <= 0.43);
  }
}

TEST_CASE("ingestion pairs by stem, skips orphans, binarizes at 128") {
  TempDir src("ingest_src"), out("ingest_out");
  fs::create_directories(src.path / "img");
  fs::create_directories(src.path / "msk");
  auto gray = [](int h, int w, uint8_t fill) {
    GrayImage g{h, w, std::vector<uint8_t>(static_cast<size_t>(h) * w, fill)};
    return g;
  };
  for (const char* stem : {"a", "b", "c"}) {
    write_pgm(src.path / "img" / (std::string(stem) + ".pgm"), gray(16, 16, 80));
    GrayImage m = gray(16, 16, 0);
    m.pixels[5 * 16 + 5] = 255;  // -> 1
    m.pixels[5 * 16 + 6] = 127;  // -> 0 (below threshold)
    m.pixels[5 * 16 + 7] = 128;  // -> 1 (>= 128)
    write_pgm(src.path / "msk" / (std::string(stem) + ".pgm"), m);
  }
  // an orphan image without a mask
  write_pgm(src.path / "img" / "orphan.pgm", gray(16, 16, 10));
  DatasetManifest m = ingest_external(src.path / "img", src.path / "msk", out.path);
  CHECK(m.entries.size() == 3);
  CHECK(m.skipped == 1);
  auto samples = load_split(out.path, "train");
  REQUIRE(!samples.empty());
  CHECK(samples[0].mask.count() == 2);
  CHECK(samples[0].mask.at(5, 5) == 1);
  CHECK(samples[0].mask.at(5, 6) == 0);
  CHECK(samples[0].mask.at(5, 7) == 1);
  // nothing valid -> error
  TempDir empty("ingest_empty"), out2("ingest_out2");
  fs::create_directories(empty.path / "img");
  fs::create_directories(empty.path / "msk");
  CHECK_THROWS_AS(ingest_external(empty.path / "img", empty.path / "msk", out2.path),
                  std::runtime_error);
}

TEST_CASE("PGM round trip and header parsing") {
  TempDir tmp("pgm");
  GrayImage g{3, 4, {0, 50, 100, 150, 200, 250, 255, 1, 2, 3, 4, 5}};
  write_pgm(tmp.path / "x.pgm", g);
  GrayImage r = read_pgm(tmp.path / "x.pgm");
  CHECK(r.h == 3);
  CHECK(r.w == 4);
  CHECK(r.pixels == g.pixels);
  // comments in the header are tolerated
  std::ofstream f(tmp.path / "c.pgm", std::ios::binary);
  f << "P5\n# a comment\n2 2\n# another\n255\n";
  f.write("\x01\x02\x03\x04", 4);
  f.close();
  GrayImage c = read_pgm(tmp.path / "c.pgm");
  CHECK(c.h == 2);
  CHECK(c.w == 2);
  CHECK(c.pixels == std::vector<uint8_t>{1, 2, 3, 4});
  CHECK_THROWS_AS(read_pgm(tmp.path / "missing.pgm"), std::runtime_error);
}

TEST_CASE("invalid scene configs are rejected") {
  SceneConfig bad;
  bad.noise_std = 1.0;  // violates the contrast margin
  CHECK_THROWS_AS(generate_scene(bad, 0), std::invalid_argument);
  SceneConfig neg;
  neg.min_targets = 2;
  neg.max_targets = 1;
  CHECK_THROWS_AS(generate_scene(neg, 0), std::invalid_argument);
}
