#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cuae/data/generator.hpp"

using namespace cuae;
using data::GenConfig;
using data::SceneRecord;

namespace {

std::vector<SceneRecord> all_scenes(const data::Splits& s) {
  std::vector<SceneRecord> out = s.train;
  out.insert(out.end(), s.val.begin(), s.val.end());
  return out;
}

bool records_identical(const SceneRecord& a, const SceneRecord& b) {
  return a.scene_id == b.scene_id && a.mode_label == b.mode_label &&
         (a.history - b.history).cwiseAbs().maxCoeff() == 0.0 &&
         (a.future - b.future).cwiseAbs().maxCoeff() == 0.0 &&
         (a.branch_geometry - b.branch_geometry).cwiseAbs().maxCoeff() == 0.0;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("generation is a pure function of the config") {
  GenConfig cfg;
  cfg.n_scenes = 40;
  cfg.seed = 5;
  auto a = data::generate(cfg);
  auto b = data::generate(cfg);
  REQUIRE(a.train.size() == b.train.size());
  REQUIRE(a.val.size() == b.val.size());
  for (size_t i = 0; i < a.train.size(); ++i)
    CHECK(records_identical(a.train[i], b.train[i]));
  for (size_t i = 0; i < a.val.size(); ++i)
    CHECK(records_identical(a.val[i], b.val[i]));
}

TEST_CASE("each scene has its own stream, independent of the run size") {
  GenConfig small, large;
  small.n_scenes = 10;
  large.n_scenes = 30;
  small.seed = large.seed = 11;
  auto a = all_scenes(data::generate(small));
  auto b = all_scenes(data::generate(large));
  for (int i = 0; i < 10; ++i) CHECK(records_identical(a[i], b[i]));
}

TEST_CASE("the split peels off the last fraction by id") {
  GenConfig cfg;
  cfg.n_scenes = 70;
  cfg.seed = 3;
  auto s = data::generate(cfg);
  REQUIRE(s.train.size() == 60);
  REQUIRE(s.val.size() == 10);
  for (int i = 0; i < 60; ++i) CHECK(s.train[i].scene_id == i);
  for (int i = 0; i < 10; ++i) CHECK(s.val[i].scene_id == 60 + i);

  cfg.val_frac = 0.0;
  auto t = data::generate(cfg);
  CHECK(t.train.size() == 70);
  CHECK(t.val.empty());
}

TEST_CASE("histories approach the origin in a straight constant-speed line") {
  GenConfig cfg;
  cfg.n_scenes = 25;
  cfg.seed = 7;
  for (const auto& r : all_scenes(data::generate(cfg))) {
    REQUIRE(r.history.rows() == 10);
    CHECK(r.history(9, 0) == 0.0);
    CHECK(r.history(9, 1) == 0.0);
    CHECK(r.history.col(1).cwiseAbs().maxCoeff() == 0.0);
    const double step = r.history(9, 0) - r.history(8, 0);
    const double speed = step / data::kDt;
    CHECK(speed >= 5.0);
    CHECK(speed <= 10.0);
    for (int i = 1; i < 10; ++i)
      CHECK(r.history(i, 0) - r.history(i - 1, 0) ==
            doctest::Approx(step).epsilon(1e-12));
  }
}

TEST_CASE("noiseless futures are constant-speed circular arcs") {
  GenConfig cfg;
  cfg.n_scenes = 30;
  cfg.noise_std = 0.0;
  cfg.seed = 13;
  int checked = 0;
  for (const auto& r : all_scenes(data::generate(cfg))) {
    const double psi = r.branch_geometry[2 * r.mode_label];
    if (std::abs(psi) < 0.01) continue;  // nearly straight: radius blows up
    const double speed = (r.history.row(9) - r.history.row(8)).norm() /
                         data::kDt;
    const double omega = psi / (r.future.rows() * data::kDt);
    const double radius = speed / omega;
    // Every arc point lies on the circle centered at (0, R)...
    const Eigen::Vector2d center(0.0, radius);
    for (int t = 0; t < r.future.rows(); ++t) {
      const double d = (r.future.row(t).transpose() - center).norm();
      CHECK(d == doctest::Approx(std::abs(radius)).epsilon(1e-9));
    }
    // ...and consecutive chords all have the same length (constant speed).
    Eigen::Vector2d prev(0.0, 0.0);
    const double chord = 2.0 * std::abs(radius) *
                         std::sin(std::abs(omega) * data::kDt / 2.0);
    for (int t = 0; t < r.future.rows(); ++t) {
      const Eigen::Vector2d cur = r.future.row(t).transpose();
      CHECK((cur - prev).norm() == doctest::Approx(chord).epsilon(1e-9));
      prev = cur;
    }
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("the noiseless endpoint of the taken branch is its analytic target") {
  GenConfig cfg;
  cfg.n_scenes = 20;
  cfg.noise_std = 0.0;
  cfg.seed = 17;
  for (const auto& r : all_scenes(data::generate(cfg))) {
    const Eigen::Vector2d want = data::branch_endpoint(r, r.mode_label);
    const Eigen::Vector2d got = r.future.row(r.future.rows() - 1).transpose();
    CHECK((got - want).norm() < 1e-9);
  }
}

TEST_CASE("position noise rides on top of the geometry draws") {
  GenConfig clean, noisy;
  clean.n_scenes = noisy.n_scenes = 200;
  clean.seed = noisy.seed = 19;
  clean.noise_std = 0.0;
  noisy.noise_std = 0.15;
  auto a = all_scenes(data::generate(clean));
  auto b = all_scenes(data::generate(noisy));
  double sum = 0.0, sum_sq = 0.0;
  int n = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    // Same seed, same geometry: the difference is exactly the noise field.
    CHECK((a[i].history - b[i].history).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a[i].branch_geometry - b[i].branch_geometry)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(a[i].mode_label == b[i].mode_label);
    Eigen::MatrixX2d diff = b[i].future - a[i].future;
    for (int t = 0; t < diff.rows(); ++t)
      for (int c = 0; c < 2; ++c) {
        sum += diff(t, c);
        sum_sq += diff(t, c) * diff(t, c);
        ++n;
      }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.01);       // ~3 SE at 12000 draws
  CHECK(std::abs(sd - 0.15) < 0.005);
}

TEST_CASE("branch slots carry jittered headings around straight, left, right") {
  GenConfig cfg;
  cfg.n_scenes = 50;
  cfg.seed = 23;
  const double base[3] = {0.0, M_PI / 2.0, -M_PI / 2.0};
  for (const auto& r : all_scenes(data::generate(cfg))) {
    REQUIRE(r.branch_geometry.size() == 6);
    for (int s = 0; s < 3; ++s) {
      CHECK(r.branch_geometry[2 * s + 1] == 1.0);
      CHECK(std::abs(r.branch_geometry[2 * s] - base[s]) <= 0.25);
    }
    CHECK(r.mode_label >= 0);
    CHECK(r.mode_label < 3);
  }
}

TEST_CASE("unavailable slots are zeroed and never drawn") {
  GenConfig cfg;
  cfg.n_scenes = 60;
  cfg.n_branches = 2;
  cfg.seed = 29;
  for (const auto& r : all_scenes(data::generate(cfg))) {
    CHECK(r.branch_geometry[4] == 0.0);
    CHECK(r.branch_geometry[5] == 0.0);
    CHECK(r.branch_geometry[1] == 1.0);
    CHECK(r.branch_geometry[3] == 1.0);
    CHECK(r.mode_label < 2);
  }
}

TEST_CASE("branch probabilities steer the mode draw") {
  GenConfig sure;
  sure.n_scenes = 50;
  sure.branch_probs = Eigen::Vector3d(1.0, 0.0, 0.0);
  sure.seed = 31;
  for (const auto& r : all_scenes(data::generate(sure)))
    CHECK(r.mode_label == 0);

  GenConfig skewed;
  skewed.n_scenes = 3000;
  skewed.branch_probs = Eigen::Vector3d(0.5, 0.25, 0.25);
  skewed.seed = 37;
  int counts[3] = {0, 0, 0};
  for (const auto& r : all_scenes(data::generate(skewed)))
    ++counts[r.mode_label];
  CHECK(std::abs(counts[0] / 3000.0 - 0.5) < 0.03);
  CHECK(std::abs(counts[1] / 3000.0 - 0.25) < 0.03);
  CHECK(std::abs(counts[2] / 3000.0 - 0.25) < 0.03);
}

TEST_CASE("the context exposes history and geometry but not the label") {
  GenConfig cfg;
  cfg.n_scenes = 3;
  cfg.seed = 41;
  auto scenes = all_scenes(data::generate(cfg));
  SceneContext ctx = data::context_of(scenes[0]);
  CHECK((ctx.history - scenes[0].history).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ctx.features - scenes[0].branch_geometry).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("config validation rejects out-of-range settings") {
  auto broken = [](auto&& tweak) {
    GenConfig cfg;
    cfg.n_scenes = 1;
    tweak(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(
      data::generate(broken([](GenConfig& c) { c.n_branches = 0; })),
      std::invalid_argument);
  CHECK_THROWS_AS(
      data::generate(broken([](GenConfig& c) { c.n_branches = 4; })),
      std::invalid_argument);
  CHECK_THROWS_AS(data::generate(broken([](GenConfig& c) {
                    c.speed_min = 10.0;
                    c.speed_max = 5.0;
                  })),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      data::generate(broken([](GenConfig& c) { c.val_frac = 1.0; })),
      std::invalid_argument);
  CHECK_THROWS_AS(
      data::generate(broken([](GenConfig& c) { c.history_len = 1; })),
      std::invalid_argument);
  CHECK_THROWS_AS(data::generate(broken([](GenConfig& c) { c.horizon = 0; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(data::generate(broken([](GenConfig& c) {
                    c.branch_probs = Eigen::Vector2d(0.7, 0.7);
                  })),
                  std::invalid_argument);
  CHECK_THROWS_AS(data::generate(broken([](GenConfig& c) {
                    c.branch_probs = Eigen::Vector2d(0.5, 0.5);
                  })),
                  std::invalid_argument);  // size mismatch with 3 branches
}

TEST_CASE("csv round trip preserves scenes to printed precision") {
  namespace fs = std::filesystem;
  GenConfig cfg;
  cfg.n_scenes = 12;
  cfg.seed = 43;
  auto scenes = all_scenes(data::generate(cfg));

  fs::path dir = fs::temp_directory_path() / "cuae_datasets_test";
  fs::create_directories(dir);
  std::string path = (dir / "scenes.csv").string();
  data::write_csv(path, scenes);

  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header.rfind("scene_id,h0x,h0y,", 0) == 0);
  f.close();

  auto back = data::read_csv(path);
  REQUIRE(back.size() == scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    CHECK(back[i].scene_id == scenes[i].scene_id);
    CHECK(back[i].mode_label == scenes[i].mode_label);
    CHECK((back[i].history - scenes[i].history).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((back[i].future - scenes[i].future).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((back[i].branch_geometry - scenes[i].branch_geometry)
              .cwiseAbs()
              .maxCoeff() < 1e-7);
  }

  // After one quantization the file is a fixed point of write(read(.)).
  std::string again = (dir / "scenes2.csv").string();
  data::write_csv(again, back);
  CHECK(slurp(path) == slurp(again));
  fs::remove_all(dir);
}

TEST_CASE("csv reading reports what is wrong and where") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "cuae_datasets_bad";
  fs::create_directories(dir);

  std::string empty = (dir / "empty.csv").string();
  std::ofstream(empty).close();
  CHECK(data::read_csv(empty).empty());

  GenConfig cfg;
  cfg.n_scenes = 2;
  cfg.history_len = 2;
  cfg.horizon = 2;
  cfg.seed = 47;
  auto scenes = all_scenes(data::generate(cfg));
  std::string good = (dir / "good.csv").string();
  data::write_csv(good, scenes);

  std::string lines = slurp(good);
  std::string truncated = (dir / "short_row.csv").string();
  {
    std::ofstream f(truncated);
    f << lines.substr(0, lines.find('\n') + 1);  // header only
    f << "0,1.0,2.0\n";
  }
  CHECK_THROWS_WITH_AS(data::read_csv(truncated), doctest::Contains(":2"),
                       std::runtime_error);

  std::string garbled = (dir / "garbled.csv").string();
  {
    std::string body = lines;
    const size_t pos = body.rfind("0.");
    body.replace(pos, 2, "zz");
    std::ofstream f(garbled);
    f << body;
  }
  CHECK_THROWS(data::read_csv(garbled));
  fs::remove_all(dir);
}

}  // TEST_SUITE
