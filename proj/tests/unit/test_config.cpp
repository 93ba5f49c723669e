#include "proximh/config.hpp"
#include "proximh/experiments.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pimh;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("parse_config reads sections and keeps defaults") {
  const auto cfg = parse_config(R"(
experiment = "bimodal"
seed = 42
output_dir = "somewhere"

[bimodal]
d = 30
d_y = 10
alpha_minus = 0.7
)");
  CHECK(cfg.experiment == "bimodal");
  CHECK(cfg.seed == 42);
  CHECK(cfg.output_dir == "somewhere");
  CHECK(cfg.bimodal.d == 30);
  CHECK(cfg.bimodal.d_y == 10);
  CHECK(cfg.bimodal.perturbation.alpha_minus == 0.7);
  CHECK(cfg.bimodal.c == 2.0);
  CHECK(cfg.noise.target == 0.175);
}

TEST_CASE("parse_config rejects malformed input") {
  CHECK_THROWS_AS(parse_config("experiment = \"bimodal\"\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"bimodal\"\n[bimodal]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"nope\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"bimodal\"\n[bimodal]\nd = \"ten\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"bimodal\"\nbimodal = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = [\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"bimodal\"\n[noise]\ntarget = 0.3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"helmholtz_linear\"\n[helmholtz]\nfine_n = 128\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"bimodal\"\n[bimodal]\nd = 5\nd_y = 8\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("shipped configs validate") {
  const std::filesystem::path root = std::filesystem::path(__FILE__).parent_path().parent_path().parent_path();
  int seen = 0;
  for (const auto& dir : {root / "configs", root / "configs" / "smoke"}) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".toml") continue;
      const auto cfg = load_config(entry.path().string());
      CHECK(cfg.experiment == entry.path().stem().string());
      ++seen;
    }
  }
  CHECK(seen == 14);
}

TEST_CASE("resolved JSON covers the selected experiment only") {
  const auto a = parse_config("experiment = \"kl_sweep\"\noutput_dir = \"a\"\n");
  const auto b = parse_config("experiment = \"kl_sweep\"\noutput_dir = \"b\"\n");
  const auto ja = to_json(a);
  CHECK(ja == to_json(b));
  CHECK(ja.contains("kl_sweep"));
  CHECK_FALSE(ja.contains("bimodal"));
  CHECK_FALSE(ja.contains("output_dir"));
}

TEST_CASE("noise injection hits the target ratio") {
  Rng rng = make_stream(1);
  const Vector y = standard_normal(rng, 40);
  NoiseSettings noise;
  Rng a = make_stream(2), b = make_stream(2);
  const auto r = inject_noise(y, noise, a);
  CHECK(r.ratio == doctest::Approx(0.175).epsilon(1e-10));
  CHECK((r.y - y).norm() / r.y.norm() == doctest::Approx(r.ratio).epsilon(1e-12));
  CHECK(r.y == inject_noise(y, noise, b).y);

  std::vector<Vector> parts{y.head(10), y.tail(30)}, out;
  Rng c = make_stream(3);
  const auto m = inject_noise(parts, noise, c, out);
  REQUIRE(out.size() == 2);
  CHECK(out[0].size() == 10);
  CHECK(out[1].size() == 30);
  CHECK(m.ratio >= noise.lo);
  CHECK(m.ratio <= noise.hi);

  NoiseSettings outside{0.3, 0.15, 0.20};
  Rng d = make_stream(4);
  CHECK_THROWS_AS(inject_noise(y, outside, d), ConfigError);
  CHECK_THROWS_AS(inject_noise(Vector::Zero(5), noise, d), ConfigError);
}

TEST_CASE("CsvTable output") {
  const auto dir = std::filesystem::temp_directory_path() / "proximh_csv_test";
  std::filesystem::create_directories(dir);
  CsvTable t({"name", "value"});
  t.add({"a", CsvTable::num(0.1)});
  t.add({"b", CsvTable::num(Eigen::Index{7})});
  CHECK_THROWS(t.add({"only one"}));
  const auto path = (dir / "t.csv").string();
  t.write(path, {{"seed", 3}});
  CHECK(slurp(path) == "name,value\na,0.10000000000000001\nb,7\n");
  const auto side = nlohmann::json::parse(slurp(path + ".json"));
  CHECK(side["columns"] == nlohmann::json({"name", "value"}));
  CHECK(side["seed"] == 3);
  std::filesystem::remove_all(dir);
}
