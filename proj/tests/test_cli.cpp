#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jdr/commands.hpp"
#include "jdr/model.hpp"
#include "jpeg_fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "jdr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = jdr::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / "jdr_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string line_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

std::vector<std::int32_t> read_dump(const fs::path& path, std::string& header) {
  std::ifstream f(path, std::ios::binary);
  std::getline(f, header);
  std::vector<std::int32_t> values;
  unsigned char le[4];
  while (f.read(reinterpret_cast<char*>(le), 4))
    values.push_back(static_cast<std::int32_t>(le[0] | le[1] << 8 | le[2] << 16 | static_cast<std::uint32_t>(le[3]) << 24));
  return values;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == jdr::kUsage);
  CHECK(run({"frobnicate"}).code == jdr::kUsage);
  CHECK(run({"equiv", "--bogus"}).code == jdr::kUsage);
  CHECK(run({"equiv", "--budget", "16"}).code == jdr::kUsage);
  CHECK(run({"equiv", "--budget", "0"}).code == jdr::kUsage);
  CHECK(run({"equiv", "--quant", "luma:0"}).code == jdr::kUsage);
  CHECK(run({"relu-bench", "--quant", "nonsense"}).code == jdr::kUsage);
  CHECK(run({"encode", (scratch() / "missing.pgm").string(), "--out", (scratch() / "x.bin").string()}).code ==
        jdr::kUsage);
  CHECK(run({"init"}).code == jdr::kUsage);
  CHECK(run({"--help"}).code == jdr::kOk);
}

TEST_CASE("format errors exit with 3") {
  const auto dir = scratch();
  auto jpeg = fixture::encode({16, 16, fixture::Sampling::gray, 75, 0, 1});
  jpeg.resize(jpeg.size() / 2);
  fixture::write_file((dir / "cut.jpg").string(), jpeg);
  const auto r = run({"infer", (dir / "cut.jpg").string()});
  CHECK(r.code == jdr::kInputFormat);
  CHECK_FALSE(r.err.empty());

  const std::string ascii = "P2\n2 2\n255\n0 0 0 0\n";
  fixture::write_file((dir / "ascii.pgm").string(), std::vector<std::uint8_t>(ascii.begin(), ascii.end()));
  CHECK(run({"encode", (dir / "ascii.pgm").string(), "--out", (dir / "a.bin").string()}).code == jdr::kInputFormat);
}

TEST_CASE("quantization table from a file") {
  const auto dir = scratch();
  {
    std::ofstream f(dir / "q.txt");
    for (int k = 0; k < 64; ++k) f << (k % 7 + 1) << (k % 8 == 7 ? '\n' : ' ');
  }
  const auto q = jdr::resolve_quant((dir / "q.txt").string());
  CHECK(q[0] == 1);
  CHECK(q[8] == 2);
  {
    std::ofstream f(dir / "short.txt");
    f << "1 2 3\n";
  }
  CHECK_THROWS_AS(jdr::resolve_quant((dir / "short.txt").string()), jdr::ConfigError);
  CHECK(jdr::resolve_quant("luma:50") == jdr::QuantTable::luminance(50));
}

TEST_CASE("equiv report") {
  const auto a = run({"equiv", "--count", "8", "--batch", "3"});
  CHECK(a.code == jdr::kOk);
  CHECK(line_value(a.out, "inputs") == "8");
  CHECK(line_value(a.out, "budget") == "15");
  CHECK(std::stod(line_value(a.out, "max_abs_diff")) < 1e-4);
  CHECK(line_value(a.out, "argmax_agreement") == "1");
  CHECK(a.out.find("PASS") != std::string::npos);
  const auto b = run({"equiv", "--count", "8", "--batch", "5"});
  CHECK(b.out == a.out);

  const auto coarse = run({"equiv", "--count", "20", "--budget", "1"});
  CHECK(coarse.code == jdr::kAssertionFailed);
  CHECK(coarse.out.find("FAIL") != std::string::npos);
  CHECK(std::stod(line_value(coarse.out, "argmax_agreement")) < 1.0);
}

TEST_CASE("relu-bench CSV") {
  const auto r = run({"relu-bench", "--blocks", "500"});
  CHECK(r.code == jdr::kOk);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "budget,asm_rmse,apx_rmse");
  double last_apx = 1e300;
  for (int budget = 1; budget <= 15; ++budget) {
    REQUIRE(std::getline(in, line));
    std::istringstream row(line);
    std::string b, asm_s, apx_s;
    std::getline(row, b, ',');
    std::getline(row, asm_s, ',');
    std::getline(row, apx_s, ',');
    CHECK(std::stoi(b) == budget);
    const double asm_rmse = std::stod(asm_s), apx_rmse = std::stod(apx_s);
    if (budget < 15) CHECK(asm_rmse <= apx_rmse);
    CHECK(apx_rmse <= last_apx);
    last_apx = apx_rmse;
    if (budget == 15) {
      CHECK(asm_rmse < 1e-10);
      CHECK(apx_rmse < 1e-10);
    }
  }
  CHECK(run({"relu-bench", "--blocks", "500"}).out == r.out);

  const auto path = scratch() / "sweep.csv";
  const auto to_file = run({"relu-bench", "--blocks", "500", "--out", path.string()});
  CHECK(to_file.code == jdr::kOk);
  std::ifstream f(path);
  std::stringstream contents;
  contents << f.rdbuf();
  CHECK(r.out.rfind(contents.str(), 0) == 0);
}

TEST_CASE("encode a constant mid-gray image") {
  const auto dir = scratch();
  fixture::write_file((dir / "gray.pgm").string(), fixture::pgm(16, 8, std::vector<std::uint8_t>(128, 128)));
  std::string header;

  REQUIRE(run({"encode", (dir / "gray.pgm").string(), "--out", (dir / "shifted.bin").string()}).code == jdr::kOk);
  auto values = read_dump(dir / "shifted.bin", header);
  CHECK(header == "JCOEF v1 1 2 1");
  REQUIRE(values.size() == 128);
  for (auto v : values) CHECK(v == 0);

  REQUIRE(run({"encode", (dir / "gray.pgm").string(), "--out", (dir / "raw.bin").string(), "--no-level-shift"})
              .code == jdr::kOk);
  values = read_dump(dir / "raw.bin", header);
  for (std::size_t b = 0; b < 2; ++b) {
    CHECK(values[b * 64] == 1024);
    for (std::size_t k = 1; k < 64; ++k) CHECK(values[b * 64 + k] == 0);
  }

  // 10x10 pads by edge replication to 2x2 blocks; three planes for colour
  fixture::write_file((dir / "odd.ppm").string(), fixture::ppm(10, 10, std::vector<std::uint8_t>(300, 200)));
  REQUIRE(run({"encode", (dir / "odd.ppm").string(), "--out", (dir / "odd.bin").string(), "--quant", "luma"}).code ==
          jdr::kOk);
  values = read_dump(dir / "odd.bin", header);
  CHECK(header == "JCOEF v1 3 2 2");
  CHECK(values.size() == 3 * 4 * 64);
  CHECK(values[0] == 36);  // 8 * 72 / 16, rounded
}

TEST_CASE("infer with zero weights prints the bias") {
  const auto dir = scratch();
  const auto weights = (dir / "zero.jdrn").string();
  REQUIRE(run({"init", "--zero", "--out", weights}).code == jdr::kOk);
  auto w = jdr::load_weights_file(weights);
  w.set("fc.bias", jdr::Tensor<double>({10}, {0.5, -1, 2, 0, 0, 0, 0, 0, 0, 0.25}));
  jdr::save_weights_file(w, weights);

  fixture::Image img{32, 32, 1, std::vector<std::uint8_t>(1024, 90)};
  fixture::write_file((dir / "flat.jpg").string(), fixture::encode(img, {32, 32, fixture::Sampling::gray, 90, 0, 1}));
  fixture::write_file((dir / "flat.pgm").string(), fixture::pgm(32, 32, std::vector<std::uint8_t>(1024, 90)));
  const auto r = run({"infer", (dir / "flat.jpg").string(), (dir / "flat.pgm").string(), "--weights", weights});
  REQUIRE(r.code == jdr::kOk);
  const std::string expect = ": 0.5 -1 2 0 0 0 0 0 0 0.25\nargmax 2\n";
  CHECK(r.out == (dir / "flat.jpg").string() + expect + (dir / "flat.pgm").string() + expect);
}

TEST_CASE("infer agrees across file formats") {
  const auto dir = scratch();
  const auto weights = (dir / "random.jdrn").string();
  REQUIRE(run({"init", "--out", weights, "--seed", "5"}).code == jdr::kOk);
  // quality 100 luma with an all-ones model table: the parsed coefficients
  // decode to within rounding of the source pixels
  fixture::Image img{32, 32, 1, {}};
  for (int i = 0; i < 1024; ++i) img.samples.push_back(static_cast<std::uint8_t>(64 + (i % 32) * 4));
  fixture::write_file((dir / "ramp.jpg").string(), fixture::encode(img, {32, 32, fixture::Sampling::gray, 100, 0, 1}));
  fixture::write_file((dir / "ramp.pgm").string(), fixture::pgm(32, 32, img.samples));
  const auto r = run({"infer", (dir / "ramp.jpg").string(), (dir / "ramp.pgm").string(), "--weights", weights});
  REQUIRE(r.code == jdr::kOk);
  std::istringstream in(r.out);
  std::string jpg_line, jpg_arg, pgm_line, pgm_arg;
  std::getline(in, jpg_line);
  std::getline(in, jpg_arg);
  std::getline(in, pgm_line);
  std::getline(in, pgm_arg);
  CHECK(jpg_arg == pgm_arg);
}

TEST_CASE("throughput report") {
  const auto r = run({"throughput", "--batch", "2", "--reps", "1"});
  CHECK(r.code == jdr::kOk);
  CHECK(line_value(r.out, "images") == "2 (batch 2 x reps 1)");
  CHECK(std::stod(line_value(r.out, "jpeg_images_per_sec")) > 0.0);
  CHECK(std::stod(line_value(r.out, "spatial_images_per_sec")) > 0.0);
  CHECK(std::stod(line_value(r.out, "jpeg_over_spatial")) > 0.0);
}

TEST_CASE("init and convert") {
  const auto dir = scratch();
  const auto spatial = (dir / "s.jdrn").string(), jpeg = (dir / "j.jdrn").string();
  REQUIRE(run({"init", "--out", spatial, "--seed", "3", "--quant", "luma:90"}).code == jdr::kOk);
  const auto r = run({"convert", "--weights", spatial, "--out", jpeg, "--budget", "7"});
  REQUIRE(r.code == jdr::kOk);
  const auto w = jdr::load_weights_file(jpeg);
  CHECK(w.domain == jdr::Domain::jpeg);
  CHECK(w.spec.budget.n_freqs() == 7);
  CHECK(run({"convert", "--weights", jpeg, "--out", (dir / "again.jdrn").string()}).code == jdr::kUsage);
  CHECK(run({"convert", "--weights", spatial}).code == jdr::kUsage);
}

TEST_CASE("installed binary reports exit codes") {
  const char* cli = std::getenv("JDR_CLI");
  if (cli == nullptr) return;
  const auto dir = scratch();
  const auto log = (dir / "cli.log").string();
  auto status = [&](const std::string& args) {
    const int raw = std::system((std::string("\"") + cli + "\" " + args + " > \"" + log + "\" 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("--budget 3") == jdr::kUsage);
  CHECK(status("relu-bench --blocks 200") == jdr::kOk);
  auto bad = fixture::encode({16, 16, fixture::Sampling::gray, 75, 0, 2});
  bad.resize(40);
  fixture::write_file((dir / "bad.jpg").string(), bad);
  CHECK(status("infer \"" + (dir / "bad.jpg").string() + "\"") == jdr::kInputFormat);
}
