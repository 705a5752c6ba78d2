// SPDX-License-Identifier: Apache-2.0
// Checkpoints, IDX ingestion and key=value settings.
#include "hecsb/checkpoint.hpp"
#include "hecsb/config.hpp"
#include "hecsb/dataset.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace hecsb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hecsb_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("checkpoint records round trip exactly") {
  MatrixF m(2, 3);
  m << 1, 2, 3, 4, 5, -6.5f;
  VectorF v(2);
  v << 0.25f, -1e-30f;
  const std::vector<TensorRecord> recs = {to_record("m", m), to_record("v", v)};
  // Row-major storage.
  CHECK(recs[0].data == std::vector<float>{1, 2, 3, 4, 5, -6.5f});
  std::stringstream buf;
  write_checkpoint(buf, recs);
  CHECK(buf.str().substr(0, 6) == "HECSB1");
  const auto back = read_checkpoint(buf);
  CHECK(back == recs);
  CHECK(matrix_from_record(back[0]) == m);
  CHECK(vector_from_record(back[1]) == v);
  CHECK_THROWS_AS(find_record(back, "missing"), DecodeError);
  CHECK_THROWS_AS(vector_from_record(back[0]), DimensionError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::stringstream buf;
  write_checkpoint(buf, std::vector<TensorRecord>{to_record("m", MatrixF(MatrixF::Ones(3, 3)))});
  const std::string full = buf.str();
  std::stringstream bad_magic("XECSB1" + full.substr(6));
  CHECK_THROWS_AS(read_checkpoint(bad_magic), DecodeError);
  std::stringstream cut(full.substr(0, full.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(cut), DecodeError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/path.ckpt"), IoError);
}

TEST_CASE("mlp records rebuild an identical network") {
  Rng rng(1);
  const auto net = Mlp<float>::make({4, 3, 2}, Activation::relu, Activation::identity, rng);
  std::vector<TensorRecord> recs;
  append_mlp(recs, "net", net);
  const auto back = mlp_from_records(recs, "net");
  REQUIRE(back.depth() == 2);
  CHECK(back.layers()[0].activation == Activation::relu);
  CHECK(back.layers()[1].activation == Activation::identity);
  const MatrixF x = MatrixF::Constant(4, 2, 0.5f);
  CHECK(back.predict(x) == net.predict(x));
  CHECK_THROWS_AS(mlp_from_records(recs, "other"), DecodeError);
}

TEST_CASE("idx files load with rescaled pixels") {
  TempDir dir;
  std::vector<std::uint8_t> pixels(3 * 2 * 2);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 20);
  pixels.back() = 255;
  write_idx_images(dir.path / "img", pixels, 3, 2, 2);
  write_idx_labels(dir.path / "lab", std::vector<std::uint8_t>{7, 0, 9});
  const auto ds = load_idx(dir.path / "img", dir.path / "lab");
  CHECK(ds.size() == 3);
  CHECK(ds.height == 2);
  CHECK(ds.width == 2);
  CHECK(ds.labels == std::vector<int>{7, 0, 9});
  CHECK(ds.images(1, 0) == doctest::Approx(20.0 / 255.0));
  CHECK(ds.images(3, 2) == 1.0f);
  CHECK(ds.images.minCoeff() >= 0.0f);

  const auto unlabeled = load_idx(dir.path / "img", std::nullopt);
  CHECK_FALSE(unlabeled.labeled());

  const auto part = ds.slice(1, 2);
  CHECK(part.size() == 2);
  CHECK(part.labels == std::vector<int>{0, 9});
  CHECK_THROWS_AS(ds.slice(2, 2), ArgumentError);
}

TEST_CASE("malformed idx files raise ingest errors") {
  TempDir dir;
  write_idx_images(dir.path / "img", std::vector<std::uint8_t>(8, 1), 2, 2, 2);
  write_idx_labels(dir.path / "lab", std::vector<std::uint8_t>{1, 2, 3});
  CHECK_THROWS_AS(load_idx(dir.path / "img", dir.path / "lab"), IngestError);

  auto bytes = file_bytes(dir.path / "img");
  bytes[3] = 0x02;  // 2050
  write_file(dir.path / "bad", bytes);
  CHECK_THROWS_AS(load_idx(dir.path / "bad", std::nullopt), IngestError);

  bytes = file_bytes(dir.path / "img");
  bytes.pop_back();
  write_file(dir.path / "short", bytes);
  CHECK_THROWS_AS(load_idx(dir.path / "short", std::nullopt), IngestError);

  CHECK_THROWS_AS(load_idx(dir.path / "absent", std::nullopt), IngestError);
  try {
    load_idx(dir.path / "bad", std::nullopt);
  } catch (const IngestError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
}

TEST_CASE("the MNIST test split has the published shape") {
  const char* env = std::getenv("HECSB_DATASET_DIR");
  const fs::path dir = env ? env : "data/mnist";
  if (!fs::exists(dir / "t10k-images-idx3-ubyte")) {
    MESSAGE("MNIST not found under " << dir.string() << "; skipped");
    return;
  }
  const auto test = load_mnist(dir, "t10k");
  CHECK(test.size() == 10000);
  CHECK(test.height == 28);
  CHECK(test.width == 28);
  CHECK(test.pixels() == 784);
  CHECK(test.labels.size() == 10000);
  CHECK(test.images.minCoeff() >= 0.0f);
  CHECK(test.images.maxCoeff() <= 1.0f);
  CHECK(*std::max_element(test.labels.begin(), test.labels.end()) == 9);
}

TEST_CASE("config parsing") {
  const auto cfg = Config::parse(
      "# comment\n"
      "seed = 42\n"
      "  rd.betas = 0.001, 0.01,0.1  # trailing\n"
      "name=hello world\n"
      "seed = 43\n"
      "\n");
  CHECK(cfg.get_u64("seed", 0) == 43u);
  CHECK(cfg.get_list("rd.betas", {}) == std::vector<double>{0.001, 0.01, 0.1});
  CHECK(cfg.get("name", "") == "hello world");
  CHECK(cfg.get("absent", "x") == "x");
  CHECK(cfg.get_double("absent", 1.5) == 1.5);
  CHECK(cfg.has("seed"));
  CHECK_FALSE(cfg.has("absent"));
  CHECK_THROWS_AS(Config::parse("no equals sign"), ArgumentError);
  CHECK_THROWS_AS(Config::parse("a = x").get_double("a", 0), ArgumentError);
  CHECK_THROWS_AS(Config::parse("a = -3").get_u64("a", 0), ArgumentError);
  CHECK_THROWS_AS(Config::parse("a = 2.5").get_int("a", 0), ArgumentError);
  CHECK_THROWS_AS(Config::load("/nonexistent.cfg"), IoError);
}
