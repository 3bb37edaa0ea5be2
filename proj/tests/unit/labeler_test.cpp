#include <cmath>
#include <fstream>

#include "../support/synth.hpp"
#include "doctest.h"
#include "mhub/byteio.hpp"
#include "mhub/error.hpp"
#include "mhub/labeler.hpp"

using namespace mhub;
using namespace mhub::labeler;

namespace {

quantizer::Index small_index(std::size_t dim, std::uint64_t seed) {
  const auto x = testing::clustered_matrix(600, dim, 12, 0.5f, seed);
  quantizer::IndexTrainOptions o;
  o.seed = seed;
  return quantizer::train_index(x, quantizer::IndexConfig::parse("IVF12_HNSW8,PQ2x4"), o);
}

}  // namespace

TEST_SUITE("labeler") {
  TEST_CASE("feature round trips") {
    const FloatMatrix empty(0, 39);
    const auto eb = write_features(empty);
    CHECK(eb.size() == kFeatureHeaderBytes);
    CHECK(read_features(eb) == empty);

    const auto x = testing::random_matrix(3, 39, 1);
    const auto b = write_features(x);
    CHECK(b.size() == kFeatureHeaderBytes + 3 * 39 * 4);
    CHECK(std::string(b.begin(), b.begin() + 4) == "MHFT");
    const auto back = read_features(b);
    CHECK(back == x);
    CHECK(write_features(back) == b);

    auto cut = b;
    cut.pop_back();
    CHECK_THROWS_AS(read_features(cut), InputError);
    auto magic = b;
    magic[1] = 'X';
    CHECK_THROWS_AS(read_features(magic), InputError);
  }

  TEST_CASE("non-finite values are counted or rejected") {
    auto x = testing::random_matrix(4, 3, 2);
    x(1, 1) = std::nanf("");
    x(2, 0) = INFINITY;
    const auto b = write_features(x);
    std::size_t bad = 0;
    read_features(b, NanPolicy::kWarn, &bad);
    CHECK(bad == 2);
    CHECK_THROWS_AS(read_features(b, NanPolicy::kReject), InputError);
  }

  TEST_CASE("label text round trip") {
    LabelFile f{{{1, 2, 3}, {}, {999}}};
    const auto t = write_labels(f);
    CHECK(t == "1 2 3\n\n999\n");
    CHECK(parse_labels(t) == f);
    CHECK_THROWS_AS(parse_labels("1 x 2\n"), ParseError);
  }

  TEST_CASE("shard examples") {
    std::vector<std::uint64_t> ten(10, 100);
    const auto s = shard(ten, 5);
    REQUIRE(s.size() == 5);
    for (const auto& r : s) CHECK(r.size() == 2);

    std::vector<std::uint64_t> one = {500};
    const auto s1 = shard(one, 4);
    REQUIRE(s1.size() == 4);
    std::size_t nonempty = 0;
    for (const auto& r : s1) nonempty += r.size() > 0;
    CHECK(nonempty == 1);
    CHECK_THROWS_AS(shard(one, 0), InputError);
  }

  TEST_CASE("shard property: contiguous, ordered, balanced") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::uint64_t> sizes(1 + rng.uniform_index(60));
      std::uint64_t total = 0, biggest = 0;
      for (auto& s : sizes) {
        s = rng.uniform_index(1000);
        total += s;
        biggest = std::max(biggest, s);
      }
      const std::size_t k = 1 + rng.uniform_index(12);
      const auto shards = shard(sizes, k);
      REQUIRE(shards.size() == k);
      std::size_t pos = 0;
      for (const auto& r : shards) {
        CHECK(r.begin == pos);
        pos = r.end;
        std::uint64_t frames = 0;
        for (std::size_t i = r.begin; i < r.end; ++i) frames += sizes[i];
        const double target = static_cast<double>(total) / k;
        CHECK(std::abs(static_cast<double>(frames) - target) <= static_cast<double>(biggest) + 1e-9);
      }
      CHECK(pos == sizes.size());
    }
  }

  TEST_CASE("apply_labels: empty list, single file, sharding, failures") {
    testing::TempDir dir("labeler");
    const auto idx = small_index(6, 1);
    CHECK(apply_labels(idx, {}).labels.lines.empty());

    std::vector<std::string> files;
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
      const auto path = dir.file("f" + std::to_string(i) + ".mhft");
      write_feature_file(path, testing::random_matrix(i == 0 ? 100 : rng.uniform_index(80), 6, 100 + i, -3, 3));
      files.push_back(path);
    }
    const auto single = apply_labels(idx, {files[0]});
    REQUIRE(single.labels.lines.size() == 1);
    CHECK(single.labels.lines[0].size() == 100);

    ApplyOptions seq;
    seq.num_shards = 1;
    seq.threads = 1;
    const auto base = apply_labels(idx, files, seq);
    CHECK(base.ok());
    for (std::size_t shards : {2u, 3u, 8u, 29u, 40u}) {
      ApplyOptions o;
      o.num_shards = shards;
      o.threads = 4;
      const auto run = apply_labels(idx, files, o);
      CHECK(write_labels(run.labels) == write_labels(base.labels));
    }
    for (const auto& line : base.labels.lines) {
      for (const auto v : line) {
        CHECK(v >= 0);
        CHECK(v < 12);
      }
    }

    auto with_bad = files;
    with_bad[3] = dir.file("missing.mhft");
    write_feature_file(dir.file("wrongdim.mhft"), testing::random_matrix(5, 7, 1));
    with_bad[7] = dir.file("wrongdim.mhft");
    const auto run = apply_labels(idx, with_bad);
    REQUIRE(run.errors.size() == 2);
    CHECK(run.errors[0].position == 3);
    CHECK(run.errors[1].position == 7);
    CHECK(run.labels.lines.size() == files.size());
    CHECK(run.labels.lines[3].empty());
    CHECK(run.labels.lines[4] == base.labels.lines[4]);
  }

  TEST_CASE("NaN frames are labelled after zero substitution") {
    testing::TempDir dir("labeler_nan");
    const auto idx = small_index(4, 2);
    auto x = testing::random_matrix(10, 4, 3);
    auto zeroed = x;
    x(4, 2) = std::nanf("");
    zeroed(4, 2) = 0.0f;
    write_feature_file(dir.file("a.mhft"), x);
    write_feature_file(dir.file("b.mhft"), zeroed);
    const auto run = apply_labels(idx, {dir.file("a.mhft"), dir.file("b.mhft")});
    CHECK(run.ok());
    CHECK(run.nan_values == 1);
    CHECK(run.labels.lines[0] == run.labels.lines[1]);
  }
}
