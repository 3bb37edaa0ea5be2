#include "../support/oracles.hpp"
#include "../support/synth.hpp"
#include "doctest.h"
#include "mhub/error.hpp"
#include "mhub/quantizer/kmeans.hpp"
#include "mhub/quantizer/pq.hpp"

using namespace mhub;
using namespace mhub::quantizer;

TEST_SUITE("pq") {
  TEST_CASE("shape and storage") {
    const auto x = testing::random_matrix(500, 64, 1);
    const auto cb = train_pq(x, 16, 3);
    CHECK(cb.m_sub == 16);
    CHECK(cb.dsub == 4);
    CHECK(cb.ksub() == 16);
    CHECK(cb.centroids.size() == 16 * 16 * 4);
    CHECK(cb.code_bytes() == 8);
    CHECK(pq_pack(pq_encode(cb, x.row(0))).size() == 8);
    CHECK_THROWS_AS(train_pq(x, 5, 3), InputError);
    CHECK_THROWS_AS(train_pq(testing::random_matrix(15, 4, 1), 2, 3), InputError);
  }

  TEST_CASE("at most 16 distinct sub-vectors give zero error") {
    const auto base = testing::random_matrix(16, 8, 2);
    FloatMatrix x(200, 8);
    Rng rng(3);
    for (std::size_t i = 0; i < 200; ++i) {
      const auto r = base.row(rng.uniform_index(16));
      std::copy(r.begin(), r.end(), x.row(i).begin());
    }
    const auto cb = train_pq(x, 2, 1);
    CHECK(pq_reconstruction_error(cb, x) == doctest::Approx(0.0));
  }

  TEST_CASE("m_sub = 1 reduces to plain k-means with 16 centroids") {
    const auto x = testing::random_matrix(400, 3, 4);
    const auto cb = train_pq(x, 1, 9);
    const auto km = train_kmeans(x, {.k = 16, .max_iters = 25, .seed = pq_subspace_seed(9, 0)});
    CHECK(cb.subspace_inertia[0] == doctest::Approx(km.inertia).epsilon(1e-9));
  }

  TEST_CASE("per-subspace inertia equals k-means on that slice") {
    const auto x = testing::random_matrix(300, 12, 5);
    const auto cb = train_pq(x, 3, 17);
    for (std::size_t m = 0; m < 3; ++m) {
      const auto slice = subspace_slice(x, m, 4);
      const auto km = train_kmeans(slice, {.k = 16, .max_iters = 25, .seed = pq_subspace_seed(17, m)});
      CHECK(cb.subspace_inertia[m] == doctest::Approx(km.inertia).epsilon(1e-9));
    }
  }

  TEST_CASE("reconstruction error is the sum of nearest sub-centroid distances") {
    const auto x = testing::random_matrix(200, 8, 6);
    const auto cb = train_pq(x, 4, 2);
    for (std::size_t i = 0; i < 20; ++i) {
      double expect = 0.0;
      for (std::size_t m = 0; m < 4; ++m) {
        const auto sub = x.row(i).subspan(m * 2, 2);
        double best = 1e30;
        for (std::size_t c = 0; c < 16; ++c) best = std::min(best, testing::squared_distance(sub, cb.centroid(m, c)));
        expect += best;
      }
      const auto rec = pq_decode(cb, pq_encode(cb, x.row(i)));
      CHECK(testing::squared_distance(x.row(i), rec) == doctest::Approx(expect).epsilon(1e-5));
    }
  }

  TEST_CASE("encode(decode(c)) = c for every code with m_sub <= 2") {
    const auto x = testing::random_matrix(300, 4, 7);
    const auto cb = train_pq(x, 2, 1);
    for (std::uint8_t a = 0; a < 16; ++a) {
      for (std::uint8_t b = 0; b < 16; ++b) {
        const std::vector<std::uint8_t> code = {a, b};
        CHECK(pq_encode(cb, pq_decode(cb, code)) == code);
      }
    }
    CHECK_THROWS_AS(pq_decode(cb, std::vector<std::uint8_t>{16, 0}), InputError);
  }

  TEST_CASE("nibble packing") {
    const std::vector<std::uint8_t> codes = {1, 2, 15, 0, 7, 9};
    const auto packed = pq_pack(codes);
    REQUIRE(packed.size() == 3);
    CHECK(packed[0] == 0x21);
    CHECK(packed[1] == 0x0f);
    CHECK(pq_unpack(packed, 6) == codes);
  }
}
