#include <algorithm>

#include "../support/synth.hpp"
#include "doctest.h"
#include "mhub/error.hpp"
#include "mhub/segfilter.hpp"

using namespace mhub;
using namespace mhub::segfilter;

namespace {

SegmentAnnotation one(EventKind k, double len) { return {"x", {{k, 1.0, 1.0 + len}}}; }

}  // namespace

TEST_SUITE("segfilter") {
  TEST_CASE("threshold rules") {
    CHECK(classify_file(one(EventKind::kMusic, 2.5)) == FileClass::kMusic);
    CHECK(classify_file(one(EventKind::kNoEnergy, 5.5)) == FileClass::kNoise);
    CHECK(classify_file(one(EventKind::kMusic, 2.0)) == FileClass::kSpeech);
    CHECK(classify_file(one(EventKind::kNoise, 2.0)) == FileClass::kSpeech);
    CHECK(classify_file(one(EventKind::kNoise, 2.1)) == FileClass::kNoise);
    CHECK(classify_file(one(EventKind::kNoEnergy, 5.0)) == FileClass::kSpeech);
    CHECK(classify_file(one(EventKind::kNoEnergy, 4.0)) == FileClass::kSpeech);
    CHECK(classify_file(one(EventKind::kSpeech, 30.0)) == FileClass::kSpeech);
    CHECK(classify_file({"x", {}}) == FileClass::kSpeech);
  }

  TEST_CASE("events are judged individually, not summed") {
    SegmentAnnotation a{"x", {{EventKind::kMusic, 0, 1.5}, {EventKind::kMusic, 2, 3.5}}};
    CHECK(classify_file(a) == FileClass::kSpeech);
  }

  TEST_CASE("music takes precedence over noise in either order") {
    SegmentAnnotation a{"x", {{EventKind::kMusic, 0, 3}, {EventKind::kNoise, 3, 6}}};
    CHECK(classify_file(a) == FileClass::kMusic);
    std::reverse(a.events.begin(), a.events.end());
    CHECK(classify_file(a) == FileClass::kMusic);
  }

  TEST_CASE("classification is invariant to event order") {
    Rng rng(3);
    const EventKind kinds[] = {EventKind::kMusic, EventKind::kNoise, EventKind::kNoEnergy, EventKind::kSpeech};
    for (int trial = 0; trial < 200; ++trial) {
      SegmentAnnotation a{"x", {}};
      const auto n = 1 + rng.uniform_index(6);
      for (std::uint64_t i = 0; i < n; ++i) {
        const double s = 10.0 * rng.uniform01();
        a.events.push_back({kinds[rng.uniform_index(4)], s, s + 0.01 + 6.0 * rng.uniform01()});
      }
      const auto base = classify_file(a);
      auto b = a;
      shuffle(b.events, rng);
      CHECK(classify_file(b) == base);
    }
  }

  TEST_CASE("custom thresholds") {
    const FilterThresholds t{1.0, 3.0, 10.0};
    CHECK(classify_file(one(EventKind::kMusic, 1.5), t) == FileClass::kMusic);
    CHECK(classify_file(one(EventKind::kNoise, 2.5), t) == FileClass::kSpeech);
    CHECK(classify_file(one(EventKind::kNoEnergy, 6.0), t) == FileClass::kSpeech);
  }

  TEST_CASE("invalid intervals are rejected") {
    CHECK_THROWS_AS(classify_file({"x", {{EventKind::kMusic, 2.0, 2.0}}}), InputError);
    CHECK_THROWS_AS(classify_file({"x", {{EventKind::kMusic, -1.0, 2.0}}}), InputError);
  }

  TEST_CASE("filter_manifest keeps speech and unannotated files") {
    const auto m = testing::make_manifest({3, 3, 3, 3});
    std::vector<SegmentAnnotation> ann = {
        {"u0", {{EventKind::kMusic, 0, 2.5}}},
        {"u1", {{EventKind::kNoise, 0, 2.5}}},
        {"u2", {{EventKind::kSpeech, 0, 2.5}}},
    };
    const auto r = filter_manifest(m, ann);
    REQUIRE(r.kept.size() == 2);
    CHECK(r.kept.utterances[0].id == "u2");
    CHECK(r.kept.utterances[1].id == "u3");
    CHECK(r.report.music == 1);
    CHECK(r.report.noise == 1);
    CHECK(r.report.speech == 1);
    CHECK(r.report.unannotated == 1);
    CHECK(static_cast<std::int64_t>(r.kept.size()) + r.report.removed() == 4);

    CHECK(filter_manifest(m, {}).kept == m);
    CHECK(filter_manifest(corpus::Manifest{"/r", {}}, ann).kept.empty());
  }

  TEST_CASE("annotation JSON lines") {
    const auto a = parse_annotations(
        "{\"id\":\"a\",\"events\":[{\"kind\":\"male\",\"start\":0,\"end\":1.5},"
        "{\"kind\":\"noEnergy\",\"start\":1.5,\"end\":7}]}\n\n"
        "{\"id\":\"b\",\"events\":[]}\n");
    REQUIRE(a.size() == 2);
    CHECK(a[0].events[0].kind == EventKind::kSpeech);
    CHECK(a[0].events[1].kind == EventKind::kNoEnergy);
    CHECK(a[0].events[1].duration_s() == 5.5);
    CHECK(a[1].events.empty());
    CHECK_THROWS_AS(parse_annotations("{\"id\":\"a\",\"events\":[{\"kind\":\"jazz\",\"start\":0,\"end\":1}]}"),
                    ParseError);
    CHECK_THROWS_AS(parse_annotations("not json"), ParseError);
    CHECK(parse_event_kind("female") == EventKind::kSpeech);
  }
}
