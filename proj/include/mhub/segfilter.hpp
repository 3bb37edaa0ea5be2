#pragma once

// Speech / music / noise classification of whole files from external
// segmentation events (inaSpeechSegmenter-style annotations).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mhub/corpus.hpp"

namespace mhub::segfilter {

enum class EventKind { kMusic, kNoise, kNoEnergy, kSpeech };
enum class FileClass { kSpeech, kMusic, kNoise };

std::string_view to_string(EventKind k);
std::string_view to_string(FileClass c);

// Accepts "music", "noise", "noEnergy", "speech"; the segmenter's gendered
// speech labels "male"/"female" map to speech.
EventKind parse_event_kind(std::string_view s);

struct Event {
  EventKind kind = EventKind::kSpeech;
  double start_s = 0.0;
  double end_s = 0.0;
  double duration_s() const { return end_s - start_s; }
};

struct SegmentAnnotation {
  std::string utterance_id;
  std::vector<Event> events;  // may overlap, need not cover the file
};

struct FilterThresholds {
  double music_s = 2.0;
  double noise_s = 2.0;
  double no_energy_s = 5.0;
};

// Music if any single music event is longer than music_s; otherwise noise if
// any noise event is longer than noise_s or any noEnergy event is longer than
// no_energy_s; otherwise speech. Comparisons are strict. Throws InputError for
// events without 0 <= start < end.
FileClass classify_file(const SegmentAnnotation& a, const FilterThresholds& t = {});

struct FilterReport {
  std::int64_t speech = 0;
  std::int64_t music = 0;
  std::int64_t noise = 0;
  std::int64_t unannotated = 0;
  std::int64_t removed() const { return music + noise; }
};

struct FilterResult {
  corpus::Manifest kept;
  FilterReport report;
};

// Keeps utterances classified as speech plus those without an annotation.
// Annotations are matched on utterance id.
FilterResult filter_manifest(const corpus::Manifest& m, const std::vector<SegmentAnnotation>& annotations,
                             const FilterThresholds& t = {});

// JSON-lines: {"id": "...", "events": [{"kind": "music", "start": 0.0, "end": 2.5}, ...]}
std::vector<SegmentAnnotation> parse_annotations(std::string_view jsonl);
std::vector<SegmentAnnotation> read_annotations_file(const std::string& path);

}  // namespace mhub::segfilter
