#include "mhub/segfilter.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "mhub/error.hpp"

namespace mhub::segfilter {

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kMusic: return "music";
    case EventKind::kNoise: return "noise";
    case EventKind::kNoEnergy: return "noEnergy";
    case EventKind::kSpeech: return "speech";
  }
  return "?";
}

std::string_view to_string(FileClass c) {
  switch (c) {
    case FileClass::kSpeech: return "speech";
    case FileClass::kMusic: return "music";
    case FileClass::kNoise: return "noise";
  }
  return "?";
}

EventKind parse_event_kind(std::string_view s) {
  if (s == "music") return EventKind::kMusic;
  if (s == "noise") return EventKind::kNoise;
  if (s == "noEnergy") return EventKind::kNoEnergy;
  if (s == "speech" || s == "male" || s == "female") return EventKind::kSpeech;
  throw InputError("unknown event kind '" + std::string(s) + "'");
}

FileClass classify_file(const SegmentAnnotation& a, const FilterThresholds& t) {
  bool music = false;
  bool noise = false;
  for (const auto& e : a.events) {
    if (!std::isfinite(e.start_s) || !std::isfinite(e.end_s) || e.start_s < 0.0 || !(e.start_s < e.end_s)) {
      throw InputError("annotation '" + a.utterance_id + "': invalid event interval [" + std::to_string(e.start_s) +
                       ", " + std::to_string(e.end_s) + ")");
    }
    const double d = e.duration_s();
    switch (e.kind) {
      case EventKind::kMusic: music = music || d > t.music_s; break;
      case EventKind::kNoise: noise = noise || d > t.noise_s; break;
      case EventKind::kNoEnergy: noise = noise || d > t.no_energy_s; break;
      case EventKind::kSpeech: break;
    }
  }
  if (music) return FileClass::kMusic;
  if (noise) return FileClass::kNoise;
  return FileClass::kSpeech;
}

FilterResult filter_manifest(const corpus::Manifest& m, const std::vector<SegmentAnnotation>& annotations,
                             const FilterThresholds& t) {
  std::unordered_map<std::string, const SegmentAnnotation*> by_id;
  by_id.reserve(annotations.size());
  for (const auto& a : annotations) by_id[a.utterance_id] = &a;

  FilterResult out;
  out.kept.root = m.root;
  for (const auto& u : m.utterances) {
    const auto it = by_id.find(u.id);
    if (it == by_id.end()) {
      ++out.report.unannotated;
      out.kept.utterances.push_back(u);
      continue;
    }
    switch (classify_file(*it->second, t)) {
      case FileClass::kSpeech:
        ++out.report.speech;
        out.kept.utterances.push_back(u);
        break;
      case FileClass::kMusic: ++out.report.music; break;
      case FileClass::kNoise: ++out.report.noise; break;
    }
  }
  return out;
}

std::vector<SegmentAnnotation> parse_annotations(std::string_view jsonl) {
  std::vector<SegmentAnnotation> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    std::size_t eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    const std::string_view line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SegmentAnnotation a;
      a.utterance_id = j.at("id").get<std::string>();
      for (const auto& ev : j.at("events")) {
        a.events.push_back({parse_event_kind(ev.at("kind").get<std::string>()), ev.at("start").get<double>(),
                            ev.at("end").get<double>()});
      }
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const InputError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::vector<SegmentAnnotation> read_annotations_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open annotations: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_annotations(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

}  // namespace mhub::segfilter
