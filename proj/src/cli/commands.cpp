#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "mhub/byteio.hpp"
#include "mhub/cli.hpp"
#include "mhub/corpus.hpp"
#include "mhub/error.hpp"
#include "mhub/labeler.hpp"
#include "mhub/parallel.hpp"
#include "mhub/pretext.hpp"
#include "mhub/quantizer/index.hpp"
#include "mhub/rng.hpp"
#include "mhub/sampler.hpp"
#include "mhub/scoreboard.hpp"
#include "mhub/segfilter.hpp"
#include "mhub/simd/kernels.hpp"

namespace mhub::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

inline constexpr const char* kReportVersion = "1";

struct Report {
  std::string command;
  std::uint64_t seed = 0;
  ordered_json counts = ordered_json::object();
  ordered_json timings = ordered_json::object();
  ordered_json outputs = ordered_json::array();
  ordered_json details = ordered_json::object();
  ordered_json errors = ordered_json::array();
  std::vector<std::string> summary;
  int exit_code = kOk;

  void output(const std::string& path) {
    outputs.push_back({{"path", path},
                       {"sha256", file_digest(path)},
                       {"bytes", static_cast<std::uint64_t>(std::filesystem::file_size(path))}});
  }
  void say(std::string line) { summary.push_back(std::move(line)); }
};

const char* status_name(int code) {
  switch (code) {
    case kOk: return "ok";
    case kPartialFailure: return "partial_failure";
    default: return "error";
  }
}

ordered_json to_json(const Report& r) {
  ordered_json j;
  j["tool"] = "mhub";
  j["report_version"] = kReportVersion;
  j["command"] = r.command;
  j["status"] = status_name(r.exit_code);
  j["exit_code"] = r.exit_code;
  j["seed"] = r.seed;
  j["counts"] = r.counts;
  j["timings"] = r.timings;
  j["outputs"] = r.outputs;
  j["details"] = r.details;
  j["errors"] = r.errors;
  return j;
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Flag values that override config fields when given on the command line.
class Overrides {
 public:
  template <typename T, typename Field>
  CLI::Option* add(CLI::App* app, const std::string& name, Field field, const std::string& desc) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, desc);
    apply_.push_back([opt, value, field](PipelineConfig& c) {
      if (opt->count() > 0) field(c) = *value;
    });
    return opt;
  }
  void apply(PipelineConfig& c) const {
    for (const auto& f : apply_) f(c);
  }

 private:
  std::vector<std::function<void(PipelineConfig&)>> apply_;
};

// Command-local arguments that have no config counterpart.
struct Args {
  std::string config_path;
  std::string format = "json";
  std::string report_path;
  std::string out;
  std::string dropped_out;
  std::string epoch_path;
  std::string sample_path;
  std::string csv;
  std::string logits_dir;
  int per_pair = 5;
  double target_s = -1.0;
  std::size_t draws = 0;
  double hours = 0.0;
  int dim = 768;
  double fps = 50.0;
  int bytes_per_value = 4;
  std::uint64_t budget_bytes = 0;
  std::size_t num_shards = 0;
  double temperature = 1.0;
  bool clip = false;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " is required");
  if (!std::filesystem::is_regular_file(path)) throw InputError(what + " not found: " + path);
}

void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " is required");
  if (!std::filesystem::is_directory(path)) throw InputError(what + " not found: " + path);
}

// Explicit --out wins; otherwise a file under the configured directory.
std::string output_path(const std::string& explicit_out, const std::string& dir, const std::string& name,
                        const std::string& what) {
  std::string p = explicit_out;
  if (p.empty() && !dir.empty()) p = (std::filesystem::path(dir) / name).string();
  if (p.empty()) throw InputError(what + ": --out is required");
  const auto parent = std::filesystem::path(p).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw InputError(what + ": output directory not found: " + parent.string());
  }
  return p;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write " + path);
  f << text;
  if (!f) throw InputError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

corpus::Manifest load_manifest(const PipelineConfig& c) {
  require_file(c.paths.manifest, "manifest");
  return corpus::read_manifest_file(c.paths.manifest);
}

// Feature files from an explicit list (one path per line) or mapped from the
// manifest. The list must align with the manifest when both are given.
std::vector<std::string> feature_files(const PipelineConfig& c, const corpus::Manifest* m) {
  std::vector<std::string> files;
  if (!c.paths.features_list.empty()) {
    require_file(c.paths.features_list, "features list");
    std::istringstream in(read_text(c.paths.features_list));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) files.push_back(line);
    }
    if (m && files.size() != m->size()) {
      throw InputError("features list has " + std::to_string(files.size()) + " entries, manifest has " +
                       std::to_string(m->size()));
    }
    return files;
  }
  if (!m) throw InputError("a manifest or a features list is required");
  require_dir(c.paths.features_dir, "features dir");
  for (const auto& u : m->utterances) files.push_back(feature_path_for(c.paths.features_dir, u.path));
  return files;
}

sampler::SamplingConfig sampling_config(const PipelineConfig& c, std::uint64_t seed) {
  sampler::SamplingConfig s;
  s.alpha = c.sampling.alpha;
  s.beta = c.sampling.beta;
  s.seed = seed;
  s.validate();
  return s;
}

void add_manifest_counts(Report& r, const corpus::Manifest& m) {
  const auto stats = corpus::compute_stats(m);
  r.counts["utterances"] = stats.total_examples;
  r.counts["languages"] = stats.per_language.size();
  r.counts["pairs"] = stats.per_pair.size();
  r.counts["hours"] = stats.total_hours;
}

// ---------------------------------------------------------------------------

void cmd_manifest_validate(const PipelineConfig& c, const Args&, Report& r) {
  const auto m = load_manifest(c);
  corpus::validate(m);
  add_manifest_counts(r, m);
  const auto stats = corpus::compute_stats(m);
  ordered_json per_lang = ordered_json::object();
  for (const auto& [lang, n] : stats.per_language) per_lang[lang] = n;
  r.details["per_language"] = per_lang;
  r.say("manifest ok: " + std::to_string(m.size()) + " utterances, " + std::to_string(stats.per_language.size()) +
        " languages, " + fixed(stats.total_hours, 2) + " h");
}

void cmd_manifest_filter(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  const auto out = output_path(a.out, "", "", "manifest filter");
  const auto split = corpus::filter_durations(m, c.duration.min_s, c.duration.max_s);
  corpus::write_manifest_file(split.kept, out);
  r.output(out);
  if (!a.dropped_out.empty()) {
    corpus::Manifest dropped{m.root, split.dropped};
    corpus::write_manifest_file(dropped, a.dropped_out);
    r.output(a.dropped_out);
  }
  r.counts["input"] = m.size();
  r.counts["kept"] = split.kept.size();
  r.counts["dropped"] = split.dropped.size();
  r.details["min_s"] = c.duration.min_s;
  r.details["max_s"] = c.duration.max_s;
  r.say("kept " + std::to_string(split.kept.size()) + " of " + std::to_string(m.size()) + " utterances in [" +
        fixed(c.duration.min_s, 1) + ", " + fixed(c.duration.max_s, 1) + "] s");
}

void cmd_manifest_concat(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  const auto out = output_path(a.out, c.paths.plans, "concat.jsonl", "manifest concat");
  const double target = a.target_s > 0 ? a.target_s : c.duration.min_s;
  const auto plan = corpus::concat_short(m, target);
  std::string text;
  std::int64_t under = 0;
  for (const auto& g : plan.groups) {
    ordered_json j;
    j["language"] = g.language;
    j["source"] = g.source;
    j["ids"] = g.ids;
    j["duration_s"] = g.duration_s;
    j["under_target"] = g.under_target;
    text += j.dump() + "\n";
    under += g.under_target ? 1 : 0;
  }
  write_text(out, text);
  r.output(out);
  r.counts["input"] = m.size();
  r.counts["groups"] = plan.groups.size();
  r.counts["under_target"] = under;
  r.details["target_min_s"] = target;
  r.say(std::to_string(plan.groups.size()) + " concatenation groups (" + std::to_string(under) +
        " below target)");
}

void cmd_manifest_carve(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  if (a.per_pair < 1) throw InputError("--per-pair must be >= 1");
  const auto out = output_path(a.out, "", "", "manifest carve");
  const auto val = corpus::carve_validation(m, a.per_pair, r.seed);
  corpus::write_manifest_file(val, out);
  r.output(out);
  r.counts["input"] = m.size();
  r.counts["pairs"] = corpus::compute_stats(m).per_pair.size();
  r.counts["validation"] = val.size();
  r.details["per_pair"] = a.per_pair;
  r.say("carved " + std::to_string(val.size()) + " validation utterances");
}

void cmd_segfilter(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  require_file(c.paths.annotations, "annotations");
  const auto out = output_path(a.out, "", "", "segfilter");
  const auto ann = segfilter::read_annotations_file(c.paths.annotations);
  segfilter::FilterThresholds t{c.thresholds.music_s, c.thresholds.noise_s, c.thresholds.no_energy_s};
  const auto res = segfilter::filter_manifest(m, ann, t);
  corpus::write_manifest_file(res.kept, out);
  r.output(out);
  r.counts["input"] = m.size();
  r.counts["kept"] = res.kept.size();
  r.counts["speech"] = res.report.speech;
  r.counts["music"] = res.report.music;
  r.counts["noise"] = res.report.noise;
  r.counts["unannotated"] = res.report.unannotated;
  r.details["thresholds"] = {{"music_s", t.music_s}, {"noise_s", t.noise_s}, {"no_energy_s", t.no_energy_s}};
  r.say("removed " + std::to_string(res.report.removed()) + " files (" + std::to_string(res.report.music) +
        " music, " + std::to_string(res.report.noise) + " noise); kept " + std::to_string(res.kept.size()));
}

void add_plan_counts(Report& r, const sampler::EpochPlan& plan, const corpus::Manifest& m) {
  std::set<std::size_t> distinct(plan.draws.begin(), plan.draws.end());
  r.counts["draws"] = plan.size();
  r.counts["distinct"] = distinct.size();
  ordered_json per_lang = ordered_json::object();
  for (const auto& [lang, n] : plan.per_language_counts) per_lang[lang] = n;
  r.details["per_language_draws"] = per_lang;
  r.details["manifest_size"] = m.size();
}

void cmd_plan_epoch(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  const auto out = output_path(a.out, c.paths.plans, "epoch.jsonl", "plan epoch");
  const auto cfg = sampling_config(c, r.seed);
  const auto plan =
      sampler::draw_epoch(m, cfg, a.draws ? std::optional<std::size_t>(a.draws) : std::optional<std::size_t>());
  write_text(out, sampler::write_epoch_plan(plan, m));
  r.output(out);
  add_plan_counts(r, plan, m);
  const double rep = sampler::repeat_fraction(plan);
  r.details["repeat_fraction"] = rep;
  r.details["alpha"] = cfg.alpha;
  r.details["beta"] = cfg.beta;
  r.say(std::to_string(plan.size()) + " draws, repeat fraction " + fixed(rep, 3));
}

void cmd_plan_batches(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  std::string epoch = a.epoch_path;
  if (epoch.empty() && !c.paths.plans.empty()) epoch = (std::filesystem::path(c.paths.plans) / "epoch.jsonl").string();
  require_file(epoch, "epoch plan");
  const auto out = output_path(a.out, c.paths.plans, "batches.jsonl", "plan batches");
  const auto plan = sampler::parse_epoch_plan(read_text(epoch), m);
  sampler::BatchOptions opts;
  opts.max_frames = c.batch.max_frames;
  opts.crop_len = c.batch.crop_len;
  opts.frame_rate_hz = c.batch.frame_rate_hz;
  opts.seed = r.seed;
  const auto batches = sampler::plan_batches(plan, m, opts);
  write_text(out, sampler::write_batch_plan(batches, m));
  r.output(out);
  std::int64_t items = 0, frames = 0, largest = 0;
  for (const auto& b : batches.batches) {
    items += static_cast<std::int64_t>(b.items.size());
    frames += b.frames();
    largest = std::max(largest, b.frames());
  }
  r.counts["batches"] = batches.batches.size();
  r.counts["items"] = items;
  r.counts["frames"] = frames;
  r.counts["largest_batch_frames"] = largest;
  r.details["max_frames"] = opts.max_frames;
  r.details["crop_len"] = opts.crop_len;
  r.say(std::to_string(batches.batches.size()) + " batches, " + std::to_string(items) + " items");
}

void cmd_plan_budget(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  if (a.budget_bytes == 0) throw InputError("--budget-bytes is required");
  const auto out = output_path(a.out, c.paths.plans, "budget.jsonl", "plan budget");
  const auto cfg = sampling_config(c, r.seed);
  const auto s = sampler::budget_sample(m, cfg, a.budget_bytes, a.dim, a.fps, a.bytes_per_value);
  sampler::EpochPlan plan;
  plan.draws = s.indices;
  for (const auto i : s.indices) ++plan.per_language_counts[m.utterances[i].language];
  write_text(out, sampler::write_epoch_plan(plan, m));
  r.output(out);
  add_plan_counts(r, plan, m);
  r.counts["bytes"] = s.bytes;
  r.details["budget_bytes"] = a.budget_bytes;
  r.say(std::to_string(s.indices.size()) + " utterances, " + std::to_string(s.bytes) + " of " +
        std::to_string(a.budget_bytes) + " bytes");
}

// Non-finite feature values are replaced by zero and counted.
std::size_t scrub(FloatMatrix& x) {
  std::size_t bad = 0;
  for (auto& v : x.storage()) {
    if (!std::isfinite(v)) {
      v = 0.0f;
      ++bad;
    }
  }
  return bad;
}

void cmd_index_train(const PipelineConfig& c, const Args& a, Report& r) {
  const auto config = quantizer::IndexConfig::parse(c.index.config);
  const auto out = output_path(a.out.empty() ? c.paths.index : a.out, "", "", "index train");
  std::optional<corpus::Manifest> m;
  if (!c.paths.manifest.empty()) m = load_manifest(c);
  auto files = feature_files(c, m ? &*m : nullptr);

  if (!a.sample_path.empty()) {
    require_file(a.sample_path, "sample plan");
    if (!m) throw InputError("--sample requires a manifest");
    const auto plan = sampler::parse_epoch_plan(read_text(a.sample_path), *m);
    std::vector<std::string> chosen;
    std::set<std::size_t> seen;
    for (const auto i : plan.draws) {
      if (seen.insert(i).second) chosen.push_back(files[i]);
    }
    files = std::move(chosen);
  }
  if (files.empty()) throw InputError("index train: no feature files");

  const auto t_load = Clock::now();
  std::size_t dim = 0;
  std::uint64_t total = 0;
  for (const auto& f : files) {
    require_file(f, "feature file");
    const auto h = labeler::read_feature_header(f);
    if (dim == 0) dim = h.dim;
    if (h.dim != dim) throw InputError("feature dim mismatch in " + f);
    total += h.num_frames;
  }
  FloatMatrix data(total, dim);
  std::size_t row = 0, nan_values = 0;
  for (const auto& f : files) {
    auto x = labeler::read_feature_file(f);
    nan_values += scrub(x);
    std::copy(x.values().begin(), x.values().end(), data.storage().begin() + static_cast<std::ptrdiff_t>(row * dim));
    row += x.rows();
  }
  const std::size_t cap = c.index.max_train_vectors;
  if (cap > 0 && data.rows() > cap) data = subsample_rows(data, cap, derive_seed(r.seed, "subsample"));
  r.timings["load_s"] = seconds_since(t_load);

  quantizer::IndexTrainOptions opts;
  opts.seed = r.seed;
  opts.kmeans_iters = c.index.kmeans_iters;
  opts.opq_iters = c.index.opq_iters;
  opts.ef_construction = c.index.ef_construction;
  opts.threads = num_threads();
  const auto t_train = Clock::now();
  const auto idx = quantizer::train_index(data, config, opts);
  r.timings["train_s"] = seconds_since(t_train);
  quantizer::save_index(idx, out);
  r.output(out);

  r.counts["files"] = files.size();
  r.counts["train_vectors"] = data.rows();
  r.counts["nan_values"] = nan_values;
  r.details["config"] = config.str();
  r.details["d_in"] = idx.d_in;
  r.details["d_out"] = idx.d_out();
  r.details["k"] = idx.k();
  r.details["inertia"] = idx.coarse.inertia;
  r.say("trained " + config.str() + " on " + std::to_string(data.rows()) + " x " + std::to_string(dim) +
        " vectors");
}

void cmd_index_apply(const PipelineConfig& c, const Args& a, Report& r) {
  require_file(c.paths.index, "index");
  const auto out = output_path(a.out.empty() ? c.paths.labels : a.out, "", "", "index apply");
  std::optional<corpus::Manifest> m;
  if (!c.paths.manifest.empty()) m = load_manifest(c);
  const auto files = feature_files(c, m ? &*m : nullptr);
  const auto idx = quantizer::load_index(c.paths.index);

  labeler::ApplyOptions opts;
  opts.ef_search = c.index.ef_search;
  opts.num_shards = a.num_shards;
  opts.threads = num_threads();
  const auto run = labeler::apply_labels(idx, files, opts);
  write_text(out, labeler::write_labels(run.labels));
  r.output(out);

  r.counts["files"] = files.size();
  r.counts["frames"] = run.frames;
  r.counts["failed"] = run.errors.size();
  r.counts["nan_values"] = run.nan_values;
  r.timings["label_s"] = run.seconds;
  r.timings["frames_per_second"] = run.frames_per_second;
  for (const auto& e : run.errors) {
    r.errors.push_back({{"message", e.message}, {"path", e.path}, {"position", e.position}});
  }
  if (!run.ok()) r.exit_code = kPartialFailure;
  r.say("labeled " + std::to_string(files.size() - run.errors.size()) + " of " + std::to_string(files.size()) +
        " files, " + std::to_string(run.frames) + " frames");
}

// Logits as negative squared distances to the coarse centroids in the
// rotated space, scaled by 1 / temperature.
std::vector<double> centroid_logits(const quantizer::Index& idx, const FloatMatrix& x, double temperature) {
  const auto z = idx.opq.apply(x);
  const std::size_t k = idx.k();
  std::vector<double> logits(z.rows() * k);
  for (std::size_t t = 0; t < z.rows(); ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      logits[t * k + j] = -static_cast<double>(simd::l2sq(z.row(t), idx.coarse.centroids.row(j))) / temperature;
    }
  }
  return logits;
}

void cmd_loss_eval(const PipelineConfig& c, const Args& a, Report& r) {
  const auto m = load_manifest(c);
  require_file(c.paths.labels, "labels");
  const auto labels = labeler::parse_labels(read_text(c.paths.labels));
  if (labels.lines.size() != m.size()) {
    throw InputError("labels have " + std::to_string(labels.lines.size()) + " lines, manifest has " +
                     std::to_string(m.size()));
  }
  if (!(a.temperature > 0.0)) throw InputError("--temperature must be positive");
  std::optional<quantizer::Index> idx;
  std::vector<std::string> files;
  if (!a.logits_dir.empty()) {
    require_dir(a.logits_dir, "logits dir");
    for (const auto& u : m.utterances) files.push_back(feature_path_for(a.logits_dir, u.path));
  } else {
    require_file(c.paths.index, "index");
    idx = quantizer::load_index(c.paths.index);
    files = feature_files(c, &m);
  }

  const auto t0 = Clock::now();
  std::string per_utt;
  double sum_loss = 0.0, sum_m = 0.0, sum_u = 0.0;
  std::uint64_t frames = 0, masked = 0, unmasked = 0, evaluated = 0, skipped = 0;
  bool finite = true;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& y = labels.lines[i];
    if (y.empty()) {
      ++skipped;
      continue;
    }
    auto x = labeler::read_feature_file(files[i]);
    scrub(x);
    if (x.rows() != y.size()) {
      throw InputError("utterance " + m.utterances[i].id + ": " + std::to_string(x.rows()) + " rows vs " +
                       std::to_string(y.size()) + " labels");
    }
    pretext::LossInputs in;
    if (idx) {
      in.num_classes = idx->k();
      in.logits = centroid_logits(*idx, x, a.temperature);
    } else {
      in.num_classes = x.cols();
      in.logits.assign(x.values().begin(), x.values().end());
    }
    in.labels = y;
    const auto mask = pretext::gen_mask_spans(static_cast<std::int64_t>(y.size()), c.loss.mask_prob,
                                              c.loss.span_len, derive_seed(r.seed, static_cast<std::uint64_t>(i)));
    in.mask = mask.indices;
    in.psi = c.loss.psi;
    const auto res = pretext::hubert_loss(in);
    finite = finite && std::isfinite(res.loss) && res.loss >= 0.0;
    sum_loss += res.loss;
    sum_m += res.masked * static_cast<double>(res.masked_count);
    sum_u += res.unmasked * static_cast<double>(res.unmasked_count);
    masked += res.masked_count;
    unmasked += res.unmasked_count;
    frames += y.size();
    ++evaluated;
    if (!a.out.empty()) {
      ordered_json j;
      j["id"] = m.utterances[i].id;
      j["frames"] = y.size();
      j["masked"] = res.masked_count;
      j["loss"] = res.loss;
      j["masked_loss"] = res.masked;
      j["unmasked_loss"] = res.unmasked;
      per_utt += j.dump() + "\n";
    }
  }
  if (evaluated == 0) throw InputError("loss eval: no labeled utterances");
  if (!finite) throw std::logic_error("loss eval: non-finite or negative loss");
  if (!a.out.empty()) {
    write_text(a.out, per_utt);
    r.output(a.out);
  }
  r.timings["eval_s"] = seconds_since(t0);
  r.counts["utterances"] = evaluated;
  r.counts["skipped"] = skipped;
  r.counts["frames"] = frames;
  r.counts["masked_frames"] = masked;
  const double mean_loss = sum_loss / static_cast<double>(evaluated);
  r.details["mean_loss"] = mean_loss;
  r.details["masked_loss"] = masked ? sum_m / static_cast<double>(masked) : 0.0;
  r.details["unmasked_loss"] = unmasked ? sum_u / static_cast<double>(unmasked) : 0.0;
  r.details["masked_fraction"] = static_cast<double>(masked) / static_cast<double>(frames);
  r.details["expected_masked_fraction"] = pretext::expected_mask_fraction(c.loss.mask_prob, c.loss.span_len);
  r.details["psi"] = c.loss.psi;
  r.say("mean loss " + fixed(mean_loss) + " over " + std::to_string(evaluated) + " utterances, masked fraction " +
        fixed(static_cast<double>(masked) / static_cast<double>(frames), 3));
}

void cmd_score(const PipelineConfig&, const Args& a, Report& r) {
  require_file(a.csv, "metrics csv");
  const auto entries = scoreboard::parse_metrics_csv(read_text(a.csv));
  const double s = scoreboard::superb_score(entries, scoreboard::ScoreOptions{a.clip});
  r.counts["entries"] = entries.size();
  ordered_json per_task = ordered_json::object();
  for (const auto& e : entries) per_task[e.task] = scoreboard::normalized(e);
  r.details["normalized"] = per_task;
  r.details["score"] = s;
  r.details["clip"] = a.clip;
  r.say(fixed(s));
}

void cmd_budget_estimate(const PipelineConfig&, const Args& a, Report& r) {
  if (!(a.hours >= 0.0)) throw InputError("--hours must be >= 0");
  if (a.dim <= 0 || a.bytes_per_value <= 0 || !(a.fps > 0.0)) throw InputError("dim, fps and bytes must be positive");
  const double bytes = corpus::estimate_storage(a.hours, a.dim, a.fps, a.bytes_per_value);
  r.details["hours"] = a.hours;
  r.details["dim"] = a.dim;
  r.details["fps"] = a.fps;
  r.details["bytes_per_value"] = a.bytes_per_value;
  r.details["bytes"] = bytes;
  r.details["tib"] = bytes / corpus::kTiB;
  r.details["tb"] = bytes / corpus::kTB;
  r.say(fixed(bytes / corpus::kTiB, 2) + " TiB (" + fixed(bytes / corpus::kTB, 2) + " TB)");
}

using Handler = void (*)(const PipelineConfig&, const Args&, Report&);

struct Command {
  CLI::App* app;
  std::string name;
  Handler handler;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilingual speech pretraining data pipeline", "mhub"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Args a;
  Overrides ov;
  std::size_t threads_flag = 0;
  std::vector<Command> commands;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config_path, "JSON pipeline config");
    sub->add_option("--format", a.format, "stdout format")->check(CLI::IsMember({"json", "text"}));
    sub->add_option("--report", a.report_path, "also write the JSON report here");
    ov.add<std::uint64_t>(sub, "--seed", [](PipelineConfig& c) -> auto& { return c.seed; }, "root seed");
    sub->add_option("--threads", threads_flag, "worker thread cap");
  };
  auto manifest_opt = [&](CLI::App* sub) {
    ov.add<std::string>(sub, "--manifest", [](PipelineConfig& c) -> auto& { return c.paths.manifest; },
                        "manifest TSV");
  };
  auto features_opts = [&](CLI::App* sub) {
    ov.add<std::string>(sub, "--features-dir", [](PipelineConfig& c) -> auto& { return c.paths.features_dir; },
                        "feature directory");
    ov.add<std::string>(sub, "--features-list", [](PipelineConfig& c) -> auto& { return c.paths.features_list; },
                        "file listing one feature path per line");
  };
  auto sampling_opts = [&](CLI::App* sub) {
    ov.add<double>(sub, "--alpha", [](PipelineConfig& c) -> auto& { return c.sampling.alpha; }, "language temperature");
    ov.add<double>(sub, "--beta", [](PipelineConfig& c) -> auto& { return c.sampling.beta; }, "source temperature");
  };
  auto plans_opt = [&](CLI::App* sub) {
    ov.add<std::string>(sub, "--plans", [](PipelineConfig& c) -> auto& { return c.paths.plans; }, "plan directory");
  };
  auto reg = [&](CLI::App* sub, std::string name, Handler h) {
    common(sub);
    commands.push_back({sub, std::move(name), h});
  };

  // manifest
  CLI::App* manifest = app.add_subcommand("manifest", "manifest operations");
  manifest->require_subcommand(1);
  {
    auto* s = manifest->add_subcommand("validate", "check a manifest and print corpus statistics");
    manifest_opt(s);
    reg(s, "manifest validate", cmd_manifest_validate);
  }
  {
    auto* s = manifest->add_subcommand("filter", "keep utterances inside the duration bounds");
    manifest_opt(s);
    s->add_option("--out", a.out, "kept manifest");
    s->add_option("--dropped", a.dropped_out, "dropped utterances manifest");
    ov.add<double>(s, "--min-s", [](PipelineConfig& c) -> auto& { return c.duration.min_s; }, "minimum duration");
    ov.add<double>(s, "--max-s", [](PipelineConfig& c) -> auto& { return c.duration.max_s; }, "maximum duration");
    reg(s, "manifest filter", cmd_manifest_filter);
  }
  {
    auto* s = manifest->add_subcommand("concat", "plan concatenation of short utterances");
    manifest_opt(s);
    plans_opt(s);
    s->add_option("--out", a.out, "concatenation plan (JSON lines)");
    s->add_option("--target-s", a.target_s, "minimum group duration (default: duration.min_s)");
    reg(s, "manifest concat", cmd_manifest_concat);
  }
  {
    auto* s = manifest->add_subcommand("carve", "sample a validation set per (language, source)");
    manifest_opt(s);
    s->add_option("--out", a.out, "validation manifest");
    s->add_option("--per-pair", a.per_pair, "utterances per pair");
    reg(s, "manifest carve", cmd_manifest_carve);
  }

  {
    auto* s = app.add_subcommand("segfilter", "drop music and noise files using segmentation events");
    manifest_opt(s);
    ov.add<std::string>(s, "--annotations", [](PipelineConfig& c) -> auto& { return c.paths.annotations; },
                        "annotations (JSON lines)");
    s->add_option("--out", a.out, "kept manifest");
    ov.add<double>(s, "--music-s", [](PipelineConfig& c) -> auto& { return c.thresholds.music_s; }, "music threshold");
    ov.add<double>(s, "--noise-s", [](PipelineConfig& c) -> auto& { return c.thresholds.noise_s; }, "noise threshold");
    ov.add<double>(s, "--no-energy-s", [](PipelineConfig& c) -> auto& { return c.thresholds.no_energy_s; },
                   "silence threshold");
    reg(s, "segfilter", cmd_segfilter);
  }

  // plan
  CLI::App* plan = app.add_subcommand("plan", "sampling plans");
  plan->require_subcommand(1);
  {
    auto* s = plan->add_subcommand("epoch", "draw one epoch with two-level up-sampling");
    manifest_opt(s);
    plans_opt(s);
    sampling_opts(s);
    s->add_option("--out", a.out, "epoch plan (JSON lines)");
    s->add_option("--draws", a.draws, "number of draws (default: manifest size)");
    reg(s, "plan epoch", cmd_plan_epoch);
  }
  {
    auto* s = plan->add_subcommand("batches", "pack an epoch plan into random-crop batches");
    manifest_opt(s);
    plans_opt(s);
    s->add_option("--epoch", a.epoch_path, "epoch plan (default: <plans>/epoch.jsonl)");
    s->add_option("--out", a.out, "batch plan (JSON lines)");
    ov.add<std::int64_t>(s, "--max-frames", [](PipelineConfig& c) -> auto& { return c.batch.max_frames; },
                         "frames per batch");
    ov.add<std::int64_t>(s, "--crop-len", [](PipelineConfig& c) -> auto& { return c.batch.crop_len; },
                         "crop length in frames");
    reg(s, "plan batches", cmd_plan_batches);
  }
  {
    auto* s = plan->add_subcommand("budget", "sample clustering data under a memory budget");
    manifest_opt(s);
    plans_opt(s);
    sampling_opts(s);
    s->add_option("--out", a.out, "sample (epoch-plan JSON lines)");
    s->add_option("--budget-bytes", a.budget_bytes, "memory budget in bytes")->required();
    s->add_option("--dim", a.dim, "feature dimension");
    s->add_option("--fps", a.fps, "frames per second");
    s->add_option("--bytes-per-value", a.bytes_per_value, "bytes per feature value");
    reg(s, "plan budget", cmd_plan_budget);
  }

  // index
  CLI::App* index = app.add_subcommand("index", "quantizer index");
  index->require_subcommand(1);
  {
    auto* s = index->add_subcommand("train", "train an OPQ/IVF/HNSW/PQ index on feature files");
    manifest_opt(s);
    features_opts(s);
    ov.add<std::string>(s, "--index-config", [](PipelineConfig& c) -> auto& { return c.index.config; },
                        "factory string");
    ov.add<std::size_t>(s, "--max-vectors", [](PipelineConfig& c) -> auto& { return c.index.max_train_vectors; },
                        "training vector cap (0: all)");
    ov.add<int>(s, "--kmeans-iters", [](PipelineConfig& c) -> auto& { return c.index.kmeans_iters; },
                "Lloyd iterations");
    s->add_option("--sample", a.sample_path, "restrict training to a plan's utterances");
    s->add_option("--out", a.out, "index file (default: paths.index)");
    reg(s, "index train", cmd_index_train);
  }
  {
    auto* s = index->add_subcommand("apply", "label feature files with a trained index");
    manifest_opt(s);
    features_opts(s);
    ov.add<std::string>(s, "--index", [](PipelineConfig& c) -> auto& { return c.paths.index; }, "index file");
    ov.add<std::size_t>(s, "--ef-search", [](PipelineConfig& c) -> auto& { return c.index.ef_search; },
                        "HNSW search breadth");
    s->add_option("--shards", a.num_shards, "number of shards (0: one per worker)");
    s->add_option("--out", a.out, "label file (default: paths.labels)");
    reg(s, "index apply", cmd_index_apply);
  }

  // loss
  CLI::App* loss = app.add_subcommand("loss", "pretext loss");
  loss->require_subcommand(1);
  {
    auto* s = loss->add_subcommand("eval", "masked-prediction loss of logits against labels");
    manifest_opt(s);
    features_opts(s);
    ov.add<std::string>(s, "--index", [](PipelineConfig& c) -> auto& { return c.paths.index; },
                        "index whose centroids define the logits");
    ov.add<std::string>(s, "--labels", [](PipelineConfig& c) -> auto& { return c.paths.labels; }, "label file");
    s->add_option("--logits-dir", a.logits_dir, "per-utterance logit files (feature format, dim = classes)");
    s->add_option("--temperature", a.temperature, "centroid logit temperature");
    ov.add<double>(s, "--psi", [](PipelineConfig& c) -> auto& { return c.loss.psi; }, "masked-term weight");
    ov.add<double>(s, "--mask-prob", [](PipelineConfig& c) -> auto& { return c.loss.mask_prob; },
                   "span start probability");
    ov.add<std::int64_t>(s, "--span-len", [](PipelineConfig& c) -> auto& { return c.loss.span_len; },
                         "span length");
    s->add_option("--out", a.out, "per-utterance results (JSON lines)");
    reg(s, "loss eval", cmd_loss_eval);
  }

  {
    auto* s = app.add_subcommand("score", "SOTA-normalised aggregate score from a metrics CSV");
    s->add_option("--csv", a.csv, "task,value,direction,sota,floor")->required();
    s->add_flag("--clip", a.clip, "cap normalised entries at 1");
    reg(s, "score", cmd_score);
  }

  CLI::App* budget = app.add_subcommand("budget", "storage arithmetic");
  budget->require_subcommand(1);
  {
    auto* s = budget->add_subcommand("estimate", "feature storage for a corpus size");
    s->add_option("--hours", a.hours, "corpus hours")->required();
    s->add_option("--dim", a.dim, "feature dimension");
    s->add_option("--fps", a.fps, "frames per second");
    s->add_option("--bytes-per-value", a.bytes_per_value, "bytes per feature value");
    reg(s, "budget estimate", cmd_budget_estimate);
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "mhub: " << e.what() << "\n";
    return kInputError;
  }

  const Command* cmd = nullptr;
  for (const auto& c : commands) {
    if (c.app->parsed()) cmd = &c;
  }
  if (!cmd) {
    err << "mhub: no command\n";
    return kInputError;
  }

  Report report;
  report.command = cmd->name;
  const auto t0 = Clock::now();
  try {
    PipelineConfig cfg;
    if (!a.config_path.empty()) cfg = load_config(a.config_path);
    ov.apply(cfg);
    const CLI::Option* topt = cmd->app->get_option("--threads");
    if (topt->count() > 0) {
      cfg.threads = threads_flag;
    }
    if (cfg.threads > 0) set_num_threads(cfg.threads);
    report.seed = derive_seed(cfg.seed, cmd->name);
    report.details["threads"] = num_threads();
    cmd->handler(cfg, a, report);
  } catch (const InputError& e) {
    report.exit_code = kInputError;
    report.errors.push_back({{"message", e.what()}});
  } catch (const std::exception& e) {
    report.exit_code = kInternalError;
    report.errors.push_back({{"message", e.what()}});
  }
  report.timings["total_s"] = seconds_since(t0);

  const auto j = to_json(report);
  if (!a.report_path.empty()) {
    std::ofstream f(a.report_path, std::ios::trunc);
    f << j.dump(2) << "\n";
  }
  std::string summary;
  for (const auto& line : report.summary) summary += line + "\n";
  std::string problems;
  for (const auto& e : report.errors) problems += "error: " + e.at("message").get<std::string>() + "\n";
  if (a.format == "text") {
    out << summary;
  } else {
    out << j.dump(2) << "\n";
    err << summary;
  }
  err << problems;
  return report.exit_code;
}

}  // namespace mhub::cli
