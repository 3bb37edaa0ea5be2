// Acceptance suite: one PASS/FAIL line per criterion, each with its measured
// value, tolerance and wall time. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mhub/cli.hpp"
#include "mhub/corpus.hpp"
#include "mhub/labeler.hpp"
#include "mhub/parallel.hpp"
#include "mhub/pretext.hpp"
#include "mhub/quantizer/hnsw.hpp"
#include "mhub/quantizer/index.hpp"
#include "mhub/quantizer/kmeans.hpp"
#include "mhub/rng.hpp"
#include "mhub/sampler.hpp"
#include "mhub/scoreboard.hpp"
#include "mhub/segfilter.hpp"
#include "mhub/simd/kernels.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace mhub;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = o.pass && in_time;
  failures += pass ? 0 : 1;
  std::printf("%s [%02d] %s: %s | %.2f s (limit %.0f s%s)\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
              secs, limit_s, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// 1 ------------------------------------------------------------------------
Outcome sampling_correctness() {
  const auto m = testing::make_language_corpus({{"A", 900}, {"B", 100}});
  struct Case {
    double alpha, lo, hi;
  };
  const Case cases[] = {{1.0, 0.89, 0.91}, {0.0, 0.49, 0.51}, {0.7, 0.813, 0.833}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const double oracle = std::pow(900.0, c.alpha) / (std::pow(900.0, c.alpha) + std::pow(100.0, c.alpha));
    const sampler::TwoLevelSampler s(m, {c.alpha, 0.9, 1234});
    Rng rng(derive_seed(1234, static_cast<std::uint64_t>(c.alpha * 1000)));
    std::size_t a = 0;
    const std::size_t n = 1'000'000;
    for (std::size_t i = 0; i < n; ++i) a += m.utterances[s.draw(rng)].language == "A";
    const double p = static_cast<double>(a) / n;
    ok = ok && p >= c.lo && p <= c.hi && oracle >= c.lo && oracle <= c.hi;
    detail += "a=" + num(c.alpha, 1) + " P(A)=" + num(p) + " (oracle " + num(oracle) + ", [" + num(c.lo, 3) + "," +
              num(c.hi, 3) + "]) ";
  }
  return {ok, detail};
}

// 2 ------------------------------------------------------------------------
Outcome upsampling_monotonicity() {
  // 147 languages, Zipf-skewed sizes, 1-3 sources each.
  std::vector<std::pair<std::string, int>> counts;
  for (int r = 1; r <= 147; ++r) {
    counts.push_back({"lang" + std::to_string(r), std::max(5, static_cast<int>(60000.0 / std::pow(r, 1.3)))});
  }
  const auto m = testing::make_language_corpus(counts, 3);
  const double r07 = sampler::repeat_fraction(sampler::draw_epoch(m, {0.7, 0.9, 7}));
  const double r05 = sampler::repeat_fraction(sampler::draw_epoch(m, {0.5, 0.9, 7}));
  return {r07 < r05, "N=" + std::to_string(m.size()) + " repeat(a=0.7)=" + num(r07, 3) + " < repeat(a=0.5)=" +
                         num(r05, 3)};
}

// 3 ------------------------------------------------------------------------
double double_inertia(const FloatMatrix& x, const FloatMatrix& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = 1e300;
    for (std::size_t k = 0; k < c.rows(); ++k) best = std::min(best, testing::squared_distance(x.row(i), c.row(k)));
    total += best;
  }
  return total;
}

Outcome kmeans_oracle() {
  Rng rng(303);
  int hits = 0, below = 0;
  double worst_gap = 0.0;
  const int instances = 100;
  for (int t = 0; t < instances; ++t) {
    const std::size_t k = 1 + rng.uniform_index(3);
    const std::size_t d = 1 + rng.uniform_index(2);
    const std::size_t n = k + rng.uniform_index(13 - k);  // k..12
    const auto x = testing::random_matrix(n, d, derive_seed(303, static_cast<std::uint64_t>(t)), -10.0f, 10.0f);
    const double opt = testing::optimal_inertia(x, k);
    quantizer::KMeansOptions o;
    o.k = k;
    o.seed = static_cast<std::uint64_t>(t);
    o.restarts = 8;
    const auto model = quantizer::train_kmeans(x, o);
    const double got = double_inertia(x, model.centroids);
    const double gap = got - opt;
    hits += std::abs(gap) <= 1e-9;
    below += gap < -1e-9;
    worst_gap = std::max(worst_gap, gap);
  }
  const double rate = static_cast<double>(hits) / instances;
  return {rate >= 0.95 && below == 0, "optimum reached on " + std::to_string(hits) + "/" + std::to_string(instances) +
                                          " (need >= 95%), below optimum " + std::to_string(below) +
                                          ", largest gap " + sci(worst_gap)};
}

// 4 ------------------------------------------------------------------------
Outcome hnsw_recall() {
  const auto pts = testing::random_matrix(1000, 64, 404);
  const auto queries = testing::random_matrix(10000, 64, 405);
  const auto g = quantizer::HnswGraph::build(pts, {32, 200, 406});
  quantizer::KMeansModel model;
  model.centroids = pts;
  const auto truth = quantizer::assign_exhaustive(model, queries, 1);
  quantizer::HnswScratch scratch;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    hit += static_cast<std::int32_t>(g.search(pts, queries.row(i), 64, scratch).index) == truth[i];
  }
  const double recall = static_cast<double>(hit) / queries.rows();
  return {recall >= 0.95, "recall@1=" + num(recall) + " (need >= 0.95)"};
}

// 5 ------------------------------------------------------------------------
Outcome labeling_speedup() {
  const std::size_t dim = 768, frames = 100000;
  const auto train = testing::clustered_matrix(20000, dim, 200, 1.0f, 505);
  quantizer::IndexTrainOptions o;
  o.seed = 506;
  o.kmeans_iters = 10;
  o.opq_iters = 2;
  o.opq_max_samples = 20000;
  o.pq_kmeans_iters = 10;
  o.threads = 1;
  const auto idx = quantizer::train_index(train, quantizer::IndexConfig::parse("OPQ16_64,IVF1000_HNSW32,PQ16x4fsr"), o);
  const auto x = testing::clustered_matrix(frames, dim, 200, 1.0f, 507);

  // Exhaustive baseline over the same centroids mapped back to the input
  // space. ||x - R^T c||^2 = ||R x - c||^2 + ||x||^2 - ||R x||^2, so both
  // paths share the exact argmin.
  quantizer::KMeansModel raw;
  raw.centroids = FloatMatrix(idx.k(), dim);
  for (std::size_t c = 0; c < idx.k(); ++c) {
    const auto back = idx.opq.apply_transpose(idx.coarse.centroids.row(c));
    std::copy(back.begin(), back.end(), raw.centroids.row(c).begin());
  }

  auto t0 = Clock::now();
  const auto fast = quantizer::index_assign(idx, x, 64, 1);
  const double t_hnsw = std::chrono::duration<double>(Clock::now() - t0).count();
  t0 = Clock::now();
  const auto slow = quantizer::assign_exhaustive(raw, x, 1);
  const double t_exh = std::chrono::duration<double>(Clock::now() - t0).count();

  std::size_t agree = 0;
  for (std::size_t i = 0; i < frames; ++i) agree += fast[i] == slow[i];
  const double speedup = t_exh / t_hnsw;
  return {speedup >= 2.0, "index_assign " + num(t_hnsw, 2) + " s vs assign_exhaustive " + num(t_exh, 2) +
                              " s, speedup " + num(speedup, 2) + "x (need >= 2x), label agreement " +
                              num(static_cast<double>(agree) / frames) + ", isa " +
                              std::string(simd::isa_name(simd::active().isa))};
}

// 6 ------------------------------------------------------------------------
Outcome sharding_determinism() {
  testing::TempDir dir("acc_shard");
  const auto train = testing::clustered_matrix(3000, 39, 50, 0.5f, 606);
  quantizer::IndexTrainOptions o;
  o.seed = 607;
  const auto idx = quantizer::train_index(train, quantizer::IndexConfig::parse("OPQ8_32,IVF50_HNSW32,PQ8x4fsr"), o);
  std::vector<std::string> files;
  Rng rng(608);
  for (int i = 0; i < 200; ++i) {
    const auto path = dir.file("f" + std::to_string(i) + ".mhft");
    labeler::write_feature_file(path, testing::clustered_matrix(20 + rng.uniform_index(300), 39, 50, 0.5f,
                                                                derive_seed(609, static_cast<std::uint64_t>(i))));
    files.push_back(path);
  }
  labeler::ApplyOptions seq;
  seq.num_shards = 1;
  seq.threads = 1;
  const auto a = labeler::write_labels(labeler::apply_labels(idx, files, seq).labels);
  labeler::ApplyOptions sharded;
  sharded.num_shards = 8;
  sharded.threads = 8;
  const auto run = labeler::apply_labels(idx, files, sharded);
  const auto b = labeler::write_labels(run.labels);
  return {a == b && run.ok(), "200 files, 8 shards: " + std::string(a == b ? "byte-identical" : "DIFFERENT") + " (" +
                                  std::to_string(a.size()) + " bytes, " + std::to_string(run.frames) + " frames)"};
}

// 7 ------------------------------------------------------------------------
Outcome loss_correctness() {
  pretext::LossInputs u;
  u.num_classes = 1000;
  u.logits.assign(16 * 1000, 0.0);
  u.labels.resize(16);
  for (std::size_t t = 0; t < 16; ++t) {
    u.labels[t] = static_cast<std::int32_t>(t * 61 % 1000);
    u.mask.push_back(static_cast<std::int64_t>(t));
  }
  u.psi = 1.0;
  const double err_uniform = std::abs(pretext::hubert_loss(u).loss - std::log(1000.0));

  Rng rng(707);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    pretext::LossInputs in;
    const std::size_t t_len = 1 + rng.uniform_index(10);
    in.num_classes = 2 + rng.uniform_index(7);
    in.psi = rng.uniform01();
    for (std::size_t i = 0; i < t_len * in.num_classes; ++i) in.logits.push_back(4.0 * rng.uniform01() - 2.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      in.labels.push_back(static_cast<std::int32_t>(rng.uniform_index(in.num_classes)));
      if (rng.bernoulli(0.5)) in.mask.push_back(static_cast<std::int64_t>(t));
    }
    const auto r = pretext::hubert_loss(in);
    const auto g = testing::numeric_gradient(
        [&](const std::vector<double>& z) {
          auto c = in;
          c.logits = z;
          return pretext::hubert_loss(c).loss;
        },
        in.logits, 1e-5);
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] - r.grad[i]));
  }
  return {err_uniform <= 1e-9 && worst <= 1e-6, "|L - ln 1000| = " + sci(err_uniform) +
                                                    " (<= 1e-9); max |analytic - central diff| = " + sci(worst) +
                                                    " over 100 instances (<= 1e-6)"};
}

// 8 ------------------------------------------------------------------------
Outcome mask_coverage() {
  const double expect = 1.0 - std::pow(0.92, 10);
  const auto m = pretext::gen_mask_spans(100000, 0.08, 10, 808);
  const double frac = m.masked_fraction();
  return {std::abs(frac - expect) <= 0.01, "masked fraction " + num(frac) + " vs " + num(expect) + " (+-0.01)"};
}

// 9 ------------------------------------------------------------------------
Outcome storage_arithmetic() {
  const double latent = corpus::estimate_storage(90430, 768, 50, 4);
  const double mfcc = corpus::estimate_storage(90430, 39, 100, 4);
  // Checked under both readings of "TB": binary (TiB) and decimal.
  const double l_tib = latent / corpus::kTiB, l_tb = latent / corpus::kTB;
  const double m_tib = mfcc / corpus::kTiB, m_tb = mfcc / corpus::kTB;
  const auto rel = [](double got, double want) { return std::abs(got - want) / want; };
  const bool ok = rel(l_tib, 48) <= 0.10 && rel(l_tb, 48) <= 0.10 && rel(m_tib, 4.7) <= 0.15 && rel(m_tb, 4.7) <= 0.15;
  return {ok, "dim768@50Hz " + num(l_tib, 2) + " TiB / " + num(l_tb, 2) + " TB vs 48 (+-10%); dim39@100Hz " +
                  num(m_tib, 2) + " TiB / " + num(m_tb, 2) + " TB vs 4.7 (+-15%)"};
}

// 10 -----------------------------------------------------------------------
Outcome filtering_rules() {
  using segfilter::EventKind;
  using segfilter::FileClass;
  struct Case {
    std::vector<segfilter::Event> events;
    FileClass expect;
  };
  const std::vector<Case> cases = {
      {{{EventKind::kMusic, 0.0, 1.9}}, FileClass::kSpeech},
      {{{EventKind::kMusic, 1.0, 3.0}}, FileClass::kSpeech},
      {{{EventKind::kMusic, 1.0, 3.1}}, FileClass::kMusic},
      {{{EventKind::kNoise, 0.0, 1.9}}, FileClass::kSpeech},
      {{{EventKind::kNoise, 1.0, 3.0}}, FileClass::kSpeech},
      {{{EventKind::kNoise, 1.0, 3.1}}, FileClass::kNoise},
      {{{EventKind::kNoEnergy, 0.0, 4.9}}, FileClass::kSpeech},
      {{{EventKind::kNoEnergy, 1.0, 6.0}}, FileClass::kSpeech},
      {{{EventKind::kNoEnergy, 1.0, 6.1}}, FileClass::kNoise},
      {{{EventKind::kNoEnergy, 0.0, 2.1}}, FileClass::kSpeech},
      {{{EventKind::kNoise, 0.0, 2.1}, {EventKind::kMusic, 3.0, 5.1}}, FileClass::kMusic},
      {{{EventKind::kSpeech, 0.0, 25.0}, {EventKind::kMusic, 0.0, 1.9}, {EventKind::kNoise, 5.0, 6.9}},
       FileClass::kSpeech},
  };
  int right = 0;
  std::string wrong;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto got = segfilter::classify_file({"c" + std::to_string(i), cases[i].events});
    if (got == cases[i].expect) {
      ++right;
    } else {
      wrong += " case" + std::to_string(i) + "=" + std::string(segfilter::to_string(got));
    }
  }
  return {right == static_cast<int>(cases.size()),
          std::to_string(right) + "/" + std::to_string(cases.size()) + " cases classified as expected" + wrong};
}

// 11 -----------------------------------------------------------------------
Outcome validation_carve() {
  corpus::Manifest m{"/data", {}};
  Rng rng(1111);
  for (int p = 0; p < 255; ++p) {
    const std::string lang = "l" + std::to_string(p / 2);
    const std::string src = "s" + std::to_string(p % 2);
    const auto n = 5 + rng.uniform_index(30);
    for (std::uint64_t i = 0; i < n; ++i) {
      m.utterances.push_back(testing::make_utterance("u" + std::to_string(p) + "_" + std::to_string(i), lang, src, 4.0));
    }
  }
  const auto pairs = corpus::compute_stats(m).per_pair.size();
  const auto v = corpus::carve_validation(m, 5, 1112);
  return {pairs == 255 && v.size() == 1275,
          std::to_string(pairs) + " pairs -> " + std::to_string(v.size()) + " validation utterances (expect 1275)"};
}

// 12 -----------------------------------------------------------------------
Outcome superb_properties() {
  using scoreboard::Direction;
  Rng rng(1212);
  int violations = 0;
  double worst_anchor = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<scoreboard::MetricEntry> es;
    const auto n = 1 + rng.uniform_index(12);
    for (std::uint64_t i = 0; i < n; ++i) {
      scoreboard::MetricEntry e;
      e.task = "t" + std::to_string(i);
      e.direction = rng.bernoulli(0.5) ? Direction::kHigherBetter : Direction::kLowerBetter;
      const double lo = 100 * rng.uniform01(), hi = lo + 0.5 + 100 * rng.uniform01();
      e.floor = e.direction == Direction::kHigherBetter ? lo : hi;
      e.sota = e.direction == Direction::kHigherBetter ? hi : lo;
      e.value = lo + (hi - lo) * rng.uniform01();
      es.push_back(e);
    }
    auto at_sota = es, at_floor = es;
    for (auto& e : at_sota) e.value = e.sota;
    for (auto& e : at_floor) e.value = e.floor;
    worst_anchor = std::max({worst_anchor, std::abs(scoreboard::superb_score(at_sota) - 1000.0),
                             std::abs(scoreboard::superb_score(at_floor))});
    const double base = scoreboard::superb_score(es);
    auto better = es;
    const auto j = rng.uniform_index(n);
    better[j].value += rng.uniform01() * (better[j].sota - better[j].value);
    violations += scoreboard::superb_score(better) < base - 1e-9;
  }
  return {worst_anchor <= 1e-9 && violations == 0, "anchor error " + sci(worst_anchor) +
                                                       ", monotonicity violations " + std::to_string(violations) +
                                                       "/1000"};
}

// 13 -----------------------------------------------------------------------
struct CliResult {
  int code;
  nlohmann::json report;
};

CliResult cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "mhub");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, nlohmann::json::parse(out.str())};
}

Outcome end_to_end() {
  testing::TempDir dir("acc_e2e");
  const auto c = testing::write_synthetic_corpus(dir.path(), 300, 3, 39, 1313);
  const std::string cfg = dir.file("config.json");
  cli::PipelineConfig pc;
  pc.seed = 1313;
  pc.paths.manifest = c.manifest_path;
  pc.paths.features_dir = c.features_dir;
  pc.paths.annotations = c.annotations_path;
  pc.paths.plans = dir.path().string();
  pc.index.config = "OPQ8_32,IVF50_HNSW32,PQ8x4fsr";
  pc.duration.min_s = 1.0;
  std::ofstream(cfg) << cli::config_to_json(pc).dump(2);

  std::vector<std::string> broken;
  auto step = [&](const std::string& name, std::vector<std::string> args) {
    args.push_back("--config");
    args.push_back(cfg);
    auto r = cli_run(args);
    if (r.code != 0 || r.report.at("status") != "ok") broken.push_back(name + " exit " + std::to_string(r.code));
    return r;
  };
  const std::string filtered = dir.file("filtered.tsv"), kept = dir.file("kept.tsv");
  const std::string index = dir.file("index.mhix"), labels = dir.file("labels.km");

  auto r = step("validate", {"manifest", "validate"});
  const bool validated = r.report["counts"]["utterances"] == 300;
  step("filter", {"manifest", "filter", "--out", filtered});
  r = step("segfilter", {"segfilter", "--manifest", filtered, "--out", kept});
  const auto removed = r.report["counts"]["music"].get<std::int64_t>() + r.report["counts"]["noise"].get<std::int64_t>();
  r = step("plan epoch", {"plan", "epoch", "--manifest", kept});
  const auto epoch_digest = r.report["outputs"][0]["sha256"].get<std::string>();
  const auto again = step("plan epoch (repeat)", {"plan", "epoch", "--manifest", kept});
  const bool idempotent = again.report["outputs"][0]["sha256"] == epoch_digest;
  step("plan batches", {"plan", "batches", "--manifest", kept});
  r = step("index train", {"index", "train", "--manifest", kept, "--out", index});
  const bool k50 = r.report["details"]["k"] == 50;
  step("index apply", {"index", "apply", "--manifest", kept, "--index", index, "--out", labels});
  r = step("loss eval", {"loss", "eval", "--manifest", kept, "--index", index, "--labels", labels});
  const double loss = r.report["details"].value("mean_loss", -1.0);

  // Invariants on the produced artifacts.
  const auto kept_m = corpus::read_manifest_file(kept);
  std::ifstream lf(labels);
  const auto lab = labeler::parse_labels(std::string(std::istreambuf_iterator<char>(lf), {}));
  bool aligned = lab.lines.size() == kept_m.size();
  for (std::size_t i = 0; aligned && i < kept_m.size(); ++i) {
    const auto h = labeler::read_feature_header(cli::feature_path_for(c.features_dir, kept_m.utterances[i].path));
    aligned = lab.lines[i].size() == h.num_frames;
    for (const auto v : lab.lines[i]) aligned = aligned && v >= 0 && v < 50;
  }
  std::set<std::string> kept_ids;
  for (const auto& u : kept_m.utterances) kept_ids.insert(u.id);
  bool noise_gone = true;
  for (const auto& id : c.music_ids) noise_gone = noise_gone && !kept_ids.count(id);
  for (const auto& id : c.noise_ids) noise_gone = noise_gone && !kept_ids.count(id);

  const bool ok = broken.empty() && validated && idempotent && k50 && aligned && noise_gone && removed > 0 &&
                  std::isfinite(loss) && loss >= 0.0;
  std::string detail = "300 utts -> " + std::to_string(kept_m.size()) + " kept (" + std::to_string(removed) +
                       " music/noise removed), labels aligned=" + (aligned ? "yes" : "no") +
                       ", epoch idempotent=" + (idempotent ? "yes" : "no") + ", mean loss " + num(loss, 3);
  for (const auto& b : broken) detail += "; FAILED STEP " + b;
  return {ok, detail};
}

}  // namespace

int main() {
  std::printf("acceptance suite (kernels: %s, threads: %zu)\n", std::string(simd::isa_name(simd::active().isa)).c_str(),
              num_threads());
  criterion(1, "sampling correctness", 10, sampling_correctness);
  criterion(2, "up-sampling monotonicity", 30, upsampling_monotonicity);
  criterion(3, "k-means oracle equivalence", 60, kmeans_oracle);
  criterion(4, "HNSW recall", 30, hnsw_recall);
  criterion(5, "labeling speedup", 300, labeling_speedup);
  criterion(6, "sharding determinism", 60, sharding_determinism);
  criterion(7, "loss correctness", 30, loss_correctness);
  criterion(8, "mask coverage", 5, mask_coverage);
  criterion(9, "storage arithmetic", 1, storage_arithmetic);
  criterion(10, "filtering rules", 1, filtering_rules);
  criterion(11, "validation carve", 5, validation_carve);
  criterion(12, "SUPERB score properties", 5, superb_properties);
  criterion(13, "end-to-end smoke", 300, end_to_end);
  std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
