// End-to-end acceptance run. Prints one [PASS]/[FAIL] line per criterion and
// exits nonzero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/finite_diff.hpp"
#include "oracles/naive_net.hpp"
#include "oracles/raycast.hpp"
#include "sketchdesc/sketchdesc.hpp"

namespace fs = std::filesystem;
using namespace sketchdesc;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  const auto t0 = clock_type::now();
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "sketchdesc_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1 ---------------------------------------------------------------------------

Outcome geometry_oracle() {
  const auto t0 = clock_type::now();
  Rng rng(2024);
  std::size_t fg = 0, agree = 0, vertices = 0, vis_agree = 0;
  const double eps = default_depth_epsilon();
  for (int m = 0; m < 50; ++m) {
    const TriangleMesh soup = make_random_soup(1000 + m, 1 + static_cast<int>(rng.index(20)));
    for (int k = 0; k < 5; ++k) {
      const Viewpoint view{rng.uniform(0.0, 360.0), rng.uniform(15.0, 45.0)};
      const NormalMap nm = render_normal_map(soup, view);
      const oracle::PinholeCamera cam(view);
      for (int r = 0; r < nm.rows(); ++r)
        for (int c = 0; c < nm.cols(); ++c) {
          const auto s = oracle::cast_pixel(soup, cam, r, c);
          const bool a = nm.foreground(r, c), b = std::isfinite(s.depth);
          if (!a && !b) continue;
          ++fg;
          agree += a && b && std::abs(nm.depth(r, c) - s.depth) <= eps && length(nm.normals(r, c) - s.normal) < 1e-6;
        }
      for (const auto& p : project_vertices(soup, view, nm, eps)) {
        ++vertices;
        const bool expected = p.in_bounds && !oracle::vertex_occluded(soup, cam, soup.vertices[p.vertex_id], eps);
        vis_agree += p.visible == expected;
      }
    }
  }
  const double pixel_rate = static_cast<double>(agree) / static_cast<double>(fg);
  const double secs = seconds_since(t0);
  return {pixel_rate >= 0.995 && vis_agree == vertices && secs < 120.0,
          fmt("depth/normal agreement %.5f on %zu foreground pixels (>= 0.995), visibility %zu/%zu, %.1fs (< 120s)", pixel_rate, fg,
              vis_agree, vertices, secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = clock_type::now();
  NetConfig cfg;
  cfg.width = 0.125;
  SketchDescNet<double> net(cfg, 7);
  Rng rng(8);
  const int n = 64;
  Tensor<double> x({n, 4, 32, 32});
  for (auto& v : x.values) v = rng.uniform() < 0.12 ? rng.uniform(0.2, 1.0) : 0.0;
  std::vector<ops::TripletIndex> triplets;
  for (int i = 0; i < n; ++i) triplets.push_back({i, (i + 1) % n, (i + 3) % n});
  auto loss = [&](Tape<double>& tape) { return ops::triplet_loss(tape, net.forward(tape, x, Mode::BatchStats), triplets, 1.0); };
  const auto r = oracle::check_parameter_gradients(net, loss, 200, 1e-3, 9);
  const double secs = seconds_since(t0);
  return {r.checked >= 200 && r.max_relative_error < 1e-4 && secs < 300.0,
          fmt("max relative error %.3g over %zu parameters (< 1e-4, %zu kink redraws), %.1fs (< 300s)", r.max_relative_error, r.checked,
              r.skipped_kinks, secs)};
}

// 3 ---------------------------------------------------------------------------

double loss_of(const std::vector<std::vector<double>>& rows, const std::vector<ops::TripletIndex>& triplets) {
  Tape<double> tape;
  Tensor<double> d({static_cast<int>(rows.size()), static_cast<int>(rows[0].size())});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), d.data() + i * rows[0].size());
  return tape.value(ops::triplet_loss(tape, tape.input(d), triplets, 1.0))[0];
}

// Precision at every positive, recomputed from scratch.
double ap_brute(const std::vector<int>& labels) {
  double sum = 0.0;
  int positives = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 1) continue;
    ++positives;
    int hits = 0;
    for (std::size_t j = 0; j <= k; ++j) hits += labels[j] == 1;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / positives;
}

Outcome metric_oracles() {
  const double l0 = loss_of({{0, 0}, {0, 0}, {2, 0}}, {{0, 1, 2}});
  const double l1 = loss_of({{0, 0}, {1, 0}, {0.5, 0}}, {{0, 1, 2}});
  const double l2 = loss_of({{0, 0}, {0, 0}, {2, 0}, {1, 0}, {0.5, 0}}, {{0, 1, 2}, {0, 3, 4}});
  const double loss_err = std::max({std::abs(l0), std::abs(l1 - 1.5), std::abs(l2 - 0.75)});
  Rng rng(33);
  double ap_err = 0.0, map_err = 0.0, ap_sum = 0.0, map_brute = 0.0;
  const int lists = 1000;
  for (int i = 0; i < lists; ++i) {
    std::vector<int> labels(1 + rng.index(20));
    for (auto& l : labels) l = rng.coin() ? 1 : -1;
    labels[rng.index(labels.size())] = 1;
    const double ap = average_precision(labels), ref = ap_brute(labels);
    ap_err = std::max(ap_err, std::abs(ap - ref));
    ap_sum += ap;
    map_brute += ref;
  }
  map_err = std::abs(ap_sum / lists - map_brute / lists);
  return {loss_err <= 1e-6 && ap_err <= 1e-12 && map_err <= 1e-12,
          fmt("triplet loss examples (0, 1.5, 0.75) max error %.3g (<= 1e-6); AP max error %.3g, MAP error %.3g on %d lists (<= 1e-12)",
              loss_err, ap_err, map_err, lists)};
}

// Desk dataset and trainings shared by 4..7 ----------------------------------

constexpr double kDeskWidth = 0.25;
constexpr std::size_t kDeskPairsPerEpoch = 2048;
constexpr int kDeskEpochs = 20;
constexpr std::size_t kQueriesPerPair = 40;

Dataset make_desk() {
  const auto all = sample_viewpoints(15, 30, 24);
  std::vector<Viewpoint> views;
  for (std::size_t i = 0; i < all.size(); i += 3) views.push_back(all[i]);
  Dataset ds;
  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) ids.push_back("chair" + std::to_string(i));
  ds.manifest = split_dataset(ids, 0);
  ds.manifest.category = "chair";
  for (int i = 0; i < 3; ++i) {
    const ShapeRender sr = synthesize_shape(make_chair(i, 0.08), views, ids[i]);
    ds.shapes.push_back({ids[i], ds.manifest.shapes[i].split, sr.sketches, sr.part_labels, sr.records});
  }
  return ds;
}

const Dataset& desk() {
  static const Dataset ds = make_desk();
  return ds;
}

std::vector<const ShapeData*> held_out() {
  auto held = desk().in_split(Split::Val);
  for (const ShapeData* s : desk().in_split(Split::Test)) held.push_back(s);
  return held;
}

TrainConfig desk_config() {
  TrainConfig c;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.margin = 1.0;
  c.epochs = kDeskEpochs;
  c.seed = 0;
  c.category = "chair";
  c.pairs_per_epoch = kDeskPairsPerEpoch;
  c.net.width = kDeskWidth;
  return c;
}

struct DeskRun {
  std::unique_ptr<Trainer> trainer;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
};

DeskRun run_desk(const TrainConfig& cfg) {
  DeskRun run;
  const auto t0 = clock_type::now();
  run.trainer = std::make_unique<Trainer>(desk(), cfg);
  run.initial_loss = run.trainer->train_loss_estimate();
  for (int e = 0; e < cfg.epochs; ++e) run.trainer->train_epoch();
  run.final_loss = run.trainer->train_loss_estimate();
  run.seconds = seconds_since(t0);
  return run;
}

DeskRun& main_run() {
  static DeskRun run = run_desk(desk_config());
  return run;
}

double desk_map(SketchDescNet<float>& net) { return pixelwise_retrieval_map(net, held_out(), RetrievalOptions{}).map; }

double main_map() {
  static const double map = desk_map(main_run().trainer->net());
  return map;
}

// 4 ---------------------------------------------------------------------------

Outcome desk_learning(char part) {
  const auto t0 = clock_type::now();
  DeskRun& run = main_run();
  EvalOptions eo;
  eo.max_queries = kQueriesPerPair;
  const auto held = held_out();
  const TrainingPool held_pool(held, SamplingMode::Or);
  switch (part) {
    case 'a': {
      const double ratio = run.final_loss / run.initial_loss;
      return {ratio <= 0.5 && run.seconds < 1800.0,
              fmt("train loss %.4f -> %.4f, ratio %.3f (<= 0.5); %d epochs x %zu pairs at width %g in %.0fs (< 1800s)", run.initial_loss,
                  run.final_loss, ratio, kDeskEpochs, kDeskPairsPerEpoch, kDeskWidth, run.seconds)};
    }
    case 'b': {
      SketchDescNet<float> fresh(desk_config().net, desk_config().seed);
      calibrate_batch_norm(fresh, run.trainer->train_pool(), 8, 64, 1);
      const double before = evaluate_correspondence(fresh, held, eo).mean_accuracy;
      const auto after = evaluate_correspondence(run.trainer->net(), held, eo);
      const double total = run.seconds + seconds_since(t0);
      return {after.mean_accuracy >= 2.0 * before && before > 0.0 && total < 1800.0,
              fmt("held-out accuracy@16 %.4f vs fresh %.4f, factor %.2f (>= 2) over %zu queries; training + evaluation %.0fs (< 1800s)",
                  after.mean_accuracy, before, before > 0 ? after.mean_accuracy / before : 0.0, after.queries, total)};
    }
    default: {
      const auto o = triplet_ordering(run.trainer->net(), held_pool, 64, 2048, 3);
      return {o.fraction >= 0.7, fmt("ordering d(a,p) < d(a,n) on %zu/%zu held-out triplets = %.4f (>= 0.7)", o.satisfied, o.triplets, o.fraction)};
    }
  }
}

// 5 ---------------------------------------------------------------------------

Outcome ablation_trend() {
  TrainConfig cfg = desk_config();
  cfg.net.scales = {0};
  DeskRun single = run_desk(cfg);
  const double map_single = desk_map(single.trainer->net());
  const double map_full = main_map();
  return {map_single <= map_full, fmt("MAP 32px only %.4f <= all four scales %.4f", map_single, map_full)};
}

// 6 ---------------------------------------------------------------------------

Outcome sampling_trend() {
  std::size_t sketches = 0, more = 0;
  for (const auto& sh : desk().shapes)
    for (const auto& s : sh.sketches) {
      ++sketches;
      const InkIntegral ink(s);
      std::size_t n_or = 0, n_and = 0;
      for (int r = 0; r < s.rows(); ++r)
        for (int c = 0; c < s.cols(); ++c) {
          n_or += is_valid_sample(ink, {r, c}, SamplingMode::Or);
          n_and += is_valid_sample(ink, {r, c}, SamplingMode::And);
        }
      more += n_or > n_and;
    }
  std::vector<const ShapeData*> all;
  for (const auto& sh : desk().shapes) all.push_back(&sh);
  const TrainingPool pool_or(all, SamplingMode::Or), pool_and(all, SamplingMode::And);
  TrainConfig cfg = desk_config();
  cfg.sampling_mode = SamplingMode::And;
  DeskRun and_run = run_desk(cfg);
  const double map_and = desk_map(and_run.trainer->net());
  const double map_or = main_map();
  return {more == sketches && pool_or.valid_samples() > pool_and.valid_samples() && map_or >= map_and - 0.05,
          fmt("OR > AND sample count on %zu/%zu sketches (ground-truth samples %zu vs %zu); MAP OR %.4f >= AND %.4f - 0.05", more, sketches,
              pool_or.valid_samples(), pool_and.valid_samples(), map_or, map_and)};
}

// 7 ---------------------------------------------------------------------------

Outcome baseline_ordering() {
  SketchDescNet<float>& net = main_run().trainer->net();
  const auto train_shapes = desk().in_split(Split::Train);
  EvalOptions eo;
  double base_sum = 0.0, net_sum = 0.0;
  std::size_t pairs = 0, queries = 0;
  for (const ShapeData* sh : held_out()) {
    const ShapeDescriptors desc = describe_shape(net, *sh);
    const int n = static_cast<int>(sh->sketches.size());
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        Rng rng = Rng::derive(eo.seed, 0xE7A1 + static_cast<std::uint64_t>(a) * 1000 + static_cast<std::uint64_t>(b));
        const auto qs = subsample(evaluation_queries(*sh, a, b), kQueriesPerPair, rng);
        if (qs.empty()) continue;
        base_sum += correspondence_accuracy(retrieval_baseline(train_shapes, *sh, a, b, qs));
        net_sum += correspondence_accuracy(match_queries(desc.views[a], desc.views[b], qs));
        ++pairs;
        queries += qs.size();
      }
  }
  const double base = base_sum / pairs, ours = net_sum / pairs;
  return {ours > base, fmt("trained accuracy@16 %.4f > HOG baseline %.4f on %zu identical queries (%zu view pairs)", ours, base, queries, pairs)};
}

// Extra: distance-map quantile ---------------------------------------------------

// Adjacent (45 degree) held-out view pairs, two queries each: the ground-truth
// pixel should fall in the lowest 5% of the candidate distance map.
Outcome distance_quantile() {
  SketchDescNet<float>& net = main_run().trainer->net();
  std::size_t queries = 0, inside = 0;
  for (const ShapeData* sh : held_out()) {
    const int n = static_cast<int>(sh->sketches.size());
    for (int a = 0; a < n; ++a) {
      const int b = (a + 1) % n;
      Rng rng = Rng::derive(0, 0x9A17 + static_cast<std::uint64_t>(a));
      const auto candidates = evaluation_candidates(*sh, b);
      for (const Query& q : subsample(evaluation_queries(*sh, a, b), 2, rng)) {
        auto domain = candidates;
        domain.push_back(q.truth);
        domain = sorted_unique(std::move(domain));
        const DistanceMap m = distance_map(net, sh->sketches[a], q.pixel, sh->sketches[b], domain);
        ++queries;
        inside += distance_rank(m, q.truth) <= 0.05;
      }
    }
  }
  return {2 * inside > queries, fmt("ground truth within the lowest 5%% of the distance map for %zu/%zu queries (majority required)", inside, queries)};
}

// Extra: lamp label transfer --------------------------------------------------

Outcome lamp_transfer() {
  const auto views = sample_viewpoints(30, 30, 12);
  Dataset ds;
  std::vector<std::string> ids{"lamp0", "lamp1", "lamp2"};
  ds.manifest = split_dataset(ids, 0);
  ds.manifest.category = "lamp";
  for (int i = 0; i < 3; ++i) {
    const ShapeRender sr = synthesize_shape(make_lamp(i, 0.08), views, ids[i]);
    ds.shapes.push_back({ids[i], ds.manifest.shapes[i].split, sr.sketches, sr.part_labels, sr.records});
  }
  TrainConfig cfg = desk_config();
  cfg.category = "lamp";
  cfg.epochs = 10;
  Trainer trainer(ds, cfg);
  for (int e = 0; e < cfg.epochs; ++e) trainer.train_epoch();
  TransferOptions opt;
  opt.stride = 3;
  double sum = 0.0, worst = 1.0;
  int pairs = 0;
  for (const auto& sh : ds.shapes) {
    if (sh.split == Split::Train) continue;
    for (int v = 0; v < 12; v += 2) {
      const int w = (v + 1) % 12;
      const double agree = label_agreement(transfer_labels(trainer.net(), sh.sketches[v], sh.part_labels[v], sh.sketches[w], opt), sh.part_labels[w]);
      sum += agree;
      worst = std::min(worst, agree);
      ++pairs;
    }
  }
  const double mean = sum / pairs;
  return {mean >= 0.7, fmt("pole/shade labels transferred across 30 degrees: mean agreement %.4f (>= 0.7), worst %.4f over %d held-out pairs", mean, worst, pairs)};
}

// 8 ---------------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SKETCHDESC_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

Outcome reproducibility() {
  const fs::path root = scratch("repro");
  const std::string data = (root / "data").string();
  if (run_cli("build-dataset --procedural chair --shapes 3 --views 4 --spacing 0.1 --seed 0 --out \"" + data + "\"", root / "build.log") != 0)
    return {false, "build-dataset failed: " + slurp(root / "build.log")};
  std::vector<fs::path> runs;
  for (const char* name : {"a", "b"}) {
    runs.push_back(root / name);
    const std::string args = "train --dataset \"" + data + "\" --seed 0 --threads 1 --epochs 2 --pairs-per-epoch 128 --val-pairs 64 --batch 32 --width 0.125 --out \"" +
                             runs.back().string() + "\"";
    if (run_cli(args, root / (std::string(name) + ".log")) != 0) return {false, std::string("train run ") + name + " failed"};
  }
  std::size_t same = 0;
  std::string differing;
  const std::vector<std::string> files{"last.ckpt", "best.ckpt", "train_log.csv"};
  for (const auto& f : files) {
    const std::string a = slurp(runs[0] / f), b = slurp(runs[1] / f);
    if (!a.empty() && a == b)
      ++same;
    else
      differing += " " + f;
  }
  return {same == files.size(), fmt("%zu/%zu artifacts byte-identical across two seed-0 single-thread runs", same, files.size()) +
                                    (differing.empty() ? "" : "; differing:" + differing)};
}

// 9 ---------------------------------------------------------------------------

Outcome round_trips() {
  const fs::path root = scratch("roundtrip");
  SketchDescNet<float> net(NetConfig{}, 91);
  Rng rng(92);
  for (auto& [name, t] : net.state())
    if (name.ends_with("running_var"))
      for (auto& v : t->values) v = static_cast<float>(rng.uniform(0.5, 2.0));
    else if (name.ends_with("running_mean"))
      for (auto& v : t->values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  save_checkpoint(root / "net.ckpt", net, 91);
  auto loaded = load_checkpoint<float>(root / "net.ckpt");
  const bool ckpt_ok = oracle::named_tensors(*loaded.net) == oracle::named_tensors(net) && loaded.net->config() == net.config();
  save_checkpoint(root / "again.ckpt", *loaded.net, loaded.seed);
  const bool ckpt_bytes = slurp(root / "net.ckpt") == slurp(root / "again.ckpt");

  std::vector<NamedMesh> meshes;
  for (int i = 0; i < 3; ++i) meshes.push_back({"lamp" + std::to_string(i), make_lamp(i, 0.12)});
  BuildConfig bc;
  bc.category = "lamp";
  bc.views = sample_viewpoints(30, 30, 4);
  bc.seed = 5;
  const DatasetManifest m = build_dataset(meshes, root / "data", bc);
  const DatasetManifest back = load_manifest(root / "data" / "manifest.json");
  save_manifest(root / "copy.json", back);
  const bool manifest_ok = back == m && load_manifest(root / "copy.json") == m &&
                           slurp(root / "copy.json") == slurp(root / "data" / "manifest.json");

  const ShapeRender sr = synthesize_shape(meshes[1].mesh, bc.views, "lamp1");
  const CorrespondenceStore store{"lamp1", sr.records};
  save_store(root / "store.txt", store);
  const CorrespondenceStore store_back = load_store(root / "store.txt");
  save_store(root / "store2.txt", store_back);
  const bool store_ok = store_back == store && slurp(root / "store.txt") == slurp(root / "store2.txt");
  return {ckpt_ok && ckpt_bytes && manifest_ok && store_ok,
          fmt("checkpoint tensors %s, bytes %s; manifest %s; correspondence store %s (%zu records)", ckpt_ok ? "bitwise" : "DIFFER",
              ckpt_bytes ? "identical" : "DIFFER", manifest_ok ? "lossless" : "DIFFERS", store_ok ? "lossless" : "DIFFERS",
              store.records.size())};
}

}  // namespace

int main() {
  const auto t0 = clock_type::now();
  report("1 geometry oracle", geometry_oracle);
  report("2 gradient check", gradient_check);
  report("3 metric oracles", metric_oracles);
  report("4a desk loss ratio", [] { return desk_learning('a'); });
  report("4b desk accuracy vs fresh", [] { return desk_learning('b'); });
  report("4c desk triplet ordering", [] { return desk_learning('c'); });
  report("5 scale ablation trend", ablation_trend);
  report("6 sampling trend", sampling_trend);
  report("7 baseline ordering", baseline_ordering);
  report("extra distance-map quantile", distance_quantile);
  report("extra lamp label transfer", lamp_transfer);
  report("8 reproducibility", reproducibility);
  report("9 round trips", round_trips);
  std::printf("%d criteria failed, total %.0fs\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
