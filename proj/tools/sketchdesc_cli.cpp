// sketchdesc command-line front end.
//
// Exit codes: 0 success, 2 unknown or missing subcommand, 3 invalid flags or
// config file, 4 failed precondition, 5 runtime failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "sketchdesc/sketchdesc.hpp"

namespace fs = std::filesystem;
using namespace sketchdesc;

namespace {

enum ExitCode { kOk = 0, kUnknownCommand = 2, kBadFlags = 3, kPrecondition = 4, kRuntime = 5 };

const std::vector<std::string> kCommands{"synth",         "build-dataset", "train",    "eval-correspondence", "eval-retrieval",
                                         "eval-baseline", "disparity",     "match",    "distance-map",        "transfer-labels"};

struct Common {
  int threads = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_out) {
  c.out = default_out;
  sub->add_option("--config", c.config, "key=value file mirroring the long flags; flags given on the command line win");
  sub->add_option("--threads", c.threads, "worker threads; 1 gives bitwise-reproducible output")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "random seed, echoed into run-meta.json")->capture_default_str();
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
}

// ---------------------------------------------------------------------------
// Config file: "key = value" lines, '#' comments, optional [section] headers
// naming the subcommand they apply to.

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> config_args(const fs::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open config file " + path.string());
  std::vector<std::string> args;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw CLI::ValidationError("--config", path.string() + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    if (!section.empty() && section != command) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--config", path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    if (key == "config") throw CLI::ValidationError("--config", "config files cannot include other config files");
    if (value == "true") {
      args.push_back("--" + key);
    } else if (value != "false") {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

// ---------------------------------------------------------------------------
// Small parsers

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(trim(tok), &used));
      require(used == trim(tok).size(), "");
    } catch (const std::exception&) {
      throw precondition_error(what + " must be a comma-separated list of integers, got '" + s + "'");
    }
  }
  require(!out.empty(), what + " is empty");
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      out.push_back(std::stod(trim(tok)));
    } catch (const std::exception&) {
      throw precondition_error(what + " must be a comma-separated list of numbers, got '" + s + "'");
    }
  }
  require(!out.empty(), what + " is empty");
  return out;
}

Pixel parse_pixel(const std::string& s) {
  const auto v = parse_int_list(s, "pixel '" + s + "'");
  require(v.size() == 2, "pixel must be given as row,col, got '" + s + "'");
  return {v[0], v[1]};
}

std::vector<const ShapeData*> select_split(const Dataset& ds, const std::string& split, const std::string& shape_id = {}) {
  std::vector<const ShapeData*> out;
  for (const auto& sh : ds.shapes) {
    if (!shape_id.empty()) {
      if (sh.shape_id == shape_id) out.push_back(&sh);
      continue;
    }
    if (split == "all" || to_string(sh.split) == split) out.push_back(&sh);
  }
  if (!shape_id.empty()) require(!out.empty(), "dataset has no shape '" + shape_id + "'");
  require(!out.empty(), "dataset has no shapes in split '" + split + "'");
  return out;
}

const ShapeData& find_shape(const Dataset& ds, const std::string& id) { return *select_split(ds, "all", id).front(); }

std::unique_ptr<SketchDescNet<float>> load_net(const std::string& path) { return load_checkpoint<float>(path).net; }

void require_view(const ShapeData& sh, int v, const std::string& flag) {
  require(v >= 0 && v < static_cast<int>(sh.sketches.size()),
          flag + " " + std::to_string(v) + " is out of range for shape " + sh.shape_id + " (" + std::to_string(sh.sketches.size()) + " views)");
}

std::vector<Pixel> strided_ink(const SketchImage& s, int stride) {
  std::vector<Pixel> out;
  std::size_t k = 0;
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c)
      if (s.ink(r, c) && k++ % static_cast<std::size_t>(stride) == 0) out.push_back({r, c});
  return out;
}

Grid<Rgb8> label_image(const SketchImage& s, const Grid<int>& labels) {
  static const Rgb8 palette[] = {{230, 25, 75},  {60, 180, 75},  {0, 130, 200},  {245, 130, 48}, {145, 30, 180},
                                 {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {0, 128, 128},  {170, 110, 40}};
  Grid<Rgb8> img(s.rows(), s.cols(), Rgb8{255, 255, 255});
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c) {
      if (!s.ink(r, c)) continue;
      const int l = labels(r, c);
      img(r, c) = l < 0 ? Rgb8{0, 0, 0} : palette[l % 10];
    }
  return img;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthArgs {
  Common common;
  std::string mesh;
  int azimuth_step = 30;
  double elevation = 30;
  int views = 0;
  int view_stride = 1;
  double canny_low = 0.1, canny_high = 0.2, canny_sigma = 1.0;
  double depth_epsilon = default_depth_epsilon();
  bool normal_maps = false;
};

void add_render_flags(CLI::App* sub, int& step, double& elev, int& views, int& stride, double& lo, double& hi, double& sigma,
                      double& eps) {
  sub->add_option("--azimuth-step", step, "azimuth spacing in degrees, 15 or 30 [reference: 15 and 30]")->capture_default_str();
  sub->add_option("--elevation", elev, "camera elevation in degrees, 15..45 [reference: 30]")->capture_default_str();
  sub->add_option("--views", views, "keep at most this many sampled views, 0 = all")->capture_default_str();
  sub->add_option("--view-stride", stride, "keep every k-th sampled view (3 with a 15-degree step gives 45 degrees)")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--canny-low", lo, "Canny low threshold, fraction of max gradient")->capture_default_str();
  sub->add_option("--canny-high", hi, "Canny high threshold, fraction of max gradient")->capture_default_str();
  sub->add_option("--canny-sigma", sigma, "Gaussian pre-smoothing sigma, 0 disables")->capture_default_str();
  sub->add_option("--depth-epsilon", eps, "visibility depth tolerance in unit-sphere units")->capture_default_str();
}

std::vector<Viewpoint> make_views(int step, double elev, int limit, int stride) {
  auto all = sample_viewpoints(step, elev, 360 / std::max(step, 1));
  std::vector<Viewpoint> out;
  for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(stride)) out.push_back(all[i]);
  if (limit > 0 && static_cast<int>(out.size()) > limit) out.resize(static_cast<std::size_t>(limit));
  return out;
}

SynthConfig synth_config(double lo, double hi, double sigma, double eps, int threads) {
  require(lo > 0.0 && lo <= hi && hi <= 1.0, "Canny thresholds need 0 < low <= high <= 1");
  SynthConfig cfg;
  cfg.canny.low = lo;
  cfg.canny.high = hi;
  cfg.canny.sigma = sigma;
  cfg.depth_epsilon = eps;
  cfg.threads = threads;
  return cfg;
}

std::string run_synth(const SynthArgs& a) {
  const fs::path out = a.common.out;
  const TriangleMesh mesh = load_obj(a.mesh);
  const auto views = make_views(a.azimuth_step, a.elevation, a.views, a.view_stride);
  const std::string id = fs::path(a.mesh).stem().string();
  const ShapeRender sr = synthesize_shape(mesh, views, id, synth_config(a.canny_low, a.canny_high, a.canny_sigma, a.depth_epsilon, a.common.threads));
  fs::create_directories(out);
  char name[64];
  for (std::size_t k = 0; k < views.size(); ++k) {
    std::snprintf(name, sizeof name, "view_%02zu.png", k);
    save_sketch_png(out / name, sr.sketches[k]);
    if (!sr.part_labels.empty()) {
      std::snprintf(name, sizeof name, "labels_%02zu.png", k);
      save_label_png(out / name, sr.part_labels[k]);
    }
    if (a.normal_maps) {
      std::snprintf(name, sizeof name, "normals_%02zu.png", k);
      save_normal_map_png(out / name, sr.normal_maps[k]);
    }
  }
  save_store(out / "correspondences.txt", {id, sr.records});
  nlohmann::json vj = nlohmann::json::array();
  for (const auto& v : views) vj.push_back({{"azimuth", v.azimuth}, {"elevation", v.elevation}});
  std::ofstream(out / "views.json") << vj.dump(2) << '\n';
  return "synth: " + std::to_string(views.size()) + " sketches, " + std::to_string(sr.records.size()) + " vertices with correspondences, " +
         std::to_string(pair_count(sr.records)) + " pixel pairs";
}

struct BuildArgs {
  Common common;
  std::string mesh_dir;
  std::string procedural;
  int shapes = 10;
  double spacing = 0.08;
  std::string category;
  std::string sampling = "OR";
  std::string split = "8,1,1";
  int azimuth_step = 30;
  double elevation = 30;
  int views = 0;
  int view_stride = 1;
  double canny_low = 0.1, canny_high = 0.2, canny_sigma = 1.0;
  double depth_epsilon = default_depth_epsilon();
};

std::string run_build(const BuildArgs& a) {
  require(a.mesh_dir.empty() != a.procedural.empty(), "give exactly one of --mesh-dir and --procedural");
  std::vector<NamedMesh> meshes;
  std::string category = a.category;
  if (!a.mesh_dir.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.mesh_dir))
      if (e.is_regular_file() && e.path().extension() == ".obj") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), "no .obj files in " + a.mesh_dir);
    for (const auto& f : files) meshes.push_back({f.stem().string(), load_obj(f)});
    if (category.empty()) category = fs::path(a.mesh_dir).filename().string();
  } else {
    require(a.shapes >= 1, "--shapes must be positive");
    for (int i = 0; i < a.shapes; ++i) {
      const std::uint64_t s = a.common.seed * 1000003ull + static_cast<std::uint64_t>(i);
      TriangleMesh m;
      if (a.procedural == "chair") m = make_chair(s, a.spacing);
      else if (a.procedural == "lamp") m = make_lamp(s, a.spacing);
      else if (a.procedural == "cube") m = make_cube(1.0 + 0.1 * i, 1 + i % 3);
      else throw precondition_error("--procedural must be chair, lamp or cube, got '" + a.procedural + "'");
      char id[64];
      std::snprintf(id, sizeof id, "%s%03d", a.procedural.c_str(), i);
      meshes.push_back({id, std::move(m)});
    }
    if (category.empty()) category = a.procedural;
  }
  const auto ratio = parse_double_list(a.split, "--split");
  require(ratio.size() == 3, "--split needs three weights train,val,test");
  BuildConfig cfg;
  cfg.category = category;
  cfg.views = make_views(a.azimuth_step, a.elevation, a.views, a.view_stride);
  cfg.sampling_mode = parse_sampling_mode(a.sampling);
  cfg.seed = a.common.seed;
  cfg.split_ratio = {ratio[0], ratio[1], ratio[2]};
  cfg.synth = synth_config(a.canny_low, a.canny_high, a.canny_sigma, a.depth_epsilon, a.common.threads);
  const auto m = build_dataset(meshes, a.common.out, cfg);
  std::size_t counts[3] = {0, 0, 0};
  std::uint64_t pairs = 0;
  for (const auto& s : m.shapes) ++counts[static_cast<int>(s.split)], pairs += s.pair_count;
  return "build-dataset: " + std::to_string(m.shapes.size()) + " shapes (" + std::to_string(counts[0]) + " train, " + std::to_string(counts[1]) +
         " val, " + std::to_string(counts[2]) + " test) x " + std::to_string(cfg.views.size()) + " views, " + std::to_string(pairs) + " pixel pairs";
}

struct TrainArgs {
  Common common;
  std::string dataset;
  TrainConfig cfg;
  std::string sampling = "OR";
  std::string scales = "0,1,2,3";
  bool unshared = false;
};

std::string run_train(TrainArgs a) {
  TrainConfig cfg = a.cfg;
  cfg.seed = a.common.seed;
  cfg.threads = a.common.threads;
  cfg.sampling_mode = parse_sampling_mode(a.sampling);
  cfg.net.scales = parse_int_list(a.scales, "--scales");
  cfg.net.shared = !a.unshared;
  cfg.validate();
  const Dataset ds = load_dataset(a.dataset);
  const fs::path out = a.common.out;
  fs::create_directories(out);
  std::ofstream(out / "train_config.json") << cfg.to_json().dump(2) << '\n';
  const auto res = train(ds, cfg, out, [](const EpochRecord& r) {
    std::printf("epoch %d train_loss %.6f val_loss %.6f (%.1fs)\n", r.epoch, r.train_loss, r.val_loss, r.seconds);
    std::fflush(stdout);
  });
  return "train: " + std::to_string(cfg.epochs) + " epochs, final train_loss " + fmt("%.6f", res.log.back().train_loss) + ", best epoch " +
         std::to_string(res.best_epoch) + " (loss " + fmt("%.6f", res.best_loss) + "), " + std::to_string(res.skipped_steps) + " skipped steps";
}

struct EvalArgs {
  Common common;
  std::string dataset, checkpoint, split = "test", shape;
  double tau = kSuccessRadius;
  std::string metric = "euclidean";
  std::string sampling = "AND";
  std::size_t max_queries = 0;
  // retrieval
  std::size_t queries = 1000;
  std::size_t gallery_per_view = 0;
  // disparity
  int anchor_view = 0;
  std::string disparities = "30,60,90,150,180";
};

void add_eval_flags(CLI::App* sub, EvalArgs& e, bool needs_checkpoint) {
  sub->add_option("--dataset", e.dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* ck = sub->add_option("--checkpoint", e.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  if (needs_checkpoint) ck->required();
  sub->add_option("--split", e.split, "train, val, test or all")->capture_default_str()->check(CLI::IsMember({"train", "val", "test", "all"}));
  sub->add_option("--shape", e.shape, "restrict to one shape id");
  sub->add_option("--sampling", e.sampling, "validity rule for query and candidate pixels, OR or AND")->capture_default_str();
}

void add_match_flags(CLI::App* sub, EvalArgs& e) {
  sub->add_option("--tau", e.tau, "success radius in pixels [reference: 16]")->capture_default_str();
  sub->add_option("--metric", e.metric, "pixel distance for the success test, euclidean or chebyshev")->capture_default_str();
  sub->add_option("--max-queries", e.max_queries, "queries per view pair, 0 = all")->capture_default_str();
}

EvalOptions eval_options(const EvalArgs& a) {
  EvalOptions o;
  o.tau = a.tau;
  o.metric = parse_success_metric(a.metric);
  o.mode = parse_sampling_mode(a.sampling);
  o.max_queries = a.max_queries;
  o.seed = a.common.seed;
  o.threads = a.common.threads;
  return o;
}

void write_pairs_csv(const fs::path& path, const std::vector<PairEvaluation>& pairs) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write " + path.string());
  out << "shape_id,view_a,view_b,queries,accuracy\n";
  for (const auto& p : pairs) out << p.shape_id << ',' << p.view_a << ',' << p.view_b << ',' << p.results.size() << ',' << fmt("%.9g", p.accuracy) << '\n';
}

std::string run_eval_correspondence(const EvalArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  auto net = load_net(a.checkpoint);
  const auto shapes = select_split(ds, a.split, a.shape);
  const auto rep = evaluate_correspondence(*net, shapes, eval_options(a));
  const fs::path out = a.common.out;
  fs::create_directories(out / "matches");
  write_pairs_csv(out / "pairs.csv", rep.pairs);
  for (const auto& p : rep.pairs)
    write_matches_csv(out / "matches" / (p.shape_id + "_" + std::to_string(p.view_a) + "_" + std::to_string(p.view_b) + ".csv"), p.results);
  return "eval-correspondence: accuracy " + fmt("%.4f", rep.mean_accuracy) + " over " + std::to_string(rep.pairs.size()) + " view pairs (" +
         std::to_string(rep.queries) + " queries, tau " + fmt("%g", a.tau) + ")";
}

std::string run_eval_retrieval(const EvalArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  auto net = load_net(a.checkpoint);
  const auto shapes = select_split(ds, a.split, a.shape);
  RetrievalOptions o;
  o.queries = a.queries;
  o.gallery_per_view = a.gallery_per_view;
  o.mode = parse_sampling_mode(a.sampling);
  o.seed = a.common.seed;
  o.threads = a.common.threads;
  const auto rep = pixelwise_retrieval_map(*net, shapes, o);
  fs::create_directories(a.common.out);
  write_ap_csv(fs::path(a.common.out) / "ap.csv", rep);
  return "eval-retrieval: MAP " + fmt("%.4f", rep.map) + " over " + std::to_string(rep.queries.size()) + " queries (" + std::to_string(rep.skipped) +
         " skipped without positives)";
}

std::string run_eval_baseline(const EvalArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  const auto train_shapes = ds.in_split(Split::Train);
  require(!train_shapes.empty(), "the baseline needs shapes in the train split");
  const auto tests = select_split(ds, a.split, a.shape);
  const EvalOptions opt = eval_options(a);
  std::unique_ptr<SketchDescNet<float>> net;
  if (!a.checkpoint.empty()) net = load_net(a.checkpoint);
  std::vector<PairEvaluation> base_pairs, net_pairs;
  std::vector<MatchResult> base_all, net_all;
  for (const ShapeData* sh : tests) {
    std::optional<ShapeDescriptors> desc;
    if (net) desc.emplace(describe_shape(*net, *sh, opt.mode, opt.threads));
    const int n = static_cast<int>(sh->sketches.size());
    for (int va = 0; va < n; ++va)
      for (int vb = 0; vb < n; ++vb) {
        if (va == vb) continue;
        Rng rng = Rng::derive(opt.seed, 0xE7A1 + static_cast<std::uint64_t>(va) * 1000 + static_cast<std::uint64_t>(vb));
        const auto qs = subsample(evaluation_queries(*sh, va, vb, opt.mode), opt.max_queries, rng);
        if (qs.empty()) continue;
        PairEvaluation pe{sh->shape_id, va, vb, retrieval_baseline(train_shapes, *sh, va, vb, qs, opt), 0.0};
        pe.accuracy = correspondence_accuracy(pe.results);
        base_all.insert(base_all.end(), pe.results.begin(), pe.results.end());
        base_pairs.push_back(std::move(pe));
        if (net) {
          PairEvaluation ne{sh->shape_id, va, vb, match_queries(desc->views[va], desc->views[vb], qs, opt.match()), 0.0};
          ne.accuracy = correspondence_accuracy(ne.results);
          net_all.insert(net_all.end(), ne.results.begin(), ne.results.end());
          net_pairs.push_back(std::move(ne));
        }
      }
  }
  require(!base_pairs.empty(), "no view pair produced evaluation queries");
  const fs::path out = a.common.out;
  fs::create_directories(out);
  write_pairs_csv(out / "baseline_pairs.csv", base_pairs);
  write_matches_csv(out / "baseline_matches.csv", base_all);
  auto mean_acc = [](const std::vector<PairEvaluation>& ps) {
    double s = 0.0;
    for (const auto& p : ps) s += p.accuracy;
    return s / static_cast<double>(ps.size());
  };
  std::string summary = "eval-baseline: baseline accuracy " + fmt("%.4f", mean_acc(base_pairs)) + " over " + std::to_string(base_pairs.size()) +
                        " view pairs (" + std::to_string(base_all.size()) + " queries)";
  if (net) {
    write_pairs_csv(out / "sketchdesc_pairs.csv", net_pairs);
    write_matches_csv(out / "sketchdesc_matches.csv", net_all);
    summary += ", sketchdesc accuracy " + fmt("%.4f", mean_acc(net_pairs)) + " on the same queries";
  }
  return summary;
}

std::string run_disparity(const EvalArgs& a) {
  const Dataset ds = load_dataset(a.dataset);
  auto net = load_net(a.checkpoint);
  const ShapeData& sh = *select_split(ds, a.split, a.shape).front();
  require_view(sh, a.anchor_view, "--anchor-view");
  const EvalOptions opt = eval_options(a);
  const auto rows = view_disparity_sweep(sh, describe_shape(*net, sh, opt.mode, opt.threads), a.anchor_view,
                                         parse_double_list(a.disparities, "--disparities"), opt);
  fs::create_directories(a.common.out);
  write_disparity_csv(fs::path(a.common.out) / "disparity.csv", rows);
  std::string s = "disparity: shape " + sh.shape_id + " anchor view " + std::to_string(a.anchor_view) + ":";
  for (const auto& r : rows) s += " " + fmt("%g", r.disparity) + "deg=" + fmt("%.4f", r.accuracy);
  return s;
}

struct PairArgs {
  Common common;
  std::string checkpoint;
  std::string dataset, shape;
  int view_a = 0, view_b = 1;
  std::string sketch_a, sketch_b;
  std::vector<std::string> query;
  std::string pixel;
  int stride = 1;
  int query_stride = 16;
  std::size_t max_queries = 200;
  double tau = kSuccessRadius;
  std::string metric = "euclidean";
  std::string sampling = "AND";
};

void add_pair_flags(CLI::App* sub, PairArgs& p) {
  sub->add_option("--checkpoint", p.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--dataset", p.dataset, "dataset directory (ground-truth mode)")->check(CLI::ExistingDirectory);
  sub->add_option("--shape", p.shape, "shape id within --dataset");
  sub->add_option("--view-a", p.view_a, "source view index")->capture_default_str();
  sub->add_option("--view-b", p.view_b, "target view index")->capture_default_str();
  sub->add_option("--sketch-a", p.sketch_a, "source 480x480 sketch PNG (image mode)")->check(CLI::ExistingFile);
  sub->add_option("--sketch-b", p.sketch_b, "target 480x480 sketch PNG (image mode)")->check(CLI::ExistingFile);
  sub->add_option("--stride", p.stride, "describe every k-th target ink pixel in image mode")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--sampling", p.sampling, "validity rule for dataset-mode pixels, OR or AND")->capture_default_str();
}

struct PairInput {
  SketchImage a, b;
  const ShapeData* shape = nullptr;
};

PairInput pair_input(const PairArgs& p, std::optional<Dataset>& ds) {
  PairInput in;
  const bool dataset_mode = !p.dataset.empty();
  require(dataset_mode != (!p.sketch_a.empty() || !p.sketch_b.empty()), "use either --dataset/--shape or --sketch-a/--sketch-b");
  if (dataset_mode) {
    ds.emplace(load_dataset(p.dataset));
    require(!p.shape.empty(), "--shape is required with --dataset");
    in.shape = &find_shape(*ds, p.shape);
    require_view(*in.shape, p.view_a, "--view-a");
    require_view(*in.shape, p.view_b, "--view-b");
    in.a = in.shape->sketches[p.view_a];
    in.b = in.shape->sketches[p.view_b];
  } else {
    require(!p.sketch_a.empty() && !p.sketch_b.empty(), "image mode needs both --sketch-a and --sketch-b");
    in.a = load_sketch_png(p.sketch_a);
    in.b = load_sketch_png(p.sketch_b);
  }
  return in;
}

std::string run_match(const PairArgs& p) {
  std::optional<Dataset> ds;
  const PairInput in = pair_input(p, ds);
  auto net = load_net(p.checkpoint);
  const SamplingMode mode = parse_sampling_mode(p.sampling);
  MatchOptions mo{p.tau, parse_success_metric(p.metric), p.common.threads};
  std::vector<Query> queries;
  std::vector<Pixel> cands;
  if (in.shape) {
    cands = evaluation_candidates(*in.shape, p.view_b, mode);
    std::map<Pixel, Query> gt;
    for (const auto& q : evaluation_queries(*in.shape, p.view_a, p.view_b, mode)) gt.emplace(q.pixel, q);
    if (p.query.empty()) {
      std::vector<Query> all;
      for (const auto& [px, q] : gt) all.push_back(q);
      Rng rng = Rng::derive(p.common.seed, 0x3A7C);
      queries = subsample(all, p.max_queries, rng);
    }
    for (const auto& s : p.query) {
      const Pixel px = parse_pixel(s);
      const auto it = gt.find(px);
      require(it != gt.end(), "query pixel " + s + " has no ground-truth correspondence in view " + std::to_string(p.view_b));
      queries.push_back(it->second);
    }
  } else {
    cands = strided_ink(in.b, p.stride);
    if (p.query.empty()) {
      const auto ink = strided_ink(in.a, p.query_stride);
      Rng rng = Rng::derive(p.common.seed, 0x3A7C);
      for (const auto& px : subsample(ink, p.max_queries, rng)) queries.push_back({px, px, -1});
    }
    for (const auto& s : p.query) queries.push_back({parse_pixel(s), parse_pixel(s), -1});
  }
  require(!queries.empty(), "no query pixels");
  require(!cands.empty(), "the target sketch has no candidate pixels");
  auto res = match_correspondences(*net, in.a, in.b, queries, cands, mo);
  if (!in.shape)
    for (auto& r : res) r.success = false;
  const fs::path out = p.common.out;
  fs::create_directories(out);
  write_matches_csv(out / "matches.csv", res);
  write_png(out / "matches.png", render_matches(in.a, in.b, res));
  if (in.shape)
    return "match: accuracy " + fmt("%.4f", correspondence_accuracy(res)) + " over " + std::to_string(res.size()) + " queries (tau " + fmt("%g", p.tau) + ")";
  double mean = 0.0;
  for (const auto& r : res) mean += r.distance;
  return "match: " + std::to_string(res.size()) + " queries matched, mean descriptor distance " + fmt("%.4f", mean / res.size()) + " (no ground truth)";
}

std::string run_distance_map(const PairArgs& p) {
  std::optional<Dataset> ds;
  const PairInput in = pair_input(p, ds);
  auto net = load_net(p.checkpoint);
  require(!p.pixel.empty(), "--pixel is required");
  const Pixel q = parse_pixel(p.pixel);
  require(in.a.pixels.contains(q), "--pixel lies outside the source sketch");
  const auto domain = in.shape ? evaluation_candidates(*in.shape, p.view_b, parse_sampling_mode(p.sampling)) : strided_ink(in.b, p.stride);
  require(!domain.empty(), "the target sketch has no candidate pixels");
  const auto m = distance_map(*net, in.a, q, in.b, domain, p.common.threads);
  const fs::path out = p.common.out;
  fs::create_directories(out);
  write_png(out / "distance_map.png", render_heat(m, in.b));
  {
    std::ofstream csv(out / "distance_map.csv");
    csv << "row,col,distance\n";
    for (int r = 0; r < in.b.rows(); ++r)
      for (int c = 0; c < in.b.cols(); ++c)
        if (!std::isnan(m.distance(r, c))) csv << r << ',' << c << ',' << fmt("%.9g", m.distance(r, c)) << '\n';
  }
  std::string s = "distance-map: minimum at " + std::to_string(m.minimum.row) + "," + std::to_string(m.minimum.col) + " distance " + fmt("%.4f", m.min_value);
  if (in.shape) {
    for (const auto& rec : in.shape->records) {
      const auto* ea = rec.find(p.view_a);
      const auto* eb = rec.find(p.view_b);
      if (ea && eb && ea->pixel == q) {
        s += ", ground truth " + std::to_string(eb->pixel.row) + "," + std::to_string(eb->pixel.col) + " (" +
             fmt("%.1f", euclidean_distance(m.minimum, eb->pixel)) + " px away)";
        break;
      }
    }
  }
  return s;
}

struct TransferArgs {
  PairArgs pair;
  std::string source_labels, target_labels;
  bool no_smooth = false;
};

std::string run_transfer(const TransferArgs& t) {
  const PairArgs& p = t.pair;
  std::optional<Dataset> ds;
  const PairInput in = pair_input(p, ds);
  auto net = load_net(p.checkpoint);
  Grid<int> src, truth;
  bool have_truth = false;
  if (in.shape) {
    require(!in.shape->part_labels.empty(), "shape " + in.shape->shape_id + " has no part labels");
    src = in.shape->part_labels[p.view_a];
    truth = in.shape->part_labels[p.view_b];
    have_truth = true;
  } else {
    require(!t.source_labels.empty(), "--source-labels is required in image mode");
    src = load_label_png(t.source_labels);
    if (!t.target_labels.empty()) truth = load_label_png(t.target_labels), have_truth = true;
  }
  TransferOptions o;
  o.smooth = !t.no_smooth;
  o.stride = p.stride;
  o.threads = p.common.threads;
  const auto labels = transfer_labels(*net, in.a, src, in.b, o);
  const fs::path out = p.common.out;
  fs::create_directories(out);
  save_label_png(out / "labels.png", labels);
  write_png(out / "labels_vis.png", label_image(in.b, labels));
  std::size_t labeled = 0;
  for (int v : labels.values()) labeled += v >= 0;
  std::string s = "transfer-labels: " + std::to_string(labeled) + " target pixels labeled";
  if (have_truth) s += ", agreement " + fmt("%.4f", label_agreement(labels, truth));
  return s;
}

// ---------------------------------------------------------------------------
// run-meta.json

nlohmann::json option_values(const CLI::App* sub) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* o : sub->get_options()) {
    if (o->get_lnames().empty() || o->get_lnames().front() == "help") continue;
    const std::string key = o->get_lnames().front();
    if (o->get_expected_max() == 0) {
      j[key] = o->count() > 0;
    } else if (o->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeAll) {
      j[key] = o->results();
    } else if (o->count() > 0) {
      j[key] = o->results().back();
    } else {
      j[key] = o->get_default_str();
    }
  }
  return j;
}

void write_run_meta(const fs::path& dir, const std::vector<std::string>& argv, const CLI::App* sub, const Common& c, double seconds) {
  fs::create_directories(dir);
  nlohmann::json meta{{"command", argv},
                      {"subcommand", sub->get_name()},
                      {"config", option_values(sub)},
                      {"config_file", c.config},
                      {"seed", c.seed},
                      {"threads", c.threads},
                      {"versions",
                       {{"sketchdesc", kVersion},
                        {"compiler", __VERSION__},
                        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
                        {"cli11", CLI11_VERSION}}},
                      {"wall_seconds", seconds}};
  std::ofstream(dir / "run-meta.json") << meta.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"sketchdesc: multi-view sketch correspondence datasets, descriptor training and evaluation", "sketchdesc"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "render one mesh into sketches and pixel correspondences");
  add_common(s_synth, synth.common, "runs/synth");
  s_synth->add_option("--mesh", synth.mesh, "input .obj mesh")->required()->check(CLI::ExistingFile);
  add_render_flags(s_synth, synth.azimuth_step, synth.elevation, synth.views, synth.view_stride, synth.canny_low, synth.canny_high,
                   synth.canny_sigma, synth.depth_epsilon);
  s_synth->add_flag("--normal-maps", synth.normal_maps, "also write 16-bit normal-map PNGs");

  BuildArgs build;
  auto* s_build = app.add_subcommand("build-dataset", "render a collection of meshes into a split dataset directory");
  add_common(s_build, build.common, "runs/dataset");
  auto* o_mesh_dir = s_build->add_option("--mesh-dir", build.mesh_dir, "directory of .obj meshes")->check(CLI::ExistingDirectory);
  auto* o_proc = s_build->add_option("--procedural", build.procedural, "generate shapes instead: chair, lamp or cube");
  o_mesh_dir->excludes(o_proc);
  s_build->add_option("--shapes", build.shapes, "number of procedural shapes")->capture_default_str();
  s_build->add_option("--spacing", build.spacing, "procedural mesh vertex spacing")->capture_default_str();
  s_build->add_option("--category", build.category, "category name stored in the manifest");
  s_build->add_option("--sampling", build.sampling, "training sample rule, OR or AND [reference: OR]")->capture_default_str();
  s_build->add_option("--split", build.split, "train,val,test weights [reference: 8,1,1]")->capture_default_str();
  add_render_flags(s_build, build.azimuth_step, build.elevation, build.views, build.view_stride, build.canny_low, build.canny_high,
                   build.canny_sigma, build.depth_epsilon);

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "train the descriptor network with the triplet loss");
  add_common(s_train, tr.common, "runs/train");
  s_train->add_option("--dataset", tr.dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  s_train->add_option("--batch", tr.cfg.batch_size, "triplets per batch [reference: 64]")->capture_default_str();
  s_train->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate [reference: 1e-3]")->capture_default_str();
  s_train->add_option("--beta1", tr.cfg.adam_beta1, "Adam beta1")->capture_default_str();
  s_train->add_option("--beta2", tr.cfg.adam_beta2, "Adam beta2")->capture_default_str();
  s_train->add_option("--adam-eps", tr.cfg.adam_epsilon, "Adam epsilon")->capture_default_str();
  s_train->add_option("--margin", tr.cfg.margin, "triplet margin [reference: 1.0]")->capture_default_str();
  s_train->add_option("--epochs", tr.cfg.epochs, "training epochs [reference: 100]")->capture_default_str();
  s_train->add_option("--category", tr.cfg.category, "required dataset category, empty accepts any");
  s_train->add_option("--sampling", tr.sampling, "training sample rule, OR or AND [reference: OR]")->capture_default_str();
  s_train->add_option("--pairs-per-epoch", tr.cfg.pairs_per_epoch, "cap on pixel pairs per epoch, 0 = all")->capture_default_str();
  s_train->add_option("--val-pairs", tr.cfg.val_pairs, "pairs scored for the validation loss")->capture_default_str();
  s_train->add_option("--width", tr.cfg.net.width, "channel-width multiplier [reference: 1.0]")->capture_default_str();
  s_train->add_option("--scales", tr.scales, "active patch scales, 0..3 for 32,64,128,256 px [reference: 0,1,2,3]")->capture_default_str();
  s_train->add_flag("--unshared", tr.unshared, "one branch per scale instead of shared weights [reference: shared]");
  s_train->add_option("--input-mean", tr.cfg.net.input_mean, "input standardization mean")->capture_default_str();
  s_train->add_option("--input-std", tr.cfg.net.input_std, "input standardization std")->capture_default_str();

  EvalArgs ec;
  auto* s_ec = app.add_subcommand("eval-correspondence", "nearest-descriptor correspondence accuracy over view pairs");
  add_common(s_ec, ec.common, "runs/eval-correspondence");
  add_eval_flags(s_ec, ec, true);
  add_match_flags(s_ec, ec);

  EvalArgs er;
  auto* s_er = app.add_subcommand("eval-retrieval", "pixel-wise retrieval mean average precision");
  add_common(s_er, er.common, "runs/eval-retrieval");
  add_eval_flags(s_er, er, true);
  s_er->add_option("--queries", er.queries, "sampled query pixels [reference: 1000]")->capture_default_str();
  s_er->add_option("--gallery-per-view", er.gallery_per_view, "gallery pixels sampled per view, 0 = all")->capture_default_str();

  EvalArgs eb;
  auto* s_eb = app.add_subcommand("eval-baseline", "HOG retrieval baseline; with --checkpoint also scores the network on the same queries");
  add_common(s_eb, eb.common, "runs/eval-baseline");
  add_eval_flags(s_eb, eb, false);
  add_match_flags(s_eb, eb);

  EvalArgs ed;
  auto* s_ed = app.add_subcommand("disparity", "correspondence accuracy against view disparity");
  add_common(s_ed, ed.common, "runs/disparity");
  add_eval_flags(s_ed, ed, true);
  add_match_flags(s_ed, ed);
  s_ed->add_option("--anchor-view", ed.anchor_view, "anchor view index")->capture_default_str();
  s_ed->add_option("--disparities", ed.disparities, "azimuth offsets in degrees [reference: 30,60,90,150,180]")->capture_default_str();

  PairArgs pm;
  auto* s_match = app.add_subcommand("match", "match pixels of one sketch into another");
  add_common(s_match, pm.common, "runs/match");
  add_pair_flags(s_match, pm);
  s_match->add_option("--query", pm.query, "query pixel row,col (repeatable)")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  s_match->add_option("--query-stride", pm.query_stride, "image mode: sample every k-th source ink pixel")->capture_default_str()->check(CLI::PositiveNumber);
  s_match->add_option("--max-queries", pm.max_queries, "cap on sampled queries, 0 = all")->capture_default_str();
  s_match->add_option("--tau", pm.tau, "success radius in pixels [reference: 16]")->capture_default_str();
  s_match->add_option("--metric", pm.metric, "euclidean or chebyshev")->capture_default_str();

  PairArgs pd;
  auto* s_dm = app.add_subcommand("distance-map", "descriptor distance from one pixel to every pixel of another sketch");
  add_common(s_dm, pd.common, "runs/distance-map");
  add_pair_flags(s_dm, pd);
  s_dm->add_option("--pixel", pd.pixel, "query pixel row,col")->required();

  TransferArgs tl;
  auto* s_tl = app.add_subcommand("transfer-labels", "copy part labels from a labeled sketch to another sketch");
  add_common(s_tl, tl.pair.common, "runs/transfer-labels");
  add_pair_flags(s_tl, tl.pair);
  s_tl->add_option("--source-labels", tl.source_labels, "label PNG for the source sketch (image mode)")->check(CLI::ExistingFile);
  s_tl->add_option("--target-labels", tl.target_labels, "label PNG of the target for an agreement score")->check(CLI::ExistingFile);
  s_tl->add_flag("--no-smooth", tl.no_smooth, "skip per-stroke majority smoothing");

  // Unknown or missing subcommand gets its own exit code.
  std::size_t cmd_pos = 1;
  while (cmd_pos < args.size() && !args[cmd_pos].empty() && args[cmd_pos][0] == '-') ++cmd_pos;
  const bool top_level_flag_only = cmd_pos >= args.size() && args.size() > 1;
  if (cmd_pos >= args.size() && !top_level_flag_only) {
    std::cerr << app.help() << "error: missing subcommand\n";
    return kUnknownCommand;
  }
  if (!top_level_flag_only && std::find(kCommands.begin(), kCommands.end(), args[cmd_pos]) == kCommands.end()) {
    std::cerr << "error: unknown subcommand '" << args[cmd_pos] << "'\nknown subcommands:";
    for (const auto& c : kCommands) std::cerr << ' ' << c;
    std::cerr << '\n';
    return kUnknownCommand;
  }

  // Config values go right after the subcommand so later command-line flags win.
  std::vector<std::string> final_args = args;
  try {
    for (std::size_t i = cmd_pos + 1; i < args.size(); ++i) {
      std::string file;
      if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
      if (file.empty()) continue;
      const auto extra = config_args(file, args[cmd_pos]);
      final_args.insert(final_args.begin() + static_cast<std::ptrdiff_t>(cmd_pos) + 1, extra.begin(), extra.end());
      break;
    }
    std::vector<std::string> reversed(final_args.rbegin(), final_args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadFlags;
  }

  const auto t0 = std::chrono::steady_clock::now();
  CLI::App* sub = app.get_subcommands().front();
  const Common* common = nullptr;
  try {
    std::string summary;
    const std::string name = sub->get_name();
    if (name == "synth") common = &synth.common, summary = run_synth(synth);
    else if (name == "build-dataset") common = &build.common, summary = run_build(build);
    else if (name == "train") common = &tr.common, summary = run_train(tr);
    else if (name == "eval-correspondence") common = &ec.common, summary = run_eval_correspondence(ec);
    else if (name == "eval-retrieval") common = &er.common, summary = run_eval_retrieval(er);
    else if (name == "eval-baseline") common = &eb.common, summary = run_eval_baseline(eb);
    else if (name == "disparity") common = &ed.common, summary = run_disparity(ed);
    else if (name == "match") common = &pm.common, summary = run_match(pm);
    else if (name == "distance-map") common = &pd.common, summary = run_distance_map(pd);
    else common = &tl.pair.common, summary = run_transfer(tl);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_meta(common->out, args, sub, *common, seconds);
    std::cout << summary << '\n';
    return kOk;
  } catch (const precondition_error& e) {
    std::cerr << "error (precondition): " << e.what() << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error (runtime): " << e.what() << '\n';
    return kRuntime;
  }
}
