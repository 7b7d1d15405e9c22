#include "sonargen/cli.hpp"

#include "sonargen/evaluation.hpp"
#include "sonargen/image_io.hpp"
#include "sonargen/procedural.hpp"
#include "sonargen/sequence.hpp"
#include "sonargen/service.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <functional>
#include <iostream>
#include <sstream>

namespace sonargen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Options registered with CLI11 and echoed into the run manifest.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& value, const std::string& help) {
    items_.push_back({name, [&value] { return json(value); }, false});
    return app_->add_option("--" + name, value, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
    items_.push_back({name, [&value] { return json(value); }, true});
    return app_->add_flag("--" + name, value, help);
  }

  json values() const {
    json j = json::object();
    for (const auto& i : items_) j[i.name] = i.get();
    return j;
  }

  /// Equivalent command line, flags in registration order.
  std::vector<std::string> argv() const {
    std::vector<std::string> out{app_->get_name()};
    for (const auto& i : items_) {
      const json v = i.get();
      if (i.is_flag) {
        if (v.get<bool>()) out.push_back("--" + i.name);
        continue;
      }
      out.push_back("--" + i.name);
      out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    return out;
  }

 private:
  struct Item {
    std::string name;
    std::function<json()> get;
    bool is_flag;
  };
  CLI::App* app_;
  std::vector<Item> items_;
};

json read_json_file(const fs::path& file, const std::string& what) {
  if (!fs::exists(file)) throw IoError(what + " not found: " + file.string());
  auto j = json::parse(read_file(file), nullptr, false);
  if (j.is_discarded()) throw ValidationError(std::vector<FieldError>{{what, "not valid JSON: " + file.string()}});
  return j;
}

json manifest_for(const std::string& command, const Flags& flags) {
  return {{"format_version", kFormatVersion}, {"command", command}, {"flags", flags.values()}, {"argv", flags.argv()}};
}

void write_manifest(const fs::path& dir, const json& manifest) {
  fs::create_directories(dir);
  write_file_atomic(dir / "run.json", manifest.dump(2));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Images (and label maps when stored) from a corpus or a scan directory.
struct ImageSet {
  std::vector<Image> images;
  std::vector<LabelGrid> maps;
  std::optional<MissionScan> scan;
};

ImageSet load_images(const fs::path& dir) {
  ImageSet s;
  if (fs::exists(dir / "manifest.json")) {
    s.scan = load_scan(dir);
    for (const auto& t : s.scan->tiles) s.images.push_back(t.intensity);
    for (const auto& m : s.scan->maps) s.maps.push_back(m.labels);
  } else if (fs::exists(dir / "meta.json")) {
    const Corpus c = load_corpus(dir);
    for (const auto& e : c.examples) {
      s.images.push_back(e.image.intensity);
      s.maps.push_back(e.map.labels);
    }
  } else {
    throw IoError("neither a scan (manifest.json) nor a corpus (meta.json): " + dir.string());
  }
  return s;
}

// --- commands ---------------------------------------------------------------

struct MakeDataset {
  std::string map, route, out, oracle;
  int n = 540;
  std::uint64_t seed = 0;
  int tile_rows = 464;

  void run(const json& manifest) const {
    const WorldMap world = parse_world_map(read_json_file(map, "map"));
    const MissionSpec mission = parse_mission(read_json_file(route, "route"));
    CorpusOptions opt;
    opt.tile_rows = tile_rows;
    opt.oracle = OracleParams::for_tile_rows(tile_rows);
    opt.conditioning = ConditioningConfig::for_tile_rows(tile_rows);
    if (!oracle.empty()) {
      json j = opt.oracle;
      j.update(read_json_file(oracle, "oracle"));
      opt.oracle = j.get<OracleParams>();
    }
    const Corpus c = make_corpus(world, mission, n, seed, opt);
    save_corpus(c, out);
    write_manifest(out, manifest);
    std::cout << json{{"examples", c.size()}, {"out", out}}.dump() << "\n";
  }
};

struct DemoInputs {
  std::string out;
  std::uint64_t seed = 0;
  double length_m = 1500;
  int swath_px = 512;

  void run(const json& manifest) const {
    fs::create_directories(out);
    json map = demo_world(seed);
    json route = demo_route(length_m, swath_px);
    write_file_atomic(fs::path(out) / "map.json", map.dump(2));
    write_file_atomic(fs::path(out) / "route.json", route.dump(2));
    write_manifest(out, manifest);
    std::cout << json{{"map", (fs::path(out) / "map.json").string()}, {"route", (fs::path(out) / "route.json").string()}}.dump()
              << "\n";
  }
};

struct Train {
  std::string corpus, out, preset = "full";
  gan::TrainConfig cfg;
  int tile_rows = 464, tile_cols = 512;
  int width = 0;
  std::uint64_t init_seed = 0;

  void run(const json& manifest) const {
    cfg.validate();
    const Corpus c = load_corpus(corpus);
    if (c.meta.tile_rows != tile_rows || c.meta.tile_cols != tile_cols)
      throw ValidationError(std::vector<FieldError>{
          {"tile-rows", "corpus tiles are " + std::to_string(c.meta.tile_rows) + "x" + std::to_string(c.meta.tile_cols) +
                            ", flags say " + std::to_string(tile_rows) + "x" + std::to_string(tile_cols)}});
    nn::GeneratorConfig g;
    nn::DiscriminatorConfig d;
    if (preset == "desk") {
      g = gan::desk_generator_config();
      d = gan::desk_discriminator_config();
    } else if (preset != "full") {
      throw ValidationError(std::vector<FieldError>{{"preset", "must be full or desk"}});
    }
    if (width > 0) g.base_width = d.base_width = width;
    auto model = std::make_shared<gan::Model>(g, d, c.meta.conditioning, tile_rows, tile_cols);
    model->initialize(init_seed);
    gan::Trainer trainer(cfg, model);
    fs::create_directories(out);
    write_manifest(out, manifest);
    trainer.run(c, fs::path(out), [](const gan::EpochLog& e) { std::cout << json(e).dump() << std::endl; });
    write_manifest(out, manifest);
  }
};

struct Generate {
  std::string mission, map, checkpoint, mode = "markov", out;
  std::uint64_t seed = 0;
  bool no_noise = false;
  int blend_window = 0;
  double blend_steepness = 8.0;

  void run(const json& manifest) const {
    const WorldMap world = parse_world_map(read_json_file(map, "map"));
    const MissionSpec spec = parse_mission(read_json_file(mission, "mission"));
    const auto ck = gan::load_checkpoint(checkpoint);
    GenerationOptions opt;
    opt.mode = mode_from_string(mode);
    opt.seed = seed;
    opt.noise = !no_noise;
    opt.blend_window_rows = blend_window;
    opt.blend_steepness = blend_steepness;
    write_manifest(out, manifest);
    const auto r = generate_mission(world, spec, ck, opt, out, {}, {{"run", manifest}});
    std::cout << json{{"tiles", r.tiles}, {"pings", r.pings}, {"out", out}}.dump() << "\n";
  }
};

struct Evaluate {
  std::string scan, real, metrics = "fid,seam,drift,viewpoint", out, embedder = "random", reverse_scan;
  std::string features_scan, features_real;
  std::uint64_t seed = 0;
  int dim = 64;

  void run(const json& manifest) const {
    const auto wanted = split(metrics, ',');
    for (const auto& m : wanted)
      if (m != "fid" && m != "seam" && m != "drift" && m != "viewpoint")
        throw ValidationError(std::vector<FieldError>{{"metrics", "unknown metric " + m}});
    const auto has = [&](const char* m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };
    const ImageSet gen = load_images(scan);
    json report = {{"scan", scan}, {"real", real}, {"metrics", json::array()}, {"run", manifest}};
    if (has("fid")) {
      if (real.empty()) throw ValidationError(std::vector<FieldError>{{"real", "fid needs --real"}});
      const ImageSet ref = load_images(real);
      eval::FrechetStats a, b;
      json params = {{"embedder", embedder}};
      if (embedder == "random") {
        eval::RandomConvEmbedder e(seed, dim);
        a = eval::embed_and_fit(gen.images, e);
        b = eval::embed_and_fit(ref.images, e);
        params["dim"] = dim;
      } else if (embedder == "external") {
        if (features_scan.empty() || features_real.empty())
          throw ValidationError(std::vector<FieldError>{{"embedder", "external needs --features-scan and --features-real"}});
        eval::ExternalFeatures fa(features_scan), fb(features_real);
        a = eval::embed_and_fit(gen.images, fa);
        b = eval::embed_and_fit(ref.images, fb);
      } else {
        throw ValidationError(std::vector<FieldError>{{"embedder", "must be random or external"}});
      }
      params["n_scan"] = a.n;
      params["n_real"] = b.n;
      json warnings = a.warnings;
      for (const auto& w : b.warnings) warnings.push_back(w);
      params["warnings"] = warnings;
      report["metrics"].push_back(eval::report_entry("fid", eval::frechet_distance(a, b), params, seed));
    }
    if (has("seam")) {
      if (!gen.scan) throw ValidationError(std::vector<FieldError>{{"scan", "seam needs a scan directory"}});
      report["metrics"].push_back(
          eval::report_entry("seam", eval::to_json_value(eval::seam_discontinuity(*gen.scan)), {}, gen.scan->seed));
    }
    if (has("drift")) {
      if (!gen.scan) throw ValidationError(std::vector<FieldError>{{"scan", "drift needs a scan directory"}});
      report["metrics"].push_back(
          eval::report_entry("drift", eval::to_json_value(eval::drift_check(*gen.scan)), {}, gen.scan->seed));
    }
    if (has("viewpoint")) {
      if (reverse_scan.empty())
        throw ValidationError(std::vector<FieldError>{{"reverse-scan", "viewpoint needs the opposite-direction scan"}});
      const MissionScan a = load_scan(scan), b = load_scan(reverse_scan);
      if (a.maps.empty() || b.maps.empty())
        throw ValidationError(std::vector<FieldError>{{"scan", "viewpoint needs scans stored with label maps"}});
      const auto rep = eval::viewpoint_consistency(stitch(a), concatenate_valid_rows(a.maps), stitch(b),
                                                   concatenate_valid_rows(b.maps));
      report["metrics"].push_back(eval::report_entry("viewpoint", eval::to_json_value(rep), {}, a.seed));
    }
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_file_atomic(out, report.dump(2));
    std::cout << report["metrics"].dump() << "\n";
  }
};

struct Bench {
  std::string checkpoint, out, modes = "markov,independent,sigmoid_blended";
  int tiles = 64;
  int warmup = 3;
  std::uint64_t seed = 0;

  void run(const json& manifest) const {
    if (tiles < 1) throw ValidationError(std::vector<FieldError>{{"tiles", "must be positive"}});
    const auto ck = gan::load_checkpoint(checkpoint);
    json results = json::array();
    std::map<std::string, double> pps;
    for (const auto& m : split(modes, ',')) {
      const auto mode = mode_from_string(m);
      const auto r = eval::throughput(ck.model, std::size_t(tiles), mode, warmup, seed);
      pps[to_string(mode)] = r.pixels_per_second;
      results.push_back(eval::report_entry("throughput", eval::to_json_value(r),
                                           {{"tile_rows", ck.model->tile_rows}, {"tile_cols", ck.model->tile_cols}},
                                           seed, r.hardware_note));
    }
    json report = {{"checkpoint_id", ck.id}, {"metrics", results}, {"run", manifest}};
    if (pps.count("markov") && pps.count("independent"))
      report["markov_over_independent"] = pps["markov"] / pps["independent"];
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_file_atomic(out, report.dump(2));
    std::cout << results.dump() << "\n";
  }
};

struct Serve {
  std::string config;

  void run(const json&) const {
    service::Service svc(service::ServiceConfig::load(config));
    std::cout << json{{"listening", svc.config().host + ":" + std::to_string(svc.config().port)},
                      {"store", svc.config().store.string()}}.dump()
              << std::endl;
    if (!svc.listen()) throw IoError("could not listen on " + svc.config().host + ":" + std::to_string(svc.config().port));
  }
};

int report_error(const char* kind, int code, const std::string& message) {
  std::cerr << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << std::endl;
  return code;
}

int dispatch(const std::vector<std::string>& args, json* dry = nullptr);

int rerun(const std::string& manifest_file, const std::string& out) {
  const json m = read_json_file(manifest_file, "manifest");
  if (!m.contains("argv") || !m["argv"].is_array())
    throw ValidationError(std::vector<FieldError>{{"manifest", "has no argv"}});
  auto argv = m["argv"].get<std::vector<std::string>>();
  if (!out.empty()) {
    for (std::size_t i = 0; i + 1 < argv.size(); ++i)
      if (argv[i] == "--out") argv[i + 1] = out;
  }
  return dispatch(argv);
}

int dispatch(const std::vector<std::string>& args, json* dry) {
  CLI::App app{"Mission-scale side-scan sonar synthesis", "sonargen"};
  app.require_subcommand(1, 1);

  MakeDataset mk;
  auto* mk_cmd = app.add_subcommand("make-dataset", "Render a paired oracle corpus along a route");
  Flags mk_flags(mk_cmd);
  mk_flags.add("map", mk.map, "WorldMap JSON")->required();
  mk_flags.add("route", mk.route, "MissionSpec JSON for the survey route")->required();
  mk_flags.add("n", mk.n, "number of consecutive tiles");
  mk_flags.add("seed", mk.seed, "oracle seed");
  mk_flags.add("tile-rows", mk.tile_rows, "rows per tile");
  mk_flags.add("oracle", mk.oracle, "JSON file overriding oracle texture parameters");
  mk_flags.add("out", mk.out, "corpus directory")->required();

  DemoInputs demo;
  auto* demo_cmd = app.add_subcommand("demo-inputs", "Write a seeded demo world map and survey route");
  Flags demo_flags(demo_cmd);
  demo_flags.add("seed", demo.seed, "world seed");
  demo_flags.add("length", demo.length_m, "route length in meters");
  demo_flags.add("swath-px", demo.swath_px, "swath width in pixels");
  demo_flags.add("out", demo.out, "output directory")->required();

  Train tr;
  auto* tr_cmd = app.add_subcommand("train", "Adversarial training on a corpus");
  Flags tr_flags(tr_cmd);
  tr_flags.add("corpus", tr.corpus, "corpus directory")->required();
  tr_flags.add("epochs", tr.cfg.epochs, "epochs");
  tr_flags.add("batch", tr.cfg.batch_size, "batch size");
  tr_flags.add("d-steps", tr.cfg.d_steps_per_g_step, "discriminator updates per generator update");
  tr_flags.add("l1-weight", tr.cfg.l1_weight, "weight of the L1 term");
  tr_flags.add("lr", tr.cfg.learning_rate, "Adam learning rate");
  tr_flags.add("beta1", tr.cfg.beta1, "Adam beta1");
  tr_flags.add("beta2", tr.cfg.beta2, "Adam beta2");
  tr_flags.add("seed", tr.cfg.seed, "training seed (shuffling, dropout)");
  tr_flags.add("init-seed", tr.init_seed, "weight initialization seed");
  tr_flags.add("checkpoint-every", tr.cfg.checkpoint_every, "epochs between intermediate checkpoints, 0 for none");
  tr_flags.add("tile-rows", tr.tile_rows, "tile rows (must match the corpus)");
  tr_flags.add("tile-cols", tr.tile_cols, "tile columns (must match the corpus)");
  tr_flags.add("preset", tr.preset, "network sizes: full or desk");
  tr_flags.add("width", tr.width, "override base filter count (0 keeps the preset)");
  tr_flags.add("out", tr.out, "checkpoint directory")->required();

  Generate gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate a full mission scan");
  Flags gen_flags(gen_cmd);
  gen_flags.add("mission", gen.mission, "MissionSpec JSON")->required();
  gen_flags.add("map", gen.map, "WorldMap JSON")->required();
  gen_flags.add("checkpoint", gen.checkpoint, "checkpoint directory")->required();
  gen_flags.add("mode", gen.mode, "markov, independent or sigmoid");
  gen_flags.add("seed", gen.seed, "noise seed");
  gen_flags.flag("no-noise", gen.no_noise, "disable test-time dropout");
  gen_flags.add("blend-window", gen.blend_window, "sigmoid blend half-window in rows (0 = snippet rows)");
  gen_flags.add("blend-steepness", gen.blend_steepness, "sigmoid steepness k");
  gen_flags.add("out", gen.out, "scan directory")->required();

  Evaluate ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Compute evaluation metrics for a scan");
  Flags ev_flags(ev_cmd);
  ev_flags.add("scan", ev.scan, "scan or corpus directory")->required();
  ev_flags.add("real", ev.real, "reference scan or corpus directory");
  ev_flags.add("metrics", ev.metrics, "comma-separated subset of fid,seam,drift,viewpoint");
  ev_flags.add("embedder", ev.embedder, "random or external");
  ev_flags.add("dim", ev.dim, "random embedder feature dimension");
  ev_flags.add("features-scan", ev.features_scan, "external features for --scan");
  ev_flags.add("features-real", ev.features_real, "external features for --real");
  ev_flags.add("reverse-scan", ev.reverse_scan, "opposite-direction scan of the same terrain");
  ev_flags.add("seed", ev.seed, "embedder seed");
  ev_flags.add("out", ev.out, "report JSON file")->required();

  Bench bn;
  auto* bn_cmd = app.add_subcommand("bench", "Generation throughput per mode");
  Flags bn_flags(bn_cmd);
  bn_flags.add("checkpoint", bn.checkpoint, "checkpoint directory")->required();
  bn_flags.add("tiles", bn.tiles, "timed tiles per mode");
  bn_flags.add("warmup", bn.warmup, "untimed tiles per mode");
  bn_flags.add("modes", bn.modes, "comma-separated modes");
  bn_flags.add("seed", bn.seed, "noise seed");
  bn_flags.add("out", bn.out, "report JSON file")->required();

  Serve sv;
  auto* sv_cmd = app.add_subcommand("serve", "HTTP service");
  Flags sv_flags(sv_cmd);
  sv_flags.add("config", sv.config, "JSON config file (SONAR_STORE and SONAR_PORT override it)");

  std::string rerun_manifest, rerun_out;
  auto* re_cmd = app.add_subcommand("rerun", "Repeat a run from its run.json manifest");
  re_cmd->add_option("--manifest", rerun_manifest, "run.json of an earlier run")->required();
  re_cmd->add_option("--out", rerun_out, "replacement output path");

  std::vector<std::string> store{"sonargen"};
  store.insert(store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : store) argv.push_back(s.data());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report_error("validation", kValidation, e.what());
  }

  if (dry) {
    const std::vector<std::pair<CLI::App*, const Flags*>> cmds{{mk_cmd, &mk_flags}, {demo_cmd, &demo_flags},
                                                               {tr_cmd, &tr_flags}, {gen_cmd, &gen_flags},
                                                               {ev_cmd, &ev_flags}, {bn_cmd, &bn_flags},
                                                               {sv_cmd, &sv_flags}};
    for (const auto& [cmd, flags] : cmds)
      if (cmd->parsed()) *dry = manifest_for(cmd->get_name(), *flags);
    return kOk;
  }
  if (mk_cmd->parsed()) mk.run(manifest_for("make-dataset", mk_flags));
  if (demo_cmd->parsed()) demo.run(manifest_for("demo-inputs", demo_flags));
  if (tr_cmd->parsed()) tr.run(manifest_for("train", tr_flags));
  if (gen_cmd->parsed()) gen.run(manifest_for("generate", gen_flags));
  if (ev_cmd->parsed()) ev.run(manifest_for("evaluate", ev_flags));
  if (bn_cmd->parsed()) bn.run(manifest_for("bench", bn_flags));
  if (sv_cmd->parsed()) sv.run(manifest_for("serve", sv_flags));
  if (re_cmd->parsed()) return rerun(rerun_manifest, rerun_out);
  return kOk;
}

}  // namespace

json effective_flags(const std::vector<std::string>& args) {
  json out;
  if (dispatch(args, &out) != kOk) throw ValidationError("could not parse command line");
  return out;
}

int run(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const ValidationError& e) {
    return report_error("validation", kValidation, e.what());
  } catch (const std::invalid_argument& e) {
    return report_error("validation", kValidation, e.what());
  } catch (const NumericError& e) {
    return report_error("numeric", kNumeric, e.what());
  } catch (const IoError& e) {
    return report_error("io", kIo, e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error("io", kIo, e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error("validation", kValidation, e.what());
  } catch (const std::exception& e) {
    return report_error("failure", kFailure, e.what());
  }
}

}  // namespace sonargen::cli
