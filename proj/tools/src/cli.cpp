#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "facefuse/config.hpp"
#include "facefuse/degrade.hpp"
#include "facefuse/error.hpp"
#include "facefuse/evalkit.hpp"
#include "facefuse/faces.hpp"
#include "facefuse/image_io.hpp"
#include "facefuse/metric.hpp"
#include "facefuse/runtime.hpp"
#include "facefuse/train.hpp"

namespace facefuse::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Flags shared by every command.
struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--seed", c.seed, "Random seed (overrides the config seed)");
  cmd.add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd.add_option("--set", c.overrides, "Config override key=value (repeatable)")
      ->type_name("KEY=VALUE")
      ->allow_extra_args(false);
  cmd.add_option("--out-dir", c.out_dir, "Directory that relative outputs resolve against");
}

train::TrainConfig effective_config(const CLI::App& cmd, const Common& c) {
  train::TrainConfig config = c.config.empty() ? train::TrainConfig{} : train::load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InvalidArgument("--set expects key=value, got '" + kv + "'");
    }
    train::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cmd.count("--seed") > 0) config.seed = c.seed;
  config.validate();
  return config;
}

fs::path output_path(const Common& c, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : fs::path(c.out_dir) / p;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::string hex_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Stable per-file seed, independent of how many other files share the directory.
std::uint64_t file_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FileNotFound("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("no .png files in " + dir.string());
  return files;
}

json record_json(const train::LogRecord& r, train::Stage stage) {
  return json::parse(train::log_line(r, stage));
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
  std::string in;
  std::string out;
  std::optional<double> sigma;
  std::optional<double> scale;
  std::optional<double> noise;
  std::optional<int> quality;
};

void setup_degrade(CLI::App& cmd, DegradeArgs& a) {
  cmd.add_option("--in", a.in, "Directory of high-quality .png images")->required();
  cmd.add_option("--out", a.out, "Output directory for degraded images")->required();
  cmd.add_option("--sigma", a.sigma, "Fixed blur std instead of sampling");
  cmd.add_option("--scale", a.scale, "Fixed downsample factor instead of sampling");
  cmd.add_option("--noise", a.noise, "Fixed noise std (0..255 scale) instead of sampling");
  cmd.add_option("--quality", a.quality, "Fixed JPEG quality instead of sampling; 0 skips JPEG");
}

int run_degrade(const CLI::App& cmd, const Common& c, const DegradeArgs& a, std::ostream& out) {
  const auto config = effective_config(cmd, c);
  const fs::path out_root = output_path(c, a.out);
  fs::create_directories(out_root);

  std::vector<degrade::ManifestEntry> entries;
  for (const auto& hq_path : png_files(a.in)) {
    const std::string name = hq_path.filename().string();
    const std::uint64_t seed = file_seed(config.seed, name);
    auto params = degrade::sample_params(seed, config.degradation);
    if (a.sigma) params.sigma = *a.sigma;
    if (a.scale) params.scale = *a.scale;
    if (a.noise) params.noise = *a.noise;
    if (a.quality) params.quality = *a.quality == 0 ? std::nullopt : std::optional<int>(*a.quality);

    const Image hq = load_image(hq_path, ValueRange::unit);
    const fs::path lq_path = out_root / name;
    save_image(degrade::degrade(hq, params, seed), lq_path);
    entries.push_back({hq_path, lq_path, params, seed});
  }
  degrade::write_manifest(out_root / "manifest.tsv", out_root / "manifest.json", entries);
  json summary;
  summary["images"] = entries.size();
  summary["out"] = out_root.string();
  out << summary.dump() << '\n';
  return 0;
}

// ------------------------------------------------------------ synth-pairs

struct SynthArgs {
  std::string in;
  int generate = 0;
  int size = 64;
  std::string lq;
  std::string landmarks;
  std::string out;
};

void setup_synth(CLI::App& cmd, SynthArgs& a) {
  auto* in = cmd.add_option("--in", a.in, "Directory of high-quality .png images");
  auto* gen = cmd.add_option("--generate", a.generate, "Render this many procedural faces instead");
  in->excludes(gen);
  cmd.add_option("--size", a.size, "Side length of generated faces");
  cmd.add_option("--lq", a.lq, "Degraded images used as I_F (matched by filename)");
  cmd.add_option("--landmarks", a.landmarks, "Five-point <name>.txt files for the semantic masks");
  cmd.add_option("--out", a.out, "Output pair directory")->required();
}

int run_synth(const CLI::App& cmd, const Common& c, const SynthArgs& a, std::ostream& out) {
  const auto config = effective_config(cmd, c);
  if (a.in.empty() && a.generate <= 0) throw InvalidArgument("synth-pairs needs --in or --generate");

  struct Source {
    std::string name;
    Image hq;
    metric::Landmarks landmarks;
  };
  std::vector<Source> sources;
  if (a.generate > 0) {
    const auto rendered = faces::synth_faces(a.generate, a.size, a.size, config.seed);
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "face_%04zu", i);
      sources.push_back({name, rendered[i].image, rendered[i].landmarks});
    }
  } else {
    for (const auto& path : png_files(a.in)) {
      Image hq = load_image(path, ValueRange::unit);
      const std::string name = path.stem().string();
      metric::Landmarks lm = a.landmarks.empty()
                                 ? faces::canonical_landmarks(hq.height(), hq.width())
                                 : metric::load_landmarks(fs::path(a.landmarks) / (name + ".txt"));
      sources.push_back({name, std::move(hq), std::move(lm)});
    }
  }

  const fs::path root = output_path(c, a.out);
  for (const auto& s : sources) {
    auto pair = train::synth_prior_pair(s.hq, config.warp_magnitude, config.texture_strength,
                                        file_seed(config.seed, s.name), config.fidelity_blur);
    pair.name = s.name;
    if (!a.lq.empty()) {
      Image lq = load_image(fs::path(a.lq) / (s.name + ".png"), ValueRange::unit);
      if (!lq.same_shape(s.hq)) throw ShapeMismatch("--lq image " + s.name + " differs in shape");
      pair.i_f = std::move(lq);
    }
    pair.mask = metric::mask_from_landmarks(s.hq.height(), s.hq.width(), s.landmarks);
    train::write_pair(pair, root);
    fs::create_directories(root / "landmarks");
    metric::save_landmarks(s.landmarks, root / "landmarks" / (s.name + ".txt"));
  }
  json summary;
  summary["pairs"] = sources.size();
  summary["out"] = root.string();
  out << summary.dump() << '\n';
  return 0;
}

// --------------------------------------------------------------- training

struct TrainArgs {
  std::string pairs;
  std::string dam;
  std::string variant;
  std::string out;
  std::string log;
};

void setup_train(CLI::App& cmd, TrainArgs& a, train::Stage stage) {
  cmd.add_option("--pairs", a.pairs, "Pair directory written by synth-pairs")->required();
  if (stage == train::Stage::tgrn) {
    cmd.add_option("--dam", a.dam, "Frozen registration checkpoint")->required();
    cmd.add_option("--variant", a.variant, "Ablation variant")
        ->check(CLI::IsMember({"A", "B", "C", "D"}));
    a.out = "tgrn.ckpt";
    a.log = "tgrn_log.jsonl";
  } else {
    a.out = "dam.ckpt";
    a.log = "dam_log.jsonl";
  }
  cmd.add_option("--out", a.out, "Checkpoint path");
  cmd.add_option("--log", a.log, "Line-delimited JSON loss log");
}

int run_train(const CLI::App& cmd, const Common& c, const TrainArgs& a, train::Stage stage,
              std::ostream& out) {
  auto config = effective_config(cmd, c);
  config.stage = stage;
  if (!a.variant.empty()) config.apply_variant(train::parse_variant(a.variant));
  config.validate();

  train::TrainOptions options;
  options.checkpoint = output_path(c, a.out);
  options.log = output_path(c, a.log);
  ensure_parent(*options.checkpoint);
  ensure_parent(*options.log);

  const train::DirectoryPairProvider data(a.pairs);
  json summary;
  summary["checkpoint"] = options.checkpoint->string();
  summary["config_hash"] = hex_hash(train::config_hash(config));
  if (stage == train::Stage::dam) {
    const auto result = train::train_stage1(config, data, options);
    summary["steps"] = config.effective_iterations();
    if (!result.log.empty()) {
      summary["initial"] = record_json(result.log.front(), stage);
      summary["final"] = record_json(result.log.back(), stage);
    }
    bool has_field = false;
    for (std::size_t i = 0; i < data.size() && !has_field; ++i) {
      has_field = data.get(i).gt_field.has_value();
    }
    if (has_field) summary["endpoint_error"] = train::mean_endpoint_error(result.net, data);
  } else {
    const auto dam_net = train::load_dam(a.dam);
    const auto result = train::train_stage2(config, dam_net, data, options);
    summary["steps"] = config.effective_iterations();
    summary["variant"] = train::to_string(config.variant);
    if (!result.log.empty()) {
      summary["initial"] = record_json(result.log.front(), stage);
      summary["final"] = record_json(result.log.back(), stage);
    }
  }
  out << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- restore

struct RestoreArgs {
  std::string i_f;
  std::string i_g;
  std::string pairs;
  std::string dam;
  std::string tgrn;
  std::string out;
};

void setup_restore(CLI::App& cmd, RestoreArgs& a) {
  auto* f = cmd.add_option("--i-f", a.i_f, "Fidelity image I_F");
  auto* g = cmd.add_option("--i-g", a.i_g, "Generative prior image I_G");
  auto* p = cmd.add_option("--pairs", a.pairs, "Pair directory; restores every pair");
  f->needs(g);
  g->needs(f);
  p->excludes(f)->excludes(g);
  cmd.add_option("--dam", a.dam, "Registration checkpoint")->required();
  cmd.add_option("--tgrn", a.tgrn, "Restoration checkpoint")->required();
  cmd.add_option("--out", a.out, "Output image (single mode) or directory (--pairs)")->required();
}

int run_restore(const CLI::App& cmd, const Common& c, const RestoreArgs& a, std::ostream& out) {
  (void)effective_config(cmd, c);
  if (a.pairs.empty() && a.i_f.empty()) throw InvalidArgument("restore needs --i-f/--i-g or --pairs");
  const auto dam_net = train::load_dam(a.dam);
  const auto tgrn_net = train::load_tgrn(a.tgrn);
  const fs::path target = output_path(c, a.out);
  json summary;
  if (a.pairs.empty()) {
    const Image i_f = load_image(a.i_f, ValueRange::unit);
    const Image i_g = load_image(a.i_g, ValueRange::unit);
    ensure_parent(target);
    save_image(train::restore(dam_net, tgrn_net, i_f, i_g), target);
    summary["images"] = 1;
  } else {
    const train::DirectoryPairProvider data(a.pairs);
    fs::create_directories(target);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto pair = data.get(i);
      save_image(train::restore(dam_net, tgrn_net, pair.i_f, pair.i_g), target / (pair.name + ".png"));
    }
    summary["images"] = data.size();
  }
  summary["out"] = target.string();
  out << summary.dump() << '\n';
  return 0;
}

// ------------------------------------------------------------------ align

struct AlignArgs {
  std::string i_f;
  std::string i_g;
  std::string dam;
  std::string out_field;
  std::string out_warp;
};

void setup_align(CLI::App& cmd, AlignArgs& a) {
  cmd.add_option("--i-f", a.i_f, "Fidelity image I_F")->required();
  cmd.add_option("--i-g", a.i_g, "Prior image to align onto I_F")->required();
  cmd.add_option("--dam", a.dam, "Registration checkpoint")->required();
  cmd.add_option("--out-field", a.out_field, "Deformation field output (.dfld)")->required();
  cmd.add_option("--out-warp", a.out_warp, "Warped prior output (.png)")->required();
}

int run_align(const CLI::App& cmd, const Common& c, const AlignArgs& a, std::ostream& out) {
  (void)effective_config(cmd, c);
  const auto dam_net = train::load_dam(a.dam);
  const Image i_f = load_image(a.i_f, ValueRange::unit);
  const Image i_g = load_image(a.i_g, ValueRange::unit);
  const auto result = train::align(dam_net, i_f, i_g);
  const fs::path field_path = output_path(c, a.out_field);
  const fs::path warp_path = output_path(c, a.out_warp);
  ensure_parent(field_path);
  ensure_parent(warp_path);
  save_field(result.field, field_path);
  save_image(result.warped, warp_path);
  json summary;
  summary["field"] = field_path.string();
  summary["warp"] = warp_path.string();
  out << summary.dump() << '\n';
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string ref;
  std::string test;
  std::string landmarks;
  std::string out = "report.json";
};

void setup_evaluate(CLI::App& cmd, EvaluateArgs& a) {
  cmd.add_option("--ref", a.ref, "Reference image directory")->required();
  cmd.add_option("--test", a.test, "Test image directory")->required();
  cmd.add_option("--landmarks", a.landmarks, "Directory with ref/ and test/ landmark files");
  cmd.add_option("--out", a.out, "Report JSON path");
}

int run_evaluate(const CLI::App& cmd, const Common& c, const EvaluateArgs& a, std::ostream& out) {
  const auto config = effective_config(cmd, c);
  evalkit::EvaluateOptions options;
  if (!a.landmarks.empty()) options.landmarks = fs::path(a.landmarks);
  options.config_hash = hex_hash(train::config_hash(config));
  const auto report = evalkit::evaluate_dir(a.ref, a.test, options);
  const fs::path path = output_path(c, a.out);
  ensure_parent(path);
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path.string());
  file << evalkit::report_json(report) << '\n';
  if (!file) throw IoError("write failed: " + path.string());
  out << evalkit::report_table(report);
  return 0;
}

void print_error(std::ostream& err, const std::string& code, const std::string& command,
                 const std::string& message) {
  json j;
  j["error"] = code;
  j["command"] = command;
  j["message"] = message;
  err << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage face restoration: prior alignment and texture-guided fusion", "facefuse"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);

  Common common;
  DegradeArgs degrade_args;
  SynthArgs synth_args;
  TrainArgs dam_args;
  TrainArgs tgrn_args;
  RestoreArgs restore_args;
  AlignArgs align_args;
  EvaluateArgs evaluate_args;

  auto* degrade_cmd = app.add_subcommand("degrade", "Synthesize degraded inputs from HQ images");
  auto* synth_cmd = app.add_subcommand("synth-pairs", "Build (I_F, I_G, I_HQ) training pairs");
  auto* dam_cmd = app.add_subcommand("train-dam", "Stage 1: train the registration network");
  auto* tgrn_cmd = app.add_subcommand("train-tgrn", "Stage 2: train the restoration network");
  auto* restore_cmd = app.add_subcommand("restore", "Align I_G to I_F and fuse");
  auto* align_cmd = app.add_subcommand("align", "Predict the deformation field and warp I_G");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "PSNR, SSIM and LMD over two directories");

  for (auto* cmd : {degrade_cmd, synth_cmd, dam_cmd, tgrn_cmd, restore_cmd, align_cmd, evaluate_cmd}) {
    add_common(*cmd, common);
  }
  setup_degrade(*degrade_cmd, degrade_args);
  setup_synth(*synth_cmd, synth_args);
  setup_train(*dam_cmd, dam_args, train::Stage::dam);
  setup_train(*tgrn_cmd, tgrn_args, train::Stage::tgrn);
  setup_restore(*restore_cmd, restore_args);
  setup_align(*align_cmd, align_args);
  setup_evaluate(*evaluate_cmd, evaluate_args);

  std::string command;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    print_error(err, "usage", subs.empty() ? "" : subs.front()->get_name(), e.what());
    return 2;
  }

  const CLI::App* selected = app.get_subcommands().front();
  command = selected->get_name();
  try {
    configure_threads();
    if (selected == degrade_cmd) return run_degrade(*selected, common, degrade_args, out);
    if (selected == synth_cmd) return run_synth(*selected, common, synth_args, out);
    if (selected == dam_cmd) return run_train(*selected, common, dam_args, train::Stage::dam, out);
    if (selected == tgrn_cmd) return run_train(*selected, common, tgrn_args, train::Stage::tgrn, out);
    if (selected == restore_cmd) return run_restore(*selected, common, restore_args, out);
    if (selected == align_cmd) return run_align(*selected, common, align_args, out);
    return run_evaluate(*selected, common, evaluate_args, out);
  } catch (const Error& e) {
    print_error(err, e.code(), command, e.what());
  } catch (const fs::filesystem_error& e) {
    print_error(err, "io_error", command, e.what());
  } catch (const std::exception& e) {
    print_error(err, "internal", command, e.what());
  }
  return 1;
}

}  // namespace facefuse::cli
