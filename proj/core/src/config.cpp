#include "facefuse/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "facefuse/error.hpp"

namespace facefuse::train {

using nlohmann::ordered_json;

int TrainConfig::effective_iterations() const {
  if (iterations) return *iterations;
  return stage == Stage::dam ? 2000 : 5000;
}

void TrainConfig::validate() const {
  const auto& w = loss_weights;
  for (double v : {w.lambda_l1, w.lambda_adv, w.lambda_id, w.lambda_triplet, w.lambda_phi,
                   w.lambda_perceptual}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and >= 0");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning_rate must be > 0");
  }
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (iterations && *iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (image_size < kMinImageSide) throw InvalidArgument("image_size must be >= 8");
  if (ncc_window < 1 || ncc_window % 2 == 0) throw InvalidArgument("ncc_window must be odd");
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
  if (disc_steps < 0) throw InvalidArgument("disc_steps must be >= 0");
  if (disc_channels < 4) throw InvalidArgument("disc_channels must be >= 4");
  if (!(warp_magnitude >= 0.0)) throw InvalidArgument("warp_magnitude must be >= 0");
  if (!(texture_strength >= 0.0)) throw InvalidArgument("texture_strength must be >= 0");
  if (!(fidelity_blur >= 0.0)) throw InvalidArgument("fidelity_blur must be >= 0");
  for (const auto& i : {degradation.sigma, degradation.scale, degradation.noise,
                        degradation.quality}) {
    if (!(i.lo <= i.hi)) throw InvalidArgument("degradation intervals must satisfy lo <= hi");
  }
  dam_net.validate();
  tgrn_net.validate();
  if (dam_net.image_channels != tgrn_net.image_channels) {
    throw InvalidArgument("dam_net and tgrn_net image_channels differ");
  }
}

void TrainConfig::apply_variant(Variant v) {
  variant = v;
  switch (v) {
    case Variant::A:
    case Variant::B:
      loss_weights.lambda_triplet = 0.0;
      break;
    case Variant::C:
      if (loss_weights.lambda_triplet == 0.0) loss_weights.lambda_triplet = 1.0;
      positive = PositiveSource::ground_truth;
      break;
    case Variant::D:
      if (loss_weights.lambda_triplet == 0.0) loss_weights.lambda_triplet = 1.0;
      positive = PositiveSource::anchor_positive;
      break;
  }
}

std::string_view to_string(Stage s) { return s == Stage::dam ? "dam" : "tgrn"; }

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
    case Variant::D: return "D";
  }
  return "D";
}

std::string_view to_string(PositiveSource p) {
  return p == PositiveSource::anchor_positive ? "anchor_positive" : "ground_truth";
}

Stage parse_stage(std::string_view text) {
  if (text == "dam") return Stage::dam;
  if (text == "tgrn") return Stage::tgrn;
  throw InvalidArgument("unknown stage '" + std::string(text) + "' (expected dam or tgrn)");
}

Variant parse_variant(std::string_view text) {
  if (text == "A" || text == "a") return Variant::A;
  if (text == "B" || text == "b") return Variant::B;
  if (text == "C" || text == "c") return Variant::C;
  if (text == "D" || text == "d") return Variant::D;
  throw InvalidArgument("unknown variant '" + std::string(text) + "' (expected A, B, C or D)");
}

PositiveSource parse_positive(std::string_view text) {
  if (text == "anchor_positive") return PositiveSource::anchor_positive;
  if (text == "ground_truth") return PositiveSource::ground_truth;
  throw InvalidArgument("unknown positive source '" + std::string(text) + "'");
}

namespace {

std::string_view to_string(tgrn::FusionActivation a) {
  return a == tgrn::FusionActivation::sigmoid ? "sigmoid" : "linear";
}

tgrn::FusionActivation parse_activation(std::string_view text) {
  if (text == "sigmoid") return tgrn::FusionActivation::sigmoid;
  if (text == "linear") return tgrn::FusionActivation::linear;
  throw InvalidArgument("unknown fusion activation '" + std::string(text) + "'");
}

ordered_json embedder_json(const metric::EmbedderSpec& s) {
  return {{"kind", s.kind == metric::EmbedderKind::external ? "external" : "fixed_random_conv"},
          {"seed", s.seed},
          {"output_dim", s.output_dim},
          {"image_channels", s.image_channels}};
}

metric::EmbedderSpec embedder_from(const ordered_json& j) {
  metric::EmbedderSpec s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "external") {
    s.kind = metric::EmbedderKind::external;
  } else if (kind == "fixed_random_conv") {
    s.kind = metric::EmbedderKind::fixed_random_conv;
  } else {
    throw InvalidArgument("unknown embedder kind '" + kind + "'");
  }
  s.seed = j.at("seed").get<std::uint64_t>();
  s.output_dim = j.at("output_dim").get<int>();
  s.image_channels = j.at("image_channels").get<int>();
  return s;
}

degrade::Interval interval_from(const ordered_json& j, const char* name) {
  if (!j.is_array() || j.size() != 2) {
    throw InvalidArgument(std::string("degradation.") + name + " must be a [lo, hi] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

ordered_json to_json(const TrainConfig& c) {
  const auto& w = c.loss_weights;
  ordered_json j;
  j["version"] = TrainConfig::kVersion;
  j["stage"] = to_string(c.stage);
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["iterations"] = c.iterations ? ordered_json(*c.iterations) : ordered_json(nullptr);
  j["loss_weights"] = {{"lambda_l1", w.lambda_l1},
                       {"lambda_adv", w.lambda_adv},
                       {"lambda_id", w.lambda_id},
                       {"lambda_triplet", w.lambda_triplet},
                       {"lambda_phi", w.lambda_phi},
                       {"lambda_perceptual", w.lambda_perceptual}};
  j["seed"] = c.seed;
  j["image_size"] = c.image_size;
  j["ncc_window"] = c.ncc_window;
  j["log_every"] = c.log_every;
  j["variant"] = to_string(c.variant);
  j["positive"] = to_string(c.positive);
  j["disc_steps"] = c.disc_steps;
  j["disc_channels"] = c.disc_channels;
  j["dam_net"] = {{"levels", c.dam_net.levels},
                  {"base_channels", c.dam_net.base_channels},
                  {"field_init_scale", c.dam_net.field_init_scale},
                  {"image_channels", c.dam_net.image_channels}};
  j["tgrn_net"] = {{"levels", c.tgrn_net.levels},
                   {"channels", c.tgrn_net.channels},
                   {"mlp_hidden", c.tgrn_net.mlp_hidden},
                   {"image_channels", c.tgrn_net.image_channels},
                   {"bias", c.tgrn_net.bias},
                   {"fusion_activation", to_string(c.tgrn_net.fusion_activation)}};
  j["triplet_embedder"] = embedder_json(c.triplet_embedder);
  j["identity_embedder"] = embedder_json(c.identity_embedder);
  const auto& r = c.degradation;
  j["degradation"] = {{"sigma", {r.sigma.lo, r.sigma.hi}},
                      {"scale", {r.scale.lo, r.scale.hi}},
                      {"noise", {r.noise.lo, r.noise.hi}},
                      {"quality", {r.quality.lo, r.quality.hi}}};
  j["warp_magnitude"] = c.warp_magnitude;
  j["texture_strength"] = c.texture_strength;
  j["fidelity_blur"] = c.fidelity_blur;
  return j;
}

TrainConfig from_json(const ordered_json& j) {
  TrainConfig c;
  c.stage = parse_stage(j.at("stage").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  if (!j.at("iterations").is_null()) c.iterations = j.at("iterations").get<int>();
  const auto& w = j.at("loss_weights");
  c.loss_weights.lambda_l1 = w.at("lambda_l1").get<double>();
  c.loss_weights.lambda_adv = w.at("lambda_adv").get<double>();
  c.loss_weights.lambda_id = w.at("lambda_id").get<double>();
  c.loss_weights.lambda_triplet = w.at("lambda_triplet").get<double>();
  c.loss_weights.lambda_phi = w.at("lambda_phi").get<double>();
  c.loss_weights.lambda_perceptual = w.at("lambda_perceptual").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.image_size = j.at("image_size").get<int>();
  c.ncc_window = j.at("ncc_window").get<int>();
  c.log_every = j.at("log_every").get<int>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.positive = parse_positive(j.at("positive").get<std::string>());
  c.disc_steps = j.at("disc_steps").get<int>();
  c.disc_channels = j.at("disc_channels").get<int>();
  const auto& d = j.at("dam_net");
  c.dam_net.levels = d.at("levels").get<int>();
  c.dam_net.base_channels = d.at("base_channels").get<int>();
  c.dam_net.field_init_scale = d.at("field_init_scale").get<double>();
  c.dam_net.image_channels = d.at("image_channels").get<int>();
  const auto& t = j.at("tgrn_net");
  c.tgrn_net.levels = t.at("levels").get<int>();
  c.tgrn_net.channels = t.at("channels").get<std::vector<int>>();
  c.tgrn_net.mlp_hidden = t.at("mlp_hidden").get<int>();
  c.tgrn_net.image_channels = t.at("image_channels").get<int>();
  c.tgrn_net.bias = t.at("bias").get<bool>();
  c.tgrn_net.fusion_activation = parse_activation(t.at("fusion_activation").get<std::string>());
  c.triplet_embedder = embedder_from(j.at("triplet_embedder"));
  c.identity_embedder = embedder_from(j.at("identity_embedder"));
  const auto& r = j.at("degradation");
  c.degradation.sigma = interval_from(r.at("sigma"), "sigma");
  c.degradation.scale = interval_from(r.at("scale"), "scale");
  c.degradation.noise = interval_from(r.at("noise"), "noise");
  c.degradation.quality = interval_from(r.at("quality"), "quality");
  c.warp_magnitude = j.at("warp_magnitude").get<double>();
  c.texture_strength = j.at("texture_strength").get<double>();
  c.fidelity_blur = j.at("fidelity_blur").get<double>();
  return c;
}

// Every key in `patch` must already exist in `base`; objects merge recursively.
void merge_strict(ordered_json& base, const ordered_json& patch, const std::string& prefix) {
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw InvalidArgument("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_strict(slot, value, path);
    } else {
      slot = value;
    }
  }
}

TrainConfig parse_checked(const ordered_json& merged) {
  try {
    TrainConfig c = from_json(merged);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return to_json(config).dump(2); }

TrainConfig config_from_json(std::string_view text) {
  ordered_json patch;
  try {
    patch = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptData(std::string("config is not valid JSON: ") + e.what());
  }
  if (!patch.is_object()) throw CorruptData("config must be a JSON object");
  if (!patch.contains("version")) throw CorruptData("config is missing \"version\"");
  if (patch["version"] != TrainConfig::kVersion) {
    throw UnsupportedFormat("config version " + patch["version"].dump() + " is not supported");
  }
  ordered_json base = to_json(TrainConfig{});
  merge_strict(base, patch, "");
  return parse_checked(base);
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) throw FileNotFound("no such config file: " + path.string());
    throw IoError("cannot open config file: " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(text.str());
}

void save_config(const TrainConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path.string());
  out << config_to_json(config) << '\n';
  if (!out) throw IoError("failed writing config file: " + path.string());
}

void apply_override(TrainConfig& config, std::string_view key, std::string_view value) {
  ordered_json parsed;
  try {
    parsed = ordered_json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = std::string(value);
  }
  ordered_json patch = parsed;
  std::string k(key);
  std::size_t dot;
  while ((dot = k.rfind('.')) != std::string::npos) {
    patch = ordered_json{{k.substr(dot + 1), patch}};
    k.resize(dot);
  }
  patch = ordered_json{{k, patch}};
  ordered_json base = to_json(config);
  merge_strict(base, patch, "");
  config = parse_checked(base);
}

std::uint64_t config_hash(const TrainConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace facefuse::train
