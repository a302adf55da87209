#include "run_config.hpp"

#include <algorithm>
#include <fstream>

using nlohmann::json;

namespace dmsm::cli {

namespace {

const char* type_name(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

ConsistencyNorm norm_from(const std::string& s) {
  if (s == "l1") return ConsistencyNorm::l1;
  if (s == "l2") return ConsistencyNorm::l2;
  throw ConfigError("train.norm must be \"l1\" or \"l2\", got \"" + s + "\"");
}

TrainMode mode_from(const std::string& s) {
  if (s == "self_supervised") return TrainMode::self_supervised;
  if (s == "supervised") return TrainMode::supervised;
  throw ConfigError("train.mode must be \"self_supervised\" or \"supervised\", got \"" + s + "\"");
}

}  // namespace

json default_config_json() {
  const RunConfig d;
  const TrainConfig& t = d.train;
  const InferenceOptions& io = d.inference.options;
  json masks = json::array();
  for (const auto& m : d.dataset.masks) masks.push_back({{"acceleration", m.acceleration}, {"acs", m.acs_lines}});
  return {
      {"dataset",
       {{"path", d.dataset_dir.string()},
        {"n_train", d.dataset.n_train},
        {"n_val", d.dataset.n_val},
        {"n_test", d.dataset.n_test},
        {"height", d.dataset.height},
        {"width", d.dataset.width},
        {"coils", d.dataset.n_coils},
        {"seed", d.dataset.seed},
        {"masks", masks}}},
      {"schedule", {{"steps", d.schedule_steps}, {"beta_start", d.beta_start}, {"beta_end", d.beta_end}}},
      {"model",
       {{"channels", d.model.channels},
        {"n_pab", d.model.n_pab},
        {"kernel", d.model.kernel},
        {"concat_blocks", d.model.concat_blocks},
        {"time_dim", d.model.time_dim},
        {"mlp_layers", d.model.mlp_layers},
        {"attn_dim", d.model.attn_dim},
        {"use_dc", t.backbone.use_dc},
        {"use_condition", t.backbone.use_condition}}},
      {"train",
       {{"steps", t.steps},
        {"batch_size", t.batch_size},
        {"lr", t.adam.lr},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"adam_eps", t.adam.eps},
        {"grad_clip", t.grad_clip},
        {"lambda_ic", t.weights.lambda_ic},
        {"lambda_kc", t.weights.lambda_kc},
        {"dm_multiplier", t.weights.dm_multiplier},
        {"norm", "l1"},
        {"rho", t.rho},
        {"resample_partition", t.resample_partition},
        {"mode", "self_supervised"},
        {"seed", t.seed},
        {"acceleration", d.train_acceleration},
        {"val_every", t.val_every},
        {"val_paths", t.val_paths},
        {"checkpoint_every", t.checkpoint_every},
        {"max_nonfinite_streak", t.max_nonfinite_streak},
        {"log_every", d.log_every}}},
      {"inference",
       {{"paths", d.inference.paths},
        {"seed", d.inference.seed},
        {"acceleration", d.inference.acceleration},
        {"split", to_string(d.inference.split)},
        {"save_paths", d.inference.save_paths},
        {"stride", io.stride},
        {"perturb_measurements", io.perturb_measurements},
        {"eps_low_per_step", io.eps_low_per_step},
        {"eps_low_variance", io.eps_low_variance},
        {"threads", io.threads}}},
      {"output", {{"dir", d.output_dir.string()}}},
  };
}

json merge_config(const json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + ": expected an object");
  json out = base;
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    const json& def = base.at(key);
    if (!compatible(def, value))
      throw ConfigError("config key '" + path + "' expects " + type_name(def) + ", got " + type_name(value));
    out[key] = def.is_object() ? merge_config(def, value, path) : value;
  }
  return out;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("--set: empty path component in '" + key + "'");
    patch = json{{*it, patch}};
  }
  config = merge_config(config, patch);
}

RunConfig parse_config(const json& c) {
  RunConfig r;
  const json& d = c.at("dataset");
  r.dataset_dir = get<std::string>(d, "path", "dataset");
  r.dataset.n_train = get<int>(d, "n_train", "dataset");
  r.dataset.n_val = get<int>(d, "n_val", "dataset");
  r.dataset.n_test = get<int>(d, "n_test", "dataset");
  r.dataset.height = get<int>(d, "height", "dataset");
  r.dataset.width = get<int>(d, "width", "dataset");
  r.dataset.n_coils = get<int>(d, "coils", "dataset");
  r.dataset.seed = get<std::uint64_t>(d, "seed", "dataset");
  r.dataset.masks.clear();
  for (const auto& m : d.at("masks")) {
    if (!m.is_object() || !m.contains("acceleration") || !m.contains("acs") || m.size() != 2)
      throw ConfigError("dataset.masks entries must be {\"acceleration\": R, \"acs\": lines}");
    r.dataset.masks.push_back({get<double>(m, "acceleration", "dataset.masks"), get<int>(m, "acs", "dataset.masks")});
  }
  if (r.dataset.masks.empty()) throw ConfigError("dataset.masks must not be empty");
  for (const auto& mk : r.dataset.masks) {
    const double budget = static_cast<double>(r.dataset.height) * r.dataset.width / mk.acceleration;
    const int acs = std::min({mk.acs_lines, r.dataset.height, r.dataset.width});
    if (!(mk.acceleration >= 1.0) || mk.acs_lines < 0 ||
        (mk.acceleration > 1.0 && static_cast<double>(acs) * acs >= budget))
      throw ConfigError("dataset.masks: R=" + std::to_string(mk.acceleration) + " with " +
                        std::to_string(mk.acs_lines) + " ACS lines does not fit a " +
                        std::to_string(r.dataset.height) + "x" + std::to_string(r.dataset.width) + " grid");
  }

  const json& s = c.at("schedule");
  r.schedule_steps = get<int>(s, "steps", "schedule");
  r.beta_start = get<double>(s, "beta_start", "schedule");
  r.beta_end = get<double>(s, "beta_end", "schedule");

  const json& m = c.at("model");
  r.model.channels = get<int>(m, "channels", "model");
  r.model.n_pab = get<int>(m, "n_pab", "model");
  r.model.kernel = get<int>(m, "kernel", "model");
  r.model.concat_blocks = get<std::vector<int>>(m, "concat_blocks", "model");
  r.model.time_dim = get<int>(m, "time_dim", "model");
  r.model.mlp_layers = get<int>(m, "mlp_layers", "model");
  r.model.attn_dim = get<int>(m, "attn_dim", "model");
  BackboneOptions bb;
  bb.use_dc = get<bool>(m, "use_dc", "model");
  bb.use_condition = get<bool>(m, "use_condition", "model");

  const json& t = c.at("train");
  TrainConfig& tc = r.train;
  tc.steps = get<int>(t, "steps", "train");
  tc.batch_size = get<int>(t, "batch_size", "train");
  tc.adam.lr = get<double>(t, "lr", "train");
  tc.adam.beta1 = get<double>(t, "beta1", "train");
  tc.adam.beta2 = get<double>(t, "beta2", "train");
  tc.adam.eps = get<double>(t, "adam_eps", "train");
  tc.grad_clip = get<double>(t, "grad_clip", "train");
  tc.weights.lambda_ic = get<double>(t, "lambda_ic", "train");
  tc.weights.lambda_kc = get<double>(t, "lambda_kc", "train");
  tc.weights.dm_multiplier = get<double>(t, "dm_multiplier", "train");
  tc.norm = norm_from(get<std::string>(t, "norm", "train"));
  tc.rho = get<double>(t, "rho", "train");
  tc.resample_partition = get<bool>(t, "resample_partition", "train");
  tc.mode = mode_from(get<std::string>(t, "mode", "train"));
  tc.seed = get<std::uint64_t>(t, "seed", "train");
  r.train_acceleration = get<double>(t, "acceleration", "train");
  tc.val_every = get<int>(t, "val_every", "train");
  tc.val_paths = get<int>(t, "val_paths", "train");
  tc.checkpoint_every = get<int>(t, "checkpoint_every", "train");
  tc.max_nonfinite_streak = get<int>(t, "max_nonfinite_streak", "train");
  r.log_every = get<int>(t, "log_every", "train");
  tc.backbone = bb;

  const json& i = c.at("inference");
  InferenceSettings& is = r.inference;
  is.paths = get<int>(i, "paths", "inference");
  is.seed = get<std::uint64_t>(i, "seed", "inference");
  is.acceleration = get<double>(i, "acceleration", "inference");
  try {
    is.split = split_from_string(get<std::string>(i, "split", "inference"));
  } catch (const DatasetError& e) {
    throw ConfigError(std::string("inference.split: ") + e.what());
  }
  is.save_paths = get<bool>(i, "save_paths", "inference");
  is.options.backbone = bb;
  is.options.stride = get<int>(i, "stride", "inference");
  is.options.perturb_measurements = get<bool>(i, "perturb_measurements", "inference");
  is.options.eps_low_per_step = get<bool>(i, "eps_low_per_step", "inference");
  is.options.eps_low_variance = get<double>(i, "eps_low_variance", "inference");
  is.options.threads = get<int>(i, "threads", "inference");
  tc.val_inference = is.options;

  r.output_dir = get<std::string>(c.at("output"), "dir", "output");

  try {
    r.model.validate();
    tc.validate();
    (void)r.schedule();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (is.paths < 1) throw ConfigError("inference.paths must be >= 1");
  if (is.options.stride < 1) throw ConfigError("inference.stride must be >= 1");
  if (!(is.options.eps_low_variance >= 0.0)) throw ConfigError("inference.eps_low_variance must be >= 0");
  if (r.log_every < 1) throw ConfigError("train.log_every must be >= 1");
  if (r.dataset.n_train < 0 || r.dataset.n_val < 0 || r.dataset.n_test < 0)
    throw ConfigError("dataset split sizes must be >= 0");
  return r;
}

json resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json c = default_config_json();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file " + file.string() + " is not valid JSON");
    c = merge_config(c, user);
  }
  for (const auto& o : overrides) apply_override(c, o);
  return c;
}

}  // namespace dmsm::cli
