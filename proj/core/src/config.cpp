#include "pixfuse/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pixfuse/errors.hpp"

namespace pixfuse {

using nlohmann::json;

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kPretrain:
      return "pretrain";
    case Phase::kLinear:
      return "linear";
    case Phase::kSelfTrain1:
      return "selftrain1";
    case Phase::kSelfTrain2:
      return "selftrain2";
  }
  return "pretrain";
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }
std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kStep ? "step" : "constant"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "step") return ScheduleKind::kStep;
  if (name == "constant") return ScheduleKind::kConstant;
  throw ConfigError("unknown lr schedule '" + name + "' (expected step or constant)");
}

double TrainConfig::lr_factor(int epoch) const {
  if (schedule == ScheduleKind::kConstant) return 1.0;
  double factor = 1.0;
  for (double m : milestones) {
    if (epoch >= static_cast<int>(std::lround(m * epochs))) factor *= gamma;
  }
  return factor;
}

void TrainConfig::validate() const {
  const auto name = to_string(phase);
  if (!(lr > 0.0)) throw ConfigError(name + ": lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError(name + ": weight_decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(name + ": momentum must lie in [0, 1)");
  if (epochs < 1) throw ConfigError(name + ": epochs must be positive");
  if (batch_size < 1) throw ConfigError(name + ": batch_size must be positive");
  if (phase == Phase::kPretrain && batch_size < 2) throw ConfigError("pretrain: batch_size must be at least 2");
  if (!(gamma > 0.0)) throw ConfigError(name + ": gamma must be positive");
  for (double m : milestones) {
    if (!(m > 0.0 && m < 1.0)) throw ConfigError(name + ": milestones are fractions in (0, 1)");
  }
  if (checkpoint_interval < 0) throw ConfigError(name + ": checkpoint_interval must be non-negative");
}

void RunConfig::validate() const {
  network.validate();
  loss.validate();
  train.pretrain.validate();
  train.linear.validate();
  train.selftrain1.validate();
  train.selftrain2.validate();
  if (augment.max_shift < 0) throw ConfigError("augment.max_shift must be non-negative");
  if (augment.max_shift >= data.tile_size) throw ConfigError("augment.max_shift must be smaller than the tile");
  if (data.tile_size < 16 || data.tile_size % 8 != 0) throw ConfigError("data.tile_size must be >= 16 and divisible by 8");
  if (data.synthetic_count < 1) throw ConfigError("data.synthetic_count must be positive");
  if (!(data.cloud_fraction >= 0.0 && data.cloud_fraction <= 1.0)) throw ConfigError("data.cloud_fraction must lie in [0, 1]");
  ClassScheme::by_name(data.class_scheme);
  if (pseudolabel.cap < 1) throw ConfigError("pseudolabel.cap must be positive");
  const auto& cl = pseudolabel.cluster;
  if (cl.k_s2 < 3 || cl.k_s1 < 2) throw ConfigError("cluster: k_s2 must be >= 3 and k_s1 >= 2");
  if (cl.max_iters < 1 || !(cl.tol >= 0.0)) throw ConfigError("cluster: max_iters must be positive, tol non-negative");
  if (eval.probe_scenes < 1 || eval.held_out_scenes < 1) throw ConfigError("eval scene counts must be positive");
  if (workers < 0) throw ConfigError("workers must be non-negative");
}

RunConfig RunConfig::desk() {
  RunConfig c;
  auto& p = c.train.pretrain;
  p.phase = Phase::kPretrain;
  p.optimizer = OptimizerKind::kAdam;
  p.lr = 3e-4;
  p.weight_decay = 4e-4;
  p.momentum = 0.9;
  p.batch_size = 16;
  p.epochs = 50;
  p.schedule = ScheduleKind::kStep;

  auto& l = c.train.linear;
  l.phase = Phase::kLinear;
  l.optimizer = OptimizerKind::kSgd;
  l.lr = 0.05;
  l.momentum = 0.9;
  l.batch_size = 8;
  l.epochs = 50;
  l.schedule = ScheduleKind::kConstant;

  c.train.selftrain1 = l;
  c.train.selftrain1.phase = Phase::kSelfTrain1;

  auto& s = c.train.selftrain2;
  s.phase = Phase::kSelfTrain2;
  s.optimizer = OptimizerKind::kAdam;
  s.lr = 3e-4;
  s.encoder_lr = 1e-4;
  s.momentum = 0.9;
  s.batch_size = 8;
  s.epochs = 10;
  s.schedule = ScheduleKind::kConstant;
  return c;
}

RunConfig RunConfig::full() {
  RunConfig c = desk();
  c.network.width_mult = 1.0;
  c.network.proj_dim = 128;
  c.data.tile_size = 256;
  c.data.class_scheme = "dfc2020";
  c.augment.max_shift = 64;
  c.loss.superpixels_per_tile = 1024;
  c.train.pretrain.batch_size = 1000;
  c.train.pretrain.epochs = 700;
  c.train.selftrain1.optimizer = OptimizerKind::kAdam;
  c.train.selftrain1.lr = 3e-4;
  c.train.selftrain1.batch_size = 50;
  c.train.selftrain1.epochs = 100;
  c.train.selftrain2.batch_size = 50;
  c.train.selftrain2.epochs = 100;
  return c;
}

RunConfig RunConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

namespace {

json train_to_json(const TrainConfig& t) {
  return json{{"optimizer", to_string(t.optimizer)},
              {"lr", t.lr},
              {"encoder_lr", t.encoder_lr},
              {"weight_decay", t.weight_decay},
              {"momentum", t.momentum},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"schedule", to_string(t.schedule)},
              {"gamma", t.gamma},
              {"milestones", t.milestones},
              {"checkpoint_interval", t.checkpoint_interval}};
}

void train_from_json(const json& j, TrainConfig& t) {
  t.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  t.lr = j.at("lr").get<double>();
  t.encoder_lr = j.at("encoder_lr").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.momentum = j.at("momentum").get<double>();
  t.batch_size = j.at("batch_size").get<int>();
  t.epochs = j.at("epochs").get<int>();
  t.schedule = parse_schedule(j.at("schedule").get<std::string>());
  t.gamma = j.at("gamma").get<double>();
  t.milestones = j.at("milestones").get<std::vector<double>>();
  t.checkpoint_interval = j.at("checkpoint_interval").get<int>();
}

json to_json_tree(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["deterministic"] = c.deterministic;
  j["data"] = {{"path", c.data.path},
               {"synthetic_count", c.data.synthetic_count},
               {"tile_size", c.data.tile_size},
               {"cloud_fraction", c.data.cloud_fraction},
               {"class_scheme", c.data.class_scheme}};
  j["augment"] = {{"max_shift", c.augment.max_shift},
                  {"enable_flips", c.augment.enable_flips},
                  {"mode", to_string(c.augment.mode)}};
  const auto& cl = c.pseudolabel.cluster;
  j["cluster"] = {{"k_s2", cl.k_s2}, {"k_s1", cl.k_s1}, {"max_iters", cl.max_iters}, {"tol", cl.tol}};
  j["pseudolabel"] = {{"cap", c.pseudolabel.cap}, {"strict_sparse_rule", c.pseudolabel.strict_sparse_rule}};
  j["network"] = {{"fusion_mode", to_string(c.network.fusion_mode)},
                  {"width_mult", c.network.width_mult},
                  {"in_channels_opt", c.network.in_channels_opt},
                  {"proj_dim", c.network.proj_dim},
                  {"modality", to_string(c.network.modality)}};
  j["loss"] = {{"tau", c.loss.tau},
               {"superpixels_per_tile", c.loss.superpixels_per_tile},
               {"segment_overlap_min_frac", c.loss.segment_overlap_min_frac},
               {"slic_compactness", c.loss.slic_compactness},
               {"negatives_scope", to_string(c.loss.negatives_scope)},
               {"loss_weights",
                {{"pixel", c.loss.weights.pixel}, {"global", c.loss.weights.global}, {"joint", c.loss.weights.joint}}}};
  j["train"] = {{"pretrain", train_to_json(c.train.pretrain)},
                {"linear", train_to_json(c.train.linear)},
                {"selftrain1", train_to_json(c.train.selftrain1)},
                {"selftrain2", train_to_json(c.train.selftrain2)}};
  j["eval"] = {{"probe_scenes", c.eval.probe_scenes}, {"held_out_scenes", c.eval.held_out_scenes}};
  return j;
}

RunConfig from_json_tree(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.workers = j.at("workers").get<int>();
  c.deterministic = j.at("deterministic").get<bool>();
  const auto& d = j.at("data");
  c.data.path = d.at("path").get<std::string>();
  c.data.synthetic_count = d.at("synthetic_count").get<int>();
  c.data.tile_size = d.at("tile_size").get<int>();
  c.data.cloud_fraction = d.at("cloud_fraction").get<double>();
  c.data.class_scheme = d.at("class_scheme").get<std::string>();
  const auto& a = j.at("augment");
  c.augment.max_shift = a.at("max_shift").get<int>();
  c.augment.enable_flips = a.at("enable_flips").get<bool>();
  c.augment.mode = parse_augment_mode(a.at("mode").get<std::string>());
  const auto& cl = j.at("cluster");
  c.pseudolabel.cluster.k_s2 = cl.at("k_s2").get<int>();
  c.pseudolabel.cluster.k_s1 = cl.at("k_s1").get<int>();
  c.pseudolabel.cluster.max_iters = cl.at("max_iters").get<int>();
  c.pseudolabel.cluster.tol = cl.at("tol").get<double>();
  c.pseudolabel.cluster.seed = c.seed;
  const auto& pl = j.at("pseudolabel");
  c.pseudolabel.cap = pl.at("cap").get<int>();
  c.pseudolabel.strict_sparse_rule = pl.at("strict_sparse_rule").get<bool>();
  const auto& n = j.at("network");
  c.network.fusion_mode = parse_fusion_mode(n.at("fusion_mode").get<std::string>());
  c.network.width_mult = n.at("width_mult").get<double>();
  c.network.in_channels_opt = n.at("in_channels_opt").get<int>();
  c.network.proj_dim = n.at("proj_dim").get<int>();
  c.network.modality = parse_modality(n.at("modality").get<std::string>());
  const auto& l = j.at("loss");
  c.loss.tau = l.at("tau").get<double>();
  c.loss.superpixels_per_tile = l.at("superpixels_per_tile").get<int>();
  c.loss.segment_overlap_min_frac = l.at("segment_overlap_min_frac").get<double>();
  c.loss.slic_compactness = l.at("slic_compactness").get<double>();
  c.loss.negatives_scope = parse_negatives_scope(l.at("negatives_scope").get<std::string>());
  const auto& w = l.at("loss_weights");
  c.loss.weights.pixel = w.at("pixel").get<double>();
  c.loss.weights.global = w.at("global").get<double>();
  c.loss.weights.joint = w.at("joint").get<double>();
  const auto& t = j.at("train");
  train_from_json(t.at("pretrain"), c.train.pretrain);
  train_from_json(t.at("linear"), c.train.linear);
  train_from_json(t.at("selftrain1"), c.train.selftrain1);
  train_from_json(t.at("selftrain2"), c.train.selftrain2);
  c.train.pretrain.phase = Phase::kPretrain;
  c.train.linear.phase = Phase::kLinear;
  c.train.selftrain1.phase = Phase::kSelfTrain1;
  c.train.selftrain2.phase = Phase::kSelfTrain2;
  const auto& e = j.at("eval");
  c.eval.probe_scenes = e.at("probe_scenes").get<int>();
  c.eval.held_out_scenes = e.at("held_out_scenes").get<int>();
  return c;
}

// Overlays `user` onto `base`, rejecting keys and value kinds the schema
// does not have.
void overlay(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where.empty() ? "config root must be a table" : where + " must be a table");
  for (const auto& [key, value] : user.items()) {
    const auto path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      if (value.is_number_float()) {
        const double v = value.get<double>();
        if (v != std::floor(v)) throw ConfigError("'" + path + "' must be an integer");
        slot = static_cast<int64_t>(v);
      } else if (value.is_number_integer() || value.is_number_unsigned()) {
        slot = value;
      } else {
        throw ConfigError("'" + path + "' must be an integer");
      }
    } else if (slot.is_number()) {
      if (!value.is_number()) throw ConfigError("'" + path + "' must be a number");
      slot = value.get<double>();
    } else if (slot.is_boolean()) {
      if (!value.is_boolean()) throw ConfigError("'" + path + "' must be true or false");
      slot = value;
    } else if (slot.is_string()) {
      if (!value.is_string()) throw ConfigError("'" + path + "' must be a string");
      slot = value;
    } else if (slot.is_array()) {
      if (!value.is_array()) throw ConfigError("'" + path + "' must be an array");
      for (const auto& v : value) {
        if (!v.is_number()) throw ConfigError("'" + path + "' must hold numbers");
      }
      slot = value;
    }
  }
}

RunConfig from_user_tree(const json& user) {
  if (!user.is_object()) throw ConfigError("config root must be a table");
  std::string preset = "desk";
  json rest = user;
  if (rest.contains("preset")) {
    if (!rest["preset"].is_string()) throw ConfigError("'preset' must be a string");
    preset = rest["preset"].get<std::string>();
    rest.erase("preset");
  }
  auto tree = to_json_tree(RunConfig::preset(preset));
  overlay(tree, rest, "");
  RunConfig config;
  try {
    config = from_json_tree(tree);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  config.validate();
  return config;
}

// --- TOML subset -------------------------------------------------------

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

json parse_toml_scalar(const std::string& raw, int line_no) {
  const auto text = trim(raw);
  auto fail = [&]() -> json {
    throw ConfigError("line " + std::to_string(line_no) + ": cannot parse value '" + text + "'");
  };
  if (text.empty()) return fail();
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') return fail();
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && i + 2 < text.size()) {
        const char n = text[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        out += text[i];
      }
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  std::string digits;
  for (char ch : text) {
    if (ch != '_') digits += ch;
  }
  const bool integral = digits.find_first_of(".eEin") == std::string::npos;
  try {
    std::size_t used = 0;
    if (integral) {
      if (!digits.empty() && digits.front() != '-') {
        const auto v = std::stoull(digits, &used);
        if (used == digits.size()) return v;
      } else {
        const auto v = std::stoll(digits, &used);
        if (used == digits.size()) return v;
      }
    } else {
      const auto v = std::stod(digits, &used);
      if (used == digits.size()) return v;
    }
  } catch (const std::exception&) {
  }
  return fail();
}

json parse_toml_value(const std::string& raw, int line_no) {
  const auto text = trim(raw);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated array");
    json arr = json::array();
    std::stringstream items(text.substr(1, text.size() - 2));
    std::string item;
    while (std::getline(items, item, ',')) {
      if (trim(item).empty()) continue;
      arr.push_back(parse_toml_scalar(item, line_no));
    }
    return arr;
  }
  return parse_toml_scalar(text, line_no);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char ch : key) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) return false;
  }
  return true;
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON config: ") + e.what());
  }
  return from_user_tree(user);
}

RunConfig parse_config_toml(const std::string& text) {
  json root = json::object();
  json* table = &root;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto content = trim(strip_comment(line));
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']' || content.size() < 3) {
        throw ConfigError("line " + std::to_string(line_no) + ": malformed table header");
      }
      table = &root;
      std::stringstream parts(content.substr(1, content.size() - 2));
      std::string part;
      while (std::getline(parts, part, '.')) {
        part = trim(part);
        if (!valid_key(part)) throw ConfigError("line " + std::to_string(line_no) + ": bad table name");
        auto& next = (*table)[part];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError("line " + std::to_string(line_no) + ": '" + part + "' is not a table");
        table = &next;
      }
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(content.substr(0, eq));
    if (!valid_key(key)) throw ConfigError("line " + std::to_string(line_no) + ": bad key '" + key + "'");
    if (table->contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    (*table)[key] = parse_toml_value(content.substr(eq + 1), line_no);
  }
  return from_user_tree(root);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (path.extension() == ".toml") return parse_config_toml(buffer.str());
  return parse_config_json(buffer.str());
}

std::string config_to_json(const RunConfig& config) { return to_json_tree(config).dump(2); }

}  // namespace pixfuse
