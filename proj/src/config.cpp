// SPDX-License-Identifier: Apache-2.0
#include "brainstack/config.hpp"

#include <fstream>
#include <sstream>

#include "brainstack/errors.hpp"

namespace brainstack {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("");
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::vector<std::string> region_list(const std::string& value, const std::string& key) {
  std::vector<std::string> names = split_ws(value);
  if (names.empty()) {
    throw ConfigError("config key '" + key + "' expects at least one region name");
  }
  for (const std::string& n : names) {
    Region r;
    if (!region_from_name(n, &r)) {
      throw ConfigError("config key '" + key + "' names unknown region '" + n + "'");
    }
  }
  return names;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    std::string full = section.empty() ? key : section + "." + key;
    if (!map.emplace(full, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + full +
                        "'");
    }
  }
  return map;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

std::string ConfigView::get_str(const std::string& key, const std::string& fallback) {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  used_.insert(key);
  return it->second;
}

int ConfigView::get_int(const std::string& key, int fallback) {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  used_.insert(key);
  return to_int(it->second, key);
}

uint64_t ConfigView::get_u64(const std::string& key, uint64_t fallback) {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  used_.insert(key);
  return to_u64(it->second, key);
}

double ConfigView::get_double(const std::string& key, double fallback) {
  auto it = map_.find(key);
  if (it == map_.end()) return fallback;
  used_.insert(key);
  return to_double(it->second, key);
}

void ConfigView::finish() const {
  std::string unknown;
  for (const auto& kv : map_) {
    if (!used_.count(kv.first)) {
      if (!unknown.empty()) unknown += ", ";
      unknown += "'" + kv.first + "'";
    }
  }
  if (!unknown.empty()) {
    throw ConfigError("config holds unknown keys: " + unknown);
  }
}

ModelConfig ExperimentConfig::model_config(Variant v, uint64_t init_seed) const {
  ModelConfig mc;
  mc.montage = montage;
  mc.cnet = cnet;
  mc.ctnet = ctnet;
  mc.variant = v;
  mc.init_seed = init_seed;
  return mc;
}

ExperimentConfig default_experiment() {
  ExperimentConfig e;
  e.montage_source = "montage16";
  e.montage = parse_montage(default_montage16_text());
  for (int k = 0; k < e.synth.K; ++k) {
    e.synth.informative_regions[k] = {"Occipital", "LeftTemporal"};
  }
  e.train.schedule = e.schedule;
  return e;
}

ExperimentConfig experiment_from_map(const ConfigMap& map) {
  ConfigView v(map);
  ExperimentConfig e;

  e.montage_source = v.get_str("montage.source", "montage16");
  if (e.montage_source == "montage16") {
    e.montage = parse_montage(default_montage16_text());
  } else if (e.montage_source == "montage64") {
    e.montage = parse_montage(default_montage64_text());
  } else {
    std::ifstream f(e.montage_source, std::ios::binary);
    if (!f) {
      throw ConfigError("config key 'montage.source' names unreadable file '" +
                        e.montage_source + "'");
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    e.montage = parse_montage(buf.str());
  }

  e.synth.C = e.montage.montage.channel_count();
  e.synth.T = v.get_int("synth.time_len", e.synth.T);
  e.synth.K = v.get_int("synth.classes", e.synth.K);
  e.synth.subjects = v.get_int("synth.subjects", e.synth.subjects);
  e.synth.sessions = v.get_int("synth.sessions", e.synth.sessions);
  e.synth.trials_per_session = v.get_int("synth.trials_per_session", e.synth.trials_per_session);
  e.synth.sample_rate = v.get_double("synth.sample_rate", e.synth.sample_rate);
  e.synth.snr_db = v.get_double("synth.snr_db", e.synth.snr_db);
  e.synth.snr_step_db = v.get_double("synth.snr_step_db", e.synth.snr_step_db);
  e.synth.carrier_lo_hz = v.get_double("synth.carrier_lo_hz", e.synth.carrier_lo_hz);
  e.synth.carrier_hi_hz = v.get_double("synth.carrier_hi_hz", e.synth.carrier_hi_hz);
  e.synth.seed = v.get_u64("synth.seed", e.synth.seed);
  std::vector<std::string> shared =
      region_list(v.get_str("synth.informative_regions", "Occipital LeftTemporal"),
                  "synth.informative_regions");
  for (int k = 0; k < e.synth.K; ++k) {
    std::string key = "synth.class" + std::to_string(k) + "_regions";
    if (v.has(key)) {
      e.synth.informative_regions[k] = region_list(v.get_str(key, ""), key);
    } else {
      e.synth.informative_regions[k] = shared;
    }
  }

  e.split_train = v.get_int("split.train", e.split_train);
  e.split_val = v.get_int("split.val", e.split_val);
  e.split_test = v.get_int("split.test", e.split_test);
  if (e.split_train < 1 || e.split_val < 1 || e.split_test < 1) {
    throw ConfigError("split sessions must all be >= 1");
  }

  int feature_dim = v.get_int("experts.feature_dim", e.cnet.feature_dim);
  e.cnet.feature_dim = feature_dim;
  e.ctnet.feature_dim = feature_dim;
  e.cnet.num_classes = e.synth.K;
  e.ctnet.num_classes = e.synth.K;
  e.cnet.time_len = e.synth.T;
  e.ctnet.time_len = e.synth.T;

  e.cnet.temporal_kernel = v.get_int("cnet.temporal_kernel", e.cnet.temporal_kernel);
  e.cnet.temporal_filters = v.get_int("cnet.temporal_filters", e.cnet.temporal_filters);
  e.cnet.depth_multiplier = v.get_int("cnet.depth_multiplier", e.cnet.depth_multiplier);
  e.cnet.separable_kernel = v.get_int("cnet.separable_kernel", e.cnet.separable_kernel);
  e.cnet.pool1 = v.get_int("cnet.pool1", e.cnet.pool1);
  e.cnet.pool2 = v.get_int("cnet.pool2", e.cnet.pool2);
  e.cnet.dropout = v.get_double("cnet.dropout", e.cnet.dropout);

  e.ctnet.temporal_kernel = v.get_int("ctnet.temporal_kernel", e.ctnet.temporal_kernel);
  e.ctnet.embed_dim = v.get_int("ctnet.embed_dim", e.ctnet.embed_dim);
  e.ctnet.pool = v.get_int("ctnet.pool", e.ctnet.pool);
  e.ctnet.layers = v.get_int("ctnet.layers", e.ctnet.layers);
  e.ctnet.heads = v.get_int("ctnet.heads", e.ctnet.heads);
  e.ctnet.ff_dim = v.get_int("ctnet.ff_dim", e.ctnet.ff_dim);
  e.ctnet.dropout = v.get_double("ctnet.dropout", e.ctnet.dropout);

  e.schedule.t_warmup = v.get_int("schedule.t_warmup", e.schedule.t_warmup);
  e.schedule.t_transition = v.get_int("schedule.t_transition", e.schedule.t_transition);
  e.schedule.lambda_min = v.get_double("schedule.lambda_min", e.schedule.lambda_min);
  e.schedule.lambda_max = v.get_double("schedule.lambda_max", e.schedule.lambda_max);
  e.schedule.alpha_max = v.get_double("schedule.alpha_max", e.schedule.alpha_max);
  e.schedule.beta_max = v.get_double("schedule.beta_max", e.schedule.beta_max);
  e.schedule.gamma_max = v.get_double("schedule.gamma_max", e.schedule.gamma_max);
  e.schedule.max_loss_estimate =
      v.get_double("schedule.max_loss_estimate", e.schedule.max_loss_estimate);
  e.schedule.temperature = v.get_double("schedule.temperature", e.schedule.temperature);

  e.train.lr = v.get_double("train.lr", e.train.lr);
  e.train.momentum = v.get_double("train.momentum", e.train.momentum);
  e.train.weight_decay = v.get_double("train.weight_decay", e.train.weight_decay);
  e.train.batch_size = v.get_int("train.batch_size", e.train.batch_size);
  e.train.max_epochs = v.get_int("train.max_epochs", e.train.max_epochs);
  e.train.patience = v.get_int("train.patience", e.train.patience);
  e.train.seed = v.get_u64("train.seed", e.train.seed);
  std::string vname = v.get_str("train.variant", "full");
  if (!variant_from_name(vname, &e.train.variant)) {
    throw ConfigError("config key 'train.variant' names unknown variant '" + vname +
                      "' (expected full, local_only, homogeneous_cnet, global_only, "
                      "homogeneous_ctnet, no_distill or no_warmup)");
  }
  e.train.schedule = e.schedule;

  v.finish();
  e.synth.validate();
  e.cnet.validate();
  e.ctnet.validate();
  e.train.validate();
  return e;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_from_map(load_config_file(path));
}

}  // namespace brainstack
