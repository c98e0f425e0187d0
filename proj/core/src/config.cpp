#include "sgmc/config.hpp"

#include <fstream>
#include <sstream>

#include "sgmc/error.hpp"

namespace sgmc {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

long to_long(const std::string& v, const std::string& key) {
  try {
    return std::stol(v);
  } catch (...) {
    throw ConfigError("config: invalid integer for " + key + ": " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("config: invalid number for " + key + ": " + v);
  }
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "profile") {
    cfg = profile_config(value);
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(to_long(value, key));
    cfg.seed_set = true;
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "corpus.path") {
    cfg.corpus_path = value;
  } else if (key == "synthetic.n_clips") {
    cfg.synthetic.n_clips = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "synthetic.n_subjects") {
    cfg.synthetic.n_subjects = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "synthetic.channels") {
    cfg.synthetic.channels = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "synthetic.time_len") {
    cfg.synthetic.time_len = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "synthetic.n_classes") {
    cfg.synthetic.n_classes = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "synthetic.latent_dim") {
    cfg.synthetic.latent_dim = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "synthetic.mixing") {
    cfg.synthetic.subject_mixing_scale = to_double(value, key);
  } else if (key == "synthetic.sigma") {
    cfg.synthetic.noise_sigma = to_double(value, key);
  } else if (key == "synthetic.time_shift") {
    cfg.synthetic.subject_time_shift = to_double(value, key);
  } else if (key == "synthetic.detune") {
    cfg.synthetic.subject_detune = to_double(value, key);
  } else if (key == "synthetic.subject_signal") {
    cfg.synthetic.subject_signal = to_double(value, key);
  } else if (key == "encoder.preset") {
    cfg.encoder_preset = value;
  } else if (key == "projector.hidden") {
    cfg.projector_hidden = parse_size_list(value);
  } else if (key == "projector.pooling") {
    cfg.pooling = value;
  } else if (key == "classifier.hidden") {
    cfg.classifier_hidden = parse_size_list(value);
  } else if (key == "model.dropout") {
    cfg.dropout_rate = to_double(value, key);
  } else if (key == "pretrain.epochs") {
    cfg.pretrain_epochs = to_long(value, key);
  } else if (key == "pretrain.p") {
    cfg.clips_per_iteration = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "pretrain.q") {
    cfg.samples_per_group = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "pretrain.tau") {
    cfg.tau = to_double(value, key);
  } else if (key == "pretrain.lr") {
    cfg.pretrain_lr = to_double(value, key);
  } else if (key == "pretrain.checkpoint_every") {
    cfg.checkpoint_every = to_long(value, key);
  } else if (key == "pretrain.variant") {
    cfg.variant = value;
  } else if (key == "split.train" ) {
    cfg.split_ratios[0] = to_double(value, key);
  } else if (key == "split.val") {
    cfg.split_ratios[1] = to_double(value, key);
  } else if (key == "split.test") {
    cfg.split_ratios[2] = to_double(value, key);
  } else if (key == "finetune.epochs") {
    cfg.finetune_epochs = to_long(value, key);
  } else if (key == "finetune.batch") {
    cfg.finetune_batch = static_cast<std::size_t>(to_long(value, key));
  } else if (key == "finetune.lr") {
    cfg.finetune_lr = to_double(value, key);
  } else if (key == "finetune.runs") {
    cfg.finetune_runs = static_cast<int>(to_long(value, key));
  } else if (key == "finetune.labels_per_class") {
    cfg.labels_per_class = static_cast<int>(to_long(value, key));
  } else {
    throw ConfigError("config: unknown key: " + key);
  }
}

}  // namespace

std::string RunConfig::digest_text() const {
  std::ostringstream os;
  os << "encoder=" << encoder_preset << ";projector=";
  for (auto h : projector_hidden) os << h << ",";
  os << ";pooling=" << pooling << ";classifier=";
  for (auto h : classifier_hidden) os << h << ",";
  os << ";dropout=" << dropout_rate;
  return os.str();
}

RunConfig profile_config(const std::string& name) {
  RunConfig cfg;
  cfg.profile = name;
  if (name == "desk") {
    // Synthetic-corpus run sized for one CPU core.
    cfg.encoder_preset = "tiny";
    cfg.projector_hidden = {64, 128, 256};
    cfg.classifier_hidden = {64, 32, 16};
    cfg.synthetic = SyntheticSpec{};
    cfg.pretrain_epochs = 300;
    cfg.clips_per_iteration = 4;
    cfg.samples_per_group = 2;
    cfg.tau = 0.1;
    cfg.pretrain_lr = 1e-3;
    cfg.checkpoint_every = 50;
    // Tiny nets underfit with the full-scale dropout rate, and ten-sample
    // label budgets need the longer schedule to converge.
    cfg.dropout_rate = 0.1;
    cfg.finetune_epochs = 100;
    cfg.finetune_batch = 64;
    cfg.finetune_lr = 1e-3;
  } else if (name == "deap-like") {
    cfg.encoder_preset = "paper";
    cfg.projector_hidden = {1024, 2048, 4096};
    cfg.classifier_hidden = {512, 256, 128};
    cfg.pretrain_epochs = 2800;
    cfg.clips_per_iteration = 8;
    cfg.samples_per_group = 2;
    cfg.tau = 0.1;
    cfg.pretrain_lr = 1e-4;
    cfg.finetune_epochs = 60;
    cfg.finetune_batch = 2048;
    cfg.finetune_lr = 1e-3;
    cfg.synthetic.n_clips = 2400;
    cfg.synthetic.n_subjects = 32;
    cfg.synthetic.channels = 32;
    cfg.synthetic.time_len = 128;
    cfg.synthetic.n_classes = 2;
  } else if (name == "seed-like") {
    cfg.encoder_preset = "paper";
    cfg.projector_hidden = {1024, 2048, 4096};
    cfg.classifier_hidden = {512, 256, 128};
    cfg.pretrain_epochs = 3288;
    cfg.clips_per_iteration = 16;
    cfg.samples_per_group = 2;
    cfg.tau = 0.1;
    cfg.pretrain_lr = 1e-3;
    cfg.finetune_epochs = 70;
    cfg.finetune_batch = 256;
    cfg.finetune_lr = 1e-3;
    // 45 subject slots: 15 subjects x 3 sessions.
    cfg.synthetic.n_clips = 3394;
    cfg.synthetic.n_subjects = 45;
    cfg.synthetic.channels = 62;
    cfg.synthetic.time_len = 200;
    cfg.synthetic.n_classes = 3;
  } else {
    throw ConfigError("unknown profile: " + name);
  }
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: missing '=' at " + origin + ":" + std::to_string(lineno));
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    apply_key(cfg, key, value);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace sgmc
