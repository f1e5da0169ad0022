#include "config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace negprompt {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (value.empty() || value[0] == '-') throw std::invalid_argument("negative");
    const uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("invalid value for " + key + ": '" + value + "' (expected unsigned integer)");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("invalid value for " + key + ": '" + value + "' (expected number)");
  }
}

EncoderKind parse_kind(const std::string& key, const std::string& value) {
  if (value == "linear_mean") return EncoderKind::LinearMean;
  if (value == "tanh_mlp") return EncoderKind::TanhMlp;
  throw InvalidArgument("invalid value for " + key + ": '" + value +
                        "' (expected linear_mean or tanh_mlp)");
}

// shortest decimal form that parses back to the same double
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config syntax error at line " + std::to_string(line_no) +
                            ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw InvalidArgument("config syntax error at line " + std::to_string(line_no) +
                            ": empty key");
    }
    try {
      cfg.set(key, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "encoder_kind") {
    encoder_kind = parse_kind(key, value);
  } else if (key == "token_dim") {
    token_dim = parse_u64(key, value);
  } else if (key == "feature_dim") {
    feature_dim = parse_u64(key, value);
  } else if (key == "hidden_dim") {
    hidden_dim = parse_u64(key, value);
  } else if (key == "context_len") {
    context_len = parse_u64(key, value);
  } else if (key == "id_classes") {
    id_classes = parse_u64(key, value);
  } else if (key == "ood_classes") {
    ood_classes = parse_u64(key, value);
  } else if (key == "shots_per_class") {
    shots_per_class = parse_u64(key, value);
  } else if (key == "test_per_class") {
    test_per_class = parse_u64(key, value);
  } else if (key == "noise_sigma") {
    noise_sigma = parse_double(key, value);
  } else if (key == "hardness") {
    hardness = parse_double(key, value);
  } else if (key == "stage1_epochs") {
    stage1_epochs = parse_u64(key, value);
  } else if (key == "stage2_epochs") {
    stage2_epochs = parse_u64(key, value);
  } else if (key == "learning_rate") {
    learning_rate = parse_double(key, value);
  } else if (key == "momentum") {
    momentum = parse_double(key, value);
  } else if (key == "tau") {
    tau = parse_double(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_u64(key, value);
  } else if (key == "num_negative_prompts") {
    num_negative_prompts = parse_u64(key, value);
  } else if (key == "jitter_sigma") {
    jitter_sigma = parse_double(key, value);
  } else if (key == "beta") {
    beta = parse_double(key, value);
  } else if (key == "gamma") {
    gamma = parse_double(key, value);
  } else if (key == "scorer") {
    scorer = parse_scorer(value);
  } else if (key == "open_vocab_fraction") {
    open_vocab_fraction = parse_double(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else {
    throw InvalidArgument("unknown config key: '" + key + "'");
  }
}

std::string ExperimentConfig::get(const std::string& key) const {
  const std::string text = serialize();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos && line.substr(0, eq) == key) {
      return line.substr(eq + 3);
    }
  }
  throw InvalidArgument("unknown config key: '" + key + "'");
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  out << "seed = " << seed << '\n';
  out << "encoder_kind = " << encoder_kind_name(encoder_kind) << '\n';
  out << "token_dim = " << token_dim << '\n';
  out << "feature_dim = " << feature_dim << '\n';
  out << "hidden_dim = " << hidden_dim << '\n';
  out << "context_len = " << context_len << '\n';
  out << "id_classes = " << id_classes << '\n';
  out << "ood_classes = " << ood_classes << '\n';
  out << "shots_per_class = " << shots_per_class << '\n';
  out << "test_per_class = " << test_per_class << '\n';
  out << "noise_sigma = " << fmt_double(noise_sigma) << '\n';
  out << "hardness = " << fmt_double(hardness) << '\n';
  out << "stage1_epochs = " << stage1_epochs << '\n';
  out << "stage2_epochs = " << stage2_epochs << '\n';
  out << "learning_rate = " << fmt_double(learning_rate) << '\n';
  out << "momentum = " << fmt_double(momentum) << '\n';
  out << "tau = " << fmt_double(tau) << '\n';
  out << "batch_size = " << batch_size << '\n';
  out << "num_negative_prompts = " << num_negative_prompts << '\n';
  out << "jitter_sigma = " << fmt_double(jitter_sigma) << '\n';
  out << "beta = " << fmt_double(beta) << '\n';
  out << "gamma = " << fmt_double(gamma) << '\n';
  out << "scorer = " << scorer_name(scorer) << '\n';
  out << "open_vocab_fraction = " << fmt_double(open_vocab_fraction) << '\n';
  out << "out_dir = " << out_dir << '\n';
  return out.str();
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw InvalidArgument(msg);
  };
  require(token_dim >= 1, "token_dim must be >= 1");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(encoder_kind == EncoderKind::LinearMean || hidden_dim >= 1,
          "hidden_dim must be >= 1 for tanh_mlp");
  require(context_len >= 1, "context_len must be >= 1");
  require(id_classes >= 1, "id_classes must be >= 1");
  require(ood_classes >= 1, "ood_classes must be >= 1");
  require(shots_per_class >= 1, "shots_per_class must be >= 1");
  require(test_per_class >= 1, "test_per_class must be >= 1");
  require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  require(hardness >= 0.0 && hardness <= 1.0, "hardness must be in [0,1]");
  require(learning_rate >= 0.0, "learning_rate must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0,1)");
  require(tau > 0.0, "tau must be > 0");
  require(num_negative_prompts >= 1, "num_negative_prompts must be >= 1");
  require(jitter_sigma >= 0.0, "jitter_sigma must be >= 0");
  require(beta >= 0.0, "beta must be >= 0");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(open_vocab_fraction > 0.0 && open_vocab_fraction <= 1.0,
          "open_vocab_fraction must be in (0,1]");
}

WorldConfig ExperimentConfig::world_config() const {
  WorldConfig w;
  w.seed = seed;
  w.id_classes = id_classes;
  w.ood_classes = ood_classes;
  w.shots_per_class = shots_per_class;
  w.test_per_class = test_per_class;
  w.noise_sigma = noise_sigma;
  w.hardness = hardness;
  w.encoder_kind = encoder_kind;
  w.dims.token_dim = token_dim;
  w.dims.feature_dim = feature_dim;
  w.dims.hidden_dim = encoder_kind == EncoderKind::LinearMean ? 0 : hidden_dim;
  w.dims.seq_len = context_len + 1;
  return w;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.stage1_epochs = stage1_epochs;
  t.stage2_epochs = stage2_epochs;
  t.learning_rate = learning_rate;
  t.momentum = momentum;
  t.tau = tau;
  t.batch_size = batch_size;
  t.seed = seed;
  t.context_len = context_len;
  t.num_negative_prompts = num_negative_prompts;
  t.jitter_sigma = jitter_sigma;
  return t;
}

LossWeights ExperimentConfig::loss_weights() const { return {beta, gamma}; }

std::size_t ExperimentConfig::open_vocab_class_count() const {
  const double raw = open_vocab_fraction * static_cast<double>(id_classes);
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  if (count < 1) count = 1;
  if (count > id_classes) count = id_classes;
  return count;
}

}  // namespace negprompt
