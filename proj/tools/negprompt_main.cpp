// negprompt CLI: world generation, two-stage/joint prompt training,
// detection evaluation, gradient checks, and hyperparameter sweeps.
// Talks to the core exclusively through the C API.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "negprompt/negprompt.h"

namespace fs = std::filesystem;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(np_status status, const char* what) {
  if (status != NP_OK) {
    throw CliError(std::string(what) + ": " + np_last_error());
  }
}

// RAII wrappers over the opaque C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  explicit Handle(T* p) : ptr(p) {}
  ~Handle() { Free(ptr); }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& other) noexcept : ptr(other.ptr) { other.ptr = nullptr; }
  Handle& operator=(Handle&& other) noexcept {
    if (this != &other) {
      Free(ptr);
      ptr = other.ptr;
      other.ptr = nullptr;
    }
    return *this;
  }
  T** out() {
    Free(ptr);
    ptr = nullptr;
    return &ptr;
  }
  T* get() const { return ptr; }
};

using Config = Handle<np_config, np_config_free>;
using Encoder = Handle<np_encoder, np_encoder_free>;
using Vocab = Handle<np_vocab, np_vocab_free>;
using Bundle = Handle<np_bundle, np_bundle_free>;
using Ckpt = Handle<np_checkpoint, np_checkpoint_free>;
using Report = Handle<np_report, np_report_free>;

std::string take_string(char* s) {
  std::string out = s ? s : "";
  np_string_free(s);
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

Config load_config(const CommonOpts& opts, const std::string& fallback_path) {
  Config cfg;
  if (!opts.config_path.empty()) {
    check(np_config_parse_file(opts.config_path.c_str(), cfg.out()), "parse config");
  } else if (!fallback_path.empty() && fs::exists(fallback_path)) {
    check(np_config_parse_file(fallback_path.c_str(), cfg.out()), "parse config");
  } else {
    check(np_config_create(cfg.out()), "create config");
  }
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw CliError("--set expects key=value, got '" + kv + "'");
    }
    std::string key = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    auto strip = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    };
    strip(key);
    strip(value);
    check(np_config_set(cfg.get(), key.c_str(), value.c_str()), "apply --set");
  }
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CliError("cannot write " + path.string());
  out << text;
  if (!out) throw CliError("write failed: " + path.string());
}

// Config echo plus the encoder fingerprint; comment lines keep the file
// parseable as a config.
void echo_config(const fs::path& dir, const np_config* cfg, const np_encoder* enc) {
  char* text = nullptr;
  check(np_config_serialize(cfg, &text), "serialize config");
  std::string body = take_string(text);
  if (enc != nullptr) {
    uint64_t fp = 0;
    check(np_encoder_fingerprint(enc, &fp), "fingerprint");
    char line[64];
    std::snprintf(line, sizeof(line), "# encoder_fingerprint = 0x%016" PRIx64 "\n", fp);
    body.insert(0, line);
  }
  write_file(dir / "config.txt", body);
}

struct WorldFiles {
  Encoder encoder;
  Vocab vocab;
  Bundle train;
  Bundle id_test;
  Bundle ood_test;
};

WorldFiles load_world(const std::string& dir, bool need_train, bool need_test) {
  WorldFiles w;
  const fs::path base(dir);
  check(np_encoder_load((base / "encoder.nfe").string().c_str(), w.encoder.out()),
        "load encoder");
  check(np_vocab_load((base / "vocab.nvc").string().c_str(), w.vocab.out()), "load vocabulary");
  if (need_train) {
    check(np_bundle_load((base / "train.neb").string().c_str(), w.train.out()),
          "load training bundle");
  }
  if (need_test) {
    check(np_bundle_load((base / "id_test.neb").string().c_str(), w.id_test.out()),
          "load ID test bundle");
    check(np_bundle_load((base / "ood_test.neb").string().c_str(), w.ood_test.out()),
          "load OOD test bundle");
  }
  return w;
}

double metric(const np_report* report, const char* name) {
  double v = 0.0;
  check(np_report_metric(report, name, &v), name);
  return v;
}

int cmd_gen_world(const CommonOpts& common, const std::string& out_dir) {
  Config cfg = load_config(common, "");
  fs::create_directories(out_dir);
  const fs::path base(out_dir);

  WorldFiles w;
  check(np_world_generate(cfg.get(), w.encoder.out(), w.vocab.out(), w.train.out(),
                          w.id_test.out(), w.ood_test.out()),
        "generate world");
  check(np_encoder_save(w.encoder.get(), (base / "encoder.nfe").string().c_str()),
        "save encoder");
  check(np_vocab_save(w.vocab.get(), (base / "vocab.nvc").string().c_str()), "save vocabulary");
  check(np_bundle_save(w.train.get(), (base / "train.neb").string().c_str()), "save train");
  check(np_bundle_save(w.id_test.get(), (base / "id_test.neb").string().c_str()), "save id_test");
  check(np_bundle_save(w.ood_test.get(), (base / "ood_test.neb").string().c_str()),
        "save ood_test");
  echo_config(base, cfg.get(), w.encoder.get());

  uint64_t train_n = 0, id_n = 0, ood_n = 0;
  np_bundle_info(w.train.get(), &train_n, nullptr, nullptr);
  np_bundle_info(w.id_test.get(), &id_n, nullptr, nullptr);
  np_bundle_info(w.ood_test.get(), &ood_n, nullptr, nullptr);
  std::printf("world written to %s (train=%" PRIu64 ", id_test=%" PRIu64 ", ood_test=%" PRIu64
              ")\n",
              out_dir.c_str(), train_n, id_n, ood_n);
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& stage, const std::string& world_dir,
              const std::string& checkpoint_path, bool open_vocab, const std::string& out_dir) {
  Config cfg = load_config(common, (fs::path(world_dir) / "config.txt").string());
  WorldFiles w = load_world(world_dir, /*need_train=*/true, /*need_test=*/false);
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  const std::string trace_path = (base / "loss_trace.csv").string();

  Ckpt result;
  if (stage == "pos") {
    check(np_train_positive(w.encoder.get(), w.vocab.get(), w.train.get(), cfg.get(),
                            open_vocab ? 1 : 0, trace_path.c_str(), result.out()),
          "train positive prompt");
  } else if (stage == "neg") {
    if (checkpoint_path.empty()) {
      throw CliError("--stage neg requires --checkpoint with the stage-1 checkpoint");
    }
    Ckpt positive;
    check(np_checkpoint_load(checkpoint_path.c_str(), w.encoder.get(), positive.out()),
          "load positive checkpoint");
    check(np_train_negative(w.encoder.get(), w.vocab.get(), w.train.get(), positive.get(),
                            cfg.get(), trace_path.c_str(), result.out()),
          "train negative prompts");
  } else if (stage == "joint") {
    check(np_train_joint(w.encoder.get(), w.vocab.get(), w.train.get(), cfg.get(),
                         open_vocab ? 1 : 0, trace_path.c_str(), result.out()),
          "train jointly");
  } else {
    throw CliError("unknown --stage '" + stage + "' (expected pos, neg, or joint)");
  }

  const std::string ckpt_path = (base / "checkpoint.npk").string();
  check(np_checkpoint_save(result.get(), ckpt_path.c_str()), "save checkpoint");
  echo_config(base, cfg.get(), w.encoder.get());

  uint32_t p = 0, k_train = 0;
  np_checkpoint_info(result.get(), &p, &k_train);
  std::printf("checkpoint written to %s (stage=%s, trained_classes=%u, negative_prompts=%u)\n",
              ckpt_path.c_str(), stage.c_str(), k_train, p);
  return 0;
}

int run_eval(const np_config* cfg, const WorldFiles& w, const np_checkpoint* ckpt,
             bool open_vocab, Report& report) {
  check(np_evaluate(w.encoder.get(), w.vocab.get(), ckpt, w.id_test.get(), w.ood_test.get(), cfg,
                    open_vocab ? 1 : 0, report.out()),
        "evaluate");
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& world_dir,
             const std::string& checkpoint_path, const std::string& scorer, bool open_vocab,
             bool dump_features, const std::string& out_dir) {
  const fs::path ckpt_dir = fs::path(checkpoint_path).parent_path();
  Config cfg = load_config(common, (ckpt_dir / "config.txt").string());
  if (!scorer.empty()) {
    check(np_config_set(cfg.get(), "scorer", scorer.c_str()), "set scorer");
  }
  WorldFiles w = load_world(world_dir, /*need_train=*/false, /*need_test=*/true);
  Ckpt ckpt;
  check(np_checkpoint_load(checkpoint_path.c_str(), w.encoder.get(), ckpt.out()),
        "load checkpoint");
  fs::create_directories(out_dir);
  const fs::path base(out_dir);

  Report report;
  run_eval(cfg.get(), w, ckpt.get(), open_vocab, report);

  char* csv = nullptr;
  check(np_report_csv(report.get(), 1, &csv), "format report");
  write_file(base / "report.csv", take_string(csv));
  echo_config(base, cfg.get(), w.encoder.get());
  if (dump_features) {
    check(np_dump_features(w.encoder.get(), w.vocab.get(), ckpt.get(), w.id_test.get(),
                           w.ood_test.get(), open_vocab ? 1 : 0,
                           (base / "features.csv").string().c_str()),
          "dump features");
  }

  std::printf("auroc=%.4f fpr95=%.4f top1_acc=%.4f (k_train=%g, k_eval=%g, p=%g)\n",
              metric(report.get(), "auroc"), metric(report.get(), "fpr95"),
              metric(report.get(), "top1_acc"), metric(report.get(), "k_train"),
              metric(report.get(), "k_eval"), metric(report.get(), "p"));
  std::printf("report written to %s\n", (base / "report.csv").string().c_str());
  return 0;
}

int cmd_gradcheck(const CommonOpts& common, const std::string& encoder_path, uint64_t seed,
                  int probes) {
  Encoder enc;
  if (!encoder_path.empty()) {
    check(np_encoder_load(encoder_path.c_str(), enc.out()), "load encoder");
  } else {
    Config cfg = load_config(common, "");
    check(np_encoder_create(cfg.get(), enc.out()), "create encoder");
  }
  double max_rel = 0.0;
  int pass = 0;
  check(np_gradcheck(enc.get(), seed, probes, &max_rel, &pass), "gradcheck");
  std::printf("gradcheck: max_rel_error=%.3e -> %s\n", max_rel, pass ? "pass" : "FAIL");
  return pass ? 0 : 1;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_sweep(const CommonOpts& common, const std::string& world_dir, const std::string& beta_grid,
              const std::string& gamma_grid, const std::string& p_grid,
              const std::string& out_dir) {
  Config base_cfg = load_config(common, (fs::path(world_dir) / "config.txt").string());
  WorldFiles w = load_world(world_dir, /*need_train=*/true, /*need_test=*/true);
  fs::create_directories(out_dir);
  const fs::path base(out_dir);

  auto grid_or_default = [&](const std::string& grid, const char* key) {
    if (!grid.empty()) return split_csv(grid);
    char* v = nullptr;
    check(np_config_get(base_cfg.get(), key, &v), key);
    return std::vector<std::string>{take_string(v)};
  };
  const auto betas = grid_or_default(beta_grid, "beta");
  const auto gammas = grid_or_default(gamma_grid, "gamma");
  const auto ps = grid_or_default(p_grid, "num_negative_prompts");

  std::string sweep_csv;
  std::size_t run_idx = 0;
  for (const auto& beta : betas) {
    for (const auto& gamma : gammas) {
      for (const auto& p : ps) {
        Config cfg;
        check(np_config_clone(base_cfg.get(), cfg.out()), "clone config");
        check(np_config_set(cfg.get(), "beta", beta.c_str()), "set beta");
        check(np_config_set(cfg.get(), "gamma", gamma.c_str()), "set gamma");
        check(np_config_set(cfg.get(), "num_negative_prompts", p.c_str()), "set p");

        char run_name[32];
        std::snprintf(run_name, sizeof(run_name), "run_%03zu", run_idx);
        const fs::path run_dir = base / "runs" / run_name;
        fs::create_directories(run_dir);

        Ckpt pos;
        check(np_train_positive(w.encoder.get(), w.vocab.get(), w.train.get(), cfg.get(), 0,
                                nullptr, pos.out()),
              "train positive prompt");
        Ckpt full;
        check(np_train_negative(w.encoder.get(), w.vocab.get(), w.train.get(), pos.get(),
                                cfg.get(), (run_dir / "loss_trace.csv").string().c_str(),
                                full.out()),
              "train negative prompts");
        check(np_checkpoint_save(full.get(), (run_dir / "checkpoint.npk").string().c_str()),
              "save checkpoint");
        echo_config(run_dir, cfg.get(), w.encoder.get());

        Report report;
        run_eval(cfg.get(), w, full.get(), /*open_vocab=*/false, report);
        char* csv = nullptr;
        check(np_report_csv(report.get(), run_idx == 0 ? 1 : 0, &csv), "format report");
        const std::string row = take_string(csv);
        sweep_csv += row;
        write_file(run_dir / "report.csv", row);

        std::printf("%s: beta=%s gamma=%s p=%s auroc=%.4f fpr95=%.4f\n", run_name, beta.c_str(),
                    gamma.c_str(), p.c_str(), metric(report.get(), "auroc"),
                    metric(report.get(), "fpr95"));
        ++run_idx;
      }
    }
  }
  write_file(base / "sweep_report.csv", sweep_csv);
  echo_config(base, base_cfg.get(), w.encoder.get());
  std::printf("%zu sweep rows written to %s\n", run_idx,
              (base / "sweep_report.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"negative-prompt OOD detection experiments"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string out_dir = "out";
  std::string world_dir;
  std::string stage = "pos";
  std::string checkpoint_path;
  std::string scorer;
  std::string encoder_path;
  std::string beta_grid, gamma_grid, p_grid;
  bool open_vocab = false;
  bool dump_features = false;
  uint64_t seed = 0;
  int probes = 10;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "config file (key = value lines)");
    cmd->add_option("--set", common.overrides, "override a config key (key=value), repeatable");
  };

  auto* gen = app.add_subcommand("gen-world", "generate a synthetic ID/OOD world");
  add_common(gen);
  gen->add_option("--out-dir", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train prompt contexts");
  add_common(train);
  train->add_option("--stage", stage, "pos, neg, or joint")->required();
  train->add_option("--world", world_dir, "world directory from gen-world")->required();
  train->add_option("--checkpoint", checkpoint_path, "stage-1 checkpoint (for --stage neg)");
  train->add_flag("--open-vocab", open_vocab,
                  "train on the first open_vocab_fraction of ID classes only");
  train->add_option("--out-dir", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate OOD detection");
  add_common(eval);
  eval->add_option("--world", world_dir, "world directory")->required();
  eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  eval->add_option("--scorer", scorer, "mcm or negprompt (default: config)");
  eval->add_flag("--open-vocab", open_vocab, "evaluate over every ID class in the vocabulary");
  eval->add_flag("--dump-features", dump_features, "also write features.csv");
  eval->add_option("--out-dir", out_dir, "output directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of encoder gradients");
  add_common(grad);
  grad->add_option("--encoder", encoder_path, "encoder file (default: built from config)");
  grad->add_option("--seed", seed, "probe seed");
  grad->add_option("--probes", probes, "number of random probes");

  auto* sweep = app.add_subcommand("sweep", "grid sweep over beta/gamma/p");
  add_common(sweep);
  sweep->add_option("--world", world_dir, "world directory")->required();
  sweep->add_option("--beta-grid", beta_grid, "comma-separated beta values");
  sweep->add_option("--gamma-grid", gamma_grid, "comma-separated gamma values");
  sweep->add_option("--p-grid", p_grid, "comma-separated negative prompt counts");
  sweep->add_option("--out-dir", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_world(common, out_dir);
    if (train->parsed()) {
      return cmd_train(common, stage, world_dir, checkpoint_path, open_vocab, out_dir);
    }
    if (eval->parsed()) {
      return cmd_eval(common, world_dir, checkpoint_path, scorer, open_vocab, dump_features,
                      out_dir);
    }
    if (grad->parsed()) return cmd_gradcheck(common, encoder_path, seed, probes);
    if (sweep->parsed()) return cmd_sweep(common, world_dir, beta_grid, gamma_grid, p_grid,
                                          out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
