// Command-line front end: corpus generation, pre-training, fine-tuning,
// evaluation, ablations, P/Q sweeps and the gradient-check suite. Exit codes:
// 0 success, 2 configuration or contract error, 3 numerical divergence
// (gradcheck alone exits 1 when a primitive fails).

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgmc/config.hpp"
#include "sgmc/gradcheck.hpp"
#include "sgmc/objective.hpp"

namespace fs = std::filesystem;
using namespace sgmc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? profile_config("desk")
                                           : parse_config_file(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.seed_set = true;
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

Corpus load_corpus(const RunConfig& cfg) {
  Corpus corpus;
  if (!cfg.corpus_path.empty()) {
    corpus = read_corpus(cfg.corpus_path);
  } else {
    SyntheticSpec spec = cfg.synthetic;
    if (cfg.seed_set) spec.seed = cfg.seed;
    corpus = generate_synthetic_corpus(spec);
  }
  if (!corpus.has_splits()) split_by_clip(corpus, cfg.split_ratios, cfg.seed);
  return corpus;
}

HarnessConfig make_harness(const RunConfig& cfg, int n_classes) {
  HarnessConfig hc;
  hc.encoder = EncoderConfig::from_preset(cfg.encoder_preset);
  hc.projector.hidden = cfg.projector_hidden;
  hc.projector.pooling = pooling_from_name(cfg.pooling);
  hc.projector.dropout_rate = cfg.dropout_rate;
  hc.classifier.hidden = cfg.classifier_hidden;
  hc.classifier.n_classes = n_classes;
  hc.classifier.dropout_rate = cfg.dropout_rate;
  hc.pretrain.epochs = cfg.pretrain_epochs;
  hc.pretrain.clips_per_iteration = cfg.clips_per_iteration;
  hc.pretrain.samples_per_group = cfg.samples_per_group;
  hc.pretrain.tau = cfg.tau;
  hc.pretrain.lr = cfg.pretrain_lr;
  hc.pretrain.checkpoint_every = cfg.checkpoint_every;
  hc.pretrain.seed = cfg.seed;
  hc.finetune.epochs = cfg.finetune_epochs;
  hc.finetune.batch_size = cfg.finetune_batch;
  hc.finetune.lr = cfg.finetune_lr;
  hc.finetune.n_runs = cfg.finetune_runs;
  hc.finetune.labels_per_class = cfg.labels_per_class;
  hc.finetune.seed = cfg.seed;
  return hc;
}

// ---- optimizer state as a checkpoint section ----

ParamStore<float> optimizer_state_store(AdamOptimizer<float>& opt,
                                        const std::vector<ParamStore<float>*>& stores,
                                        long epoch_done) {
  ParamStore<float> state;
  state.add("t", Tensor<float>({1}, static_cast<float>(opt.step_count())), false);
  state.add("epoch", Tensor<float>({1}, static_cast<float>(epoch_done)), false);
  for (std::size_t s = 0; s < stores.size(); ++s) {
    const auto& entries = stores[s]->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].trainable) continue;
      std::string tag = std::to_string(s) + "." + entries[i].name;
      state.add("m" + tag, opt.moments_m()[s][i], false);
      state.add("v" + tag, opt.moments_v()[s][i], false);
    }
  }
  return state;
}

void restore_optimizer_state(AdamOptimizer<float>& opt,
                             const std::vector<ParamStore<float>*>& stores,
                             ParamStore<float>& state, long& epoch_done) {
  opt.set_step_count(static_cast<long>(state["t"][0]));
  epoch_done = static_cast<long>(state["epoch"][0]);
  for (std::size_t s = 0; s < stores.size(); ++s) {
    const auto& entries = stores[s]->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].trainable) continue;
      std::string tag = std::to_string(s) + "." + entries[i].name;
      opt.moments_m()[s][i] = state["m" + tag];
      opt.moments_v()[s][i] = state["v" + tag];
    }
  }
}

void save_train_checkpoint(const std::string& path, EncoderNet<float>& enc,
                           ProjectorNet<float>& proj, AdamOptimizer<float>& opt,
                           long epoch_done, const std::string& cfg_digest) {
  ParamStore<float> state =
      optimizer_state_store(opt, {&enc.params, &proj.params}, epoch_done);
  save_checkpoint<float>(path, {{"encoder", enc.cfg.digest(), &enc.params},
                                {"projector", proj.cfg.digest(), &proj.params},
                                {"optimizer", cfg_digest, &state}});
}

long load_train_checkpoint(const std::string& path, EncoderNet<float>& enc,
                           ProjectorNet<float>& proj, AdamOptimizer<float>& opt,
                           const std::string& cfg_digest) {
  ParamStore<float> state =
      optimizer_state_store(opt, {&enc.params, &proj.params}, 0);
  load_checkpoint<float>(path, {{"encoder", enc.cfg.digest(), &enc.params},
                                {"projector", proj.cfg.digest(), &proj.params},
                                {"optimizer", cfg_digest, &state}});
  long epoch_done = 0;
  restore_optimizer_state(opt, {&enc.params, &proj.params}, state, epoch_done);
  return epoch_done;
}

// ---- subcommands ----

int cmd_gen_data(const CommonArgs& args) {
  RunConfig cfg = load_run_config(args);
  Corpus corpus = load_corpus(cfg);
  std::string path = (fs::path(cfg.out_dir) / "corpus.bin").string();
  write_corpus(corpus, path);
  std::cout << "wrote " << path << "\n"
            << "clips=" << corpus.n_clips() << " subjects=" << corpus.n_subjects()
            << " channels=" << corpus.channels() << " time_len=" << corpus.time_len()
            << " classes=" << corpus.n_classes() << "\n"
            << "splits: train=" << corpus.clips_in_split(Split::kTrain).size()
            << " val=" << corpus.clips_in_split(Split::kVal).size()
            << " test=" << corpus.clips_in_split(Split::kTest).size() << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& args, const std::string& variant,
                 const std::string& resume_path) {
  RunConfig cfg = load_run_config(args);
  Corpus corpus = load_corpus(cfg);
  HarnessConfig hc = make_harness(cfg, std::max(2, corpus.has_labels() ? corpus.n_classes() : 2));
  VariantSpec vs = variant_spec(variant.empty() ? cfg.variant : variant);
  hc.pretrain.consistent = vs.consistent;
  hc.pretrain.augmenter = vs.augmenter;
  if (vs.force_q_one) hc.pretrain.samples_per_group = 1;

  Rng rng(cfg.seed);
  EncoderNet<float> enc = build_encoder<float>(hc.encoder, rng);
  ProjectorNet<float> proj = build_projector<float>(hc.projector, hc.encoder.out_dim(), rng);
  AdamConfig<float> acfg;
  acfg.lr = static_cast<float>(hc.pretrain.lr);
  AdamOptimizer<float> opt({&enc.params, &proj.params}, acfg);

  long start_epoch = 0;
  if (!resume_path.empty())
    start_epoch = load_train_checkpoint(resume_path, enc, proj, opt, cfg.digest_text());

  std::string log_path = (fs::path(cfg.out_dir) / "pretrain_log.txt").string();
  auto on_epoch = [&](long epoch, const RunLog& log) {
    long done = epoch + 1;
    if (hc.pretrain.checkpoint_every > 0 &&
        (done % hc.pretrain.checkpoint_every == 0 || done == hc.pretrain.epochs)) {
      std::string ckpt =
          (fs::path(cfg.out_dir) / ("ckpt-" + std::to_string(done) + ".bin")).string();
      save_train_checkpoint(ckpt, enc, proj, opt, done, cfg.digest_text());
      write_runlog(log_path, log);
    }
  };

  RunLog log = pretrain(corpus, hc.pretrain, enc, proj, opt, start_epoch, on_epoch);
  write_runlog(log_path, log);
  save_train_checkpoint((fs::path(cfg.out_dir) / "ckpt-final.bin").string(), enc, proj,
                        opt, hc.pretrain.epochs, cfg.digest_text());

  double chance = 1.0 / static_cast<double>(2 * hc.pretrain.clips_per_iteration - 1);
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "pretrain done: epochs=" << hc.pretrain.epochs
            << " final_train_acc_pre=" << (log.epoch_train_acc.empty() ? -1.0 : log.epoch_train_acc.back())
            << " final_val_acc_pre=" << (log.epoch_val_acc.empty() ? -1.0 : log.epoch_val_acc.back())
            << " chance=" << chance << " wall_s=" << log.wall_seconds << "\n";
  return 0;
}

// Checkpoint selection: a concrete file is used as-is; a directory is scanned
// for ckpt-*.bin and the one with the best mean fine-tune accuracy on the
// validation split wins.
std::string select_checkpoint(const std::string& path, const RunConfig& cfg,
                              const HarnessConfig& hc, const Corpus& corpus) {
  if (!fs::is_directory(path)) return path;
  std::vector<std::string> candidates;
  for (const auto& e : fs::directory_iterator(path)) {
    std::string name = e.path().filename().string();
    if (name.rfind("ckpt-", 0) == 0 && e.path().extension() == ".bin")
      candidates.push_back(e.path().string());
  }
  std::sort(candidates.begin(), candidates.end());
  if (candidates.empty())
    throw ConfigError("no ckpt-*.bin checkpoints under " + path);
  std::string best;
  double best_acc = -1;
  for (const auto& c : candidates) {
    Rng rng(cfg.seed);
    EncoderNet<float> enc = build_encoder<float>(hc.encoder, rng);
    load_checkpoint<float>(c, {{"encoder", hc.encoder.digest(), &enc.params}});
    FinetuneResult r = finetune(enc, hc.classifier, corpus, hc.finetune, Split::kVal);
    std::cout << "  candidate " << c << " val_mean=" << r.mean_accuracy << "\n";
    if (r.mean_accuracy > best_acc) {
      best_acc = r.mean_accuracy;
      best = c;
    }
  }
  std::cout << "selected checkpoint " << best << "\n";
  return best;
}

void write_finetune_metrics(const std::string& path, const FinetuneResult& r,
                            bool from_scratch) {
  std::ofstream out(path);
  out << std::fixed << std::setprecision(6);
  out << "mode " << (from_scratch ? "from-scratch" : "pretrained") << "\n";
  out << "mean_accuracy " << r.mean_accuracy << "\n";
  out << "std_accuracy " << r.std_accuracy << "\n";
  for (std::size_t i = 0; i < r.run_accuracies.size(); ++i)
    out << "run " << i << " " << r.run_accuracies[i] << "\n";
  out << "best_run " << r.best_run << "\n";
  out << "confusion_rows_true_class\n";
  for (const auto& row : r.best_run_eval.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
    out << "\n";
  }
}

int cmd_finetune(const CommonArgs& args, const std::string& checkpoint, bool from_scratch,
                 int labels_per_class) {
  RunConfig cfg = load_run_config(args);
  Corpus corpus = load_corpus(cfg);
  if (!corpus.has_labels()) throw ContractError("finetune: corpus has no labels");
  HarnessConfig hc = make_harness(cfg, corpus.n_classes());
  if (labels_per_class != 0) hc.finetune.labels_per_class = labels_per_class;

  Rng rng(cfg.seed);
  EncoderNet<float> enc = build_encoder<float>(hc.encoder, rng);
  if (!from_scratch) {
    if (checkpoint.empty())
      throw ConfigError("finetune: --checkpoint required unless --from-scratch");
    std::string chosen = select_checkpoint(checkpoint, cfg, hc, corpus);
    load_checkpoint<float>(chosen, {{"encoder", hc.encoder.digest(), &enc.params}});
  }

  EncoderNet<float> best_enc;
  ClassifierNet<float> best_cls;
  FinetuneResult r = finetune(enc, hc.classifier, corpus, hc.finetune, Split::kTest,
                              &best_enc, &best_cls);
  write_finetune_metrics((fs::path(cfg.out_dir) / "finetune_metrics.txt").string(), r,
                         from_scratch);
  save_checkpoint<float>((fs::path(cfg.out_dir) / "model.bin").string(),
                         {{"encoder", hc.encoder.digest(), &best_enc.params},
                          {"classifier", hc.classifier.digest(), &best_cls.params}});
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "finetune done: runs=" << hc.finetune.n_runs
            << " mean_acc=" << r.mean_accuracy << " sd=" << r.std_accuracy
            << " best_run=" << r.best_run << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& model_path,
             const std::string& split_name_arg) {
  RunConfig cfg = load_run_config(args);
  Corpus corpus = load_corpus(cfg);
  if (!corpus.has_labels()) throw ContractError("eval: corpus has no labels");
  HarnessConfig hc = make_harness(cfg, corpus.n_classes());
  if (model_path.empty()) throw ConfigError("eval: --model required");
  Split split = split_from_name(split_name_arg);

  Rng rng(cfg.seed);
  EncoderNet<float> enc = build_encoder<float>(hc.encoder, rng);
  ClassifierNet<float> cls =
      build_classifier<float>(hc.classifier, hc.encoder.out_dim(), rng);
  load_checkpoint<float>(model_path, {{"encoder", hc.encoder.digest(), &enc.params},
                                      {"classifier", hc.classifier.digest(), &cls.params}});
  EvalResult r = evaluate(enc, cls, corpus, split);

  std::ofstream out((fs::path(cfg.out_dir) / "eval.txt").string());
  out << std::fixed << std::setprecision(6) << "split " << split_name(split)
      << "\naccuracy " << r.accuracy << "\nconfusion_rows_true_class\n";
  long total = 0, diag = 0;
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) {
      out << (j ? " " : "") << r.confusion[i][j];
      total += r.confusion[i][j];
      if (i == j) diag += r.confusion[i][j];
    }
    out << "\n";
  }
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "eval " << split_name(split) << ": accuracy=" << r.accuracy << " ("
            << diag << "/" << total << ")\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& variant) {
  RunConfig cfg = load_run_config(args);
  Corpus corpus = load_corpus(cfg);
  HarnessConfig hc = make_harness(cfg, corpus.n_classes());
  std::vector<std::string> variants =
      variant.empty() ? all_variants() : std::vector<std::string>{variant};
  std::vector<VariantResult> rows = run_ablation<float>(corpus, hc, variants);

  double chance = 1.0 / static_cast<double>(2 * hc.pretrain.clips_per_iteration - 1);
  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << "chance_acc_pre " << chance << "\n";
  table << std::left << std::setw(18) << "variant" << std::setw(16) << "train_acc_pre"
        << std::setw(16) << "retrieval_acc" << std::setw(12) << "ft_mean"
        << "ft_sd\n";
  for (const auto& r : rows)
    table << std::left << std::setw(18) << r.variant << std::setw(16)
          << r.final_train_acc_pre << std::setw(16) << r.retrieval_acc_pre << std::setw(12)
          << r.finetune_mean << r.finetune_sd << "\n";
  std::ofstream((fs::path(cfg.out_dir) / "ablation.txt").string()) << table.str();
  std::cout << table.str();
  return 0;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoul(item));
  }
  return out;
}

int cmd_sweep(const CommonArgs& args, const std::string& p_list, const std::string& q_list) {
  RunConfig cfg = load_run_config(args);
  Corpus corpus = load_corpus(cfg);
  HarnessConfig hc = make_harness(cfg, corpus.n_classes());
  std::vector<std::size_t> ps = parse_size_list(p_list);
  std::vector<std::size_t> qs = parse_size_list(q_list);
  std::vector<SweepCell> cells = sweep_pq<float>(corpus, hc, qs, ps);

  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << std::left << std::setw(6) << "Q" << std::setw(6) << "P" << std::setw(16)
        << "train_acc_pre" << std::setw(14) << "val_acc_pre" << std::setw(12)
        << "ft_mean" << std::setw(10) << "ft_sd"
        << "note\n";
  for (const auto& c : cells) {
    table << std::left << std::setw(6) << c.q << std::setw(6) << c.p;
    if (!c.feasible) {
      table << "infeasible: " << c.note << "\n";
      continue;
    }
    table << std::setw(16) << c.final_train_acc_pre << std::setw(14) << c.val_acc_pre
          << std::setw(12) << c.finetune_mean << std::setw(10) << c.finetune_sd << "\n";
  }
  std::ofstream((fs::path(cfg.out_dir) / "sweep.txt").string()) << table.str();
  std::cout << table.str();
  return 0;
}

// End-to-end check: finite differences on a random subset of parameter
// coordinates of a tiny encoder+projector contrastive loss, in 64-bit.
bool end_to_end_gradcheck(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_clips = 6;
  spec.n_subjects = 4;
  spec.channels = 3;
  spec.time_len = 8;
  spec.seed = seed;
  Corpus corpus = generate_synthetic_corpus(spec);
  double ratios[3] = {1.0, 0.0, 0.0};
  split_by_clip(corpus, ratios, seed);

  EncoderConfig ecfg;
  ecfg.stem_width = 3;
  ecfg.blocks = {{4, 3, 1}};
  ProjectorConfig pcfg;
  pcfg.hidden = {5, 6, 7};

  Rng rng(seed);
  EncoderNet<double> enc = build_encoder<double>(ecfg, rng);
  ProjectorNet<double> proj = build_projector<double>(pcfg, ecfg.out_dim(), rng);
  // Small positive biases keep every ReLU active; with the default zero
  // biases a narrow projector row can go exactly dead, and the normalized
  // similarity graph rejects zero rows.
  for (ParamStore<double>* store : {&enc.params, &proj.params})
    for (auto& e : store->entries())
      if (e.trainable && e.name.size() > 2 && e.name.ends_with(".b"))
        for (std::size_t k = 0; k < e.value.numel(); ++k)
          e.value[k] = rng.uniform(0.01, 0.1);

  SamplerConfig scfg;
  scfg.clips_per_iteration = 2;
  scfg.samples_per_group = 2;
  Rng srng = rng.substream("sampler");
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), srng);
  GroupBatch batch = sample_minibatch(corpus, scfg, state, srng);
  AugmentedBatch aug = meiosis_batch(batch, srng);
  LossConfig<double> lcfg;

  // Every graph build restarts the dropout stream so the analytic graph and
  // both finite-difference evaluations see the same masks.
  auto loss_value = [&]() {
    Tape<double> tape;
    BoundParams<double> ebp(tape, enc.params);
    BoundParams<double> pbp(tape, proj.params);
    Rng dropout(seed + 1);
    return tape.value(detail::contrastive_graph(tape, enc, ebp, proj, pbp, aug, lcfg,
                                                /*train=*/true, dropout, nullptr))[0];
  };

  Tape<double> tape;
  BoundParams<double> ebp(tape, enc.params);
  BoundParams<double> pbp(tape, proj.params);
  Rng dropout(seed + 1);
  Var loss = detail::contrastive_graph(tape, enc, ebp, proj, pbp, aug, lcfg, true,
                                       dropout, nullptr);
  tape.backward(loss);
  std::vector<std::vector<Tensor<double>>> grads = {ebp.gradients(tape),
                                                    pbp.gradients(tape)};
  std::vector<ParamStore<double>*> stores = {&enc.params, &proj.params};

  const double h = 1e-5, rtol = 1e-3, atol = 1e-5;
  Rng pick = rng.substream("coords");
  double max_rel = 0;
  bool pass = true;
  for (int probe = 0; probe < 60; ++probe) {
    std::size_t s = pick.uniform_u64(stores.size());
    auto& entries = stores[s]->entries();
    std::size_t i = pick.uniform_u64(entries.size());
    if (!entries[i].trainable) continue;
    std::size_t k = pick.uniform_u64(entries[i].value.numel());
    double orig = entries[i].value[k];
    entries[i].value[k] = orig + h;
    double fp = loss_value();
    entries[i].value[k] = orig - h;
    double fm = loss_value();
    entries[i].value[k] = orig;
    double numeric = (fp - fm) / (2 * h);
    double analytic = grads[s][i][k];
    double abs_err = std::abs(analytic - numeric);
    double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom > 0) max_rel = std::max(max_rel, abs_err / denom);
    if (abs_err > atol + rtol * denom) pass = false;
  }
  std::cout << "end_to_end            max_rel=" << std::scientific << max_rel
            << (pass ? "  ok" : "  FAIL") << std::defaultfloat << "\n";
  return pass;
}

int cmd_gradcheck(std::size_t n_shapes, std::uint64_t seed) {
  bool all_pass = true;
  for (Primitive kind : all_primitives()) {
    GradCheckReport r = grad_check_suite(kind, n_shapes, seed);
    std::cout << std::left << std::setw(22) << r.primitive << std::scientific
              << "max_abs=" << r.max_abs_err << "  max_rel=" << r.max_rel_err
              << std::defaultfloat << (r.pass ? "  ok" : "  FAIL") << "\n";
    all_pass = all_pass && r.pass;
  }
  all_pass = end_to_end_gradcheck(seed) && all_pass;
  std::cout << (all_pass ? "gradcheck: all primitives pass\n"
                         : "gradcheck: FAILURES detected\n");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised group-contrastive training pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string variant, resume_path, checkpoint, model_path, split_arg = "test";
  std::string p_list = "2,4", q_list = "1,2";
  bool from_scratch = false;
  int labels_per_class = 0;  // 0: keep config value
  std::size_t gc_shapes = 100;
  std::uint64_t gc_seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "config file (key = value)");
    sub->add_option("--seed", common.seed, "seed override");
    sub->add_option("--out", common.out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen);

  CLI::App* pre = app.add_subcommand("pretrain", "contrastive pre-training");
  add_common(pre);
  pre->add_option("--variant", variant, "ablation variant");
  pre->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* fin = app.add_subcommand("finetune", "supervised fine-tuning");
  add_common(fin);
  fin->add_option("--checkpoint", checkpoint, "pre-training checkpoint file or directory");
  fin->add_flag("--from-scratch", from_scratch, "train without pre-trained weights");
  fin->add_option("--labels-per-class", labels_per_class, "labeled samples per class");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a fine-tuned model");
  add_common(ev);
  ev->add_option("--model", model_path, "model checkpoint from finetune");
  ev->add_option("--split", split_arg, "train | val | test");

  CLI::App* abl = app.add_subcommand("ablate", "run ablation variants");
  add_common(abl);
  abl->add_option("--variant", variant, "single variant (default: all six)");

  CLI::App* sw = app.add_subcommand("sweep", "P/Q grid sweep");
  add_common(sw);
  sw->add_option("--p-list", p_list, "comma-separated P values");
  sw->add_option("--q-list", q_list, "comma-separated Q values");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--shapes", gc_shapes, "random shapes per primitive");
  gc->add_option("--seed", gc_seed, "base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (pre->parsed()) return cmd_pretrain(common, variant, resume_path);
    if (fin->parsed()) return cmd_finetune(common, checkpoint, from_scratch, labels_per_class);
    if (ev->parsed()) return cmd_eval(common, model_path, split_arg);
    if (abl->parsed()) return cmd_ablate(common, variant);
    if (sw->parsed()) return cmd_sweep(common, p_list, q_list);
    if (gc->parsed()) return cmd_gradcheck(gc_shapes, gc_seed);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
