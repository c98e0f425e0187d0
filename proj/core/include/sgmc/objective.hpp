#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sgmc/adam.hpp"
#include "sgmc/corpus.hpp"
#include "sgmc/grouping.hpp"
#include "sgmc/network.hpp"
#include "sgmc/ops.hpp"

namespace sgmc {

template <class T>
struct LossConfig {
  T temperature = T(0.1);
  T norm_floor = T(1e-12);
};

// Plain cosine similarity of two vectors.
template <class T>
double cosine_similarity(const Tensor<T>& z1, const Tensor<T>& z2) {
  check_same_shape(z1, z2, "cosine_similarity");
  double dot = 0, n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < z1.numel(); ++i) {
    dot += double(z1[i]) * z2[i];
    n1 += double(z1[i]) * z1[i];
    n2 += double(z2[i]) * z2[i];
  }
  if (n1 <= 1e-24 || n2 <= 1e-24)
    throw DegenerateError("cosine_similarity: near-zero norm input");
  return dot / (std::sqrt(n1) * std::sqrt(n2));
}

namespace detail {

// Large negative fill for the diagonal so an anchor never competes with
// itself; vanishes under the stabilized log-sum-exp.
template <class T>
constexpr T self_mask_value() {
  return T(-1e9);
}

// Anchor i's positive partner lives across the A/B boundary.
inline std::vector<int> partner_targets(std::size_t p) {
  std::vector<int> targets(2 * p);
  for (std::size_t i = 0; i < p; ++i) {
    targets[i] = static_cast<int>(p + i);
    targets[p + i] = static_cast<int>(i);
  }
  return targets;
}

// Strict top-1 retrieval over a [2P, 2P] similarity matrix; ties incorrect.
inline double retrieval_accuracy_from_sims(const std::vector<double>& sims, std::size_t p) {
  std::size_t n = 2 * p;
  std::vector<int> targets = partner_targets(p);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double pos = sims[i * n + targets[i]];
    bool ok = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || j == static_cast<std::size_t>(targets[i])) continue;
      if (sims[i * n + j] >= pos) {
        ok = false;
        break;
      }
    }
    if (ok) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace detail

// Group NT-Xent over stacked representations; rows 0..P-1 are the A sides,
// rows P..2P-1 the B sides. Returns the scalar loss node.
template <class T>
Var group_ntxent_loss_graph(Tape<T>& tape, Var z, const LossConfig<T>& cfg) {
  const Tensor<T>& vz = tape.value(z);
  if (vz.ndim() != 2 || vz.dim(0) % 2 != 0 || vz.dim(0) == 0)
    throw ContractError("group_ntxent_loss: expected [2P,H] representations");
  if (cfg.temperature <= T(0)) throw ContractError("group_ntxent_loss: tau must be positive");
  std::size_t p = vz.dim(0) / 2;
  Var zn = ops::row_l2_normalize(tape, z, cfg.norm_floor);
  Var sims = ops::matmul_nt(tape, zn, zn);
  Tensor<T> mask({2 * p, 2 * p});
  for (std::size_t i = 0; i < 2 * p; ++i)
    mask[i * 2 * p + i] = detail::self_mask_value<T>();
  Var logits = ops::scale(tape, ops::add(tape, sims, tape.leaf(mask, false)),
                          T(1) / cfg.temperature);
  return ops::cross_entropy_mean(tape, logits, detail::partner_targets(p));
}

// Evaluation convenience over fixed representations.
template <class T>
T group_ntxent_loss(const Tensor<T>& z_a, const Tensor<T>& z_b, const LossConfig<T>& cfg) {
  check_same_shape(z_a, z_b, "group_ntxent_loss");
  if (z_a.ndim() != 2 || z_a.dim(0) == 0)
    throw ContractError("group_ntxent_loss: expected [P,H] sides");
  std::size_t p = z_a.dim(0), h = z_a.dim(1);
  Tensor<T> z({2 * p, h});
  for (std::size_t i = 0; i < p * h; ++i) {
    z[i] = z_a[i];
    z[p * h + i] = z_b[i];
  }
  Tape<T> tape;
  return tape.value(group_ntxent_loss_graph(tape, tape.leaf(z, false), cfg))[0];
}

// Pre-training retrieval accuracy: an anchor counts iff its positive partner
// is strictly the most similar among all 2P-1 candidates; ties incorrect.
template <class T>
double pretrain_accuracy(const Tensor<T>& z_a, const Tensor<T>& z_b) {
  check_same_shape(z_a, z_b, "pretrain_accuracy");
  if (z_a.ndim() != 2 || z_a.dim(0) < 2)
    throw ContractError("pretrain_accuracy: needs P >= 2");
  std::size_t p = z_a.dim(0), h = z_a.dim(1);
  std::size_t n = 2 * p;
  auto row = [&](std::size_t i) {
    const Tensor<T>& src = i < p ? z_a : z_b;
    std::size_t r = i < p ? i : i - p;
    return Tensor<T>({h}, std::vector<T>(src.data() + r * h, src.data() + (r + 1) * h));
  };
  std::vector<double> sims(n * n, 0.0);
  std::vector<Tensor<T>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(row(i));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) sims[i * n + j] = cosine_similarity(rows[i], rows[j]);
  return detail::retrieval_accuracy_from_sims(sims, p);
}

// ---- pre-training loop ----

struct PretrainConfig {
  long epochs = 300;
  std::size_t clips_per_iteration = 4;  // P
  std::size_t samples_per_group = 2;    // Q
  double tau = 0.1;
  double lr = 1e-3;
  long checkpoint_every = 50;
  bool consistent = true;
  Augmenter augmenter = Augmenter::kCrossover;
  std::uint64_t seed = 0;
};

struct IterRecord {
  long epoch;
  long iter;
  double loss;
  double acc;
};

struct RunLog {
  std::vector<IterRecord> iters;
  std::vector<double> epoch_train_acc;
  std::vector<double> epoch_val_acc;  // stimulus-retrieval probe on the val split
  double wall_seconds = 0;
};

inline void write_runlog(const std::string& path, const RunLog& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open run log for writing: " + path);
  out << "# iter <epoch> <iter> <loss> <acc_pre>\n";
  for (const auto& r : log.iters)
    out << "iter " << r.epoch << " " << r.iter << " " << r.loss << " " << r.acc << "\n";
  for (std::size_t e = 0; e < log.epoch_train_acc.size(); ++e) {
    out << "epoch " << e << " train_acc_pre " << log.epoch_train_acc[e];
    if (e < log.epoch_val_acc.size() && log.epoch_val_acc[e] >= 0)
      out << " val_acc_pre " << log.epoch_val_acc[e];
    out << "\n";
  }
  out << "wall_seconds " << log.wall_seconds << "\n";
}

namespace detail {

// Builds the full contrastive graph for one augmented batch. Sample order is
// A_0..A_{P-1} then B_0..B_{P-1}, each group occupying Q consecutive rows.
template <class T>
Var contrastive_graph(Tape<T>& tape, EncoderNet<T>& enc, const BoundParams<T>& ebp,
                      ProjectorNet<T>& proj, const BoundParams<T>& pbp,
                      const AugmentedBatch& aug, const LossConfig<T>& lcfg, bool train,
                      Rng& dropout_rng, double* acc_out) {
  std::size_t p = aug.pairs.size();
  if (p == 0) throw ContractError("contrastive_graph: empty batch");
  std::size_t q = aug.pairs[0].first.size();
  std::vector<EegSample> samples;
  samples.reserve(2 * p * q);
  for (const auto& pr : aug.pairs)
    for (const auto& s : pr.first) samples.push_back(s);
  for (const auto& pr : aug.pairs)
    for (const auto& s : pr.second) samples.push_back(s);

  Var x = tape.leaf(batch_to_tensor<T>(samples), false);
  Var reps = encoder_forward(tape, enc, ebp, x, train);
  Var up = projector_base_forward(tape, proj, pbp, reps, train, dropout_rng);
  Var z = pool_groups(tape, up, q, proj.cfg.pooling);

  Var zn = ops::row_l2_normalize(tape, z, lcfg.norm_floor);
  Var sims = ops::matmul_nt(tape, zn, zn);
  if (acc_out) {
    const Tensor<T>& sv = tape.value(sims);
    std::vector<double> s(sv.vec().begin(), sv.vec().end());
    *acc_out = p >= 2 ? retrieval_accuracy_from_sims(s, p) : -1.0;
  }
  Tensor<T> mask({2 * p, 2 * p});
  for (std::size_t i = 0; i < 2 * p; ++i) mask[i * 2 * p + i] = self_mask_value<T>();
  Var logits = ops::scale(tape, ops::add(tape, sims, tape.leaf(mask, false)),
                          T(1) / lcfg.temperature);
  return ops::cross_entropy_mean(tape, logits, partner_targets(p));
}

}  // namespace detail

// Stimulus-retrieval probe: consistent groups + crossover augmentation over
// one pass of a split, eval mode. Returns -1 if the split is too small for a
// two-group batch.
template <class T>
double eval_retrieval_accuracy(const Corpus& corpus, Split split, EncoderNet<T>& enc,
                               ProjectorNet<T>& proj, std::size_t p, std::size_t q,
                               double tau, std::uint64_t seed) {
  std::vector<std::size_t> clips = corpus.clips_in_split(split);
  Rng rng = Rng(seed).substream("retrieval_probe");
  EpochState state = make_epoch_state(clips, rng);
  SamplerConfig scfg;
  scfg.clips_per_iteration = p;
  scfg.samples_per_group = q;
  LossConfig<T> lcfg;
  lcfg.temperature = static_cast<T>(tau);
  double acc_sum = 0;
  std::size_t n_batches = 0;
  Rng no_dropout(0);
  while (state.remaining() > 0) {
    GroupBatch batch = sample_minibatch(corpus, scfg, state, rng);
    if (batch.groups.size() < 2) continue;
    // Separation without crossover: the two sides of a pair share a stimulus
    // but no raw signal content, so retrieval measures stimulus alignment
    // rather than content matching.
    AugmentedBatch aug = augment_batch(batch, Augmenter::kNone, rng);
    Tape<T> tape;
    BoundParams<T> ebp(tape, enc.params);
    BoundParams<T> pbp(tape, proj.params);
    double acc = -1;
    detail::contrastive_graph(tape, enc, ebp, proj, pbp, aug, lcfg, /*train=*/false,
                              no_dropout, &acc);
    if (acc >= 0) {
      acc_sum += acc;
      ++n_batches;
    }
  }
  return n_batches ? acc_sum / static_cast<double>(n_batches) : -1.0;
}

// Algorithm: per iteration sample P groups, augment, encode, project, pool,
// NT-Xent, backward, Adam on encoder + projector. Deterministic in the seed;
// epoch randomness is derived from (seed, epoch) so resuming at an epoch
// boundary replays the identical stream.
template <class T>
RunLog pretrain(const Corpus& corpus, const PretrainConfig& cfg, EncoderNet<T>& enc,
                ProjectorNet<T>& proj, AdamOptimizer<T>& opt, long start_epoch = 0,
                const std::function<void(long, const RunLog&)>& on_epoch = {}) {
  if (cfg.epochs < 1) throw ContractError("pretrain: epochs must be >= 1");
  if (!corpus.has_splits()) throw ContractError("pretrain: corpus has no split assignment");
  std::vector<std::size_t> train_clips = corpus.clips_in_split(Split::kTrain);
  if (train_clips.size() < 2) throw ContractError("pretrain: need at least 2 training clips");

  SamplerConfig scfg;
  scfg.clips_per_iteration = cfg.clips_per_iteration;
  scfg.samples_per_group = cfg.samples_per_group;
  scfg.consistent = cfg.consistent;
  LossConfig<T> lcfg;
  lcfg.temperature = static_cast<T>(cfg.tau);

  Rng root(cfg.seed);
  RunLog log;
  auto t0 = std::chrono::steady_clock::now();
  long global_iter = 0;
  for (long epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng erng = root.substream("epoch", static_cast<std::uint64_t>(epoch));
    Rng drng = root.substream("dropout", static_cast<std::uint64_t>(epoch));
    EpochState state = make_epoch_state(train_clips, erng);
    double epoch_acc_sum = 0;
    std::size_t epoch_batches = 0;
    long iter_in_epoch = 0;
    while (state.remaining() > 0) {
      GroupBatch batch = cfg.consistent
                             ? sample_minibatch(corpus, scfg, state, erng)
                             : sample_nonconsistent(corpus, scfg, state, erng);
      if (batch.groups.size() < 2) continue;
      AugmentedBatch aug = augment_batch(batch, cfg.augmenter, erng);

      Tape<T> tape;
      BoundParams<T> ebp(tape, enc.params);
      BoundParams<T> pbp(tape, proj.params);
      double acc = -1;
      Var loss;
      try {
        loss = detail::contrastive_graph(tape, enc, ebp, proj, pbp, aug, lcfg,
                                         /*train=*/true, drng, &acc);
      } catch (const DegenerateError&) {
        // A zero projection row mid-training means the representation has
        // collapsed; treat it the same as a non-finite loss.
        throw DivergenceError("pre-training representation collapsed", global_iter);
      }
      double loss_v = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(loss_v))
        throw DivergenceError("pre-training loss is not finite", global_iter);
      tape.backward(loss);
      opt.step({ebp.gradients(tape), pbp.gradients(tape)});

      log.iters.push_back({epoch, iter_in_epoch, loss_v, acc});
      epoch_acc_sum += acc;
      ++epoch_batches;
      ++iter_in_epoch;
      ++global_iter;
    }
    log.epoch_train_acc.push_back(epoch_batches ? epoch_acc_sum / epoch_batches : -1.0);
    double val_acc = eval_retrieval_accuracy(corpus, Split::kVal, enc, proj,
                                             cfg.clips_per_iteration, cfg.samples_per_group,
                                             cfg.tau, cfg.seed + epoch);
    log.epoch_val_acc.push_back(val_acc);
    if (on_epoch) on_epoch(epoch, log);
  }
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

// ---- fine-tuning and evaluation ----

struct FinetuneConfig {
  long epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  int n_runs = 5;
  int labels_per_class = -1;  // -1: all labeled training samples
  std::uint64_t seed = 0;
};

struct EvalResult {
  double accuracy = 0;
  std::vector<std::vector<long>> confusion;  // rows: true class
};

struct FinetuneResult {
  double mean_accuracy = 0;
  double std_accuracy = 0;
  std::vector<double> run_accuracies;
  EvalResult best_run_eval;
  int best_run = -1;
};

struct LabeledSet {
  std::vector<std::pair<std::size_t, std::size_t>> items;  // (clip, subject)
  std::vector<int> labels;
};

inline LabeledSet make_labeled_set(const Corpus& corpus, Split split) {
  if (!corpus.has_labels()) throw ContractError("labeled set: corpus has no labels");
  LabeledSet set;
  for (std::size_t clip : corpus.clips_in_split(split))
    for (std::size_t s = 0; s < corpus.n_subjects(); ++s) {
      set.items.emplace_back(clip, s);
      set.labels.push_back(corpus.label_of_clip(clip));
    }
  return set;
}

// Keeps `per_class` samples of each class, drawn with the given rng stream.
inline LabeledSet subsample_per_class(const LabeledSet& set, int per_class, Rng rng) {
  if (per_class < 1) throw ContractError("subsample: labels-per-class must be >= 1");
  int n_classes = *std::max_element(set.labels.begin(), set.labels.end()) + 1;
  LabeledSet out;
  for (int c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < set.labels.size(); ++i)
      if (set.labels[i] == c) idx.push_back(i);
    if (idx.size() < static_cast<std::size_t>(per_class))
      throw ContractError("subsample: class " + std::to_string(c) + " has only " +
                          std::to_string(idx.size()) + " samples");
    rng.shuffle(idx);
    for (int k = 0; k < per_class; ++k) {
      out.items.push_back(set.items[idx[k]]);
      out.labels.push_back(c);
    }
  }
  return out;
}

template <class T>
EvalResult evaluate(EncoderNet<T>& enc, ClassifierNet<T>& cls, const Corpus& corpus,
                    Split split) {
  LabeledSet set = make_labeled_set(corpus, split);
  if (set.items.empty()) throw ContractError("evaluate: split is empty");
  int n_classes = cls.cfg.n_classes;
  EvalResult result;
  result.confusion.assign(n_classes, std::vector<long>(n_classes, 0));
  Rng no_dropout(0);
  std::size_t chunk = 256;
  long correct = 0;
  for (std::size_t start = 0; start < set.items.size(); start += chunk) {
    std::size_t count = std::min(chunk, set.items.size() - start);
    std::vector<EegSample> samples;
    for (std::size_t i = 0; i < count; ++i)
      samples.push_back(corpus.sample(set.items[start + i].first, set.items[start + i].second));
    Tape<T> tape;
    BoundParams<T> ebp(tape, enc.params);
    BoundParams<T> cbp(tape, cls.params);
    Var x = tape.leaf(batch_to_tensor<T>(samples), false);
    Var reps = encoder_forward(tape, enc, ebp, x, /*train=*/false);
    Var logits = classifier_forward(tape, cls, cbp, reps, /*train=*/false, no_dropout);
    const Tensor<T>& lv = tape.value(logits);
    for (std::size_t i = 0; i < count; ++i) {
      int pred = 0;
      for (int k = 1; k < n_classes; ++k)
        if (lv[i * n_classes + k] > lv[i * n_classes + pred]) pred = k;
      int truth = set.labels[start + i];
      result.confusion[truth][pred] += 1;
      if (pred == truth) ++correct;
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(set.items.size());
  return result;
}

// Supervised fine-tuning of the (pre-trained or fresh) encoder plus a fresh
// classifier, repeated n_runs times with derived seeds.
template <class T>
FinetuneResult finetune(const EncoderNet<T>& base_encoder, const ClassifierConfig& cls_cfg,
                        const Corpus& corpus, const FinetuneConfig& cfg,
                        Split eval_split = Split::kTest,
                        EncoderNet<T>* best_encoder_out = nullptr,
                        ClassifierNet<T>* best_classifier_out = nullptr) {
  if (!corpus.has_labels()) throw ContractError("finetune: corpus has no labels");
  LabeledSet full = make_labeled_set(corpus, Split::kTrain);
  Rng root(cfg.seed);

  // Every class must be represented.
  std::vector<bool> seen(cls_cfg.n_classes, false);
  for (int l : full.labels) {
    if (l < 0 || l >= cls_cfg.n_classes)
      throw ContractError("finetune: label outside configured class range");
    seen[l] = true;
  }
  for (int c = 0; c < cls_cfg.n_classes; ++c)
    if (!seen[c])
      throw ContractError("finetune: class " + std::to_string(c) +
                          " absent from training labels");

  FinetuneResult result;
  for (int run = 0; run < cfg.n_runs; ++run) {
    Rng run_rng = root.substream("finetune_run", static_cast<std::uint64_t>(run));
    // Each run is an independent repetition: when the label budget is
    // limited, the subset is redrawn per run so the reported mean averages
    // over subset luck as well as initialization.
    LabeledSet train_set = full;
    if (cfg.labels_per_class > 0)
      train_set = subsample_per_class(
          full, cfg.labels_per_class,
          root.substream("labelsub", static_cast<std::uint64_t>(run)));
    EncoderNet<T> enc = base_encoder;
    ClassifierNet<T> cls = build_classifier<T>(cls_cfg, enc.cfg.out_dim(), run_rng);
    AdamConfig<T> acfg;
    acfg.lr = static_cast<T>(cfg.lr);
    AdamOptimizer<T> opt({&enc.params, &cls.params}, acfg);

    long global_iter = 0;
    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng erng = run_rng.substream("epoch", static_cast<std::uint64_t>(epoch));
      std::vector<std::size_t> order(train_set.items.size());
      std::iota(order.begin(), order.end(), 0);
      erng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        std::size_t count = std::min(cfg.batch_size, order.size() - start);
        if (count < 2) continue;  // batchnorm needs at least two samples
        std::vector<EegSample> samples;
        std::vector<int> targets;
        for (std::size_t i = 0; i < count; ++i) {
          auto [clip, subj] = train_set.items[order[start + i]];
          samples.push_back(corpus.sample(clip, subj));
          targets.push_back(train_set.labels[order[start + i]]);
        }
        Tape<T> tape;
        BoundParams<T> ebp(tape, enc.params);
        BoundParams<T> cbp(tape, cls.params);
        Var x = tape.leaf(batch_to_tensor<T>(samples), false);
        Var reps = encoder_forward(tape, enc, ebp, x, /*train=*/true);
        Var logits = classifier_forward(tape, cls, cbp, reps, /*train=*/true, erng);
        Var loss = ops::cross_entropy_mean(tape, logits, targets);
        double loss_v = static_cast<double>(tape.value(loss)[0]);
        if (!std::isfinite(loss_v))
          throw DivergenceError("fine-tuning loss is not finite", global_iter);
        tape.backward(loss);
        opt.step({ebp.gradients(tape), cbp.gradients(tape)});
        ++global_iter;
      }
    }
    EvalResult eval = evaluate(enc, cls, corpus, eval_split);
    result.run_accuracies.push_back(eval.accuracy);
    if (result.best_run < 0 || eval.accuracy > result.run_accuracies[result.best_run]) {
      result.best_run = run;
      result.best_run_eval = eval;
      if (best_encoder_out) *best_encoder_out = enc;
      if (best_classifier_out) *best_classifier_out = cls;
    }
  }
  double sum = std::accumulate(result.run_accuracies.begin(), result.run_accuracies.end(), 0.0);
  result.mean_accuracy = sum / result.run_accuracies.size();
  double sq = 0;
  for (double a : result.run_accuracies) sq += (a - result.mean_accuracy) * (a - result.mean_accuracy);
  result.std_accuracy = result.run_accuracies.size() > 1
                            ? std::sqrt(sq / (result.run_accuracies.size() - 1))
                            : 0.0;
  return result;
}

// ---- ablation and sweep harnesses ----

struct HarnessConfig {
  EncoderConfig encoder;
  ProjectorConfig projector;
  ClassifierConfig classifier;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
};

struct VariantSpec {
  bool consistent = true;
  Augmenter augmenter = Augmenter::kCrossover;
  bool force_q_one = false;
};

inline VariantSpec variant_spec(const std::string& name) {
  if (name == "complete") return {true, Augmenter::kCrossover, false};
  if (name == "non-group") return {true, Augmenter::kCrossover, true};
  if (name == "non-augment") return {true, Augmenter::kNone, false};
  if (name == "mixup-augment") return {true, Augmenter::kMixup, false};
  if (name == "non-consistent") return {false, Augmenter::kCrossover, false};
  if (name == "consistent-only") return {true, Augmenter::kNone, true};
  throw ConfigError("unknown ablation variant: " + name);
}

inline const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v = {"complete",       "non-group",
                                             "non-augment",    "mixup-augment",
                                             "non-consistent", "consistent-only"};
  return v;
}

struct VariantResult {
  std::string variant;
  double final_train_acc_pre = -1;
  double retrieval_acc_pre = -1;
  double finetune_mean = 0;
  double finetune_sd = 0;
};

template <class T>
VariantResult run_variant(const Corpus& corpus, const HarnessConfig& cfg,
                          const std::string& name) {
  VariantSpec spec = variant_spec(name);
  PretrainConfig pcfg = cfg.pretrain;
  pcfg.consistent = spec.consistent;
  pcfg.augmenter = spec.augmenter;
  if (spec.force_q_one) pcfg.samples_per_group = 1;

  Rng rng(pcfg.seed);
  EncoderNet<T> enc = build_encoder<T>(cfg.encoder, rng);
  ProjectorNet<T> proj = build_projector<T>(cfg.projector, cfg.encoder.out_dim(), rng);
  AdamConfig<T> acfg;
  acfg.lr = static_cast<T>(pcfg.lr);
  AdamOptimizer<T> opt({&enc.params, &proj.params}, acfg);
  RunLog log = pretrain(corpus, pcfg, enc, proj, opt);

  VariantResult out;
  out.variant = name;
  if (!log.epoch_train_acc.empty()) out.final_train_acc_pre = log.epoch_train_acc.back();
  // Stimulus-retrieval probe: always the complete task's P and Q, on the
  // pre-training clips, averaged over several independent groupings to keep
  // the estimate well inside a +-0.05 band around chance.
  const int kProbePasses = 8;
  double probe_sum = 0;
  int probe_n = 0;
  for (int pass = 0; pass < kProbePasses; ++pass) {
    double a = eval_retrieval_accuracy(corpus, Split::kTrain, enc, proj,
                                       cfg.pretrain.clips_per_iteration,
                                       cfg.pretrain.samples_per_group, pcfg.tau,
                                       pcfg.seed + static_cast<std::uint64_t>(pass));
    if (a >= 0) {
      probe_sum += a;
      ++probe_n;
    }
  }
  if (probe_n > 0) out.retrieval_acc_pre = probe_sum / probe_n;
  FinetuneResult ft = finetune(enc, cfg.classifier, corpus, cfg.finetune);
  out.finetune_mean = ft.mean_accuracy;
  out.finetune_sd = ft.std_accuracy;
  return out;
}

template <class T>
std::vector<VariantResult> run_ablation(const Corpus& corpus, const HarnessConfig& cfg,
                                        const std::vector<std::string>& variants) {
  std::vector<VariantResult> rows;
  for (const auto& name : variants) rows.push_back(run_variant<T>(corpus, cfg, name));
  return rows;
}

struct SweepCell {
  std::size_t p = 0, q = 0;
  bool feasible = true;
  std::string note;
  double final_train_acc_pre = -1;
  double val_acc_pre = -1;
  double finetune_mean = 0;
  double finetune_sd = 0;
};

template <class T>
std::vector<SweepCell> sweep_pq(const Corpus& corpus, const HarnessConfig& cfg,
                                const std::vector<std::size_t>& q_list,
                                const std::vector<std::size_t>& p_list) {
  if (q_list.empty() || p_list.empty())
    throw ContractError("sweep: P and Q lists must be nonempty");
  std::vector<SweepCell> cells;
  for (std::size_t q : q_list)
    for (std::size_t p : p_list) {
      SweepCell cell;
      cell.p = p;
      cell.q = q;
      if (2 * q > corpus.n_subjects()) {
        cell.feasible = false;
        cell.note = "2Q exceeds subject count " + std::to_string(corpus.n_subjects());
        cells.push_back(cell);
        continue;
      }
      HarnessConfig hc = cfg;
      hc.pretrain.clips_per_iteration = p;
      hc.pretrain.samples_per_group = q;
      Rng rng(hc.pretrain.seed);
      EncoderNet<T> enc = build_encoder<T>(hc.encoder, rng);
      ProjectorNet<T> proj = build_projector<T>(hc.projector, hc.encoder.out_dim(), rng);
      AdamConfig<T> acfg;
      acfg.lr = static_cast<T>(hc.pretrain.lr);
      AdamOptimizer<T> opt({&enc.params, &proj.params}, acfg);
      RunLog log = pretrain(corpus, hc.pretrain, enc, proj, opt);
      if (!log.epoch_train_acc.empty()) cell.final_train_acc_pre = log.epoch_train_acc.back();
      cell.val_acc_pre = eval_retrieval_accuracy(corpus, Split::kVal, enc, proj, p, q,
                                                 hc.pretrain.tau, hc.pretrain.seed);
      FinetuneResult ft = finetune(enc, hc.classifier, corpus, hc.finetune);
      cell.finetune_mean = ft.mean_accuracy;
      cell.finetune_sd = ft.std_accuracy;
      cells.push_back(cell);
    }
  return cells;
}

}  // namespace sgmc
