#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "sgmc/objective.hpp"

using namespace sgmc;

namespace {

Corpus tiny_corpus(std::uint64_t seed = 3, std::size_t clips = 8, std::size_t subjects = 4) {
  SyntheticSpec spec;
  spec.n_clips = clips;
  spec.n_subjects = subjects;
  spec.channels = 2;
  spec.time_len = 8;
  spec.seed = seed;
  Corpus c = generate_synthetic_corpus(spec);
  double ratios[3] = {0.5, 0.25, 0.25};
  split_by_clip(c, ratios, seed);
  return c;
}

EncoderConfig micro_encoder() {
  EncoderConfig cfg;
  cfg.stem_width = 3;
  cfg.blocks = {{4, 3, 1}};
  return cfg;
}

ProjectorConfig micro_projector() {
  ProjectorConfig cfg;
  cfg.hidden = {5, 6, 7};
  // At this width the full-scale dropout rate can zero a whole row, which
  // the trainer treats as a collapsed representation.
  cfg.dropout_rate = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("cosine similarity unit values") {
  Tensor<float> e1({3}, {1.0f, 0.0f, 0.0f});
  Tensor<float> e2({3}, {0.0f, 1.0f, 0.0f});
  Tensor<float> neg({3}, {-1.0f, 0.0f, 0.0f});
  CHECK(cosine_similarity(e1, e1) == doctest::Approx(1.0));
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0));
  CHECK(cosine_similarity(e1, neg) == doctest::Approx(-1.0));
  Tensor<float> zero({3});
  CHECK_THROWS_AS(cosine_similarity(e1, zero), DegenerateError);
}

TEST_CASE("loss is zero for a single positive pair") {
  Rng rng(0);
  Tensor<float> z_a = random_uniform<float>({1, 6}, rng);
  Tensor<float> z_b = random_uniform<float>({1, 6}, rng);
  CHECK(std::abs(group_ntxent_loss(z_a, z_b, {})) < 1e-7);
}

TEST_CASE("orthonormal P=2 case hits the closed form ln(1 + 2/e)") {
  Tensor<float> z({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  LossConfig<float> cfg;
  cfg.temperature = 1.0f;
  double loss = group_ntxent_loss(z, z, cfg);
  CHECK(loss == doctest::Approx(std::log(1.0 + 2.0 / std::exp(1.0))).epsilon(1e-5));
}

TEST_CASE("loss is invariant to a global A/B swap and uniform scaling") {
  Rng rng(1);
  Tensor<float> z_a = random_uniform<float>({4, 8}, rng, -1.0f, 1.0f);
  Tensor<float> z_b = random_uniform<float>({4, 8}, rng, -1.0f, 1.0f);
  LossConfig<float> cfg;
  double base = group_ntxent_loss(z_a, z_b, cfg);
  CHECK(base > 0.0);
  CHECK(group_ntxent_loss(z_b, z_a, cfg) == doctest::Approx(base).epsilon(1e-6));
  Tensor<float> sa = z_a, sb = z_b;
  for (std::size_t i = 0; i < sa.numel(); ++i) {
    sa[i] *= 3.7f;
    sb[i] *= 3.7f;
  }
  CHECK(group_ntxent_loss(sa, sb, cfg) == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("loss graph rejects malformed stacks and temperatures") {
  Tape<float> tape;
  Rng rng(2);
  Var odd = tape.leaf(random_uniform<float>({3, 4}, rng), false);
  CHECK_THROWS_AS(group_ntxent_loss_graph(tape, odd, {}), ContractError);
  Var ok = tape.leaf(random_uniform<float>({4, 4}, rng), false);
  LossConfig<float> bad;
  bad.temperature = 0.0f;
  CHECK_THROWS_AS(group_ntxent_loss_graph(tape, ok, bad), ContractError);
}

TEST_CASE("twenty adam steps on the loss strictly decrease it") {
  Rng rng(3);
  ParamStore<float> store;
  store.add("z", random_uniform<float>({8, 6}, rng, -1.0f, 1.0f));
  AdamConfig<float> acfg;
  acfg.lr = 1e-2f;
  AdamOptimizer<float> opt({&store}, acfg);
  LossConfig<float> lcfg;
  double prev = 1e30;
  for (int step = 0; step < 20; ++step) {
    Tape<float> tape;
    BoundParams<float> bp(tape, store);
    Var loss = group_ntxent_loss_graph(tape, bp["z"], lcfg);
    double v = tape.value(loss)[0];
    CHECK(v < prev);
    prev = v;
    tape.backward(loss);
    opt.step({bp.gradients(tape)});
  }
}

TEST_CASE("pretrain accuracy unit values") {
  // clustered orthogonal representations -> 1.0
  Tensor<float> ortho({2, 4});
  ortho[0] = 1.0f;
  ortho[1 * 4 + 1] = 1.0f;
  CHECK(pretrain_accuracy(ortho, ortho) == doctest::Approx(1.0));
  // all identical -> ties -> 0.0
  Tensor<float> same({2, 4}, 1.0f);
  CHECK(pretrain_accuracy(same, same) == doctest::Approx(0.0));
  Tensor<float> single({1, 4}, 1.0f);
  CHECK_THROWS_AS(pretrain_accuracy(single, single), ContractError);
}

TEST_CASE("random representations retrieve at chance level") {
  Rng rng(4);
  double acc = 0;
  const int batches = 2000;
  for (int i = 0; i < batches; ++i) {
    Tensor<float> z_a = random_normal<float>({8, 16}, rng);
    Tensor<float> z_b = random_normal<float>({8, 16}, rng);
    acc += pretrain_accuracy(z_a, z_b);
  }
  acc /= batches;
  CHECK(acc == doctest::Approx(1.0 / 15.0).epsilon(0.35));  // +-~0.02 absolute
}

TEST_CASE("perfect retrieval implies strict dominance of positives") {
  Rng rng(5);
  // well-separated cluster directions
  Tensor<float> z_a({3, 3});
  for (int i = 0; i < 3; ++i) z_a[i * 3 + i] = 1.0f;
  Tensor<float> z_b = z_a;
  for (std::size_t i = 0; i < z_b.numel(); ++i)
    z_b[i] += 0.01f * static_cast<float>(rng.uniform());
  REQUIRE(pretrain_accuracy(z_a, z_b) == doctest::Approx(1.0));
  for (int i = 0; i < 3; ++i) {
    Tensor<float> ai({3}, {z_a[i * 3], z_a[i * 3 + 1], z_a[i * 3 + 2]});
    Tensor<float> bi({3}, {z_b[i * 3], z_b[i * 3 + 1], z_b[i * 3 + 2]});
    double pos = cosine_similarity(ai, bi);
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      Tensor<float> aj({3}, {z_a[j * 3], z_a[j * 3 + 1], z_a[j * 3 + 2]});
      Tensor<float> bj({3}, {z_b[j * 3], z_b[j * 3 + 1], z_b[j * 3 + 2]});
      CHECK(pos > cosine_similarity(ai, aj));
      CHECK(pos > cosine_similarity(ai, bj));
    }
  }
}

TEST_CASE("pretraining is deterministic and logs consistent lengths") {
  Corpus corpus = tiny_corpus();
  auto run = [&]() {
    Rng rng(11);
    EncoderNet<float> enc = build_encoder<float>(micro_encoder(), rng);
    ProjectorNet<float> proj = build_projector<float>(micro_projector(), 4, rng);
    AdamOptimizer<float> opt({&enc.params, &proj.params}, AdamConfig<float>{});
    PretrainConfig cfg;
    cfg.epochs = 3;
    cfg.clips_per_iteration = 2;
    cfg.samples_per_group = 2;
    cfg.seed = 11;
    return pretrain(corpus, cfg, enc, proj, opt);
  };
  RunLog a = run(), b = run();
  REQUIRE(a.iters.size() == b.iters.size());
  CHECK(a.epoch_train_acc.size() == 3);
  CHECK(a.epoch_val_acc.size() == 3);
  for (std::size_t i = 0; i < a.iters.size(); ++i) {
    CHECK(a.iters[i].loss == b.iters[i].loss);
    CHECK(a.iters[i].acc == b.iters[i].acc);
  }
  write_runlog("test_runlog.txt", a);
  std::remove("test_runlog.txt");
}

TEST_CASE("non-finite loss aborts with a divergence error") {
  Corpus corpus = tiny_corpus();
  Rng rng(12);
  EncoderNet<float> enc = build_encoder<float>(micro_encoder(), rng);
  ProjectorNet<float> proj = build_projector<float>(micro_projector(), 4, rng);
  enc.params["stem.w"][0] = std::numeric_limits<float>::quiet_NaN();
  AdamOptimizer<float> opt({&enc.params, &proj.params}, AdamConfig<float>{});
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.clips_per_iteration = 2;
  cfg.samples_per_group = 2;
  CHECK_THROWS_AS(pretrain(corpus, cfg, enc, proj, opt), DivergenceError);
}

TEST_CASE("label subsampling draws exactly N per class deterministically") {
  Corpus corpus = tiny_corpus(6, 10, 4);
  LabeledSet full = make_labeled_set(corpus, Split::kTrain);
  LabeledSet sub = subsample_per_class(full, 2, Rng(5));
  std::vector<int> counts(2, 0);
  for (int l : sub.labels) ++counts[l];
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 2);
  LabeledSet again = subsample_per_class(full, 2, Rng(5));
  CHECK(sub.items == again.items);
  CHECK_THROWS_AS(subsample_per_class(full, 1000, Rng(5)), ContractError);
}

TEST_CASE("evaluation confusion matrix is consistent with its accuracy") {
  Corpus corpus = tiny_corpus();
  Rng rng(13);
  EncoderNet<float> enc = build_encoder<float>(micro_encoder(), rng);
  ClassifierConfig ccfg;
  ccfg.hidden = {6, 5, 4};
  ccfg.n_classes = corpus.n_classes();
  ClassifierNet<float> cls = build_classifier<float>(ccfg, 4, rng);
  EvalResult r = evaluate(enc, cls, corpus, Split::kTest);
  long total = 0, diag = 0;
  std::vector<long> row_sums;
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    long rs = 0;
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) {
      rs += r.confusion[i][j];
      total += r.confusion[i][j];
      if (i == j) diag += r.confusion[i][j];
    }
    row_sums.push_back(rs);
  }
  LabeledSet test_set = make_labeled_set(corpus, Split::kTest);
  std::vector<long> class_counts(r.confusion.size(), 0);
  for (int l : test_set.labels) ++class_counts[l];
  CHECK(row_sums == class_counts);
  CHECK(total == static_cast<long>(test_set.labels.size()));
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(diag) / total));
}

TEST_CASE("finetune requires every class in the training labels") {
  Corpus corpus = tiny_corpus();
  std::vector<int> labels(corpus.n_clips(), 0);  // class 1 vanishes
  corpus.set_labels(labels);
  Rng rng(14);
  EncoderNet<float> enc = build_encoder<float>(micro_encoder(), rng);
  ClassifierConfig ccfg;
  ccfg.hidden = {6, 5, 4};
  ccfg.n_classes = 2;
  FinetuneConfig fcfg;
  fcfg.epochs = 1;
  fcfg.n_runs = 1;
  CHECK_THROWS_AS(finetune(enc, ccfg, corpus, fcfg), ContractError);
}

TEST_CASE("finetune reports per-run accuracies with mean and deviation") {
  Corpus corpus = tiny_corpus();
  Rng rng(15);
  EncoderNet<float> enc = build_encoder<float>(micro_encoder(), rng);
  ClassifierConfig ccfg;
  ccfg.hidden = {6, 5, 4};
  ccfg.n_classes = corpus.n_classes();
  FinetuneConfig fcfg;
  fcfg.epochs = 2;
  fcfg.batch_size = 8;
  fcfg.n_runs = 2;
  fcfg.seed = 15;
  FinetuneResult r = finetune(enc, ccfg, corpus, fcfg);
  REQUIRE(r.run_accuracies.size() == 2);
  CHECK(r.mean_accuracy ==
        doctest::Approx((r.run_accuracies[0] + r.run_accuracies[1]) / 2));
  CHECK(r.best_run >= 0);
  CHECK(r.best_run_eval.accuracy ==
        doctest::Approx(*std::max_element(r.run_accuracies.begin(),
                                          r.run_accuracies.end())));
}

TEST_CASE("variant table covers the six published rows") {
  CHECK(all_variants().size() == 6);
  VariantSpec ng = variant_spec("non-group");
  CHECK(ng.force_q_one);
  CHECK(ng.augmenter == Augmenter::kCrossover);
  VariantSpec co = variant_spec("consistent-only");
  CHECK(co.force_q_one);
  CHECK(co.augmenter == Augmenter::kNone);
  VariantSpec nc = variant_spec("non-consistent");
  CHECK_FALSE(nc.consistent);
  CHECK_THROWS_AS(variant_spec("bogus"), ConfigError);
}

TEST_CASE("sweep marks infeasible cells instead of dropping them") {
  Corpus corpus = tiny_corpus();
  HarnessConfig hc;
  hc.encoder = micro_encoder();
  hc.projector = micro_projector();
  hc.classifier.hidden = {6, 5, 4};
  hc.classifier.n_classes = corpus.n_classes();
  hc.pretrain.epochs = 1;
  hc.pretrain.clips_per_iteration = 2;
  hc.finetune.epochs = 1;
  hc.finetune.n_runs = 1;
  auto cells = sweep_pq<float>(corpus, hc, {2, 8}, {2});
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].feasible);
  CHECK_FALSE(cells[1].feasible);  // 2Q = 16 > 4 subjects
  CHECK_FALSE(cells[1].note.empty());
}
