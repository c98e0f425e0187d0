#include <benchmark/benchmark.h>

#include "sgmc/objective.hpp"

using namespace sgmc;

namespace {

void BM_ConvForward(benchmark::State& state) {
  Rng rng(0);
  std::size_t width = static_cast<std::size_t>(state.range(0));
  Tensor<float> x = random_uniform<float>({4, 1, 4, 64}, rng, -1.0f, 1.0f);
  Tensor<float> w = random_uniform<float>({width, 1, 4, 7}, rng, -0.2f, 0.2f);
  Tensor<float> b({width});
  for (auto _ : state) {
    Tape<float> tape;
    ops::Conv2dAttrs attrs;
    attrs.pad_w = 3;
    Var y = ops::conv2d(tape, tape.leaf(x, false), tape.leaf(w, false),
                        tape.leaf(b, false), attrs);
    benchmark::DoNotOptimize(tape.value(y).data());
  }
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(32);

void BM_MeiosisBatch(benchmark::State& state) {
  SyntheticSpec spec;
  spec.seed = 1;
  Corpus corpus = generate_synthetic_corpus(spec);
  double ratios[3] = {1.0, 0.0, 0.0};
  split_by_clip(corpus, ratios, 1);
  SamplerConfig scfg;
  scfg.clips_per_iteration = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  for (auto _ : state) {
    EpochState epoch = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
    GroupBatch batch = sample_minibatch(corpus, scfg, epoch, rng);
    AugmentedBatch aug = meiosis_batch(batch, rng);
    benchmark::DoNotOptimize(aug.pairs.data());
  }
}
BENCHMARK(BM_MeiosisBatch)->Arg(4)->Arg(8);

void BM_GroupNtxentGraph(benchmark::State& state) {
  Rng rng(3);
  std::size_t p = static_cast<std::size_t>(state.range(0));
  Tensor<float> z = random_normal<float>({2 * p, 256}, rng);
  LossConfig<float> cfg;
  for (auto _ : state) {
    Tape<float> tape;
    Var loss = group_ntxent_loss_graph(tape, tape.leaf(z, true), cfg);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(loss).data());
  }
}
BENCHMARK(BM_GroupNtxentGraph)->Arg(4)->Arg(16);

void BM_AdamStep(benchmark::State& state) {
  Rng rng(4);
  EncoderNet<float> enc = build_encoder<float>(EncoderConfig::tiny(), rng);
  AdamOptimizer<float> opt({&enc.params}, AdamConfig<float>{});
  std::vector<std::vector<Tensor<float>>> grads(1);
  for (const auto& e : enc.params.entries())
    grads[0].push_back(e.trainable ? random_normal<float>(e.value.shape(), rng)
                                   : Tensor<float>());
  for (auto _ : state) opt.step(grads);
}
BENCHMARK(BM_AdamStep);

}  // namespace

BENCHMARK_MAIN();
