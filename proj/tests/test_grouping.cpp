#include <algorithm>
#include <cstdio>
#include <set>
#include <vector>

#include "doctest.h"
#include "sgmc/grouping.hpp"

using namespace sgmc;

namespace {

EegSample make_sample(std::size_t C, std::size_t M, int clip, int subject, Rng& rng) {
  EegSample s;
  s.values = random_uniform<float>({C, M}, rng);
  s.clip_id = clip;
  s.subject_id = subject;
  s.prefix_subject_id = subject;
  return s;
}

// Sorted multiset of per-time-index columns over a set of samples.
std::vector<std::vector<float>> time_columns(const std::vector<EegSample>& samples,
                                             std::size_t t) {
  std::vector<std::vector<float>> cols;
  for (const auto& s : samples) {
    std::vector<float> col;
    for (std::size_t c = 0; c < s.channels(); ++c)
      col.push_back(s.values[c * s.time_len() + t]);
    cols.push_back(col);
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

Corpus small_corpus(std::size_t clips = 8, std::size_t subjects = 6) {
  SyntheticSpec spec;
  spec.n_clips = clips;
  spec.n_subjects = subjects;
  spec.channels = 2;
  spec.time_len = 8;
  spec.seed = 5;
  Corpus c = generate_synthetic_corpus(spec);
  double ratios[3] = {1.0, 0.0, 0.0};
  split_by_clip(c, ratios, 5);
  return c;
}

}  // namespace

TEST_CASE("crossover instantiates the published example") {
  Rng rng(0);
  // M=4: A=(a1..a4), B=(b1..b4), c=2 -> (b1,b2,a3,a4), (a1,a2,b3,b4)
  EegSample a = make_sample(1, 4, 0, 0, rng), b = make_sample(1, 4, 0, 1, rng);
  auto [at, bt] = crossover(a, b, 2);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(at.values[k] == (k < 2 ? b.values[k] : a.values[k]));
    CHECK(bt.values[k] == (k < 2 ? a.values[k] : b.values[k]));
  }
  CHECK(at.prefix_subject_id == 1);
  CHECK(at.subject_id == 0);
}

TEST_CASE("crossover is an involution and conserves rows") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t C = 1 + rng.uniform_u64(3), M = 4 + rng.uniform_u64(12);
    std::size_t c = 2 + rng.uniform_u64(M - 3);
    EegSample a = make_sample(C, M, 0, 0, rng), b = make_sample(C, M, 0, 1, rng);
    auto [at, bt] = crossover(a, b, c);
    auto [a2, b2] = crossover(at, bt, c);
    CHECK(a2.values == a.values);
    CHECK(b2.values == b.values);
    for (std::size_t t = 0; t < M; ++t)
      CHECK(time_columns({at, bt}, t) == time_columns({a, b}, t));
  }
}

TEST_CASE("crossover rejects out-of-range split positions and shape mismatch") {
  Rng rng(2);
  EegSample a = make_sample(2, 8, 0, 0, rng), b = make_sample(2, 8, 0, 1, rng);
  CHECK_THROWS_AS(crossover(a, b, 1), ContractError);
  CHECK_THROWS_AS(crossover(a, b, 7), ContractError);
  EegSample c = make_sample(2, 10, 0, 2, rng);
  CHECK_THROWS_AS(crossover(a, c, 3), ContractError);
}

TEST_CASE("meiosis conserves content and separates partners") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t Q = 1 + rng.uniform_u64(3);  // 2Q in {2,4,6}
    std::size_t C = 2, M = 6 + rng.uniform_u64(10);
    std::size_t c = 2 + rng.uniform_u64(M - 3);
    std::vector<EegSample> group;
    for (std::size_t i = 0; i < 2 * Q; ++i)
      group.push_back(make_sample(C, M, 7, static_cast<int>(i), rng));
    auto [ga, gb] = meiosis(group, c, rng);
    REQUIRE(ga.size() == Q);
    REQUIRE(gb.size() == Q);
    std::vector<EegSample> all = ga;
    all.insert(all.end(), gb.begin(), gb.end());
    for (std::size_t t = 0; t < M; ++t)
      CHECK(time_columns(all, t) == time_columns(group, t));
    // partner of (prefix p, suffix s) carries (prefix s, suffix p) and must
    // sit in the other group
    for (const auto& s : ga)
      for (const auto& other : ga)
        CHECK_FALSE((other.prefix_subject_id == s.subject_id &&
                     other.subject_id == s.prefix_subject_id &&
                     &other != &s));
  }
}

TEST_CASE("meiosis with Q=1 returns exactly the crossover products") {
  Rng rng(4);
  EegSample a = make_sample(2, 8, 0, 0, rng), b = make_sample(2, 8, 0, 1, rng);
  auto [ga, gb] = meiosis({a, b}, 3, rng);
  REQUIRE(ga.size() == 1);
  REQUIRE(gb.size() == 1);
  auto [at, bt] = crossover(a, b, 3);
  bool direct = ga[0].values == at.values && gb[0].values == bt.values;
  bool swapped = ga[0].values == bt.values && gb[0].values == at.values;
  CHECK((direct || swapped));
}

TEST_CASE("meiosis rejects odd group sizes") {
  Rng rng(5);
  std::vector<EegSample> group = {make_sample(2, 8, 0, 0, rng),
                                  make_sample(2, 8, 0, 1, rng),
                                  make_sample(2, 8, 0, 2, rng)};
  CHECK_THROWS_AS(meiosis(group, 3, rng), ContractError);
}

TEST_CASE("meiosis_batch shares one split position and keeps clip ids") {
  Corpus corpus = small_corpus();
  SamplerConfig cfg;
  cfg.clips_per_iteration = 4;
  cfg.samples_per_group = 2;
  Rng rng(6);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  GroupBatch batch = sample_minibatch(corpus, cfg, state, rng);
  REQUIRE(batch.groups.size() == 4);
  AugmentedBatch aug = meiosis_batch(batch, rng);
  CHECK(aug.pairs.size() == 4);
  CHECK(aug.split_position >= 2);
  CHECK(aug.split_position <= corpus.time_len() - 2);
  for (std::size_t i = 0; i < aug.pairs.size(); ++i) {
    for (const auto& s : aug.pairs[i].first) CHECK(s.clip_id == batch.group_clip_ids[i]);
    for (const auto& s : aug.pairs[i].second) CHECK(s.clip_id == batch.group_clip_ids[i]);
  }
}

TEST_CASE("consistent sampler covers each clip once per epoch") {
  Corpus corpus = small_corpus(10, 6);
  SamplerConfig cfg;
  cfg.clips_per_iteration = 4;
  cfg.samples_per_group = 2;
  Rng rng(7);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  std::multiset<int> consumed;
  while (state.remaining() > 0) {
    GroupBatch batch = sample_minibatch(corpus, cfg, state, rng);
    for (std::size_t i = 0; i < batch.groups.size(); ++i) {
      consumed.insert(batch.group_clip_ids[i]);
      // clip-homogeneous with 2Q distinct subjects
      std::set<int> subjects;
      for (const auto& s : batch.groups[i]) {
        CHECK(s.clip_id == batch.group_clip_ids[i]);
        subjects.insert(s.subject_id);
      }
      CHECK(subjects.size() == 4);
    }
  }
  CHECK(consumed.size() == 10);
  std::set<int> unique(consumed.begin(), consumed.end());
  CHECK(unique.size() == 10);
}

TEST_CASE("a lone final clip is consumed but yields an empty batch") {
  Corpus corpus = small_corpus(5, 6);
  SamplerConfig cfg;
  cfg.clips_per_iteration = 4;
  cfg.samples_per_group = 2;
  Rng rng(8);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  GroupBatch first = sample_minibatch(corpus, cfg, state, rng);
  CHECK(first.groups.size() == 4);
  CHECK(state.remaining() == 1);
  GroupBatch second = sample_minibatch(corpus, cfg, state, rng);
  CHECK(second.groups.empty());
  CHECK(state.remaining() == 0);
}

TEST_CASE("infeasible subject demand is a configuration error") {
  Corpus corpus = small_corpus(6, 3);
  SamplerConfig cfg;
  cfg.clips_per_iteration = 2;
  cfg.samples_per_group = 2;  // needs 4 subjects, corpus has 3
  Rng rng(9);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  CHECK_THROWS_AS(sample_minibatch(corpus, cfg, state, rng), ConfigError);
}

TEST_CASE("non-consistent sampler keeps cadence but mixes stimuli") {
  Corpus corpus = small_corpus(12, 6);
  SamplerConfig cfg;
  cfg.clips_per_iteration = 4;
  cfg.samples_per_group = 2;
  Rng rng(10);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  GroupBatch batch = sample_nonconsistent(corpus, cfg, state, rng);
  REQUIRE(batch.groups.size() == 4);
  bool any_heterogeneous = false;
  for (std::size_t i = 0; i < batch.groups.size(); ++i) {
    CHECK(batch.groups[i].size() == 4);
    CHECK(batch.group_clip_ids[i] == -1);
    std::set<int> clips;
    for (const auto& s : batch.groups[i]) clips.insert(s.clip_id);
    if (clips.size() > 1) any_heterogeneous = true;
  }
  CHECK(any_heterogeneous);
}

TEST_CASE("mixup blends linearly") {
  Rng rng(11);
  EegSample a = make_sample(2, 8, 0, 0, rng), b = make_sample(2, 8, 0, 1, rng);
  auto [i1, i2] = mixup_crossover(a, b, 1.0);
  CHECK(i1.values == a.values);
  CHECK(i2.values == b.values);
  auto [h1, h2] = mixup_crossover(a, b, 0.5);
  for (std::size_t k = 0; k < a.values.numel(); ++k) {
    CHECK(h1.values[k] == doctest::Approx(0.5f * (a.values[k] + b.values[k])));
    CHECK(h1.values[k] == h2.values[k]);
  }
  auto [m1, m2] = mixup_crossover(a, b, 0.25);
  for (std::size_t k = 0; k < a.values.numel(); ++k)
    CHECK(m1.values[k] + m2.values[k] ==
          doctest::Approx(a.values[k] + b.values[k]).epsilon(1e-5));
  CHECK_THROWS_AS(mixup_crossover(a, b, 1.5), ContractError);
}

TEST_CASE("augment_batch kNone separates without exchanging data") {
  Corpus corpus = small_corpus();
  SamplerConfig cfg;
  cfg.clips_per_iteration = 2;
  cfg.samples_per_group = 2;
  Rng rng(12);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  GroupBatch batch = sample_minibatch(corpus, cfg, state, rng);
  AugmentedBatch aug = augment_batch(batch, Augmenter::kNone, rng);
  for (std::size_t i = 0; i < aug.pairs.size(); ++i) {
    std::vector<EegSample> all = aug.pairs[i].first;
    all.insert(all.end(), aug.pairs[i].second.begin(), aug.pairs[i].second.end());
    // every output is bit-identical to one distinct input member
    std::vector<bool> used(batch.groups[i].size(), false);
    for (const auto& s : all) {
      bool matched = false;
      for (std::size_t j = 0; j < batch.groups[i].size(); ++j)
        if (!used[j] && s.values == batch.groups[i][j].values) {
          used[j] = true;
          matched = true;
          break;
        }
      CHECK(matched);
    }
  }
}

TEST_CASE("sampling and augmentation are deterministic under a fixed seed") {
  Corpus corpus = small_corpus();
  auto run = [&]() {
    SamplerConfig cfg;
    cfg.clips_per_iteration = 3;
    cfg.samples_per_group = 2;
    Rng rng(13);
    EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
    std::vector<float> trace;
    while (state.remaining() > 0) {
      GroupBatch batch = sample_minibatch(corpus, cfg, state, rng);
      if (batch.groups.size() < 2) continue;
      AugmentedBatch aug = meiosis_batch(batch, rng);
      trace.push_back(static_cast<float>(aug.split_position));
      for (const auto& p : aug.pairs)
        for (const auto& s : p.first) trace.push_back(s.values[0]);
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("batch dump round trip") {
  Corpus corpus = small_corpus();
  SamplerConfig cfg;
  cfg.clips_per_iteration = 3;
  cfg.samples_per_group = 2;
  Rng rng(14);
  EpochState state = make_epoch_state(corpus.clips_in_split(Split::kTrain), rng);
  GroupBatch batch = sample_minibatch(corpus, cfg, state, rng);
  write_batch(batch, "test_batch_rt.bin");
  GroupBatch back = read_batch("test_batch_rt.bin");
  REQUIRE(back.groups.size() == batch.groups.size());
  for (std::size_t i = 0; i < batch.groups.size(); ++i) {
    CHECK(back.group_clip_ids[i] == batch.group_clip_ids[i]);
    for (std::size_t j = 0; j < batch.groups[i].size(); ++j)
      CHECK(back.groups[i][j].values == batch.groups[i][j].values);
  }
  std::remove("test_batch_rt.bin");
}
