#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgmc/corpus.hpp"
#include "sgmc/rng.hpp"

namespace sgmc {

struct SamplerConfig {
  std::size_t clips_per_iteration = 8;  // P
  std::size_t samples_per_group = 2;    // Q; raw groups hold 2Q members
  bool consistent = true;               // stimulus-aligned grouping
  bool shared_subjects = true;          // one 2Q subject subset per iteration
};

struct GroupBatch {
  std::vector<std::vector<EegSample>> groups;  // each holds 2Q samples
  std::vector<int> group_clip_ids;             // -1 for clip-heterogeneous groups
};

struct AugmentedBatch {
  // One (A, B) pair per input group; each side holds Q samples.
  std::vector<std::pair<std::vector<EegSample>, std::vector<EegSample>>> pairs;
  std::size_t split_position = 0;  // the shared c for this iteration
};

// Clip consumption order for one epoch. Every training clip is consumed
// exactly once per epoch.
struct EpochState {
  std::vector<std::size_t> clip_order;
  std::size_t cursor = 0;

  std::size_t remaining() const { return clip_order.size() - cursor; }
};

EpochState make_epoch_state(const std::vector<std::size_t>& clips, Rng& rng);

// Takes the next min(P, remaining) clips off the epoch permutation and fills
// each group with 2Q samples of distinct subjects. If exactly one clip
// remains it is consumed and an empty batch is returned (a single group has
// no negatives). Non-consistent mode keeps the iteration cadence but fills
// groups with samples of uniformly random clips.
GroupBatch sample_minibatch(const Corpus& corpus, const SamplerConfig& config,
                            EpochState& state, Rng& rng);

// Ablation sampler: as sample_minibatch with consistency off.
GroupBatch sample_nonconsistent(const Corpus& corpus, const SamplerConfig& config,
                                EpochState& state, Rng& rng);

// Exchanges the first c time points of two equally shaped samples.
// Requires 2 <= c <= M-2.
std::pair<EegSample, EegSample> crossover(const EegSample& a, const EegSample& b,
                                          std::size_t c);

// Blends two samples: (lambda*A + (1-lambda)*B, (1-lambda)*A + lambda*B).
std::pair<EegSample, EegSample> mixup_crossover(const EegSample& a, const EegSample& b,
                                                double lambda);

enum class Augmenter { kCrossover, kMixup, kNone };

// Randomly matches the 2Q members into Q pairs, applies crossover with the
// shared split position, and separates each pair's outputs into different
// groups with a random side assignment.
std::pair<std::vector<EegSample>, std::vector<EegSample>> meiosis(
    const std::vector<EegSample>& group, std::size_t c, Rng& rng);

// One shared split position for every group of the batch.
AugmentedBatch meiosis_batch(const GroupBatch& batch, Rng& rng);

// Generalized augmentation used by the ablation variants. kNone skips the
// exchange step and only separates; kMixup draws lambda ~ U(0,1) per pair.
AugmentedBatch augment_batch(const GroupBatch& batch, Augmenter kind, Rng& rng);

// Debug dump of a group batch, same payload encoding as the corpus format.
void write_batch(const GroupBatch& batch, const std::string& path);
GroupBatch read_batch(const std::string& path);

}  // namespace sgmc
