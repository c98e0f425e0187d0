#include "sgmc/grouping.hpp"

#include <algorithm>
#include <functional>

#include "sgmc/binio.hpp"
#include "sgmc/error.hpp"

namespace sgmc {

namespace {
constexpr char kBatchMagic[] = "SGMCBTCH";
constexpr std::uint32_t kBatchVersion = 1;

void check_sampler_config(const Corpus& corpus, const SamplerConfig& config) {
  if (config.clips_per_iteration < 1 || config.samples_per_group < 1)
    throw ConfigError("sampler: P and Q must be >= 1");
  if (2 * config.samples_per_group > corpus.n_subjects())
    throw ConfigError("sampler: 2Q = " + std::to_string(2 * config.samples_per_group) +
                      " exceeds subject count " + std::to_string(corpus.n_subjects()));
}

GroupBatch sample_impl(const Corpus& corpus, const SamplerConfig& config,
                       EpochState& state, Rng& rng, bool consistent) {
  check_sampler_config(corpus, config);
  if (state.remaining() == 0)
    throw ContractError("sampler: epoch exhausted");

  std::size_t take = std::min(config.clips_per_iteration, state.remaining());
  std::vector<std::size_t> clips(state.clip_order.begin() + state.cursor,
                                 state.clip_order.begin() + state.cursor + take);
  state.cursor += take;

  GroupBatch batch;
  if (take < 2) return batch;  // a lone group has no negatives; skip it

  std::size_t two_q = 2 * config.samples_per_group;
  std::vector<std::size_t> subjects;
  if (config.shared_subjects)
    subjects = rng.sample_without_replacement(corpus.n_subjects(), two_q);

  std::vector<std::size_t> train_clips;
  if (!consistent) train_clips = state.clip_order;  // draw stimuli from the whole epoch set

  for (std::size_t g = 0; g < take; ++g) {
    if (!config.shared_subjects)
      subjects = rng.sample_without_replacement(corpus.n_subjects(), two_q);
    std::vector<EegSample> group;
    group.reserve(two_q);
    for (std::size_t k = 0; k < two_q; ++k) {
      std::size_t clip = consistent
                             ? clips[g]
                             : train_clips[rng.uniform_u64(train_clips.size())];
      group.push_back(corpus.sample(clip, subjects[k]));
    }
    batch.groups.push_back(std::move(group));
    batch.group_clip_ids.push_back(consistent ? static_cast<int>(clips[g]) : -1);
  }
  return batch;
}
}  // namespace

EpochState make_epoch_state(const std::vector<std::size_t>& clips, Rng& rng) {
  EpochState state;
  state.clip_order = clips;
  rng.shuffle(state.clip_order);
  return state;
}

GroupBatch sample_minibatch(const Corpus& corpus, const SamplerConfig& config,
                            EpochState& state, Rng& rng) {
  return sample_impl(corpus, config, state, rng, config.consistent);
}

GroupBatch sample_nonconsistent(const Corpus& corpus, const SamplerConfig& config,
                                EpochState& state, Rng& rng) {
  return sample_impl(corpus, config, state, rng, false);
}

std::pair<EegSample, EegSample> crossover(const EegSample& a, const EegSample& b,
                                          std::size_t c) {
  check_same_shape(a.values, b.values, "crossover");
  std::size_t M = a.time_len(), C = a.channels();
  if (c < 2 || c > M - 2)
    throw ContractError("crossover: split position " + std::to_string(c) +
                        " outside (1, M-1) for M = " + std::to_string(M));

  EegSample ta, tb;
  ta.values = a.values;
  tb.values = b.values;
  for (std::size_t ch = 0; ch < C; ++ch)
    for (std::size_t t = 0; t < c; ++t)
      std::swap(ta.values[ch * M + t], tb.values[ch * M + t]);
  // Suffix donor keeps the identity tags; the prefix donor is recorded for
  // logging only.
  ta.clip_id = a.clip_id;
  ta.subject_id = a.subject_id;
  ta.prefix_subject_id = b.subject_id;
  tb.clip_id = b.clip_id;
  tb.subject_id = b.subject_id;
  tb.prefix_subject_id = a.subject_id;
  return {std::move(ta), std::move(tb)};
}

std::pair<EegSample, EegSample> mixup_crossover(const EegSample& a, const EegSample& b,
                                                double lambda) {
  check_same_shape(a.values, b.values, "mixup_crossover");
  if (lambda < 0.0 || lambda > 1.0)
    throw ContractError("mixup_crossover: lambda must be in [0,1]");
  EegSample ta = a, tb = b;
  float l = static_cast<float>(lambda);
  for (std::size_t i = 0; i < a.values.numel(); ++i) {
    ta.values[i] = l * a.values[i] + (1.0f - l) * b.values[i];
    tb.values[i] = (1.0f - l) * a.values[i] + l * b.values[i];
  }
  ta.prefix_subject_id = b.subject_id;
  tb.prefix_subject_id = a.subject_id;
  return {std::move(ta), std::move(tb)};
}

namespace {
std::pair<std::vector<EegSample>, std::vector<EegSample>> pair_and_separate(
    const std::vector<EegSample>& group, Rng& rng,
    const std::function<std::pair<EegSample, EegSample>(const EegSample&, const EegSample&)>&
        transform) {
  if (group.size() < 2 || group.size() % 2 != 0)
    throw ContractError("meiosis: group size must be even and >= 2, got " +
                        std::to_string(group.size()));
  std::size_t q = group.size() / 2;

  // Fisher-Yates matching: index k pairs with k+Q.
  std::vector<std::size_t> order(group.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::pair<std::vector<EegSample>, std::vector<EegSample>> out;
  out.first.reserve(q);
  out.second.reserve(q);
  for (std::size_t k = 0; k < q; ++k) {
    auto [ta, tb] = transform(group[order[k]], group[order[k + q]]);
    // Matched partners must land in different output groups.
    if (rng.uniform_u64(2) == 0) {
      out.first.push_back(std::move(ta));
      out.second.push_back(std::move(tb));
    } else {
      out.first.push_back(std::move(tb));
      out.second.push_back(std::move(ta));
    }
  }
  return out;
}
}  // namespace

std::pair<std::vector<EegSample>, std::vector<EegSample>> meiosis(
    const std::vector<EegSample>& group, std::size_t c, Rng& rng) {
  return pair_and_separate(group, rng, [c](const EegSample& a, const EegSample& b) {
    return crossover(a, b, c);
  });
}

AugmentedBatch meiosis_batch(const GroupBatch& batch, Rng& rng) {
  return augment_batch(batch, Augmenter::kCrossover, rng);
}

AugmentedBatch augment_batch(const GroupBatch& batch, Augmenter kind, Rng& rng) {
  if (batch.groups.empty()) throw ContractError("augment_batch: empty batch");
  std::size_t M = batch.groups[0][0].time_len();
  if (M < 4) throw ContractError("augment_batch: M must be >= 4 for interior splits");

  AugmentedBatch out;
  // One split position per iteration, shared by every group.
  out.split_position = 2 + rng.uniform_u64(M - 3);  // uniform over {2, ..., M-2}

  for (const auto& group : batch.groups) {
    switch (kind) {
      case Augmenter::kCrossover:
        out.pairs.push_back(meiosis(group, out.split_position, rng));
        break;
      case Augmenter::kMixup:
        out.pairs.push_back(pair_and_separate(
            group, rng, [&rng](const EegSample& a, const EegSample& b) {
              return mixup_crossover(a, b, rng.uniform());
            }));
        break;
      case Augmenter::kNone:
        out.pairs.push_back(pair_and_separate(
            group, rng, [](const EegSample& a, const EegSample& b) {
              return std::make_pair(a, b);
            }));
        break;
    }
  }
  return out;
}

void write_batch(const GroupBatch& batch, const std::string& path) {
  if (batch.groups.empty()) throw ContractError("write_batch: empty batch");
  std::size_t group_size = batch.groups[0].size();
  std::size_t C = batch.groups[0][0].channels();
  std::size_t M = batch.groups[0][0].time_len();
  binio::Writer w(path);
  w.write_bytes(kBatchMagic);
  w.write_u32(kBatchVersion);
  w.write_u32(static_cast<std::uint32_t>(batch.groups.size()));
  w.write_u32(static_cast<std::uint32_t>(group_size));
  w.write_u32(static_cast<std::uint32_t>(C));
  w.write_u32(static_cast<std::uint32_t>(M));
  for (std::size_t g = 0; g < batch.groups.size(); ++g)
    w.write_u32(static_cast<std::uint32_t>(batch.group_clip_ids[g]));
  for (const auto& group : batch.groups) {
    if (group.size() != group_size) throw ContractError("write_batch: ragged groups");
    for (const auto& s : group) w.write_f32_array(s.values.data(), s.values.numel());
  }
  w.close();
}

GroupBatch read_batch(const std::string& path) {
  binio::Reader r(path);
  r.expect_magic(kBatchMagic);
  std::uint32_t version = r.read_u32();
  if (version != kBatchVersion)
    throw FormatError("unsupported batch version " + std::to_string(version), r.offset() - 4);
  std::size_t n_groups = r.read_u32();
  std::size_t group_size = r.read_u32();
  std::size_t C = r.read_u32();
  std::size_t M = r.read_u32();
  GroupBatch batch;
  for (std::size_t g = 0; g < n_groups; ++g)
    batch.group_clip_ids.push_back(static_cast<int>(r.read_u32()));
  for (std::size_t g = 0; g < n_groups; ++g) {
    std::vector<EegSample> group(group_size);
    for (auto& s : group) {
      s.values = Tensor<float>({C, M});
      r.read_f32_array(s.values.data(), C * M);
      s.clip_id = batch.group_clip_ids[g];
    }
    batch.groups.push_back(std::move(group));
  }
  if (!r.at_eof()) throw FormatError("batch payload longer than declared", r.offset());
  return batch;
}

}  // namespace sgmc
