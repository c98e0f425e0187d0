#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgmc/tensor.hpp"

namespace sgmc {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

// One stimulus-aligned multichannel window. Values are channels x time; the
// time extent M must leave room for interior crossover split positions.
struct EegSample {
  Tensor<float> values;  // [C, M]
  int clip_id = -1;
  int subject_id = -1;
  // For augmented samples: subject that donated the time prefix. Equals
  // subject_id for raw samples.
  int prefix_subject_id = -1;

  std::size_t channels() const { return values.dim(0); }
  std::size_t time_len() const { return values.dim(1); }
};

// Stimulus-aligned dataset: a clip x subject x channel x time tensor plus
// per-clip labels and split tags.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::size_t n_clips, std::size_t n_subjects, std::size_t channels,
         std::size_t time_len);

  std::size_t n_clips() const { return n_clips_; }
  std::size_t n_subjects() const { return n_subjects_; }
  std::size_t channels() const { return channels_; }
  std::size_t time_len() const { return time_len_; }

  float* sample_data(std::size_t clip, std::size_t subject);
  const float* sample_data(std::size_t clip, std::size_t subject) const;
  std::size_t sample_numel() const { return channels_ * time_len_; }

  EegSample sample(std::size_t clip, std::size_t subject) const;

  bool has_labels() const { return !clip_labels_.empty(); }
  int label_of_clip(std::size_t clip) const;
  void set_labels(std::vector<int> labels);
  int n_classes() const;

  bool has_splits() const { return !split_of_clip_.empty(); }
  Split split_of_clip(std::size_t clip) const;
  void set_splits(std::vector<Split> splits);
  std::vector<std::size_t> clips_in_split(Split s) const;

  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  const std::vector<float>& raw() const { return data_; }
  std::vector<float>& raw() { return data_; }

  bool operator==(const Corpus& other) const;

 private:
  std::size_t n_clips_ = 0, n_subjects_ = 0, channels_ = 0, time_len_ = 0;
  std::vector<float> data_;  // clip-major: [clip][subject][channel][time]
  std::vector<int> clip_labels_;
  std::vector<Split> split_of_clip_;
  std::string provenance_;
};

// Desk-scale stand-in for stimulus-aligned recordings. Each clip draws a
// latent signal from its class's oscillation family; each subject applies a
// fixed mixing matrix and offset on top of it.
struct SyntheticSpec {
  std::size_t n_clips = 32;
  std::size_t n_subjects = 8;
  std::size_t channels = 4;
  std::size_t time_len = 32;
  std::size_t n_classes = 2;
  std::size_t latent_dim = 3;
  double subject_mixing_scale = 1.0;
  double noise_sigma = 1.0;
  double subject_time_shift = 0.5;  // max latent latency, as a fraction of M
  double subject_detune = 0.0;      // max common frequency offset, in bins
  double subject_signal = 0.0;      // amplitude of the per-subject oscillator
  std::uint64_t seed = 0;
};

Corpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Preprocessing steps for externally recorded trials.

// Subtracts the mean of the first n_baseline windows from each remaining
// window; returns the remaining windows.
std::vector<Tensor<float>> baseline_subtract(const std::vector<Tensor<float>>& trial,
                                             std::size_t n_baseline);

// Scales each channel row of a [C, T] trial to unit L2 norm.
Tensor<float> l2_normalize_per_channel(const Tensor<float>& trial);

// Cuts a [C, T] trial into floor(T / window_len) consecutive non-overlapping
// [C, window_len] windows; a trailing partial window is dropped.
std::vector<Tensor<float>> window_segment(const Tensor<float>& trial,
                                          std::size_t window_len);

// Clip-level random partition; counts are round(n * ratio) for val/test with
// the remainder to train, so no stimulus appears in two splits.
void split_by_clip(Corpus& corpus, const double (&ratios)[3], std::uint64_t seed);

// Container file: magic "SGMCCORP", u32 version, dims, then f32 LE payload.
// Labels/splits/provenance go to a text sidecar with suffix ".meta".
void write_corpus(const Corpus& corpus, const std::string& path);
Corpus read_corpus(const std::string& path);

std::string corpus_meta_path(const std::string& path);

}  // namespace sgmc
