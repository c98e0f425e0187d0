#include "sgmc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sgmc/binio.hpp"
#include "sgmc/error.hpp"
#include "sgmc/rng.hpp"

namespace sgmc {

namespace {
constexpr char kCorpusMagic[] = "SGMCCORP";
constexpr std::uint32_t kCorpusVersion = 1;
constexpr double kTwoPi = 6.283185307179586;
}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split tag: " + s, 0);
}

Corpus::Corpus(std::size_t n_clips, std::size_t n_subjects, std::size_t channels,
               std::size_t time_len)
    : n_clips_(n_clips), n_subjects_(n_subjects), channels_(channels), time_len_(time_len) {
  if (n_clips == 0 || n_subjects == 0 || channels == 0 || time_len == 0)
    throw ContractError("corpus: all extents must be positive");
  if (time_len < 4)
    throw ContractError("corpus: time extent must be >= 4 for interior crossover positions");
  data_.assign(n_clips * n_subjects * channels * time_len, 0.0f);
}

float* Corpus::sample_data(std::size_t clip, std::size_t subject) {
  return data_.data() + (clip * n_subjects_ + subject) * sample_numel();
}

const float* Corpus::sample_data(std::size_t clip, std::size_t subject) const {
  return data_.data() + (clip * n_subjects_ + subject) * sample_numel();
}

EegSample Corpus::sample(std::size_t clip, std::size_t subject) const {
  if (clip >= n_clips_ || subject >= n_subjects_)
    throw ContractError("corpus: sample index out of range");
  EegSample s;
  const float* src = sample_data(clip, subject);
  s.values = Tensor<float>({channels_, time_len_},
                           std::vector<float>(src, src + sample_numel()));
  s.clip_id = static_cast<int>(clip);
  s.subject_id = static_cast<int>(subject);
  s.prefix_subject_id = s.subject_id;
  return s;
}

int Corpus::label_of_clip(std::size_t clip) const {
  if (!has_labels()) throw ContractError("corpus: no labels present");
  return clip_labels_.at(clip);
}

void Corpus::set_labels(std::vector<int> labels) {
  if (!labels.empty() && labels.size() != n_clips_)
    throw ContractError("corpus: label count must equal clip count or be empty");
  clip_labels_ = std::move(labels);
}

int Corpus::n_classes() const {
  if (!has_labels()) throw ContractError("corpus: no labels present");
  return *std::max_element(clip_labels_.begin(), clip_labels_.end()) + 1;
}

Split Corpus::split_of_clip(std::size_t clip) const {
  if (!has_splits()) throw ContractError("corpus: no split assignment present");
  return split_of_clip_.at(clip);
}

void Corpus::set_splits(std::vector<Split> splits) {
  if (!splits.empty() && splits.size() != n_clips_)
    throw ContractError("corpus: split count must equal clip count or be empty");
  split_of_clip_ = std::move(splits);
}

std::vector<std::size_t> Corpus::clips_in_split(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n_clips_; ++c)
    if (split_of_clip(c) == s) out.push_back(c);
  return out;
}

bool Corpus::operator==(const Corpus& other) const {
  return n_clips_ == other.n_clips_ && n_subjects_ == other.n_subjects_ &&
         channels_ == other.channels_ && time_len_ == other.time_len_ &&
         data_ == other.data_ && clip_labels_ == other.clip_labels_ &&
         split_of_clip_ == other.split_of_clip_ && provenance_ == other.provenance_;
}

Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.n_clips == 0) throw ContractError("synthetic spec: n_clips must be positive");
  if (spec.n_clips < spec.n_classes)
    throw ContractError("synthetic spec: need at least one clip per class");
  if (spec.latent_dim == 0) throw ContractError("synthetic spec: latent_dim must be >= 1");
  if (spec.noise_sigma < 0) throw ContractError("synthetic spec: noise_sigma must be >= 0");

  Rng root(spec.seed);
  std::size_t C = spec.channels, M = spec.time_len, L = spec.latent_dim;
  Corpus corpus(spec.n_clips, spec.n_subjects, C, M);

  // Shared mixing basis; per-subject deviation scaled by subject_mixing_scale.
  Rng base_rng = root.substream("mixing_base");
  std::vector<double> w_base(C * L);
  for (auto& w : w_base) w = base_rng.normal() / std::sqrt(static_cast<double>(L));

  std::vector<std::vector<double>> w_subject(spec.n_subjects);
  std::vector<std::vector<double>> b_subject(spec.n_subjects);
  std::vector<double> shift_subject(spec.n_subjects);
  std::vector<double> detune_subject(spec.n_subjects);
  std::vector<double> sig_freq_subject(spec.n_subjects);
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    Rng srng = root.substream("subject", s);
    w_subject[s].resize(C * L);
    b_subject[s].resize(C);
    for (std::size_t i = 0; i < C * L; ++i)
      w_subject[s][i] =
          w_base[i] + spec.subject_mixing_scale * srng.normal() / std::sqrt(static_cast<double>(L));
    for (std::size_t c = 0; c < C; ++c)
      b_subject[s][c] = spec.subject_mixing_scale * 0.1 * srng.normal();
    // Per-subject latency: a circular time shift of the latent signal. This
    // decorrelates raw waveforms across subjects while leaving the
    // delay-invariant amplitude spectrum shared.
    shift_subject[s] =
        spec.subject_time_shift * static_cast<double>(M) * srng.uniform(0.0, 1.0);
    // Per-subject detune: all latent frequencies of a subject are offset by a
    // common sub-band amount, so even the exact spectral bins differ across
    // subjects; only the amplitude profile over the component ranks is shared.
    detune_subject[s] = spec.subject_detune * srng.uniform(0.0, 1.0);
    // Personal oscillator in a reserved high band: a loud subject signature
    // that carries no stimulus information.
    sig_freq_subject[s] =
        (0.75 + 0.2 * srng.uniform(0.0, 1.0)) * 0.5 * static_cast<double>(M);
  }

  std::vector<int> labels(spec.n_clips);
  for (std::size_t v = 0; v < spec.n_clips; ++v) {
    int cls = static_cast<int>(v % spec.n_classes);
    labels[v] = cls;
    Rng vrng = root.substream("clip", v);
    // Class sets the oscillation frequencies; the clip sets the phases and
    // the amplitude profile over those frequencies.
    std::vector<double> freq(L), phase(L), amp(L);
    for (std::size_t j = 0; j < L; ++j) {
      // Each class owns a contiguous frequency block; two-bin spacing leaves
      // room for sub-band subject detune without blurring the class bands.
      freq[j] = 1.0 + 2.0 * (static_cast<double>(cls) * static_cast<double>(L) +
                             static_cast<double>(j));
      phase[j] = vrng.uniform(0.0, kTwoPi);
      amp[j] = vrng.uniform(0.3, 1.0);
    }
    std::vector<double> psi(L * M);
    for (std::size_t s = 0; s < spec.n_subjects; ++s) {
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t m = 0; m < M; ++m)
          psi[j * M + m] =
              amp[j] * std::sin(kTwoPi * (freq[j] + detune_subject[s]) *
                                    (static_cast<double>(m) + shift_subject[s]) /
                                    static_cast<double>(M) +
                                phase[j]);
      Rng nrng = root.substream("noise", v * spec.n_subjects + s);
      double sig_phase = nrng.uniform(0.0, kTwoPi);  // random per sample
      float* dst = corpus.sample_data(v, s);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t m = 0; m < M; ++m) {
          double x = b_subject[s][c];
          for (std::size_t j = 0; j < L; ++j)
            x += w_subject[s][c * L + j] * psi[j * M + m];
          x += spec.subject_signal *
               std::sin(kTwoPi * sig_freq_subject[s] * static_cast<double>(m) /
                            static_cast<double>(M) +
                        sig_phase);
          if (spec.noise_sigma > 0) x += spec.noise_sigma * nrng.normal();
          dst[c * M + m] = static_cast<float>(x);
        }
    }
  }
  corpus.set_labels(std::move(labels));

  std::ostringstream prov;
  prov << "generator=synthetic seed=" << spec.seed << " n_clips=" << spec.n_clips
       << " n_subjects=" << spec.n_subjects << " C=" << C << " M=" << M
       << " n_classes=" << spec.n_classes << " latent_dim=" << L
       << " mixing=" << spec.subject_mixing_scale << " sigma=" << spec.noise_sigma
       << " time_shift=" << spec.subject_time_shift
       << " detune=" << spec.subject_detune
       << " subject_signal=" << spec.subject_signal;
  corpus.set_provenance(prov.str());
  return corpus;
}

std::vector<Tensor<float>> baseline_subtract(const std::vector<Tensor<float>>& trial,
                                             std::size_t n_baseline) {
  if (n_baseline < 1) throw ContractError("baseline_subtract: n_baseline must be >= 1");
  if (trial.size() <= n_baseline)
    throw ContractError("baseline_subtract: need more windows than baseline windows");
  for (std::size_t i = 1; i < trial.size(); ++i)
    check_same_shape(trial[i], trial[0], "baseline_subtract");

  Tensor<float> baseline = zeros_like(trial[0]);
  for (std::size_t i = 0; i < n_baseline; ++i)
    for (std::size_t k = 0; k < baseline.numel(); ++k) baseline[k] += trial[i][k];
  float inv = 1.0f / static_cast<float>(n_baseline);
  for (std::size_t k = 0; k < baseline.numel(); ++k) baseline[k] *= inv;

  std::vector<Tensor<float>> out;
  out.reserve(trial.size() - n_baseline);
  for (std::size_t i = n_baseline; i < trial.size(); ++i) {
    Tensor<float> seg = trial[i];
    for (std::size_t k = 0; k < seg.numel(); ++k) seg[k] -= baseline[k];
    out.push_back(std::move(seg));
  }
  return out;
}

Tensor<float> l2_normalize_per_channel(const Tensor<float>& trial) {
  if (trial.ndim() != 2)
    throw ShapeError("l2_normalize_per_channel: expected [C,T], got " +
                     shape_str(trial.shape()));
  std::size_t C = trial.dim(0), T = trial.dim(1);
  Tensor<float> out = trial;
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += double(trial[c * T + t]) * trial[c * T + t];
    double norm = std::sqrt(s);
    if (norm == 0.0)
      throw DegenerateError("l2_normalize_per_channel: channel " + std::to_string(c) +
                            " has zero norm");
    float inv = static_cast<float>(1.0 / norm);
    for (std::size_t t = 0; t < T; ++t) out[c * T + t] *= inv;
  }
  return out;
}

std::vector<Tensor<float>> window_segment(const Tensor<float>& trial,
                                          std::size_t window_len) {
  if (trial.ndim() != 2)
    throw ShapeError("window_segment: expected [C,T], got " + shape_str(trial.shape()));
  if (window_len == 0) throw ContractError("window_segment: window_len must be positive");
  std::size_t C = trial.dim(0), T = trial.dim(1);
  if (T < window_len)
    throw ContractError("window_segment: trial shorter than window length");
  std::size_t n = T / window_len;
  std::vector<Tensor<float>> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    Tensor<float> win({C, window_len});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < window_len; ++t)
        win[c * window_len + t] = trial[c * T + w * window_len + t];
    out.push_back(std::move(win));
  }
  return out;
}

void split_by_clip(Corpus& corpus, const double (&ratios)[3], std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ContractError("split_by_clip: ratios must sum to 1");
  if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0)
    throw ContractError("split_by_clip: ratios must be non-negative");
  std::size_t n = corpus.n_clips();
  if (n < 3) throw ContractError("split_by_clip: need at least 3 clips");

  std::size_t n_val = static_cast<std::size_t>(std::lround(ratios[1] * static_cast<double>(n)));
  std::size_t n_test = static_cast<std::size_t>(std::lround(ratios[2] * static_cast<double>(n)));
  if (n_val + n_test >= n) throw ContractError("split_by_clip: no clips left for training");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).substream("split");
  rng.shuffle(order);

  std::vector<Split> splits(n, Split::kTrain);
  for (std::size_t i = 0; i < n_val; ++i) splits[order[i]] = Split::kVal;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) splits[order[i]] = Split::kTest;
  corpus.set_splits(std::move(splits));
}

std::string corpus_meta_path(const std::string& path) {
  std::size_t slash = path.find_last_of("/\\");
  std::size_t dot = path.find_last_of('.');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
    return path.substr(0, dot) + ".meta";
  return path + ".meta";
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  binio::Writer w(path);
  w.write_bytes(kCorpusMagic);
  w.write_u32(kCorpusVersion);
  w.write_u32(static_cast<std::uint32_t>(corpus.n_clips()));
  w.write_u32(static_cast<std::uint32_t>(corpus.n_subjects()));
  w.write_u32(static_cast<std::uint32_t>(corpus.channels()));
  w.write_u32(static_cast<std::uint32_t>(corpus.time_len()));
  w.write_f32_array(corpus.raw().data(), corpus.raw().size());
  w.close();

  std::ofstream meta(corpus_meta_path(path));
  if (!meta) throw Error("cannot open meta sidecar for writing: " + corpus_meta_path(path));
  if (!corpus.provenance().empty()) meta << "provenance=" << corpus.provenance() << "\n";
  if (corpus.has_labels())
    for (std::size_t c = 0; c < corpus.n_clips(); ++c)
      meta << "label." << c << "=" << corpus.label_of_clip(c) << "\n";
  if (corpus.has_splits())
    for (std::size_t c = 0; c < corpus.n_clips(); ++c)
      meta << "split." << c << "=" << split_name(corpus.split_of_clip(c)) << "\n";
}

Corpus read_corpus(const std::string& path) {
  binio::Reader r(path);
  r.expect_magic(kCorpusMagic);
  std::uint32_t version = r.read_u32();
  if (version != kCorpusVersion)
    throw FormatError("unsupported corpus version " + std::to_string(version), r.offset() - 4);
  std::uint64_t n_clips = r.read_u32();
  std::uint64_t n_subjects = r.read_u32();
  std::uint64_t C = r.read_u32();
  std::uint64_t M = r.read_u32();
  std::uint64_t numel = n_clips * n_subjects * C * M;
  if (numel > (1ull << 32))
    throw FormatError("corpus dimensions overflow sane payload size", r.offset());

  Corpus corpus(n_clips, n_subjects, C, M);
  r.read_f32_array(corpus.raw().data(), numel);
  if (!r.at_eof())
    throw FormatError("corpus payload longer than header-declared size", r.offset());

  std::ifstream meta(corpus_meta_path(path));
  if (meta) {
    std::vector<int> labels;
    std::vector<Split> splits;
    std::string line;
    while (std::getline(meta, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      if (key == "provenance") {
        corpus.set_provenance(value);
      } else if (key.rfind("label.", 0) == 0) {
        std::size_t clip = std::stoul(key.substr(6));
        if (labels.empty()) labels.assign(n_clips, -1);
        labels.at(clip) = std::stoi(value);
      } else if (key.rfind("split.", 0) == 0) {
        std::size_t clip = std::stoul(key.substr(6));
        if (splits.empty()) splits.assign(n_clips, Split::kTrain);
        splits.at(clip) = split_from_name(value);
      }
    }
    if (!labels.empty()) corpus.set_labels(std::move(labels));
    if (!splits.empty()) corpus.set_splits(std::move(splits));
  }
  return corpus;
}

}  // namespace sgmc
