#include "freqtrain/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "freqtrain/optim.hpp"
#include "freqtrain/parallel.hpp"
#include "freqtrain/proxy.hpp"
#include "freqtrain/shard.hpp"

namespace freqtrain {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- names, ids, seeds ----

const char* config_name(TrainConfig c) {
  switch (c) {
    case TrainConfig::FullySupervised: return "fully_supervised";
    case TrainConfig::FixedFe: return "fixed_fe";
    case TrainConfig::FinetunedFe: return "finetuned_fe";
    case TrainConfig::UntrainedFe: return "untrained_fe";
  }
  return "?";
}

TrainConfig config_from_name(const std::string& name) {
  if (name == "fully_supervised") return TrainConfig::FullySupervised;
  if (name == "fixed_fe") return TrainConfig::FixedFe;
  if (name == "finetuned_fe") return TrainConfig::FinetunedFe;
  if (name == "untrained_fe") return TrainConfig::UntrainedFe;
  throw HarnessError("unknown training configuration: " + name);
}

namespace {

json hyper_to_json(const Hyperparams& h) {
  json j;
  j["pretrain_epochs"] = h.pretrain_epochs;
  j["pretrain_lr"] = h.pretrain_lr;
  j["pretrain_batch"] = h.pretrain_batch;
  j["n_synth_train"] = h.n_synth_train;
  j["n_synth_val"] = h.n_synth_val;
  j["bin_f_min"] = h.bin_f_min;
  j["bin_f_max"] = h.bin_f_max;
  j["finetune_max_epochs"] = h.finetune_max_epochs;
  j["patience"] = h.patience;
  j["finetune_lr"] = h.finetune_lr;
  j["weight_decay"] = h.weight_decay;
  j["finetune_batch"] = h.finetune_batch;
  j["clip_norm"] = h.clip_norm;
  j["filters"] = h.model.filters;
  j["lstm_hidden"] = h.model.lstm_hidden;
  j["dropout"] = h.model.dropout;
  j["n_bins"] = h.model.n_bins;
  j["seq_len"] = h.model.seq_len;
  return j;
}

void hyper_from_json(const json& j, Hyperparams& h) {
  h.pretrain_epochs = j.value("pretrain_epochs", h.pretrain_epochs);
  h.pretrain_lr = j.value("pretrain_lr", h.pretrain_lr);
  h.pretrain_batch = j.value("pretrain_batch", h.pretrain_batch);
  h.n_synth_train = j.value("n_synth_train", h.n_synth_train);
  h.n_synth_val = j.value("n_synth_val", h.n_synth_val);
  h.bin_f_min = j.value("bin_f_min", h.bin_f_min);
  h.bin_f_max = j.value("bin_f_max", h.bin_f_max);
  h.finetune_max_epochs = j.value("finetune_max_epochs", h.finetune_max_epochs);
  h.patience = j.value("patience", h.patience);
  h.finetune_lr = j.value("finetune_lr", h.finetune_lr);
  h.weight_decay = j.value("weight_decay", h.weight_decay);
  h.finetune_batch = j.value("finetune_batch", h.finetune_batch);
  h.clip_norm = j.value("clip_norm", h.clip_norm);
  h.model.filters = j.value("filters", h.model.filters);
  h.model.lstm_hidden = j.value("lstm_hidden", h.model.lstm_hidden);
  h.model.dropout = j.value("dropout", h.model.dropout);
  h.model.n_bins = j.value("n_bins", h.model.n_bins);
  h.model.seq_len = j.value("seq_len", h.model.seq_len);
}

json proxy_to_json(const ProxyConfig& p) {
  json j;
  j["train_recordings"] = p.train_recordings;
  j["val_recordings"] = p.val_recordings;
  j["test_recordings"] = p.test_recordings;
  j["epochs_per_recording"] = p.epochs_per_recording;
  j["n_bins"] = p.n_bins;
  j["f_min"] = p.f_min;
  j["f_max"] = p.f_max;
  return j;
}

void proxy_from_json(const json& j, ProxyConfig& p) {
  p.train_recordings = j.value("train_recordings", p.train_recordings);
  p.val_recordings = j.value("val_recordings", p.val_recordings);
  p.test_recordings = j.value("test_recordings", p.test_recordings);
  p.epochs_per_recording = j.value("epochs_per_recording", p.epochs_per_recording);
  p.n_bins = j.value("n_bins", p.n_bins);
  p.f_min = j.value("f_min", p.f_min);
  p.f_max = j.value("f_max", p.f_max);
}

json spec_to_json(const ExperimentSpec& s) {
  json j;
  j["configuration"] = config_name(s.configuration);
  j["seed"] = s.seed;
  j["repetition"] = s.repetition;
  j["fold"] = s.fold;
  j["n_subjects"] = s.n_subjects ? json(*s.n_subjects) : json(nullptr);
  j["n_samples"] = s.n_samples ? json(*s.n_samples) : json(nullptr);
  j["n_synthetic"] = s.n_synthetic ? json(*s.n_synthetic) : json(nullptr);
  j["data"] = s.data;
  j["splits_path"] = s.splits_path;
  j["proxy"] = proxy_to_json(s.proxy);
  j["hyper"] = hyper_to_json(s.hyper);
  return j;
}

std::optional<int> opt_int_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<int>();
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

enum : uint64_t {
  kStreamPretrainData = 0x70726564,   // "pred"
  kStreamPretrainInit = 0x70726569,   // "prei"
  kStreamPretrainShuffle = 0x70726573,
  kStreamPretrainDropout = 0x70726564 + 0x64,
  kStreamFinetuneInit = 0x66746969,
  kStreamFinetuneShuffle = 0x66746973,
  kStreamFinetuneDropout = 0x66746964,
  kStreamSubsample = 0x73756273,
  kStreamDataSeed = 0x64617461,
  kStreamInitSeed = 0x696e6974,
  kStreamPretrainSeed = 0x70747261,
};

uint64_t mix_seed(uint64_t base, std::initializer_list<uint64_t> words) {
  Rng r = Rng::derive(base, words);
  return r.next_u64();
}

}  // namespace

std::string spec_canonical_json(const ExperimentSpec& spec) {
  return spec_to_json(spec).dump();  // nlohmann objects are key-sorted
}

std::string experiment_spec_to_json(const ExperimentSpec& spec) {
  return spec_to_json(spec).dump(2);
}

ExperimentSpec parse_experiment_spec_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw HarnessError(std::string("bad experiment config: ") + e.what());
  }
  ExperimentSpec s;
  if (j.contains("configuration")) s.configuration = config_from_name(j.at("configuration"));
  s.seed = j.value("seed", s.seed);
  s.repetition = j.value("repetition", s.repetition);
  s.fold = j.value("fold", s.fold);
  s.n_subjects = opt_int_from(j, "n_subjects");
  s.n_samples = opt_int_from(j, "n_samples");
  s.n_synthetic = opt_int_from(j, "n_synthetic");
  s.data = j.value("data", s.data);
  s.splits_path = j.value("splits_path", s.splits_path);
  if (j.contains("proxy")) proxy_from_json(j.at("proxy"), s.proxy);
  if (j.contains("hyper")) hyper_from_json(j.at("hyper"), s.hyper);
  return s;
}

MatrixGrid parse_matrix_grid_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw HarnessError(std::string("bad grid config: ") + e.what());
  }
  MatrixGrid g;
  if (!j.contains("configurations")) throw HarnessError("grid: configurations required");
  for (const auto& name : j.at("configurations")) {
    g.configurations.push_back(config_from_name(name.get<std::string>()));
  }
  g.repetitions = j.value("repetitions", g.repetitions);
  g.folds = j.value("folds", g.folds);
  auto opt_list = [&](const char* key, std::vector<std::optional<int>>& out) {
    if (!j.contains(key)) return;
    out.clear();
    for (const auto& v : j.at(key)) {
      out.push_back(v.is_null() ? std::optional<int>{} : std::optional<int>{v.get<int>()});
    }
  };
  opt_list("n_synthetic", g.n_synthetic);
  opt_list("n_subjects", g.n_subjects);
  opt_list("n_samples", g.n_samples);
  g.base_seed = j.value("base_seed", g.base_seed);
  g.data = j.value("data", g.data);
  g.splits_path = j.value("splits_path", g.splits_path);
  if (j.contains("proxy")) proxy_from_json(j.at("proxy"), g.proxy);
  if (j.contains("hyper")) hyper_from_json(j.at("hyper"), g.hyper);
  return g;
}

std::string spec_run_id(const ExperimentSpec& spec) {
  return hex64(fnv1a64(spec_canonical_json(spec)));
}

uint64_t data_seed_for(uint64_t base_seed, int repetition, int fold) {
  return mix_seed(base_seed, {kStreamDataSeed, static_cast<uint64_t>(repetition),
                              static_cast<uint64_t>(fold)});
}

uint64_t init_seed_for(uint64_t base_seed, int repetition, int fold) {
  return mix_seed(base_seed, {kStreamInitSeed, static_cast<uint64_t>(repetition),
                              static_cast<uint64_t>(fold)});
}

std::string results_root() {
  if (const char* env = std::getenv("FREQTRAIN_RESULTS")) return env;
  return "results";
}

// ---- cross-validation ----

CvSplit make_cv_splits(const std::vector<SubjectInfo>& subjects, int n_folds, uint64_t seed) {
  if (n_folds < 2) throw HarnessError("make_cv_splits: need at least 2 folds");
  if (static_cast<int>(subjects.size()) < n_folds) {
    throw HarnessError("make_cv_splits: fewer subjects (" + std::to_string(subjects.size()) +
                       ") than folds (" + std::to_string(n_folds) + ")");
  }
  std::map<std::string, std::vector<std::string>> by_group;
  std::set<std::string> seen;
  for (const auto& s : subjects) {
    if (!seen.insert(s.id).second) {
      throw HarnessError("make_cv_splits: duplicate subject id " + s.id);
    }
    by_group[s.group].push_back(s.id);
  }

  CvSplit split;
  split.fold_subjects.assign(static_cast<size_t>(n_folds), {});
  split.fold_validation.assign(static_cast<size_t>(n_folds), {});
  Rng rng = Rng::derive(seed, {0x63767370u});  // "cvsp"
  // The round-robin continues across groups; restarting at fold 0 per group
  // would pile small groups onto the early folds and can leave folds empty.
  size_t next_fold = 0;
  for (auto& [group, ids] : by_group) {
    std::sort(ids.begin(), ids.end());  // input order must not matter
    rng.shuffle(ids);
    for (auto& id : ids) {
      split.fold_subjects[next_fold % static_cast<size_t>(n_folds)].push_back(std::move(id));
      ++next_fold;
    }
  }
  for (int f = 0; f < n_folds; ++f) {
    auto fold = split.fold_subjects[static_cast<size_t>(f)];  // copy, then shuffle
    if (fold.empty()) throw HarnessError("make_cv_splits: fold " + std::to_string(f) + " is empty");
    rng.shuffle(fold);
    const size_t n_val = std::max<size_t>(1, (fold.size() + 9) / 10);  // ~10%, at least 1
    split.fold_validation[static_cast<size_t>(f)].assign(fold.begin(),
                                                         fold.begin() + static_cast<int64_t>(n_val));
    std::sort(split.fold_validation[static_cast<size_t>(f)].begin(),
              split.fold_validation[static_cast<size_t>(f)].end());
    std::sort(split.fold_subjects[static_cast<size_t>(f)].begin(),
              split.fold_subjects[static_cast<size_t>(f)].end());
  }
  return split;
}

SplitMembers split_members(const CvSplit& split, int test_fold) {
  const int n_folds = static_cast<int>(split.fold_subjects.size());
  if (test_fold < 0 || test_fold >= n_folds) {
    throw HarnessError("split_members: fold index out of range");
  }
  SplitMembers out;
  for (int f = 0; f < n_folds; ++f) {
    const auto& fold = split.fold_subjects[static_cast<size_t>(f)];
    const auto& val = split.fold_validation[static_cast<size_t>(f)];
    const std::set<std::string> val_set(val.begin(), val.end());
    if (f == test_fold) {
      // The test fold's reserved validation subjects are withheld entirely.
      for (const auto& s : fold) {
        if (!val_set.count(s)) out.test.push_back(s);
      }
    } else {
      for (const auto& s : fold) {
        (val_set.count(s) ? out.validation : out.train).push_back(s);
      }
    }
  }
  return out;
}

// ---- reduction ----

std::vector<size_t> subsample_training_data(const std::vector<EpochRecord>& pool,
                                            int n_subjects, int n_samples, uint64_t seed) {
  std::vector<std::string> subjects;
  {
    std::set<std::string> uniq;
    for (const auto& e : pool) {
      if (e.stage) uniq.insert(e.subject_id);
    }
    subjects.assign(uniq.begin(), uniq.end());
  }
  if (subjects.empty()) throw HarnessError("subsample: pool has no labeled epochs");

  Rng rng = Rng::derive(seed, {kStreamSubsample});
  std::set<std::string> chosen;
  if (n_subjects > 0) {
    if (n_subjects > static_cast<int>(subjects.size())) {
      throw HarnessError("subsample: requested " + std::to_string(n_subjects) +
                         " subjects, pool has " + std::to_string(subjects.size()));
    }
    rng.shuffle(subjects);
    chosen.insert(subjects.begin(), subjects.begin() + n_subjects);
  } else {
    chosen.insert(subjects.begin(), subjects.end());
  }

  std::vector<size_t> candidates;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].stage && chosen.count(pool[i].subject_id)) candidates.push_back(i);
  }
  if (n_samples <= 0) return candidates;
  if (n_samples > static_cast<int>(candidates.size())) {
    throw HarnessError("subsample: requested " + std::to_string(n_samples) +
                       " samples, chosen subjects have " + std::to_string(candidates.size()));
  }

  // Uniform draw without class stratification, redrawn until all 5 stages
  // appear at least once.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto order = candidates;
    rng.shuffle(order);
    std::vector<size_t> pick(order.begin(), order.begin() + n_samples);
    std::array<bool, kNumStages> seen{};
    for (size_t idx : pick) seen[static_cast<size_t>(*pool[idx].stage)] = true;
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
      std::sort(pick.begin(), pick.end());
      return pick;
    }
  }
  throw HarnessError("subsample: could not draw a sample set covering all 5 stages");
}

int64_t duplicate_for_constant_updates(int64_t n_reduced, int64_t n_full) {
  if (n_reduced < 1) throw HarnessError("duplication: reduced size must be >= 1");
  if (n_full < n_reduced) {
    throw HarnessError("duplication: full size smaller than reduced size");
  }
  return n_full / n_reduced;
}

// ---- sequences ----

std::vector<SequenceSample> assemble_sequences(const std::vector<EpochRecord>& pool,
                                               int seq_len) {
  if (seq_len < 1 || seq_len % 2 == 0) {
    throw HarnessError("assemble_sequences: seq_len must be odd and positive");
  }
  // Group by recording in first-appearance order; order epochs by index.
  std::vector<std::string> rec_order;
  std::unordered_map<std::string, std::vector<size_t>> by_rec;
  for (size_t i = 0; i < pool.size(); ++i) {
    auto& v = by_rec[pool[i].recording_id];
    if (v.empty()) rec_order.push_back(pool[i].recording_id);
    v.push_back(i);
  }
  const int half = seq_len / 2;
  std::vector<SequenceSample> out;
  for (const auto& rec : rec_order) {
    auto& idxs = by_rec[rec];
    std::sort(idxs.begin(), idxs.end(),
              [&](size_t a, size_t b) { return pool[a].index < pool[b].index; });
    const int n = static_cast<int>(idxs.size());
    for (int pos = 0; pos < n; ++pos) {
      const EpochRecord& center = pool[idxs[static_cast<size_t>(pos)]];
      if (!center.stage) continue;
      SequenceSample seq;
      seq.window.resize(static_cast<size_t>(seq_len), nullptr);
      for (int o = -half; o <= half; ++o) {
        const int p = pos + o;
        if (p >= 0 && p < n) {
          seq.window[static_cast<size_t>(o + half)] = &pool[idxs[static_cast<size_t>(p)]];
        }
      }
      seq.target_stage = *center.stage;
      seq.center = &center;
      out.push_back(std::move(seq));
    }
  }
  return out;
}

// ---- pretraining ----

namespace {

// Fills a [count, 3, 3000] buffer with generated samples; parallel over items.
void build_synth_batch(const SyntheticDataset& ds, const std::vector<uint64_t>& sample_ids,
                       std::vector<double>& signal_buf, std::vector<double>& label_buf,
                       int n_bins) {
  const size_t item = static_cast<size_t>(kSynthChannels) * kEpochSamples;
  signal_buf.resize(sample_ids.size() * item);
  label_buf.resize(sample_ids.size() * static_cast<size_t>(n_bins));
  parallel_for(static_cast<int64_t>(sample_ids.size()), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const SyntheticSample s = ds.at(sample_ids[static_cast<size_t>(i)]);
      std::copy(s.signal.begin(), s.signal.end(),
                signal_buf.begin() + static_cast<size_t>(i) * item);
      for (int b = 0; b < n_bins; ++b) {
        label_buf[static_cast<size_t>(i) * n_bins + b] = s.label[static_cast<size_t>(b)];
      }
    }
  });
}

struct BinEvalAccumulator {
  int64_t matches = 0;
  int64_t total = 0;
  std::vector<int64_t> per_bin_match;
  std::vector<int64_t> per_bin_total;

  explicit BinEvalAccumulator(int n_bins)
      : per_bin_match(static_cast<size_t>(n_bins), 0),
        per_bin_total(static_cast<size_t>(n_bins), 0) {}

  void add(const std::vector<double>& labels, const std::vector<uint8_t>& preds, int n_bins) {
    const size_t rows = labels.size() / static_cast<size_t>(n_bins);
    for (size_t r = 0; r < rows; ++r) {
      for (int b = 0; b < n_bins; ++b) {
        const size_t i = r * static_cast<size_t>(n_bins) + static_cast<size_t>(b);
        const bool match = (labels[i] > 0.5) == (preds[i] != 0);
        matches += match;
        per_bin_match[static_cast<size_t>(b)] += match;
        per_bin_total[static_cast<size_t>(b)] += 1;
      }
      total += n_bins;
    }
  }
};

}  // namespace

PretrainResult pretrain(const PretrainSpec& spec) {
  const Hyperparams& hp = spec.hyper;
  ModelConfig cfg = hp.model;
  const BinScheme scheme = bin_edges(cfg.n_bins, hp.bin_f_min, hp.bin_f_max);

  const int n_nominal = hp.n_synth_train;
  const int n_distinct = spec.n_synthetic.value_or(n_nominal);
  if (n_distinct < 1) throw HarnessError("pretrain: n_synthetic must be >= 1");

  const uint64_t data_seed = mix_seed(spec.seed, {kStreamPretrainData});
  SyntheticDataset ds(data_seed, static_cast<uint64_t>(n_nominal) + hp.n_synth_val, scheme);
  const auto train_map = resample_indices(static_cast<size_t>(n_distinct),
                                          static_cast<size_t>(n_nominal));

  PretrainResult res;
  res.params = init_params(cfg, mix_seed(spec.seed, {kStreamPretrainInit}),
                           /*with_pretrain_head=*/true, /*with_staging_head=*/false);
  AdamState adam;
  adam.learning_rate = hp.pretrain_lr;
  adam.weight_decay = 0.0;
  Rng dropout_rng = Rng::derive(spec.seed, {kStreamPretrainDropout});

  // Validation samples are fixed across diversity sweeps: indices
  // n_nominal .. n_nominal + n_val of the same stream.
  std::vector<uint64_t> val_ids(static_cast<size_t>(hp.n_synth_val));
  for (size_t j = 0; j < val_ids.size(); ++j) {
    val_ids[j] = static_cast<uint64_t>(n_nominal) + j;
  }
  std::vector<double> val_signals, val_labels;
  build_synth_batch(ds, val_ids, val_signals, val_labels, cfg.n_bins);

  std::vector<size_t> order(train_map.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int64_t step = 0;
  for (int epoch = 0; epoch < hp.pretrain_epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(spec.seed, {kStreamPretrainShuffle,
                                              static_cast<uint64_t>(epoch)});
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t loss_count = 0;
    BinEvalAccumulator train_acc(cfg.n_bins);
    std::vector<double> sig_buf, lab_buf;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(hp.pretrain_batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(hp.pretrain_batch));
      std::vector<uint64_t> ids;
      ids.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        ids.push_back(static_cast<uint64_t>(train_map[order[i]]));
      }
      build_synth_batch(ds, ids, sig_buf, lab_buf, cfg.n_bins);
      const int b = static_cast<int>(ids.size());
      Tensor x = Tensor::from_values({b, kSynthChannels, kEpochSamples}, sig_buf);
      Tensor y = Tensor::from_values({b, cfg.n_bins}, lab_buf);

      Tensor feats = extract_features(res.params, x, cfg, /*train=*/true, &dropout_rng);
      Tensor probs = predict_bin_probs(res.params, feats, cfg);
      Tensor loss = bce_loss(y, probs);
      const double loss_v = loss.item();
      if (!std::isfinite(loss_v)) {
        throw HarnessError("pretrain: non-finite loss at step " + std::to_string(step));
      }
      res.params.zero_grads();
      backward(loss);
      adam_step(res.params, adam);

      if (res.first_step_losses.size() < 50) res.first_step_losses.push_back(loss_v);
      loss_sum += loss_v * b;
      loss_count += b;
      train_acc.add(lab_buf, threshold_bins(probs), cfg.n_bins);
      ++step;
    }

    // Validation pass in eval mode.
    PretrainEpochLog log;
    log.train_loss = loss_sum / static_cast<double>(loss_count);
    log.train_hamming = static_cast<double>(train_acc.matches) / train_acc.total;
    BinEvalAccumulator val_acc(cfg.n_bins);
    double val_loss_sum = 0.0;
    int64_t val_count = 0;
    const size_t item = static_cast<size_t>(kSynthChannels) * kEpochSamples;
    const size_t val_batch = 250;
    for (size_t start = 0; start < val_ids.size(); start += val_batch) {
      const size_t end = std::min(val_ids.size(), start + val_batch);
      const int b = static_cast<int>(end - start);
      std::vector<double> xs(val_signals.begin() + static_cast<int64_t>(start * item),
                             val_signals.begin() + static_cast<int64_t>(end * item));
      std::vector<double> ysv(
          val_labels.begin() + static_cast<int64_t>(start * cfg.n_bins),
          val_labels.begin() + static_cast<int64_t>(end * cfg.n_bins));
      Tensor x = Tensor::from_values({b, kSynthChannels, kEpochSamples}, xs);
      Tensor y = Tensor::from_values({b, cfg.n_bins}, ysv);
      Tensor feats = extract_features(res.params, x, cfg, /*train=*/false, nullptr);
      Tensor probs = predict_bin_probs(res.params, feats, cfg);
      val_loss_sum += bce_loss(y, probs).item() * b;
      val_count += b;
      val_acc.add(ysv, threshold_bins(probs), cfg.n_bins);
    }
    log.val_loss = val_loss_sum / static_cast<double>(val_count);
    log.val_hamming = static_cast<double>(val_acc.matches) / val_acc.total;
    log.val_per_bin_accuracy.resize(static_cast<size_t>(cfg.n_bins));
    for (int b = 0; b < cfg.n_bins; ++b) {
      log.val_per_bin_accuracy[static_cast<size_t>(b)] =
          static_cast<double>(val_acc.per_bin_match[static_cast<size_t>(b)]) /
          static_cast<double>(val_acc.per_bin_total[static_cast<size_t>(b)]);
    }
    res.log.push_back(std::move(log));
    if (spec.on_epoch) spec.on_epoch(epoch, res.log.back());
  }
  return res;
}

// ---- fine-tuning ----

namespace {

// Rows of cached eval-mode features for frozen extractors.
struct FeatureCache {
  std::unordered_map<const EpochRecord*, size_t> row_of;
  std::vector<double> rows;  // row-major [n, feature_dim]
  std::vector<double> placeholder;
  int dim = 0;

  const double* row(const EpochRecord* e) const {
    if (!e) return placeholder.data();
    return rows.data() + row_of.at(e) * static_cast<size_t>(dim);
  }
};

FeatureCache build_feature_cache(ParamStore& params, const ModelConfig& cfg,
                                 const std::vector<const std::vector<EpochRecord>*>& pools) {
  FeatureCache cache;
  cache.dim = feature_dim(cfg.filters, cfg.input_len);
  std::vector<const EpochRecord*> todo;
  for (const auto* pool : pools) {
    for (const auto& e : *pool) todo.push_back(&e);
  }
  cache.rows.resize(todo.size() * static_cast<size_t>(cache.dim));
  const size_t item = static_cast<size_t>(kSynthChannels) * kEpochSamples;
  const size_t batch = 64;
  std::vector<double> buf;
  for (size_t start = 0; start < todo.size(); start += batch) {
    const size_t end = std::min(todo.size(), start + batch);
    const int b = static_cast<int>(end - start);
    buf.assign(static_cast<size_t>(b) * item, 0.0);
    for (size_t i = start; i < end; ++i) {
      std::copy(todo[i]->signal.begin(), todo[i]->signal.end(),
                buf.begin() + (i - start) * item);
    }
    Tensor x = Tensor::from_values({b, kSynthChannels, kEpochSamples}, buf);
    Tensor feats = extract_features(params, x, cfg, /*train=*/false, nullptr);
    for (size_t i = start; i < end; ++i) {
      cache.row_of[todo[i]] = i;
      std::copy(feats.values().begin() + static_cast<int64_t>((i - start) * cache.dim),
                feats.values().begin() + static_cast<int64_t>((i - start + 1) * cache.dim),
                cache.rows.begin() + i * static_cast<size_t>(cache.dim));
    }
  }
  // Zero-signal placeholder epochs pass through f like any other epoch.
  std::vector<double> zeros(item, 0.0);
  Tensor x = Tensor::from_values({1, kSynthChannels, kEpochSamples}, zeros);
  Tensor feats = extract_features(params, x, cfg, /*train=*/false, nullptr);
  cache.placeholder = feats.values();
  return cache;
}

// Step tensors [batch, dim] for a batch of sequences, from cached features.
std::vector<Tensor> steps_from_cache(const FeatureCache& cache,
                                     const std::vector<const SequenceSample*>& batch,
                                     int seq_len) {
  std::vector<Tensor> steps;
  steps.reserve(static_cast<size_t>(seq_len));
  const int b = static_cast<int>(batch.size());
  for (int t = 0; t < seq_len; ++t) {
    std::vector<double> vals(static_cast<size_t>(b) * cache.dim);
    for (int j = 0; j < b; ++j) {
      const double* src = cache.row(batch[static_cast<size_t>(j)]->window[static_cast<size_t>(t)]);
      std::copy(src, src + cache.dim, vals.begin() + static_cast<size_t>(j) * cache.dim);
    }
    steps.push_back(Tensor::from_values({b, cache.dim}, std::move(vals)));
  }
  return steps;
}

// Step tensors routed through f (train or eval) for trainable extractors.
// Rows are step-major: row t*b + j holds sequence j, step t.
std::vector<Tensor> steps_through_extractor(ParamStore& params, const ModelConfig& cfg,
                                            const std::vector<const SequenceSample*>& batch,
                                            int seq_len, bool train, Rng* dropout_rng) {
  const int b = static_cast<int>(batch.size());
  const size_t item = static_cast<size_t>(kSynthChannels) * kEpochSamples;
  std::vector<double> buf(static_cast<size_t>(seq_len) * b * item, 0.0);
  for (int t = 0; t < seq_len; ++t) {
    for (int j = 0; j < b; ++j) {
      const EpochRecord* e = batch[static_cast<size_t>(j)]->window[static_cast<size_t>(t)];
      if (e) {
        std::copy(e->signal.begin(), e->signal.end(),
                  buf.begin() + (static_cast<size_t>(t) * b + j) * item);
      }
    }
  }
  Tensor x = Tensor::from_values({seq_len * b, kSynthChannels, kEpochSamples}, buf);
  Tensor feats = extract_features(params, x, cfg, train, dropout_rng);
  std::vector<Tensor> steps;
  steps.reserve(static_cast<size_t>(seq_len));
  for (int t = 0; t < seq_len; ++t) steps.push_back(slice_rows(feats, t * b, (t + 1) * b));
  return steps;
}

struct EvalOutcome {
  ConfusionMatrix cm{kNumStages};
  double macro = 0.0;
};

EvalOutcome evaluate_sequences(ParamStore& params, const ModelConfig& cfg,
                               const std::vector<SequenceSample>& seqs, bool frozen,
                               const FeatureCache* cache) {
  EvalOutcome out;
  const size_t batch_size = 64;
  for (size_t start = 0; start < seqs.size(); start += batch_size) {
    const size_t end = std::min(seqs.size(), start + batch_size);
    std::vector<const SequenceSample*> batch;
    for (size_t i = start; i < end; ++i) batch.push_back(&seqs[i]);
    std::vector<Tensor> steps =
        frozen ? steps_from_cache(*cache, batch, cfg.seq_len)
               : steps_through_extractor(params, cfg, batch, cfg.seq_len, false, nullptr);
    Tensor probs = predict_stage_probs(params, steps, cfg, /*train=*/false, nullptr);
    const int b = static_cast<int>(batch.size());
    for (int j = 0; j < b; ++j) {
      const double* row = probs.values().data() + static_cast<size_t>(j) * cfg.n_stages;
      int arg = 0;
      for (int c = 1; c < cfg.n_stages; ++c) {
        if (row[c] > row[arg]) arg = c;
      }
      out.cm.add(batch[static_cast<size_t>(j)]->target_stage, arg);
    }
  }
  out.macro = macro_f1(out.cm);
  return out;
}

void audit_no_test_leakage(const FinetunePools& pools) {
  std::set<std::string> test_subjects;
  for (const auto& e : pools.test) test_subjects.insert(e.subject_id);
  for (const auto& e : pools.train) {
    if (test_subjects.count(e.subject_id)) {
      throw HarnessError("data hygiene: training epoch from test subject " + e.subject_id);
    }
  }
  for (const auto& e : pools.validation) {
    if (test_subjects.count(e.subject_id)) {
      throw HarnessError("data hygiene: validation epoch from test subject " + e.subject_id);
    }
  }
}

}  // namespace

FinetuneResult finetune(const ExperimentSpec& spec, const FinetunePools& pools,
                        const ParamStore* pretrained) {
  const Hyperparams& hp = spec.hyper;
  ModelConfig cfg = hp.model;
  const TrainConfig tc = spec.configuration;
  const bool needs_checkpoint =
      tc == TrainConfig::FixedFe || tc == TrainConfig::FinetunedFe;
  const bool frozen = tc == TrainConfig::FixedFe || tc == TrainConfig::UntrainedFe;
  if (needs_checkpoint && !pretrained) {
    throw HarnessError(std::string("finetune: configuration ") + config_name(tc) +
                       " requires a pretrained checkpoint");
  }
  audit_no_test_leakage(pools);

  const uint64_t eff_seed = mix_seed(spec.seed, {static_cast<uint64_t>(spec.repetition),
                                                 static_cast<uint64_t>(spec.fold)});

  // Reduction happens over labeled epochs; sequences keep full-recording
  // context around the selected centers.
  std::vector<size_t> selected = subsample_training_data(
      pools.train, spec.n_subjects.value_or(-1), spec.n_samples.value_or(-1),
      mix_seed(eff_seed, {kStreamSubsample}));
  std::set<size_t> selected_set(selected.begin(), selected.end());

  const int64_t n_full = pools.full_train_size > 0
                             ? pools.full_train_size
                             : static_cast<int64_t>(pools.train.size());
  const int64_t dup = duplicate_for_constant_updates(
      static_cast<int64_t>(selected.size()), n_full);

  auto train_seqs_all = assemble_sequences(pools.train, cfg.seq_len);
  std::vector<const SequenceSample*> train_seqs;
  for (const auto& s : train_seqs_all) {
    const size_t pool_idx = static_cast<size_t>(s.center - pools.train.data());
    if (selected_set.count(pool_idx)) train_seqs.push_back(&s);
  }
  if (train_seqs.empty()) throw HarnessError("finetune: no training sequences selected");
  auto val_seqs = assemble_sequences(pools.validation, cfg.seq_len);
  auto test_seqs = assemble_sequences(pools.test, cfg.seq_len);
  if (val_seqs.empty() || test_seqs.empty()) {
    throw HarnessError("finetune: validation and test pools must contain labeled epochs");
  }

  // Model assembly per configuration semantics.
  FinetuneResult res;
  res.n_selected = static_cast<int64_t>(selected.size());
  res.duplication_factor = dup;
  res.params = init_params(cfg, init_seed_for(spec.seed, spec.repetition, spec.fold),
                           /*with_pretrain_head=*/false, /*with_staging_head=*/true);
  if (needs_checkpoint) copy_component(res.params, *pretrained, "f");
  if (frozen) res.params.set_trainable("f", false);
  res.fe_checksum_before = res.params.checksum("f");

  FeatureCache cache;
  if (frozen) {
    cache = build_feature_cache(res.params, cfg,
                                {&pools.train, &pools.validation, &pools.test});
  }

  AdamState adam;
  adam.learning_rate = hp.finetune_lr;
  adam.weight_decay = hp.weight_decay;
  Rng dropout_rng = Rng::derive(eff_seed, {kStreamFinetuneDropout});

  ParamStore best = res.params.clone();
  double best_val = -1.0;
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < hp.finetune_max_epochs; ++epoch) {
    // Duplicated sample list, globally shuffled each epoch.
    std::vector<const SequenceSample*> sched;
    sched.reserve(train_seqs.size() * static_cast<size_t>(dup));
    for (int64_t d = 0; d < dup; ++d) {
      sched.insert(sched.end(), train_seqs.begin(), train_seqs.end());
    }
    Rng shuffle_rng = Rng::derive(eff_seed, {kStreamFinetuneShuffle,
                                             static_cast<uint64_t>(epoch)});
    shuffle_rng.shuffle(sched);

    for (size_t start = 0; start < sched.size(); start += static_cast<size_t>(hp.finetune_batch)) {
      const size_t end = std::min(sched.size(), start + static_cast<size_t>(hp.finetune_batch));
      std::vector<const SequenceSample*> batch(sched.begin() + static_cast<int64_t>(start),
                                               sched.begin() + static_cast<int64_t>(end));
      std::vector<int> targets;
      targets.reserve(batch.size());
      for (const auto* s : batch) targets.push_back(s->target_stage);

      std::vector<Tensor> steps =
          frozen ? steps_from_cache(cache, batch, cfg.seq_len)
                 : steps_through_extractor(res.params, cfg, batch, cfg.seq_len, true,
                                           &dropout_rng);
      Tensor probs = predict_stage_probs(res.params, steps, cfg, /*train=*/true, &dropout_rng);
      Tensor loss = categorical_ce(probs, targets);
      const double loss_v = loss.item();
      if (!std::isfinite(loss_v)) {
        throw HarnessError("finetune: non-finite loss");
      }
      res.params.zero_grads();
      backward(loss);
      clip_grad_norm(res.params, hp.clip_norm);
      adam_step(res.params, adam);
      if (res.first_step_losses.size() < 50) res.first_step_losses.push_back(loss_v);
    }

    const EvalOutcome val = evaluate_sequences(res.params, cfg, val_seqs, frozen,
                                               frozen ? &cache : nullptr);
    res.val_macro_f1_log.push_back(val.macro);
    res.epochs_ran = epoch + 1;
    if (val.macro > best_val) {
      best_val = val.macro;
      best = res.params.clone();
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= hp.patience) break;  // early stopping
    }
  }

  // Restore the best-validation checkpoint before the test evaluation.
  res.params = std::move(best);
  res.best_val_macro_f1 = best_val;
  const EvalOutcome test = evaluate_sequences(res.params, cfg, test_seqs, frozen,
                                              frozen ? &cache : nullptr);
  res.test_macro_f1 = test.macro;
  res.confusion = test.cm;
  res.fe_checksum_after = res.params.checksum("f");
  if (frozen && res.fe_checksum_after != res.fe_checksum_before) {
    throw HarnessError("finetune: frozen feature extractor drifted");
  }
  return res;
}

// ---- data loading ----

FinetunePools pools_from_split(std::vector<EpochRecord> epochs, const SplitMembers& members) {
  const std::set<std::string> train(members.train.begin(), members.train.end());
  const std::set<std::string> val(members.validation.begin(), members.validation.end());
  const std::set<std::string> test(members.test.begin(), members.test.end());
  FinetunePools pools;
  for (auto& e : epochs) {
    if (train.count(e.subject_id)) {
      pools.train.push_back(std::move(e));
    } else if (val.count(e.subject_id)) {
      pools.validation.push_back(std::move(e));
    } else if (test.count(e.subject_id)) {
      pools.test.push_back(std::move(e));
    }
    // Withheld subjects (the test fold's validation reserve) fall through.
  }
  return pools;
}

std::vector<EpochRecord> load_epoch_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".bin") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<EpochRecord> out;
  for (const auto& f : files) {
    auto epochs = read_epoch_shard(f);
    out.insert(out.end(), std::make_move_iterator(epochs.begin()),
               std::make_move_iterator(epochs.end()));
  }
  return out;
}

CvSplit load_splits_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError("cannot open splits file: " + path);
  json j;
  in >> j;
  CvSplit split;
  split.fold_subjects = j.at("folds").get<std::vector<std::vector<std::string>>>();
  split.fold_validation = j.at("validation").get<std::vector<std::vector<std::string>>>();
  return split;
}

void save_splits_json(const std::string& path, const CvSplit& split) {
  json j;
  j["folds"] = split.fold_subjects;
  j["validation"] = split.fold_validation;
  std::ofstream out(path);
  if (!out) throw HarnessError("cannot write splits file: " + path);
  out << j.dump(2) << "\n";
}

// ---- experiment matrix ----

namespace {

json confusion_to_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (int r = 0; r < cm.k; ++r) {
    json row = json::array();
    for (int c = 0; c < cm.k; ++c) row.push_back(cm.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// The evaluation record shape shared by every emitted metric log.
json make_eval_record(const std::string& run_id, const std::string& split, int epoch,
                      double loss, std::optional<double> hamming,
                      const std::vector<double>* per_bin,
                      std::optional<double> mf1, const ConfusionMatrix* cm) {
  json j;
  j["run_id"] = run_id;
  j["split"] = split;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["hamming"] = hamming ? json(*hamming) : json(nullptr);
  j["per_bin_accuracy"] = per_bin ? json(*per_bin) : json(nullptr);
  j["macro_f1"] = mf1 ? json(*mf1) : json(nullptr);
  j["confusion_matrix"] = cm ? confusion_to_json(*cm) : json(nullptr);
  return j;
}

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << content;
  }
  fs::rename(tmp, path);
}

struct CellKey {
  std::string configuration;
  std::optional<int> n_synthetic, n_subjects, n_samples;
  bool operator<(const CellKey& o) const {
    auto tie = [](const CellKey& k) {
      return std::make_tuple(k.configuration, k.n_synthetic.value_or(-1),
                             k.n_subjects.value_or(-1), k.n_samples.value_or(-1));
    };
    return tie(*this) < tie(o);
  }
};

}  // namespace

MatrixResult run_matrix(const MatrixGrid& grid, const std::string& out_dir) {
  if (grid.configurations.empty()) throw HarnessError("run_matrix: no configurations");
  fs::create_directories(fs::path(out_dir) / "runs");
  fs::create_directories(fs::path(out_dir) / "pretrained");

  // Real-data matrices load the epoch pool once.
  std::vector<EpochRecord> all_epochs;
  CvSplit cv;
  const bool proxy_data = grid.data == "proxy";
  if (!proxy_data) {
    all_epochs = load_epoch_dir(grid.data);
    if (grid.splits_path.empty()) {
      throw HarnessError("run_matrix: shard data requires a splits file");
    }
    cv = load_splits_json(grid.splits_path);
    if (static_cast<int>(cv.fold_subjects.size()) != grid.folds) {
      throw HarnessError("run_matrix: splits file has a different fold count");
    }
  }

  MatrixResult result;
  std::map<CellKey, std::vector<std::pair<std::pair<int, int>, double>>> cell_scores;

  for (const auto& ns : grid.n_synthetic) {
    for (const auto& nsub : grid.n_subjects) {
      for (const auto& nsamp : grid.n_samples) {
        for (const auto& config : grid.configurations) {
          for (int rep = 0; rep < grid.repetitions; ++rep) {
            for (int fold = 0; fold < grid.folds; ++fold) {
              ExperimentSpec spec;
              spec.configuration = config;
              spec.seed = grid.base_seed;
              spec.repetition = rep;
              spec.fold = fold;
              spec.n_synthetic = ns;
              spec.n_subjects = nsub;
              spec.n_samples = nsamp;
              spec.data = grid.data;
              spec.splits_path = grid.splits_path;
              spec.proxy = grid.proxy;
              spec.hyper = grid.hyper;

              const std::string rid = spec_run_id(spec);
              const fs::path run_path = fs::path(out_dir) / "runs" / (rid + ".json");
              const CellKey key{config_name(config), ns, nsub, nsamp};

              if (fs::exists(run_path)) {
                std::ifstream in(run_path);
                json j;
                in >> j;
                if (j.value("status", "") == "ok") {
                  cell_scores[key].push_back({{rep, fold}, j.at("test_macro_f1")});
                }
                ++result.skipped;
                continue;
              }

              json record;
              record["run_id"] = rid;
              record["spec"] = json::parse(spec_canonical_json(spec));
              try {
                FinetunePools pools;
                if (proxy_data) {
                  pools = make_proxy_pools(data_seed_for(grid.base_seed, rep, fold),
                                           grid.proxy);
                } else {
                  pools = pools_from_split(all_epochs, split_members(cv, fold));
                }

                ParamStore pretrained;
                const ParamStore* pre_ptr = nullptr;
                if (config == TrainConfig::FixedFe || config == TrainConfig::FinetunedFe) {
                  PretrainSpec ps;
                  ps.seed = mix_seed(grid.base_seed, {kStreamPretrainSeed,
                                                      static_cast<uint64_t>(rep)});
                  ps.n_synthetic = ns;
                  ps.hyper = grid.hyper;
                  ExperimentSpec pkey_spec = spec;
                  pkey_spec.configuration = TrainConfig::FixedFe;  // shared cache key
                  pkey_spec.fold = 0;
                  pkey_spec.n_subjects.reset();
                  pkey_spec.n_samples.reset();
                  const fs::path ck = fs::path(out_dir) / "pretrained" /
                                      (spec_run_id(pkey_spec) + ".ckpt");
                  if (!fs::exists(ck)) {
                    PretrainResult pr = pretrain(ps);
                    save_checkpoint(ck.string(), pr.params);
                  }
                  pretrained = load_checkpoint(ck.string());
                  pre_ptr = &pretrained;
                }

                FinetuneResult fr = finetune(spec, pools, pre_ptr);
                record["status"] = "ok";
                record["test_macro_f1"] = fr.test_macro_f1;
                record["best_val_macro_f1"] = fr.best_val_macro_f1;
                record["epochs_ran"] = fr.epochs_ran;
                record["n_selected"] = fr.n_selected;
                record["duplication_factor"] = fr.duplication_factor;
                record["val_macro_f1_log"] = fr.val_macro_f1_log;
                record["first_step_losses"] = fr.first_step_losses;
                record["fe_checksum_before"] = fr.fe_checksum_before;
                record["fe_checksum_after"] = fr.fe_checksum_after;
                record["evals"] = json::array(
                    {make_eval_record(rid, "test", fr.epochs_ran, 0.0, std::nullopt, nullptr,
                                      fr.test_macro_f1, &fr.confusion)});
                cell_scores[key].push_back({{rep, fold}, fr.test_macro_f1});
                ++result.executed;
              } catch (const std::exception& e) {
                record["status"] = "failed";
                record["error"] = e.what();
                ++result.failed;
              }
              atomic_write(run_path, record.dump(2) + "\n");
            }
          }
        }
      }
    }
  }

  // Aggregate per cell; runs ordered by (repetition, fold).
  json summary;
  summary["cells"] = json::array();
  for (auto& [key, scored] : cell_scores) {
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    MatrixCellStats stats;
    stats.configuration = key.configuration;
    stats.n_synthetic = key.n_synthetic;
    stats.n_subjects = key.n_subjects;
    stats.n_samples = key.n_samples;
    for (const auto& [rf, mf1] : scored) stats.mf1_by_run.push_back(mf1);
    stats.runs = static_cast<int>(stats.mf1_by_run.size());
    if (stats.runs > 0) {
      double mean = 0.0;
      for (double v : stats.mf1_by_run) mean += v;
      mean /= stats.runs;
      double var = 0.0;
      for (double v : stats.mf1_by_run) var += (v - mean) * (v - mean);
      stats.mean_mf1 = mean;
      stats.std_mf1 = std::sqrt(var / stats.runs);
    }
    json cell;
    cell["configuration"] = stats.configuration;
    cell["n_synthetic"] = stats.n_synthetic ? json(*stats.n_synthetic) : json(nullptr);
    cell["n_subjects"] = stats.n_subjects ? json(*stats.n_subjects) : json(nullptr);
    cell["n_samples"] = stats.n_samples ? json(*stats.n_samples) : json(nullptr);
    cell["runs"] = stats.runs;
    cell["mean_mf1"] = stats.mean_mf1;
    cell["std_mf1"] = stats.std_mf1;
    cell["mf1_by_run"] = stats.mf1_by_run;
    summary["cells"].push_back(std::move(cell));
    result.cells.push_back(std::move(stats));
  }

  // Paired bootstrap differences between configurations within one
  // reduction cell, paired by (repetition, fold).
  summary["bootstrap_diffs"] = json::array();
  for (auto it_a = cell_scores.begin(); it_a != cell_scores.end(); ++it_a) {
    for (auto it_b = std::next(it_a); it_b != cell_scores.end(); ++it_b) {
      const auto& ka = it_a->first;
      const auto& kb = it_b->first;
      const bool same_cell = ka.n_synthetic == kb.n_synthetic &&
                             ka.n_subjects == kb.n_subjects && ka.n_samples == kb.n_samples;
      if (!same_cell || it_a->second.size() != it_b->second.size() || it_a->second.empty()) {
        continue;
      }
      std::vector<double> a, b;
      for (const auto& [rf, v] : it_a->second) a.push_back(v);
      for (const auto& [rf, v] : it_b->second) b.push_back(v);
      const auto [mean, sd] = paired_bootstrap_diff(a, b, 10000, grid.base_seed);
      json d;
      d["a"] = ka.configuration;
      d["b"] = kb.configuration;
      d["n_synthetic"] = ka.n_synthetic ? json(*ka.n_synthetic) : json(nullptr);
      d["mean_diff"] = mean;
      d["std_diff"] = sd;
      summary["bootstrap_diffs"].push_back(std::move(d));
    }
  }

  atomic_write(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  return result;
}

}  // namespace freqtrain
