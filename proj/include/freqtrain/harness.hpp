#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqtrain/edf.hpp"
#include "freqtrain/metrics.hpp"
#include "freqtrain/model.hpp"
#include "freqtrain/synthgen.hpp"

namespace freqtrain {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- experiment description ----

enum class TrainConfig { FullySupervised, FixedFe, FinetunedFe, UntrainedFe };

const char* config_name(TrainConfig c);
TrainConfig config_from_name(const std::string& name);

struct Hyperparams {
  // Pretraining defaults.
  int pretrain_epochs = 20;
  double pretrain_lr = 1e-4;
  int pretrain_batch = 64;
  int n_synth_train = 100000;  // nominal train size; sweeps resample to this
  int n_synth_val = 1000;
  double bin_f_min = 0.3;
  double bin_f_max = 35.0;
  // Fine-tuning defaults.
  int finetune_max_epochs = 50;
  int patience = 10;
  double finetune_lr = 1e-4;
  double weight_decay = 1e-3;
  int finetune_batch = 32;
  double clip_norm = 5.0;
  // Architecture.
  ModelConfig model;
};

// Synthetic staging proxy sizing (see proxy.hpp for the stage rule).
struct ProxyConfig {
  int train_recordings = 2;
  int val_recordings = 1;
  int test_recordings = 2;
  int epochs_per_recording = 200;
  int n_bins = 20;
  double f_min = 0.3;
  double f_max = 35.0;
};

struct ExperimentSpec {
  TrainConfig configuration = TrainConfig::FullySupervised;
  uint64_t seed = 1;
  int repetition = 0;  // 0..2
  int fold = 0;        // 0..4
  std::optional<int> n_subjects;
  std::optional<int> n_samples;
  std::optional<int> n_synthetic;
  std::string data = "proxy";  // "proxy" or an epoch-shard directory
  std::string splits_path;     // required for shard data
  ProxyConfig proxy;           // used when data == "proxy"
  Hyperparams hyper;
};

ExperimentSpec parse_experiment_spec_json(const std::string& text);
std::string experiment_spec_to_json(const ExperimentSpec& spec);

std::string spec_canonical_json(const ExperimentSpec& spec);
// FNV-1a hash of the canonical JSON, as 16 hex chars.
std::string spec_run_id(const ExperimentSpec& spec);

// ---- cross-validation ----

struct SubjectInfo {
  std::string id;
  std::string group;  // sub-dataset / subgroup tag used for stratification
};

struct CvSplit {
  std::vector<std::vector<std::string>> fold_subjects;
  std::vector<std::vector<std::string>> fold_validation;  // ~10% of each fold
};

// Subject-wise partition, stratified by group (fold sizes within +-1 per
// group), deterministic per seed. Each fold reserves ~10% of its subjects
// (at least one) as validation members.
CvSplit make_cv_splits(const std::vector<SubjectInfo>& subjects, int n_folds, uint64_t seed);

struct SplitMembers {
  std::vector<std::string> train;       // training-fold subjects minus their validation
  std::vector<std::string> validation;  // validation subjects of the training folds
  std::vector<std::string> test;        // test fold minus its reserved validation
};

// Membership for one test fold; the test fold's reserved validation subjects
// are withheld from all three roles.
SplitMembers split_members(const CvSplit& split, int test_fold);

// ---- training-data reduction ----

// Picks n_subjects subjects (all when <= 0), then n_samples labeled epochs
// (all when <= 0) uniformly from those subjects, redrawing the sample set
// until every one of the 5 stages appears. Returns indices into the pool.
std::vector<size_t> subsample_training_data(const std::vector<EpochRecord>& pool,
                                            int n_subjects, int n_samples, uint64_t seed);

// floor(N / N_red): per-epoch duplication factor for constant update counts.
int64_t duplicate_for_constant_updates(int64_t n_reduced, int64_t n_full);

// ---- sequence assembly ----

struct SequenceSample {
  std::vector<const EpochRecord*> window;  // seq_len slots, nullptr = zero pad
  int target_stage = 0;
  const EpochRecord* center = nullptr;
};

// One sequence per labeled epoch; windows never span recording boundaries
// and are zero-padded outside them. The pool must outlive the sequences.
std::vector<SequenceSample> assemble_sequences(const std::vector<EpochRecord>& pool,
                                               int seq_len = 11);

// ---- pretraining ----

struct PretrainEpochLog {
  double train_loss = 0.0;
  double train_hamming = 0.0;
  double val_loss = 0.0;
  double val_hamming = 0.0;
  std::vector<double> val_per_bin_accuracy;
};

struct PretrainSpec {
  uint64_t seed = 1;
  std::optional<int> n_synthetic;  // distinct samples; default hyper.n_synth_train
  Hyperparams hyper;
  // Progress hook, called after every epoch (not part of the run identity).
  std::function<void(int, const PretrainEpochLog&)> on_epoch;
};

struct PretrainResult {
  ParamStore params;  // f + c_p
  std::vector<PretrainEpochLog> log;
  std::vector<double> first_step_losses;  // up to the first 50 steps
};

PretrainResult pretrain(const PretrainSpec& spec);

// ---- fine-tuning ----

struct FinetunePools {
  std::vector<EpochRecord> train;
  std::vector<EpochRecord> validation;
  std::vector<EpochRecord> test;
  // Reference size N for the duplication rule; defaults to train.size().
  int64_t full_train_size = -1;
};

struct FinetuneResult {
  double test_macro_f1 = 0.0;
  ConfusionMatrix confusion{kNumStages};
  double best_val_macro_f1 = 0.0;
  int epochs_ran = 0;
  std::vector<double> val_macro_f1_log;
  std::vector<double> first_step_losses;  // up to the first 50 steps
  uint64_t fe_checksum_before = 0;
  uint64_t fe_checksum_after = 0;
  int64_t n_selected = 0;            // distinct training epochs after reduction
  int64_t duplication_factor = 0;    // copies per epoch during training
  ParamStore params;  // best-validation model (f + c_f)
};

// Runs the configuration's semantics: fully_supervised / finetuned_fe train
// f, fixed_fe / untrained_fe freeze it (eval mode, cached features).
// `pretrained` must carry component "f" for fixed_fe / finetuned_fe.
FinetuneResult finetune(const ExperimentSpec& spec, const FinetunePools& pools,
                        const ParamStore* pretrained);

// ---- data loading ----

// Groups epochs into train/validation/test pools by subject membership.
FinetunePools pools_from_split(std::vector<EpochRecord> epochs, const SplitMembers& members);

// Reads every epoch shard (*.bin) in a directory.
std::vector<EpochRecord> load_epoch_dir(const std::string& dir);

CvSplit load_splits_json(const std::string& path);
void save_splits_json(const std::string& path, const CvSplit& split);

// ---- experiment matrix ----

struct MatrixGrid {
  std::vector<TrainConfig> configurations;
  int repetitions = 3;
  int folds = 5;
  std::vector<std::optional<int>> n_synthetic = {std::nullopt};
  std::vector<std::optional<int>> n_subjects = {std::nullopt};
  std::vector<std::optional<int>> n_samples = {std::nullopt};
  uint64_t base_seed = 1;
  std::string data = "proxy";
  std::string splits_path;
  ProxyConfig proxy;
  Hyperparams hyper;
};

MatrixGrid parse_matrix_grid_json(const std::string& text);

struct MatrixCellStats {
  std::string configuration;
  std::optional<int> n_synthetic, n_subjects, n_samples;
  int runs = 0;
  double mean_mf1 = 0.0;
  double std_mf1 = 0.0;
  std::vector<double> mf1_by_run;  // ordered by (repetition, fold)
};

struct MatrixResult {
  std::vector<MatrixCellStats> cells;
  int executed = 0;
  int skipped = 0;  // already present, resume
  int failed = 0;
};

// Executes every (configuration x reduction x repetition x fold) run,
// persisting one JSON record per run under <out_dir>/runs; reruns skip
// completed run ids. Pretrained checkpoints are cached per data seed and
// diversity setting under <out_dir>/pretrained.
MatrixResult run_matrix(const MatrixGrid& grid, const std::string& out_dir);

// Derived stream seeds; configuration-independent so that runs pair by
// (repetition, fold) across configurations.
uint64_t data_seed_for(uint64_t base_seed, int repetition, int fold);
uint64_t init_seed_for(uint64_t base_seed, int repetition, int fold);

// Results root: FREQTRAIN_RESULTS env var when set, else "results".
std::string results_root();

}  // namespace freqtrain
