#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "freqtrain/harness.hpp"
#include "freqtrain/proxy.hpp"
#include "freqtrain/shard.hpp"

using namespace freqtrain;
namespace fs = std::filesystem;

namespace {

std::vector<SubjectInfo> dodoh_like_roster() {
  std::vector<SubjectInfo> subjects;
  for (int i = 0; i < 55; ++i) subjects.push_back({"O" + std::to_string(i), "O"});
  for (int i = 0; i < 25; ++i) subjects.push_back({"H" + std::to_string(i), "H"});
  return subjects;
}

Hyperparams tiny_hyper() {
  Hyperparams hp;
  hp.model.filters = 4;
  hp.model.lstm_hidden = 8;
  hp.finetune_max_epochs = 2;
  hp.finetune_batch = 16;
  hp.pretrain_epochs = 1;
  hp.pretrain_batch = 16;
  hp.n_synth_train = 32;
  hp.n_synth_val = 16;
  return hp;
}

ProxyConfig tiny_proxy() {
  ProxyConfig p;
  p.train_recordings = 1;
  p.val_recordings = 1;
  p.test_recordings = 1;
  p.epochs_per_recording = 120;
  return p;
}

}  // namespace

TEST_CASE("cv splits balance groups and stay subject-wise") {
  const auto subjects = dodoh_like_roster();
  const CvSplit split = make_cv_splits(subjects, 5, 7);

  for (int f = 0; f < 5; ++f) {
    int n_o = 0, n_h = 0;
    for (const auto& s : split.fold_subjects[f]) {
      (s[0] == 'O' ? n_o : n_h)++;
    }
    CHECK(n_o == 11);
    CHECK(n_h == 5);
    // ~10% of 16 subjects -> 2 validation members, drawn from the fold.
    CHECK(split.fold_validation[f].size() == 2);
    for (const auto& v : split.fold_validation[f]) {
      CHECK(std::find(split.fold_subjects[f].begin(), split.fold_subjects[f].end(), v) !=
            split.fold_subjects[f].end());
    }
  }

  // Disjoint partition covering everyone.
  std::set<std::string> seen;
  for (const auto& fold : split.fold_subjects) {
    for (const auto& s : fold) CHECK(seen.insert(s).second);
  }
  CHECK(seen.size() == 80);

  // Determinism and input-order independence.
  auto shuffled = subjects;
  Rng rng(5);
  rng.shuffle(shuffled);
  const CvSplit again = make_cv_splits(shuffled, 5, 7);
  CHECK(again.fold_subjects == split.fold_subjects);
  CHECK(again.fold_validation == split.fold_validation);
  const CvSplit other = make_cv_splits(subjects, 5, 8);
  CHECK(other.fold_subjects != split.fold_subjects);

  CHECK_THROWS_AS(make_cv_splits({{"a", ""}, {"b", ""}}, 5, 1), HarnessError);
}

TEST_CASE("split members withhold the test fold's validation reserve") {
  const CvSplit split = make_cv_splits(dodoh_like_roster(), 5, 7);
  const SplitMembers m = split_members(split, 2);

  CHECK(m.test.size() == split.fold_subjects[2].size() - split.fold_validation[2].size());
  CHECK(m.validation.size() == 8);  // 2 from each of the 4 training folds
  CHECK(m.train.size() == 80 - 16 - 8);

  std::set<std::string> all(m.train.begin(), m.train.end());
  for (const auto& s : m.validation) CHECK(all.insert(s).second);
  for (const auto& s : m.test) CHECK(all.insert(s).second);
  // Withheld: the test fold's validation subjects appear nowhere.
  for (const auto& v : split.fold_validation[2]) CHECK(all.count(v) == 0);
}

TEST_CASE("a subject's recordings never straddle pools") {
  std::vector<EpochRecord> epochs;
  for (const auto& rec : {"s1-night1", "s1-night2", "s2-night1"}) {
    for (int i = 0; i < 3; ++i) {
      EpochRecord e;
      e.signal.assign(3 * 3000, 0.0);
      e.stage = i % 5;
      e.subject_id = std::string(rec).substr(0, 2);
      e.recording_id = rec;
      e.index = i;
      epochs.push_back(std::move(e));
    }
  }
  SplitMembers m;
  m.train = {"s1"};
  m.test = {"s2"};
  const FinetunePools pools = pools_from_split(std::move(epochs), m);
  CHECK(pools.train.size() == 6);  // both s1 recordings together
  CHECK(pools.test.size() == 3);
  CHECK(pools.validation.empty());
}

TEST_CASE("subsampling draws the requested sizes with full stage coverage") {
  // Pool: 2 subjects x 120 labeled epochs covering all stages.
  std::vector<EpochRecord> pool;
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < 120; ++i) {
      EpochRecord e;
      e.stage = i % 5;
      e.subject_id = "subj" + std::to_string(s);
      e.recording_id = e.subject_id + "-rec";
      e.index = i;
      pool.push_back(std::move(e));
    }
  }

  SUBCASE("50 samples from one subject") {
    const auto idx = subsample_training_data(pool, 1, 50, 11);
    CHECK(idx.size() == 50);
    std::set<std::string> subs;
    std::set<int> stages;
    for (size_t i : idx) {
      subs.insert(pool[i].subject_id);
      stages.insert(*pool[i].stage);
    }
    CHECK(subs.size() == 1);
    CHECK(stages.size() == 5);
  }
  SUBCASE("'all' keeps the chosen subjects' full pool") {
    const auto idx = subsample_training_data(pool, 1, -1, 11);
    CHECK(idx.size() == 120);
  }
  SUBCASE("same seed, same selection") {
    CHECK(subsample_training_data(pool, 1, 50, 11) == subsample_training_data(pool, 1, 50, 11));
    CHECK(subsample_training_data(pool, 1, 50, 11) != subsample_training_data(pool, 1, 50, 12));
  }
  SUBCASE("oversized requests are rejected") {
    CHECK_THROWS_AS(subsample_training_data(pool, 3, 10, 1), HarnessError);
    CHECK_THROWS_AS(subsample_training_data(pool, 1, 500, 1), HarnessError);
  }
}

TEST_CASE("duplication factor follows the floor formula") {
  CHECK(duplicate_for_constant_updates(50, 1000) == 20);
  CHECK(duplicate_for_constant_updates(50, 1001) == 20);
  CHECK(duplicate_for_constant_updates(700, 700) == 1);
  CHECK_THROWS_AS(duplicate_for_constant_updates(0, 10), HarnessError);
  CHECK_THROWS_AS(duplicate_for_constant_updates(20, 10), HarnessError);
}

TEST_CASE("sequence assembly pads edges and respects recording boundaries") {
  std::vector<EpochRecord> pool;
  auto add_recording = [&](const std::string& rec, int count) {
    for (int i = 0; i < count; ++i) {
      EpochRecord e;
      e.stage = i % 5;
      e.subject_id = rec;
      e.recording_id = rec;
      e.index = i;
      pool.push_back(std::move(e));
    }
  };
  add_recording("recA", 100);
  add_recording("recB", 20);

  const auto seqs = assemble_sequences(pool, 11);
  CHECK(seqs.size() == 120);  // one per labeled epoch

  // First epoch of recA: 5 placeholders then epochs 0..5.
  const auto& first = seqs[0];
  for (int t = 0; t < 5; ++t) CHECK(first.window[t] == nullptr);
  for (int t = 5; t < 11; ++t) {
    REQUIRE(first.window[t] != nullptr);
    CHECK(first.window[t]->index == t - 5);
    CHECK(first.window[t]->recording_id == "recA");
  }
  CHECK(first.target_stage == 0);

  // Last epoch of recA: epochs 94..99 then 5 placeholders.
  const auto& last = seqs[99];
  for (int t = 0; t < 6; ++t) {
    REQUIRE(last.window[t] != nullptr);
    CHECK(last.window[t]->index == 94 + t);
  }
  for (int t = 6; t < 11; ++t) CHECK(last.window[t] == nullptr);

  // recB sequences never borrow recA epochs.
  for (size_t s = 100; s < 120; ++s) {
    for (const auto* e : seqs[s].window) {
      if (e) CHECK(e->recording_id == "recB");
    }
  }
}

TEST_CASE("proxy stage rule covers all five stages with healthy mass") {
  // Hand-checked labels.
  std::vector<uint8_t> slow(20, 0);
  for (int b = 0; b < 6; ++b) slow[b] = 1;
  CHECK(proxy_stage_for_label(slow) == 3);  // N3-like

  std::vector<uint8_t> fast(20, 0);
  for (int b = 15; b < 20; ++b) fast[b] = 1;
  CHECK(proxy_stage_for_label(fast) == 0);  // W-like

  std::vector<uint8_t> mixed(20, 0);
  for (int b = 0; b < 5; ++b) mixed[b] = 1;
  for (int b = 15; b < 20; ++b) mixed[b] = 1;
  CHECK(proxy_stage_for_label(mixed) == 4);  // REM-like

  std::vector<uint8_t> mid(20, 0);
  for (int b = 8; b < 13; ++b) mid[b] = 1;
  CHECK(proxy_stage_for_label(mid) == 2);  // N2-like

  std::vector<uint8_t> sparse(20, 0);
  sparse[0] = sparse[9] = sparse[16] = 1;
  CHECK(proxy_stage_for_label(sparse) == 1);  // N1-like

  // Empirical distribution under Bernoulli(1/2) labels.
  Rng rng(2);
  std::vector<int> counts(5, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto label = draw_label(rng, 20);
    counts[static_cast<size_t>(proxy_stage_for_label(label))]++;
  }
  for (int s = 0; s < 5; ++s) {
    CHECK(counts[static_cast<size_t>(s)] > draws / 10);  // every stage above 10%
  }
}

TEST_CASE("proxy pools are deterministic with per-recording subjects") {
  const auto a = make_proxy_pools(99, tiny_proxy());
  const auto b = make_proxy_pools(99, tiny_proxy());
  CHECK(a.train.size() == 120);
  CHECK(a.validation.size() == 120);
  CHECK(a.test.size() == 120);
  CHECK(a.train[0].signal == b.train[0].signal);
  CHECK(a.train[0].subject_id != a.test[0].subject_id);
  std::set<int> stages;
  for (const auto& e : a.train) stages.insert(*e.stage);
  CHECK(stages.size() == 5);
}

TEST_CASE("finetune runs every configuration contract at tiny scale") {
  const auto pools = make_proxy_pools(3, tiny_proxy());
  ExperimentSpec spec;
  spec.seed = 17;
  spec.hyper = tiny_hyper();
  spec.proxy = tiny_proxy();

  SUBCASE("untrained_fe freezes the extractor bitwise") {
    spec.configuration = TrainConfig::UntrainedFe;
    const FinetuneResult res = finetune(spec, pools, nullptr);
    CHECK(res.fe_checksum_before == res.fe_checksum_after);
    CHECK(res.epochs_ran >= 1);
    CHECK(res.test_macro_f1 >= 0.0);
    CHECK(res.test_macro_f1 <= 1.0);
    CHECK(res.confusion.total() == 120);
  }
  SUBCASE("fixed_fe requires a checkpoint") {
    spec.configuration = TrainConfig::FixedFe;
    CHECK_THROWS_AS(finetune(spec, pools, nullptr), HarnessError);
  }
  SUBCASE("fully_supervised trains the extractor") {
    spec.configuration = TrainConfig::FullySupervised;
    const FinetuneResult res = finetune(spec, pools, nullptr);
    CHECK(res.fe_checksum_before != res.fe_checksum_after);
  }
  SUBCASE("same spec twice gives identical step losses") {
    spec.configuration = TrainConfig::UntrainedFe;
    const FinetuneResult r1 = finetune(spec, pools, nullptr);
    const FinetuneResult r2 = finetune(spec, pools, nullptr);
    CHECK(r1.first_step_losses == r2.first_step_losses);
    CHECK(r1.test_macro_f1 == r2.test_macro_f1);
  }
  SUBCASE("reduced-data run uses the duplication schedule") {
    spec.configuration = TrainConfig::UntrainedFe;
    spec.n_samples = 20;
    const FinetuneResult res = finetune(spec, pools, nullptr);
    CHECK(res.epochs_ran >= 1);
    CHECK(res.n_selected == 20);
    CHECK(res.duplication_factor == 120 / 20);  // floor(N/N_red)
  }
}

TEST_CASE("early stopping halts after the patience window") {
  auto pools = make_proxy_pools(4, tiny_proxy());
  ExperimentSpec spec;
  spec.configuration = TrainConfig::UntrainedFe;
  spec.seed = 5;
  spec.hyper = tiny_hyper();
  spec.hyper.finetune_max_epochs = 50;
  spec.hyper.patience = 2;
  spec.hyper.finetune_lr = 0.0;  // learning frozen -> validation MF1 plateaus
  const FinetuneResult res = finetune(spec, pools, nullptr);
  CHECK(res.epochs_ran == 3);  // epoch 1 sets best, 2 more without improvement
}

TEST_CASE("pretraining learns and logs deterministically at tiny scale") {
  PretrainSpec ps;
  ps.seed = 31;
  ps.hyper = tiny_hyper();
  const PretrainResult a = pretrain(ps);
  CHECK(a.log.size() == 1);
  CHECK(a.log[0].train_loss > 0.0);
  CHECK(a.log[0].val_loss > 0.0);
  CHECK(a.log[0].val_per_bin_accuracy.size() == 20);
  CHECK(a.first_step_losses.size() == 2);  // 32 samples / batch 16

  const PretrainResult b = pretrain(ps);
  CHECK(a.first_step_losses == b.first_step_losses);
  CHECK(a.params.checksum("f") == b.params.checksum("f"));

  PretrainSpec other = ps;
  other.seed = 32;
  const PretrainResult c = pretrain(other);
  CHECK(a.first_step_losses != c.first_step_losses);
}

TEST_CASE("experiment ids are stable and spec round-trips through json") {
  ExperimentSpec spec;
  spec.configuration = TrainConfig::FixedFe;
  spec.seed = 9;
  spec.n_samples = 50;
  const std::string rid = spec_run_id(spec);
  CHECK(rid.size() == 16);
  CHECK(spec_run_id(spec) == rid);

  ExperimentSpec parsed = parse_experiment_spec_json(experiment_spec_to_json(spec));
  CHECK(spec_run_id(parsed) == rid);

  ExperimentSpec other = spec;
  other.fold = 3;
  CHECK(spec_run_id(other) != rid);
}

TEST_CASE("matrix executes, aggregates and resumes") {
  const std::string out = "/tmp/freqtrain_matrix_test";
  fs::remove_all(out);

  MatrixGrid grid;
  grid.configurations = {TrainConfig::UntrainedFe, TrainConfig::FixedFe};
  grid.repetitions = 3;
  grid.folds = 5;
  grid.base_seed = 21;
  grid.proxy = tiny_proxy();
  grid.hyper = tiny_hyper();
  grid.hyper.finetune_max_epochs = 1;

  const MatrixResult first = run_matrix(grid, out);
  CHECK(first.executed == 30);  // 2 configurations x 3 reps x 5 folds
  CHECK(first.skipped == 0);
  CHECK(first.failed == 0);
  REQUIRE(first.cells.size() == 2);
  for (const auto& cell : first.cells) {
    CHECK(cell.runs == 15);
    double mean = 0;
    for (double v : cell.mf1_by_run) mean += v;
    mean /= cell.mf1_by_run.size();
    CHECK(cell.mean_mf1 == doctest::Approx(mean).epsilon(1e-12));
  }

  // Resumption: everything is already on disk.
  const MatrixResult second = run_matrix(grid, out);
  CHECK(second.executed == 0);
  CHECK(second.skipped == 30);
  for (size_t i = 0; i < first.cells.size(); ++i) {
    CHECK(second.cells[i].mean_mf1 == doctest::Approx(first.cells[i].mean_mf1).epsilon(1e-12));
  }

  // Summary exists with paired bootstrap differences.
  std::ifstream in(out + "/summary.json");
  REQUIRE(in.good());
  nlohmann::json summary;
  in >> summary;
  CHECK(summary.at("cells").size() == 2);
  CHECK(summary.at("bootstrap_diffs").size() == 1);

  fs::remove_all(out);
}

TEST_CASE("shards round-trip synthetic samples and epochs") {
  const std::string dir = "/tmp/freqtrain_shard_test";
  fs::create_directories(dir);

  const auto scheme = bin_edges();
  SyntheticDataset ds(5, 6, scheme);
  const auto samples = ds.materialize();
  write_synthetic_shard(dir + "/s.bin", samples, scheme, 5);
  const auto shard = read_synthetic_shard(dir + "/s.bin");
  CHECK(shard.count == 6);
  CHECK(shard.seed == 5);
  CHECK(shard.scheme.n_bins == 20);
  for (size_t k = 0; k < 6; ++k) {
    for (int b = 0; b < 20; ++b) {
      CHECK(shard.labels[k * 20 + b] == samples[k].label[b]);
    }
    // float32 storage: match to single precision
    for (int i = 0; i < 9000; ++i) {
      CHECK(shard.signals[k * 9000 + i] ==
            doctest::Approx(samples[k].signal[i]).epsilon(1e-6));
    }
  }

  const auto pools = make_proxy_pools(31, tiny_proxy());
  write_epoch_shard(dir + "/e.bin", pools.train);
  const auto epochs = read_epoch_shard(dir + "/e.bin");
  REQUIRE(epochs.size() == pools.train.size());
  for (size_t k = 0; k < epochs.size(); ++k) {
    CHECK(epochs[k].subject_id == pools.train[k].subject_id);
    CHECK(epochs[k].recording_id == pools.train[k].recording_id);
    CHECK(epochs[k].index == pools.train[k].index);
    CHECK(*epochs[k].stage == *pools.train[k].stage);
    CHECK(epochs[k].signal[100] == doctest::Approx(pools.train[k].signal[100]).epsilon(1e-6));
  }
  fs::remove_all(dir);
}

TEST_CASE("matrix records partial failures and still completes") {
  const std::string out = "/tmp/freqtrain_matrix_fail_test";
  fs::remove_all(out);
  MatrixGrid grid;
  grid.configurations = {TrainConfig::UntrainedFe};
  grid.repetitions = 1;
  grid.folds = 2;
  grid.base_seed = 9;
  grid.proxy = tiny_proxy();
  grid.hyper = tiny_hyper();
  grid.n_samples = {std::optional<int>(100000)};  // exceeds the pool: every run fails

  const MatrixResult res = run_matrix(grid, out);
  CHECK(res.failed == 2);
  CHECK(res.executed == 0);
  std::ifstream in(out + "/summary.json");
  CHECK(in.good());
  int records = 0;
  for (const auto& e : fs::directory_iterator(out + "/runs")) {
    std::ifstream f(e.path());
    nlohmann::json j;
    f >> j;
    CHECK(j.at("status") == "failed");
    CHECK(j.contains("error"));
    ++records;
  }
  CHECK(records == 2);
  fs::remove_all(out);
}

TEST_CASE("cv splits cover every fold even with small uneven groups") {
  // 6 subjects in 2 groups of 3 across 5 folds: the round-robin must
  // continue across groups so no fold is left empty.
  std::vector<SubjectInfo> six;
  for (int i = 0; i < 3; ++i) six.push_back({"a" + std::to_string(i), "grpA"});
  for (int i = 0; i < 3; ++i) six.push_back({"b" + std::to_string(i), "grpB"});
  const CvSplit split = make_cv_splits(six, 5, 2);
  int covered = 0;
  for (const auto& fold : split.fold_subjects) covered += fold.empty() ? 0 : 1;
  CHECK(covered == 5);
  for (int f = 0; f < 5; ++f) {
    CHECK(split.fold_validation[f].size() == 1);
  }

  // Ragged group sizes keep the per-group +-1 balance.
  std::vector<SubjectInfo> ragged;
  for (int i = 0; i < 7; ++i) ragged.push_back({"x" + std::to_string(i), "X"});
  for (int i = 0; i < 4; ++i) ragged.push_back({"y" + std::to_string(i), "Y"});
  const CvSplit rs = make_cv_splits(ragged, 3, 2);
  for (const char* grp : {"x", "y"}) {
    int lo = 1 << 20, hi = 0;
    for (const auto& fold : rs.fold_subjects) {
      int n = 0;
      for (const auto& s : fold) n += s[0] == grp[0];
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
  }
}
