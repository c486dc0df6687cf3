// freqtrain command line: synthetic data generation, EDF ingestion,
// cross-validation splits, pretraining, fine-tuning, experiment matrices and
// checkpoint evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "freqtrain/harness.hpp"
#include "freqtrain/proxy.hpp"
#include "freqtrain/shard.hpp"

namespace fs = std::filesystem;
using namespace freqtrain;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& v : out) {
    while (!v.empty() && v.front() == ' ') v.erase(v.begin());
    while (!v.empty() && v.back() == ' ') v.pop_back();
  }
  return out;
}

// recording_id,subject_id[,group] per line, header optional.
struct SubjectMap {
  std::map<std::string, std::string> subject_of;
  std::map<std::string, std::string> group_of;  // keyed by subject
};

SubjectMap load_subject_map(const std::string& path) {
  SubjectMap m;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open subject map " + path);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line.rfind("recording", 0) == 0) continue;
    const auto parts = split_csv_list(line);
    if (parts.size() < 2) continue;
    m.subject_of[parts[0]] = parts[1];
    if (parts.size() > 2) m.group_of[parts[1]] = parts[2];
  }
  return m;
}

int cmd_gen(uint64_t seed, int64_t count, int n_bins, double fmin, double fmax,
            const std::string& out_dir, int64_t shard_size) {
  fs::create_directories(out_dir);
  const BinScheme scheme = bin_edges(n_bins, fmin, fmax);
  SyntheticDataset ds(seed, static_cast<uint64_t>(count), scheme);
  int shard_no = 0;
  for (int64_t start = 0; start < count; start += shard_size) {
    const int64_t end = std::min(count, start + shard_size);
    std::vector<SyntheticSample> samples;
    samples.reserve(static_cast<size_t>(end - start));
    for (int64_t k = start; k < end; ++k) samples.push_back(ds.at(static_cast<uint64_t>(k)));
    char name[64];
    std::snprintf(name, sizeof(name), "synth-%05d.bin", shard_no++);
    write_synthetic_shard((fs::path(out_dir) / name).string(), samples, scheme, seed);
    std::cout << name << ": samples " << start << ".." << end - 1 << "\n";
  }
  return 0;
}

int cmd_ingest(const std::string& edf_dir, const std::string& hyp_dir,
               const std::string& channels_csv, const std::string& out_dir,
               const std::string& subject_map_path, int margin_min) {
  fs::create_directories(out_dir);
  const auto channels = split_csv_list(channels_csv);
  if (channels.size() != 3) {
    std::cerr << "ingest: exactly 3 channels required, got " << channels.size() << "\n";
    return 1;
  }
  SubjectMap smap;
  if (!subject_map_path.empty()) smap = load_subject_map(subject_map_path);

  std::vector<std::string> edfs;
  for (const auto& e : fs::directory_iterator(edf_dir)) {
    auto ext = e.path().extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".edf") edfs.push_back(e.path().string());
  }
  std::sort(edfs.begin(), edfs.end());

  int ok = 0, skipped = 0;
  for (const auto& path : edfs) {
    const std::string stem = fs::path(path).stem().string();
    try {
      EdfFile edf = parse_edf_file(path);

      // One hypnogram CSV per scorer: <stem>*.csv in the hypnogram dir.
      std::vector<Hypnogram> scorers;
      std::vector<std::string> hyp_files;
      for (const auto& e : fs::directory_iterator(hyp_dir)) {
        const std::string hstem = e.path().stem().string();
        if (e.path().extension() == ".csv" && hstem.rfind(stem, 0) == 0) {
          hyp_files.push_back(e.path().string());
        }
      }
      std::sort(hyp_files.begin(), hyp_files.end());
      for (const auto& h : hyp_files) scorers.push_back(parse_hypnogram_csv_file(h));
      if (scorers.empty()) {
        std::cerr << "skip " << stem << ": no hypnogram found\n";
        ++skipped;
        continue;
      }
      Hypnogram consensus = scorers.size() == 1 ? scorers[0] : merge_consensus(scorers);

      const auto [crop_start, crop_end] = crop_to_sleep_period(consensus, margin_min * 2);

      BuildEpochsOptions opt;
      opt.channels = channels;
      opt.crop_start = crop_start;
      opt.crop_end = crop_end;
      opt.recording_id = stem;
      opt.subject_id = smap.subject_of.count(stem) ? smap.subject_of.at(stem) : stem;
      const auto res = build_epochs(edf, consensus, opt);

      write_epoch_shard((fs::path(out_dir) / (stem + ".bin")).string(), res.epochs);
      std::cout << stem << ": " << res.epochs.size() << " epochs (" << res.dropped
                << " dropped)\n";
      ++ok;
    } catch (const std::exception& e) {
      // Broken recordings are skipped, not fatal.
      std::cerr << "skip " << stem << ": " << e.what() << "\n";
      ++skipped;
    }
  }
  std::cout << "ingested " << ok << " recordings, skipped " << skipped << "\n";
  return ok > 0 || skipped == 0 ? 0 : 1;
}

int cmd_split(const std::string& epochs_dir, int folds, uint64_t seed,
              const std::string& out_path, const std::string& subject_map_path) {
  SubjectMap smap;
  if (!subject_map_path.empty()) smap = load_subject_map(subject_map_path);
  const auto epochs = load_epoch_dir(epochs_dir);
  std::set<std::string> seen;
  std::vector<SubjectInfo> subjects;
  for (const auto& e : epochs) {
    if (seen.insert(e.subject_id).second) {
      SubjectInfo info;
      info.id = e.subject_id;
      info.group = smap.group_of.count(e.subject_id) ? smap.group_of.at(e.subject_id) : "";
      subjects.push_back(std::move(info));
    }
  }
  const CvSplit split = make_cv_splits(subjects, folds, seed);
  save_splits_json(out_path, split);
  std::cout << "split " << subjects.size() << " subjects into " << folds << " folds -> "
            << out_path << "\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_ckpt) {
  const ExperimentSpec spec = parse_experiment_spec_json(read_file(config_path));
  PretrainSpec ps;
  ps.seed = spec.seed;
  ps.n_synthetic = spec.n_synthetic;
  ps.hyper = spec.hyper;
  ps.on_epoch = [](int e, const PretrainEpochLog& l) {
    std::cout << "epoch " << e + 1 << ": train loss " << l.train_loss << " hamming "
              << l.train_hamming << " | val loss " << l.val_loss << " hamming "
              << l.val_hamming << std::endl;
  };
  const PretrainResult res = pretrain(ps);
  save_checkpoint(out_ckpt, res.params);

  nlohmann::json log = nlohmann::json::array();
  const std::string rid = spec_run_id(spec);
  for (size_t e = 0; e < res.log.size(); ++e) {
    const auto& l = res.log[e];
    nlohmann::json rec;
    rec["run_id"] = rid;
    rec["split"] = "validation";
    rec["epoch"] = e;
    rec["loss"] = l.val_loss;
    rec["hamming"] = l.val_hamming;
    rec["per_bin_accuracy"] = l.val_per_bin_accuracy;
    rec["macro_f1"] = nullptr;
    rec["confusion_matrix"] = nullptr;
    rec["train_loss"] = l.train_loss;
    rec["train_hamming"] = l.train_hamming;
    log.push_back(std::move(rec));
  }
  std::ofstream(out_ckpt + ".log.json") << log.dump(2) << "\n";
  std::cout << "checkpoint -> " << out_ckpt << "\n";
  return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& ckpt_path,
                 const std::string& out_dir) {
  const ExperimentSpec spec = parse_experiment_spec_json(read_file(config_path));
  FinetunePools pools;
  if (spec.data == "proxy") {
    pools = make_proxy_pools(data_seed_for(spec.seed, spec.repetition, spec.fold), spec.proxy);
  } else {
    const CvSplit cv = load_splits_json(spec.splits_path);
    pools = pools_from_split(load_epoch_dir(spec.data), split_members(cv, spec.fold));
  }
  ParamStore pretrained;
  const ParamStore* pre = nullptr;
  if (spec.configuration == TrainConfig::FixedFe ||
      spec.configuration == TrainConfig::FinetunedFe) {
    if (ckpt_path.empty()) {
      std::cerr << config_name(spec.configuration) << " requires --checkpoint\n";
      return 1;
    }
    pretrained = load_checkpoint(ckpt_path);
    pre = &pretrained;
  }

  const FinetuneResult res = finetune(spec, pools, pre);

  fs::create_directories(out_dir);
  const std::string rid = spec_run_id(spec);
  nlohmann::json record;
  record["run_id"] = rid;
  record["spec"] = nlohmann::json::parse(spec_canonical_json(spec));
  record["status"] = "ok";
  record["test_macro_f1"] = res.test_macro_f1;
  record["best_val_macro_f1"] = res.best_val_macro_f1;
  record["epochs_ran"] = res.epochs_ran;
  record["val_macro_f1_log"] = res.val_macro_f1_log;
  nlohmann::json cmj = nlohmann::json::array();
  for (int r = 0; r < res.confusion.k; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < res.confusion.k; ++c) row.push_back(res.confusion.at(r, c));
    cmj.push_back(std::move(row));
  }
  record["confusion_matrix"] = cmj;
  const std::string out_path = (fs::path(out_dir) / (rid + ".json")).string();
  std::ofstream(out_path) << record.dump(2) << "\n";
  save_checkpoint((fs::path(out_dir) / (rid + ".ckpt")).string(), res.params);
  std::cout << "test macro F1 " << res.test_macro_f1 << " after " << res.epochs_ran
            << " epochs -> " << out_path << "\n";
  return 0;
}

int cmd_matrix(const std::string& grid_path, const std::string& out_dir) {
  const MatrixGrid grid = parse_matrix_grid_json(read_file(grid_path));
  const MatrixResult res = run_matrix(grid, out_dir);
  std::cout << "matrix: executed " << res.executed << ", skipped " << res.skipped
            << ", failed " << res.failed << "\n";
  for (const auto& c : res.cells) {
    std::cout << "  " << c.configuration;
    if (c.n_synthetic) std::cout << " n_synthetic=" << *c.n_synthetic;
    if (c.n_subjects) std::cout << " n_subjects=" << *c.n_subjects;
    if (c.n_samples) std::cout << " n_samples=" << *c.n_samples;
    std::cout << ": mean MF1 " << c.mean_mf1 << " (std " << c.std_mf1 << ", " << c.runs
              << " runs)\n";
  }
  return res.failed == 0 ? 0 : 1;
}

int cmd_eval(const std::string& ckpt_path, const std::string& epochs_dir,
             const std::string& splits_path, int fold) {
  ParamStore params = load_checkpoint(ckpt_path);
  if (!params.has("c_f.fc.w")) {
    std::cerr << "checkpoint has no staging head; evaluate a fine-tuned model\n";
    return 1;
  }
  const CvSplit cv = load_splits_json(splits_path);
  FinetunePools pools = pools_from_split(load_epoch_dir(epochs_dir), split_members(cv, fold));

  ModelConfig cfg;
  cfg.filters = params.at("f.conv1.w").dim(0);
  cfg.lstm_hidden = params.at("c_f.lstm.fw.w_hh").dim(0);
  auto seqs = assemble_sequences(pools.test, cfg.seq_len);
  if (seqs.empty()) {
    std::cerr << "no labeled test sequences in fold " << fold << "\n";
    return 1;
  }
  ConfusionMatrix cm(kNumStages);
  const size_t batch = 64;
  for (size_t start = 0; start < seqs.size(); start += batch) {
    const size_t end = std::min(seqs.size(), start + batch);
    const int b = static_cast<int>(end - start);
    std::vector<double> buf(static_cast<size_t>(cfg.seq_len) * b * 3 * kEpochSamples, 0.0);
    for (int t = 0; t < cfg.seq_len; ++t) {
      for (int j = 0; j < b; ++j) {
        const EpochRecord* e = seqs[start + static_cast<size_t>(j)].window[static_cast<size_t>(t)];
        if (e) {
          std::copy(e->signal.begin(), e->signal.end(),
                    buf.begin() + (static_cast<size_t>(t) * b + j) * 3 * kEpochSamples);
        }
      }
    }
    Tensor x = Tensor::from_values({cfg.seq_len * b, 3, kEpochSamples}, buf);
    Tensor feats = extract_features(params, x, cfg, false, nullptr);
    std::vector<Tensor> steps;
    for (int t = 0; t < cfg.seq_len; ++t) steps.push_back(slice_rows(feats, t * b, (t + 1) * b));
    Tensor probs = predict_stage_probs(params, steps, cfg, false, nullptr);
    for (int j = 0; j < b; ++j) {
      const double* row = probs.values().data() + static_cast<size_t>(j) * cfg.n_stages;
      int arg = 0;
      for (int c = 1; c < cfg.n_stages; ++c) {
        if (row[c] > row[arg]) arg = c;
      }
      cm.add(seqs[start + static_cast<size_t>(j)].target_stage, arg);
    }
  }
  std::cout << "test macro F1: " << macro_f1(cm) << "\n";
  std::cout << "confusion (rows true W,N1,N2,N3,REM):\n";
  for (int r = 0; r < cm.k; ++r) {
    for (int c = 0; c < cm.k; ++c) std::cout << cm.at(r, c) << (c + 1 < cm.k ? "\t" : "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-pretraining toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic sine-mixture shards");
  uint64_t gen_seed = 1;
  int64_t gen_count = 101000, gen_shard = 10000;
  int gen_bins = 20;
  double gen_fmin = 0.3, gen_fmax = 35.0;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--bins", gen_bins, "number of frequency bins");
  gen->add_option("--fmin", gen_fmin, "lower band edge (Hz)");
  gen->add_option("--fmax", gen_fmax, "upper band edge (Hz)");
  gen->add_option("--shard-size", gen_shard, "samples per shard file");
  gen->add_option("--out", gen_out, "output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "preprocess EDF recordings into epoch shards");
  std::string in_edf, in_hyp, in_channels = "C3-M2,F3-M2,EOG1", in_out, in_smap;
  int in_margin = 30;
  ingest->add_option("--edf-dir", in_edf)->required();
  ingest->add_option("--hypnogram-dir", in_hyp)->required();
  ingest->add_option("--channels", in_channels, "3 comma-separated EDF labels");
  ingest->add_option("--subject-map", in_smap, "CSV: recording_id,subject_id[,group]");
  ingest->add_option("--margin-min", in_margin, "crop margin around sleep (minutes)");
  ingest->add_option("--out", in_out)->required();

  // split
  auto* split = app.add_subcommand("split", "build subject-wise cross-validation folds");
  std::string sp_epochs, sp_out = "splits.json", sp_smap;
  int sp_folds = 5;
  uint64_t sp_seed = 1;
  split->add_option("--epochs", sp_epochs)->required();
  split->add_option("--folds", sp_folds);
  split->add_option("--seed", sp_seed);
  split->add_option("--subject-map", sp_smap, "CSV with group tags for stratification");
  split->add_option("--out", sp_out);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "frequency pretraining on synthetic data");
  std::string pre_cfg, pre_out = "pretrained.ckpt";
  pre->add_option("--config", pre_cfg)->required();
  pre->add_option("--out", pre_out);

  // finetune
  auto* fin = app.add_subcommand("finetune", "sleep-staging fine-tuning");
  std::string fin_cfg, fin_ckpt, fin_out = results_root();
  fin->add_option("--config", fin_cfg)->required();
  fin->add_option("--checkpoint", fin_ckpt);
  fin->add_option("--out", fin_out);

  // matrix
  auto* mat = app.add_subcommand("matrix", "run a full experiment grid");
  std::string mat_grid, mat_out = results_root();
  mat->add_option("--grid", mat_grid)->required();
  mat->add_option("--out", mat_out);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint on a test fold");
  std::string ev_ckpt, ev_epochs, ev_split;
  int ev_fold = 0;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--epochs", ev_epochs)->required();
  ev->add_option("--split", ev_split)->required();
  ev->add_option("--fold", ev_fold);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_seed, gen_count, gen_bins, gen_fmin, gen_fmax, gen_out, gen_shard);
    if (ingest->parsed()) return cmd_ingest(in_edf, in_hyp, in_channels, in_out, in_smap, in_margin);
    if (split->parsed()) return cmd_split(sp_epochs, sp_folds, sp_seed, sp_out, sp_smap);
    if (pre->parsed()) return cmd_pretrain(pre_cfg, pre_out);
    if (fin->parsed()) return cmd_finetune(fin_cfg, fin_ckpt, fin_out);
    if (mat->parsed()) return cmd_matrix(mat_grid, mat_out);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_epochs, ev_split, ev_fold);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
