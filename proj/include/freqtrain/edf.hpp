#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqtrain/dsp.hpp"

namespace freqtrain {

// Parse failures carry the byte offset of the offending field or record.
class EdfError : public std::runtime_error {
 public:
  EdfError(const std::string& msg, int64_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  int64_t byte_offset;
};

struct EdfSignalHeader {
  std::string label;          // 16 chars
  std::string transducer;     // 80
  std::string dimension;      // 8
  double physical_min = 0.0;
  double physical_max = 0.0;
  int digital_min = 0;
  int digital_max = 0;
  std::string prefiltering;   // 80
  int samples_per_record = 0;
};

struct EdfHeader {
  std::string version;     // 8 chars
  std::string patient;     // 80
  std::string recording;   // 80
  std::string start_date;  // 8, dd.mm.yy
  std::string start_time;  // 8, hh.mm.ss
  int header_bytes = 0;
  int n_records = 0;
  double record_duration = 0.0;  // seconds
  int n_signals = 0;
  std::vector<EdfSignalHeader> signals;
};

struct EdfFile {
  EdfHeader header;
  std::vector<std::vector<int16_t>> digital;   // [signal][sample]
  std::vector<std::vector<double>> physical;   // same layout, converted

  double signal_rate(int i) const {
    return header.signals[static_cast<size_t>(i)].samples_per_record /
           header.record_duration;
  }
  int find_signal(const std::string& label) const;  // -1 when absent
};

EdfFile parse_edf(const std::vector<uint8_t>& bytes);
EdfFile parse_edf_file(const std::string& path);

// Serializes a well-formed EDF from digital samples; the fixture writer for
// round-trip tests and synthetic recordings.
std::vector<uint8_t> write_edf(const EdfHeader& header,
                               const std::vector<std::vector<int16_t>>& digital);
void write_edf_file(const std::string& path, const EdfHeader& header,
                    const std::vector<std::vector<int16_t>>& digital);

// ---- hypnograms ----

enum class StageCode : uint8_t { Wake, N1, N2, N3, Rem, Artifact, Movement, Unknown };

inline constexpr int kNumStages = 5;  // Wake..Rem as model classes 0..4

const char* stage_name(StageCode c);
bool stage_is_scored(StageCode c);  // true for the five sleep stages

struct Hypnogram {
  std::vector<StageCode> stages;
  double epoch_seconds = 30.0;
  std::string scorer_id;
};

// CSV with a header row, then `epoch_index,stage` lines. Stage tokens:
// W, N1, N2, N3, N4, REM, ART, MOV, UNK. N4 maps to N3 on ingestion.
// Epoch indices must be 0..n-1 in order.
Hypnogram parse_hypnogram_csv(const std::string& text, const std::string& scorer_id);
Hypnogram parse_hypnogram_csv_file(const std::string& path);

// Majority vote per epoch; ties resolved by the most reliable scorer's vote
// among the tied stages. When no ranking is supplied the scorers are ranked
// by mean pairwise agreement (highest first, ties by list order).
Hypnogram merge_consensus(const std::vector<Hypnogram>& hypnograms,
                          const std::vector<int>* reliability_order = nullptr);
std::vector<int> rank_scorers_by_agreement(const std::vector<Hypnogram>& hypnograms);

// Inclusive epoch range [first_nonwake - margin, last_nonwake + margin],
// clamped to the recording. Throws when every scored epoch is Wake.
std::pair<int, int> crop_to_sleep_period(const Hypnogram& hypnogram, int margin_epochs = 60);

// ---- epoching ----

struct EpochRecord {
  std::vector<double> signal;  // 3 x 3000, channel-major, normalized + clipped
  std::optional<int> stage;    // 0..4 when scored
  std::string subject_id;
  std::string recording_id;
  int index = 0;  // epoch position within the recording
  bool placeholder = false;
};

struct BuildEpochsOptions {
  std::vector<std::string> channels;  // exactly 3 EDF labels
  double bandpass_lo = 0.3;
  double bandpass_hi = 35.0;
  int bandpass_order = 8;
  double target_rate = 100.0;
  int crop_start = 0;   // inclusive epoch range, e.g. from crop_to_sleep_period
  int crop_end = -1;    // -1: last epoch of the hypnogram
  std::string subject_id;
  std::string recording_id;
};

struct BuildEpochsResult {
  std::vector<EpochRecord> epochs;
  int dropped = 0;  // artifact/movement/unknown plus partial tails
};

// Filter -> resample -> slice -> normalize -> clip, per channel, dropping
// unscored epochs. emitted + dropped equals the cropped hypnogram length.
BuildEpochsResult build_epochs(const EdfFile& edf, const Hypnogram& hypnogram,
                               const BuildEpochsOptions& options);

}  // namespace freqtrain
