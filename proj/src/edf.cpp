#include "freqtrain/edf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace freqtrain {

namespace {

std::string read_field(const std::vector<uint8_t>& bytes, size_t offset, size_t len) {
  if (offset + len > bytes.size()) {
    throw EdfError("truncated header field", static_cast<int64_t>(offset));
  }
  std::string s(reinterpret_cast<const char*>(bytes.data()) + offset, len);
  // EDF pads fields with trailing spaces.
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  size_t start = 0;
  while (start < s.size() && s[start] == ' ') ++start;
  return s.substr(start);
}

int64_t parse_int_field(const std::vector<uint8_t>& bytes, size_t offset, size_t len,
                        const char* what) {
  const std::string s = read_field(bytes, offset, len);
  if (s.empty()) throw EdfError(std::string("empty numeric field: ") + what,
                                static_cast<int64_t>(offset));
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw EdfError(std::string("non-numeric field: ") + what + " = '" + s + "'",
                   static_cast<int64_t>(offset));
  }
  if (pos != s.size()) {
    throw EdfError(std::string("non-numeric field: ") + what + " = '" + s + "'",
                   static_cast<int64_t>(offset));
  }
  return v;
}

double parse_double_field(const std::vector<uint8_t>& bytes, size_t offset, size_t len,
                          const char* what) {
  const std::string s = read_field(bytes, offset, len);
  if (s.empty()) throw EdfError(std::string("empty numeric field: ") + what,
                                static_cast<int64_t>(offset));
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw EdfError(std::string("non-numeric field: ") + what + " = '" + s + "'",
                   static_cast<int64_t>(offset));
  }
  if (pos != s.size()) {
    throw EdfError(std::string("non-numeric field: ") + what + " = '" + s + "'",
                   static_cast<int64_t>(offset));
  }
  return v;
}

void write_padded(std::vector<uint8_t>& out, const std::string& s, size_t len) {
  std::string field = s;
  if (field.size() > len) field.resize(len);
  field.resize(len, ' ');
  out.insert(out.end(), field.begin(), field.end());
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

int EdfFile::find_signal(const std::string& label) const {
  for (size_t i = 0; i < header.signals.size(); ++i) {
    if (header.signals[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

EdfFile parse_edf(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 256) throw EdfError("file shorter than the 256-byte header", 0);

  EdfFile f;
  EdfHeader& h = f.header;
  h.version = read_field(bytes, 0, 8);
  h.patient = read_field(bytes, 8, 80);
  h.recording = read_field(bytes, 88, 80);
  h.start_date = read_field(bytes, 168, 8);
  h.start_time = read_field(bytes, 176, 8);
  h.header_bytes = static_cast<int>(parse_int_field(bytes, 184, 8, "header_bytes"));
  h.n_records = static_cast<int>(parse_int_field(bytes, 236, 8, "n_records"));
  h.record_duration = parse_double_field(bytes, 244, 8, "record_duration");
  h.n_signals = static_cast<int>(parse_int_field(bytes, 252, 4, "n_signals"));

  if (h.n_signals <= 0) throw EdfError("n_signals must be positive", 252);
  if (h.record_duration <= 0.0) throw EdfError("record_duration must be positive", 244);
  const int expected_header = 256 * (1 + h.n_signals);
  if (h.header_bytes != expected_header) {
    throw EdfError("header_bytes " + std::to_string(h.header_bytes) + " != 256*(1+" +
                       std::to_string(h.n_signals) + ")",
                   184);
  }
  if (bytes.size() < static_cast<size_t>(expected_header)) {
    throw EdfError("file shorter than declared header", static_cast<int64_t>(bytes.size()));
  }

  // Signal header block stores each field for all signals consecutively.
  const size_t ns = static_cast<size_t>(h.n_signals);
  size_t off = 256;
  h.signals.resize(ns);
  for (size_t i = 0; i < ns; ++i) h.signals[i].label = read_field(bytes, off + i * 16, 16);
  off += ns * 16;
  for (size_t i = 0; i < ns; ++i) h.signals[i].transducer = read_field(bytes, off + i * 80, 80);
  off += ns * 80;
  for (size_t i = 0; i < ns; ++i) h.signals[i].dimension = read_field(bytes, off + i * 8, 8);
  off += ns * 8;
  for (size_t i = 0; i < ns; ++i) {
    h.signals[i].physical_min = parse_double_field(bytes, off + i * 8, 8, "physical_min");
  }
  off += ns * 8;
  for (size_t i = 0; i < ns; ++i) {
    h.signals[i].physical_max = parse_double_field(bytes, off + i * 8, 8, "physical_max");
  }
  off += ns * 8;
  for (size_t i = 0; i < ns; ++i) {
    h.signals[i].digital_min =
        static_cast<int>(parse_int_field(bytes, off + i * 8, 8, "digital_min"));
  }
  off += ns * 8;
  for (size_t i = 0; i < ns; ++i) {
    h.signals[i].digital_max =
        static_cast<int>(parse_int_field(bytes, off + i * 8, 8, "digital_max"));
  }
  off += ns * 8;
  for (size_t i = 0; i < ns; ++i) {
    h.signals[i].prefiltering = read_field(bytes, off + i * 80, 80);
  }
  off += ns * 80;
  for (size_t i = 0; i < ns; ++i) {
    h.signals[i].samples_per_record =
        static_cast<int>(parse_int_field(bytes, off + i * 8, 8, "samples_per_record"));
    if (h.signals[i].samples_per_record <= 0) {
      throw EdfError("samples_per_record must be positive",
                     static_cast<int64_t>(off + i * 8));
    }
  }
  off += ns * 8;
  off += ns * 32;  // reserved

  for (size_t i = 0; i < ns; ++i) {
    const auto& s = h.signals[i];
    if (s.digital_min >= s.digital_max) {
      throw EdfError("digital_min must be below digital_max for signal '" + s.label + "'",
                     static_cast<int64_t>(256 + ns * (16 + 80 + 8 + 8 + 8) + i * 8));
    }
    if (s.physical_min == s.physical_max) {
      throw EdfError("physical range is empty for signal '" + s.label + "'",
                     static_cast<int64_t>(256 + ns * (16 + 80 + 8) + i * 8));
    }
  }

  size_t record_samples = 0;
  for (const auto& s : h.signals) record_samples += static_cast<size_t>(s.samples_per_record);
  const size_t record_bytes = record_samples * 2;
  const size_t data_bytes = bytes.size() - static_cast<size_t>(expected_header);
  if (h.n_records == -1) {
    if (record_bytes == 0 || data_bytes % record_bytes != 0) {
      throw EdfError("cannot infer record count from file size",
                     static_cast<int64_t>(expected_header));
    }
    h.n_records = static_cast<int>(data_bytes / record_bytes);
  }
  if (h.n_records < 0) throw EdfError("negative n_records", 236);
  if (data_bytes != record_bytes * static_cast<size_t>(h.n_records)) {
    throw EdfError("data region has " + std::to_string(data_bytes) + " bytes, expected " +
                       std::to_string(record_bytes * static_cast<size_t>(h.n_records)),
                   static_cast<int64_t>(expected_header));
  }

  f.digital.assign(ns, {});
  for (size_t i = 0; i < ns; ++i) {
    f.digital[i].reserve(static_cast<size_t>(h.n_records) *
                         static_cast<size_t>(h.signals[i].samples_per_record));
  }
  size_t pos = static_cast<size_t>(expected_header);
  for (int r = 0; r < h.n_records; ++r) {
    for (size_t i = 0; i < ns; ++i) {
      const int spr = h.signals[i].samples_per_record;
      for (int k = 0; k < spr; ++k) {
        const uint16_t lo = bytes[pos];
        const uint16_t hi = bytes[pos + 1];
        f.digital[i].push_back(static_cast<int16_t>(lo | (hi << 8)));
        pos += 2;
      }
    }
  }

  f.physical.assign(ns, {});
  for (size_t i = 0; i < ns; ++i) {
    const auto& s = h.signals[i];
    const double scale =
        (s.physical_max - s.physical_min) / (static_cast<double>(s.digital_max) - s.digital_min);
    f.physical[i].resize(f.digital[i].size());
    for (size_t k = 0; k < f.digital[i].size(); ++k) {
      f.physical[i][k] = s.physical_min + (f.digital[i][k] - s.digital_min) * scale;
    }
  }
  return f;
}

EdfFile parse_edf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EdfError("cannot open file: " + path, 0);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return parse_edf(bytes);
}

std::vector<uint8_t> write_edf(const EdfHeader& header,
                               const std::vector<std::vector<int16_t>>& digital) {
  if (digital.size() != header.signals.size()) {
    throw EdfError("signal count mismatch between header and data", 0);
  }
  const size_t ns = header.signals.size();
  for (size_t i = 0; i < ns; ++i) {
    const size_t expect = static_cast<size_t>(header.n_records) *
                          static_cast<size_t>(header.signals[i].samples_per_record);
    if (digital[i].size() != expect) {
      throw EdfError("signal '" + header.signals[i].label + "' has " +
                         std::to_string(digital[i].size()) + " samples, header implies " +
                         std::to_string(expect),
                     0);
    }
  }

  std::vector<uint8_t> out;
  write_padded(out, header.version.empty() ? "0" : header.version, 8);
  write_padded(out, header.patient, 80);
  write_padded(out, header.recording, 80);
  write_padded(out, header.start_date.empty() ? "01.01.01" : header.start_date, 8);
  write_padded(out, header.start_time.empty() ? "00.00.00" : header.start_time, 8);
  write_padded(out, std::to_string(256 * (1 + ns)), 8);
  write_padded(out, "", 44);
  write_padded(out, std::to_string(header.n_records), 8);
  write_padded(out, format_number(header.record_duration), 8);
  write_padded(out, std::to_string(ns), 4);

  for (const auto& s : header.signals) write_padded(out, s.label, 16);
  for (const auto& s : header.signals) write_padded(out, s.transducer, 80);
  for (const auto& s : header.signals) write_padded(out, s.dimension, 8);
  for (const auto& s : header.signals) write_padded(out, format_number(s.physical_min), 8);
  for (const auto& s : header.signals) write_padded(out, format_number(s.physical_max), 8);
  for (const auto& s : header.signals) write_padded(out, std::to_string(s.digital_min), 8);
  for (const auto& s : header.signals) write_padded(out, std::to_string(s.digital_max), 8);
  for (const auto& s : header.signals) write_padded(out, s.prefiltering, 80);
  for (const auto& s : header.signals) write_padded(out, std::to_string(s.samples_per_record), 8);
  for (size_t i = 0; i < ns; ++i) write_padded(out, "", 32);

  for (int r = 0; r < header.n_records; ++r) {
    for (size_t i = 0; i < ns; ++i) {
      const int spr = header.signals[i].samples_per_record;
      for (int k = 0; k < spr; ++k) {
        const uint16_t v =
            static_cast<uint16_t>(digital[i][static_cast<size_t>(r) * spr + k]);
        out.push_back(static_cast<uint8_t>(v & 0xff));
        out.push_back(static_cast<uint8_t>(v >> 8));
      }
    }
  }
  return out;
}

void write_edf_file(const std::string& path, const EdfHeader& header,
                    const std::vector<std::vector<int16_t>>& digital) {
  const auto bytes = write_edf(header, digital);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EdfError("cannot write file: " + path, 0);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// ---- hypnograms ----

const char* stage_name(StageCode c) {
  switch (c) {
    case StageCode::Wake: return "W";
    case StageCode::N1: return "N1";
    case StageCode::N2: return "N2";
    case StageCode::N3: return "N3";
    case StageCode::Rem: return "REM";
    case StageCode::Artifact: return "ART";
    case StageCode::Movement: return "MOV";
    case StageCode::Unknown: return "UNK";
  }
  return "?";
}

bool stage_is_scored(StageCode c) {
  return static_cast<int>(c) < kNumStages;
}

namespace {
StageCode stage_from_token(const std::string& tok, int64_t line_no) {
  if (tok == "W") return StageCode::Wake;
  if (tok == "N1") return StageCode::N1;
  if (tok == "N2") return StageCode::N2;
  if (tok == "N3") return StageCode::N3;
  if (tok == "N4") return StageCode::N3;  // N3 and N4 merge on ingestion
  if (tok == "REM") return StageCode::Rem;
  if (tok == "ART") return StageCode::Artifact;
  if (tok == "MOV") return StageCode::Movement;
  if (tok == "UNK") return StageCode::Unknown;
  throw EdfError("unknown stage token '" + tok + "' at line " + std::to_string(line_no), 0);
}
}  // namespace

Hypnogram parse_hypnogram_csv(const std::string& text, const std::string& scorer_id) {
  Hypnogram h;
  h.scorer_id = scorer_id;
  std::istringstream in(text);
  std::string line;
  int64_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;  // first non-empty line is the header row
      continue;
    }
    const size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw EdfError("hypnogram line " + std::to_string(line_no) + " missing comma", 0);
    }
    int64_t idx = 0;
    try {
      idx = std::stoll(line.substr(0, comma));
    } catch (const std::exception&) {
      throw EdfError("hypnogram line " + std::to_string(line_no) + " has a bad epoch index", 0);
    }
    if (idx != static_cast<int64_t>(h.stages.size())) {
      throw EdfError("hypnogram epoch indices must run 0..n-1; saw " + std::to_string(idx) +
                         " at line " + std::to_string(line_no),
                     0);
    }
    std::string tok = line.substr(comma + 1);
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == ' ') tok.pop_back();
    h.stages.push_back(stage_from_token(tok, line_no));
  }
  return h;
}

Hypnogram parse_hypnogram_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EdfError("cannot open hypnogram: " + path, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string stem = path;
  const size_t slash = stem.find_last_of('/');
  if (slash != std::string::npos) stem = stem.substr(slash + 1);
  const size_t dot = stem.find_last_of('.');
  if (dot != std::string::npos) stem = stem.substr(0, dot);
  return parse_hypnogram_csv(ss.str(), stem);
}

std::vector<int> rank_scorers_by_agreement(const std::vector<Hypnogram>& hypnograms) {
  const int n = static_cast<int>(hypnograms.size());
  std::vector<double> agree(static_cast<size_t>(n), 0.0);
  if (n > 1) {
    for (int a = 0; a < n; ++a) {
      double total = 0.0;
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        size_t match = 0;
        for (size_t e = 0; e < hypnograms[a].stages.size(); ++e) {
          if (hypnograms[a].stages[e] == hypnograms[b].stages[e]) ++match;
        }
        total += static_cast<double>(match) / hypnograms[a].stages.size();
      }
      agree[static_cast<size_t>(a)] = total / (n - 1);
    }
  }
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return agree[static_cast<size_t>(a)] > agree[static_cast<size_t>(b)]; });
  return order;
}

Hypnogram merge_consensus(const std::vector<Hypnogram>& hypnograms,
                          const std::vector<int>* reliability_order) {
  if (hypnograms.empty()) throw EdfError("merge_consensus: no scorers", 0);
  const size_t len = hypnograms[0].stages.size();
  for (const auto& h : hypnograms) {
    if (h.stages.size() != len) {
      throw EdfError("merge_consensus: hypnogram lengths differ", 0);
    }
  }
  std::vector<int> order =
      reliability_order ? *reliability_order : rank_scorers_by_agreement(hypnograms);

  Hypnogram out;
  out.epoch_seconds = hypnograms[0].epoch_seconds;
  out.scorer_id = "consensus";
  out.stages.resize(len);
  for (size_t e = 0; e < len; ++e) {
    std::map<StageCode, int> votes;
    for (const auto& h : hypnograms) votes[h.stages[e]]++;
    int best = 0;
    for (const auto& [stage, count] : votes) best = std::max(best, count);
    std::vector<StageCode> tied;
    for (const auto& [stage, count] : votes) {
      if (count == best) tied.push_back(stage);
    }
    if (tied.size() == 1) {
      out.stages[e] = tied[0];
    } else {
      // Most reliable scorer whose vote is among the tied stages decides.
      StageCode pick = tied[0];
      for (int scorer : order) {
        const StageCode v = hypnograms[static_cast<size_t>(scorer)].stages[e];
        if (std::find(tied.begin(), tied.end(), v) != tied.end()) {
          pick = v;
          break;
        }
      }
      out.stages[e] = pick;
    }
  }
  return out;
}

std::pair<int, int> crop_to_sleep_period(const Hypnogram& hypnogram, int margin_epochs) {
  int first = -1, last = -1;
  for (size_t e = 0; e < hypnogram.stages.size(); ++e) {
    const StageCode s = hypnogram.stages[e];
    if (stage_is_scored(s) && s != StageCode::Wake) {
      if (first < 0) first = static_cast<int>(e);
      last = static_cast<int>(e);
    }
  }
  if (first < 0) {
    throw EdfError("crop_to_sleep_period: recording contains no non-Wake epochs", 0);
  }
  const int start = std::max(0, first - margin_epochs);
  const int end = std::min(static_cast<int>(hypnogram.stages.size()) - 1, last + margin_epochs);
  return {start, end};
}

BuildEpochsResult build_epochs(const EdfFile& edf, const Hypnogram& hypnogram,
                               const BuildEpochsOptions& options) {
  if (options.channels.size() != 3) {
    throw EdfError("build_epochs: exactly 3 channels required", 0);
  }
  const int crop_end = options.crop_end >= 0
                           ? options.crop_end
                           : static_cast<int>(hypnogram.stages.size()) - 1;
  if (options.crop_start < 0 || crop_end >= static_cast<int>(hypnogram.stages.size()) ||
      options.crop_start > crop_end) {
    throw EdfError("build_epochs: crop range outside hypnogram", 0);
  }

  const int samples_per_epoch =
      static_cast<int>(hypnogram.epoch_seconds * options.target_rate);  // 3000 at 100 Hz

  // Full-recording preprocessing per channel, then epoch slicing.
  std::vector<std::vector<double>> prepped(3);
  for (int c = 0; c < 3; ++c) {
    const int idx = edf.find_signal(options.channels[static_cast<size_t>(c)]);
    if (idx < 0) {
      throw EdfError("build_epochs: channel '" + options.channels[static_cast<size_t>(c)] +
                         "' not present in the recording",
                     0);
    }
    ChannelSignal raw;
    raw.label = options.channels[static_cast<size_t>(c)];
    raw.sample_rate = edf.signal_rate(idx);
    raw.samples = edf.physical[static_cast<size_t>(idx)];
    ChannelSignal filtered = butter_bandpass_zero_phase(raw, options.bandpass_lo,
                                                        options.bandpass_hi,
                                                        options.bandpass_order);
    ChannelSignal resampled = polyphase_resample(filtered, options.target_rate);
    prepped[static_cast<size_t>(c)] = std::move(resampled.samples);
  }

  BuildEpochsResult out;
  for (int e = options.crop_start; e <= crop_end; ++e) {
    const StageCode code = hypnogram.stages[static_cast<size_t>(e)];
    if (!stage_is_scored(code)) {
      ++out.dropped;  // artifacts, movement, unknown
      continue;
    }
    const size_t begin = static_cast<size_t>(e) * static_cast<size_t>(samples_per_epoch);
    const size_t end = begin + static_cast<size_t>(samples_per_epoch);
    bool complete = true;
    for (int c = 0; c < 3; ++c) complete = complete && end <= prepped[static_cast<size_t>(c)].size();
    if (!complete) {
      ++out.dropped;  // partial tail
      continue;
    }
    EpochRecord rec;
    rec.signal.resize(3 * static_cast<size_t>(samples_per_epoch));
    for (int c = 0; c < 3; ++c) {
      std::vector<double> slice(prepped[static_cast<size_t>(c)].begin() + static_cast<int64_t>(begin),
                                prepped[static_cast<size_t>(c)].begin() + static_cast<int64_t>(end));
      auto norm = epoch_normalize(slice);
      clip_inplace(norm);
      std::copy(norm.begin(), norm.end(),
                rec.signal.begin() + static_cast<size_t>(c) * samples_per_epoch);
    }
    rec.stage = static_cast<int>(code);
    rec.subject_id = options.subject_id;
    rec.recording_id = options.recording_id;
    rec.index = e;
    out.epochs.push_back(std::move(rec));
  }
  return out;
}

}  // namespace freqtrain
