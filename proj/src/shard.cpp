#include "freqtrain/shard.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace freqtrain {

namespace {
static_assert(std::endian::native == std::endian::little,
              "shard I/O assumes a little-endian host");

void write_f32_block(std::ofstream& out, const std::vector<float>& data) {
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::ifstream open_shard(const std::string& path, nlohmann::json& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SynthError("cannot open shard: " + path);
  std::string line;
  if (!std::getline(in, line)) throw SynthError("shard missing header: " + path);
  try {
    header = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw SynthError("bad shard header in " + path + ": " + e.what());
  }
  if (header.value("format_version", 0) != 1) {
    throw SynthError("unsupported shard version in " + path);
  }
  return in;
}
}  // namespace

void write_synthetic_shard(const std::string& path,
                           const std::vector<SyntheticSample>& samples,
                           const BinScheme& scheme, uint64_t seed) {
  nlohmann::json h;
  h["format_version"] = 1;
  h["kind"] = "synthetic";
  h["count"] = samples.size();
  h["shape"] = {kSynthChannels, kEpochSamples};
  h["n_bins"] = scheme.n_bins;
  h["f_min"] = scheme.f_min;
  h["f_max"] = scheme.f_max;
  h["seed"] = seed;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw SynthError("cannot write shard: " + path);
  out << h.dump() << "\n";
  std::vector<float> buf(static_cast<size_t>(kSynthChannels) * kEpochSamples);
  for (const auto& s : samples) {
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(s.signal[i]);
    write_f32_block(out, buf);
  }
  for (const auto& s : samples) {
    out.write(reinterpret_cast<const char*>(s.label.data()),
              static_cast<std::streamsize>(s.label.size()));
  }
}

SyntheticShard read_synthetic_shard(const std::string& path) {
  nlohmann::json h;
  std::ifstream in = open_shard(path, h);
  if (h.value("kind", "") != "synthetic") throw SynthError("not a synthetic shard: " + path);
  SyntheticShard shard;
  shard.seed = h.value("seed", uint64_t{0});
  shard.scheme = bin_edges(h.at("n_bins").get<int>(), h.at("f_min").get<double>(),
                           h.at("f_max").get<double>());
  shard.count = h.at("count").get<size_t>();
  const size_t sig_n = shard.count * kSynthChannels * kEpochSamples;
  shard.signals.resize(sig_n);
  in.read(reinterpret_cast<char*>(shard.signals.data()),
          static_cast<std::streamsize>(sig_n * sizeof(float)));
  shard.labels.resize(shard.count * static_cast<size_t>(shard.scheme.n_bins));
  in.read(reinterpret_cast<char*>(shard.labels.data()),
          static_cast<std::streamsize>(shard.labels.size()));
  if (!in) throw SynthError("truncated shard: " + path);
  return shard;
}

void write_epoch_shard(const std::string& path, const std::vector<EpochRecord>& epochs) {
  nlohmann::json h;
  h["format_version"] = 1;
  h["kind"] = "epochs";
  h["count"] = epochs.size();
  h["shape"] = {kSynthChannels, kEpochSamples};
  auto subjects = nlohmann::json::array();
  auto recordings = nlohmann::json::array();
  auto stages = nlohmann::json::array();
  auto indices = nlohmann::json::array();
  for (const auto& e : epochs) {
    subjects.push_back(e.subject_id);
    recordings.push_back(e.recording_id);
    stages.push_back(e.stage ? *e.stage : -1);
    indices.push_back(e.index);
  }
  h["subject_ids"] = std::move(subjects);
  h["recording_ids"] = std::move(recordings);
  h["stages"] = std::move(stages);
  h["epoch_indices"] = std::move(indices);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw SynthError("cannot write shard: " + path);
  out << h.dump() << "\n";
  std::vector<float> buf(static_cast<size_t>(kSynthChannels) * kEpochSamples);
  for (const auto& e : epochs) {
    if (e.signal.size() != buf.size()) {
      throw SynthError("epoch signal has unexpected size in shard write");
    }
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(e.signal[i]);
    write_f32_block(out, buf);
  }
}

std::vector<EpochRecord> read_epoch_shard(const std::string& path) {
  nlohmann::json h;
  std::ifstream in = open_shard(path, h);
  if (h.value("kind", "") != "epochs") throw SynthError("not an epoch shard: " + path);
  const size_t count = h.at("count").get<size_t>();
  const auto& subjects = h.at("subject_ids");
  const auto& recordings = h.at("recording_ids");
  const auto& stages = h.at("stages");
  const auto& indices = h.at("epoch_indices");
  std::vector<EpochRecord> out(count);
  std::vector<float> buf(static_cast<size_t>(kSynthChannels) * kEpochSamples);
  for (size_t k = 0; k < count; ++k) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw SynthError("truncated shard: " + path);
    auto& e = out[k];
    e.signal.assign(buf.begin(), buf.end());
    e.subject_id = subjects.at(k).get<std::string>();
    e.recording_id = recordings.at(k).get<std::string>();
    const int st = stages.at(k).get<int>();
    if (st >= 0) e.stage = st;
    e.index = indices.at(k).get<int>();
  }
  return out;
}

}  // namespace freqtrain
