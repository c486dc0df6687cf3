#include "freqtrain/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace freqtrain {

namespace {

// Eval-mode dropout never draws from its rng; this stands in for absent ones.
Rng& unused_rng() {
  static Rng dummy(0);
  return dummy;
}

Tensor kaiming_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

Tensor uniform_pm(std::vector<int> shape, double bound, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

void add_lstm_direction(ParamStore& store, const std::string& prefix, int input,
                        int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  store.add(prefix + ".w_ih", "c_f", uniform_pm({input, 4 * hidden}, bound, rng));
  store.add(prefix + ".w_hh", "c_f", uniform_pm({hidden, 4 * hidden}, bound, rng));
  // Forget-gate bias starts at 1 to keep early memory open.
  std::vector<double> b(static_cast<size_t>(4 * hidden), 0.0);
  for (int i = hidden; i < 2 * hidden; ++i) b[static_cast<size_t>(i)] = 1.0;
  store.add(prefix + ".bias", "c_f", Tensor::from_values({4 * hidden}, std::move(b), true));
}

}  // namespace

void init_feature_extractor(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  int in_ch = cfg.in_channels;
  for (int block = 0; block < 4; ++block) {
    const std::string id = "f.conv" + std::to_string(block + 1);
    const int k = ModelConfig::kernels[block];
    store.add(id + ".w", "f", kaiming_normal({cfg.filters, in_ch, k}, in_ch * k, rng));
    store.add(id + ".b", "f", Tensor::zeros({cfg.filters}, true));
    const std::string bn = "f.bn" + std::to_string(block + 1);
    store.add(bn + ".gamma", "f", Tensor::full({cfg.filters}, 1.0, true));
    store.add(bn + ".beta", "f", Tensor::zeros({cfg.filters}, true));
    store.add(bn + ".running_mean", "f", Tensor::zeros({cfg.filters}),
              ParamEntry::Kind::Buffer);
    store.add(bn + ".running_var", "f", Tensor::full({cfg.filters}, 1.0),
              ParamEntry::Kind::Buffer);
    in_ch = cfg.filters;
  }
}

void init_pretrain_head(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const int fd = feature_dim(cfg.filters, cfg.input_len);
  store.add("c_p.fc1.w", "c_p", kaiming_normal({fd, cfg.pretrain_hidden}, fd, rng));
  store.add("c_p.fc1.b", "c_p", Tensor::zeros({cfg.pretrain_hidden}, true));
  store.add("c_p.fc2.w", "c_p",
            kaiming_normal({cfg.pretrain_hidden, cfg.n_bins}, cfg.pretrain_hidden, rng));
  store.add("c_p.fc2.b", "c_p", Tensor::zeros({cfg.n_bins}, true));
}

void init_staging_head(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const int fd = feature_dim(cfg.filters, cfg.input_len);
  add_lstm_direction(store, "c_f.lstm.fw", fd, cfg.lstm_hidden, rng);
  add_lstm_direction(store, "c_f.lstm.bw", fd, cfg.lstm_hidden, rng);
  store.add("c_f.fc.w", "c_f",
            kaiming_normal({2 * cfg.lstm_hidden, cfg.n_stages}, 2 * cfg.lstm_hidden, rng));
  store.add("c_f.fc.b", "c_f", Tensor::zeros({cfg.n_stages}, true));
}

ParamStore init_params(const ModelConfig& cfg, uint64_t seed, bool with_pretrain_head,
                       bool with_staging_head) {
  Rng rng = Rng::derive(seed, {0x494e4954u});  // "INIT"
  ParamStore store;
  init_feature_extractor(store, cfg, rng);
  if (with_pretrain_head) init_pretrain_head(store, cfg, rng);
  if (with_staging_head) init_staging_head(store, cfg, rng);
  return store;
}

void copy_component(ParamStore& dst, const ParamStore& src, const std::string& component) {
  for (const auto& e : src.entries()) {
    if (e.component != component) continue;
    Tensor& target = dst.at(e.name);
    if (target.shape() != e.tensor.shape()) {
      throw TensorError("copy_component: shape mismatch for '" + e.name + "': " +
                        shape_str(target.shape()) + " vs " + shape_str(e.tensor.shape()));
    }
    target.values() = e.tensor.values();
  }
}

Tensor extract_features(ParamStore& store, const Tensor& epochs, const ModelConfig& cfg,
                        bool train, Rng* dropout_rng) {
  if (epochs.ndim() != 3 || epochs.dim(1) != cfg.in_channels ||
      epochs.dim(2) != cfg.input_len) {
    throw TensorError("extract_features: expected [batch," + std::to_string(cfg.in_channels) +
                      "," + std::to_string(cfg.input_len) + "], got " +
                      shape_str(epochs.shape()));
  }
  if (train && !dropout_rng) {
    throw TensorError("extract_features: train mode needs a dropout rng");
  }
  Tensor x = epochs;
  for (int block = 0; block < 4; ++block) {
    const std::string id = "f.conv" + std::to_string(block + 1);
    const std::string bn = "f.bn" + std::to_string(block + 1);
    x = conv1d_same(x, store.at(id + ".w"), store.at(id + ".b"),
                    ModelConfig::strides[block]);
    x = batchnorm1d(x, store.at(bn + ".gamma"), store.at(bn + ".beta"),
                    store.at(bn + ".running_mean"), store.at(bn + ".running_var"), train);
    x = relu(x);
    if (block == 0) {
      x = maxpool1d(x, ModelConfig::pool_after_first);
      x = dropout(x, cfg.dropout, train, train ? *dropout_rng : unused_rng());
    } else if (block == 3) {
      x = maxpool1d(x, ModelConfig::pool_after_last);
      x = dropout(x, cfg.dropout, train, train ? *dropout_rng : unused_rng());
    }
  }
  const int batch = x.dim(0);
  return reshape(x, {batch, feature_dim(cfg.filters, cfg.input_len)});
}

Tensor predict_bin_probs(ParamStore& store, const Tensor& features, const ModelConfig&) {
  Tensor h = relu(dense(features, store.at("c_p.fc1.w"), store.at("c_p.fc1.b")));
  return sigmoid(dense(h, store.at("c_p.fc2.w"), store.at("c_p.fc2.b")));
}

std::vector<uint8_t> threshold_bins(const Tensor& probs) {
  std::vector<uint8_t> out(probs.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = probs.values()[i] > 0.5 ? 1 : 0;
  return out;
}

Tensor predict_stage_probs(ParamStore& store, const std::vector<Tensor>& feature_steps,
                           const ModelConfig& cfg, bool train, Rng* dropout_rng) {
  if (static_cast<int>(feature_steps.size()) != cfg.seq_len) {
    throw TensorError("predict_stage_probs: expected a sequence of " +
                      std::to_string(cfg.seq_len) + " steps, got " +
                      std::to_string(feature_steps.size()));
  }
  if (train && !dropout_rng) {
    throw TensorError("predict_stage_probs: train mode needs a dropout rng");
  }
  LstmCellParams fw{store.at("c_f.lstm.fw.w_ih"), store.at("c_f.lstm.fw.w_hh"),
                    store.at("c_f.lstm.fw.bias")};
  LstmCellParams bw{store.at("c_f.lstm.bw.w_ih"), store.at("c_f.lstm.bw.w_hh"),
                    store.at("c_f.lstm.bw.bias")};
  auto outs = bilstm(feature_steps, fw, bw);
  Tensor center = outs[static_cast<size_t>(cfg.seq_len / 2)];
  center = dropout(center, cfg.dropout, train, train ? *dropout_rng : unused_rng());
  return softmax_lastdim(dense(center, store.at("c_f.fc.w"), store.at("c_f.fc.b")));
}

// ---- checkpoint I/O ----

void save_checkpoint(const std::string& path, const ParamStore& store) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["dtype"] = "f64";
  auto& params = manifest["params"];
  params = nlohmann::json::array();
  for (const auto& e : store.entries()) {
    nlohmann::json p;
    p["name"] = e.name;
    p["component"] = e.component;
    p["kind"] = e.kind == ParamEntry::Kind::Buffer ? "buffer" : "param";
    p["shape"] = e.tensor.shape();
    params.push_back(std::move(p));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TensorError("save_checkpoint: cannot write " + path);
  out << manifest.dump() << "\n";
  for (const auto& e : store.entries()) {
    out.write(reinterpret_cast<const char*>(e.tensor.values().data()),
              static_cast<std::streamsize>(e.tensor.values().size() * sizeof(double)));
  }
}

ParamStore load_checkpoint(const std::string& path) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint reader assumes a little-endian host");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorError("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw TensorError("load_checkpoint: missing manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw TensorError(std::string("load_checkpoint: bad manifest: ") + e.what());
  }
  if (manifest.value("format_version", 0) != 1 || manifest.value("dtype", "") != "f64") {
    throw TensorError("load_checkpoint: unsupported format");
  }
  ParamStore store;
  for (const auto& p : manifest.at("params")) {
    const std::string name = p.at("name");
    const std::string component = p.at("component");
    const std::string kind = p.value("kind", "param");
    std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    const int64_t n = shape_numel(shape);
    std::vector<double> values(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double))) {
      throw TensorError("load_checkpoint: truncated payload for '" + name + "'");
    }
    Tensor t = Tensor::from_values(std::move(shape), std::move(values),
                                   kind == "param");
    store.add(name, component, std::move(t),
              kind == "buffer" ? ParamEntry::Kind::Buffer : ParamEntry::Kind::Param);
  }
  return store;
}

}  // namespace freqtrain
