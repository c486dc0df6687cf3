#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "freqtrain/tensor.hpp"

namespace freqtrain {

// One named tensor of a model. `component` groups parameters by network part
// (feature extractor "f", pretraining head "c_p", staging head "c_f") so that
// checkpoints support extractor-only transfer. Buffers (kind == Buffer) hold
// state such as batch-norm running statistics and never receive gradients.
struct ParamEntry {
  enum class Kind { Param, Buffer };
  std::string name;
  std::string component;
  Kind kind = Kind::Param;
  Tensor tensor;
};

class ParamStore {
 public:
  Tensor& add(const std::string& name, const std::string& component, Tensor t,
              ParamEntry::Kind kind = ParamEntry::Kind::Param) {
    if (index_.count(name)) throw TensorError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, component, kind, std::move(t)});
    return entries_.back().tensor;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw TensorError("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw TensorError("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  void set_trainable(const std::string& component, bool trainable) {
    for (auto& e : entries_) {
      if (e.component == component && e.kind == ParamEntry::Kind::Param) {
        e.tensor.set_requires_grad(trainable);
      }
    }
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  // Deep copy (values only, preserving requires_grad flags).
  ParamStore clone() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.name, e.component, e.tensor.detached_copy(), e.kind);
    return out;
  }

  // FNV-1a over the raw value bytes of one component; detects any drift of
  // supposedly frozen parameters.
  uint64_t checksum(const std::string& component) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, size_t n) {
      const unsigned char* p = static_cast<const unsigned char*>(data);
      for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& e : entries_) {
      if (e.component != component) continue;
      mix(e.name.data(), e.name.size());
      mix(e.tensor.values().data(), e.tensor.values().size() * sizeof(double));
    }
    return h;
  }

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace freqtrain
