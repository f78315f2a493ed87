#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "dialogscore/nn/tensor.hpp"

namespace dialogscore {

// Parameter snapshots: <base>.json manifest plus <base>.bin holding
// little-endian float64 blobs back to back, addressed by offsets in the
// manifest. The manifest's "meta" object is free-form and owned by the
// model that writes the snapshot (vocab, hyperparameters, ...).
class SnapshotWriter {
 public:
  nlohmann::json& meta() { return meta_; }
  void add(const nn::Parameter& p);
  void write(const std::filesystem::path& base) const;

 private:
  nlohmann::json meta_ = nlohmann::json::object();
  nlohmann::json tensors_ = nlohmann::json::array();
  std::vector<double> blob_;
};

class SnapshotReader {
 public:
  explicit SnapshotReader(const std::filesystem::path& base);
  const nlohmann::json& meta() const { return meta_; }
  // Copies the named blob into the parameter (shape must match).
  void load_into(nn::Parameter& p) const;
  bool has(const std::string& name) const;

 private:
  struct Entry {
    nn::Shape shape;
    std::size_t offset = 0;
  };
  nlohmann::json meta_;
  std::map<std::string, Entry> entries_;
  std::vector<double> blob_;
};

}  // namespace dialogscore
