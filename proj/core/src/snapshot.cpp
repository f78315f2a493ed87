#include "dialogscore/snapshot.hpp"

#include <fstream>
#include <stdexcept>

namespace dialogscore {

using nlohmann::json;

void SnapshotWriter::add(const nn::Parameter& p) {
  json entry;
  entry["name"] = p.name;
  entry["shape"] = p.shape;
  entry["offset"] = blob_.size();
  entry["count"] = p.value.size();
  tensors_.push_back(std::move(entry));
  blob_.insert(blob_.end(), p.value.begin(), p.value.end());
}

void SnapshotWriter::write(const std::filesystem::path& base) const {
  json manifest;
  manifest["format"] = "dialogscore-snapshot-v1";
  manifest["meta"] = meta_;
  manifest["tensors"] = tensors_;
  manifest["blob_file"] = base.filename().string() + ".bin";

  std::ofstream mj(base.string() + ".json");
  if (!mj) throw std::runtime_error("cannot write snapshot manifest: " + base.string() + ".json");
  mj << manifest.dump(2) << "\n";

  std::ofstream bb(base.string() + ".bin", std::ios::binary);
  if (!bb) throw std::runtime_error("cannot write snapshot blob: " + base.string() + ".bin");
  bb.write(reinterpret_cast<const char*>(blob_.data()),
           static_cast<std::streamsize>(blob_.size() * sizeof(double)));
}

SnapshotReader::SnapshotReader(const std::filesystem::path& base) {
  std::ifstream mj(base.string() + ".json");
  if (!mj) throw std::runtime_error("cannot open snapshot manifest: " + base.string() + ".json");
  json manifest = json::parse(mj);
  if (manifest.value("format", "") != "dialogscore-snapshot-v1")
    throw std::runtime_error("unrecognized snapshot format in " + base.string() + ".json");
  meta_ = manifest.at("meta");
  for (const json& t : manifest.at("tensors")) {
    Entry e;
    e.shape = t.at("shape").get<nn::Shape>();
    e.offset = t.at("offset").get<std::size_t>();
    entries_.emplace(t.at("name").get<std::string>(), std::move(e));
  }
  std::ifstream bb(base.string() + ".bin", std::ios::binary);
  if (!bb) throw std::runtime_error("cannot open snapshot blob: " + base.string() + ".bin");
  bb.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(bb.tellg());
  bb.seekg(0);
  blob_.resize(bytes / sizeof(double));
  bb.read(reinterpret_cast<char*>(blob_.data()), static_cast<std::streamsize>(bytes));
}

bool SnapshotReader::has(const std::string& name) const { return entries_.count(name) > 0; }

void SnapshotReader::load_into(nn::Parameter& p) const {
  const auto it = entries_.find(p.name);
  if (it == entries_.end())
    throw std::runtime_error("snapshot has no tensor named '" + p.name + "'");
  if (it->second.shape != p.shape)
    throw std::runtime_error("snapshot tensor '" + p.name + "' has shape " +
                             nn::shape_str(it->second.shape) + ", parameter expects " +
                             nn::shape_str(p.shape));
  const std::size_t count = nn::numel(p.shape);
  if (it->second.offset + count > blob_.size())
    throw std::runtime_error("snapshot blob truncated for tensor '" + p.name + "'");
  std::copy_n(blob_.begin() + static_cast<long>(it->second.offset), count, p.value.begin());
}

}  // namespace dialogscore
