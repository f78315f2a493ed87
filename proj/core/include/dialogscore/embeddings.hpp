#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dialogscore {

// Pretrained word vectors in text format: one token per line followed by
// dim space-separated floats.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> rows;
};

// Throws if any row's dimensionality disagrees with the first row, or, when
// expected_dim is nonzero, with expected_dim.
EmbeddingTable load_embeddings_text(const std::filesystem::path& path,
                                    std::size_t expected_dim = 0);

}  // namespace dialogscore
