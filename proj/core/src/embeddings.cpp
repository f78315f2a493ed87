#include "dialogscore/embeddings.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dialogscore {

EmbeddingTable load_embeddings_text(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file: " + path.string());
  EmbeddingTable table;
  table.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (table.dim == 0) table.dim = vec.size();
    if (vec.size() != table.dim)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": vector for '" +
                               token + "' has dimension " + std::to_string(vec.size()) +
                               ", expected " + std::to_string(table.dim));
    table.rows[token] = std::move(vec);
  }
  return table;
}

}  // namespace dialogscore
