#pragma once

#include <cstdint>
#include <vector>

#include "dialogscore/corpus.hpp"

namespace dialogscore {

// Knobs for the seeded request-a-meeting corpus generator. Construct labels
// are drawn first; surface text is then planted with label-correlated
// signals (see docs/synthetic-corpus.md for the level-to-signal contract).
struct SignalSpec {
  int min_turns = 3;
  int max_turns = 8;
  // Probability that a simulated rater shifts the true label by +1 (and the
  // same for -1); shifted scores clip to 1..4.
  double rater_noise = 0.15;
};

std::vector<Dialog> synthesize_corpus(std::uint64_t seed, std::size_t n,
                                      const SignalSpec& spec = {});

}  // namespace dialogscore
