#pragma once

#include <cstddef>
#include <limits>

namespace dialogscore {

// Patience counter on a maximized dev metric. update() returns whether the
// epoch improved on the best seen so far; should_stop() becomes true once
// `patience` consecutive epochs failed to improve.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  bool update(double metric, std::size_t epoch) {
    if (metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
};

}  // namespace dialogscore
