#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "kql/learner.hpp"
#include "kql/rng.hpp"

namespace kql {

enum class ReplayMode { off, uniform, prioritized };

const char* to_string(ReplayMode m);
ReplayMode replay_mode_from_string(const std::string& s);

struct ReplayConfig {
  ReplayMode mode = ReplayMode::off;
  long capacity = 100000;
  double priority_floor = 1e-3;  // added to every priority so no entry has zero mass

  void validate() const;
};

struct BufferEntry {
  SarsaTuple tuple;
  double priority = 0.0;  // |Bellman difference| at insertion or last replay
};

// FIFO ring with monotonically increasing ids: entry i lives while
// push_count - size <= i < push_count. Priority updates to evicted ids are
// counted and dropped.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg);

  long push(SarsaTuple tup, double priority);

  // Uniform mode: each entry with probability 1/N. Prioritized:
  // (priority_i + floor) / sum_j (priority_j + floor). Off-mode buffers and
  // empty buffers refuse.
  std::pair<long, SarsaTuple> sample(Rng& rng) const;

  void update_priority(long id, double delta_abs);

  long size() const { return size_; }
  bool empty() const { return size_ == 0; }
  long push_count() const { return push_count_; }
  long oldest_id() const { return push_count_ - size_; }
  bool live(long id) const { return id >= oldest_id() && id < push_count_; }
  long stale_updates() const { return stale_updates_; }
  const ReplayConfig& config() const { return cfg_; }

  const BufferEntry& at_id(long id) const;

  // Checkpoint restore: adopt entries (oldest first) as ids
  // [push_count - entries.size(), push_count).
  void adopt(long push_count, std::vector<BufferEntry> entries);

  // One line per entry: id, priority, then the flattened tuple.
  void dump(std::ostream& os) const;

 private:
  long slot(long id) const { return id % cfg_.capacity; }

  ReplayConfig cfg_;
  std::vector<BufferEntry> ring_;
  long size_ = 0;
  long push_count_ = 0;
  long stale_updates_ = 0;
};

}  // namespace kql
