#include "kql/replay.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace kql {

const char* to_string(ReplayMode m) {
  switch (m) {
    case ReplayMode::off: return "off";
    case ReplayMode::uniform: return "uniform";
    case ReplayMode::prioritized: return "prioritized";
  }
  return "?";
}

ReplayMode replay_mode_from_string(const std::string& s) {
  if (s == "off") return ReplayMode::off;
  if (s == "uniform") return ReplayMode::uniform;
  if (s == "prioritized") return ReplayMode::prioritized;
  throw std::invalid_argument("unknown replay mode: " + s);
}

void ReplayConfig::validate() const {
  if (mode != ReplayMode::off && capacity < 1)
    throw std::invalid_argument("ReplayConfig: capacity must be >= 1");
  if (!(std::isfinite(priority_floor) && priority_floor > 0.0))
    throw std::invalid_argument("ReplayConfig: priority_floor must be > 0");
}

ReplayBuffer::ReplayBuffer(ReplayConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.capacity >= 1) ring_.resize(cfg_.capacity);
}

long ReplayBuffer::push(SarsaTuple tup, double priority) {
  if (!(priority >= 0.0) || !std::isfinite(priority))
    throw std::invalid_argument("ReplayBuffer::push: priority must be finite and >= 0");
  const long id = push_count_++;
  ring_[slot(id)] = BufferEntry{std::move(tup), priority};
  if (size_ < cfg_.capacity) ++size_;
  return id;
}

std::pair<long, SarsaTuple> ReplayBuffer::sample(Rng& rng) const {
  if (cfg_.mode == ReplayMode::off)
    throw std::logic_error("ReplayBuffer::sample: buffer is in off mode");
  if (size_ == 0) throw std::logic_error("ReplayBuffer::sample: buffer is empty");

  const long first = oldest_id();
  if (cfg_.mode == ReplayMode::uniform) {
    const long id = first + rng.uniform_int(size_);
    return {id, ring_[slot(id)].tuple};
  }

  double total = 0.0;
  for (long k = 0; k < size_; ++k)
    total += ring_[slot(first + k)].priority + cfg_.priority_floor;
  const double r = rng.canonical() * total;
  double acc = 0.0;
  for (long k = 0; k < size_; ++k) {
    const long id = first + k;
    acc += ring_[slot(id)].priority + cfg_.priority_floor;
    if (r < acc) return {id, ring_[slot(id)].tuple};
  }
  // r landed on the rounding sliver past the last cumulative sum.
  const long id = first + size_ - 1;
  return {id, ring_[slot(id)].tuple};
}

void ReplayBuffer::update_priority(long id, double delta_abs) {
  if (!live(id)) {
    ++stale_updates_;
    return;
  }
  ring_[slot(id)].priority = std::abs(delta_abs);
}

const BufferEntry& ReplayBuffer::at_id(long id) const {
  if (!live(id)) throw std::out_of_range("ReplayBuffer::at_id: id not live");
  return ring_[slot(id)];
}

void ReplayBuffer::adopt(long push_count, std::vector<BufferEntry> entries) {
  if (push_count < 0 || static_cast<long>(entries.size()) > cfg_.capacity ||
      static_cast<long>(entries.size()) > push_count)
    throw std::invalid_argument("ReplayBuffer::adopt: inconsistent sizes");
  size_ = static_cast<long>(entries.size());
  push_count_ = push_count;
  const long first = oldest_id();
  for (long k = 0; k < size_; ++k) ring_[slot(first + k)] = std::move(entries[k]);
}

void ReplayBuffer::dump(std::ostream& os) const {
  const long first = oldest_id();
  for (long k = 0; k < size_; ++k) {
    const long id = first + k;
    const BufferEntry& e = ring_[slot(id)];
    os << id << ' ' << e.priority;
    for (long i = 0; i < e.tuple.s.size(); ++i) os << ' ' << e.tuple.s(i);
    for (long i = 0; i < e.tuple.a.size(); ++i) os << ' ' << e.tuple.a(i);
    os << ' ' << e.tuple.r;
    for (long i = 0; i < e.tuple.s_next.size(); ++i) os << ' ' << e.tuple.s_next(i);
    for (long i = 0; i < e.tuple.a_next.size(); ++i) os << ' ' << e.tuple.a_next(i);
    os << ' ' << (e.tuple.exploratory ? 1 : 0) << '\n';
  }
}

}  // namespace kql
