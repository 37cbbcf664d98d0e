#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "drbse/errors.hpp"

namespace drbse {

// Only two payload shapes exist on the wire: tie-line (K, L) pairs in the
// first stage and boundary-bus (alpha, theta) states in the second. Nothing
// else can be sent, which is what keeps area measurements private.
enum class PayloadKind { stage1_tie_kl, stage2_bus_state };

inline const char* payload_name(PayloadKind k) {
  return k == PayloadKind::stage1_tie_kl ? "tie_kl" : "bus_state";
}

struct BusMessage {
  int from = 0;
  int to = 0;
  PayloadKind kind{};
  // tie branch id -> (K, L), or bus id -> (alpha, theta)
  std::vector<std::pair<int, std::array<double, 2>>> entries;
};

struct Delivery {
  std::string phase;
  int round = 0;
  int from = 0;
  int to = 0;
  PayloadKind kind{};
  int values = 0;
  std::size_t bytes = 0;
};

// Round-synchronous mailboxes. Messages posted during a compute phase become
// readable only after the barrier (deliver); an area can never peek at staged
// traffic, and there is no other channel between areas.
class MessageBus {
 public:
  void post(BusMessage msg) { staged_.push_back(std::move(msg)); }

  void deliver(const std::string& phase, int round) {
    std::stable_sort(staged_.begin(), staged_.end(), [](const BusMessage& a, const BusMessage& b) {
      return std::make_pair(a.from, a.to) < std::make_pair(b.from, b.to);
    });
    inbox_.clear();
    for (BusMessage& m : staged_) {
      Delivery d{phase, round, m.from, m.to, m.kind, static_cast<int>(2 * m.entries.size()),
                 2 * m.entries.size() * sizeof(double)};
      log_.push_back(d);
      inbox_[{m.to, m.from}] = std::move(m);
    }
    staged_.clear();
  }

  const BusMessage& fetch(int to, int from) const {
    auto it = inbox_.find({to, from});
    if (it == inbox_.end())
      throw ProtocolError("no message from area " + std::to_string(from) + " for area " +
                          std::to_string(to));
    return it->second;
  }

  const std::vector<Delivery>& log() const { return log_; }
  std::size_t staged_count() const { return staged_.size(); }

  std::size_t deliveries_in_phase(const std::string& phase) const {
    std::size_t n = 0;
    for (const Delivery& d : log_)
      if (d.phase == phase) ++n;
    return n;
  }

  // (from, to) -> {message count, payload bytes} over the whole run
  std::map<std::pair<int, int>, std::pair<int, std::size_t>> totals() const {
    std::map<std::pair<int, int>, std::pair<int, std::size_t>> t;
    for (const Delivery& d : log_) {
      auto& slot = t[{d.from, d.to}];
      slot.first += 1;
      slot.second += d.bytes;
    }
    return t;
  }

 private:
  std::vector<BusMessage> staged_;
  std::map<std::pair<int, int>, BusMessage> inbox_;
  std::vector<Delivery> log_;
};

}  // namespace drbse
