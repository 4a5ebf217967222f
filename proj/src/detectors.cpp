// Stateful detectors: SYN flood, fragment overlap (and its UDP variant) and
// per-source port sweeps for the scan rules.

#include <cmath>
#include <deque>
#include <list>
#include <map>
#include <tuple>
#include <unordered_map>

#include "flowscope/error.hpp"
#include "flowscope/signatures.hpp"

namespace flowscope::signatures {
namespace {

using capture::ParsedHeaders;

std::int64_t seconds_to_us(double s) {
  if (!std::isfinite(s) || s <= 0) {
    throw Error(ErrorCode::InvalidArgument, "detector window must be positive");
  }
  return static_cast<std::int64_t>(std::llround(s * 1e6));
}

Alert make_alert(const std::string& rule, std::int64_t ts, const ParsedHeaders& h,
                 std::string detail) {
  Alert a;
  a.rule = rule;
  a.timestamp_us = ts;
  a.src = h.ip ? h.ip->src : 0;
  a.dst = h.ip ? h.ip->dst : 0;
  a.detail = std::move(detail);
  return a;
}

// Half-open connection counter per (dst, dport). Fires once when the count
// crosses the threshold and stays quiet until it falls back and the
// suppression window has elapsed.
class SynFloodDetector {
 public:
  SynFloodDetector(std::string rule, std::int64_t window_us, std::size_t threshold)
      : rule_(std::move(rule)), window_us_(window_us), threshold_(threshold) {}

  void feed(std::int64_t ts, const ParsedHeaders& h, std::vector<Alert>& out) {
    expire_pending(ts);
    if (!h.ip || !h.tcp) return;
    const auto& f = h.tcp->flags;
    const Target target{h.ip->dst, h.tcp->dst_port};
    const Conn conn{h.ip->src, h.tcp->src_port, h.ip->dst, h.tcp->dst_port};
    if (f.syn && !f.ack) {
      auto& st = targets_[target];
      st.syns.push_back(ts);
      pending_[conn] = ts;
      pending_order_.push_back({ts, conn});
      check(ts, target, st, h, out);
    } else if (f.ack && !f.syn && !f.rst) {
      auto it = pending_.find(conn);
      if (it == pending_.end()) return;
      pending_.erase(it);
      auto& st = targets_[target];
      st.completions.push_back(ts);
      check(ts, target, st, h, out);
    }
  }

 private:
  using Target = std::pair<std::uint32_t, std::uint16_t>;
  using Conn = std::tuple<std::uint32_t, std::uint16_t, std::uint32_t, std::uint16_t>;

  struct TargetState {
    std::deque<std::int64_t> syns;
    std::deque<std::int64_t> completions;
    bool above = false;
    std::int64_t quiet_until = INT64_MIN;
  };

  void expire_pending(std::int64_t ts) {
    while (!pending_order_.empty() && pending_order_.front().first <= ts - window_us_) {
      const auto& [t, conn] = pending_order_.front();
      auto it = pending_.find(conn);
      if (it != pending_.end() && it->second == t) pending_.erase(it);
      pending_order_.pop_front();
    }
  }

  void check(std::int64_t ts, const Target& target, TargetState& st, const ParsedHeaders& h,
             std::vector<Alert>& out) {
    for (auto* q : {&st.syns, &st.completions}) {
      while (!q->empty() && q->front() <= ts - window_us_) q->pop_front();
    }
    const auto syns = static_cast<std::int64_t>(st.syns.size());
    const auto done = static_cast<std::int64_t>(st.completions.size());
    const std::int64_t half_open = syns - done;
    if (half_open <= static_cast<std::int64_t>(threshold_)) {
      st.above = false;
      return;
    }
    if (st.above || ts < st.quiet_until) return;
    st.above = true;
    st.quiet_until = ts + window_us_;
    out.push_back(make_alert(rule_, ts, h,
                             "half_open=" + std::to_string(half_open) + " target=" +
                                 capture::format_ipv4(target.first) + ":" +
                                 std::to_string(target.second)));
  }

  std::string rule_;
  std::int64_t window_us_;
  std::size_t threshold_;
  std::map<Target, TargetState> targets_;
  std::map<Conn, std::int64_t> pending_;
  std::deque<std::pair<std::int64_t, Conn>> pending_order_;
};

// Byte ranges seen per datagram (src, dst, protocol, id), LRU bounded.
class FragmentTracker {
 public:
  explicit FragmentTracker(std::size_t capacity) : capacity_(capacity) {}

  struct Overlap {
    std::uint32_t start, end;        // new fragment
    std::uint32_t prior_start, prior_end;
  };

  std::optional<Overlap> feed(const capture::Ipv4Header& ip) {
    if (!ip.is_fragment()) return std::nullopt;
    const Key key{ip.src, ip.dst, ip.protocol, ip.identification};
    const std::uint32_t start = ip.fragment_byte_offset();
    const std::uint32_t end = start + ip.payload_length();

    auto it = index_.find(key);
    if (it == index_.end()) {
      lru_.push_front(Entry{key, {}});
      it = index_.emplace(key, lru_.begin()).first;
      if (lru_.size() > capacity_) {
        index_.erase(lru_.back().key);
        lru_.pop_back();
      }
    } else {
      lru_.splice(lru_.begin(), lru_, it->second);
    }
    auto& ranges = it->second->ranges;
    std::optional<Overlap> hit;
    if (end > start) {
      for (const auto& [s, e] : ranges) {
        if (start < e && s < end) {
          hit = Overlap{start, end, s, e};
          break;
        }
      }
    }
    ranges.emplace_back(start, end);
    return hit;
  }

 private:
  using Key = std::tuple<std::uint32_t, std::uint32_t, std::uint8_t, std::uint16_t>;
  struct Entry {
    Key key;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
  };

  std::size_t capacity_;
  std::list<Entry> lru_;
  std::map<Key, std::list<Entry>::iterator> index_;
};

// Distinct destination ports probed by one source within a window.
class PortSweepCounter {
 public:
  PortSweepCounter(std::string rule, std::int64_t window_us, std::size_t threshold)
      : rule_(std::move(rule)), window_us_(window_us), threshold_(threshold) {}

  void feed(std::int64_t ts, const ParsedHeaders& h, std::vector<Alert>& out) {
    auto& st = sources_[h.ip->src];
    st.probes.emplace_back(ts, h.tcp->dst_port);
    ++st.ports[h.tcp->dst_port];
    while (!st.probes.empty() && st.probes.front().first <= ts - window_us_) {
      auto pit = st.ports.find(st.probes.front().second);
      if (--pit->second == 0) st.ports.erase(pit);
      st.probes.pop_front();
    }
    const std::size_t distinct = st.ports.size();
    if (distinct <= threshold_) {
      st.above = false;
      return;
    }
    if (st.above) return;
    st.above = true;
    out.push_back(make_alert(rule_, ts, h,
                             "port_sweep distinct_dports=" + std::to_string(distinct)));
  }

 private:
  struct SourceState {
    std::deque<std::pair<std::int64_t, std::uint16_t>> probes;
    std::map<std::uint16_t, std::size_t> ports;
    bool above = false;
  };

  std::string rule_;
  std::int64_t window_us_;
  std::size_t threshold_;
  std::map<std::uint32_t, SourceState> sources_;
};

}  // namespace

struct StatefulEngine::State {
  std::int64_t tolerance_us = 1000;
  std::optional<std::int64_t> last_ts;
  RuleContext context;  // sweep rules reuse the default context

  std::optional<SynFloodDetector> syn_flood;
  std::optional<FragmentTracker> fragments;
  std::string overlap_rule;
  std::string bonk_rule;
  std::vector<std::pair<const SignatureRule*, PortSweepCounter>> sweeps;
};

StatefulEngine::StatefulEngine(std::span<const SignatureRule> rules, const StatefulConfig& config)
    : state_(std::make_unique<State>()) {
  state_->tolerance_us = config.order_tolerance_us;
  const auto syn_window = seconds_to_us(config.syn_window_s);
  const auto scan_window = seconds_to_us(config.scan_window_s);
  for (const auto& rule : rules) {
    switch (rule.detector) {
      case Detector::SynFlood:
        state_->syn_flood.emplace(rule.name, syn_window, config.syn_threshold);
        break;
      case Detector::FragmentOverlap:
        state_->overlap_rule = rule.name;
        break;
      case Detector::Bonk:
        state_->bonk_rule = rule.name;
        break;
      case Detector::None:
        break;
    }
    if (rule.port_sweep_summary && rule.predicate) {
      state_->sweeps.emplace_back(&rule,
                                  PortSweepCounter(rule.name, scan_window, config.scan_threshold));
    }
  }
  if (!state_->overlap_rule.empty() || !state_->bonk_rule.empty()) {
    state_->fragments.emplace(config.fragment_cache_capacity);
  }
}

StatefulEngine::~StatefulEngine() = default;
StatefulEngine::StatefulEngine(StatefulEngine&&) noexcept = default;
StatefulEngine& StatefulEngine::operator=(StatefulEngine&&) noexcept = default;

std::vector<Alert> StatefulEngine::feed(std::int64_t ts, const capture::ParsedHeaders& h) {
  auto& st = *state_;
  if (st.last_ts && ts < *st.last_ts - st.tolerance_us) {
    throw Error(ErrorCode::OutOfOrder, "timestamp " + std::to_string(ts) + " us precedes " +
                                           std::to_string(*st.last_ts) + " us");
  }
  if (!st.last_ts || ts > *st.last_ts) st.last_ts = ts;

  std::vector<Alert> out;
  if (st.syn_flood) st.syn_flood->feed(ts, h, out);
  if (st.fragments && h.ip) {
    if (auto hit = st.fragments->feed(*h.ip)) {
      const std::string detail = "id=" + std::to_string(h.ip->identification) + " bytes [" +
                                 std::to_string(hit->start) + "," + std::to_string(hit->end) +
                                 ") overlap [" + std::to_string(hit->prior_start) + "," +
                                 std::to_string(hit->prior_end) + ")";
      if (!st.overlap_rule.empty()) out.push_back(make_alert(st.overlap_rule, ts, h, detail));
      if (!st.bonk_rule.empty() && h.ip->protocol == capture::kProtoUdp) {
        out.push_back(make_alert(st.bonk_rule, ts, h, detail));
      }
    }
  }
  if (h.ip && h.tcp) {
    for (auto& [rule, counter] : st.sweeps) {
      if (rule->predicate(h, st.context)) counter.feed(ts, h, out);
    }
  }
  return out;
}

}  // namespace flowscope::signatures
