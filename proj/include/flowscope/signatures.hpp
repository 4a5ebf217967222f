#pragma once

// Attack-signature catalog over header parameters, per-packet and stateful
// evaluation, and the parameter-frequency table derived from the catalog.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowscope/capture.hpp"
#include "flowscope/parameters.hpp"

namespace flowscope::signatures {

using parameters::ParameterId;

struct RuleContext {
  std::uint32_t netmask = 0xffffff00;  // used to recognise directed broadcasts
};

/// Netmask for a prefix length in [0, 32]; throws Error{InvalidArgument}.
std::uint32_t prefix_to_netmask(int prefix);

enum class RuleKind { Stateless, Stateful };

/// Stateful detectors implemented by StatefulEngine.
enum class Detector { None, SynFlood, FragmentOverlap, Bonk };

using Predicate = std::function<bool(const capture::ParsedHeaders&, const RuleContext&)>;

struct SignatureRule {
  std::string name;
  /// Header parameters the signature is written over (catalog metadata).
  std::vector<ParameterId> parameters_used;
  RuleKind kind = RuleKind::Stateless;
  Predicate predicate;                 // set for runtime stateless rules
  Detector detector = Detector::None;  // set for runtime stateful rules
  /// Matching packets also feed a per-source distinct-port sweep counter.
  bool port_sweep_summary = false;
  std::string description;

  bool runtime() const noexcept { return static_cast<bool>(predicate) || detector != Detector::None; }
};

using Catalog = std::vector<SignatureRule>;

/// The built-in catalog: runtime rules plus metadata-only entries for attacks
/// that need stream reconstruction.
Catalog builtin_catalog();

const SignatureRule* find_rule(std::span<const SignatureRule> catalog, std::string_view name);

struct Alert {
  std::string rule;
  std::int64_t timestamp_us = 0;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::string detail;

  bool operator==(const Alert&) const = default;
  auto operator<=>(const Alert&) const = default;
};

/// One alert per matching stateless rule, in catalog order.
std::vector<Alert> evaluate_stateless(std::span<const SignatureRule> rules,
                                      const capture::ParsedHeaders& headers,
                                      std::int64_t timestamp_us, const RuleContext& context = {});

struct StatefulConfig {
  double syn_window_s = 5.0;
  std::size_t syn_threshold = 100;
  double scan_window_s = 5.0;
  std::size_t scan_threshold = 20;
  std::size_t fragment_cache_capacity = 4096;
  std::int64_t order_tolerance_us = 1000;
};

/// Single-consumer state machine over one timestamp-ordered packet stream.
/// Covers every stateful rule in the catalog plus the port-sweep summaries.
class StatefulEngine {
 public:
  StatefulEngine(std::span<const SignatureRule> rules, const StatefulConfig& config);
  ~StatefulEngine();
  StatefulEngine(StatefulEngine&&) noexcept;
  StatefulEngine& operator=(StatefulEngine&&) noexcept;

  /// Throws Error{OutOfOrder} when `timestamp_us` regresses by more than the
  /// configured tolerance.
  std::vector<Alert> feed(std::int64_t timestamp_us, const capture::ParsedHeaders& headers);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

std::vector<Alert> evaluate_stateful(std::span<const SignatureRule> rules,
                                     std::span<const parameters::TimedHeaders> packets,
                                     const StatefulConfig& config = {});

struct ScanConfig {
  RuleContext context;
  StatefulConfig stateful;
};

/// Stateless and stateful evaluation in one ordered pass. Per packet, stateless
/// alerts precede stateful ones.
std::vector<Alert> scan(std::span<const SignatureRule> rules,
                        std::span<const parameters::TimedHeaders> packets,
                        const ScanConfig& config = {});

struct FrequencyRow {
  int number = 0;
  std::string protocol;
  std::string parameter;
  ParameterId id = ParameterId::IpDst;
  std::size_t frequency = 0;
};

using FrequencyTable = std::vector<FrequencyRow>;

/// Counts, for each of the 17 signature parameters, how many catalog rules
/// list it in parameters_used.
FrequencyTable frequency_table(std::span<const SignatureRule> catalog);

/// CSV `Number,Protocol,Parameter,Frequency`.
void write_frequency_csv(std::ostream& out, const FrequencyTable& table);

std::string alert_to_json(const Alert& alert);
void write_alerts_jsonl(std::ostream& out, std::span<const Alert> alerts);

}  // namespace flowscope::signatures
