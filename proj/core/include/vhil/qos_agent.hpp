#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace vhil::agent {

using StateId = std::uint32_t;
using ActionId = std::uint32_t;

inline constexpr std::size_t kActionCount = 4;
/// Send-rate multiplier applied to the configured application rate.
inline constexpr std::array<double, kActionCount> kRateMultipliers{0.25, 0.5, 0.75, 1.0};

struct RewardWeights {
  double throughput = 0.3;  // alpha1
  double delay = 0.7;       // alpha2
};

struct AgentConfig {
  double epsilon = 0.2;
  double gamma = 0.99;
  double alpha = 0.1;
  RewardWeights weights;
  double decision_epoch_s = 1.0;
  std::uint32_t episodes = 3;

  void validate() const;
};

struct Observation {
  double mean_delay_s = 0.0;
  double throughput_bps = 0.0;
  std::uint32_t delivered_streams = 0;
};

struct RewardNorms {
  double delay_ref_s = 0.100;
  double throughput_ref_bps = 22e6;
};

/// alpha1 * min(throughput / ref, 1) - alpha2 * min(delay / ref, 1)
double reward(const Observation& obs, const RewardNorms& norms, const RewardWeights& w = {});

/// Dense |S| x 4 action-value table, zero-initialised.
class QTable {
 public:
  explicit QTable(std::size_t states, std::size_t actions = kActionCount);

  std::size_t states() const { return states_; }
  std::size_t actions() const { return actions_; }

  double at(StateId s, ActionId a) const { return values_.at(index(s, a)); }
  std::span<const double> row(StateId s) const;
  std::span<const double> values() const { return values_; }

  /// Direct write; reserved for tests and checkpoint loading.
  void set(StateId s, ActionId a, double v);

  /// Lowest action id among the maxima.
  ActionId argmax(StateId s) const;
  double max_value(StateId s) const;

  /// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)). Returns the
  /// new Q(s,a).
  double update(StateId s, ActionId a, double r, StateId s_next, double alpha, double gamma);

  /// Checkpoint layout, little-endian: "QTBL", u32 version (1), u32 states,
  /// u32 actions, then states*actions IEEE-754 doubles in row-major order.
  void save(const std::filesystem::path& path) const;
  static QTable load(const std::filesystem::path& path);
  std::vector<std::uint8_t> serialize() const;
  static QTable deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const QTable&) const = default;

 private:
  std::size_t index(StateId s, ActionId a) const;

  std::size_t states_;
  std::size_t actions_;
  std::vector<double> values_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Epsilon-greedy: uniform over actions with probability epsilon,
/// otherwise QTable::argmax.
ActionId select_action(const QTable& q, StateId s, double epsilon, Rng& rng);

/// 8x8 (delay, throughput) grid. Delay edges are log-spaced, throughput
/// edges linear; each value falls into the bin counting the edges <= it.
class StateBinning {
 public:
  static constexpr std::size_t kBinsPerAxis = 8;

  /// Default edges: delay 1 ms .. 1 s (log), throughput ref/8 .. 7*ref/8.
  explicit StateBinning(const RewardNorms& norms = {});
  StateBinning(std::vector<double> delay_edges, std::vector<double> throughput_edges);

  std::size_t state_count() const { return kBinsPerAxis * kBinsPerAxis; }
  const std::vector<double>& delay_edges() const { return delay_edges_; }
  const std::vector<double>& throughput_edges() const { return throughput_edges_; }

  StateId discretize(const Observation& obs) const;

 private:
  std::vector<double> delay_edges_;
  std::vector<double> throughput_edges_;
};

/// Closed-loop learner stepped once per decision epoch.
class QosAgent {
 public:
  QosAgent(AgentConfig cfg, RewardNorms norms, std::uint64_t seed);
  QosAgent(AgentConfig cfg, RewardNorms norms, QTable table, std::uint64_t seed);

  /// Scores the observation for the previous action, learns from it unless
  /// frozen, and returns the next action.
  ActionId step(const Observation& obs);

  /// Drops the pending (state, action) so the next step starts a fresh
  /// trajectory. The table is kept.
  void begin_episode();

  void set_epsilon(double e) { epsilon_ = e; }
  double epsilon() const { return epsilon_; }
  void set_learning(bool on) { learning_ = on; }
  bool learning() const { return learning_; }

  const QTable& table() const { return table_; }
  const StateBinning& binning() const { return binning_; }
  double last_reward() const { return last_reward_; }
  ActionId current_action() const { return action_; }

 private:
  AgentConfig cfg_;
  RewardNorms norms_;
  StateBinning binning_;
  QTable table_;
  Rng rng_;
  double epsilon_;
  bool learning_ = true;
  bool has_prev_ = false;
  StateId prev_state_ = 0;
  ActionId action_ = kActionCount - 1;
  double last_reward_ = 0.0;
};

}  // namespace vhil::agent
