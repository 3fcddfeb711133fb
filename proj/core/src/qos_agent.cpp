#include "vhil/qos_agent.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vhil::agent {

void AgentConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("agent: epsilon must lie in [0, 1]");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("agent: gamma must lie in [0, 1)");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("agent: alpha must lie in (0, 1]");
  }
  if (std::abs(weights.throughput + weights.delay - 1.0) > 1e-12) {
    throw std::invalid_argument("agent: reward weights must sum to 1");
  }
  if (!(decision_epoch_s > 0.0)) {
    throw std::invalid_argument("agent: decision epoch must be positive");
  }
  if (episodes == 0) {
    throw std::invalid_argument("agent: at least one episode is required");
  }
}

double reward(const Observation& obs, const RewardNorms& norms, const RewardWeights& w) {
  if (!(norms.delay_ref_s > 0.0) || !(norms.throughput_ref_bps > 0.0)) {
    throw std::invalid_argument("reward: reference scales must be positive");
  }
  const double t = std::min(obs.throughput_bps / norms.throughput_ref_bps, 1.0);
  const double d = std::min(obs.mean_delay_s / norms.delay_ref_s, 1.0);
  return w.throughput * t - w.delay * d;
}

QTable::QTable(std::size_t states, std::size_t actions)
    : states_(states), actions_(actions), values_(states * actions, 0.0) {
  if (states == 0 || actions == 0) {
    throw std::invalid_argument("QTable: dimensions must be positive");
  }
}

std::size_t QTable::index(StateId s, ActionId a) const {
  if (s >= states_ || a >= actions_) {
    throw std::out_of_range("QTable: state or action out of range");
  }
  return static_cast<std::size_t>(s) * actions_ + a;
}

std::span<const double> QTable::row(StateId s) const {
  return std::span<const double>(values_).subspan(index(s, 0), actions_);
}

void QTable::set(StateId s, ActionId a, double v) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument("QTable: values must be finite");
  }
  values_[index(s, a)] = v;
}

ActionId QTable::argmax(StateId s) const {
  const auto r = row(s);
  // max_element returns the first of equal maxima.
  return static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin());
}

double QTable::max_value(StateId s) const {
  const auto r = row(s);
  return *std::max_element(r.begin(), r.end());
}

double QTable::update(StateId s, ActionId a, double r, StateId s_next, double alpha,
                      double gamma) {
  if (!std::isfinite(r)) {
    throw std::invalid_argument("QTable::update: reward must be finite");
  }
  const double target = r + gamma * max_value(s_next);
  double& q = values_[index(s, a)];
  q = q + alpha * (target - q);
  return q;
}

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'Q', 'T', 'B', 'L'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderSize = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) {
    v |= std::uint64_t{b[i]} << (8 * i);
  }
  return v;
}

}  // namespace

std::vector<std::uint8_t> QTable::serialize() const {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderSize + values_.size() * 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(states_));
  put_u32(out, static_cast<std::uint32_t>(actions_));
  for (double v : values_) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

QTable QTable::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw CheckpointError("Q-table checkpoint: bad magic");
  }
  if (get_le(bytes.subspan(4), 4) != kVersion) {
    throw CheckpointError("Q-table checkpoint: unsupported version");
  }
  const auto states = static_cast<std::size_t>(get_le(bytes.subspan(8), 4));
  const auto actions = static_cast<std::size_t>(get_le(bytes.subspan(12), 4));
  if (states == 0 || actions == 0 || bytes.size() != kHeaderSize + states * actions * 8) {
    throw CheckpointError("Q-table checkpoint: size does not match header");
  }
  QTable q(states, actions);
  for (std::size_t i = 0; i < states * actions; ++i) {
    const double v = std::bit_cast<double>(get_le(bytes.subspan(kHeaderSize + 8 * i), 8));
    if (!std::isfinite(v)) {
      throw CheckpointError("Q-table checkpoint: non-finite value");
    }
    q.values_[i] = v;
  }
  return q;
}

void QTable::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw CheckpointError("cannot write Q-table checkpoint " + path.string());
  }
}

QTable QTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open Q-table checkpoint " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

ActionId select_action(const QTable& q, StateId s, double epsilon, Rng& rng) {
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<ActionId> pick(0, static_cast<ActionId>(q.actions() - 1));
      return pick(rng);
    }
  }
  return q.argmax(s);
}

namespace {

std::vector<double> default_delay_edges() {
  // 1 ms .. 1 s, half-decade steps.
  std::vector<double> edges;
  for (int k = 0; k < 7; ++k) {
    edges.push_back(std::pow(10.0, -3.0 + 0.5 * k));
  }
  return edges;
}

std::vector<double> default_throughput_edges(double ref) {
  std::vector<double> edges;
  for (int k = 1; k <= 7; ++k) {
    edges.push_back(ref * k / 8.0);
  }
  return edges;
}

void check_edges(const std::vector<double>& edges) {
  if (edges.size() != StateBinning::kBinsPerAxis - 1) {
    throw std::invalid_argument("StateBinning: exactly 7 edges per axis are required");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw std::invalid_argument("StateBinning: edges must be strictly increasing");
    }
  }
}

std::size_t bin_of(const std::vector<double>& edges, double v) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

}  // namespace

StateBinning::StateBinning(const RewardNorms& norms)
    : StateBinning(default_delay_edges(), default_throughput_edges(norms.throughput_ref_bps)) {}

StateBinning::StateBinning(std::vector<double> delay_edges, std::vector<double> throughput_edges)
    : delay_edges_(std::move(delay_edges)), throughput_edges_(std::move(throughput_edges)) {
  check_edges(delay_edges_);
  check_edges(throughput_edges_);
}

StateId StateBinning::discretize(const Observation& obs) const {
  const auto d = bin_of(delay_edges_, obs.mean_delay_s);
  const auto t = bin_of(throughput_edges_, obs.throughput_bps);
  return static_cast<StateId>(d * kBinsPerAxis + t);
}

QosAgent::QosAgent(AgentConfig cfg, RewardNorms norms, std::uint64_t seed)
    : QosAgent(cfg, norms, QTable(StateBinning::kBinsPerAxis * StateBinning::kBinsPerAxis), seed) {}

QosAgent::QosAgent(AgentConfig cfg, RewardNorms norms, QTable table, std::uint64_t seed)
    : cfg_(cfg),
      norms_(norms),
      binning_(norms),
      table_(std::move(table)),
      rng_(seed),
      epsilon_(cfg.epsilon) {
  cfg_.validate();
  if (table_.states() != binning_.state_count() || table_.actions() != kActionCount) {
    throw std::invalid_argument("QosAgent: Q-table shape does not match the 8x8x4 layout");
  }
}

ActionId QosAgent::step(const Observation& obs) {
  const StateId s = binning_.discretize(obs);
  last_reward_ = reward(obs, norms_, cfg_.weights);
  if (has_prev_ && learning_) {
    table_.update(prev_state_, action_, last_reward_, s, cfg_.alpha, cfg_.gamma);
  }
  action_ = select_action(table_, s, epsilon_, rng_);
  prev_state_ = s;
  has_prev_ = true;
  return action_;
}

void QosAgent::begin_episode() {
  has_prev_ = false;
}

}  // namespace vhil::agent
