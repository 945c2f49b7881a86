#pragma once

#include "conprox/lower.hpp"

#include <limits>
#include <variant>

namespace conprox::simnet {

// ----------------------------------------------------------------------------
// Messages and wire format
// ----------------------------------------------------------------------------

struct AgentUpload {
  int agent_id = 0;
  int round = 0;
  Vec x_plus;
  /// Gradient surrogate for the consensus-QP methods, dual for ADMM.
  Vec g_or_lambda;
};

struct MasterBroadcast {
  int round = 0;
  Vec y_plus;
  bool z_flag = false;  // 1 when the upper variable advanced this round
};

using Message = std::variant<AgentUpload, MasterBroadcast>;

inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::uint8_t kTagUpload = 0x00;
inline constexpr std::uint8_t kTagBroadcast = 0x01;   // z_flag = 0
inline constexpr std::uint8_t kTagBroadcastZ = 0x02;  // z_flag = 1

/// Length-prefixed frame: u32 body length, 1-byte version, 1-byte tag, then
/// little-endian u32 counts and 64-bit reals. Round trips are bit-exact.
std::vector<std::uint8_t> encode(const Message& message);
Message decode(std::span<const std::uint8_t> frame);

// ----------------------------------------------------------------------------
// Simulated transport
// ----------------------------------------------------------------------------

/// Frames delivered in (tick, posting order). Time is integer ticks only.
class SimBus {
 public:
  void post(std::vector<std::uint8_t> frame, int deliver_tick);
  /// Removes and returns every frame due at exactly `tick`.
  std::vector<std::vector<std::uint8_t>> poll(int tick);
  bool idle() const { return entries_.empty(); }

 private:
  struct Entry {
    int tick;
    std::uint64_t seq;
    std::vector<std::uint8_t> frame;
  };
  std::vector<Entry> entries_;
  std::uint64_t next_seq_ = 0;
};

enum class DeliveryOrder { AgentIndex, ReverseIndex, SeededShuffle };

struct FaultPlan {
  int silent_agent = -1;
  int silent_from_round = 0;
  /// Re-posts the given agent's upload a second time in every round.
  int duplicate_agent = -1;
};

struct RoundResult {
  MasterBroadcast broadcast;
  std::vector<AgentUpload> uploads;  // sorted by agent_id
};

// ----------------------------------------------------------------------------
// Protocol-backed sweep executor
// ----------------------------------------------------------------------------

/// Runs each lower-level sweep as one message round: N uploads into the bus,
/// one consensus step at the master over wire data only, one broadcast back.
/// Numerically bit-identical to the direct sweep; agents keep x and lambda
/// local, the master reconstructs consensus-QP duals from (x+, g, y+).
class ProtocolSweepExecutor : public SweepExecutor {
 public:
  ProtocolSweepExecutor(const std::vector<AgentProblem>& problems,
                        const SolverConfig& config,
                        DeliveryOrder order = DeliveryOrder::SeededShuffle,
                        FaultPlan faults = {});

  void begin_phase(const LowerState& init, const UpperState& upper) override;
  SweepReport run_sweep(const LowerState& state,
                        const UpperState& upper) override;

  /// One raw protocol round against the current node states.
  RoundResult run_round(const UpperState& upper);

  /// Mirror of the distributed state, for equivalence checks.
  LowerState snapshot() const;

  int rounds_completed() const { return rounds_; }
  long long uploads_delivered() const { return uploads_delivered_; }
  long long broadcasts_sent() const { return broadcasts_sent_; }

 private:
  struct AgentNode {
    int id = 0;
    Vec x, y, z, lambda, g;
    SpdMatrix B = SpdMatrix::scaled_identity(1, 1.0);
    int round = 0;
  };

  AgentUpload compute_upload(AgentNode& node) const;
  void apply_broadcast(AgentNode& node, const MasterBroadcast& b) const;
  int delivery_tick(int agent_index, int round) const;

  const std::vector<AgentProblem>& problems_;
  const SolverConfig& config_;
  DeliveryOrder order_;
  FaultPlan faults_;

  std::vector<AgentNode> agents_;
  Vec master_y_;
  std::optional<ConsensusKernel> master_consensus_;
  SimBus bus_;
  bool initialized_ = false;
  int rounds_ = 0;
  long long uploads_delivered_ = 0;
  long long broadcasts_sent_ = 0;
};

}  // namespace conprox::simnet
