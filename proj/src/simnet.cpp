#include "conprox/simnet.hpp"

#include "conprox/merit.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <random>
#include <sstream>

namespace conprox::simnet {

// ----------------------------------------------------------------------------
// Wire format
// ----------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) {
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff));
  }
}

void put_vec(std::vector<std::uint8_t>& out, const Vec& v) {
  if (!v.allFinite()) {
    throw SolverError(ErrorCode::MalformedFrame, "encode: non-finite entries");
  }
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

struct Reader {
  std::span<const std::uint8_t> data;
  std::size_t at = 0;

  void need(std::size_t n) const {
    if (at + n > data.size()) {
      throw SolverError(ErrorCode::MalformedFrame, "truncated frame");
    }
  }
  std::uint8_t u8() {
    need(1);
    return data[at++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
      v |= static_cast<std::uint32_t>(data[at++]) << (8 * b);
    }
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(data[at++]) << (8 * b);
    }
    return std::bit_cast<double>(bits);
  }
  Vec vec() {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * 8);
    Vec v(static_cast<Eigen::Index>(n));
    for (std::uint32_t i = 0; i < n; ++i) v(i) = f64();
    if (!v.allFinite()) {
      throw SolverError(ErrorCode::MalformedFrame, "non-finite payload");
    }
    return v;
  }
  void expect_done() const {
    if (at != data.size()) {
      throw SolverError(ErrorCode::MalformedFrame, "trailing bytes in frame");
    }
  }
};

bool exact_equal(const Vec& a, const Vec& b) {
  return a.size() == b.size() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& message) {
  std::vector<std::uint8_t> body;
  body.push_back(kWireVersion);
  if (const auto* up = std::get_if<AgentUpload>(&message)) {
    body.push_back(kTagUpload);
    put_u32(body, static_cast<std::uint32_t>(up->agent_id));
    put_u32(body, static_cast<std::uint32_t>(up->round));
    put_vec(body, up->x_plus);
    put_vec(body, up->g_or_lambda);
  } else {
    const auto& bc = std::get<MasterBroadcast>(message);
    body.push_back(bc.z_flag ? kTagBroadcastZ : kTagBroadcast);
    put_u32(body, static_cast<std::uint32_t>(bc.round));
    put_vec(body, bc.y_plus);
  }
  std::vector<std::uint8_t> frame;
  frame.reserve(4 + body.size());
  put_u32(frame, static_cast<std::uint32_t>(body.size()));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

Message decode(std::span<const std::uint8_t> frame) {
  Reader r{frame};
  const std::uint32_t body_len = r.u32();
  if (body_len != frame.size() - 4) {
    throw SolverError(ErrorCode::MalformedFrame, "length field mismatch");
  }
  if (r.u8() != kWireVersion) {
    throw SolverError(ErrorCode::MalformedFrame, "unknown wire version");
  }
  const std::uint8_t tag = r.u8();
  if (tag == kTagUpload) {
    AgentUpload up;
    up.agent_id = static_cast<int>(r.u32());
    up.round = static_cast<int>(r.u32());
    up.x_plus = r.vec();
    up.g_or_lambda = r.vec();
    r.expect_done();
    return up;
  }
  if (tag == kTagBroadcast || tag == kTagBroadcastZ) {
    MasterBroadcast bc;
    bc.z_flag = (tag == kTagBroadcastZ);
    bc.round = static_cast<int>(r.u32());
    bc.y_plus = r.vec();
    r.expect_done();
    return bc;
  }
  throw SolverError(ErrorCode::MalformedFrame, "unknown message tag");
}

// ----------------------------------------------------------------------------
// SimBus
// ----------------------------------------------------------------------------

void SimBus::post(std::vector<std::uint8_t> frame, int deliver_tick) {
  entries_.push_back({deliver_tick, next_seq_++, std::move(frame)});
}

std::vector<std::vector<std::uint8_t>> SimBus::poll(int tick) {
  std::vector<std::vector<std::uint8_t>> due;
  std::vector<Entry> rest;
  rest.reserve(entries_.size());
  for (Entry& e : entries_) {
    if (e.tick == tick) {
      due.push_back(std::move(e.frame));
    } else {
      rest.push_back(std::move(e));
    }
  }
  entries_ = std::move(rest);
  return due;  // posting order within a tick
}

// ----------------------------------------------------------------------------
// ProtocolSweepExecutor
// ----------------------------------------------------------------------------

ProtocolSweepExecutor::ProtocolSweepExecutor(
    const std::vector<AgentProblem>& problems, const SolverConfig& config,
    DeliveryOrder order, FaultPlan faults)
    : problems_(problems), config_(config), order_(order), faults_(faults) {}

void ProtocolSweepExecutor::begin_phase(const LowerState& init,
                                        const UpperState& upper) {
  const int n_agents = init.agent_count();
  if (!initialized_) {
    // Out-of-band setup: z0, duals and curvature models are distributed
    // before the first round, as in the algorithms' initialization step.
    agents_.clear();
    agents_.resize(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) {
      AgentNode& node = agents_[static_cast<std::size_t>(i)];
      node.id = i;
      node.x = init.x[i];
      node.y = init.y;
      node.z = upper.z;
      node.lambda = init.lambda[i];
      node.g = init.g[i];
      node.B = init.B[i];
      node.round = 0;
    }
    master_y_ = init.y;
    initialized_ = true;
  } else {
    // Later phases: agents reset themselves on the z-flag broadcast. Only
    // the curvature models are re-registered.
    for (int i = 0; i < n_agents; ++i) {
      AgentNode& node = agents_[static_cast<std::size_t>(i)];
      node.B = init.B[i];
      if (!exact_equal(node.x, init.x[i]) || !exact_equal(node.y, init.y) ||
          !exact_equal(node.z, upper.z) ||
          !exact_equal(node.lambda, init.lambda[i]) ||
          !exact_equal(node.g, init.g[i])) {
        throw std::logic_error("protocol agents drifted from the phase state");
      }
    }
    if (!exact_equal(master_y_, init.y)) {
      throw std::logic_error("protocol master drifted from the phase state");
    }
  }
  if (config_.is_caladin_family()) {
    master_consensus_.emplace(init.B, config_.beta);
  } else {
    master_consensus_.reset();
  }
}

AgentUpload ProtocolSweepExecutor::compute_upload(AgentNode& node) const {
  AgentUpload up;
  up.agent_id = node.id;
  up.round = node.round;
  if (config_.method == Method::CadmmProx) {
    node.lambda = dual_update_admm(node.lambda, config_.rho, node.x, node.y);
  }
  up.x_plus = run_local_update(problems_[static_cast<std::size_t>(node.id)],
                               config_, node.y, node.z, node.lambda, node.B);
  node.g = node.B.apply(node.y - up.x_plus) - node.lambda;
  node.x = up.x_plus;
  up.g_or_lambda = config_.is_caladin_family() ? node.g : node.lambda;
  return up;
}

void ProtocolSweepExecutor::apply_broadcast(AgentNode& node,
                                            const MasterBroadcast& b) const {
  if (config_.is_caladin_family()) {
    node.lambda = node.B.apply(node.x - b.y_plus) - node.g;
  } else if (config_.method == Method::PlainCadmm) {
    node.lambda = dual_update_admm(node.lambda, config_.rho, node.x, b.y_plus);
  }
  // CadmmProx keeps its stored dual one step behind (pre-sweep update).
  node.y = b.y_plus;
  if (b.z_flag) node.z = b.y_plus;
  node.round += 1;
}

int ProtocolSweepExecutor::delivery_tick(int agent_index, int round) const {
  const int n_agents = static_cast<int>(agents_.size());
  switch (order_) {
    case DeliveryOrder::AgentIndex:
      return agent_index;
    case DeliveryOrder::ReverseIndex:
      return n_agents - 1 - agent_index;
    case DeliveryOrder::SeededShuffle: {
      std::vector<int> ticks(static_cast<std::size_t>(n_agents));
      std::iota(ticks.begin(), ticks.end(), 0);
      std::mt19937_64 rng(config_.seed * 0x100000001b3ULL +
                          static_cast<std::uint64_t>(round) + 1);
      std::shuffle(ticks.begin(), ticks.end(), rng);
      return ticks[static_cast<std::size_t>(agent_index)];
    }
  }
  return agent_index;
}

RoundResult ProtocolSweepExecutor::run_round(const UpperState& upper) {
  if (!initialized_) {
    throw std::logic_error("run_round before begin_phase");
  }
  const int n_agents = static_cast<int>(agents_.size());
  const int round = rounds_;

  for (int i = 0; i < n_agents; ++i) {
    if (i == faults_.silent_agent && round >= faults_.silent_from_round) {
      continue;
    }
    auto frame = encode(compute_upload(agents_[static_cast<std::size_t>(i)]));
    const int tick = delivery_tick(i, round);
    if (i == faults_.duplicate_agent) {
      bus_.post(frame, tick + 1);
    }
    bus_.post(std::move(frame), tick);
  }

  std::vector<std::optional<AgentUpload>> got(
      static_cast<std::size_t>(n_agents));
  int received = 0;
  for (int tick = 0; tick <= config_.tick_budget; ++tick) {
    for (auto& frame : bus_.poll(tick)) {
      Message m = decode(frame);
      auto* up = std::get_if<AgentUpload>(&m);
      if (up == nullptr) {
        throw SolverError(ErrorCode::MalformedFrame,
                          "master expected an upload");
      }
      if (up->round != round) {
        throw SolverError(ErrorCode::MalformedFrame, "upload round mismatch");
      }
      if (up->agent_id < 0 || up->agent_id >= n_agents) {
        throw SolverError(ErrorCode::MalformedFrame, "agent id out of range");
      }
      auto& slot = got[static_cast<std::size_t>(up->agent_id)];
      if (slot.has_value()) {
        std::ostringstream oss;
        oss << "agent " << up->agent_id << " uploaded twice in round " << round;
        throw SolverError(ErrorCode::DuplicateUpload, oss.str());
      }
      slot = std::move(*up);
      ++received;
      ++uploads_delivered_;
    }
    if (received == n_agents && bus_.idle()) break;
  }
  if (received < n_agents) {
    std::ostringstream oss;
    oss << "round " << round << " timed out with " << received << "/"
        << n_agents << " uploads";
    throw SolverError(ErrorCode::MissingUpload, oss.str());
  }

  // Fixed agent order from here on, regardless of arrival order.
  RoundResult result;
  result.uploads.reserve(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    result.uploads.push_back(std::move(*got[static_cast<std::size_t>(i)]));
  }

  // Consensus from wire data only.
  Vec y_plus;
  if (config_.is_caladin_family()) {
    std::vector<Vec> xs, gs;
    for (const AgentUpload& up : result.uploads) {
      xs.push_back(up.x_plus);
      gs.push_back(up.g_or_lambda);
    }
    y_plus = master_consensus_->aladin_update(xs, gs, master_y_);
  } else {
    LowerState wire_state;
    for (const AgentUpload& up : result.uploads) {
      wire_state.x.push_back(up.x_plus);
      wire_state.lambda.push_back(up.g_or_lambda);
    }
    wire_state.y = master_y_;
    y_plus = consensus_update_admm(wire_state, config_.rho, config_.beta,
                                   master_y_);
  }

  // The simulation evaluates objectives centrally for the acceptance flag.
  const double merit_after =
      merit_at_consensus(problems_, y_plus, upper.z, upper.sigma,
                         config_.effective_gamma())
          .total;
  const bool z_flag =
      config_.is_plain() ? true : (merit_after < upper.merit_at_z);

  result.broadcast = MasterBroadcast{round, y_plus, z_flag};
  const auto bframe = encode(Message{result.broadcast});
  ++broadcasts_sent_;
  for (AgentNode& node : agents_) {
    apply_broadcast(node, std::get<MasterBroadcast>(decode(bframe)));
  }
  master_y_ = y_plus;
  ++rounds_;
  return result;
}

SweepReport ProtocolSweepExecutor::run_sweep(const LowerState& state,
                                             const UpperState& upper) {
  const int n_agents = state.agent_count();
  if (static_cast<int>(agents_.size()) != n_agents) {
    throw std::logic_error("protocol executor agent count mismatch");
  }
  for (int i = 0; i < n_agents; ++i) {
    const AgentNode& node = agents_[static_cast<std::size_t>(i)];
    if (!exact_equal(node.x, state.x[i]) || !exact_equal(node.y, state.y) ||
        !exact_equal(node.lambda, state.lambda[i]) ||
        !exact_equal(node.g, state.g[i])) {
      throw std::logic_error("protocol state diverged from the solver state");
    }
  }
  if (!exact_equal(master_y_, state.y)) {
    throw std::logic_error("protocol master diverged from the solver state");
  }

  RoundResult round = run_round(upper);

  std::vector<Vec> lambda_used(static_cast<std::size_t>(n_agents));
  std::vector<Vec> x_plus(static_cast<std::size_t>(n_agents));
  std::vector<Vec> g_plus(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    const AgentUpload& up = round.uploads[static_cast<std::size_t>(i)];
    x_plus[i] = up.x_plus;
    if (config_.is_caladin_family()) {
      lambda_used[i] = state.lambda[i];
      g_plus[i] = up.g_or_lambda;
    } else {
      lambda_used[i] = up.g_or_lambda;
      g_plus[i] = state.B[i].apply(state.y - x_plus[i]) - lambda_used[i];
    }
  }
  const Vec& y_plus = round.broadcast.y_plus;

  std::vector<Vec> lambda_next(static_cast<std::size_t>(n_agents));
  std::vector<Vec> lambda_report(static_cast<std::size_t>(n_agents));
  switch (config_.method) {
    case Method::CaladinProx:
    case Method::PlainCaladin:
      for (int i = 0; i < n_agents; ++i) {
        lambda_next[i] = state.B[i].apply(x_plus[i] - y_plus) - g_plus[i];
        lambda_report[i] = lambda_next[i];
      }
      break;
    case Method::PlainCadmm:
      for (int i = 0; i < n_agents; ++i) {
        lambda_next[i] =
            dual_update_admm(lambda_used[i], config_.rho, x_plus[i], y_plus);
        lambda_report[i] = lambda_next[i];
      }
      break;
    case Method::CadmmProx:
      for (int i = 0; i < n_agents; ++i) {
        lambda_next[i] = lambda_used[i];
        lambda_report[i] =
            dual_update_admm(lambda_used[i], config_.rho, x_plus[i], y_plus);
      }
      break;
  }

  return assemble_sweep_report(state, problems_, config_, upper,
                               std::move(lambda_used), std::move(x_plus),
                               std::move(g_plus), y_plus,
                               std::move(lambda_next),
                               std::move(lambda_report));
}

LowerState ProtocolSweepExecutor::snapshot() const {
  LowerState state;
  for (const AgentNode& node : agents_) {
    state.x.push_back(node.x);
    state.lambda.push_back(node.lambda);
    state.g.push_back(node.g);
    state.B.push_back(node.B);
  }
  state.y = master_y_;
  state.sweep_index = rounds_;
  return state;
}

}  // namespace conprox::simnet
