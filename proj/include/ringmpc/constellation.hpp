#pragma once

#include "ringmpc/controllers.hpp"
#include "ringmpc/dynamics.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringmpc {

class InvalidScenario : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DeorbitEvent {
  std::vector<int> removed;  // sorted slot ids

  /// Throws InvalidScenario on repeated or out-of-range ids.
  void validate(int slotCount) const;
};

/// Active spacecraft in ring order with fixed neighbor sets of size p
/// (p/2 ahead and p/2 behind, wrapping). Ids are original slot numbers.
class RingTopology {
 public:
  /// Full ring of slots 0..slotCount-1.
  RingTopology(int slotCount, int neighborCount);

  int slotCount() const { return slotCount_; }
  int neighborCount() const { return neighborCount_; }
  int size() const { return static_cast<int>(order_.size()); }
  const std::vector<int>& order() const { return order_; }
  /// Neighbor ids of the spacecraft at ring position pos.
  const std::vector<int>& neighbors(int pos) const { return neighbors_[pos]; }
  /// Same sets expressed as ring positions.
  std::vector<std::vector<int>> neighborPositions() const;
  /// Ring position of an id, or -1 if inactive.
  int positionOf(int id) const;
  bool isActive(int id) const { return positionOf(id) >= 0; }
  /// j in N_i <=> i in N_j for every active pair.
  bool isSymmetric() const;

  friend RingTopology applyDeorbit(const RingTopology& ring, const DeorbitEvent& event);

 private:
  RingTopology(int slotCount, int neighborCount, std::vector<int> order);
  void rebuild();

  int slotCount_;
  int neighborCount_;
  std::vector<int> order_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<int> position_;
};

/// Draws ndeorbit distinct slots uniformly without replacement.
DeorbitEvent drawDeorbit(int slotCount, int ndeorbit, std::uint64_t seed);

/// Equally spaced co-orbiting ring: theta = 2 pi i / nsat, everything else zero.
std::vector<CylindricalState> initialRing(int nsat, const OrbitParams& params);

/// Removes the event's ids and rebuilds the neighbor sets over the survivors.
/// Removing ids that are already inactive is a no-op, so the operation is idempotent.
RingTopology applyDeorbit(const RingTopology& ring, const DeorbitEvent& event);

/// Predicted angle track broadcast by one spacecraft. Sample 0 applies at `step`.
struct TrajectoryMessage {
  int sender{};
  int step{};
  std::vector<double> theta;

  void validate(int horizon) const;
  /// "<sender> <step> <length> <theta_0> ... <theta_n>" with 17 significant digits.
  std::string serialize() const;
  static TrajectoryMessage parse(const std::string& line);
};

/// Information layer between controller solves of consecutive steps. FD-MPC
/// neighbors only sense current angles; DMPC-IS neighbors receive the
/// trajectories published at the previous step; CentMPC bypasses the layer.
class InformationExchange {
 public:
  InformationExchange(const RingTopology& ring, ControllerKind regime, int horizon, double sampleTime,
                      double lossProbability = 0.0, std::uint64_t seed = 0);

  /// Per-survivor neighbor information for this step. states follow ring order.
  std::vector<NeighborInfo> gather(int step, const std::vector<CylindricalState>& states);
  /// Builds and stores the messages each survivor broadcasts after solving at `step`.
  void publish(int step, const std::vector<ControlPlan>& plans);

  const std::vector<std::optional<TrajectoryMessage>>& mailbox() const { return mailbox_; }
  int lostMessages() const { return lost_; }
  int degradedTracks() const { return degraded_; }

 private:
  const RingTopology& ring_;
  ControllerKind regime_;
  int horizon_;
  double sampleTime_;
  double lossProbability_;
  std::mt19937_64 rng_;
  std::vector<std::optional<TrajectoryMessage>> mailbox_;  // indexed by ring position
  int lost_{};
  int degraded_{};
};

/// Stateless form of the exchange: previous plans are those published at
/// step-1 (or none at step 0), in ring order.
std::vector<NeighborInfo> exchange(int step, const std::vector<ControlPlan>* previousPlans,
                                   const std::vector<CylindricalState>& states,
                                   const RingTopology& ring, ControllerKind regime, int horizon,
                                   double sampleTime);

}  // namespace ringmpc
