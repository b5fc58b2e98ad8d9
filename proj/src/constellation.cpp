#include "ringmpc/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ringmpc {

RingTopology::RingTopology(int slotCount, int neighborCount)
    : RingTopology(slotCount, neighborCount, [slotCount] {
        if (slotCount < 2) throw InvalidScenario("a ring needs at least two spacecraft");
        std::vector<int> ids(static_cast<std::size_t>(slotCount));
        std::iota(ids.begin(), ids.end(), 0);
        return ids;
      }()) {}

RingTopology::RingTopology(int slotCount, int neighborCount, std::vector<int> order)
    : slotCount_(slotCount), neighborCount_(neighborCount), order_(std::move(order)) {
  if (neighborCount < 2 || neighborCount % 2 != 0) {
    throw InvalidScenario("neighbor count must be even and at least 2");
  }
  rebuild();
}

void RingTopology::rebuild() {
  const int m = size();
  if (m < 2) throw InvalidScenario("at least two spacecraft must remain in the ring");
  const int half = neighborCount_ / 2;
  if (half >= m) throw InvalidScenario("neighbor count too large for the number of survivors");
  position_.assign(static_cast<std::size_t>(slotCount_), -1);
  for (int k = 0; k < m; ++k) position_[order_[k]] = k;
  neighbors_.assign(static_cast<std::size_t>(m), {});
  for (int k = 0; k < m; ++k) {
    auto& n = neighbors_[k];
    for (int d = 1; d <= half; ++d) n.push_back(order_[(k + d) % m]);
    for (int d = 1; d <= half; ++d) n.push_back(order_[((k - d) % m + m) % m]);
  }
}

std::vector<std::vector<int>> RingTopology::neighborPositions() const {
  std::vector<std::vector<int>> out(neighbors_.size());
  for (std::size_t k = 0; k < neighbors_.size(); ++k) {
    for (int id : neighbors_[k]) out[k].push_back(position_[id]);
  }
  return out;
}

int RingTopology::positionOf(int id) const {
  if (id < 0 || id >= slotCount_) return -1;
  return position_[id];
}

bool RingTopology::isSymmetric() const {
  for (int k = 0; k < size(); ++k) {
    for (int j : neighbors_[k]) {
      const auto& back = neighbors_[position_[j]];
      if (std::find(back.begin(), back.end(), order_[k]) == back.end()) return false;
    }
  }
  return true;
}

void DeorbitEvent::validate(int slotCount) const {
  std::vector<int> sorted = removed;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidScenario("deorbit ids must be distinct");
  }
  for (int id : sorted) {
    if (id < 0 || id >= slotCount) throw InvalidScenario("deorbit id out of range");
  }
}

DeorbitEvent drawDeorbit(int slotCount, int ndeorbit, std::uint64_t seed) {
  if (ndeorbit < 0 || ndeorbit > slotCount) throw InvalidScenario("deorbit count out of range");
  std::vector<int> slots(static_cast<std::size_t>(slotCount));
  std::iota(slots.begin(), slots.end(), 0);
  DeorbitEvent e;
  std::mt19937_64 rng(seed);
  std::ranges::sample(slots, std::back_inserter(e.removed), ndeorbit, rng);
  std::sort(e.removed.begin(), e.removed.end());
  return e;
}

std::vector<CylindricalState> initialRing(int nsat, const OrbitParams& /*params*/) {
  if (nsat < 2) throw InvalidScenario("a ring needs at least two spacecraft");
  std::vector<CylindricalState> out(static_cast<std::size_t>(nsat));
  for (int i = 0; i < nsat; ++i) out[i].theta = 2.0 * std::numbers::pi * i / nsat;
  return out;
}

RingTopology applyDeorbit(const RingTopology& ring, const DeorbitEvent& event) {
  event.validate(ring.slotCount());
  std::vector<int> order;
  for (int id : ring.order()) {
    if (std::find(event.removed.begin(), event.removed.end(), id) == event.removed.end()) {
      order.push_back(id);
    }
  }
  if (order.size() < 2) throw InvalidScenario("deorbit leaves fewer than two spacecraft");
  return RingTopology(ring.slotCount(), ring.neighborCount(), std::move(order));
}

void TrajectoryMessage::validate(int horizon) const {
  if (static_cast<int>(theta.size()) != horizon + 1) {
    throw std::invalid_argument("trajectory message must carry Np+1 samples");
  }
  for (double t : theta) {
    if (!std::isfinite(t)) throw std::invalid_argument("trajectory message has non-finite samples");
  }
}

std::string TrajectoryMessage::serialize() const {
  std::ostringstream os;
  os << std::setprecision(17) << sender << ' ' << step << ' ' << theta.size();
  for (double t : theta) os << ' ' << t;
  return os.str();
}

TrajectoryMessage TrajectoryMessage::parse(const std::string& line) {
  std::istringstream is(line);
  TrajectoryMessage m;
  std::size_t n = 0;
  if (!(is >> m.sender >> m.step >> n)) throw std::invalid_argument("malformed trajectory message");
  m.theta.resize(n);
  for (double& t : m.theta) {
    if (!(is >> t)) throw std::invalid_argument("truncated trajectory message");
  }
  std::string extra;
  if (is >> extra) throw std::invalid_argument("trailing data in trajectory message");
  return m;
}

InformationExchange::InformationExchange(const RingTopology& ring, ControllerKind regime,
                                         int horizon, double sampleTime, double lossProbability,
                                         std::uint64_t seed)
    : ring_(ring),
      regime_(regime),
      horizon_(horizon),
      sampleTime_(sampleTime),
      lossProbability_(lossProbability),
      rng_(seed),
      mailbox_(static_cast<std::size_t>(ring.size())) {
  if (!(lossProbability >= 0.0 && lossProbability <= 1.0)) {
    throw std::invalid_argument("message loss probability must lie in [0, 1]");
  }
}

std::vector<NeighborInfo> InformationExchange::gather(int step,
                                                      const std::vector<CylindricalState>& states) {
  if (static_cast<int>(states.size()) != ring_.size()) {
    throw std::invalid_argument("state count does not match the ring");
  }
  std::vector<NeighborInfo> out;
  if (regime_ == ControllerKind::Centralized) return out;
  out.resize(states.size());
  const auto length = static_cast<std::size_t>(horizon_ + 1);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  for (int k = 0; k < ring_.size(); ++k) {
    for (int id : ring_.neighbors(k)) {
      const int pos = ring_.positionOf(id);
      const double sensed = states[pos].theta;
      NeighborTrack t{id, {sensed}, false};
      if (regime_ == ControllerKind::InformationSharing) {
        const auto& msg = mailbox_[pos];
        bool received = step > 0 && msg && msg->step == step;
        if (received && lossProbability_ > 0.0 && uniform(rng_) < lossProbability_) {
          received = false;
          ++lost_;
        }
        if (received) {
          t.theta = msg->theta;
        } else {
          // no trajectory yet at the first step; otherwise a missing message
          t.theta.assign(length, sensed);
          t.degraded = step > 0;
          if (t.degraded) ++degraded_;
        }
      }
      out[k].tracks.push_back(std::move(t));
    }
  }
  return out;
}

void InformationExchange::publish(int step, const std::vector<ControlPlan>& plans) {
  if (regime_ != ControllerKind::InformationSharing) return;
  if (static_cast<int>(plans.size()) != ring_.size()) {
    throw std::invalid_argument("plan count does not match the ring");
  }
  for (int k = 0; k < ring_.size(); ++k) {
    TrajectoryMessage m{ring_.order()[k], step + 1, plans[k].sharedTrajectory(sampleTime_)};
    m.validate(horizon_);
    mailbox_[k] = std::move(m);
  }
}

std::vector<NeighborInfo> exchange(int step, const std::vector<ControlPlan>* previousPlans,
                                   const std::vector<CylindricalState>& states,
                                   const RingTopology& ring, ControllerKind regime, int horizon,
                                   double sampleTime) {
  InformationExchange ex(ring, regime, horizon, sampleTime);
  if (previousPlans && step > 0) ex.publish(step - 1, *previousPlans);
  return ex.gather(step, states);
}

}  // namespace ringmpc
