#include "ringmpc/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ringmpc {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string joinInts(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> splitInts(const std::string& s) {
  std::istringstream is(s);
  std::vector<int> out;
  int v = 0;
  while (is >> v) out.push_back(v);
  return out;
}

}  // namespace

double RunRecord::totalSolveSeconds() const {
  double total = 0.0;
  for (const StepRecord& s : steps) total = std::accumulate(s.solveSeconds.begin(), s.solveSeconds.end(), total);
  return total;
}

double neighborDistance(double thetaI, double thetaJ, const OrbitParams& params) {
  return params.chiefRadius * std::abs(wrapAngle(thetaJ - thetaI)) / 1000.0;
}

PositionErrorStats positionErrorFromAngles(const std::vector<double>& theta, double chiefRadius) {
  const std::size_t n = theta.size();
  if (n < 2) throw std::invalid_argument("position error needs at least two spacecraft");
  OrbitParams p;
  p.chiefRadius = chiefRadius;
  PositionErrorStats s;
  s.target = 2.0 * std::numbers::pi * chiefRadius / 1000.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ahead = neighborDistance(theta[i], theta[(i + 1) % n], p);
    const double behind = neighborDistance(theta[i], theta[(i + n - 1) % n], p);
    const double d = 0.5 * (ahead + behind);
    s.perSpacecraft.push_back(d);
    const double err = std::abs(d - s.target);
    sum += err;
    s.maxErr = std::max(s.maxErr, err);
  }
  s.muSim = sum / static_cast<double>(n);
  return s;
}

PositionErrorStats positionErrorAtEnd(const RunRecord& rec, const OrbitParams& params) {
  std::vector<double> theta;
  for (const CylindricalState& x : rec.finalStates) theta.push_back(x.theta);
  return positionErrorFromAngles(theta, params.chiefRadius);
}

std::vector<double> inputPerSpacecraft(const RunRecord& rec, double mass) {
  std::vector<double> out(rec.ids.size(), 0.0);
  const double ts = rec.meta.sampleTime;
  for (const StepRecord& s : rec.steps) {
    for (std::size_t i = 0; i < s.applied.size(); ++i) {
      out[i] += s.applied[i].vector().cwiseAbs().sum() * ts / mass;
    }
  }
  return out;
}

double totalInput(const RunRecord& rec, double mass) {
  const std::vector<double> per = inputPerSpacecraft(rec, mass);
  return std::accumulate(per.begin(), per.end(), 0.0);
}

Eigen::MatrixXd angularDeviationSeries(const RunRecord& rec) {
  const auto rows = static_cast<Eigen::Index>(rec.steps.size());
  const auto cols = static_cast<Eigen::Index>(rec.ids.size());
  Eigen::MatrixXd dev(rows, cols);
  if (rows == 0 || cols == 0) return dev;

  // equidistant slots fitted to the final ring: spacing 2pi/N in ring order,
  // common rotation by circular mean
  const auto& last = rec.finalStates;
  double winding = 0.0;
  for (Eigen::Index i = 0; i < cols; ++i) {
    winding += wrapAngle(last[(i + 1) % cols].theta - last[i].theta);
  }
  const double spacing = (winding < 0.0 ? -2.0 : 2.0) * std::numbers::pi / static_cast<double>(cols);
  double sx = 0.0, sy = 0.0;
  for (Eigen::Index i = 0; i < cols; ++i) {
    const double a = last[i].theta - spacing * static_cast<double>(i);
    sx += std::cos(a);
    sy += std::sin(a);
  }
  const double phase = std::atan2(sy, sx);

  for (Eigen::Index k = 0; k < rows; ++k) {
    const auto& states = k + 1 < rows ? rec.steps[k + 1].states : rec.finalStates;
    for (Eigen::Index i = 0; i < cols; ++i) {
      dev(k, i) = wrapAngle(states[i].theta - phase - spacing * static_cast<double>(i));
    }
  }
  return dev;
}

std::vector<double> orbitsToConverge(const Eigen::MatrixXd& deviation, double sampleTime,
                                     double period, double threshold) {
  std::vector<double> out(static_cast<std::size_t>(deviation.cols()),
                          std::numeric_limits<double>::infinity());
  const Eigen::Index rows = deviation.rows();
  for (Eigen::Index i = 0; i < deviation.cols(); ++i) {
    Eigen::Index first = rows;
    while (first > 0 && std::abs(deviation(first - 1, i)) <= threshold) --first;
    if (first == rows) continue;
    // row k holds the state after k+1 inputs
    out[i] = static_cast<double>(first + 1) * sampleTime / period;
  }
  return out;
}

MeanStd meanStd(const std::vector<double>& values, StdConvention c) {
  if (values.empty()) throw std::invalid_argument("statistics of an empty set");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double denom = c == StdConvention::Sample && values.size() > 1 ? n - 1.0 : n;
  return {mean, std::sqrt(ss / denom)};
}

RunSummary summarize(const RunRecord& rec, const OrbitParams& params, int scenario,
                     double convergenceThreshold) {
  RunSummary s;
  s.controller = rec.meta.controller;
  s.neighborCount = rec.meta.neighborCount;
  s.scenario = scenario;
  s.seed = rec.meta.seed;
  const PositionErrorStats e = positionErrorAtEnd(rec, params);
  s.muSim = e.muSim;
  s.maxErr = e.maxErr;
  s.inputPerSpacecraft = inputPerSpacecraft(rec, rec.meta.mass);
  s.totalInput = std::accumulate(s.inputPerSpacecraft.begin(), s.inputPerSpacecraft.end(), 0.0);
  s.solveSeconds = rec.totalSolveSeconds();
  const auto orbits = orbitsToConverge(angularDeviationSeries(rec), rec.meta.sampleTime,
                                       params.period, convergenceThreshold);
  s.orbitsToConverge = orbits.empty() ? 0.0 : *std::max_element(orbits.begin(), orbits.end());
  s.unconvergedSpacecraft = static_cast<int>(
      std::count_if(orbits.begin(), orbits.end(), [](double o) { return std::isinf(o); }));
  s.ids = rec.ids;
  s.removed = rec.removed;
  return s;
}

BatchStats aggregate(const std::vector<RunSummary>& batch, StdConvention c) {
  if (batch.empty()) throw std::invalid_argument("cannot aggregate an empty batch");
  std::vector<double> mu, mx, in;
  BatchStats b;
  b.runs = static_cast<int>(batch.size());
  for (const RunSummary& r : batch) {
    mu.push_back(r.muSim);
    mx.push_back(r.maxErr);
    in.push_back(r.totalInput);
    b.totalSolveSeconds += r.solveSeconds;
  }
  b.positionError = meanStd(mu, c);
  b.maxError = meanStd(mx, c);
  b.totalInput = meanStd(in, c);
  b.averageSolveSeconds = b.totalSolveSeconds / b.runs;
  return b;
}

BatchStats aggregate(const std::vector<RunRecord>& batch, const OrbitParams& params, StdConvention c) {
  std::vector<RunSummary> s;
  for (const RunRecord& r : batch) s.push_back(summarize(r, params));
  return aggregate(s, c);
}

const BatchStats& SummaryTable::at(const std::string& controller, int neighborCount) const {
  const auto it = std::find(neighborCounts.begin(), neighborCounts.end(), neighborCount);
  if (it == neighborCounts.end()) throw std::out_of_range("neighbor count not in table");
  return cells.at(controller).at(static_cast<std::size_t>(it - neighborCounts.begin()));
}

void writeSummaryJson(std::ostream& os, const SummaryTable& table) {
  nlohmann::json j;
  j["neighbor_counts"] = table.neighborCounts;
  j["controllers"] = table.controllers;
  for (const std::string& c : table.controllers) {
    const auto& row = table.cells.at(c);
    for (std::size_t k = 0; k < table.neighborCounts.size(); ++k) {
      const std::string n = std::to_string(table.neighborCounts[k]);
      const BatchStats& b = row[k];
      j["position_error"][c][n] = {{"mean_km", b.positionError.mean}, {"std_km", b.positionError.std},
                                   {"max_err_mean_km", b.maxError.mean}};
      j["total_input"][c][n] = {{"mean", b.totalInput.mean}, {"std", b.totalInput.std}};
      j["solver_time"][c][n] = {{"total_s", b.totalSolveSeconds}, {"average_s", b.averageSolveSeconds},
                                {"runs", b.runs}};
    }
  }
  os << j.dump(2) << '\n';
}

SummaryTable readSummaryJson(std::istream& is) {
  const nlohmann::json j = nlohmann::json::parse(is);
  SummaryTable t;
  t.neighborCounts = j.at("neighbor_counts").get<std::vector<int>>();
  t.controllers = j.at("controllers").get<std::vector<std::string>>();
  for (const std::string& c : t.controllers) {
    auto& row = t.cells[c];
    for (int p : t.neighborCounts) {
      const std::string n = std::to_string(p);
      const auto& e = j.at("position_error").at(c).at(n);
      const auto& u = j.at("total_input").at(c).at(n);
      const auto& s = j.at("solver_time").at(c).at(n);
      BatchStats b;
      b.positionError = {e.at("mean_km").get<double>(), e.at("std_km").get<double>()};
      b.maxError.mean = e.at("max_err_mean_km").get<double>();
      b.totalInput = {u.at("mean").get<double>(), u.at("std").get<double>()};
      b.totalSolveSeconds = s.at("total_s").get<double>();
      b.averageSolveSeconds = s.at("average_s").get<double>();
      b.runs = s.at("runs").get<int>();
      row.push_back(b);
    }
  }
  return t;
}

void writeRunCsv(std::ostream& os, const RunRecord& rec) {
  const RunMetadata& m = rec.meta;
  os << "# controller=" << m.controller << '\n'
     << "# nsat=" << m.nsat << '\n'
     << "# ndeorbit=" << m.ndeorbit << '\n'
     << "# neighbor_count=" << m.neighborCount << '\n'
     << "# horizon=" << m.horizon << '\n'
     << "# nloops=" << m.nloops << '\n'
     << "# sample_time=" << num(m.sampleTime) << '\n'
     << "# mass=" << num(m.mass) << '\n'
     << "# u_max=" << num(m.uMax) << '\n'
     << "# chief_radius=" << num(m.chiefRadius) << '\n'
     << "# mean_motion=" << num(m.meanMotion) << '\n'
     << "# seed=" << m.seed << '\n'
     << "# ids=" << joinInts(rec.ids) << '\n'
     << "# removed=" << joinInts(rec.removed) << '\n'
     << "# lost_messages=" << rec.lostMessages << '\n'
     << "# degraded_tracks=" << rec.degradedTracks << '\n';
  os << "step,id,rho,theta,z,rho_dot,theta_dot,z_dot,u_radial,u_along,u_cross,solve_s,iterations\n";
  auto row = [&](std::size_t step, std::size_t i, const CylindricalState& x, const ThrustCommand& u,
                 double t, int it) {
    os << step << ',' << rec.ids[i] << ',' << num(x.rho) << ',' << num(x.theta) << ',' << num(x.z) << ','
       << num(x.rhoDot) << ',' << num(x.thetaDot) << ',' << num(x.zDot) << ',' << num(u.radial) << ','
       << num(u.alongTrack) << ',' << num(u.crossTrack) << ',' << num(t) << ',' << it << '\n';
  };
  for (std::size_t k = 0; k < rec.steps.size(); ++k) {
    const StepRecord& s = rec.steps[k];
    for (std::size_t i = 0; i < s.states.size(); ++i) {
      row(k, i, s.states[i], s.applied[i], s.solveSeconds[i], s.iterations[i]);
    }
  }
  for (std::size_t i = 0; i < rec.finalStates.size(); ++i) {
    row(rec.steps.size(), i, rec.finalStates[i], ThrustCommand{}, 0.0, 0);
  }
}

RunRecord readRunCsv(std::istream& is) {
  RunRecord rec;
  std::map<std::string, std::string> meta;
  std::string line;
  bool header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw std::runtime_error("malformed metadata line: " + line);
      meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> v;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 13) throw std::runtime_error("run CSV row has the wrong number of columns");
    rows.push_back(std::move(v));
  }
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = meta.find(k);
    if (it == meta.end()) throw std::runtime_error("run CSV lacks metadata '" + k + "'");
    return it->second;
  };
  RunMetadata& m = rec.meta;
  m.controller = get("controller");
  m.nsat = std::stoi(get("nsat"));
  m.ndeorbit = std::stoi(get("ndeorbit"));
  m.neighborCount = std::stoi(get("neighbor_count"));
  m.horizon = std::stoi(get("horizon"));
  m.nloops = std::stoi(get("nloops"));
  m.sampleTime = std::stod(get("sample_time"));
  m.mass = std::stod(get("mass"));
  m.uMax = std::stod(get("u_max"));
  m.chiefRadius = std::stod(get("chief_radius"));
  m.meanMotion = std::stod(get("mean_motion"));
  m.seed = std::stoull(get("seed"));
  rec.ids = splitInts(get("ids"));
  rec.removed = splitInts(get("removed"));
  rec.lostMessages = std::stoi(get("lost_messages"));
  rec.degradedTracks = std::stoi(get("degraded_tracks"));

  const std::size_t n = rec.ids.size();
  if (n == 0 || rows.size() % n != 0) throw std::runtime_error("run CSV row count is inconsistent");
  const std::size_t steps = rows.size() / n - 1;
  rec.steps.resize(steps);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& v = rows[r];
    const auto step = static_cast<std::size_t>(v[0]);
    if (step != r / n || static_cast<int>(v[1]) != rec.ids[r % n]) {
      throw std::runtime_error("run CSV rows are out of order");
    }
    const CylindricalState x{v[2], v[3], v[4], v[5], v[6], v[7]};
    if (step == steps) {
      rec.finalStates.push_back(x);
      continue;
    }
    StepRecord& s = rec.steps[step];
    s.states.push_back(x);
    s.applied.push_back({v[8], v[9], v[10]});
    s.solveSeconds.push_back(v[11]);
    s.iterations.push_back(static_cast<int>(v[12]));
  }
  return rec;
}

}  // namespace ringmpc
