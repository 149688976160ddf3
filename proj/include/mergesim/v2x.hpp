#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <string>

#include "mergesim/errors.hpp"
#include "mergesim/types.hpp"

namespace mergesim {

struct StatusMessage {
  VehicleId vehicle_id{};
  double timestamp{};
  double speed{};
  double accel{};
  Point position{};
  VehicleClass cls{VehicleClass::highway};
};

struct SpeedSample {
  double t{};
  double speed{};
};

using SpeedWindow = std::deque<SpeedSample>;

/// Mean of the samples newer than now - horizon, or the fallback if none.
inline double rolling_average(const SpeedWindow& window, double horizon, double now,
                              double fallback) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : window) {
    if (s.t > now - horizon) {
      sum += s.speed;
      ++n;
    }
  }
  return n == 0 ? fallback : sum / n;
}

struct V2xParams {
  Point infra_position{10.0, -30.0};
  double range{400.0};
};

struct InfraRecord {
  StatusMessage latest;
  double registration_time{};
  double entry_speed{};
  double entry_distance_to_merge{};  // s_h or s_r
  double entry_station{};            // used to order same-approach vehicles
  VehicleClass cls{VehicleClass::highway};
};

struct SequenceEntry {
  int number{};
  double adjusted_eta{};
  double raw_eta{};
};

/// Roadside unit state: who is in range, what they last reported, and the
/// merge order handed out so far.
class InfraRegistry {
 public:
  explicit InfraRegistry(V2xParams params = {}) : params_(params) {}

  const V2xParams& params() const { return params_; }

  bool in_range(Point position) const {
    return distance(params_.infra_position, position) <= params_.range;
  }

  void register_entry(const StatusMessage& msg, double distance_to_merge, double entry_station) {
    if (records_.contains(msg.vehicle_id)) {
      throw DuplicateRegistration("vehicle " + std::to_string(msg.vehicle_id) +
                                  " is already registered");
    }
    InfraRecord r;
    r.latest = msg;
    r.registration_time = msg.timestamp;
    r.entry_speed = msg.speed;
    r.entry_distance_to_merge = distance_to_merge;
    r.entry_station = entry_station;
    r.cls = msg.cls;
    records_.emplace(msg.vehicle_id, r);
    window(msg.cls).push_back({msg.timestamp, msg.speed});
  }

  void update_status(const StatusMessage& msg) {
    auto it = records_.find(msg.vehicle_id);
    if (it == records_.end()) {
      throw UnknownVehicle("status from unregistered vehicle " + std::to_string(msg.vehicle_id));
    }
    if (msg.timestamp < it->second.latest.timestamp) return;
    it->second.latest = msg;
  }

  void handle_exit(VehicleId id) {
    if (records_.erase(id) == 0) {
      throw UnknownVehicle("vehicle " + std::to_string(id) + " is not registered");
    }
    if (auto it = sequence_.find(id); it != sequence_.end()) {
      holders_.erase(it->second.number);
      sequence_.erase(it);
    }
  }

  bool is_registered(VehicleId id) const { return records_.contains(id); }
  const std::map<VehicleId, InfraRecord>& records() const { return records_; }
  const std::map<VehicleId, SequenceEntry>& sequence_table() const { return sequence_; }
  int next_sequence() const { return next_sequence_; }

  std::optional<int> sequence_of(VehicleId id) const {
    auto it = sequence_.find(id);
    if (it == sequence_.end()) return std::nullopt;
    return it->second.number;
  }

  /// Holder of number - 1, if that vehicle is still registered.
  std::optional<VehicleId> predecessor_of(VehicleId id) const {
    auto it = sequence_.find(id);
    if (it == sequence_.end()) return std::nullopt;
    auto h = holders_.find(it->second.number - 1);
    if (h == holders_.end()) return std::nullopt;
    return h->second;
  }

  void assign(VehicleId id, SequenceEntry entry) {
    if (!records_.contains(id)) {
      throw UnknownVehicle("cannot sequence unregistered vehicle " + std::to_string(id));
    }
    if (sequence_.contains(id)) {
      throw DuplicateRegistration("vehicle " + std::to_string(id) + " is already sequenced");
    }
    if (entry.number < next_sequence_) {
      throw Error("sequence number " + std::to_string(entry.number) + " was already issued");
    }
    sequence_.emplace(id, entry);
    holders_.emplace(entry.number, id);
    next_sequence_ = entry.number + 1;
  }

  const SpeedWindow& highway_window() const { return highway_window_; }
  const SpeedWindow& ramp_window() const { return ramp_window_; }

 private:
  SpeedWindow& window(VehicleClass c) {
    return c == VehicleClass::highway ? highway_window_ : ramp_window_;
  }

  V2xParams params_;
  std::map<VehicleId, InfraRecord> records_;
  std::map<VehicleId, SequenceEntry> sequence_;
  std::map<int, VehicleId> holders_;
  int next_sequence_{1};
  SpeedWindow highway_window_;
  SpeedWindow ramp_window_;
};

}  // namespace mergesim
