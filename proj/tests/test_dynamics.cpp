#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "mergesim/dynamics.hpp"
#include "mergesim/rng.hpp"

using namespace mergesim;

namespace {

VehicleState car(VehicleId id, double station, double speed, std::string path = "highway") {
  VehicleState v;
  v.id = id;
  v.path_id = std::move(path);
  v.station = station;
  v.speed = speed;
  return v;
}

}  // namespace

TEST(StepVehicle, ClampsToLimits) {
  const ActuationLimits lim;
  EXPECT_DOUBLE_EQ(step_vehicle(car(1, 0, 20), 9.0, lim, 0.02).accel, 2.5);
  EXPECT_DOUBLE_EQ(step_vehicle(car(1, 0, 20), -9.0, lim, 0.02).accel, -4.0);
}

TEST(StepVehicle, ConstantAccelMatchesSubsteps) {
  const ActuationLimits lim;
  const auto coarse = step_vehicle(car(1, -50, 12), 1.3, lim, 0.02);
  auto fine = car(1, -50, 12);
  for (int i = 0; i < 20; ++i) fine = step_vehicle(fine, 1.3, lim, 0.001);
  EXPECT_NEAR(coarse.station, fine.station, 1e-12);
  EXPECT_NEAR(coarse.speed, fine.speed, 1e-12);
}

TEST(StepVehicle, StopsWithoutReversing) {
  const ActuationLimits lim;
  const auto s = step_vehicle(car(1, 0, 0.03), -4.0, lim, 0.02);
  EXPECT_DOUBLE_EQ(s.speed, 0.0);
  EXPECT_GE(s.station, 0.0);
  EXPECT_NEAR(s.accel, -1.5, 1e-12);
}

TEST(StepVehicle, JerkBound) {
  ActuationLimits lim;
  lim.jerk_max = 5.0;
  EXPECT_NEAR(step_vehicle(car(1, 0, 10), 2.5, lim, 0.02).accel, 0.1, 1e-12);
}

TEST(StepVehicle, NonFiniteCommand) {
  EXPECT_THROW(step_vehicle(car(1, 0, 10), std::nan(""), {}, 0.02), NonFiniteCommand);
  EXPECT_THROW(step_vehicle(car(1, 0, 10), kInf, {}, 0.02), NonFiniteCommand);
}

TEST(DynamicsProperty, SpeedStaysNonNegativeAndBounded) {
  const ActuationLimits lim;
  const double dt = 0.02;
  const double bound = std::max(std::abs(lim.a_min), lim.a_max) * dt;
  Rng rng(3);
  for (int run = 0; run < 50; ++run) {
    auto s = car(1, 0, rng.uniform(0, 30));
    for (int i = 0; i < 2000; ++i) {
      const double before = s.speed;
      s = step_vehicle(s, rng.uniform(-20, 20), lim, dt);
      ASSERT_GE(s.speed, 0.0);
      ASSERT_LE(std::abs(s.speed - before), bound + 1e-12);
    }
  }
}

TEST(DynamicsProperty, BitIdenticalReplay) {
  auto run = [] {
    Rng rng(9);
    auto s = car(1, -300, 17);
    std::vector<double> out;
    for (int i = 0; i < 1000; ++i) {
      s = step_vehicle(s, rng.uniform(-5, 5), {}, 0.02);
      out.push_back(s.station);
      out.push_back(s.speed);
    }
    return out;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
}

TEST(SenseLeader, NearestAheadOnSamePath) {
  const std::vector<VehicleState> w{car(1, 0, 30), car(2, -20, 30), car(3, -10, 30, "ramp"),
                                    car(4, -60, 30)};
  const auto m = sense_leader(w, w[1]);
  ASSERT_TRUE(m.present);
  EXPECT_EQ(m.leader_id, 1);
  EXPECT_DOUBLE_EQ(m.gap, 20.0 - 4.5);
  EXPECT_FALSE(sense_leader(w, w[0]).present);
  EXPECT_FALSE(sense_leader(w, w[2]).present);
  EXPECT_FALSE(sense_leader(w, w[3], 30.0).present);
}
