#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "eta_suite.hpp"
#include "mergesim/sequencing.hpp"
#include "oracles.hpp"

using namespace mergesim;

namespace {

SequencingParams params(double a_max) {
  SequencingParams p;
  p.a_max = a_max;
  return p;
}

EtaEstimate est(VehicleId id, double eta, VehicleClass c, double reg, double station) {
  EtaEstimate e;
  e.vehicle_id = id;
  e.raw_eta = eta;
  e.adjusted_eta = eta;
  e.approach = c;
  e.registration_time = reg;
  e.entry_station = station;
  return e;
}

}  // namespace

TEST(AccelDistance, WorkedExample) {
  EXPECT_NEAR(accel_distance(5.0, 30.0, 2.5), 175.0, 1e-9);
  EXPECT_NEAR(oracle::accel_distance(5.0, 30.0, 2.5), 175.0, 1e-3);
  EXPECT_DOUBLE_EQ(accel_distance(12.0, 12.0, 2.0), 0.0);
  EXPECT_THROW(accel_distance(30.0, 5.0, 2.5), InvalidSpeeds);
}

TEST(MaxReachableSpeed, WorkedExamples) {
  EXPECT_DOUBLE_EQ(max_reachable_speed(5.0, 267.0, 30.0, 2.5), 30.0);
  EXPECT_NEAR(max_reachable_speed(5.0, 100.0, 30.0, 2.0), 20.6155, 5e-5);
  EXPECT_DOUBLE_EQ(max_reachable_speed(5.0, 1e12, 30.0, 2.0), 30.0);
  // Integration confirms v_lim is reached after 175 m of the 267 m ramp.
  const auto o = oracle::move_toward(5.0, 30.0, 267.0, 2.5);
  EXPECT_TRUE(o.reached_target);
  EXPECT_NEAR(o.reach_distance, 175.0, 1e-3);
  EXPECT_NEAR(oracle::move_toward(5.0, 30.0, 100.0, 2.0).terminal_speed, 20.6155, 5e-5);
}

TEST(MergeSpeed, IsTheMinimum) {
  EXPECT_DOUBLE_EQ(merge_speed(30.0, 30.0), 30.0);
  EXPECT_DOUBLE_EQ(merge_speed(20.6155, 30.0), 20.6155);
  EXPECT_DOUBLE_EQ(merge_speed(30.0, 27.0), 27.0);
}

TEST(EtaHighway, WorkedExamples) {
  const auto p25 = params(2.5);
  const auto plan_avg = plan_merge(30.0, 5.0, 267.0, p25);
  ASSERT_EQ(plan_avg.regime, Regime::highway_average);
  EXPECT_NEAR(eta_highway(30.0, 400.0, plan_avg, p25), 13.3333, 5e-5);

  const auto p2 = params(2.0);
  const auto plan_max = plan_merge(30.0, 5.0, 100.0, p2);
  ASSERT_EQ(plan_max.regime, Regime::ramp_max);
  EXPECT_NEAR(plan_max.v_m, 20.6155, 5e-5);
  EXPECT_NEAR(eta_highway(30.0, 400.0, plan_max, p2), 18.335, 5e-4);
  EXPECT_NEAR(eta_highway(30.0, 400.0, plan_max, p2),
              oracle::move_toward(30.0, plan_max.v_m, 400.0, 2.0).time, 1e-3);
  EXPECT_DOUBLE_EQ(eta_highway(plan_max.v_m, 400.0, plan_max, p2), 400.0 / plan_max.v_m);
  EXPECT_THROW(eta_highway(0.0, 400.0, plan_max, p2), NonPositiveSpeed);
}

TEST(EtaRamp, WorkedExamples) {
  const auto p25 = params(2.5);
  const auto plan_avg = plan_merge(30.0, 5.0, 267.0, p25);
  EXPECT_NEAR(eta_ramp(5.0, 267.0, plan_avg, p25), 13.0667, 5e-5);
  EXPECT_NEAR(eta_ramp(5.0, 267.0, plan_avg, p25), oracle::move_toward(5.0, 30.0, 267.0, 2.5).time,
              1e-3);
  EXPECT_DOUBLE_EQ(eta_ramp(30.0, 267.0, plan_avg, p25), 267.0 / 30.0);

  const auto p2 = params(2.0);
  const auto plan_max = plan_merge(30.0, 5.0, 100.0, p2);
  EXPECT_NEAR(eta_ramp(5.0, 100.0, plan_max, p2), 7.8078, 5e-5);
  EXPECT_NEAR(eta_ramp(5.0, 100.0, plan_max, p2), oracle::move_toward(5.0, 30.0, 100.0, 2.0).time,
              1e-3);
}

TEST(EtaProperty, AgreesWithForwardIntegration) {
  const auto rep = eta_suite::run(1000, 2024);
  EXPECT_EQ(rep.tuples, 1000);
  EXPECT_LE(rep.max_highway_err, 1e-3);
  EXPECT_LE(rep.max_ramp_err, 1e-3);
  EXPECT_LE(rep.max_plan_err, 1e-6);
  EXPECT_EQ(rep.regime_mismatches, 0);
  EXPECT_GT(rep.consistency_checked, 100);
  EXPECT_LE(rep.max_consistency_err, 1e-6);
}

TEST(EtaProperty, ReachableSpeedNeverExceedsLimit) {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    const double v_lim = rng.uniform(10.0, 40.0);
    EXPECT_LE(max_reachable_speed(rng.uniform(0.0, v_lim), rng.uniform(1.0, 1000.0), v_lim,
                                  rng.uniform(0.5, 4.0)),
              v_lim);
  }
}

TEST(AdjustAndSort, SameLaneRule) {
  const auto r = adjust_and_sort({est(1, 10.0, VehicleClass::highway, 0.0, -300.0),
                                  est(2, 9.8, VehicleClass::highway, 0.0, -320.0)},
                                 {}, {}, SequencingParams{});
  ASSERT_EQ(r.estimates.size(), 2u);
  EXPECT_EQ(r.estimates[1].vehicle_id, 2);
  EXPECT_DOUBLE_EQ(r.estimates[1].adjusted_eta, 11.0);
  EXPECT_DOUBLE_EQ(r.estimates[1].raw_eta, 9.8);
}

TEST(AdjustAndSort, CrossLaneTieGoesToHighway) {
  const auto r = adjust_and_sort({est(7, 13.0667, VehicleClass::ramp, 0.0, -267.0),
                                  est(1, 13.0667, VehicleClass::highway, 0.0, -400.0)},
                                 {}, {}, SequencingParams{});
  EXPECT_EQ(r.assignments[0].vehicle_id, 1);
  EXPECT_EQ(r.assignments[1].vehicle_id, 7);
  EXPECT_NEAR(r.estimates[1].adjusted_eta, 14.0667, 1e-9);
  EXPECT_EQ(r.assignments[1].predecessor_id, 1);
}

TEST(AdjustAndSort, EarlierRampPrecedesHighway) {
  const auto r = adjust_and_sort({est(1, 13.3333, VehicleClass::highway, 0.0, -400.0),
                                  est(7, 13.0667, VehicleClass::ramp, 0.0, -267.0)},
                                 {}, {}, SequencingParams{});
  EXPECT_EQ(r.assignments[0].vehicle_id, 7);
  EXPECT_EQ(r.assignments[0].sequence_number, 1);
  EXPECT_EQ(r.assignments[1].vehicle_id, 1);
  EXPECT_EQ(r.assignments[1].predecessor_id, 7);
}

TEST(AdjustAndSort, ContinuesNumbering) {
  std::vector<EtaEstimate> existing{est(1, 10.0, VehicleClass::highway, 0.0, -300.0)};
  const auto r = adjust_and_sort({est(2, 5.0, VehicleClass::highway, 5.0, -390.0)}, existing,
                                 {{1, 4, std::nullopt}}, SequencingParams{});
  EXPECT_EQ(r.assignments[0].sequence_number, 5);
  EXPECT_EQ(r.assignments[0].predecessor_id, 1);
  // Same-lane spacing holds against the already-sequenced leader.
  EXPECT_DOUBLE_EQ(r.estimates[0].adjusted_eta, 11.0);
}

TEST(SortTick, EmptyRegistry) {
  InfraRegistry reg;
  const auto r = sort_tick(reg, 5.0, SequencingParams{}, 267.0);
  EXPECT_TRUE(r.sorted.assignments.empty());
}

TEST(SequencingProperty, OrderedSpacedAndNeverRenumbered) {
  const SequencingParams p;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    InfraRegistry reg;
    std::map<VehicleId, int> issued;
    VehicleId next_id = 1;
    double last_hw = -1e9, last_rp = -1e9;
    for (int tick = 1; tick <= 12; ++tick) {
      const double now = tick * p.sort_period;
      const int arrivals = static_cast<int>(rng.uniform(0.0, 4.0));
      for (int k = 0; k < arrivals; ++k) {
        const bool ramp = rng.uniform01() < 0.3;
        const double t = now - p.sort_period + rng.uniform(0.0, p.sort_period);
        double& last = ramp ? last_rp : last_hw;
        const double reg_t = std::max(t, last + 1e-3);
        last = reg_t;
        const StatusMessage m{next_id, reg_t, ramp ? rng.uniform(0.0, 15.0) : rng.uniform(20.0, 30.0),
                              0.0, {}, ramp ? VehicleClass::ramp : VehicleClass::highway};
        const double dist = ramp ? rng.uniform(150.0, 300.0) : rng.uniform(350.0, 400.0);
        reg.register_entry(m, dist, -dist);
        ++next_id;
      }
      const auto res = sort_tick(reg, now, p, 267.0);
      for (std::size_t i = 0; i < res.sorted.estimates.size(); ++i) {
        const auto& e = res.sorted.estimates[i];
        EXPECT_GE(e.adjusted_eta, e.raw_eta);
        if (i > 0) {
          EXPECT_GE(e.adjusted_eta, res.sorted.estimates[i - 1].adjusted_eta);
        }
      }
      for (const auto& a : res.sorted.assignments) {
        EXPECT_FALSE(issued.contains(a.vehicle_id));
        issued[a.vehicle_id] = a.sequence_number;
      }
      for (const auto& [id, e] : reg.sequence_table()) EXPECT_EQ(issued.at(id), e.number);

      // Consecutive registered vehicles on one approach keep the headway.
      for (auto cls : {VehicleClass::highway, VehicleClass::ramp}) {
        std::vector<std::pair<double, double>> chain;  // (registration, adjusted eta)
        for (const auto& [id, rec] : reg.records())
          if (rec.cls == cls) chain.emplace_back(rec.registration_time, reg.sequence_table().at(id).adjusted_eta);
        std::sort(chain.begin(), chain.end());
        for (std::size_t i = 1; i < chain.size(); ++i)
          EXPECT_GE(chain[i].second - chain[i - 1].second, p.t_head_safe - 1e-9);
      }

      // Some vehicles leave.
      std::vector<VehicleId> gone;
      for (const auto& [id, rec] : reg.records())
        if (rng.uniform01() < 0.15) gone.push_back(id);
      for (auto id : gone) reg.handle_exit(id);
    }
  }
}
