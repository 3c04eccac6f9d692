#include <cmath>

#include "doctest.h"

#include "exo/cpn.hpp"

using namespace exo;
using namespace exo::cpn;
using dynamics::Triple;

namespace {

const dynamics::Plant& nominal_plant() {
  static const dynamics::Plant plant{dynamics::anthropometric_scale(1.73, 86.0)};
  return plant;
}

const dynamics::SquatReference& nominal_ref() {
  static const auto ref = dynamics::generate_reference({}, 4.0, dynamics::kDefaultReferenceSamples, nominal_plant().body);
  return ref;
}

PdGains stiff() {
  PdGains g;
  g.kp = Triple(1000.0, 500.0, 250.0);
  g.kd = 0.05 * g.kp;
  return g;
}

// Constant-output network: zero weights, last bias atanh(value).
ecn::MlpParams stub(const ecn::Action& value) {
  auto p = ecn::MlpParams::zeros(ecn::default_dims());
  for (int i = 0; i < 4; ++i) p.layers.back().bias[i] = std::atanh(value[i]);
  return p;
}

}  // namespace

TEST_CASE("human torque law") {
  const auto& plant = nominal_plant();
  const auto target = nominal_ref().at_phase(0.3);
  const Triple ff = dynamics::inverse_dynamics(target.q, target.qdot, target.qddot, plant.body, plant.stops);

  dynamics::PlantState on{target.q, target.qdot, 0.0};
  CHECK((compute_human_torque(on, target, stiff(), plant) - ff).norm() == 0.0);

  dynamics::PlantState off{target.q + Triple(0.01, -0.02, 0.03), target.qdot + Triple(0.1, 0.2, -0.1), 0.0};
  PdGains zero;
  zero.kp.setZero();
  zero.kd.setZero();
  CHECK((compute_human_torque(off, target, zero, plant) - ff).norm() == 0.0);

  // kp = (100, 200, 300), kd = (10, 20, 30) by hand, hip reported as extension.
  PdGains g;
  g.kp = Triple(100.0, 200.0, 300.0);
  g.kd = Triple(10.0, 20.0, 30.0);
  const Triple pd(100.0 * -0.01 + 10.0 * -0.1, 200.0 * 0.02 + 20.0 * -0.2, 300.0 * -0.03 + 30.0 * 0.1);
  const Triple expected = ff + Triple(pd[0], pd[1], -pd[2]);
  CHECK((compute_human_torque(off, target, g, plant) - expected).norm() < 1e-12);
}

TEST_CASE("motion matching reward") {
  const auto& ref = nominal_ref();
  RolloutLog log;
  for (int k = 0; k < 400; ++k) {
    TickRecord r;
    r.phase = k / 400.0;
    r.q = ref.at_phase(r.phase).q;
    log.ticks.push_back(r);
  }
  CHECK(motion_match_reward(log, ref) == 1.0);

  RolloutLog off = log;
  for (auto& t : off.ticks) t.q[dynamics::kKnee] += 1.0;
  CHECK(motion_match_reward(off, ref) == doctest::Approx(std::exp(-5.0)).epsilon(1e-12));
  RolloutLog shorter = off;
  shorter.ticks.resize(57);
  CHECK(motion_match_reward(shorter, ref) == doctest::Approx(motion_match_reward(off, ref)).epsilon(1e-12));

  RolloutLog small = log;
  small.ticks[10].q[0] += 1e-3;
  CHECK(motion_match_reward(small, ref) < 1.0);
  CHECK(motion_match_reward(small, ref) > 0.0);
  CHECK_THROWS_AS(motion_match_reward(RolloutLog{}, ref), ValidationError);
}

TEST_CASE("rollouts") {
  const auto& plant = nominal_plant();
  const auto& ref = nominal_ref();
  const auto muscles = muscles_for_reference(ref, plant);

  RolloutOptions none;
  none.cycles = 1;
  none.muscles = &muscles;
  const auto base = rollout(plant, stiff(), ref, none);
  CHECK(base.ticks.size() == 400);
  for (const auto& t : base.ticks) {
    for (double x : t.exo_torque) CHECK(x == 0.0);
  }
  CHECK(motion_match_reward(base, ref) > 0.99);
  int infeasible = 0;
  for (const auto& t : base.ticks) infeasible += t.muscle_feasible ? 0 : 1;
  CHECK(infeasible == 0);

  SUBCASE("zero assist scale matches the unassisted run") {
    const auto psi = ecn::MlpParams::glorot(ecn::default_dims(), 5);
    RolloutOptions o = none;
    o.ecn = &psi;
    o.assist_scale = 0.0;
    const auto run = rollout(plant, stiff(), ref, o);
    REQUIRE(run.ticks.size() == base.ticks.size());
    for (std::size_t i = 0; i < run.ticks.size(); ++i) {
      CHECK(run.ticks[i].q == base.ticks[i].q);
      CHECK(run.ticks[i].human_torque == base.ticks[i].human_torque);
    }
  }
  SUBCASE("stub assistance superposes exactly") {
    const ecn::Action v(0.4, 0.4, -0.3, -0.3);
    const auto psi = stub(v);
    RolloutOptions o = none;
    o.ecn = &psi;
    o.assist_scale = 0.5;
    o.tau_max = 10.0;
    const auto run = rollout(plant, stiff(), ref, o);
    for (const auto& t : run.ticks) {
      for (std::size_t j = 0; j < kJointCount; ++j) {
        CHECK(t.exo_torque[j] == 0.5 * 10.0 * std::tanh(std::atanh(v[static_cast<Eigen::Index>(j)])));
      }
      CHECK(t.exo_torque[kHipL] == t.exo_torque[kHipR]);
      CHECK(t.exo_torque[kKneeL] == t.exo_torque[kKneeR]);
    }
  }
  SUBCASE("preconditions") {
    RolloutOptions o = none;
    o.cycles = 0;
    CHECK_THROWS_AS(rollout(plant, stiff(), ref, o), ValidationError);
    o.cycles = 1;
    o.assist_scale = 1.5;
    CHECK_THROWS_AS(rollout(plant, stiff(), ref, o), ValidationError);
  }
  SUBCASE("effort comes from logged activations") {
    std::vector<std::vector<double>> rows;
    for (const auto& t : base.ticks) rows.push_back(t.activations);
    CHECK(rollout_effort(base) == muscle::effort_metric(rows, 0.01));
    CHECK(rollout_effort(base) > 0.0);
    RolloutOptions o = none;
    o.muscles = nullptr;
    CHECK_THROWS_AS(rollout_effort(rollout(plant, stiff(), ref, o)), ValidationError);
  }
}

TEST_CASE("gain search") {
  const auto& plant = nominal_plant();
  const auto& ref = nominal_ref();
  GainSearchConfig cfg;
  cfg.budget = 0;
  CHECK_THROWS_AS(optimize_gains(PdGains{}, plant, ref, cfg), ValidationError);

  SUBCASE("from weak gains to good tracking") {
    cfg.budget = 1000;
    const auto r = optimize_gains(PdGains{}, plant, ref, cfg);
    CHECK(r.objective >= 0.9);
    CHECK(r.objective >= r.initial_objective);
    CHECK(r.evaluations <= 1000);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].best_objective >= r.trace[i - 1].best_objective);
  }
  SUBCASE("good gains are kept or improved") {
    cfg.budget = 50;
    const auto r = optimize_gains(stiff(), plant, ref, cfg);
    CHECK(r.objective >= r.initial_objective);
    const std::vector<dynamics::SquatReference> refs{dynamics::scale_reference_time(ref, 0.8),
                                                     dynamics::scale_reference_time(ref, 1.2)};
    CHECK(gain_objective(stiff(), plant, refs, 1) > 0.99);
  }
}

TEST_CASE("supervised dataset") {
  const auto& plant = nominal_plant();
  const auto& ref = nominal_ref();
  DatasetConfig cfg;
  cfg.cycles = 2;
  cfg.scales = {0.8, 1.0, 1.2};
  const auto data = generate_dataset(plant, stiff(), ref, cfg);
  CHECK(data.size() == 2u * (500u + 400u + 333u));
  for (const auto& s : data) {
    CHECK((s.input.array().abs() <= 1.0).all());
    CHECK((s.target.array().abs() <= 1.0).all());
    CHECK(s.target[kHipL] == s.target[kHipR]);
  }

  // Mid-descent spot check against inverse dynamics, per leg over 10 N m.
  const auto mid = ref.at_phase(0.25);
  const Triple tau = dynamics::inverse_dynamics(mid.q, mid.qdot, mid.qddot, plant.body, plant.stops);
  const auto target = dataset_target(mid, plant, 10.0);
  CHECK(target[kHipL] == doctest::Approx(std::clamp(0.5 * tau[dynamics::kHip] / 10.0, -1.0, 1.0)));
  CHECK(target[kKneeL] == doctest::Approx(std::clamp(0.5 * tau[dynamics::kKnee] / 10.0, -1.0, 1.0)));
  // A shallow point stays inside the clip range.
  const auto near = ref.at_phase(0.02);
  const Triple tn = dynamics::inverse_dynamics(near.q, near.qdot, near.qddot, plant.body, plant.stops);
  const auto tnear = dataset_target(near, plant, 100.0);
  CHECK(tnear[kHipR] == doctest::Approx(0.5 * tn[dynamics::kHip] / 100.0));

  SUBCASE("zero depth gives constant gravity-compensation targets") {
    const auto flat = dynamics::generate_reference({0.0, 0.0}, 4.0, 51, plant.body);
    DatasetConfig c;
    c.cycles = 1;
    c.scales = {1.0};
    const auto d = generate_dataset(plant, stiff(), flat, c);
    const auto p = flat.at_phase(0.0);
    const Triple g = dynamics::inverse_dynamics(p.q, Triple::Zero(), Triple::Zero(), plant.body, plant.stops);
    for (const auto& s : d) {
      CHECK(s.target == d.front().target);
      CHECK(s.target[kHipL] == doctest::Approx(0.5 * g[dynamics::kHip] / 10.0).epsilon(1e-9));
    }
  }
}
