#include <gtest/gtest.h>

#include <cmath>

#include "ihmpc/error.hpp"
#include "ihmpc/setpoint.hpp"
#include "oracles.hpp"
#include "random.hpp"

using namespace ihmpc;
using ihmpc::testkit::Rng;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector vec1(double v) { return Vector::Constant(1, v); }
Rectangle wide(int n) { return Rectangle::symmetric(Vector::Constant(n, 100.0)); }

SetpointSpec static_scalar(double r, double du_max = 100.0, double S = 1.0) {
  SetpointParams p{OpomModel::static_gain(scalar(1.0))};
  p.m = 1;
  p.Q = scalar(1.0);
  p.R = scalar(1.0);
  p.S = scalar(S);
  p.U = wide(1);
  p.dU = Rectangle::symmetric(vec1(du_max));
  p.r = vec1(r);
  return SetpointSpec(std::move(p));
}

SetpointSpec running_example(double r = 1.0) {
  SetpointParams p{OpomModel(scalar(1.0), scalar(0.5), scalar(1.0), scalar(1.0))};
  p.m = 3;
  p.Q = scalar(1.0);
  p.R = scalar(1.0);
  p.S = scalar(10.0);
  p.U = Rectangle::symmetric(vec1(2.0));
  p.dU = Rectangle::symmetric(vec1(0.5));
  p.r = vec1(r);
  return SetpointSpec(std::move(p));
}

Rectangle random_box(Rng& rng, int n, double lo, double hi) {
  Vector a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = -rng.uniform(lo, hi);
    b[i] = rng.uniform(lo, hi);
  }
  return Rectangle(a, b);
}

SetpointSpec random_spec(Rng& rng) {
  const int ny = rng.integer(1, 3);
  const int nu = rng.integer(1, 3);
  SetpointParams p{rng.model(ny, nu, rng.integer(0, 4))};
  p.m = rng.integer(1, 4);
  p.Q = rng.spd(ny);
  p.R = rng.spd(nu);
  p.S = rng.spd(ny, 1.0, 30.0);
  p.U = random_box(rng, nu, 0.5, 2.0);
  p.dU = random_box(rng, nu, 0.1, 0.8);
  p.r = rng.vector(ny);
  return SetpointSpec(std::move(p));
}

Vector move_sum(const MoveSequence& du) {
  Vector s = Vector::Zero(du.front().size());
  for (const Vector& d : du) s += d;
  return s;
}

}  // namespace

TEST(SetpointSpec, ValidatesWeightsAndDimensions) {
  SetpointParams p{OpomModel::static_gain(scalar(1.0))};
  p.Q = scalar(-1.0);
  p.R = scalar(1.0);
  p.S = scalar(1.0);
  p.U = wide(1);
  p.dU = wide(1);
  p.r = vec1(0.0);
  try {
    SetpointSpec s(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDomain);
  }
  p.Q = scalar(1.0);
  p.r = Vector::Zero(2);
  EXPECT_THROW(SetpointSpec s(p), Error);
}

TEST(SetpointSpec, InadmissibleReferenceVoidsGuarantees) {
  SetpointParams p{OpomModel::static_gain(scalar(2.0))};
  p.Q = p.R = p.S = scalar(1.0);
  p.U = Rectangle::symmetric(vec1(1.0));
  p.dU = wide(1);
  p.r = vec1(3.0);
  const SetpointSpec s(p, true);
  EXPECT_FALSE(s.reference_admissible());
  EXPECT_FALSE(s.guarantees_hold());
  const SetpointSpec ok = s.with_reference(vec1(1.0));
  EXPECT_TRUE(ok.reference_admissible());
  EXPECT_TRUE(ok.guarantees_hold());
  EXPECT_NEAR(ok.u_r()[0], 0.5, 1e-12);
}

TEST(Assemble, ZeroReferenceAtOriginHasZeroLinearTerm) {
  const SetpointSpec spec = running_example(0.0);
  const QuadProgram qp = assemble(spec, PlantState::origin(spec.model()));
  EXPECT_EQ(qp.q.lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ(qp.num_variables(), spec.num_decision_variables());
  EXPECT_EQ(solve(qp).z.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(SolveStep, StaticScalarExample) {
  const SetpointSpec spec = static_scalar(1.0);
  const SetpointSolution s = solve_step(spec, PlantState::origin(spec.model()));
  EXPECT_NEAR(s.du[0][0], 0.5, 1e-12);
  EXPECT_NEAR(s.delta[0], -0.5, 1e-12);
  EXPECT_NEAR(s.V_star, 0.5, 1e-12);
}

TEST(SolveStep, ClampedMoveExample) {
  const SetpointSpec spec = static_scalar(1.0, 0.3);
  const SetpointSolution s = solve_step(spec, PlantState::origin(spec.model()));
  EXPECT_NEAR(s.du[0][0], 0.3, 1e-12);
  EXPECT_NEAR(s.delta[0], -0.7, 1e-12);
  EXPECT_NEAR(s.V_star, 0.58, 1e-12);
}

TEST(SolveStep, ZeroReferenceAtOrigin) {
  const SetpointSpec spec = static_scalar(0.0);
  const SetpointSolution s = solve_step(spec, PlantState::origin(spec.model()));
  EXPECT_EQ(s.du[0][0], 0.0);
  EXPECT_EQ(s.delta[0], 0.0);
  EXPECT_EQ(s.V_star, 0.0);
}

TEST(CostOf, SlackOnlyStrategyAndOptimalPlan) {
  const SetpointSpec spec = static_scalar(1.0, 100.0, 4.0);
  const PlantState x0 = PlantState::origin(spec.model());
  EXPECT_NEAR(cost_of(spec, x0, {vec1(0.0)}, vec1(-1.0)), 4.0, 1e-15);
  const SetpointSpec ex = running_example();
  const PlantState e0 = PlantState::origin(ex.model());
  const SetpointSolution s = solve_step(ex, e0);
  EXPECT_NEAR(cost_of(ex, e0, s.du, s.delta), s.V_star, 1e-8);
  EXPECT_TRUE(is_feasible(ex, e0, s.du, s.delta));
}

TEST(ShiftedStrategy, RunningExampleIdentity) {
  const SetpointSpec spec = running_example();
  const PlantState x0 = PlantState::origin(spec.model());
  const SetpointSolution s = solve_step(spec, x0);
  const PlantState x1 = plant_step(spec.model(), x0, s.du[0]);
  const SetpointCandidate c = shifted_strategy(spec, s, x1);
  EXPECT_TRUE(c.feasible);
  EXPECT_NEAR(c.V_tilde, cost_of(spec, x1, c.du, c.delta), 1e-10);
  EXPECT_NEAR(c.V_tilde, s.V_star - stage_decrease(spec, s), 1e-10);
  EXPECT_LE(c.identity_error, 1e-10);
  EXPECT_EQ(c.du.back()[0], 0.0);
  EXPECT_EQ(c.delta, s.delta);
}

TEST(ShiftedStrategy, FixedPointHasZeroCost) {
  const SetpointSpec spec = running_example(0.0);
  const PlantState x0 = PlantState::origin(spec.model());
  const SetpointSolution s = solve_step(spec, x0);
  EXPECT_EQ(shifted_strategy(spec, s, x0).V_tilde, 0.0);
}

TEST(ShiftedStrategy, RejectsWrongSuccessorState) {
  const SetpointSpec spec = running_example();
  const PlantState x0 = PlantState::origin(spec.model());
  const SetpointSolution s = solve_step(spec, x0);
  try {
    shifted_strategy(spec, s, x0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStateMismatch);
  }
}

TEST(NullStrategyCost, Examples) {
  const SetpointSpec spec = running_example(0.7);
  EXPECT_NEAR(null_strategy_cost(spec, PlantState::origin(spec.model())), 10.0 * 0.49, 1e-12);
  EXPECT_EQ(null_strategy_cost(spec, PlantState{vec1(0.7), vec1(0.0), vec1(0.3)}), 0.0);
}

// --- properties -----------------------------------------------------------------

TEST(SetpointProperties, OptimumBelowNullStrategy) {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const SetpointSpec spec = random_spec(rng);
    const OpomModel& m = spec.model();
    Vector u(m.nu());
    for (int i = 0; i < m.nu(); ++i) u[i] = rng.uniform(spec.U().lo()[i], spec.U().hi()[i]);
    const PlantState x{rng.vector(m.ny()), rng.vector(m.nd()), u};
    EXPECT_LE(solve_step(spec, x).V_star, null_strategy_cost(spec, x) + 1e-9);
  }
}

TEST(SetpointProperties, QuadraticFormMatchesCostOf) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const SetpointSpec spec = random_spec(rng);
    const OpomModel& m = spec.model();
    const PlantState x{rng.vector(m.ny()), rng.vector(m.nd()), Vector::Zero(m.nu())};
    const QuadProgram qp = assemble(spec, x);
    MoveSequence du;
    Vector z(spec.num_decision_variables());
    for (int j = 0; j < spec.horizon(); ++j) {
      du.push_back(rng.vector(m.nu(), -0.1, 0.1));
      z.segment(j * m.nu(), m.nu()) = du.back();
    }
    const Vector delta = x.xs + m.D0() * move_sum(du) - spec.reference();
    z.tail(m.ny()) = delta;
    const double direct = cost_of(spec, x, du, delta);
    EXPECT_NEAR(qp.objective(z), direct, 1e-9 * (1.0 + std::abs(direct)));
    EXPECT_LE((qp.Aeq * z - qp.beq).norm(), 1e-12 * (1.0 + qp.beq.norm()));
  }
}

TEST(SetpointProperties, CostMatchesInfiniteRollout) {
  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const SetpointSpec spec = random_spec(rng);
    const OpomModel& m = spec.model();
    const PlantState x{rng.vector(m.ny()), rng.vector(m.nd()), Vector::Zero(m.nu())};
    MoveSequence du;
    for (int j = 0; j < spec.horizon(); ++j) du.push_back(rng.vector(m.nu()));
    const testkit::RolloutCost ref = testkit::rollout_setpoint_cost(
        m.D0(), m.F(), m.Dd(), m.Psi(), x.xs, x.xd, du, spec.reference(), spec.Q(), spec.R(), spec.S());
    EXPECT_NEAR(cost_of(spec, x, du, ref.delta), ref.value, 1e-9 * (1.0 + ref.value));
  }
}

TEST(SetpointProperties, ClosedLoopMonotoneAndDecreasing) {
  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const SetpointSpec spec = random_spec(rng);
    PlantState x = PlantState::origin(spec.model());
    SetpointSolution prev = solve_step(spec, x);
    for (int k = 0; k < 30; ++k) {
      x = plant_step(spec.model(), x, prev.du[0]);
      const SetpointSolution next = solve_step(spec, x);
      const double slack = 1e-8 * (1.0 + prev.V_star);
      EXPECT_LE(next.V_star, prev.V_star + slack);
      EXPECT_LE(next.V_star, prev.V_star - stage_decrease(spec, prev) + slack);
      EXPECT_TRUE(is_feasible(spec, x, next.du, next.delta));
      prev = next;
    }
  }
}
