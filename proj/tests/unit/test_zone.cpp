#include <gtest/gtest.h>

#include <cmath>

#include "ihmpc/error.hpp"
#include "ihmpc/zone.hpp"
#include "oracles.hpp"
#include "random.hpp"

using namespace ihmpc;
using ihmpc::testkit::Rng;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
Vector vec1(double v) { return Vector::Constant(1, v); }
Rectangle wide(int n) { return Rectangle::symmetric(Vector::Constant(n, 100.0)); }

ZoneSpec static_scalar(double u_des) {
  ZoneParams p{OpomModel::static_gain(scalar(1.0))};
  p.m = 1;
  p.Qy = p.Qu = p.R = p.Sy = scalar(1.0);
  p.Su = scalar(3.0);
  p.U = wide(1);
  p.dU = wide(1);
  p.Y = Rectangle(vec1(0.0), vec1(2.0));
  p.u_des = vec1(u_des);
  return ZoneSpec(std::move(p));
}

ZoneSpec dynamic_scalar(double u_des = 0.8) {
  ZoneParams p{OpomModel(scalar(1.0), scalar(0.5), scalar(-0.5), scalar(1.0))};
  p.m = 3;
  p.Qy = p.Qu = p.R = p.Sy = scalar(1.0);
  p.Su = scalar(20.0);
  p.U = Rectangle::symmetric(vec1(2.0));
  p.dU = Rectangle::symmetric(vec1(0.5));
  p.Y = Rectangle(vec1(-1.0), vec1(1.5));
  p.u_des = vec1(u_des);
  return ZoneSpec(std::move(p));
}

Rectangle random_box(Rng& rng, int n, double lo, double hi) {
  Vector a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = -rng.uniform(lo, hi);
    b[i] = rng.uniform(lo, hi);
  }
  return Rectangle(a, b);
}

ZoneSpec random_spec(Rng& rng) {
  const int ny = rng.integer(1, 3);
  const int nu = rng.integer(1, 3);
  ZoneParams p{rng.model(ny, nu, rng.integer(0, 4))};
  p.m = rng.integer(1, 4);
  p.Qy = rng.spd(ny);
  p.Qu = rng.spd(nu);
  p.R = rng.spd(nu);
  p.Sy = rng.spd(ny, 1.0, 5.0);
  p.Su = rng.spd(nu, 1.0, 30.0);
  p.U = random_box(rng, nu, 0.5, 2.0);
  p.dU = random_box(rng, nu, 0.1, 0.8);
  p.Y = random_box(rng, ny, 0.5, 2.0);
  p.u_des = rng.vector(nu);
  return ZoneSpec(std::move(p), false);
}

}  // namespace

TEST(ZoneSpec, CertificateModeRejectsSmallSu) {
  ZoneParams p{OpomModel::static_gain(scalar(1.0))};
  p.Qy = p.Qu = p.R = p.Sy = scalar(1.0);
  p.Su = scalar(2.0);  // H = R = 1, so Su − H − I = 0
  p.U = p.dU = wide(1);
  p.Y = wide(1);
  p.u_des = vec1(0.0);
  try {
    ZoneSpec s(p, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCertificate);
  }
  const ZoneSpec loose(p, false);
  EXPECT_FALSE(loose.su_certified());
  EXPECT_FALSE(loose.guarantees_hold());
}

TEST(ZoneSpec, TargetAdmissibility) {
  const ZoneSpec s = static_scalar(1.0);
  EXPECT_TRUE(s.target_admissible());
  EXPECT_TRUE(s.guarantees_hold());
  EXPECT_FALSE(s.with_target(vec1(3.0)).target_admissible());
}

TEST(SolveStepZone, StaticScalarExample) {
  const ZoneSpec spec = static_scalar(1.0);
  const ZoneSolution s = solve_step_zone(spec, PlantState::origin(spec.model()));
  EXPECT_NEAR(s.du[0][0], 0.75, 1e-12);
  EXPECT_NEAR(s.y_sp[0], 0.75, 1e-12);
  EXPECT_NEAR(s.delta_y[0], 0.0, 1e-12);
  EXPECT_NEAR(s.delta_u[0], -0.25, 1e-12);
  EXPECT_NEAR(s.V_star, 0.75, 1e-12);
}

TEST(SolveStepZone, ZeroTargetAtOrigin) {
  const ZoneSpec spec = static_scalar(0.0);
  const ZoneSolution s = solve_step_zone(spec, PlantState::origin(spec.model()));
  EXPECT_EQ(s.V_star, 0.0);
  EXPECT_EQ(s.du[0][0], 0.0);
  EXPECT_EQ(s.y_sp[0], 0.0);
  EXPECT_EQ(s.delta_u[0], 0.0);
}

TEST(CostOfZone, TargetStrategyAndConsistency) {
  const ZoneSpec spec = dynamic_scalar(0.8);
  const PlantState x0 = PlantState::origin(spec.model());
  const double expect = 0.64 * 1.0 + 0.64 * 20.0;
  EXPECT_NEAR(cost_of_zone(spec, x0, MoveSequence(3, vec1(0.0)), vec1(0.8), vec1(-0.8), vec1(-0.8)), expect,
              1e-12);
  EXPECT_NEAR(target_strategy_cost(spec, x0), expect, 1e-12);
  const ZoneSolution s = solve_step_zone(spec, x0);
  EXPECT_NEAR(cost_of_zone(spec, x0, s.du, s.y_sp, s.delta_y, s.delta_u), s.V_star, 1e-8);
  EXPECT_TRUE(is_feasible_zone(spec, x0, s.du, s.y_sp, s.delta_y, s.delta_u));
  const ZoneSpec zero = static_scalar(0.0);
  EXPECT_EQ(cost_of_zone(zero, PlantState::origin(zero.model()), {vec1(0.0)}, vec1(0.0), vec1(0.0), vec1(0.0)),
            0.0);
}

TEST(ShiftedStrategyZone, IdentityAfterOneStep) {
  const ZoneSpec spec = dynamic_scalar();
  const PlantState x0 = PlantState::origin(spec.model());
  const ZoneSolution s = solve_step_zone(spec, x0);
  const PlantState x1 = plant_step(spec.model(), x0, s.du[0]);
  const ShiftedZoneCandidate c = shifted_strategy_zone(spec, s, x1);
  EXPECT_LE(c.identity_error, 1e-10);
  EXPECT_NEAR(c.V_tilde, cost_of_zone(spec, x1, c.du, c.y_sp, c.delta_y, c.delta_u), 1e-12);
  EXPECT_THROW(shifted_strategy_zone(spec, s, x0), Error);
}

TEST(ShiftedStrategyZone, ConvergedPointKeepsItsCost) {
  const ZoneSpec spec = static_scalar(0.0);
  const PlantState x0 = PlantState::origin(spec.model());
  const ZoneSolution s = solve_step_zone(spec, x0);
  const ShiftedZoneCandidate c = shifted_strategy_zone(spec, s, x0);
  EXPECT_EQ(c.V_tilde, s.V_star);
}

TEST(ConsolidatedStrategyZone, SlackOnlyCostWhenNothingMoves) {
  const ZoneSpec spec = dynamic_scalar();
  ZoneSolution prev;
  prev.du = MoveSequence{vec1(0.2), vec1(-0.2), vec1(0.0)};
  prev.y_sp = vec1(0.5);
  prev.delta_y = vec1(0.1);
  prev.delta_u = vec1(-0.3);
  const PlantState x{vec1(0.6), vec1(0.0), vec1(0.1)};
  const ConsolidatedZoneCandidate c = consolidated_strategy_zone(spec, x, prev);
  EXPECT_NEAR(c.V_closed_form, 0.01 * 1.0 + 0.09 * 20.0, 1e-14);
}

TEST(ConsolidatedStrategyZone, ClosedFormMatchesDirectEvaluation) {
  const ZoneSpec spec = dynamic_scalar();
  // Near the target the summed plan fits inside dU.
  const PlantState x{vec1(0.75), vec1(0.05), vec1(0.7)};
  const ZoneSolution s = solve_step_zone(spec, x);
  const ConsolidatedZoneCandidate c = consolidated_strategy_zone(spec, x, s);
  EXPECT_NEAR(c.V_closed_form, c.V_tilde, 1e-9 * (1.0 + c.V_tilde));
}

TEST(ConsolidatedStrategyZone, StaticModelHasNoTransientTerm) {
  const ZoneSpec spec = static_scalar(1.0);
  const PlantState x0 = PlantState::origin(spec.model());
  const ZoneSolution s = solve_step_zone(spec, x0);
  const ConsolidatedZoneCandidate c = consolidated_strategy_zone(spec, x0, s);
  EXPECT_NEAR(c.V_closed_form, 0.75 * 0.75 + 3.0 * 0.0625, 1e-12);
  EXPECT_NEAR(c.V_closed_form, c.V_tilde, 1e-12);
}

TEST(ConsolidatedStrategyZone, MoveOutsideBoxIsNotApplicable) {
  const ZoneSpec spec = dynamic_scalar();
  ZoneSolution prev;
  prev.du = MoveSequence{vec1(0.5), vec1(0.5), vec1(0.0)};
  prev.y_sp = prev.delta_y = prev.delta_u = vec1(0.0);
  try {
    consolidated_strategy_zone(spec, PlantState::origin(spec.model()), prev);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotApplicable);
  }
}

TEST(AlphaStrategyZone, StaticScalarExample) {
  const ZoneSpec spec = static_scalar(1.0);
  const PlantState x0 = PlantState::origin(spec.model());
  const ZoneSolution s = solve_step_zone(spec, x0);
  const ZoneCandidate c = alpha_strategy_zone(spec, x0, s, 0.5);
  EXPECT_NEAR(c.du[0][0] - s.du[0][0], 0.125, 1e-12);
  EXPECT_NEAR(c.y_sp[0], 0.875, 1e-12);
  EXPECT_NEAR(c.delta_u[0], -0.125, 1e-12);
  EXPECT_NEAR(c.V_tilde, 0.875 * 0.875 + 3.0 * 0.125 * 0.125, 1e-12);
  EXPECT_GE(c.V_tilde, s.V_star);
  EXPECT_THROW(alpha_strategy_zone(spec, x0, s, 1.0), Error);
}

TEST(AlphaStrategyZone, ApproachesOptimumAsAlphaTendsToOne) {
  const ZoneSpec spec = dynamic_scalar();
  const PlantState x0 = PlantState::origin(spec.model());
  const ZoneSolution s = solve_step_zone(spec, x0);
  const ZoneCandidate c = alpha_strategy_zone(spec, x0, s, 1.0 - 1e-9);
  EXPECT_NEAR(c.V_tilde, s.V_star, 1e-7);
}

// --- properties -----------------------------------------------------------------

TEST(ZoneProperties, CostMatchesInfiniteRollout) {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const ZoneSpec spec = random_spec(rng);
    const OpomModel& m = spec.model();
    const PlantState x{rng.vector(m.ny()), rng.vector(m.nd()), rng.vector(m.nu())};
    MoveSequence du;
    for (int j = 0; j < spec.horizon(); ++j) du.push_back(rng.vector(m.nu()));
    const Vector y_sp = rng.vector(m.ny());
    const testkit::ZoneRolloutCost ref =
        testkit::rollout_zone_cost(m.D0(), m.F(), m.Dd(), m.Psi(), x.xs, x.xd, x.u, du, y_sp, spec.u_des(),
                                   spec.Qy(), spec.Qu(), spec.R(), spec.Sy(), spec.Su());
    EXPECT_NEAR(cost_of_zone(spec, x, du, y_sp, ref.delta_y, ref.delta_u), ref.value, 1e-9 * (1.0 + ref.value));
  }
}

TEST(ZoneProperties, ConsolidatedClosedFormOnRandomStates) {
  Rng rng(52);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const ZoneSpec spec = random_spec(rng);
    const OpomModel& m = spec.model();
    const PlantState x{rng.vector(m.ny()), rng.vector(m.nd()), Vector::Zero(m.nu())};
    const ZoneSolution s = solve_step_zone(spec, x);
    try {
      const ConsolidatedZoneCandidate c = consolidated_strategy_zone(spec, x, s);
      EXPECT_NEAR(c.V_closed_form, c.V_tilde, 1e-9 * (1.0 + c.V_tilde));
      ++checked;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNotApplicable);
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(ZoneProperties, ClosedLoopMonotoneAndDecreasing) {
  Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const ZoneSpec spec = random_spec(rng);
    PlantState x = PlantState::origin(spec.model());
    ZoneSolution prev = solve_step_zone(spec, x);
    for (int k = 0; k < 30; ++k) {
      x = plant_step(spec.model(), x, prev.du[0]);
      const ZoneSolution next = solve_step_zone(spec, x);
      const double slack = 1e-8 * (1.0 + prev.V_star);
      EXPECT_LE(next.V_star, prev.V_star + slack);
      EXPECT_LE(next.V_star, prev.V_star - stage_decrease_zone(spec, prev) + slack);
      prev = next;
    }
  }
}
