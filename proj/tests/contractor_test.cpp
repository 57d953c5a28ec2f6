#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "rdmise/contractor.hpp"
#include "rdmise/network_io.hpp"
#include "rdmise/oracle.hpp"

namespace rdmise {
namespace {

const std::filesystem::path kData = RDMISE_DATA_DIR;

struct Case {
  ThreePhaseNetwork net;
  MeasurementSet meas;
};

Case load_case(const std::string& name) {
  auto net = load_network(kData / name);
  auto meas = load_measurements(kData / name, net);
  return {std::move(net), std::move(meas)};
}

TrialRecord trial_for(const Case& c, std::uint64_t seed, AccuracyClass acc = {}) {
  return synthesize_trial(c.net, Loading::from_network(c.net), c.meas, {acc, 0.0}, seed);
}

std::vector<Interval> start_box(const Case& c, const ResidualSystem& sys, const TrialRecord& t) {
  return sys.make_box(initial_state_box(c.net, t.measurements), t.measurements);
}

bool box_contains(const std::vector<Interval>& box, const std::vector<double>& x, double tol = 1e-9) {
  for (std::size_t j = 0; j < box.size(); ++j)
    if (!(box[j].lo() - tol <= x[j] && x[j] <= box[j].hi() + tol)) return false;
  return true;
}

// Alpha coordinates of x inside box, with squared auxiliaries appended.
std::vector<double> alpha_point(const Linearization& lin, const std::vector<Interval>& box,
                                const std::vector<double>& x) {
  std::vector<double> a;
  for (std::size_t j : lin.alpha_columns) a.push_back((x[j] - box[j].lo()) / box[j].width());
  for (std::size_t col : lin.square_of) a.push_back(a[col] * a[col]);
  return a;
}

// Random box around x: each side extends by an independent fraction of scale.
std::vector<Interval> random_box_around(const std::vector<double>& x, const std::vector<Interval>& shape,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Interval> box;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double w = shape[j].width();
    if (w == 0.0) {
      box.emplace_back(x[j]);
    } else {
      box.emplace_back(x[j] - u(rng) * w * 0.5, x[j] + u(rng) * w * 0.5);
    }
  }
  return box;
}

class LinearizationSoundness : public ::testing::TestWithParam<std::tuple<QuadraticRelaxation, ExpansionPoint>> {};

TEST_P(LinearizationSoundness, TruthSatisfiesEveryRow) {
  const Case c = load_case("feeder6.json");
  ContractorConfig cfg;
  cfg.quadratic_relaxation = std::get<0>(GetParam());
  cfg.expansion = std::get<1>(GetParam());
  std::mt19937_64 rng(17);
  for (std::uint64_t trial = 0; trial < 30; ++trial) {
    const TrialRecord t = trial_for(c, trial_seed(3, trial));
    const ResidualSystem sys = build_residuals(c.net, t.measurements);
    const std::vector<double> x = true_quantities(sys, t);
    const std::vector<Interval> box = random_box_around(x, start_box(c, sys, t), rng);
    const Linearization lin = linearize(sys, box, cfg);
    ASSERT_FALSE(lin.empty);
    const std::vector<double> a = alpha_point(lin, box, x);
    for (const LinearRow& r : lin.rows) {
      double s = 0.0;
      for (const auto& [col, coef] : r.coeffs) s += coef * a[col];
      EXPECT_GE(s, r.lo - 1e-12);
      EXPECT_LE(s, r.hi + 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Relaxations, LinearizationSoundness,
                         ::testing::Combine(::testing::Values(QuadraticRelaxation::mean_value_only,
                                                              QuadraticRelaxation::mean_value_plus_envelopes),
                                            ::testing::Values(ExpansionPoint::infimum, ExpansionPoint::midpoint)));

// Rows from residuals that are affine in alpha have no remainder: their
// bounds differ only by the LP tolerance.
TEST(Linearization, AffineResidualsGiveEqualityRows) {
  const Case c = load_case("feeder6.json");
  const TrialRecord t = trial_for(c, 1);
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  const std::vector<Interval> box = start_box(c, sys, t);
  ContractorConfig cfg;
  cfg.quadratic_relaxation = QuadraticRelaxation::mean_value_only;
  const Linearization lin = linearize(sys, box, cfg);
  const std::vector<RdmExpr> exprs = sys.bind_rdm(box);
  std::size_t row = 0, affine = 0;
  for (const RdmExpr& e : exprs) {
    // At the infimum corner a residual keeps a row iff some gradient entry is nonzero.
    bool kept = false;
    for (RdmVarId v : e.variables())
      if (e.derivative(v, [](RdmVarId) { return 0.0; }) != 0.0) kept = true;
    if (!kept) continue;
    ASSERT_LT(row, lin.rows.size());
    const LinearRow& r = lin.rows[row++];
    if (e.degree() > 1) continue;
    ++affine;
    double scale = 0.0;
    for (const auto& [col, coef] : e.linear()) scale = std::max(scale, std::abs(coef));
    EXPECT_NEAR(r.hi - r.lo, 2.0 * cfg.lp_epsilon / scale, 1e-12);
  }
  EXPECT_EQ(row, lin.rows.size());
  EXPECT_GT(affine, 0u);
}

TEST(Linearization, EnvelopeRowsBoundTheSquare) {
  const Case c = load_case("feeder6.json");
  const TrialRecord t = trial_for(c, 2);
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  const Linearization lin = linearize(sys, start_box(c, sys, t), {});
  ASSERT_FALSE(lin.square_of.empty());
  const std::size_t na = lin.alpha_columns.size();
  const std::size_t env_begin = lin.rows.size() - 2 * lin.square_of.size();
  for (std::size_t k = 0; k < lin.square_of.size(); ++k) {
    const LinearRow& upper = lin.rows[env_begin + 2 * k];
    const LinearRow& lower = lin.rows[env_begin + 2 * k + 1];
    ASSERT_EQ(upper.coeffs.size(), 2u);
    const std::size_t alpha = upper.coeffs[0].first;
    const std::size_t aux = upper.coeffs[1].first;
    ASSERT_LT(alpha, na);
    ASSERT_GE(aux, na);
    EXPECT_EQ(lin.square_of[aux - na], alpha);
    auto value = [&](const LinearRow& r, double a, double sq) {
      std::vector<double> x(lin.num_columns(), 0.0);
      x[alpha] = a;
      x[aux] = sq;
      double s = 0.0;
      for (const auto& [col, coef] : r.coeffs) s += coef * x[col];
      return s;
    };
    for (double a = 0.0; a <= 1.0; a += 0.125) {
      EXPECT_LE(value(upper, a, a * a), upper.hi + 1e-15);
      EXPECT_LE(value(lower, a, a * a), lower.hi + 1e-15);
    }
    // Points above the secant or below the tangent at 1 are cut.
    EXPECT_GT(value(upper, 0.5, 0.75), upper.hi);
    EXPECT_GT(value(lower, 0.75, 0.25), lower.hi);
  }
}

TEST(Contractor, TwoBusContainsTruth) {
  const Case c = load_case("feeder2.json");
  for (std::uint64_t i = 0; i < 10; ++i) {
    const TrialRecord t = trial_for(c, trial_seed(1, i));
    const ResidualSystem sys = build_residuals(c.net, t.measurements);
    const ContractionResult r = run_contractor(sys, start_box(c, sys, t));
    ASSERT_NE(r.status, ContractionStatus::empty_set) << r.message;
    EXPECT_TRUE(box_contains(r.final_box, true_quantities(sys, t)));
    EXPECT_LT(r.width_history.back().state, r.width_history.front().state);
  }
}

TEST(Contractor, SixBusContainsTruthAtEveryIteration) {
  const Case c = load_case("feeder6.json");
  for (ExpansionPoint ep : {ExpansionPoint::infimum, ExpansionPoint::midpoint}) {
    const TrialRecord t = trial_for(c, 5);
    const ResidualSystem sys = build_residuals(c.net, t.measurements);
    const std::vector<double> x = true_quantities(sys, t);
    ContractorConfig cfg;
    cfg.expansion = ep;
    std::vector<std::vector<Interval>> boxes{start_box(c, sys, t)};
    cfg.observer = [&](int it, const std::vector<Interval>& box) {
      EXPECT_EQ(static_cast<std::size_t>(it), boxes.size());
      boxes.push_back(box);
    };
    const ContractionResult r = run_contractor(sys, boxes.front(), cfg);
    ASSERT_NE(r.status, ContractionStatus::empty_set) << r.message;
    ASSERT_EQ(boxes.size(), static_cast<std::size_t>(r.iterations_used) + 1);
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      EXPECT_TRUE(box_contains(boxes[k], x)) << "iteration " << k;
      if (k == 0) continue;
      for (std::size_t j = 0; j < x.size(); ++j) {
        EXPECT_TRUE(boxes[k - 1][j].contains(boxes[k][j])) << "iteration " << k << " quantity " << j;
      }
    }
    EXPECT_EQ(r.width_history.size(), boxes.size());
    EXPECT_EQ(boxes.back(), r.final_box);
  }
}

TEST(Contractor, DegenerateBoxIsAFixedPoint) {
  const Case c = load_case("feeder6.json");
  const TrialRecord t = trial_for(c, 4);
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  std::vector<Interval> box;
  for (double v : true_quantities(sys, t)) box.emplace_back(v);
  const ContractionResult r = run_contractor(sys, box);
  EXPECT_EQ(r.status, ContractionStatus::converged);
  EXPECT_EQ(r.iterations_used, 1);
  EXPECT_EQ(r.final_box, box);
}

TEST(Contractor, InconsistentMeasurementGivesEmptySet) {
  const Case c = load_case("feeder6.json");
  TrialRecord t = trial_for(c, 6);
  for (Measurement& m : t.measurements) {
    if (m.kind != MeasurementKind::V_sq) continue;
    m.value *= 1.5;
    m.err_lo = -0.01 * m.value;
    m.err_hi = 0.01 * m.value;
    break;
  }
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  ContractionResult r;
  ASSERT_NO_THROW(r = run_contractor(sys, start_box(c, sys, t)));
  EXPECT_EQ(r.status, ContractionStatus::empty_set);
  EXPECT_GE(r.empty_iteration, 1);
  EXPECT_FALSE(r.message.empty());
}

TEST(Contractor, TightMeasurementsPinTheState) {
  const Case c = load_case("feeder6.json");
  const TrialRecord t = trial_for(c, 8, {1e-6, 1e-6});
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  const ContractionResult r = run_contractor(sys, start_box(c, sys, t));
  ASSERT_NE(r.status, ContractionStatus::empty_set) << r.message;
  const std::vector<double> x = true_quantities(sys, t);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!counts_as_state(sys, j)) continue;
    EXPECT_LE(std::abs(r.final_box[j].lo() - x[j]), 1e-4) << sys.label(QuantityId{static_cast<std::uint32_t>(j)});
    EXPECT_LE(std::abs(r.final_box[j].hi() - x[j]), 1e-4) << sys.label(QuantityId{static_cast<std::uint32_t>(j)});
  }
}

TEST(Contractor, ThreadCountDoesNotChangeTheResult) {
  const Case c = load_case("feeder6.json");
  const TrialRecord t = trial_for(c, 9);
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  ContractorConfig one, four;
  one.block_size = four.block_size = 8;
  four.threads = 4;
  const ContractionResult a = run_contractor(sys, start_box(c, sys, t), one);
  const ContractionResult b = run_contractor(sys, start_box(c, sys, t), four);
  EXPECT_EQ(a.final_box, b.final_box);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST(Contractor, RejectsBadConfig) {
  const Case c = load_case("feeder2.json");
  const TrialRecord t = trial_for(c, 1);
  const ResidualSystem sys = build_residuals(c.net, t.measurements);
  ContractorConfig cfg;
  cfg.max_iterations = 0;
  EXPECT_THROW(run_contractor(sys, start_box(c, sys, t), cfg), Error);
  cfg = {};
  cfg.width_tolerance = 0.0;
  EXPECT_THROW(run_contractor(sys, start_box(c, sys, t), cfg), Error);
}

}  // namespace
}  // namespace rdmise
