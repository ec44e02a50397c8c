#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cvenhance/cascade_analysis.hpp"
#include "generators.hpp"
#include "paper_setup.hpp"

using namespace cvenhance;
using namespace cvenhance::testing;

namespace {

double fitted_fig2_kappa() {
    return fit_kappa({-8.3}, kEpr2, enhancement_geometry(), kDetected).kappa_fit;
}

NopaParams with_kappa(NopaParams n, double k) {
    n.kappa = k;
    return n;
}

}  // namespace

// ---------------------------------------------------------------- fit_kappa

TEST(FitKappa, RecoversForwardEvaluation) {
    const auto geom = enhancement_geometry();
    const double target = variance_to_db(stage_map(kEpr2, with_kappa(geom, 0.05), kDetected).v_corr()).db;
    const auto fit = fit_kappa({target}, kEpr2, geom, kDetected);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.kappa_fit, 0.05, 1e-6);
}

TEST(FitKappa, PassiveTargetGivesZeroKappa) {
    const auto geom = enhancement_geometry();
    const double target = variance_to_db(stage_map(kEpr2, geom, kDetected).v_corr()).db;
    const auto fit = fit_kappa({target}, kEpr2, geom, kDetected);
    EXPECT_NEAR(fit.kappa_fit, 0.0, 1e-6);
}

TEST(FitKappa, Fig2OperatingPoint) {
    const auto fit = fit_kappa({-8.3}, kEpr2, enhancement_geometry(), kDetected);
    EXPECT_TRUE(fit.converged);
    EXPECT_GT(fit.kappa_fit, 0.0);
    EXPECT_LT(fit.kappa_fit, 0.104);
    const double out = correlation_out(squeezing_from_variances(kEpr2), with_kappa(enhancement_geometry(), fit.kappa_fit),
                                       kDetected);
    EXPECT_NEAR(variance_to_db(out).db, -8.3, 0.3);
}

TEST(FitKappa, PrefersLeastPumpWhenTwoKappasReachTarget) {
    // The output is not monotone in kappa with phase jitter: -8.3 dB is reached
    // on both sides of the optimum.
    const auto geom = enhancement_geometry();
    const auto opt = optimal_kappa(kEpr2, geom, kDetected);
    const double k = fitted_fig2_kappa();
    EXPECT_LT(k, opt.kappa_opt);
}

TEST(FitKappa, UnreachableTargetReportsResidual) {
    const auto fit = fit_kappa({-30.0}, kEpr2, enhancement_geometry(), kDetected);
    EXPECT_FALSE(fit.converged);
    EXPECT_GT(fit.residual_db, 0.05);
    EXPECT_GE(fit.kappa_fit, 0.0);
    EXPECT_LT(fit.kappa_fit, 0.104);
}

TEST(FitKappa, RoundTripProperty) {
    Draw d(301);
    int checked = 0;
    while (checked < 100) {
        NopaParams geom = d.geometry();
        geom.gamma1 = d.uniform(0.01, 1.0);
        const MeasurementContext ctx{d.uniform(0.5, 1.0), d.uniform(0.0, 0.05), d.uniform(0.0, 1e7)};
        const EprState in = variances_from_squeezing({d.uniform(0.0, 1.5), d.uniform(0.0, 0.8)});
        const double k_opt = optimal_kappa(in, geom, ctx).kappa_opt;
        const double k0 = d.uniform(0.0, 0.8) * k_opt;
        const double target = variance_to_db(correlation_out(squeezing_from_variances(in), with_kappa(geom, k0), ctx)).db;
        const auto fit = fit_kappa({target}, in, geom, ctx);
        EXPECT_NEAR(fit.kappa_fit, k0, 1e-6) << "gamma1=" << geom.gamma1 << " gamma2=" << geom.gamma2 << " k_opt=" << k_opt;
        ++checked;
    }
}

// ---------------------------------------------------------------- optimal_kappa

TEST(OptimalKappa, SqueezesVacuum) {
    const MeasurementContext ctx{1.0, 0.0, kAnalysisFreqHz};
    const auto opt = optimal_kappa(EprState::vacuum(), enhancement_geometry(), ctx);
    EXPECT_GT(opt.kappa_opt, 0.0);
    EXPECT_LT(opt.v_out_min, 2.0);
}

TEST(OptimalKappa, LargerCouplerSqueezesMore) {
    const MeasurementContext ctx{1.0, 0.0, kAnalysisFreqHz};
    double prev_opt = 3.0, prev_ratio = 3.0;
    for (double g1 : {0.05, 0.1, 0.2}) {
        const NopaParams geom{g1, 0.0, 0.0, kRoundTrip};
        const double v_opt = optimal_kappa(EprState::vacuum(), geom, ctx).v_out_min;
        const double v_ratio = correlation_out({0, 0}, with_kappa(geom, 0.5 * g1), ctx);
        EXPECT_LT(v_opt, prev_opt);
        EXPECT_LT(v_ratio, prev_ratio);
        prev_opt = v_opt;
        prev_ratio = v_ratio;
    }
}

TEST(OptimalKappa, ReachesRedStar) {
    const auto opt = optimal_kappa(kEpr2, enhancement_geometry(), kDetected);
    EXPECT_LE(opt.v_out_min, db_to_variance({-8.3}));
}

TEST(OptimalKappa, BeatsRandomProbes) {
    Draw d(302);
    for (int run = 0; run < 20; ++run) {
        const NopaParams geom = d.geometry();
        const auto ctx = d.context(0.1);
        const EprState in = variances_from_squeezing(d.squeezing(1.5, 0.8));
        const auto opt = optimal_kappa(in, geom, ctx);
        const auto sq = squeezing_from_variances(in);
        for (int i = 0; i < 100; ++i) {
            const double k = d.uniform(0.0, geom.threshold() - kOptimizerMargin);
            EXPECT_LE(opt.v_out_min, correlation_out(sq, with_kappa(geom, k), ctx) * (1.0 + 1e-12));
        }
    }
}

// ---------------------------------------------------------------- fit_chain

TEST(FitChain, MeasuredCascadeIsRealisable) {
    const auto fits = fit_chain({kEpr1, kEpr2, kEpr3}, {{enhancement_geometry(), kHandOff}, {enhancement_geometry(), kDetected}});
    ASSERT_EQ(fits.size(), 2u);
    for (const auto& f : fits) {
        EXPECT_TRUE(f.converged);
        EXPECT_LT(f.residual_db, 0.05);
        EXPECT_GE(f.kappa_fit, 0.0);
        EXPECT_LT(f.kappa_fit, 0.104);
    }
}

TEST(FitChain, IdenticalStatesThroughIdentityStagesGiveZeroKappa) {
    const NopaParams identity{0.1, 0.0, 0.0, kRoundTrip};
    const MeasurementContext ideal{1.0, 0.0, kAnalysisFreqHz};
    const auto fits = fit_chain({kEpr2, kEpr2, kEpr2}, {{identity, ideal}, {identity, ideal}});
    for (const auto& f : fits) EXPECT_NEAR(f.kappa_fit, 0.0, 1e-6);
}

TEST(FitChain, RecoversSyntheticKappas) {
    const std::vector<double> kappas{0.02, 0.035};
    std::vector<Stage> stages{{enhancement_geometry(), kHandOff}, {enhancement_geometry(), kDetected}};
    CascadeConfig forward = stages;
    for (std::size_t i = 0; i < kappas.size(); ++i) forward[i].nopa.kappa = kappas[i];
    auto chain = cascade(kEpr1, forward);
    chain.insert(chain.begin(), kEpr1);
    const auto fits = fit_chain(chain, stages);
    for (std::size_t i = 0; i < kappas.size(); ++i) EXPECT_NEAR(fits[i].kappa_fit, kappas[i], 1e-6);
}

TEST(FitChain, RejectsMismatchedLengths) {
    EXPECT_THROW(fit_chain({kEpr1}, {}), DomainError);
    EXPECT_THROW(fit_chain({kEpr1, kEpr2}, {}), DomainError);
}

// ---------------------------------------------------------------- turning_point

TEST(TurningPoint, PaperTraces) {
    const double k = fitted_fig2_kappa();
    const double r_prime = squeezing_from_variances(kEpr2).r_prime;
    const auto i = turning_point(with_kappa(enhancement_geometry(0.004), k), kDetected, r_prime);
    const auto ii = turning_point(with_kappa(enhancement_geometry(0.001), k), kDetected, r_prime);
    ASSERT_TRUE(i.converged());
    ASSERT_TRUE(ii.converged());
    EXPECT_NEAR(i.db_star.db, -8.5, 0.3);
    EXPECT_NEAR(ii.db_star.db, -10.0, 0.3);
    EXPECT_LT(ii.db_star.db, i.db_star.db);
}

TEST(TurningPoint, IdentityStageIsDegenerate) {
    const auto fp = turning_point({0.1, 0.0, 0.0, kRoundTrip}, {1.0, 0.0, kAnalysisFreqHz}, 0.45);
    EXPECT_EQ(fp.status, FixedPointStatus::Degenerate);
    EXPECT_FALSE(fp.converged());
}

TEST(TurningPoint, PassiveLossyJitteredStageHasNoCrossing) {
    // Without gain a lossy cavity only adds noise.
    const auto fp = turning_point({0.1, 0.004, 0.0, kRoundTrip}, kDetected, 0.45);
    EXPECT_EQ(fp.status, FixedPointStatus::NoCrossing);
}

TEST(TurningPoint, ResidualIsBelowTolerance) {
    Draw d(303);
    int converged = 0;
    for (int i = 0; i < 200; ++i) {
        NopaParams n = d.nopa(0.9);
        const MeasurementContext ctx{d.uniform(0.5, 1.0), d.uniform(0.0, 0.05), d.uniform(0.0, 1e7)};
        const double rp = d.uniform(0.0, 1.0);
        const auto fp = turning_point(n, ctx, rp);
        if (!fp.converged()) continue;
        ++converged;
        const double out = correlation_out({fp.r_star, rp}, n, ctx);
        EXPECT_LT(std::abs(out - fp.v_star), 1e-9);
    }
    EXPECT_GT(converged, 100);
}

TEST(TurningPoint, LowerLossGivesDeeperLimit) {
    Draw d(304);
    for (int i = 0; i < 10; ++i) {
        const double g1 = d.uniform(0.05, 0.2);
        double a = d.uniform(0.0005, 0.01), b = d.uniform(0.0005, 0.01);
        if (a > b) std::swap(a, b);
        const double k = d.uniform(0.2, 0.8) * g1;
        const auto lo = turning_point({g1, a, k, kRoundTrip}, kDetected, 0.45);
        const auto hi = turning_point({g1, b, k, kRoundTrip}, kDetected, 0.45);
        ASSERT_TRUE(lo.converged() && hi.converged());
        EXPECT_LT(lo.db_star.db, hi.db_star.db) << "g1=" << g1 << " g2=" << a << "," << b << " k=" << k;
    }
}

TEST(TurningPoint, EnhancementReversesExactlyOnce) {
    const NopaParams n = with_kappa(enhancement_geometry(), fitted_fig2_kappa());
    const double rp = squeezing_from_variances(kEpr2).r_prime;
    const auto fp = turning_point(n, kDetected, rp);
    ASSERT_TRUE(fp.converged());
    int sign_changes = 0;
    bool prev_enhances = true;
    for (int i = 1; i <= 1000; ++i) {
        const double r = 5.0 * i / 1000.0;
        const double v_in = 2.0 * std::exp(-2.0 * r);
        const bool enhances = correlation_out({r, rp}, n, kDetected) < v_in;
        if (i > 1 && enhances != prev_enhances) ++sign_changes;
        prev_enhances = enhances;
        if (std::abs(r - fp.r_star) > 1e-6) {
            EXPECT_EQ(enhances, r < fp.r_star) << "r=" << r;
        }
    }
    EXPECT_EQ(sign_changes, 1);
}

// ---------------------------------------------------------------- sweep_gamma

TEST(SweepGamma, RedStarCell) {
    const auto fixed = sweep_gamma(kEpr2, with_kappa(enhancement_geometry(), fitted_fig2_kappa()), kDetected,
                                   KappaPolicy::Fixed, {0.1}, {0.004});
    EXPECT_NEAR(fixed.at(0, 0).db.db, -8.3, 0.3);
    const auto best = sweep_gamma(kEpr2, enhancement_geometry(), kDetected, KappaPolicy::Optimal, {0.1}, {0.004});
    EXPECT_LE(best.at(0, 0).db.db, -8.3);
}

TEST(SweepGamma, OptimalPolicyImprovesWithCouplerTransmission) {
    const auto g1 = linear_axis(0.02, 0.2, 12);
    const auto grid = sweep_gamma(kEpr2, enhancement_geometry(), kDetected, KappaPolicy::Optimal, g1, {0.001, 0.004, 0.01});
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 1; i < g1.size(); ++i) EXPECT_LE(grid.at(i, j).db.db, grid.at(i - 1, j).db.db + 1e-12);
}

TEST(SweepGamma, LowerLossImprovesAtFixedCoupler) {
    const auto g2 = linear_axis(0.0005, 0.01, 10);
    const auto grid = sweep_gamma(kEpr2, enhancement_geometry(), kDetected, KappaPolicy::Optimal, {0.1}, g2);
    for (std::size_t j = 1; j < g2.size(); ++j) EXPECT_GT(grid.at(0, j).db.db, grid.at(0, j - 1).db.db);
}

TEST(SweepGamma, IdentityGridReturnsInput) {
    const MeasurementContext ideal{1.0, 0.0, kAnalysisFreqHz};
    const auto grid = sweep_gamma(kEpr2, {0.1, 0.0, 0.0, kRoundTrip}, ideal, KappaPolicy::Fixed, {0.05, 0.1, 0.5}, {0.0});
    for (const auto& c : grid.cells) EXPECT_NEAR(c.db.db, variance_to_db(kEpr2.v_corr()).db, 1e-12);
}

TEST(SweepGamma, ParallelMatchesSerial) {
    const auto g1 = linear_axis(0.02, 0.2, 9), g2 = linear_axis(0.0005, 0.01, 7);
    const auto serial = sweep_gamma(kEpr2, enhancement_geometry(), kDetected, KappaPolicy::Optimal, g1, g2,
                                    ModelMode::Physical, 1);
    const auto parallel = sweep_gamma(kEpr2, enhancement_geometry(), kDetected, KappaPolicy::Optimal, g1, g2,
                                      ModelMode::Physical, 4);
    ASSERT_EQ(serial.cells.size(), parallel.cells.size());
    for (std::size_t i = 0; i < serial.cells.size(); ++i) {
        EXPECT_EQ(serial.cells[i].kappa, parallel.cells[i].kappa);
        EXPECT_EQ(serial.cells[i].v_corr, parallel.cells[i].v_corr);
    }
}

TEST(SweepGamma, Errors) {
    const auto geom = with_kappa(enhancement_geometry(), 0.05);
    EXPECT_THROW(sweep_gamma(kEpr2, geom, kDetected, KappaPolicy::Fixed, {}, {0.004}), DomainError);
    EXPECT_THROW(sweep_gamma(kEpr2, geom, kDetected, KappaPolicy::Fixed, {0.1, 0.1}, {0.004}), DomainError);
    try {
        sweep_gamma(kEpr2, geom, kDetected, KappaPolicy::Fixed, {0.02, 0.1}, {0.004});
        FAIL() << "expected above-threshold cell";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("cell (0, 0)"), std::string::npos) << e.what();
    }
}

// ---------------------------------------------------------------- projection

TEST(Projection, UnchangedLossReproducesBase) {
    const auto geom = enhancement_geometry();
    const double reopt = projection_improved_loss(kEpr2, geom, 0.004, kDetected).db;
    EXPECT_DOUBLE_EQ(reopt, variance_to_db(optimal_kappa(kEpr2, geom, kDetected).v_out_min).db);
    const auto held = with_kappa(geom, fitted_fig2_kappa());
    EXPECT_NEAR(projection_improved_loss(kEpr2, held, 0.004, kDetected, ModelMode::Physical, ProjectionPolicy::HoldPump).db,
                -8.3, 1e-6);
}

TEST(Projection, LosslessBoundBeatsImprovedLoss) {
    const auto geom = with_kappa(enhancement_geometry(), fitted_fig2_kappa());
    for (auto policy : {ProjectionPolicy::Reoptimize, ProjectionPolicy::HoldPump}) {
        const double at_01 = projection_improved_loss(kEpr2, geom, 0.001, kDetected, ModelMode::Physical, policy).db;
        const double at_0 = projection_improved_loss(kEpr2, geom, 0.0, kDetected, ModelMode::Physical, policy).db;
        EXPECT_LT(at_0, at_01);
        EXPECT_LT(at_01, -8.3);
    }
}

TEST(Projection, RejectsWorseLoss) {
    EXPECT_THROW(projection_improved_loss(kEpr2, enhancement_geometry(), 0.01, kDetected), DomainError);
}
