"""Classification: criticality, ratio, c1/d1 estimation, verdicts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critgrowth import (CellDivisionModel, GwiModel, OffspringLaw,
                        cell_division_threshold, classify_criticality,
                        classify_growth, classify_gwi, estimate_c1_d1,
                        growth_ratio, perron)
from critgrowth.criterion import (Criticality, Growth, GwiVerdict,
                                  build_criterion_report,
                                  classify_growth_estimate)
from critgrowth.errors import DegenerateVarianceError, PreconditionError

from conftest import EXAMPLE_MATRIX, cell_law


def zero_drift_gwi():
    """Critical immigration model with identically zero immigration."""
    return GwiModel(
        offspring=(cell_law(0.3, 0.7, 0.1), cell_law(0.6, 0.4, 0.2)),
        immigration=OffspringLaw.deterministic([0, 0]))


class TestCriticality:
    def test_row_stochastic_is_critical(self, example_pd):
        assert classify_criticality(example_pd) is Criticality.CRITICAL

    def test_scaled_down_is_subcritical(self):
        assert classify_criticality(perron(0.9 * EXAMPLE_MATRIX)) \
            is Criticality.SUBCRITICAL

    def test_scaled_up_is_supercritical(self):
        assert classify_criticality(perron(1.1 * EXAMPLE_MATRIX)) \
            is Criticality.SUPERCRITICAL

    def test_cell_division_baseline_is_critical(self, cd_extinct):
        pd = perron(cd_extinct.mean_matrix())
        assert classify_criticality(pd) is Criticality.CRITICAL


class TestGrowthRatio:
    def test_zero_drift_gives_zero_ratio(self, example_pd):
        model = zero_drift_gwi()
        for r in (1e2, 1e4, 1e6):
            assert growth_ratio(model, example_pd, r) == 0.0

    def test_gwi_ratio_converges_to_proposition_comparison(
            self, gwi_recurrent, example_pd):
        cls = classify_gwi(gwi_recurrent, example_pd)
        limit = cls.two_a_u / cls.u_v_v_u
        ratio = growth_ratio(gwi_recurrent, example_pd, 1e6)
        assert ratio == pytest.approx(limit, rel=1e-4)

    def test_cell_division_limit_value(self):
        # c1 + c2 = 0.15 against threshold 0.3 gives a limiting ratio 0.5
        model = CellDivisionModel(p=0.5, p_prime=0.5, c1=0.075, c2=0.075,
                                  b1=0.3, b2=0.3)
        pd = perron(model.mean_matrix())
        assert growth_ratio(model, pd, 1e6) == pytest.approx(0.5, abs=1e-4)

    def test_degenerate_variance_raises(self):
        model = GwiModel(offspring=(OffspringLaw.deterministic([1]),),
                         immigration=OffspringLaw.deterministic([0]))
        pd = perron(model.mean_matrix())
        with pytest.raises(DegenerateVarianceError):
            growth_ratio(model, pd, 100.0)

    def test_requires_critical_model(self, gwi_recurrent):
        pd = perron(0.9 * EXAMPLE_MATRIX)
        with pytest.raises(PreconditionError):
            growth_ratio(gwi_recurrent, pd, 100.0)

    def test_ratio_stabilizes_on_shipped_models(self, gwi_recurrent,
                                                 cd_extinct, cd_survive,
                                                 example_pd, cd_pd):
        for model, pd in ((gwi_recurrent, example_pd), (cd_extinct, cd_pd),
                          (cd_survive, cd_pd)):
            est = estimate_c1_d1(model, pd)
            radii = (1e4, 1e5, 1e6)
            ratios = [growth_ratio(model, pd, r) for r in radii]
            spread = max(ratios) - min(ratios)
            declared = (2 * est.combined_uncertainty / est.d1
                        + 2 * est.c1 / est.d1**2 * est.d1_unc)
            assert spread <= max(declared, 1e-3)


class TestEstimateC1D1:
    def test_gwi_closed_forms(self, gwi_recurrent, gwi_transient, example_pd):
        for model in (gwi_recurrent, gwi_transient):
            est = estimate_c1_d1(model, example_pd)
            au = float(model.imm_mean @ example_pd.u)
            uvvu = float(example_pd.u @ model.v_matrix(example_pd.v) @ example_pd.u)
            assert est.c1 == pytest.approx(au, abs=1e-9)
            assert est.d1 == pytest.approx(uvvu, abs=1e-9)
            assert est.stabilized
            assert not est.sigma2_estimated

    def test_cell_division_drift_projection(self, cd_extinct, cd_pd):
        est = estimate_c1_d1(cd_extinct, cd_pd)
        assert est.c1 == pytest.approx(0.1 / math.sqrt(2), abs=1e-9)
        # u^T Gamma_i u collapses to b_i in the limit, so d1 = b sqrt(2)
        assert est.d1 == pytest.approx(0.3 * math.sqrt(2), abs=1e-6)

    def test_zero_drift_estimates_zero(self, example_pd):
        est = estimate_c1_d1(zero_drift_gwi(), example_pd)
        assert est.c1 == 0.0
        assert est.stabilized

    def test_monte_carlo_fallback_for_opaque_sigma2(self, gwi_recurrent,
                                                    example_pd):
        class Opaque(type(gwi_recurrent)):
            def sigma2(self, x, pd):
                return None

        model = Opaque(offspring=gwi_recurrent.offspring,
                       immigration=gwi_recurrent.immigration)
        rng = np.random.default_rng(77)
        est = estimate_c1_d1(model, example_pd, radii=(1e2, 1e3, 1e4),
                             rng=rng, sigma2_samples=40_000)
        assert est.sigma2_estimated
        exact = estimate_c1_d1(gwi_recurrent, example_pd,
                               radii=(1e2, 1e3, 1e4))
        assert est.d1 == pytest.approx(exact.d1, rel=0.05)
        assert est.d1_unc > 0

    def test_requires_rng_when_sigma2_is_opaque(self, gwi_recurrent,
                                                example_pd):
        class Opaque(type(gwi_recurrent)):
            def sigma2(self, x, pd):
                return None

        model = Opaque(offspring=gwi_recurrent.offspring,
                       immigration=gwi_recurrent.immigration)
        with pytest.raises(PreconditionError):
            estimate_c1_d1(model, example_pd)


class TestClassifyGrowth:
    def test_bounded_with_margin(self):
        assert classify_growth(0.1, 0.4, 0.01) is Growth.BOUNDED_AS

    def test_unbounded_with_margin(self):
        assert classify_growth(0.3, 0.4, 0.01) \
            is Growth.UNBOUNDED_POSITIVE_PROB

    def test_equality_band_is_inconclusive(self):
        assert classify_growth(0.2, 0.4, 0.05) is Growth.INCONCLUSIVE

    def test_non_stabilized_forces_inconclusive(self):
        assert classify_growth(0.1, 0.4, 0.0, stabilized=False) \
            is Growth.INCONCLUSIVE

    def test_shipped_cell_division_models(self, cd_extinct, cd_survive,
                                          cd_pd):
        assert classify_growth_estimate(estimate_c1_d1(cd_extinct, cd_pd)) \
            is Growth.BOUNDED_AS
        assert classify_growth_estimate(estimate_c1_d1(cd_survive, cd_pd)) \
            is Growth.UNBOUNDED_POSITIVE_PROB


class TestClassifyGwi:
    def test_zero_immigration_mean_is_recurrent(self, example_pd):
        cls = classify_gwi(zero_drift_gwi(), example_pd)
        assert cls.verdict is GwiVerdict.RECURRENT
        assert cls.two_a_u == 0.0

    def test_one_type_scalar_reduction(self, one_type_gwi):
        pd = perron(one_type_gwi.mean_matrix())
        assert pd.u[0] == pytest.approx(1.0) and pd.v[0] == pytest.approx(1.0)
        cls = classify_gwi(one_type_gwi, pd)
        # d = 1: the comparison is exactly 2a against the offspring variance
        a = float(one_type_gwi.imm_mean[0])
        var = float(one_type_gwi.offspring[0].cov[0, 0])
        assert cls.two_a_u == pytest.approx(2 * a, abs=1e-12)
        assert cls.u_v_v_u == pytest.approx(var, abs=1e-12)
        assert cls.verdict is (GwiVerdict.RECURRENT if 2 * a < var
                               else GwiVerdict.TRANSIENT)

    def test_matched_pair_verdicts(self, gwi_recurrent, gwi_transient,
                                   example_pd):
        assert classify_gwi(gwi_recurrent, example_pd).verdict \
            is GwiVerdict.RECURRENT
        assert classify_gwi(gwi_transient, example_pd).verdict \
            is GwiVerdict.TRANSIENT

    def test_exact_balance_is_inconclusive(self):
        # offspring variance 0.6 and immigration mean 0.3: 2a = u V(v) u
        model = GwiModel(
            offspring=(OffspringLaw([[0], [1], [2]], [0.3, 0.4, 0.3]),),
            immigration=OffspringLaw([[0], [1]], [0.7, 0.3]))
        pd = perron(model.mean_matrix())
        assert classify_gwi(model, pd).verdict is GwiVerdict.INCONCLUSIVE


class TestCellDivisionThreshold:
    def test_symmetric_case(self):
        assert cell_division_threshold(0.5, 0.5, 0.3, 0.3) \
            == pytest.approx(0.3, abs=1e-15)

    @given(p=st.floats(0.05, 0.95), pp=st.floats(0.05, 0.95),
           b=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_equal_b_collapses_to_b(self, p, pp, b):
        # the two weights sum to one
        assert cell_division_threshold(p, pp, b, b) == pytest.approx(b,
                                                                     abs=1e-12)

    def test_weights_formula(self):
        p, pp, b1, b2 = 0.3, 0.6, 0.1, 0.7
        w = 1 - p + pp
        assert cell_division_threshold(p, pp, b1, b2) == pytest.approx(
            (pp * b1 + (1 - p) * b2) / w, abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(PreconditionError):
            cell_division_threshold(0.0, 0.5, 0.2, 0.2)
        with pytest.raises(PreconditionError):
            cell_division_threshold(0.5, 0.5, 1.2, 0.2)

    def test_verdict_matches_threshold_sign_off_grid(self):
        # a smaller sweep of the closed-form/classifier equivalence; the
        # full 5x5x5 grid runs in the acceptance suite
        for p in (0.35, 0.55):
            for b in (0.15, 0.3):
                for c_sum in (0.05, 0.2, 0.45):
                    if abs(c_sum - b) <= 0.05:
                        continue
                    model = CellDivisionModel(p=p, p_prime=p, c1=c_sum / 2,
                                              c2=c_sum / 2, b1=b, b2=b)
                    pd = perron(model.mean_matrix())
                    est = estimate_c1_d1(model, pd)
                    verdict = classify_growth_estimate(est)
                    expected = (Growth.UNBOUNDED_POSITIVE_PROB
                                if c_sum > b else Growth.BOUNDED_AS)
                    assert verdict is expected, (p, b, c_sum)


class TestNormalizationInvariance:
    def test_classification_invariant_under_eigensolver_route(
            self, cd_extinct, cd_survive, gwi_recurrent, example_pd, cd_pd):
        # rebuild the eigendata from a dense solver, renormalized the same
        # way; every verdict must be unchanged
        from critgrowth.spectral import PerronData
        for model, pd in ((cd_extinct, cd_pd), (cd_survive, cd_pd),
                          (gwi_recurrent, example_pd)):
            m = model.mean_matrix()
            w, vecs = np.linalg.eig(m)
            k = int(np.argmax(np.abs(w)))
            u = np.abs(np.real(vecs[:, k]))
            u /= np.linalg.norm(u)
            wt, vecs_t = np.linalg.eig(m.T)
            kt = int(np.argmax(np.abs(wt)))
            v = np.abs(np.real(vecs_t[:, kt]))
            v /= v @ u
            pd2 = PerronData(rho=float(np.real(w[k])), u=u, v=v,
                             residual=0.0)
            est1 = estimate_c1_d1(model, pd)
            est2 = estimate_c1_d1(model, pd2)
            assert classify_growth_estimate(est1) \
                is classify_growth_estimate(est2)
            if isinstance(model, GwiModel):
                assert classify_gwi(model, pd).verdict \
                    is classify_gwi(model, pd2).verdict


class TestReportAssembly:
    def test_report_for_gwi_contains_exact_comparison(self, gwi_recurrent,
                                                      example_pd):
        report = build_criterion_report(gwi_recurrent, example_pd)
        as_dict = report.to_dict()
        assert as_dict["gwi"]["verdict"] == "recurrent"
        assert as_dict["gwi"]["2au"] == pytest.approx(0.2 / math.sqrt(2))
        assert report.margin == pytest.approx(
            abs(2 * report.estimate.c1 / report.estimate.d1 - 1))

    def test_non_critical_report_is_inconclusive(self, gwi_recurrent):
        pd = perron(0.9 * EXAMPLE_MATRIX)
        report = build_criterion_report(gwi_recurrent, pd)
        assert report.criticality is Criticality.SUBCRITICAL
        assert report.classification is Growth.INCONCLUSIVE
        assert report.estimate is None
