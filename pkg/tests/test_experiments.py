import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from reptalk.errors import DomainError, TableFormatError
from reptalk.experiments import (
    ExperimentPair,
    SupportInterval,
    TabulatedCdf,
    check_symmetry,
    distance_to_perfect,
    from_unit,
    parse_experiment,
    quad_cdf,
    to_unit,
    validate_assumptions,
)

from cases import FIG1_PAIR, HYP, MLE


def interior(model, u):
    """Map u in (0, 1) to an interior likelihood ratio of ``model``."""
    lo, hi = to_unit(model.support.lo), to_unit(model.support.hi)
    return float(from_unit(lo + (hi - lo) * u))


models = st.one_of(
    st.floats(0.05, 1.0).map(MLE),
    st.integers(1, 2000).map(HYP),
)


class TestSupport:
    def test_mle_support(self):
        sup = MLE(0.9).support
        assert sup.lo == pytest.approx(1 / 19)
        assert sup.hi == pytest.approx(19)

    def test_mle_unit_weight_unbounded(self):
        assert math.isinf(MLE(1.0).support.hi)
        assert MLE(1.0).support.lo == 0.0

    def test_hyper_support(self):
        sup = HYP(5).support
        assert (sup.lo, sup.hi) == (0.0, math.inf)

    def test_interval_rejects_reversed(self):
        with pytest.raises(DomainError):
            SupportInterval(2.0, 1.0)

    @pytest.mark.parametrize("x", [0.0, -0.1, 1.5])
    def test_mle_rejects_bad_weight(self, x):
        with pytest.raises(DomainError):
            MLE(x)

    @pytest.mark.parametrize("k", [0, 2.5, -3])
    def test_hyper_rejects_bad_k(self, k):
        with pytest.raises(DomainError):
            HYP(k)


class TestDensity:
    def test_mle_at_one(self):
        assert MLE(0.9).pdf(1.0, 0) == pytest.approx(2 / (0.9 * 8), rel=1e-12)

    def test_hyper_k1_is_exponential(self):
        ell = np.array([0.0, 0.3, 1.0, 4.0])
        np.testing.assert_allclose(HYP(1).pdf(ell, 0), np.exp(-ell), rtol=1e-14)

    def test_outside_support_raises(self):
        with pytest.raises(DomainError):
            MLE(0.4).pdf(0.1, 0)

    def test_bad_state_raises(self):
        with pytest.raises(DomainError):
            MLE(0.4).pdf(1.0, 2)

    def test_hyper_large_k_no_underflow_in_slow_tail(self):
        m = HYP(1000)
        b = m.slow_rate
        direct = (b / 1000) * math.exp(-b * 50.0)
        assert m.pdf(50.0, 0) == pytest.approx(direct, rel=1e-12)

    def test_hyper_log_space_matches_direct(self):
        m = HYP(200)
        k, b = 200.0, m.slow_rate
        for ell in (1e-4, 0.01, 0.5):
            direct = (k - 1) * math.exp(-k * ell) + (b / k) * math.exp(-b * ell)
            assert m.pdf(ell, 0) == pytest.approx(direct, rel=1e-12)

    def test_scalar_in_scalar_out(self):
        assert isinstance(MLE(0.5).pdf(1.0, 1), float)
        assert isinstance(MLE(0.5).cdf(np.array([1.0, 2.0]), 1), np.ndarray)

    def test_density_integrates_to_one(self):
        for m in (MLE(0.4), MLE(0.9), HYP(50)):
            for s in (0, 1):
                assert quad_cdf(m, m.support.hi, s) == pytest.approx(1.0, abs=1e-9)


class TestCdf:
    @pytest.mark.parametrize("x", [0.9, 0.4])
    def test_state0_at_three_halves(self, x):
        assert MLE(x).cdf(1.5, 0) == pytest.approx(0.825, abs=1e-12)
        assert quad_cdf(MLE(x), 1.5, 0) == pytest.approx(0.825, abs=1e-9)

    @pytest.mark.parametrize("x", [0.9, 0.4])
    def test_state1_at_two_thirds(self, x):
        assert MLE(x).cdf(2 / 3, 1) == pytest.approx(0.175, abs=1e-12)
        assert quad_cdf(MLE(x), 2 / 3, 1) == pytest.approx(0.175, abs=1e-9)

    def test_clamping(self):
        m = MLE(0.4)
        assert m.cdf(0.0, 0) == 0.0
        assert m.cdf(100.0, 1) == 1.0
        assert HYP(3).cdf(math.inf, 1) == 1.0

    @pytest.mark.parametrize("k", [1, 3, 10, 100, 1000])
    @pytest.mark.parametrize("s", [0, 1])
    @pytest.mark.parametrize("ell", [1e-4, 0.01, 0.3, 1.0, 2.5, 40.0])
    def test_hyper_closed_form_matches_quadrature(self, k, s, ell):
        m = HYP(k)
        assert m.cdf(ell, s) == pytest.approx(quad_cdf(m, ell, s), abs=1e-9)

    @pytest.mark.parametrize("k", [3, 1000])
    def test_hyper_state1_via_scipy_quad_on_ell(self, k):
        # independent of the u-scale mapping: integrate ell * pdf0 directly
        m = HYP(k)
        val, _ = integrate.quad(lambda e: e * m.pdf(e, 0), 0, 2.0, points=[1 / k, 1.0],
                                epsabs=1e-12, limit=200)
        assert m.cdf(2.0, 1) == pytest.approx(val, abs=1e-10)

    def test_sf_complements_cdf(self):
        ell = np.geomspace(1e-3, 50, 40)
        for m in (MLE(0.3), HYP(7), HYP(1000)):
            for s in (0, 1):
                np.testing.assert_allclose(m.cdf(ell, s) + m.sf(ell, s), 1.0, atol=1e-14)

    @pytest.mark.parametrize("model", [MLE(0.1), MLE(0.9), MLE(1.0), HYP(1), HYP(1000)])
    def test_normalization(self, model):
        for s in (0, 1):
            assert model.cdf(model.support.hi, s) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("model", [MLE(0.2), MLE(0.95), HYP(4), HYP(1000)])
    def test_derivative_matches_pdf(self, model):
        lo, hi = to_unit(model.support.lo), to_unit(model.support.hi)
        for u in np.linspace(lo, hi, 41)[2:-2]:
            ell = float(from_unit(u))
            for s in (0, 1):
                f = model.pdf(ell, s)
                if f < 1e-6:
                    continue
                h = 1e-6 * ell
                if model.cdf(ell, s) < 0.5:
                    fd = (model.cdf(ell + h, s) - model.cdf(ell - h, s)) / (2 * h)
                else:  # difference the small tail to avoid cancellation
                    fd = (model.sf(ell - h, s) - model.sf(ell + h, s)) / (2 * h)
                assert fd == pytest.approx(f, rel=1e-5)


class TestLabelingProperty:
    @given(model=models, u=st.floats(0.001, 0.999))
    @settings(max_examples=300, deadline=None)
    def test_state1_density_is_ell_times_state0(self, model, u):
        ell = interior(model, u)
        if not math.isfinite(ell):
            return
        f0, f1 = model.pdf(ell, 0), model.pdf(ell, 1)
        assert abs(f1 - ell * f0) <= 1e-9 * (1 + f0)

    @given(model=models, u1=st.floats(0.0, 1.0), u2=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_cdf_monotone(self, model, u1, u2):
        a, b = sorted((interior(model, u1), interior(model, u2)))
        for s in (0, 1):
            assert model.cdf(a, s) <= model.cdf(b, s) + 1e-15

    @given(model=models, u=st.floats(0.01, 0.99))
    @settings(max_examples=100, deadline=None)
    def test_mlrp_first_order_dominance(self, model, u):
        ell = interior(model, u)
        assert model.cdf(ell, 1) <= model.cdf(ell, 0) + 1e-15


class TestTabulated:
    def test_perfect_is_at_distance_zero(self):
        assert distance_to_perfect(TabulatedCdf.perfect()) == pytest.approx(0.0, abs=1e-9)

    def test_interpolates_linearly(self):
        t = TabulatedCdf.from_rows([(0.5, 0, 0), (1.0, 0.5, 1 / 3), (2.0, 1, 1)])
        assert t.cdf(0.75, 0) == pytest.approx(0.25)
        assert t.pdf(0.75, 0) == pytest.approx(1.0)
        assert t.pdf(1.5, 1) == pytest.approx(2 / 3)

    def test_resampled_mle_is_symmetric(self):
        t = TabulatedCdf.from_model(MLE(0.4), n=801)
        rep = check_symmetry(t, tol=1e-4)
        assert rep.symmetric
        assert rep.max_gap > 0

    def test_resampled_mle_tracks_closed_form(self):
        m = MLE(0.6)
        t = TabulatedCdf.from_model(m, n=2001)
        grid = np.geomspace(m.support.lo, m.support.hi, 97)
        for s in (0, 1):
            np.testing.assert_allclose(t.cdf(grid, s), m.cdf(grid, s), atol=1e-5)

    def test_csv_round_trip(self, tmp_path):
        t = TabulatedCdf.from_model(MLE(0.5), n=21)
        path = tmp_path / "t.csv"
        t.to_csv(path)
        back = TabulatedCdf.from_csv(path)
        np.testing.assert_array_equal(back.ell, t.ell)
        np.testing.assert_array_equal(back.f1, t.f1)

    @pytest.mark.parametrize(
        "body, row",
        [
            ("0.5,0,0\n1.0,0.5,0.3\n0.9,1,1\n", 3),
            ("0.5,0,0\n1.0,abc,0.3\n2,1,1\n", 2),
            ("0.5,0,0\n1.0,0.5\n2,1,1\n", 2),
            ("0.5,0,0\n1.0,0.5,0.4\n1.5,0.9,0.5\n2,1,1\n", 3),
            ("0.5,0.1,0\n1.0,0.5,0.3\n2,1,1\n", 1),
            ("0.5,0,0\n1.0,0.5,0.3\n2,1,0.9\n", 3),
        ],
    )
    def test_csv_errors_name_row(self, tmp_path, body, row):
        path = tmp_path / "bad.csv"
        path.write_text("ell,F0,F1\n" + body)
        with pytest.raises(TableFormatError) as exc:
            TabulatedCdf.from_csv(path)
        assert exc.value.row == row
        assert str(exc.value).startswith(f"row {row}:")

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("l,a,b\n0,0,0\n1,1,1\n")
        with pytest.raises(TableFormatError, match="header"):
            TabulatedCdf.from_csv(path)

    def test_parse_table_descriptor(self, tmp_path):
        path = tmp_path / "t.csv"
        TabulatedCdf.from_model(MLE(0.5), n=11).to_csv(path)
        assert parse_experiment(f"table:{path}").support.lo == pytest.approx(1 / 3)


class TestParse:
    def test_descriptors(self):
        assert parse_experiment("mle:0.9") == MLE(0.9)
        assert parse_experiment("hyper:1000") == HYP(1000)
        assert parse_experiment({"family": "mle", "x": 0.4}) == MLE(0.4)

    @pytest.mark.parametrize("desc", ["mle", "gauss:1", "mle:abc", "hyper:2.5", 7])
    def test_bad_descriptors(self, desc):
        with pytest.raises(DomainError):
            parse_experiment(desc)


class TestAssumptions:
    def test_fig1_pair_passes(self):
        rep = validate_assumptions(FIG1_PAIR, 0.6)
        assert rep.overall
        assert rep.part_c_bound == pytest.approx(0.95)
        assert rep.part_b_margin > 0

    def test_hyper_pair_passes(self, hyper_pair):
        rep = validate_assumptions(hyper_pair, 0.6)
        assert rep.overall
        assert rep.part_c_bound == 1.0

    def test_inverted_supports_fail_part_a(self):
        rep = validate_assumptions(ExperimentPair(MLE(0.4), MLE(0.9)), 0.6)
        assert not rep.part_a
        assert not rep.overall

    def test_prior_bound(self):
        rep = validate_assumptions(FIG1_PAIR, 0.96)
        assert rep.part_a and rep.part_b and not rep.part_c
        assert not rep.overall

    def test_hazard_failure_is_located(self):
        rep = validate_assumptions(ExperimentPair(HYP(10), MLE(0.5)), 0.6)
        assert not rep.part_b
        assert rep.part_b_margin < 0
        assert MLE(0.5).support.lo < rep.part_b_worst_ell < MLE(0.5).support.hi

    def test_small_grid_rejected(self):
        with pytest.raises(DomainError):
            validate_assumptions(FIG1_PAIR, 0.6, grid_size=16)

    @given(mu=st.floats(0.5, 0.999))
    @settings(max_examples=30, deadline=None)
    def test_overall_is_conjunction(self, mu):
        rep = validate_assumptions(FIG1_PAIR, mu, grid_size=64)
        assert rep.overall == (rep.part_a and rep.part_b and rep.part_c)


class TestSymmetry:
    @pytest.mark.parametrize("x", [0.1, 0.4, 0.9, 1.0 - 1e-6])
    def test_mle_symmetric(self, x):
        rep = check_symmetry(MLE(x), tol=1e-9)
        assert rep.symmetric
        assert rep.max_gap < 1e-9

    def test_hyper_reports_gap(self):
        rep = check_symmetry(HYP(3), tol=1e-9)
        assert rep.max_gap >= 0
        assert rep.symmetric == (rep.max_gap < 1e-9)

    def test_rejects_nonpositive_tol(self):
        with pytest.raises(DomainError):
            check_symmetry(MLE(0.5), tol=0)


class TestDistanceToPerfect:
    def test_hyper_decreasing_in_k(self):
        d = [distance_to_perfect(HYP(k)) for k in (10, 100, 1000)]
        assert d[0] > d[1] > d[2] > 0

    def test_mle_positive(self):
        assert distance_to_perfect(MLE(0.9)) > 0

    def test_matches_definition(self):
        m = HYP(100)
        eps = distance_to_perfect(m)
        cond0 = lambda e: m.cdf(from_unit(e), 0) >= 1 - e
        cond1 = lambda e: m.cdf(from_unit(1 - e), 1) <= e
        assert cond0(eps + 1e-8) and cond1(eps + 1e-8)
        assert not (cond0(eps - 1e-6) and cond1(eps - 1e-6))
