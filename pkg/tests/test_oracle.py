import json

import numpy as np
import pytest
from scipy import stats

from reptalk.beliefs import belief_bounds, crossing_beliefs
from reptalk.equilibrium import (
    InformationStructure,
    matching_payoffs,
    reputations,
    solve_cutoff,
)
from reptalk.experiments import TabulatedCdf
from reptalk.oracle import (
    BLOCK,
    block_rng,
    quadrature_reputations,
    run_oracle,
    sample_signal,
    sample_signals,
    simulate,
    verify_equilibrium,
)

from cases import FIG1_PAIR, HYP, HYPER_PAIR, MC_SEED, MLE


def analytic_reference(xi, beta):
    ref = reputations(xi, beta).to_dict()
    ref["matching"] = matching_payoffs(xi, beta).total
    return ref


class TestSampling:
    def test_ks_against_closed_form(self):
        model = MLE(0.4)
        draws = sample_signals(model, 0, block_rng(MC_SEED, 0).random(1_000_000))
        d = stats.kstest(draws, lambda x: model.cdf(x, 0)).statistic
        assert d < 0.002

    @pytest.mark.parametrize("model", [MLE(0.4), MLE(0.9), HYP(10), HYP(1000)],
                             ids=lambda m: m.describe())
    def test_unit_mean_in_state_zero(self, model):
        draws = sample_signals(model, 0, block_rng(MC_SEED, 1).random(400_000))
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - 1.0) <= 3 * se

    def test_two_segment_table(self):
        table = TabulatedCdf.from_rows([(0.5, 0, 0), (1.0, 2 / 3, 0.5), (2.0, 1, 1)])
        n = 200_000
        draws = sample_signals(table, 0, block_rng(MC_SEED, 2).random(n))
        share = np.mean(draws <= 1.0)
        assert abs(share - 2 / 3) <= 3 * np.sqrt(2 / 9 / n)
        assert draws.min() >= 0.5 and draws.max() <= 2.0

    def test_inverse_of_cdf(self):
        model = HYP(100)
        u = np.linspace(0.01, 0.99, 99)
        for s in (0, 1):
            np.testing.assert_allclose(model.cdf(sample_signals(model, s, u), s), u, atol=1e-8)

    def test_deterministic_given_generator(self):
        a = sample_signal(MLE(0.7), 1, block_rng(3, 0))
        b = sample_signal(MLE(0.7), 1, block_rng(3, 0))
        assert a == b


class TestSimulate:
    def test_fig1_agreement(self, fig1_xi, fig1_solution):
        beta = fig1_solution.beta
        rep = simulate(fig1_xi, beta, n=1_000_000, seed=MC_SEED,
                       reference=analytic_reference(fig1_xi, beta))
        assert rep.mc_agrees(3.0)
        assert set(rep.agreement_z) == {"r_00", "r_01", "r_10", "r_11", "matching"}
        for est in rep.reputations_mc.values():
            assert est.half_width_95 > 0
            assert est.seed == MC_SEED
        assert rep.matching_mc.n == 1_000_000

    def test_half_width_formula(self, fig1_xi, fig1_solution):
        rep = simulate(fig1_xi, fig1_solution.beta, n=20_000, seed=1)
        m = rep.matching_mc
        assert m.half_width_95 == pytest.approx(1.96 * np.sqrt(m.mean * (1 - m.mean) * m.n
                                                               / (m.n - 1)) / np.sqrt(m.n))

    def test_deterministic(self, fig1_xi):
        a = simulate(fig1_xi, 0.58, n=100_000, seed=9)
        b = simulate(fig1_xi, 0.58, n=100_000, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_seed_changes_stream(self, fig1_xi):
        a = simulate(fig1_xi, 0.58, n=100_000, seed=9)
        b = simulate(fig1_xi, 0.58, n=100_000, seed=10)
        assert a.matching_mc.mean != b.matching_mc.mean

    def test_partition_invariant(self, fig1_xi):
        n = 3 * BLOCK + 17
        a = simulate(fig1_xi, 0.58, n=n, seed=4, threads=1)
        b = simulate(fig1_xi, 0.58, n=n, seed=4, threads=3)
        assert a.to_dict() == b.to_dict()

    def test_everyone_reports_zero(self, fig1_xi):
        b = belief_bounds(0.6, FIG1_PAIR)
        rep = simulate(fig1_xi, max(b.hi_h, b.hi_l) + 1e-3, n=20_000, seed=2)
        assert sorted(rep.absent_cells) == ["r_10", "r_11"]
        assert rep.to_dict()["reputations_mc"]["r_11"] is None
        assert any("no draws" in d for d in rep.diagnostics)

    def test_too_few_draws(self, fig1_xi):
        with pytest.raises(ValueError):
            simulate(fig1_xi, 0.58, n=9_999)

    def test_report_serializes(self, fig1_xi):
        json.dumps(simulate(fig1_xi, 0.58, n=20_000, seed=2).to_dict())


class TestQuadratureReference:
    @pytest.mark.parametrize("mu, p, pair", [(0.6, 0.1, FIG1_PAIR), (0.7, 0.1, HYPER_PAIR)])
    def test_matches_closed_form(self, mu, p, pair):
        xi = InformationStructure(mu, p, pair)
        sol = solve_cutoff(xi)
        q = quadrature_reputations(xi, sol.beta)
        for k, v in sol.reputations.to_dict().items():
            assert q[k] == pytest.approx(v, abs=1e-8)
        assert q["matching"] == pytest.approx(sol.matching_total, abs=1e-8)


VERIFY_CASES = [(0.6, 0.1, FIG1_PAIR), (0.7, 0.1, HYPER_PAIR), (0.5, 0.1, HYPER_PAIR)]


def vid(case):
    mu, _, pair = case
    return f"{pair.describe()}-mu{mu}"


class TestVerify:
    @pytest.mark.parametrize("case", VERIFY_CASES, ids=vid)
    def test_solved_cutoff_passes(self, case):
        xi = InformationStructure(*case)
        rep = verify_equilibrium(xi, solve_cutoff(xi).beta)
        assert rep.incentive_sign_ok
        assert rep.receiver_best_reply_ok
        assert rep.passed
        assert rep.max_abs_gap_to_analytic < 1e-8

    @pytest.mark.parametrize("case", VERIFY_CASES, ids=vid)
    @pytest.mark.parametrize("shift", [-0.02, -0.01, 0.01, 0.02])
    def test_displaced_cutoff_rejected(self, case, shift):
        xi = InformationStructure(*case)
        rep = verify_equilibrium(xi, solve_cutoff(xi).beta + shift)
        assert not rep.incentive_sign_ok
        assert not rep.passed
        assert any("sign pattern" in d for d in rep.diagnostics)

    def test_crossing_endpoint_flagged(self, fig1_xi):
        rep = verify_equilibrium(fig1_xi, crossing_beliefs(0.6, FIG1_PAIR).beta_dagger_1)
        assert not rep.passed
        assert any("orientation degenerate in state 1" in d for d in rep.diagnostics)

    def test_zero_mass_cell(self, fig1_xi):
        rep = verify_equilibrium(fig1_xi, 0.99)
        assert rep.incentive_sign_ok is False
        assert any("zero mass" in d for d in rep.diagnostics)


def test_run_oracle_merges(fig1_xi, fig1_solution):
    rep = run_oracle(fig1_xi, fig1_solution.beta, n=100_000, seed=MC_SEED)
    assert rep.passed
    assert rep.seed == MC_SEED
    assert rep.incentive_sign_ok and rep.agreement_z
    assert any("quadrature vs closed form" in d for d in rep.diagnostics)
