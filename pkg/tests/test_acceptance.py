"""Acceptance gate: every primary guarantee at its stated tolerance and budget.

Each criterion prints one `[acceptance] <name>: PASS` or `: FAIL` line on the
real terminal (outside pytest's capture) so the gate's verdicts are visible in
any test log. A criterion fails on a violated tolerance or a blown time
budget; nothing here loosens the module-level contracts.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import bbepi as bb
from bbepi.model import RankTag
from conftest import (
    diagonal_As,
    feedback_C,
    oracle_minimal_siphons,
    oracle_root_count,
    random_model,
    with_r0,
)
from test_crn import SIRS as SIRS_TEXT
from test_crn import random_network
from test_equilibrium import backward_model


@pytest.fixture
def gate(capfd):
    """Context manager enforcing one criterion's budget and printing its verdict."""

    @contextmanager
    def criterion(name: str, budget_s: float):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException:
            with capfd.disabled():
                print(f"[acceptance] {name}: FAIL", flush=True)
            raise
        elapsed = time.perf_counter() - t0
        if elapsed > budget_s:
            with capfd.disabled():
                print(f"[acceptance] {name}: FAIL "
                      f"(took {elapsed:.1f}s, budget {budget_s:.0f}s)",
                      flush=True)
            raise AssertionError(f"{name}: exceeded {budget_s}s budget "
                                 f"({elapsed:.1f}s)")
        with capfd.disabled():
            print(f"[acceptance] {name}: PASS ({elapsed:.2f}s)", flush=True)

    return criterion


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


# --------------------------------------------------------------- criterion 1

def test_acceptance_scalar_closed_form(gate, sir):
    """Scalar anchor model: every reported quantity hits its closed form."""
    with gate("scalar closed form", 1.0):
        assert bb.reproduction_number(sir) == pytest.approx(2.0, abs=1e-12)
        rank = bb.classify_rank(sir)
        report = bb.endemic_rank_one(sir, rank)
        (point,) = report.endemic_points
        assert point.S_bar == pytest.approx([0.5], abs=1e-10)
        assert point.I_bar == pytest.approx([0.5], abs=1e-10)
        assert point.k == pytest.approx(0.5, abs=1e-10)
        assert bb.residual_inf(sir, point.S_bar, point.I_bar) <= 1e-10


# --------------------------------------------------------------- criterion 2

def test_acceptance_spectral_identity(gate):
    """rho(K) = rho(K~) on 100 random models; doubling S doubles K~ exactly."""
    with gate("spectral identity", 10.0):
        rng = np.random.default_rng(1001)
        for _ in range(100):
            m, n = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            case = ("casep", "caseb", "general")[int(rng.integers(3))]
            model = random_model(rng, m, n, case)
            S = rng.uniform(0.1, 3.0, size=m)
            bundle = bb.ngm_at(model, S)
            rho_K = spectral_radius(bundle.K)
            rho_Kt = spectral_radius(bundle.K_tilde)
            assert abs(rho_K - rho_Kt) <= 1e-10
            doubled = bb.ngm_at(model, 2.0 * S)
            assert np.array_equal(doubled.K_tilde, 2.0 * bundle.K_tilde)


# --------------------------------------------------------------- criterion 3

def test_acceptance_strong_threshold(gate):
    """Endemic points exist iff R0 > 1 on 100 feedback-free models."""
    with gate("strong threshold", 60.0):
        rng = np.random.default_rng(1002)
        n_above = 0
        for trial in range(100):
            m, n = int(rng.integers(1, 4)), int(rng.integers(1, 5))
            case = ("casep", "caseb", "general")[trial % 3]
            target = float(rng.uniform(0.3, 3.0))
            if abs(target - 1.0) < 1e-3:
                target += 0.1
            model = with_r0(random_model(rng, m, n, case), target)
            report = bb.endemic_spectral(model)
            if target <= 1.0:
                assert not report.endemic_points
                continue
            n_above += 1
            assert report.endemic_points
            for point in report.endemic_points:
                loop = bb.ngm_at(model, point.S_bar)
                assert loop.R0 == pytest.approx(1.0, abs=1e-8)
                assert bb.residual_inf(model, point.S_bar,
                                       point.I_bar) <= 1e-8
            rank = bb.classify_rank(model)
            if rank.tag is not RankTag.GENERAL:
                cross = bb.endemic_rank_one(model, rank)
                (ref,) = cross.endemic_points
                (got,) = report.endemic_points
                assert np.max(np.abs(got.S_bar - ref.S_bar)) <= 1e-7
                assert np.max(np.abs(got.I_bar - ref.I_bar)) <= 1e-7
        assert n_above >= 30  # both regimes genuinely exercised


# --------------------------------------------------------------- criterion 4

def test_acceptance_determinant_law(gate):
    """Jacobian determinants at the two equilibria cancel, m=1 closed form."""
    with gate("determinant law", 10.0):
        rng = np.random.default_rng(1003)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            model = with_r0(random_model(rng, 1, n, "general"),
                            float(rng.uniform(1.05, 4.0)))
            law = bb.determinant_law(model, bb.classify_rank(model))
            assert law.holds
            scale = max(abs(law.det_J_dfe), abs(law.det_J_ee))
            assert abs(law.det_J_dfe + law.det_J_ee) <= 1e-8 * scale
            assert law.det_J_dfe == pytest.approx(law.closed_form_dfe,
                                                  rel=1e-8)
            assert law.det_J_ee == pytest.approx(law.closed_form_ee, rel=1e-8)


# --------------------------------------------------------------- criterion 5

def test_acceptance_lyapunov_certificates(gate):
    """Sampled decrease certificates: 20 models x 20 trajectories each."""
    with gate("lyapunov certificates", 300.0):
        rng = np.random.default_rng(1004)
        cfg = bb.SamplingConfig(n_trajectories=20)
        for _ in range(10):  # disease-free potential, subthreshold
            m, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            model = diagonal_As(random_model(rng, m, n, "casep"), rng)
            model = with_r0(model, float(rng.uniform(0.2, 0.8)))
            cert = bb.verify_decrease(model, "dfe", cfg)
            assert cert.verdict
            assert cert.worst_violation <= 1e-7
            assert cert.chain_rule_gap <= 1e-8
            assert cert.convergence_fraction == 1.0
        for _ in range(10):  # endemic potential, one susceptible class
            n = int(rng.integers(1, 4))
            model = with_r0(random_model(rng, 1, n, "general"),
                            float(rng.uniform(1.2, 3.0)))
            cert = bb.verify_decrease(model, "ee", cfg)
            assert cert.verdict
            assert cert.worst_violation <= 1e-7
            assert cert.chain_rule_gap <= 1e-8
            assert cert.convergence_fraction == 1.0


# --------------------------------------------------------------- criterion 6

def test_acceptance_kirchhoff_perron(gate):
    """Diagonal cofactors of lambda_P*Id - J align with w*pi, 200 matrices."""
    with gate("kirchhoff perron", 30.0):
        rng = np.random.default_rng(1005)
        for _ in range(200):
            k = int(rng.integers(2, 9))
            J = rng.uniform(0.0, 2.0, size=(k, k)) * \
                (rng.random((k, k)) < 0.6)
            np.fill_diagonal(J, rng.uniform(-3.0, 0.0, size=k))
            for i in range(k):  # a ring guarantees irreducibility
                J[i, (i + 1) % k] += 0.5
            data = bb.kirchhoff_perron(J)
            ratios = data.cofactors / (data.w * data.pi)
            spread = float((np.max(ratios) - np.min(ratios)) /
                           abs(np.mean(ratios)))
            assert spread <= 1e-6
        for _ in range(30):  # Markov generators: cofactors give pi_stationary
            k = int(rng.integers(2, 7))
            Q = rng.uniform(0.1, 2.0, size=(k, k))
            np.fill_diagonal(Q, 0.0)
            np.fill_diagonal(Q, -Q.sum(axis=0))
            data = bb.kirchhoff_perron(Q)
            assert abs(data.lambda_P) <= 1e-9
            stationary = data.w / data.w.sum()
            M = np.vstack([Q, np.ones(k)])
            rhs = np.concatenate([np.zeros(k), [1.0]])
            direct, *_ = np.linalg.lstsq(M, rhs, rcond=None)
            assert np.max(np.abs(stationary - direct)) <= 1e-9


# --------------------------------------------------------------- criterion 7

def test_acceptance_siphon_oracle(gate):
    """Minimal siphons equal the power-set filter on 50 random networks."""
    with gate("siphon oracle", 30.0):
        net = bb.parse_reactions(SIRS_TEXT)
        assert [s.species for s in bb.minimal_siphons(net)] == [("i",)]
        rng = np.random.default_rng(1006)
        for _ in range(50):
            n = int(rng.integers(3, 13))
            net = random_network(rng, n, int(rng.integers(2, 2 * n)))
            got = sorted(s.indices for s in bb.minimal_siphons(net))
            assert got == oracle_minimal_siphons(net)


# --------------------------------------------------------------- criterion 8

def test_acceptance_rank_classification(gate):
    """The two canonical structure examples classify; factors recover."""
    with gate("rank classification", 5.0):
        # Shared-routing example: identical routing columns, full-rank B.
        A = np.array([[-2.0, 0.5], [0.5, -2.0]])
        A_S = np.array([[-1.0, 0.0], [0.0, -1.0]])
        p_only = bb.BilinearModel(
            A=A, A_S=A_S,
            B=np.array([[1.0, 2.0], [3.0, 4.0]]),
            P=np.array([[1.0 / 3.0, 1.0 / 3.0], [2.0 / 3.0, 2.0 / 3.0]]),
            Lambda=np.array([1.0, 1.0]))
        rank_p = bb.classify_rank(p_only)
        assert rank_p.tag is RankTag.CASE_P
        assert rank_p.alpha_n == pytest.approx([1.0 / 3.0, 2.0 / 3.0],
                                               abs=1e-12)
        # Rank-one transmission example: B factors, routing is the identity.
        b_only = bb.BilinearModel(
            A=A, A_S=A_S,
            B=np.array([[1.0, 3.0], [2.0, 6.0]]),
            P=np.eye(2),
            Lambda=np.array([1.0, 1.0]))
        rank_b = bb.classify_rank(b_only)
        assert rank_b.tag is RankTag.CASE_B
        assert np.outer(rank_b.alpha_m, rank_b.beta) == pytest.approx(
            b_only.B, abs=1e-12)
        assert rank_b.alpha_m == pytest.approx([1.0 / 3.0, 2.0 / 3.0],
                                               abs=1e-12)

        rng = np.random.default_rng(1007)
        for trial in range(100):
            m, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            if trial % 2 == 0:
                model = random_model(rng, m, n, "casep")
                rank = bb.classify_rank(model)
                assert rank.tag in (RankTag.CASE_P, RankTag.BOTH)
                rebuilt = np.tile(rank.alpha_n[:, None], (1, m))
                assert np.max(np.abs(rebuilt - model.P)) <= 1e-10
            else:
                model = random_model(rng, m, n, "caseb")
                rank = bb.classify_rank(model)
                assert rank.tag in (RankTag.CASE_B, RankTag.BOTH)
                rebuilt = np.outer(rank.alpha_m, rank.beta)
                assert np.max(np.abs(rebuilt - model.B)) <= 1e-10


# --------------------------------------------------------------- criterion 9

def test_acceptance_feedback_scan(gate):
    """Feedback root counts match a 1e6-point dense grid; uniqueness holds."""
    with gate("feedback scan", 60.0):
        # Sweep the recycling strength of the two-group model whose scalar
        # law can be written in closed form and sampled densely.
        b = np.array([0.05, 5.0])
        lam = np.array([16.0, 0.02])
        mu = np.array([1.0, 1.0])
        saw_multiple = False
        for c2 in np.linspace(0.0, 0.9, 13):
            model = backward_model(float(c2))
            law, _ = bb.feedback_analysis(model, bb.classify_rank(model))
            assert not law.exhausted
            c_vec = np.array([0.0, float(c2)])
            ks = np.geomspace(1e-8, law.k_max, 1_000_000)
            H = ((b * (lam[None, :] + np.outer(ks, c_vec))) /
                 (np.outer(ks, b) + mu)).sum(axis=1)
            assert oracle_root_count(H - 1.0) == len(law.roots)
            saw_multiple = saw_multiple or len(law.roots) >= 2
        assert saw_multiple

        # Models satisfying the sufficient uniqueness condition always
        # report exactly one endemic root above threshold.
        rng = np.random.default_rng(1008)
        for _ in range(10):
            m, n = int(rng.integers(2, 4)), int(rng.integers(1, 4))
            base = diagonal_As(random_model(rng, m, n, "casep"), rng)
            base = with_r0(base, float(rng.uniform(1.2, 3.0)))
            rank = bb.classify_rank(base)
            R = bb.replacement_vector(base, rank)
            D_w = bb.dwell_times(base, rank)
            C = feedback_C(base, rng)
            cap = 0.9 * float(np.min(-np.diag(base.A_S)) / np.max(R)) \
                / float(np.max(C @ D_w))
            model = bb.BilinearModel(A=base.A, A_S=base.A_S, B=base.B,
                                     P=base.P, Lambda=base.Lambda,
                                     C=C * min(cap, 1.0))
            law, report = bb.feedback_analysis(model, bb.classify_rank(model))
            assert law.uniqueness_condition
            assert len(law.roots) == 1
            assert not law.backward_bifurcation
            (point,) = report.endemic_points
            assert point.residual <= 1e-8
