"""Disease-free and endemic equilibria, scalar amplitude laws, and Jacobians.

The disease-free equilibrium is S0 = (-A_S)^{-1} Lambda. Above threshold
(reproduction number R0 > 1) endemic equilibria are located two ways:

* rank-one transmission: the infection profile lies on an explicit ray and
  its amplitude k solves a scalar equation H(k) = 1, with H strictly
  decreasing from H(0) = R0, so the root is unique and bracketable;
* general transmission: the susceptible profile is pinned by the spectral
  condition rho(K~(S)) = 1, solved by a damped fixed-point iteration on S
  nested inside a bracketed scalar root find on the ray amplitude.

With recovery feedback C != 0 (shared-routing models) the scalar law gains a
feedback term, H_C(k), which can cross one several times; feedback_analysis
scans for all roots and flags saddle-node and backward-bifurcation evidence.

The determinant identity det J_EE = -det J_DFE = mu_S det(A) (1 - R0) is
checked for single-susceptible-class rank-one models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import ngm, spectral
from .errors import (BelowThreshold, NoBracket, NoConvergence, NotApplicable,
                     NotCaseP, NotRankOne)
from .model import BilinearModel, RankClass, RankTag, StateVector

THRESHOLD_BAND = 1e-9
NORMALIZATION_TOL = 1e-10
RESIDUAL_TOL = 1e-8
SPECTRAL_RADIUS_TOL = 1e-8
MAX_DOUBLINGS = 60
EXTRA_DOUBLINGS = 4
SCAN_GRID_POINTS = 2000
SCAN_K_MIN = 1e-8
BISECT_XTOL = 1e-12
DOUBLE_ROOT_VALUE_TOL = 1e-8
DOUBLE_ROOT_DERIV_TOL = 1e-6
FIXED_POINT_DAMPING = 0.5
FIXED_POINT_TOL = 1e-13
FIXED_POINT_MAXITER = 2000


def dfe(model: BilinearModel) -> np.ndarray:
    """Disease-free susceptible profile (-A_S)^{-1} Lambda."""
    return spectral.m_inverse(model.A_S) @ model.Lambda


def reproduction_number(model: BilinearModel) -> float:
    """Spectral radius of the next-generation operator at the DFE."""
    return spectral.perron(ngm.loop_ngm(model, dfe(model))).rho


def jacobian(model: BilinearModel, state: StateVector) -> np.ndarray:
    """Analytic Jacobian of the vector field at (S, I), blocks in (S, I) order."""
    S, I = state.S, state.I
    BI = model.B @ I
    F = ngm.force_of_infection(model, S)
    top = np.hstack([model.A_S - np.diag(BI), -(S[:, None] * model.B) + model.C])
    bot = np.hstack([model.P @ np.diag(BI), F + model.A])
    return np.vstack([top, bot])


def residual_inf(model: BilinearModel, S: np.ndarray, I: np.ndarray) -> float:
    """Sup-norm of the vector field at (S, I)."""
    x = np.concatenate([np.asarray(S, float).ravel(), np.asarray(I, float).ravel()])
    return float(np.max(np.abs(model.rhs(x))))


@dataclass(frozen=True)
class EndemicPoint:
    """One endemic equilibrium with its ray amplitude and residual."""

    S_bar: np.ndarray
    I_bar: np.ndarray
    k: float
    residual: float
    saddle_node: bool = False

    def to_dict(self) -> dict:
        return {
            "S_bar": self.S_bar.tolist(),
            "I_bar": self.I_bar.tolist(),
            "k": self.k,
            "residual": self.residual,
            "saddle_node": self.saddle_node,
        }


@dataclass
class EquilibriumReport:
    """Threshold summary plus all endemic points a solver found."""

    S0: np.ndarray
    R0: float
    endemic_points: list[EndemicPoint] = field(default_factory=list)
    threshold: bool = False
    solver: str = ""
    notes: list[str] = field(default_factory=list)
    det_J_dfe: float | None = None
    det_J_ee: float | None = None

    def to_dict(self) -> dict:
        return {
            "S0": self.S0.tolist(),
            "R0": self.R0,
            "endemic_points": [p.to_dict() for p in self.endemic_points],
            "threshold": self.threshold,
            "solver": self.solver,
            "notes": list(self.notes),
            "det_J_dfe": self.det_J_dfe,
            "det_J_ee": self.det_J_ee,
        }


@dataclass
class ScalarLaw:
    """A scalar amplitude law k -> H(k) with its roots and diagnostics."""

    kind: str
    R0: float
    H: Callable[[float], float]
    H_prime: Callable[[float], float]
    roots: list[float] = field(default_factory=list)
    deriv_at_roots: list[float] = field(default_factory=list)
    saddle_flags: list[bool] = field(default_factory=list)
    k_max: float = 0.0
    exhausted: bool = False
    uniqueness_condition: bool | None = None
    backward_bifurcation: bool = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "R0": self.R0,
            "roots": list(self.roots),
            "deriv_at_roots": list(self.deriv_at_roots),
            "saddle_flags": list(self.saddle_flags),
            "k_max": self.k_max,
            "exhausted": self.exhausted,
            "uniqueness_condition": self.uniqueness_condition,
            "backward_bifurcation": self.backward_bifurcation,
        }


def _require_no_feedback(model: BilinearModel, what: str):
    if np.any(model.C != 0.0):
        raise NotApplicable(f"{what} requires C = 0; use feedback_analysis instead")


def _threshold_report(S0, R0, solver, note) -> EquilibriumReport:
    rep = EquilibriumReport(S0=S0, R0=R0, solver=solver)
    if abs(R0 - 1.0) <= THRESHOLD_BAND:
        rep.threshold = True
        rep.notes.append("R0 within the threshold band of 1; no endemic point reported")
    else:
        rep.notes.append(note)
    return rep


def _bracket_doubling(H: Callable[[float], float], limit_hint: str):
    """Smallest k = 2^j with H(k) < 1, by doubling from 1."""
    k = 1.0
    for _ in range(MAX_DOUBLINGS):
        if H(k) < 1.0:
            return k
        k *= 2.0
    raise NoBracket(f"H stayed >= 1 out to k = {k:.3e}; {limit_hint}")


def endemic_rank_one(model: BilinearModel, rank: RankClass) -> EquilibriumReport:
    """Endemic equilibrium of a rank-one model without feedback.

    The amplitude k solves H(k) = R . (k Diag(a) - A_S)^{-1} Lambda = 1 with
    a = R (shared routing) or a = alpha_m (rank-one B); H decreases strictly
    from H(0) = R0 to 0, so for R0 > 1 the root is unique. The equilibrium is
    reconstructed from k in closed form and its full vector-field residual is
    verified. Below threshold the report carries no endemic point.
    """
    _require_no_feedback(model, "endemic_rank_one")
    if rank.tag is RankTag.GENERAL:
        raise NotRankOne("endemic_rank_one requires rank-one transmission structure")
    S0 = dfe(model)
    R = ngm.replacement_vector(model, rank)
    R0 = float(S0 @ R)
    if R0 <= 1.0 or abs(R0 - 1.0) <= THRESHOLD_BAND:
        return _threshold_report(S0, R0, "rank_one",
                                 "R0 <= 1: no positive endemic equilibrium")

    Ainv = spectral.m_inverse(model.A)
    shared_routing = rank.alpha_n is not None
    a = R if shared_routing else rank.alpha_m

    def H(k: float) -> float:
        return float(R @ np.linalg.solve(k * np.diag(a) - model.A_S, model.Lambda))

    k_hi = _bracket_doubling(H, "model admits no finite endemic amplitude")
    k_star = brentq(lambda k: H(k) - 1.0, 0.0, k_hi, xtol=BISECT_XTOL, rtol=1e-15)

    S_bar = np.linalg.solve(k_star * np.diag(a) - model.A_S, model.Lambda)
    if shared_routing:
        I_bar = k_star * (Ainv @ rank.alpha_n)
    else:
        I_bar = k_star * (Ainv @ (model.P @ (S_bar * rank.alpha_m)))

    norm_err = abs(float(S_bar @ R) - 1.0)
    assert norm_err <= NORMALIZATION_TOL, \
        f"endemic normalization S_bar . R = 1 violated by {norm_err:.3e}"
    res = residual_inf(model, S_bar, I_bar)
    scale = 1.0 + float(np.max(np.abs(np.concatenate([S_bar, I_bar]))))
    if res > RESIDUAL_TOL * scale:
        raise NoConvergence(f"endemic reconstruction residual {res:.3e} too large")

    rep = EquilibriumReport(S0=S0, R0=R0, solver="rank_one")
    rep.endemic_points.append(EndemicPoint(S_bar=S_bar, I_bar=I_bar,
                                           k=float(k_star), residual=res))
    return rep


def _perron_direction(M: np.ndarray) -> np.ndarray:
    """Right Perron vector of a nonnegative matrix, normalized to unit sum."""
    return spectral.perron(M).w_right


def _newton_polish(model: BilinearModel, S: np.ndarray, I: np.ndarray,
                   iters: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """A few damped Newton steps on the full equilibrium system."""
    x = np.concatenate([S, I])
    m = model.m
    for _ in range(iters):
        r = model.rhs(x)
        if np.max(np.abs(r)) < 1e-13 * (1.0 + np.max(np.abs(x))):
            break
        J = jacobian(model, StateVector(x[:m], x[m:]))
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _ in range(40):
            xn = x - t * step
            if np.all(xn > 0) and np.max(np.abs(model.rhs(xn))) < np.max(np.abs(r)):
                break
            t *= 0.5
        else:
            break
        x = x - t * step
    return x[:m], x[m:]


def endemic_spectral(model: BilinearModel,
                     damping: float = FIXED_POINT_DAMPING) -> EquilibriumReport:
    """Endemic equilibrium via the spectral threshold condition (any rank).

    An equilibrium with I != 0 forces rho(K~(S)) = 1, and I then lies on the
    ray k (-A)^{-1} P Diag(S) v(S) spanned by the Perron direction v(S) of
    the m x m form K~(S). At such a point B I = k v(S), so for a fixed
    amplitude k the susceptible block must satisfy

        S = (k Diag(v(S)) - A_S)^{-1} Lambda,

    which is solved by damped fixed-point iteration; the outer scalar
    equation rho(K~(S(k))) = 1 is strictly bracketed (value R0 at k = 0,
    below one for large k) and handed to a guarded scalar root finder. A few
    Newton steps on the full system then tighten the residual.

    Requires C = 0 and an irreducible circulation matrix B (-A)^{-1} P.
    """
    _require_no_feedback(model, "endemic_spectral")
    G = ngm.loop_gain(model)
    S0 = dfe(model)
    R0 = spectral.perron(G * S0[None, :]).rho
    if R0 <= 1.0 or abs(R0 - 1.0) <= THRESHOLD_BAND:
        return _threshold_report(S0, R0, "spectral",
                                 "R0 <= 1: no positive endemic equilibrium")
    if not spectral.is_irreducible(G):
        raise NotApplicable("circulation matrix B(-A)^{-1}P is reducible")

    def S_of_k(k: float) -> np.ndarray:
        S = S0.copy()
        d = damping
        prev_gap = np.inf
        for _ in range(FIXED_POINT_MAXITER):
            v = _perron_direction(G * S[None, :])
            target = np.linalg.solve(k * np.diag(v) - model.A_S, model.Lambda)
            gap = float(np.max(np.abs(target - S)))
            if gap < FIXED_POINT_TOL * (1.0 + float(np.max(np.abs(S)))):
                return target
            if gap > prev_gap:
                d = max(0.05, d * 0.5)  # oscillating; damp harder
            prev_gap = gap
            S = (1.0 - d) * S + d * target
        raise NoConvergence(
            f"susceptible fixed point stalled at gap {prev_gap:.3e} for k={k:.3e}"
        )

    def phi(k: float) -> float:
        return spectral.perron(ngm.loop_ngm(model, S_of_k(k), gain=G)).rho - 1.0

    k_hi = 1.0
    for _ in range(MAX_DOUBLINGS):
        if phi(k_hi) < 0.0:
            break
        k_hi *= 2.0
    else:
        raise NoBracket(f"spectral radius stayed >= 1 out to k = {k_hi:.3e}")
    k_star = brentq(phi, 0.0, k_hi, xtol=BISECT_XTOL, rtol=1e-15)

    S_bar = S_of_k(k_star)
    v = _perron_direction(G * S_bar[None, :])
    Ainv = spectral.m_inverse(model.A)
    I_bar = k_star * (Ainv @ (model.P @ (S_bar * v)))
    S_bar, I_bar = _newton_polish(model, S_bar, I_bar)

    rho_at = spectral.perron(ngm.loop_ngm(model, S_bar, gain=G)).rho
    if abs(rho_at - 1.0) > SPECTRAL_RADIUS_TOL:
        raise NoConvergence(f"threshold condition violated: rho = {rho_at:.12f}")
    res = residual_inf(model, S_bar, I_bar)
    scale = 1.0 + float(np.max(np.abs(np.concatenate([S_bar, I_bar]))))
    if res > RESIDUAL_TOL * scale:
        raise NoConvergence(f"endemic residual {res:.3e} exceeds tolerance")

    rep = EquilibriumReport(S0=S0, R0=R0, solver="spectral")
    k_report = float(S_bar @ (model.B @ I_bar))  # bilinear throughput amplitude
    rep.endemic_points.append(EndemicPoint(S_bar=S_bar, I_bar=I_bar,
                                           k=k_report, residual=res))
    return rep


@dataclass(frozen=True)
class DeterminantLaw:
    """Signed-determinant identity at the two equilibria (m = 1, rank one)."""

    det_J_dfe: float
    det_J_ee: float
    closed_form_dfe: float
    closed_form_ee: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "det_J_dfe": self.det_J_dfe,
            "det_J_ee": self.det_J_ee,
            "closed_form_dfe": self.closed_form_dfe,
            "closed_form_ee": self.closed_form_ee,
            "holds": self.holds,
        }


def determinant_law(model: BilinearModel, rank: RankClass,
                    report: EquilibriumReport | None = None,
                    rel_tol: float = RESIDUAL_TOL) -> DeterminantLaw:
    """det J_EE = -det J_DFE = mu_S det(A) (1 - R0) for m = 1 rank-one models.

    mu_S is the single susceptible outflow rate -A_S[0, 0]. Requires R0 > 1
    so both equilibria exist; the endemic point is taken from `report` or
    computed on the fly.
    """
    if model.m != 1:
        raise NotApplicable("determinant law requires a single susceptible class")
    if rank.tag is RankTag.GENERAL:
        raise NotRankOne("determinant law requires rank-one transmission")
    _require_no_feedback(model, "determinant_law")
    if report is None or not report.endemic_points:
        report = endemic_rank_one(model, rank)
    if not report.endemic_points:
        raise BelowThreshold("determinant law needs an endemic equilibrium (R0 > 1)")

    S0, R0 = report.S0, report.R0
    pt = report.endemic_points[0]
    J_dfe = jacobian(model, StateVector(S0, np.zeros(model.n)))
    J_ee = jacobian(model, StateVector(pt.S_bar, pt.I_bar))
    det_dfe = float(np.linalg.det(J_dfe))
    det_ee = float(np.linalg.det(J_ee))
    mu = -float(model.A_S[0, 0])
    detA = float(np.linalg.det(model.A))
    cf_dfe = -mu * detA * (1.0 - R0)
    cf_ee = mu * detA * (1.0 - R0)
    scale = max(1.0, abs(det_dfe), abs(det_ee))
    holds = (abs(det_dfe + det_ee) <= rel_tol * scale
             and abs(det_dfe - cf_dfe) <= rel_tol * scale
             and abs(det_ee - cf_ee) <= rel_tol * scale)
    return DeterminantLaw(det_J_dfe=det_dfe, det_J_ee=det_ee,
                          closed_form_dfe=cf_dfe, closed_form_ee=cf_ee,
                          holds=holds)


def feedback_analysis(model: BilinearModel, rank: RankClass,
                      grid_points: int = SCAN_GRID_POINTS
                      ) -> tuple[ScalarLaw, EquilibriumReport]:
    """All endemic equilibria of a shared-routing model with recovery feedback.

    The DFE, replacement vector, reproduction number, and dwell profile are
    unchanged by C. Every endemic point has I = k D_w with amplitude k
    solving

        H_C(k) = R . (k Diag(R) - A_S)^{-1} (Lambda + k C D_w) = 1,

    no longer monotone in k, so crossings are located by a sign scan over a
    log-spaced grid (bisection-refined) plus a tangency sniff for double
    roots. Multiple roots with R0 < 1 are the signature of a backward
    bifurcation. A sufficient condition for uniqueness,
    max(C D_w) < min(mu_S) / max(R), is evaluated and reported.
    """
    if rank.alpha_n is None:
        raise NotCaseP("feedback analysis requires a shared routing column")
    S0 = dfe(model)
    R = ngm.replacement_vector(model, rank)
    R0 = float(S0 @ R)
    D_w = ngm.dwell_times(model, rank)
    CD = model.C @ D_w
    DR = np.diag(R)

    def H(k: float) -> float:
        M = np.linalg.inv(k * DR - model.A_S)
        return float(R @ (M @ (model.Lambda + k * CD)))

    def H_prime(k: float) -> float:
        M = np.linalg.inv(k * DR - model.A_S)
        inner = M @ (model.Lambda + k * CD)
        return float(R @ (-M @ (DR @ inner) + M @ CD))

    # Doubling policy for the grid ceiling, with a safety margin of extra
    # doublings because H_C may dip below one and return.
    k_max = 1.0
    doublings = 0
    while H(k_max) >= 1.0 and doublings < MAX_DOUBLINGS:
        k_max *= 2.0
        doublings += 1
    exhausted = doublings >= MAX_DOUBLINGS and H(k_max) >= 1.0
    if not exhausted:
        k_max *= 2.0 ** EXTRA_DOUBLINGS

    grid = np.geomspace(SCAN_K_MIN, k_max, grid_points)
    vals = np.array([H(k) - 1.0 for k in grid])

    roots: list[float] = []
    flags: list[bool] = []
    for i in range(grid_points - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a)); flags.append(False)
        elif fa * fb < 0.0:
            r = brentq(lambda k: H(k) - 1.0, a, b, xtol=BISECT_XTOL, rtol=1e-15)
            roots.append(float(r)); flags.append(False)
        elif (abs(fa) < DOUBLE_ROOT_VALUE_TOL
              and abs(H_prime(a)) < DOUBLE_ROOT_DERIV_TOL):
            roots.append(float(a)); flags.append(True)
    if vals[-1] == 0.0:
        roots.append(float(grid[-1])); flags.append(False)

    # Merge near-duplicates from adjacent intervals.
    merged: list[float] = []
    merged_flags: list[bool] = []
    for r, fl in sorted(zip(roots, flags)):
        if merged and abs(r - merged[-1]) <= 1e-9 * max(1.0, merged[-1]):
            merged_flags[-1] = merged_flags[-1] or fl
            continue
        merged.append(r)
        merged_flags.append(fl)

    mu = -np.diag(model.A_S)
    unique_ok = bool(np.max(CD) < np.min(mu) / np.max(R)) if np.max(R) > 0 else True

    law = ScalarLaw(kind="feedback_amplitude", R0=R0, H=H, H_prime=H_prime,
                    roots=merged, deriv_at_roots=[H_prime(r) for r in merged],
                    saddle_flags=merged_flags, k_max=float(k_max),
                    exhausted=exhausted, uniqueness_condition=unique_ok,
                    backward_bifurcation=bool(R0 < 1.0 and merged))

    rep = EquilibriumReport(S0=S0, R0=R0, solver="feedback")
    if exhausted:
        rep.notes.append(
            "grid ceiling exhausted: H_C stayed >= 1, roots beyond k_max not found"
        )
    for r, fl in zip(merged, merged_flags):
        I_bar = r * D_w
        S_bar = np.linalg.solve(r * DR - model.A_S, model.Lambda + model.C @ I_bar)
        if np.any(S_bar < 0) or np.any(I_bar < 0):
            rep.notes.append(f"root k={r:.6g} produced a sign-violating point; skipped")
            continue
        res = residual_inf(model, S_bar, I_bar)
        rep.endemic_points.append(
            EndemicPoint(S_bar=S_bar, I_bar=I_bar, k=float(r),
                         residual=res, saddle_node=fl)
        )
    return law, rep
