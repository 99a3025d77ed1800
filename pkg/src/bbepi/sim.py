"""Fixed-step and embedded adaptive integration with positivity clamping.

The workhorse is classic fourth-order Runge-Kutta on a fixed grid, which
preserves linear conserved quantities to roundoff and is plenty for the
small, smooth systems in scope. An embedded Cash-Karp 5(4) pair is available
when adaptive stepping is wanted. States are clamped to the nonnegative
orthant: excursions within the clamp tolerance are zeroed, anything worse
aborts the run.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import PositivityViolation, StepUnderflow

DEFAULT_STEP = 0.01
DEFAULT_HORIZON = 100.0
CLAMP_TOL = 1e-12
MIN_ADAPTIVE_STEP = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    """Knobs for integrate / integrate_batch.

    settle_tol, when set, stops the run early once the vector field norm
    falls below settle_tol * (1 + |x|): useful for convergence studies where
    the tail adds nothing.
    """

    step: float = DEFAULT_STEP
    adaptive: bool = False
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    settle_tol: float | None = None
    clamp_tol: float = CLAMP_TOL


@dataclass
class Trajectory:
    """Sampled solution: times (T,), states (T, d)."""

    times: np.ndarray
    states: np.ndarray
    terminated_early: bool = False
    reason: str | None = None

    def to_csv(self, names: list[str]) -> str:
        if len(names) != self.states.shape[1]:
            raise ValueError("one column name per state coordinate required")
        buf = io.StringIO()
        buf.write("t," + ",".join(names) + "\n")
        for t, row in zip(self.times, self.states):
            buf.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


@dataclass
class BatchTrajectory:
    """Shared-clock batch of solutions: times (T,), states (T, N, d)."""

    times: np.ndarray
    states: np.ndarray
    terminated_early: bool = False
    reason: str | None = None

    def single(self, i: int) -> Trajectory:
        return Trajectory(times=self.times, states=self.states[:, i, :],
                          terminated_early=self.terminated_early, reason=self.reason)


def _clamp(x: np.ndarray, tol: float) -> np.ndarray:
    worst = float(np.min(x)) if x.size else 0.0
    if worst >= 0.0:
        return x
    scale = max(1.0, float(np.max(np.abs(x))))
    if worst < -tol * scale:
        raise PositivityViolation(
            f"state left the nonnegative orthant by {-worst:.3e}"
        )
    return np.maximum(x, 0.0)


def _rk4_step(rhs, x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Cash-Karp embedded 5(4) tableau.
_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771)
_CK_B4 = (2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4)


def _ck_step(rhs, x, h):
    ks = [rhs(x)]
    for row in _CK_A[1:]:
        xi = x + h * sum(a * k for a, k in zip(row, ks))
        ks.append(rhs(xi))
    x5 = x + h * sum(b * k for b, k in zip(_CK_B5, ks))
    x4 = x + h * sum(b * k for b, k in zip(_CK_B4, ks))
    return x5, x5 - x4


def _settled(rhs, x, tol):
    f = rhs(x)
    return float(np.max(np.abs(f))) <= tol * (1.0 + float(np.max(np.abs(x))))


def integrate(rhs, x0, horizon: float,
              config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate x' = rhs(x) from x0 over [0, horizon].

    Fixed-step RK4 by default; Cash-Karp 5(4) with proportional step control
    when config.adaptive is set. Every accepted state is clamped to the
    nonnegative orthant within config.clamp_tol.

    Raises
    ------
    PositivityViolation
        If a step leaves the orthant beyond the clamp tolerance.
    StepUnderflow
        If adaptive stepping cannot meet tolerance above the step floor.
    """
    cfg = config or IntegratorConfig()
    x = np.array(x0, dtype=float).ravel()
    if cfg.adaptive:
        return _integrate_adaptive(rhs, x, horizon, cfg)
    n_steps = max(1, int(round(horizon / cfg.step)))
    times = [0.0]
    states = [x.copy()]
    t = 0.0
    early = False
    reason = None
    for i in range(n_steps):
        x = _clamp(_rk4_step(rhs, x, cfg.step), cfg.clamp_tol)
        t = (i + 1) * cfg.step
        times.append(t)
        states.append(x.copy())
        if cfg.settle_tol is not None and _settled(rhs, x, cfg.settle_tol):
            early = True
            reason = "settled"
            break
    return Trajectory(times=np.array(times), states=np.array(states),
                      terminated_early=early, reason=reason)


def _integrate_adaptive(rhs, x, horizon, cfg) -> Trajectory:
    t = 0.0
    h = cfg.step
    times = [0.0]
    states = [x.copy()]
    early = False
    reason = None
    while t < horizon - 1e-15:
        h = min(h, horizon - t)
        x_new, err = _ck_step(rhs, x, h)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        ratio = float(np.max(np.abs(err) / scale))
        if ratio <= 1.0:
            x = _clamp(x_new, cfg.clamp_tol)
            t += h
            times.append(t)
            states.append(x.copy())
            if cfg.settle_tol is not None and _settled(rhs, x, cfg.settle_tol):
                early = True
                reason = "settled"
                break
            h *= min(5.0, max(0.2, 0.9 * ratio ** -0.2)) if ratio > 0 else 5.0
        else:
            h *= max(0.2, 0.9 * ratio ** -0.25)
            if h < MIN_ADAPTIVE_STEP:
                raise StepUnderflow(f"adaptive step fell below {MIN_ADAPTIVE_STEP:g}")
    return Trajectory(times=np.array(times), states=np.array(states),
                      terminated_early=early, reason=reason)


def integrate_batch(rhs, X0, horizon: float,
                    config: IntegratorConfig | None = None) -> BatchTrajectory:
    """Fixed-step RK4 on a stack of initial conditions (N, d), shared clock.

    rhs must accept (..., d) arrays. With settle_tol set, the run stops once
    every member of the batch has settled.
    """
    cfg = config or IntegratorConfig()
    X = np.array(X0, dtype=float)
    if X.ndim != 2:
        raise ValueError("X0 must have shape (N, d)")
    n_steps = max(1, int(round(horizon / cfg.step)))
    times = [0.0]
    states = [X.copy()]
    early = False
    reason = None
    for i in range(n_steps):
        X = _clamp(_rk4_step(rhs, X, cfg.step), cfg.clamp_tol)
        times.append((i + 1) * cfg.step)
        states.append(X.copy())
        if cfg.settle_tol is not None:
            F = rhs(X)
            lhs = np.max(np.abs(F), axis=-1)
            rhs_scale = 1.0 + np.max(np.abs(X), axis=-1)
            if np.all(lhs <= cfg.settle_tol * rhs_scale):
                early = True
                reason = "settled"
                break
    return BatchTrajectory(times=np.array(times), states=np.array(states),
                           terminated_early=early, reason=reason)


def sample_initial_conditions(rng: np.random.Generator, n: int,
                              reference: np.ndarray,
                              low: float = 1e-3, high: float = 10.0,
                              floor: float = 1e-3) -> np.ndarray:
    """Log-uniform positive starts around a reference profile.

    Each coordinate is reference_j (or 1 where the reference vanishes)
    times a log-uniform factor in [low, high], floored at `floor` so no
    start sits on a coordinate face.
    """
    ref = np.asarray(reference, dtype=float).ravel()
    ref = np.where(ref > 0.0, ref, 1.0)
    u = rng.uniform(np.log(low), np.log(high), size=(n, ref.size))
    return np.maximum(np.exp(u) * ref, floor)


def empirical_gas(rhs, target: np.ndarray, n_starts: int = 20,
                  horizon: float = DEFAULT_HORIZON, seed: int = 0,
                  config: IntegratorConfig | None = None,
                  rel_tol: float = 1e-3) -> float:
    """Fraction of random positive starts that reach `target` by the horizon.

    Starts are drawn by sample_initial_conditions around the target; an
    endpoint counts as converged when its sup-norm distance to the target is
    within rel_tol * max(1, |target|).
    """
    target = np.asarray(target, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    X0 = sample_initial_conditions(rng, n_starts, target)
    cfg = config or IntegratorConfig(settle_tol=1e-10)
    batch = integrate_batch(rhs, X0, horizon, cfg)
    final = batch.states[-1]
    dist = np.max(np.abs(final - target[None, :]), axis=-1)
    return float(np.mean(dist <= rel_tol * max(1.0, float(np.max(np.abs(target))))))
