"""Delayed ACTH-cortisol feedback model: parameters, integration, limit cycle.

The model couples ACTH (``x``) and cortisol (``y``) through lagged Hill
nonlinearities,

    dx/dtau = -c1*x + h*c2 / (1 + y(tau - t1)**m1)
    dy/dtau = -y + c3 * x(tau - t2)**m2 / (1 + x(tau - t2)**m2),

integrated by the method of steps with classical RK4 and cubic-Hermite
dense output.  Lagged values are read from the stored dense solution, so
a single fixed step size controls the whole computation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, NoLimitCycleError, NumericError

__all__ = [
    "DimensionalParams",
    "NondimParams",
    "Trajectory",
    "LimitCycle",
    "default_params",
    "DEFAULT_INITIAL_STATE",
    "nondimensionalize",
    "rhs",
    "integrate",
    "integrate_batch",
    "find_fixed_point",
    "find_limit_cycle",
]

#: Conventional starting state for simulations of this model family.
DEFAULT_INITIAL_STATE = (0.8858, 1.7461)


@dataclass(frozen=True)
class DimensionalParams:
    """Dimensional model constants (rates per minute, concentrations)."""

    e_a: float = 0.04    # ACTH elimination rate
    e_c: float = 0.01    # cortisol elimination rate
    m1: int = 4          # Hill exponent of the cortisol feedback
    m2: int = 4          # Hill exponent of the ACTH drive
    a: float = 21.0      # half-maximum constant for ACTH
    c: float = 6.11      # half-maximum constant for cortisol
    h: float = 7.66      # CRH stimulation rate
    beta: float = 1.0    # cortisol production rate
    tau1: float = 15.0   # feedback delay (min)
    tau2: float = 15.0   # stimulation delay (min)

    def __post_init__(self):
        for name in ("e_a", "e_c", "a", "c", "h", "beta", "tau1", "tau2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"DimensionalParams.{name} must be positive")
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("Hill exponents m1, m2 must be >= 1")


@dataclass(frozen=True)
class NondimParams:
    """Nondimensional constants of the rescaled system."""

    c1: float
    c2: float
    c3: float
    h: float
    m1: int
    m2: int
    t1: float
    t2: float

    def __post_init__(self):
        for name in ("c1", "c2", "c3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"NondimParams.{name} must be positive")
        # h = 0 (no drive) and zero delays are valid degenerate limits
        if self.h < 0:
            raise ValueError("NondimParams.h must be nonnegative")
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("delays t1, t2 must be nonnegative")
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("Hill exponents m1, m2 must be >= 1")

    def with_h(self, h: float) -> "NondimParams":
        return NondimParams(self.c1, self.c2, self.c3, h, self.m1, self.m2, self.t1, self.t2)

    @property
    def max_delay(self) -> float:
        return max(self.t1, self.t2)


def default_params() -> NondimParams:
    """Nondimensional constants for the standard parameter set."""
    return nondimensionalize(DimensionalParams())


def nondimensionalize(p: DimensionalParams) -> NondimParams:
    """Rescale hormone levels by their half-maximum constants and time by 1/e_c."""
    return NondimParams(
        c1=p.e_a / p.e_c,
        c2=1.0 / (p.a * p.e_c),
        c3=p.beta / (p.c * p.e_c),
        h=p.h,
        m1=p.m1,
        m2=p.m2,
        t1=p.e_c * p.tau1,
        t2=p.e_c * p.tau2,
    )


def rhs(current, x_lag2: float, y_lag1: float, p: NondimParams):
    """Right-hand side of the nondimensional system.

    ``y_lag1`` is cortisol at ``tau - t1`` and ``x_lag2`` is ACTH at
    ``tau - t2``.  Hill exponents are integers, so negative lagged values
    (which occur for nonphysical initial boxes) are well defined.
    """
    x, y = float(current[0]), float(current[1])
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(x_lag2) and math.isfinite(y_lag1)):
        raise ValueError("rhs requires finite state and lagged values")
    try:
        dx = -p.c1 * x + p.h * p.c2 / (1.0 + y_lag1**p.m1)
        dy = -y + p.c3 * x_lag2**p.m2 / (1.0 + x_lag2**p.m2)
    except OverflowError as exc:
        raise ValueError(f"overflow in Hill powers at lagged values "
                         f"({x_lag2!r}, {y_lag1!r})") from exc
    return dx, dy


# ---------------------------------------------------------------------------
# dense trajectories


def _hermite_weights(theta):
    h00 = (1.0 + 2.0 * theta) * (1.0 - theta) ** 2
    h10 = theta * (1.0 - theta) ** 2
    h01 = theta * theta * (3.0 - 2.0 * theta)
    h11 = theta * theta * (theta - 1.0)
    return h00, h10, h01, h11


class Trajectory:
    """Dense, interpolable solution on a uniform grid.

    Stores states and derivatives at ``t0 + k*step`` and evaluates
    anywhere in ``[t0, t_end]`` by cubic Hermite interpolation (C^1).
    Times before ``t0`` are delegated to the pre-history, so lagged
    evaluation is defined on ``[t0 - max_delay, t_end]``.
    """

    def __init__(self, t0: float, step: float, states: np.ndarray,
                 derivs: np.ndarray, history: Callable[[float], np.ndarray]):
        states = np.asarray(states, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        if states.shape != derivs.shape or states.ndim != 2 or states.shape[1] != 2:
            raise ValueError("states and derivs must both have shape (n, 2)")
        self.t0 = float(t0)
        self.step = float(step)
        self.states = states
        self.derivs = derivs
        self.history = history

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.states) - 1) * self.step

    def eval(self, t):
        """State at time(s) ``t``; scalar in, shape (2,) out."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t_arr.size, 2))
        before = t_arr < self.t0
        if np.any(before):
            out[before] = np.array([self.history(ti) for ti in t_arr[before]])
        inside = ~before
        if np.any(inside):
            q = (t_arr[inside] - self.t0) / self.step
            k = np.clip(q.astype(int), 0, len(self.states) - 2)
            theta = np.clip(q - k, 0.0, 1.0)
            h00, h10, h01, h11 = _hermite_weights(theta[:, None])
            s = self.step
            out[inside] = (h00 * self.states[k] + h10 * s * self.derivs[k]
                           + h01 * self.states[k + 1] + h11 * s * self.derivs[k + 1])
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[0]
        return out.reshape(np.asarray(t).shape + (2,))

    def eval_deriv(self, t):
        """Time derivative of the interpolant for ``t >= t0``."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < self.t0 - 1e-12):
            raise ValueError("derivative is only stored for t >= t0")
        q = (np.clip(t_arr, self.t0, None) - self.t0) / self.step
        k = np.clip(q.astype(int), 0, len(self.states) - 2)
        theta = (q - k)[:, None]
        s = self.step
        d00 = (6.0 * theta * theta - 6.0 * theta) / s
        d10 = 3.0 * theta * theta - 4.0 * theta + 1.0
        d01 = -d00
        d11 = 3.0 * theta * theta - 2.0 * theta
        out = (d00 * self.states[k] + d10 * self.derivs[k]
               + d01 * self.states[k + 1] + d11 * self.derivs[k + 1])
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[0]
        return out.reshape(np.asarray(t).shape + (2,))

    def node_times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(len(self.states))

    def write_csv(self, path) -> None:
        """Dump solution nodes as rows ``tau,x,y,dx,dy``."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "x", "y", "dx", "dy"])
            for t, s, d in zip(self.node_times(), self.states, self.derivs):
                writer.writerow([repr(float(t)), repr(float(s[0])), repr(float(s[1])),
                                 repr(float(d[0])), repr(float(d[1]))])


def _as_history(history, t0: float):
    """Normalize the history argument to (initial_state, callable)."""
    if isinstance(history, Trajectory):
        return np.asarray(history.eval(t0), dtype=float), lambda t: history.eval(t)
    if callable(history):
        return np.asarray(history(t0), dtype=float), history
    const = np.asarray(history, dtype=float).reshape(2)
    return const.copy(), lambda t: const


def _validate_step(p: NondimParams, step: float) -> None:
    if step <= 0:
        raise ValueError("step must be positive")
    positive = [d for d in (p.t1, p.t2) if d > 0]
    if positive and step > min(positive) / 10.0 + 1e-15:
        raise ValueError(
            f"step {step} too large for delays {positive}; need step <= min(delay)/10"
        )


def integrate(p: NondimParams, history, t_end: float, step: float = 1e-3) -> Trajectory:
    """Integrate the model by the method of steps (fixed-step RK4).

    ``history`` may be a constant state ``(x0, y0)``, a callable of time,
    or a previous :class:`Trajectory` (the integration then continues
    from its final time).  Lagged values are read from the growing dense
    solution via cubic Hermite interpolation, and from ``history`` for
    times at or before the initial time.
    """
    _validate_step(p, step)
    t0 = history.t_end if isinstance(history, Trajectory) else 0.0
    if t_end <= t0:
        raise ValueError(f"t_end={t_end} must exceed the initial time {t0}")
    init, hist_fn = _as_history(history, t0)

    n = int(math.ceil((t_end - t0) / step - 1e-9))
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    fx = np.empty(n + 1)
    fy = np.empty(n + 1)
    xs[0], ys[0] = init

    c1, c3, m1, m2 = p.c1, p.c3, p.m1, p.m2
    hc2 = p.h * p.c2
    t1, t2 = p.t1, p.t2
    q1 = t1 / step  # delay measured in steps
    q2 = t2 / step

    def lag_pair(qx, qy, stage_x, stage_y):
        """Lagged (x(tau-t2), y(tau-t1)) at continuous step positions."""
        if t2 == 0.0:
            xl = stage_x
        elif qx <= 0.0:
            xl = hist_fn(t0 + qx * step)[0]
        else:
            k = int(qx)
            th = qx - k
            h00, h10, h01, h11 = _hermite_weights(th)
            xl = h00 * xs[k] + h10 * step * fx[k] + h01 * xs[k + 1] + h11 * step * fx[k + 1]
        if t1 == 0.0:
            yl = stage_y
        elif qy <= 0.0:
            yl = hist_fn(t0 + qy * step)[1]
        else:
            k = int(qy)
            th = qy - k
            h00, h10, h01, h11 = _hermite_weights(th)
            yl = h00 * ys[k] + h10 * step * fy[k] + h01 * ys[k + 1] + h11 * step * fy[k + 1]
        return xl, yl

    def f(x, y, xl, yl):
        return (-c1 * x + hc2 / (1.0 + yl**m1),
                -y + c3 * xl**m2 / (1.0 + xl**m2))

    try:
        xl, yl = lag_pair(-q2, -q1, xs[0], ys[0])
        fx[0], fy[0] = f(xs[0], ys[0], xl, yl)
        for i in range(n):
            x, y = xs[i], ys[i]
            k1x, k1y = fx[i], fy[i]
            xm = x + 0.5 * step * k1x
            ym = y + 0.5 * step * k1y
            xl, yl = lag_pair(i + 0.5 - q2, i + 0.5 - q1, xm, ym)
            k2x, k2y = f(xm, ym, xl, yl)
            xm2 = x + 0.5 * step * k2x
            ym2 = y + 0.5 * step * k2y
            if t1 == 0.0 or t2 == 0.0:
                xl, yl = lag_pair(i + 0.5 - q2, i + 0.5 - q1, xm2, ym2)
            k3x, k3y = f(xm2, ym2, xl, yl)
            xe = x + step * k3x
            ye = y + step * k3y
            xl, yl = lag_pair(i + 1.0 - q2, i + 1.0 - q1, xe, ye)
            k4x, k4y = f(xe, ye, xl, yl)
            xs[i + 1] = x + step * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
            ys[i + 1] = y + step * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
            if t1 == 0.0 or t2 == 0.0:
                xl, yl = lag_pair(i + 1.0 - q2, i + 1.0 - q1, xs[i + 1], ys[i + 1])
            fx[i + 1], fy[i + 1] = f(xs[i + 1], ys[i + 1], xl, yl)
            if not (math.isfinite(xs[i + 1]) and math.isfinite(ys[i + 1])):
                raise NumericError(
                    f"solution diverged at tau = {t0 + (i + 1) * step:.6f}"
                )
    except OverflowError as exc:
        raise NumericError(f"solution diverged (overflow) near tau = {t0 + i * step:.6f}") from exc

    return Trajectory(t0, step, np.column_stack([xs, ys]),
                      np.column_stack([fx, fy]), hist_fn)


def integrate_batch(p: NondimParams, inits: np.ndarray, t_end: float,
                    step: float = 1e-3, record_times: Sequence[float] = (),
                    strict: bool = True) -> np.ndarray:
    """Integrate many constant-history initial states simultaneously.

    Returns the states at ``record_times`` as an array of shape
    ``(len(record_times), n_points, 2)``.  Record times at or before 0
    return the initial states.  A rolling window of the dense solution is
    kept, just long enough for the lagged reads; with ``strict=False``
    rows that go non-finite are carried as NaN instead of raising, so the
    caller can drop and log them.
    """
    _validate_step(p, step)
    inits = np.asarray(inits, dtype=float)
    if inits.ndim != 2 or inits.shape[1] != 2:
        raise ValueError("inits must have shape (n_points, 2)")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    rec = np.asarray(sorted(float(t) for t in record_times))
    if rec.size and rec[-1] > t_end + 1e-12:
        raise ValueError("record_times must lie within [0, t_end]")

    B = inits.shape[0]
    n = int(math.ceil(t_end / step - 1e-9))
    nlag = max(int(math.ceil(p.max_delay / step)), 1)
    W = nlag + 4
    S = np.empty((W, B, 2))
    F = np.empty((W, B, 2))
    S[0] = inits

    c1, c3, m1, m2 = p.c1, p.c3, p.m1, p.m2
    hc2 = p.h * p.c2
    q1 = p.t1 / step
    q2 = p.t2 / step
    out = np.empty((rec.size, B, 2))
    rec_ptr = 0
    while rec_ptr < rec.size and rec[rec_ptr] <= 1e-12:
        out[rec_ptr] = inits
        rec_ptr += 1

    def ring(i):
        return i % W

    def lag_col(q, col, i_now, stage):
        """Lagged component ``col`` at continuous step position q."""
        if (p.t1 if col == 1 else p.t2) == 0.0:
            return stage[:, col]
        if q <= 0.0:
            return inits[:, col]
        k = int(q)
        th = q - k
        h00, h10, h01, h11 = _hermite_weights(th)
        a, b = ring(k), ring(k + 1)
        return (h00 * S[a, :, col] + h10 * step * F[a, :, col]
                + h01 * S[b, :, col] + h11 * step * F[b, :, col])

    def f(state, xl, yl):
        dx = -c1 * state[:, 0] + hc2 / (1.0 + yl**m1)
        dy = -state[:, 1] + c3 * xl**m2 / (1.0 + xl**m2)
        return np.column_stack([dx, dy])

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        F[0] = f(S[0], lag_col(-q2, 0, 0, S[0]), lag_col(-q1, 1, 0, S[0]))
        for i in range(n):
            a, b = ring(i), ring(i + 1)
            y0 = S[a]
            k1 = F[a]
            ym = y0 + 0.5 * step * k1
            xl = lag_col(i + 0.5 - q2, 0, i, ym)
            yl = lag_col(i + 0.5 - q1, 1, i, ym)
            k2 = f(ym, xl, yl)
            ym2 = y0 + 0.5 * step * k2
            k3 = f(ym2, xl, yl)
            ye = y0 + step * k3
            xl = lag_col(i + 1.0 - q2, 0, i, ye)
            yl = lag_col(i + 1.0 - q1, 1, i, ye)
            k4 = f(ye, xl, yl)
            S[b] = y0 + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            F[b] = f(S[b], xl, yl)
            t_next = (i + 1) * step
            while rec_ptr < rec.size and rec[rec_ptr] <= t_next + 1e-12:
                th = np.clip((rec[rec_ptr] - i * step) / step, 0.0, 1.0)
                h00, h10, h01, h11 = _hermite_weights(th)
                out[rec_ptr] = (h00 * S[a] + h10 * step * F[a]
                                + h01 * S[b] + h11 * step * F[b])
                rec_ptr += 1
            if strict and (i % 128 == 0 or i == n - 1) and not np.all(np.isfinite(S[b])):
                bad = np.where(~np.isfinite(S[b]).all(axis=1))[0]
                raise NumericError(
                    f"{bad.size} trajectories diverged by tau = {t_next:.6f} "
                    f"(first row {bad[0]})"
                )
    return out


# ---------------------------------------------------------------------------
# fixed point and limit cycle


def find_fixed_point(p: NondimParams, guess=(1.0, 1.5)) -> np.ndarray:
    """Equilibrium of the system with lags frozen at the state itself.

    Newton iteration on the algebraic system; converges to residual
    max-norm <= 1e-12 or raises :class:`ConvergenceError`.
    """
    v = np.asarray(guess, dtype=float).reshape(2).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("guess must be finite")
    for _ in range(100):
        x, y = v
        r = np.array(rhs(v, x, y, p))
        if np.max(np.abs(r)) <= 1e-12:
            return v
        ym = y ** (p.m1 - 1) if p.m1 > 1 else 1.0
        xm = x ** (p.m2 - 1) if p.m2 > 1 else 1.0
        J = np.array([
            [-p.c1, -p.h * p.c2 * p.m1 * ym / (1.0 + y**p.m1) ** 2],
            [p.c3 * p.m2 * xm / (1.0 + x**p.m2) ** 2, -1.0],
        ])
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian in fixed-point Newton; "
                                   "try a different guess") from exc
        v = v + delta
        if not np.all(np.isfinite(v)):
            raise ConvergenceError("fixed-point Newton diverged; try a different guess")
    raise ConvergenceError("fixed-point Newton did not converge in 100 iterations; "
                           "try a different guess")


@dataclass(frozen=True)
class LimitCycle:
    """Closed periodic orbit, anchored so that tau = 0 is the ACTH maximum."""

    params: NondimParams
    period: float
    orbit: Trajectory
    anchor_phase: float = 0.0

    def __post_init__(self):
        defect = np.max(np.abs(self.orbit.eval(0.0) - self.orbit.eval(self.period)))
        if defect > 1e-6:
            raise ConvergenceError(f"orbit does not close: defect {defect:.2e}")

    def state(self, tau):
        """Periodic evaluation of the orbit at any time."""
        return self.orbit.eval(np.mod(tau, self.period))

    def deriv(self, tau):
        return self.orbit.eval_deriv(np.mod(tau, self.period))

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``n`` states uniformly over one period (endpoint excluded)."""
        taus = np.linspace(0.0, self.period, n, endpoint=False)
        return taus, self.state(taus)


def _refine_peak(traj: Trajectory, idx: int) -> float | None:
    """Time of the local max of x near node ``idx``: root of the Hermite slope."""
    xs = traj.states[:, 0]
    fx = traj.derivs[:, 0]
    s = traj.step
    for k in (idx - 1, idx):
        if k < 0 or k + 1 >= len(xs):
            continue
        a = 6.0 * (xs[k] - xs[k + 1]) + 3.0 * s * (fx[k] + fx[k + 1])
        b = -6.0 * (xs[k] - xs[k + 1]) - 4.0 * s * fx[k] - 2.0 * s * fx[k + 1]
        c = s * fx[k]
        if a == 0.0:
            if b == 0.0:
                continue
            roots = [-c / b]
        else:
            disc = b * b - 4.0 * a * c
            if disc < 0.0:
                continue
            sq = math.sqrt(disc)
            roots = [(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)]
        for th in roots:
            if -1e-9 <= th <= 1.0 + 1e-9 and 2.0 * a * th + b < 0.0:
                return traj.t0 + (k + min(max(th, 0.0), 1.0)) * s
    return None


def _peaks_in(traj: Trajectory, t_lo: float, t_hi: float) -> list[float]:
    xs = traj.states[:, 0]
    i_lo = max(int((t_lo - traj.t0) / traj.step), 1)
    i_hi = min(int((t_hi - traj.t0) / traj.step), len(xs) - 2)
    times = []
    for i in range(i_lo, i_hi + 1):
        if xs[i] >= xs[i - 1] and xs[i] > xs[i + 1]:
            t = _refine_peak(traj, i)
            if t is not None:
                times.append(t)
    return times


def find_limit_cycle(p: NondimParams, transient: float = 200.0,
                     detect_window: float = 30.0, step: float = 1e-3,
                     start=DEFAULT_INITIAL_STATE) -> LimitCycle:
    """Locate the attracting limit cycle and anchor it at an ACTH maximum.

    Integrates through ``transient``, estimates the period from successive
    refined maxima of x over ``detect_window``, then applies period-map
    correction passes on the anchored history (each pass re-integrates one
    period and re-anchors at the next ACTH maximum) until the orbit closes
    to 1e-6 componentwise.
    """
    traj = integrate(p, np.asarray(start, dtype=float), transient, step)
    traj = integrate(p, traj, transient + detect_window, step)

    i_lo = int((transient - traj.t0) / step)
    seg = traj.states[i_lo:, 0]
    if seg.max() - seg.min() < 1e-6:
        raise NoLimitCycleError(
            f"no oscillation detected for h = {p.h} (peak amplitude "
            f"{seg.max() - seg.min():.2e} < 1e-6)"
        )
    peaks = _peaks_in(traj, transient, transient + detect_window)
    if len(peaks) < 3:
        raise NoLimitCycleError(
            f"fewer than 3 ACTH maxima in the detection window for h = {p.h}"
        )
    periods = np.diff(peaks)
    if np.max(np.abs(periods - periods.mean())) > 1e-3:
        raise ConvergenceError(
            f"period estimates vary by {np.max(np.abs(periods - periods.mean())):.2e} "
            "( > 1e-3 ) across consecutive peaks"
        )
    omega = float(periods.mean())

    # correction passes: follow the period map until the orbit closes.
    # the closure gate is amplitude-relative so a slowly damped focus is
    # recognized as decaying oscillation rather than accepted as a cycle
    anchor = peaks[-1]
    defect = math.inf
    amplitude = math.inf
    amp_first = None
    for _ in range(20):
        need = anchor + 1.3 * omega
        if traj.t_end < need:
            ext = integrate(p, traj, need, step)
            traj = Trajectory(traj.t0, step,
                              np.vstack([traj.states, ext.states[1:]]),
                              np.vstack([traj.derivs, ext.derivs[1:]]),
                              traj.history)
        cand = _peaks_in(traj, anchor + 0.7 * omega, anchor + 1.3 * omega)
        if not cand:
            raise ConvergenceError("lost track of the ACTH maxima while closing the orbit")
        t_next = min(cand, key=lambda t: abs(t - (anchor + omega)))
        omega = t_next - anchor
        defect = float(np.max(np.abs(traj.eval(anchor) - traj.eval(t_next))))
        i_a = int((anchor - traj.t0) / step)
        i_b = int((t_next - traj.t0) / step) + 1
        amplitude = float(np.ptp(traj.states[i_a:i_b, 0]))
        anchor = t_next
        if amplitude < 1e-6:
            raise NoLimitCycleError(
                f"oscillation died out while closing the orbit for h = {p.h} "
                f"(amplitude {amplitude:.2e})"
            )
        if amp_first is None:
            amp_first = amplitude
        if defect <= 1e-6 and defect <= 1e-3 * amplitude:
            break
    else:
        if amplitude < 0.1 * amp_first:
            raise NoLimitCycleError(
                f"oscillation keeps decaying for h = {p.h} (amplitude "
                f"{amp_first:.2e} -> {amplitude:.2e}): damped focus, no limit cycle"
            )
        raise ConvergenceError(f"orbit failed to close after 20 corrections "
                               f"(defect {defect:.2e})")

    big = traj

    def history(t):
        return big.eval(anchor + t)

    orbit = integrate(p, history, omega + 3 * step, step)
    return LimitCycle(params=p, period=omega, orbit=orbit, anchor_phase=0.0)
