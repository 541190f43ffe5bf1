"""Pointwise linearization along a base trajectory: the delay pencil.

Linearizing the model about a base point turns it into a linear DDE with
constant matrices A, B, C acting on the current and lagged perturbation.
Laplace transformation yields the nonlinear eigenvalue pencil

    Delta(lam) = lam*I - A - B*exp(-lam*t1) - C*exp(-lam*t2),

whose determinant roots are the characteristic exponents.  This module
computes those roots (Chebyshev collocation of the generator plus Newton
refinement on det), pseudospectra as smallest-singular-value fields,
the spectral abscissa, the distance to instability, and the ratio of the
two (a non-normality indicator), with sweeps over the cycle and over the
drive parameter h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import dde
from .errors import NumericError
from .numerics import PseudospectrumGrid, golden_max, svd_min, write_rows_csv

__all__ = [
    "DelayPencil",
    "CharRoots",
    "StabilityIndicators",
    "HSweepRow",
    "linearize_at",
    "pencil_eval",
    "characteristic_roots",
    "pencil_pseudospectrum",
    "spectral_abscissa",
    "distance_to_instability",
    "nonnormality_index",
    "sweep_trajectory",
    "sweep_h",
    "write_indicators_csv",
    "write_hsweep_csv",
]


@dataclass(frozen=True)
class DelayPencil:
    """Matrices and delays defining ``lam*I - A - B*e^(-lam*t1) - C*e^(-lam*t2)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    t1: float
    t2: float
    tau_base: float = 0.0

    def __post_init__(self):
        for name in ("A", "B", "C"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.shape != (2, 2) or not np.all(np.isfinite(M)):
                raise ValueError(f"DelayPencil.{name} must be a finite 2x2 matrix")
            object.__setattr__(self, name, M)
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("delays must be nonnegative")

    @property
    def max_delay(self) -> float:
        return max(self.t1, self.t2)


class CharRoots(NamedTuple):
    """Roots of det Delta and the number of candidates dropped by Newton."""

    roots: np.ndarray
    dropped: int


@dataclass(frozen=True)
class StabilityIndicators:
    """Per-time stability summary; ``d`` and ``index`` are absent when alpha >= 0."""

    tau: float
    alpha: float
    d: float | None
    index: float | None


@dataclass(frozen=True)
class HSweepRow:
    h: float
    max_alpha: float | None
    max_index: float | None
    error: str | None = None


def linearize_at(p: dde.NondimParams, x0_lag2: float, y0_lag1: float,
                 tau_base: float = 0.0) -> DelayPencil:
    """Delay pencil of the linearization about lagged base values.

    ``y0_lag1`` is the base cortisol at ``tau_base - t1`` and ``x0_lag2``
    the base ACTH at ``tau_base - t2``; both must be nonnegative.
    """
    if x0_lag2 < 0 or y0_lag1 < 0:
        raise ValueError("base lag values must be nonnegative")
    ym = y0_lag1 ** (p.m1 - 1) if p.m1 > 1 else 1.0
    xm = x0_lag2 ** (p.m2 - 1) if p.m2 > 1 else 1.0
    b = -p.h * p.c2 * p.m1 * ym / (1.0 + y0_lag1**p.m1) ** 2
    c = p.c3 * p.m2 * xm / (1.0 + x0_lag2**p.m2) ** 2
    return DelayPencil(
        A=np.array([[-p.c1, 0.0], [0.0, -1.0]]),
        B=np.array([[0.0, b], [0.0, 0.0]]),
        C=np.array([[0.0, 0.0], [c, 0.0]]),
        t1=p.t1,
        t2=p.t2,
        tau_base=tau_base,
    )


def pencil_eval(pencil: DelayPencil, lam: complex) -> np.ndarray:
    """The 2x2 complex matrix ``lam*I - A - B*e^(-lam*t1) - C*e^(-lam*t2)``."""
    lam = complex(lam)
    return (lam * np.eye(2)
            - pencil.A
            - pencil.B * np.exp(-lam * pencil.t1)
            - pencil.C * np.exp(-lam * pencil.t2))


def _det_and_deriv(pencil: DelayPencil, lam: complex) -> tuple[complex, complex]:
    e1 = np.exp(-lam * pencil.t1)
    e2 = np.exp(-lam * pencil.t2)
    D = lam * np.eye(2) - pencil.A - pencil.B * e1 - pencil.C * e2
    Dp = np.eye(2) + pencil.t1 * pencil.B * e1 + pencil.t2 * pencil.C * e2
    det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
    ddet = (Dp[0, 0] * D[1, 1] + D[0, 0] * Dp[1, 1]
            - Dp[0, 1] * D[1, 0] - D[0, 1] * Dp[1, 0])
    return det, ddet


def _cheb_nodes_and_diff(deg: int, tmax: float) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev extreme points mapped to [-tmax, 0] and the differentiation matrix."""
    n = np.arange(deg + 1)
    s = tmax * (np.cos(np.pi * n / deg) - 1.0) / 2.0  # s[0] = 0, s[deg] = -tmax
    c = np.hstack([2.0, np.ones(deg - 1), 2.0]) * (-1.0) ** n
    X = np.tile(s, (deg + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(deg + 1))
    D -= np.diag(D.sum(axis=1))
    return s, D


def _barycentric_weights_at(s: np.ndarray, t: float) -> np.ndarray:
    """Lagrange interpolation weights at ``t`` for Chebyshev extreme nodes ``s``."""
    deg = s.size - 1
    w = np.hstack([0.5, np.ones(deg - 1), 0.5]) * (-1.0) ** np.arange(deg + 1)
    diff = t - s
    exact = np.abs(diff) < 1e-14
    if np.any(exact):
        out = np.zeros(deg + 1)
        out[np.argmax(exact)] = 1.0
        return out
    tmp = w / diff
    return tmp / tmp.sum()


def _collocation_candidates(pencil: DelayPencil, degree: int) -> np.ndarray:
    """Eigenvalues of the collocated generator of the delay system."""
    tmax = pencil.max_delay
    if tmax == 0.0:
        return np.linalg.eigvals(pencil.A + pencil.B + pencil.C)
    s, D = _cheb_nodes_and_diff(degree, tmax)
    l1 = _barycentric_weights_at(s, -pencil.t1)
    l2 = _barycentric_weights_at(s, -pencil.t2)
    n = degree + 1
    M = np.zeros((2 * n, 2 * n))
    for i in range(n):
        M[0:2, 2 * i:2 * i + 2] = pencil.B * l1[i] + pencil.C * l2[i]
    M[0:2, 0:2] += pencil.A
    M[2:, :] = np.kron(D[1:, :], np.eye(2))
    return np.linalg.eigvals(M)


def characteristic_roots(pencil: DelayPencil, re_min: float = -5.0,
                         degree: int = 40) -> CharRoots:
    """All characteristic roots with real part >= ``re_min``.

    Collocation eigenvalues seed a Newton iteration on det Delta; each
    accepted root satisfies |det| <= 1e-10 and duplicates are merged at
    tolerance 1e-8.  Candidates whose Newton iteration fails are counted
    in ``dropped``.
    """
    if not math.isfinite(re_min):
        raise ValueError("re_min must be finite")
    cands = _collocation_candidates(pencil, degree)
    roots: list[complex] = []
    dropped = 0
    for lam0 in cands:
        if lam0.real < re_min - 0.5:
            continue
        lam = complex(lam0)
        converged = False
        for _ in range(60):
            det, ddet = _det_and_deriv(pencil, lam)
            if ddet == 0:
                break
            delta = det / ddet
            lam -= delta
            if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
                break
            if abs(delta) < 1e-13:
                converged = abs(_det_and_deriv(pencil, lam)[0]) <= 1e-10
                break
        if not converged:
            dropped += 1
            continue
        if lam.real < re_min:
            continue
        if not any(abs(lam - r) < 1e-8 for r in roots):
            roots.append(lam)
    roots.sort(key=lambda z: (-z.real, z.imag))
    return CharRoots(np.array(roots, dtype=complex), dropped)


def default_grid_axes() -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(-6.0, 3.0, 301), np.linspace(-15.0, 15.0, 301)


def pencil_pseudospectrum(pencil: DelayPencil, re_axis=None, im_axis=None) -> PseudospectrumGrid:
    """Smallest singular value of Delta(z) over a rectangular grid."""
    if re_axis is None or im_axis is None:
        d_re, d_im = default_grid_axes()
        re_axis = d_re if re_axis is None else re_axis
        im_axis = d_im if im_axis is None else im_axis
    re_axis = np.asarray(re_axis, dtype=float)
    im_axis = np.asarray(im_axis, dtype=float)
    Z = re_axis[None, :] + 1j * im_axis[:, None]
    E1 = np.exp(-Z * pencil.t1)
    E2 = np.exp(-Z * pencil.t2)
    stack = (Z[..., None, None] * np.eye(2)
             - pencil.A
             - pencil.B * E1[..., None, None]
             - pencil.C * E2[..., None, None])
    sigma, _ = svd_min(stack)
    return PseudospectrumGrid(re_axis, im_axis, sigma)


def spectral_abscissa(pencil: DelayPencil, re_min: float = -5.0) -> float:
    """Largest real part among characteristic roots.

    The collocation sweep is complete for ``Re >= re_min``; if no root is
    found there the window is widened before giving up.
    """
    for rm in (re_min, re_min - 10.0, re_min - 30.0):
        roots = characteristic_roots(pencil, rm).roots
        if roots.size:
            return float(roots.real.max())
    raise NumericError("no characteristic roots found with Re >= re_min - 40")


def distance_to_instability(pencil: DelayPencil, n_scan: int = 2000) -> float:
    """Minimum of sigma_min(Delta(i*s)) over the imaginary axis.

    Requires a stable pencil (spectral abscissa < 0).  Scans s in
    [0, s_max] (conjugate symmetry covers s < 0 since A, B, C are real)
    and refines the best bracket by golden section to 1e-8.
    """
    alpha = spectral_abscissa(pencil)
    if alpha >= 0:
        raise ValueError(
            f"distance_to_instability requires spectral abscissa < 0 (got {alpha:.4g})"
        )
    norms = sum(np.linalg.norm(M, 2) for M in (pencil.A, pencil.B, pencil.C))
    s_max = 2.0 * norms + 10.0
    s_grid = np.linspace(0.0, s_max, n_scan)

    def sig(s_arr):
        Z = 1j * np.asarray(s_arr, dtype=float)
        E1 = np.exp(-Z * pencil.t1)
        E2 = np.exp(-Z * pencil.t2)
        stack = (Z[..., None, None] * np.eye(2)
                 - pencil.A
                 - pencil.B * E1[..., None, None]
                 - pencil.C * E2[..., None, None])
        return svd_min(stack)[0]

    vals = sig(s_grid)
    k = int(np.argmin(vals))
    lo = s_grid[max(k - 1, 0)]
    hi = s_grid[min(k + 1, n_scan - 1)]
    s_best, neg = golden_max(lambda s: -float(sig(np.array([s]))[0]), lo, hi, 1e-8)
    return float(min(-neg, vals[k]))


def nonnormality_index(pencil: DelayPencil) -> float:
    """Ratio -alpha/d: distance of the spectrum to the axis over the axis margin."""
    alpha = spectral_abscissa(pencil)
    if alpha >= 0:
        raise ValueError("nonnormality_index requires spectral abscissa < 0")
    d = distance_to_instability(pencil)
    return -alpha / d


def pencil_at_cycle_time(p: dde.NondimParams, cycle: dde.LimitCycle, tau: float) -> DelayPencil:
    """Pencil built from the cycle's lagged values at time ``tau`` (periodic wrap)."""
    x_lag = float(cycle.state(tau - p.t2)[0])
    y_lag = float(cycle.state(tau - p.t1)[1])
    return linearize_at(p, x_lag, y_lag, tau_base=tau)


def sweep_trajectory(p: dde.NondimParams, cycle: dde.LimitCycle,
                     n_samples: int) -> list[StabilityIndicators]:
    """Stability indicators at ``n_samples`` uniform times over one period."""
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    out = []
    for tau in np.linspace(0.0, cycle.period, n_samples, endpoint=False):
        pencil = pencil_at_cycle_time(p, cycle, float(tau))
        alpha = spectral_abscissa(pencil)
        if alpha < 0:
            d = distance_to_instability(pencil)
            out.append(StabilityIndicators(float(tau), alpha, d, -alpha / d))
        else:
            out.append(StabilityIndicators(float(tau), alpha, None, None))
    return out


def sweep_h(h_values: Sequence[float], p_template: dde.NondimParams,
            n_samples: int = 100, transient: float = 200.0,
            step: float = 1e-3) -> list[HSweepRow]:
    """Per-h maxima of the spectral abscissa and of the non-normality index.

    A failed limit-cycle detection flags the row and the sweep continues.
    The index maximum is taken over the stable (alpha < 0) subset only.
    """
    rows = []
    for h in h_values:
        p = p_template.with_h(float(h))
        try:
            cycle = dde.find_limit_cycle(p, transient=transient, step=step)
            ind = sweep_trajectory(p, cycle, n_samples)
        except Exception as exc:  # noqa: BLE001 - row-level flagging by contract
            rows.append(HSweepRow(float(h), None, None, f"{type(exc).__name__}: {exc}"))
            continue
        max_alpha = max(s.alpha for s in ind)
        stable = [s.index for s in ind if s.index is not None]
        rows.append(HSweepRow(float(h), max_alpha, max(stable) if stable else None))
    return rows


def write_indicators_csv(path, indicators: Sequence[StabilityIndicators]) -> None:
    write_rows_csv(path, ["tau", "alpha", "d", "index"],
                   [(s.tau, s.alpha, s.d, s.index) for s in indicators])


def write_hsweep_csv(path, rows: Sequence[HSweepRow]) -> None:
    write_rows_csv(path, ["h", "max_alpha", "max_index"],
                   [(r.h, r.max_alpha, r.max_index) for r in rows])
