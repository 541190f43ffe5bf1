"""Period map of the linearization about the limit cycle.

The linear time-periodic DDE obtained by linearizing along the cycle
defines a monodromy operator that advances a history segment on
``[-max(t1,t2), 0]`` by one period.  Discretizing histories in a nodal
hat-function basis (piecewise affine, N nodes per component) and
integrating each basis history over one period yields a ``2N x 2N``
matrix whose eigenvalues approximate the characteristic multipliers and
whose max-row-sum resolvent approximates the sup-norm resolvent of the
operator on the piecewise-affine subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dde
from .errors import NumericError
from .numerics import (
    KreissResult,
    PseudospectrumGrid,
    eig_dense,
    kreiss_constant,
    parallel_map,
    resolvent_inf_norm,
    write_rows_csv,
)

__all__ = [
    "HatBasisGrid",
    "MonodromyMatrix",
    "FloquetSweepRow",
    "assemble_monodromy",
    "propagate_histories",
    "floquet_spectrum",
    "floquet_pseudospectrum",
    "floquet_kreiss",
    "floquet_sweep_h",
    "cycle_derivative_vector",
    "write_floquet_sweep_csv",
]


@dataclass(frozen=True)
class HatBasisGrid:
    """Uniform nodes on [-max_delay, 0] carrying the nodal hat basis."""

    s_points: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_points, dtype=float)
        if s.ndim != 1 or s.size < 8:
            raise ValueError("hat grid needs at least 8 nodes")
        spacing = np.diff(s)
        if np.any(spacing <= 0) or not np.allclose(spacing, spacing[0], rtol=1e-9):
            raise ValueError("hat grid must be strictly increasing and uniform")
        if abs(s[-1]) > 1e-12:
            raise ValueError("hat grid must end at 0")
        object.__setattr__(self, "s_points", s)

    @property
    def n(self) -> int:
        return self.s_points.size

    @property
    def span(self) -> float:
        return float(-self.s_points[0])

    def weights(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation weights at ``t`` in [-span, 0]."""
        s = self.s_points
        w = np.zeros(s.size)
        if t <= s[0]:
            w[0] = 1.0
            return w
        if t >= 0.0:
            w[-1] = 1.0
            return w
        pos = (t - s[0]) / (s[1] - s[0])
        k = min(int(pos), s.size - 2)
        th = pos - k
        w[k] = 1.0 - th
        w[k + 1] = th
        return w


@dataclass(frozen=True)
class MonodromyMatrix:
    """Discretized period map with its basis grid and provenance."""

    T: np.ndarray
    grid: HatBasisGrid
    period: float
    h: float
    anchor: float

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        n = 2 * self.grid.n
        if T.shape != (n, n) or not np.all(np.isfinite(T)):
            raise ValueError(f"monodromy matrix must be a finite {n}x{n} array")
        object.__setattr__(self, "T", T)

    def write_csv(self, path) -> None:
        np.savetxt(path, self.T, delimiter=",")


def _cycle_coefficients(p: dde.NondimParams, cycle: dde.LimitCycle,
                        times: np.ndarray, anchor_offset: float) -> tuple[np.ndarray, np.ndarray]:
    """Lagged-Hill derivative coefficients b(tau), c(tau) on the cycle."""
    y_lag = cycle.state(anchor_offset + times - p.t1)[..., 1]
    x_lag = cycle.state(anchor_offset + times - p.t2)[..., 0]
    b = -p.h * p.c2 * p.m1 * y_lag ** (p.m1 - 1) / (1.0 + y_lag**p.m1) ** 2
    c = p.c3 * p.m2 * x_lag ** (p.m2 - 1) / (1.0 + x_lag**p.m2) ** 2
    return b, c


def propagate_histories(p: dde.NondimParams, cycle: dde.LimitCycle,
                        hist_x: np.ndarray, hist_y: np.ndarray,
                        grid: HatBasisGrid, step: float = 1e-3,
                        anchor_offset: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Advance piecewise-affine perturbation histories by one period.

    ``hist_x``/``hist_y`` hold nodal values on ``grid`` with one row per
    history (shape ``(B, N)``).  Returns the nodal values of the solution
    one period later, sampled on the same grid.  The perturbation obeys

        dx/dtau = -c1*x + b(tau) * y(tau - t1)
        dy/dtau = -y     + c(tau) * x(tau - t2)

    with b, c evaluated along the limit cycle starting at the anchor
    (ACTH maximum) shifted by ``anchor_offset``.
    """
    hist_x = np.asarray(hist_x, dtype=float)
    hist_y = np.asarray(hist_y, dtype=float)
    if hist_x.shape != hist_y.shape or hist_x.ndim != 2 or hist_x.shape[1] != grid.n:
        raise ValueError("histories must have shape (B, N) matching the grid")
    omega = cycle.period
    B = hist_x.shape[0]
    n = int(math.ceil(omega / step - 1e-9))
    nlag = max(int(math.ceil(p.max_delay / step)), 1)
    W = nlag + 4

    nodes = np.arange(n + 1) * step
    b_node, c_node = _cycle_coefficients(p, cycle, nodes, anchor_offset)
    b_mid, c_mid = _cycle_coefficients(p, cycle, nodes[:-1] + 0.5 * step, anchor_offset)

    S = np.empty((W, B, 2))
    F = np.empty((W, B, 2))
    S[0, :, 0] = hist_x[:, -1]
    S[0, :, 1] = hist_y[:, -1]

    q1 = p.t1 / step
    q2 = p.t2 / step
    c1 = p.c1

    def lag(q, col):
        if q <= 0.0:
            w = grid.weights(q * step)
            return (hist_x if col == 0 else hist_y) @ w
        k = int(q)
        th = q - k
        h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
        h10 = th * (1.0 - th) ** 2
        h01 = th * th * (3.0 - 2.0 * th)
        h11 = th * th * (th - 1.0)
        a_, b_ = k % W, (k + 1) % W
        return (h00 * S[a_, :, col] + h10 * step * F[a_, :, col]
                + h01 * S[b_, :, col] + h11 * step * F[b_, :, col])

    def f(state, xl, yl, b, c):
        return np.column_stack([-c1 * state[:, 0] + b * yl,
                                -state[:, 1] + c * xl])

    # sample times of the final history segment, in ascending order
    rec_times = omega + grid.s_points
    rec_ptr = 0
    out_x = np.empty((grid.n, B))
    out_y = np.empty((grid.n, B))

    F[0] = f(S[0], lag(-q2, 0), lag(-q1, 1), b_node[0], c_node[0])
    for i in range(n):
        a_, b_ = i % W, (i + 1) % W
        y0 = S[a_]
        k1 = F[a_]
        ym = y0 + 0.5 * step * k1
        xl = lag(i + 0.5 - q2, 0)
        yl = lag(i + 0.5 - q1, 1)
        k2 = f(ym, xl, yl, b_mid[i], c_mid[i])
        k3 = f(y0 + 0.5 * step * k2, xl, yl, b_mid[i], c_mid[i])
        xl = lag(i + 1.0 - q2, 0)
        yl = lag(i + 1.0 - q1, 1)
        k4 = f(y0 + step * k3, xl, yl, b_node[i + 1], c_node[i + 1])
        S[b_] = y0 + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        F[b_] = f(S[b_], xl, yl, b_node[i + 1], c_node[i + 1])
        if not np.all(np.isfinite(S[b_])):
            bad = int(np.where(~np.isfinite(S[b_]).all(axis=1))[0][0])
            raise NumericError(
                f"linear propagation diverged at tau = {(i + 1) * step:.6f} "
                f"(basis column {bad})"
            )
        t_next = (i + 1) * step
        while rec_ptr < rec_times.size and rec_times[rec_ptr] <= t_next + 1e-12:
            th = np.clip((rec_times[rec_ptr] - i * step) / step, 0.0, 1.0)
            h00 = (1.0 + 2.0 * th) * (1.0 - th) ** 2
            h10 = th * (1.0 - th) ** 2
            h01 = th * th * (3.0 - 2.0 * th)
            h11 = th * th * (th - 1.0)
            val = h00 * S[a_] + h10 * step * F[a_] + h01 * S[b_] + h11 * step * F[b_]
            out_x[rec_ptr] = val[:, 0]
            out_y[rec_ptr] = val[:, 1]
            rec_ptr += 1
    if rec_ptr != rec_times.size:
        raise NumericError("failed to sample the full final history segment")
    return out_x.T, out_y.T


def assemble_monodromy(p: dde.NondimParams, cycle: dde.LimitCycle, N: int = 50,
                       step: float = 1e-3, anchor_offset: float = 0.0) -> MonodromyMatrix:
    """Hat-basis discretization of the period map about the limit cycle.

    Column ``j < N`` is the propagated hat history in the ACTH slot,
    column ``N + j`` the hat in the cortisol slot, each sampled at the
    grid nodes after one period.  ``anchor_offset`` shifts the initial
    time away from the ACTH maximum (the pseudospectra, unlike the
    spectrum, depend on this choice).
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    grid = HatBasisGrid(np.linspace(-p.max_delay, 0.0, N))
    eye = np.eye(N)
    zero = np.zeros((N, N))
    hist_x = np.vstack([eye, zero])
    hist_y = np.vstack([zero, eye])
    out_x, out_y = propagate_histories(p, cycle, hist_x, hist_y, grid, step, anchor_offset)
    # column j of T is the sampled image of basis history j
    T = np.vstack([out_x.T, out_y.T])
    return MonodromyMatrix(T=T, grid=grid, period=cycle.period, h=p.h,
                           anchor=anchor_offset)


def floquet_spectrum(m: MonodromyMatrix) -> np.ndarray:
    """Eigenvalues of the discretized period map, by decreasing modulus."""
    w, _ = eig_dense(m.T)
    return w[np.argsort(-np.abs(w))]


def default_floquet_axes() -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(-1.5, 1.5, 201), np.linspace(-1.5, 1.5, 201)


def floquet_pseudospectrum(m: MonodromyMatrix, re_axis=None, im_axis=None,
                           workers: int = 1) -> PseudospectrumGrid:
    """Reciprocal sup-norm resolvent of the period map on a grid.

    Stores ``1 / ||(T - z)^{-1}||_inf`` (0 at numerically singular
    points); on the piecewise-affine subspace the matrix max-row-sum norm
    realizes the sup-norm operator norm because coefficients are nodal
    values.
    """
    if re_axis is None or im_axis is None:
        d_re, d_im = default_floquet_axes()
        re_axis = d_re if re_axis is None else re_axis
        im_axis = d_im if im_axis is None else im_axis
    re_axis = np.asarray(re_axis, dtype=float)
    im_axis = np.asarray(im_axis, dtype=float)
    T = m.T

    def row(bi: float) -> np.ndarray:
        out = np.empty(re_axis.size)
        for j, aj in enumerate(re_axis):
            nrm = resolvent_inf_norm(T, complex(aj, bi))
            out[j] = 0.0 if not np.isfinite(nrm) else 1.0 / nrm
        return out

    values = np.vstack(parallel_map(row, im_axis, workers))
    return PseudospectrumGrid(re_axis, im_axis, values)


def floquet_kreiss(m: MonodromyMatrix, c: float = 1.0, radial_grid: int = 200,
                   angular_grid: int = 256, r_max: float | None = None,
                   workers: int = 1) -> KreissResult:
    """Kreiss constant of the period map for threshold ``c``.

    Requires the spectral radius of the discretized map to lie strictly
    inside ``|z| = c``; otherwise the supremum is unbounded and a
    ``ValueError`` reports the offending radius.
    """
    radius = float(np.abs(floquet_spectrum(m)[0]))
    if radius >= c:
        raise ValueError(
            f"Kreiss threshold c = {c} does not exceed the spectral radius "
            f"{radius:.8f}; the supremum diverges at the spectrum"
        )
    return kreiss_constant(lambda z: resolvent_inf_norm(m.T, z), c,
                           radial_grid=radial_grid, angular_grid=angular_grid,
                           r_max=r_max, workers=workers)


def cycle_derivative_vector(m: MonodromyMatrix, cycle: dde.LimitCycle) -> np.ndarray:
    """Nodal samples of the cycle-derivative history (the multiplier-1 mode)."""
    taus = m.anchor + m.grid.s_points
    d = cycle.deriv(np.mod(taus, cycle.period))
    return np.concatenate([d[:, 0], d[:, 1]])


@dataclass(frozen=True)
class FloquetSweepRow:
    h: float
    dominant: float | None
    kreiss: float | None
    error: str | None = None


def floquet_sweep_h(h_values: Sequence[float], p_template: dde.NondimParams,
                    N: int = 50, c: float = 1.0, step: float = 1e-3,
                    transient: float = 200.0, workers: int = 1,
                    radial_grid: int = 200, angular_grid: int = 256) -> list[FloquetSweepRow]:
    """Dominant multiplier modulus and Kreiss constant for each drive value.

    The cycle (and its ACTH-peak anchor) is re-detected per ``h``.  Rows
    whose cycle detection or Kreiss precondition fails are flagged and
    the sweep continues.
    """
    rows = []
    for h in h_values:
        p = p_template.with_h(float(h))
        try:
            cycle = dde.find_limit_cycle(p, transient=transient, step=step)
            m = assemble_monodromy(p, cycle, N=N, step=step)
            dominant = float(np.abs(floquet_spectrum(m)[0]))
            kr = floquet_kreiss(m, c=c, workers=workers,
                                radial_grid=radial_grid, angular_grid=angular_grid)
            rows.append(FloquetSweepRow(float(h), dominant, kr.value))
        except Exception as exc:  # noqa: BLE001 - row-level flagging by contract
            rows.append(FloquetSweepRow(float(h), None, None,
                                        f"{type(exc).__name__}: {exc}"))
    return rows


def write_floquet_sweep_csv(path, rows: Sequence[FloquetSweepRow]) -> None:
    write_rows_csv(path, ["h", "dominant", "kreiss"],
                   [(r.h, r.dominant, r.kreiss) for r in rows])
