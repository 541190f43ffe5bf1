"""Dense complex linear-algebra kernels and scalar search routines.

These are the shared numerical primitives: smallest singular values,
matrix resolvent norms, dense eigendecompositions, and the polar-grid
search used for Kreiss constants.  All functions are pure and safe to
call concurrently.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, NumericError

__all__ = [
    "PseudospectrumGrid",
    "KreissResult",
    "svd_min",
    "resolvent_inf_norm",
    "eig_dense",
    "kreiss_constant",
    "golden_max",
    "parallel_map",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PseudospectrumGrid:
    """Scalar field sampled on a rectangular grid in the complex plane.

    ``values[i, j]`` belongs to ``re_axis[j] + 1j * im_axis[i]``.  The
    stored quantity is either a smallest singular value, a minimal
    residual, or a reciprocal resolvent norm, depending on the producer;
    in every convention the epsilon-pseudospectrum is the sublevel set
    ``values <= eps`` and points of the spectrum store 0.
    """

    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re_axis, dtype=float)
        im = np.asarray(self.im_axis, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if re.ndim != 1 or im.ndim != 1:
            raise ValueError("grid axes must be one-dimensional")
        if np.any(np.diff(re) <= 0) or np.any(np.diff(im) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if vals.shape != (im.size, re.size):
            raise ValueError(
                f"values shape {vals.shape} does not match axes "
                f"({im.size}, {re.size})"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite (store 0 at the spectrum)")
        if np.any(vals < 0):
            raise ValueError("grid values must be nonnegative")
        object.__setattr__(self, "re_axis", re)
        object.__setattr__(self, "im_axis", im)
        object.__setattr__(self, "values", vals)

    def interpolate(self, z: complex) -> float:
        """Bilinear interpolation of the stored field at ``z``."""
        x = float(np.real(z))
        y = float(np.imag(z))
        re, im = self.re_axis, self.im_axis
        if not (re[0] <= x <= re[-1] and im[0] <= y <= im[-1]):
            raise ValueError(f"{z} lies outside the grid window")
        j = min(int(np.searchsorted(re, x) - 1), re.size - 2)
        i = min(int(np.searchsorted(im, y) - 1), im.size - 2)
        j = max(j, 0)
        i = max(i, 0)
        tx = (x - re[j]) / (re[j + 1] - re[j])
        ty = (y - im[i]) / (im[i + 1] - im[i])
        v = self.values
        return float(
            (1 - tx) * (1 - ty) * v[i, j]
            + tx * (1 - ty) * v[i, j + 1]
            + (1 - tx) * ty * v[i + 1, j]
            + tx * ty * v[i + 1, j + 1]
        )

    def write_csv(self, path, value_name: str = "value") -> None:
        """Dump the grid as rows ``re,im,<value_name>`` (row-major in im)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["re", "im", value_name])
            for i, b in enumerate(self.im_axis):
                for j, a in enumerate(self.re_axis):
                    writer.writerow(
                        [repr(float(a)), repr(float(b)), repr(float(self.values[i, j]))]
                    )

    @staticmethod
    def read_csv(path) -> "PseudospectrumGrid":
        """Inverse of :meth:`write_csv`; accepts any value column name."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != 3 or header[0] != "re" or header[1] != "im":
                raise ValueError(f"not a grid CSV (header {header})")
            rows = [(float(a), float(b), float(v)) for a, b, v in reader]
        re_axis = np.unique([r[0] for r in rows])
        im_axis = np.unique([r[1] for r in rows])
        values = np.full((im_axis.size, re_axis.size), np.nan)
        ji = {v: k for k, v in enumerate(re_axis)}
        ii = {v: k for k, v in enumerate(im_axis)}
        for a, b, v in rows:
            values[ii[b], ji[a]] = v
        if np.any(np.isnan(values)):
            raise ValueError("grid CSV does not cover a full rectangle")
        return PseudospectrumGrid(re_axis, im_axis, values)


@dataclass(frozen=True)
class KreissResult:
    """Outcome of a Kreiss-constant search over an annulus ``c < |z| <= r_max``.

    ``value`` is a certified lower bound of ``sup (|z|-c) * resolvent_norm(z)``
    and ``argmax_z`` is the search point achieving it.
    """

    c: float
    value: float
    argmax_z: complex


def svd_min(M) -> tuple[np.ndarray, np.ndarray]:
    """Smallest singular value and a corresponding right singular vector.

    Accepts a single matrix or a stacked array of shape ``(..., m, n)``;
    returns ``(sigma_min, v_min)`` with shapes ``(...)`` and ``(..., n)``.
    """
    M = np.asarray(M)
    if M.ndim < 2:
        raise ValueError("svd_min expects a matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("svd_min requires finite entries")
    _, s, vh = np.linalg.svd(M, full_matrices=False)
    sigma = s[..., -1]
    v = np.conj(vh[..., -1, :])
    if M.ndim == 2:
        return float(sigma), v
    return sigma, v


def resolvent_inf_norm(T, z: complex) -> float:
    """Max-row-sum norm of ``(T - z I)^{-1}``.

    Returns ``inf`` when ``T - z I`` is singular to machine precision, so
    that reciprocal-convention grids can store 0 there.
    """
    T = np.asarray(T)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError("resolvent_inf_norm expects a square matrix")
    A = T - z * np.eye(T.shape[0], dtype=np.result_type(T.dtype, complex))
    try:
        R = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return float("inf")
    norm = float(np.abs(R).sum(axis=1).max())
    if not np.isfinite(norm):
        return float("inf")
    return norm


def eig_dense(M) -> tuple[np.ndarray, np.ndarray]:
    """All eigenvalues and unit right eigenvectors of a dense square matrix.

    Returns ``(w, V)`` with ``V[:, k]`` the eigenvector of ``w[k]``,
    normalized to unit 2-norm.  Raises :class:`ConvergenceError` if the QR
    iteration fails.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("eig_dense expects a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("eig_dense requires finite entries")
    try:
        w, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"dense eigensolver failed on {M.shape[0]}x{M.shape[1]} matrix: {exc}"
        ) from exc
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    return w, V


def golden_max(f: Callable[[float], float], a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section maximization of a unimodal scalar function on [a, b]."""
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    if f1 >= f2:
        return x1, f1
    return x2, f2


def kreiss_constant(
    resolvent_norm: Callable[[complex], float],
    c: float,
    radial_grid: int = 200,
    angular_grid: int = 256,
    r_max: float | None = None,
    workers: int = 1,
) -> KreissResult:
    """Lower bound for ``sup_{|z|>c} (|z| - c) * resolvent_norm(z)``.

    Evaluates the objective on a polar grid over the annulus
    ``c < |z| <= r_max`` (radial offsets geometrically spaced so that both
    the near-circle and far-field scales are resolved), then refines the
    best point by alternating golden-section searches in radius and angle
    down to an absolute tolerance of 1e-6 in ``z``.
    """
    if c <= 0:
        raise ValueError("kreiss_constant requires c > 0")
    if r_max is None:
        r_max = c + 10.0
    if r_max <= c:
        raise ValueError("kreiss_constant requires r_max > c")
    if radial_grid < 16 or angular_grid < 16:
        raise ValueError("kreiss_constant requires at least 16 grid points per axis")

    span = r_max - c
    radii = c + np.geomspace(span * 1e-5, span, radial_grid)
    angles = np.linspace(0.0, 2.0 * np.pi, angular_grid, endpoint=False)

    def raw_objective(r: float, theta: float) -> float:
        z = r * np.exp(1j * theta)
        val = (r - c) * resolvent_norm(z)
        if np.isnan(val):
            raise NumericError(f"resolvent norm returned NaN at z = {z}")
        return val

    def row_best(r: float) -> tuple[float, float, float]:
        vals = [raw_objective(r, th) for th in angles]
        k = int(np.argmax(vals))
        return vals[k], r, angles[k]

    rows = parallel_map(row_best, radii, workers)
    best_val, best_r, best_th = max(rows, key=lambda t: t[0])
    if not np.isfinite(best_val):
        raise NumericError(
            "resolvent norm is not finite on the search annulus; "
            "the spectrum may cross |z| = c"
        )

    # refinement runs sequentially; track the best evaluation ever seen,
    # since each one is a valid lower bound of the supremum
    seen = {"value": best_val, "z": best_r * np.exp(1j * best_th)}

    def objective(r: float, theta: float) -> float:
        val = raw_objective(r, theta)
        if val > seen["value"]:
            seen["value"] = val
            seen["z"] = r * np.exp(1j * theta)
        return val

    # local refinement between the neighbouring grid lines
    dr = np.diff(radii).max()
    dth = angles[1] - angles[0]
    r_lo = max(best_r - dr, c + span * 1e-9)
    r_hi = min(best_r + dr, r_max)
    th_lo, th_hi = best_th - dth, best_th + dth
    for _ in range(40):
        r_prev, th_prev = best_r, best_th
        best_r, _ = golden_max(lambda r: objective(r, best_th), r_lo, r_hi, 1e-7)
        best_th, best_val = golden_max(lambda th: objective(best_r, th), th_lo, th_hi, 1e-7)
        r_lo = max(c + span * 1e-9, best_r - (r_hi - r_lo) * 0.25)
        r_hi = min(r_max, best_r + (r_hi - r_lo) * 0.25)
        th_lo = best_th - (th_hi - th_lo) * 0.25
        th_hi = best_th + (th_hi - th_lo) * 0.25
        z_prev = r_prev * np.exp(1j * th_prev)
        z_new = best_r * np.exp(1j * best_th)
        if abs(z_new - z_prev) < 1e-6:
            break
    # every evaluation lower-bounds the supremum; report the best one seen
    return KreissResult(c=float(c), value=float(seen["value"]), argmax_z=complex(seen["z"]))


def parallel_map(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """Map ``fn`` over ``items``, optionally with a thread pool.

    Used for data-parallel grid sweeps where the work is dominated by
    LAPACK calls that release the GIL.  Order is preserved.
    """
    items = list(items)
    if workers <= 1 or len(items) < 4:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def write_rows_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a small CSV table; ``None`` entries become empty fields."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(
                ["" if v is None else (repr(float(v)) if isinstance(v, (int, float, np.floating)) else str(v)) for v in row]
            )
