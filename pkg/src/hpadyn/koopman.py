"""Data-driven global linearization: delay embedding, RBF dictionary, ResDMD.

The state is augmented with lagged copies, ``(x(t), y(t), x(t - lag),
y(t - lag), ...)``, and the flow sampled every ``delta_tau`` becomes a
discrete-time map on R^{2d}.  Snapshot pairs from random initial
histories feed a Galerkin approximation of the associated composition
(Koopman) operator in a Gaussian RBF dictionary whose centers come from
k-means.  The three Gram-type matrices

    G = Psi0* Psi0 / M,  A = Psi0* Psi1 / M,  L = Psi1* Psi1 / M

yield eigenvalues, a computable residual certifying pseudospectral
membership, residual-based pseudospectra, and Kreiss constants.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigvalsh
from scipy.spatial.distance import cdist

from . import dde
from .errors import NumericError
from .numerics import KreissResult, PseudospectrumGrid, kreiss_constant, parallel_map, write_rows_csv

__all__ = [
    "EmbeddingConfig",
    "SnapshotDataset",
    "RbfDictionary",
    "ResDmdMatrices",
    "LatticeResult",
    "KoopmanSweepRow",
    "default_embedding",
    "generate_snapshots",
    "build_dictionary",
    "eval_dictionary",
    "assemble_matrices",
    "dmd_eigs",
    "residual",
    "koopman_pseudospectrum",
    "eigenfunction_field",
    "koopman_kreiss",
    "cycle_embedding",
    "find_circle_lattice",
    "koopman_sweep_h",
    "write_eigs_csv",
]

log = logging.getLogger(__name__)

DEFAULT_BOX = ((-3.0, 5.0), (-1.0, 8.0))


@dataclass(frozen=True)
class EmbeddingConfig:
    """Delay-embedding and sampling choices for snapshot generation."""

    delta_tau: float
    d: int = 10
    box: tuple = DEFAULT_BOX
    n_init: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("embedding needs at least 2 lags")
        if self.delta_tau <= 0:
            raise ValueError("delta_tau must be positive")
        (x0, x1), (y0, y1) = self.box
        if not (x1 > x0 and y1 > y0):
            raise ValueError("initial-condition box must be nonempty")
        if self.n_init < 1:
            raise ValueError("n_init must be positive")


def default_embedding(cycle: dde.LimitCycle, n_init: int = 10_000,
                      seed: int = 0, d: int = 10) -> EmbeddingConfig:
    """Sampling interval one tenth of the cycle period, standard box."""
    return EmbeddingConfig(delta_tau=cycle.period / 10.0, d=d, n_init=n_init, seed=seed)


@dataclass(frozen=True)
class SnapshotDataset:
    """Row-aligned snapshot pairs: row m of X1 is the image of row m of X0."""

    X0: np.ndarray
    X1: np.ndarray
    delta_tau: float
    d: int
    lag: float
    box: tuple
    n_init: int
    seed: int

    def __post_init__(self):
        X0 = np.asarray(self.X0, dtype=float)
        X1 = np.asarray(self.X1, dtype=float)
        if X0.shape != X1.shape or X0.ndim != 2 or X0.shape[1] != 2 * self.d:
            raise ValueError("X0, X1 must be row-aligned (M, 2d) arrays")
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "X1", X1)

    @property
    def M(self) -> int:
        return self.X0.shape[0]

    def save(self, path) -> None:
        """Binary dump plus a JSON sidecar with the sampling metadata."""
        np.savez_compressed(path, X0=self.X0, X1=self.X1)
        meta = {
            "seed": self.seed,
            "d": self.d,
            "delta_tau": self.delta_tau,
            "lag": self.lag,
            "box": self.box,
            "M": self.M,
            "n_init": self.n_init,
        }
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path) -> "SnapshotDataset":
        data = np.load(path)
        with open(str(path) + ".meta.json") as fh:
            meta = json.load(fh)
        box = tuple(tuple(b) for b in meta["box"])
        return SnapshotDataset(X0=data["X0"], X1=data["X1"],
                               delta_tau=meta["delta_tau"], d=meta["d"],
                               lag=meta["lag"], box=box,
                               n_init=meta["n_init"], seed=meta["seed"])


def generate_snapshots(p: dde.NondimParams, cfg: EmbeddingConfig,
                       step: float = 1e-3) -> SnapshotDataset:
    """Integrate random constant histories and read off embedded snapshot pairs.

    Each initial point is run forward by ``(d+1) * delta_tau``; the
    embedded states at ``(d-1, d, d+1) * delta_tau`` give two aligned
    pairs per trajectory.  Embedding lags are multiples of the feedback
    delay ``t1``.  Initial points whose integration goes non-finite are
    skipped (with a log message) and the dataset records the actual M.
    """
    lag = p.t1
    if lag <= 0:
        raise ValueError("embedding requires a positive feedback delay t1")
    rng = np.random.default_rng(cfg.seed)
    (xa, xb), (ya, yb) = cfg.box
    inits = np.column_stack([
        rng.uniform(xa, xb, cfg.n_init),
        rng.uniform(ya, yb, cfg.n_init),
    ])
    d = cfg.d
    t_end = (d + 1) * cfg.delta_tau
    sample_ns = (d - 1, d, d + 1)
    times = sorted({round(n * cfg.delta_tau - k * lag, 12)
                    for n in sample_ns for k in range(d)})
    states = dde.integrate_batch(p, inits, t_end, step=step,
                                 record_times=[max(t, 0.0) for t in times],
                                 strict=False)
    by_time = {t: states[i] for i, t in enumerate(times)}

    def embed(n: int) -> np.ndarray:
        blocks = []
        for k in range(d):
            s = by_time[round(n * cfg.delta_tau - k * lag, 12)]
            blocks.append(s)
        return np.concatenate(blocks, axis=1)

    e0, e1, e2 = embed(d - 1), embed(d), embed(d + 1)
    ok = np.isfinite(e0).all(1) & np.isfinite(e1).all(1) & np.isfinite(e2).all(1)
    if not np.all(ok):
        log.warning("dropped %d diverged initial points", int((~ok).sum()))
        e0, e1, e2 = e0[ok], e1[ok], e2[ok]
    X0 = np.vstack([e0, e1])
    X1 = np.vstack([e1, e2])
    return SnapshotDataset(X0=X0, X1=X1, delta_tau=cfg.delta_tau, d=d, lag=lag,
                           box=cfg.box, n_init=cfg.n_init, seed=cfg.seed)


@dataclass(frozen=True)
class RbfDictionary:
    """Gaussian RBF observables: centers and a common bandwidth."""

    centers: np.ndarray
    scale: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim != 2:
            raise ValueError("centers must be a 2-D array")
        if self.scale <= 0 or not math.isfinite(self.scale):
            raise ValueError("scale must be positive and finite")
        object.__setattr__(self, "centers", centers)

    @property
    def n(self) -> int:
        return self.centers.shape[0]


def _kmeans(data: np.ndarray, k: int, rng: np.random.Generator,
            tol: float = 1e-6, max_iter: int = 300) -> np.ndarray:
    """Lloyd iterations with k-means++ seeding; returns the centers.

    Stops when the relative inertia decrease falls below ``tol``.  Empty
    clusters are re-seeded from the point farthest from its assigned
    center; persistent empties abort.
    """
    n, dim = data.shape
    centers = np.empty((k, dim))
    centers[0] = data[rng.integers(n)]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = data[rng.integers(n, size=k - j)]
            break
        centers[j] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((data - centers[j]) ** 2).sum(axis=1))

    prev = np.inf
    empty_rounds = 0
    for _ in range(max_iter):
        D = cdist(data, centers, "sqeuclidean")
        labels = D.argmin(axis=1)
        assigned = D[np.arange(n), labels]
        inertia = float(assigned.sum())
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, dim))
        np.add.at(sums, labels, data)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        empties = np.where(~nonempty)[0]
        if empties.size:
            empty_rounds += 1
            if empty_rounds > 10:
                raise NumericError("k-means: persistent empty clusters")
            far = np.argsort(-assigned)
            for j, idx in zip(empties, far):
                centers[j] = data[idx]
            continue
        empty_rounds = 0
        if prev - inertia < tol * abs(prev):
            break
        prev = inertia
    return centers


def build_dictionary(ds: SnapshotDataset, N: int = 400, seed: int = 0) -> RbfDictionary:
    """K-means centers over all snapshot rows, bandwidth from center spacing.

    The bandwidth is the median distance over 1000 randomly sampled
    center pairs (all pairs when there are fewer).
    """
    if N > ds.M:
        raise ValueError(f"dictionary size {N} exceeds snapshot count {ds.M}")
    rng = np.random.default_rng(seed)
    data = np.vstack([ds.X0, ds.X1])
    centers = _kmeans(data, N, rng)
    n_pairs = N * (N - 1) // 2
    if n_pairs <= 1000:
        iu = np.triu_indices(N, k=1)
        dists = np.linalg.norm(centers[iu[0]] - centers[iu[1]], axis=1)
    else:
        pairs = np.empty((1000, 2), dtype=int)
        got = 0
        while got < 1000:
            cand = rng.integers(0, N, size=(1000 - got, 2))
            cand = cand[cand[:, 0] != cand[:, 1]]
            pairs[got:got + len(cand)] = cand
            got += len(cand)
        dists = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=1)
    scale = float(np.median(dists))
    return RbfDictionary(centers=centers, scale=scale)


def eval_dictionary(dic: RbfDictionary, states: np.ndarray) -> np.ndarray:
    """Feature matrix ``Psi[m, n] = exp(-|state_m - center_n|^2 / (2 scale^2))``."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != dic.centers.shape[1]:
        raise ValueError(
            f"state dimension {states.shape[1]} does not match centers "
            f"({dic.centers.shape[1]})"
        )
    return np.exp(-cdist(states, dic.centers, "sqeuclidean") / (2.0 * dic.scale**2))


@dataclass(frozen=True)
class ResDmdMatrices:
    """Gram-type matrices of the Galerkin problem under the empirical measure."""

    G: np.ndarray
    A: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        for name in ("G", "A", "L"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square")
            object.__setattr__(self, name, M)
        for name in ("G", "L"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, atol=1e-12 * max(np.abs(M).max(), 1.0)):
                raise ValueError(f"{name} must be symmetric")

    @property
    def n(self) -> int:
        return self.G.shape[0]


def assemble_matrices(Psi0: np.ndarray, Psi1: np.ndarray) -> ResDmdMatrices:
    """Empirical-measure Galerkin matrices with uniform 1/M quadrature weights."""
    Psi0 = np.asarray(Psi0, dtype=float)
    Psi1 = np.asarray(Psi1, dtype=float)
    if Psi0.shape != Psi1.shape:
        raise ValueError("feature matrices must have equal shapes")
    M = Psi0.shape[0]
    G = Psi0.T @ Psi0 / M
    A = Psi0.T @ Psi1 / M
    L = Psi1.T @ Psi1 / M
    return ResDmdMatrices(G=(G + G.T) / 2.0, A=A, L=(L + L.T) / 2.0)


@dataclass(frozen=True)
class _Reduced:
    """Whitened restriction to the numerically trustworthy range of G."""

    W: np.ndarray      # (N, r): maps reduced coords to dictionary coefficients
    Ahat: np.ndarray   # (r, r)
    Lhat: np.ndarray   # (r, r)

    @property
    def r(self) -> int:
        return self.W.shape[1]


def _reduce(mats: ResDmdMatrices, rank_tol: float) -> _Reduced:
    if not 0 < rank_tol < 1:
        raise ValueError("rank_tol must lie in (0, 1)")
    lam, V = np.linalg.eigh(mats.G)
    lam = lam[::-1]
    V = V[:, ::-1]
    if lam[0] <= 0:
        raise NumericError("G is numerically zero")
    keep = lam > rank_tol * lam[0]
    W = V[:, keep] / np.sqrt(lam[keep])
    return _Reduced(W=W, Ahat=W.T @ mats.A @ W, Lhat=W.T @ mats.L @ W)


def dmd_eigs(mats: ResDmdMatrices, rank_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin eigenpairs ``A g = lambda G g`` on the retained subspace.

    Returns ``(eigvals, coeffs)`` where column k of ``coeffs`` is the
    dictionary-coefficient vector of eigenvalue k, normalized so that
    ``g* G g = 1``.
    """
    red = _reduce(mats, rank_tol)
    w, V = np.linalg.eig(red.Ahat)
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    return w, red.W @ V


def residual(z: complex, g: np.ndarray, mats: ResDmdMatrices) -> float:
    """Empirical estimate of ``||(K - z) g|| / ||g||`` for coefficient vector g."""
    g = np.asarray(g).reshape(-1)
    denom = float(np.real(np.conj(g) @ mats.G @ g))
    if denom <= 0:
        raise ValueError("residual requires g* G g > 0")
    z = complex(z)
    q = (np.conj(g) @ mats.L @ g
         - np.conj(z) * (np.conj(g) @ mats.A @ g)
         - z * (np.conj(g) @ mats.A.T @ g)
         + abs(z) ** 2 * denom)
    return math.sqrt(max(float(np.real(q)), 0.0) / denom)


def _min_residual_fn(red: _Reduced):
    eye = np.eye(red.r)

    def min_residual(z: complex) -> float:
        z = complex(z)
        H = red.Lhat - np.conj(z) * red.Ahat - z * red.Ahat.T + abs(z) ** 2 * eye
        w = eigvalsh(H, subset_by_index=(0, 0), check_finite=False)
        return math.sqrt(max(float(w[0]), 0.0))

    return min_residual


def default_koopman_axes() -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(-1.5, 1.5, 201), np.linspace(-1.5, 1.5, 201)


def koopman_pseudospectrum(mats: ResDmdMatrices, re_axis=None, im_axis=None,
                           rank_tol: float = 1e-12, workers: int = 1) -> PseudospectrumGrid:
    """Minimal residual over observables at each grid point.

    The value at ``z`` is the square root of the smallest eigenvalue of
    the Hermitian pencil ``(L - conj(z) A - z A* + |z|^2 G, G)`` restricted
    to the retained subspace of G.
    """
    if re_axis is None or im_axis is None:
        d_re, d_im = default_koopman_axes()
        re_axis = d_re if re_axis is None else re_axis
        im_axis = d_im if im_axis is None else im_axis
    re_axis = np.asarray(re_axis, dtype=float)
    im_axis = np.asarray(im_axis, dtype=float)
    min_residual = _min_residual_fn(_reduce(mats, rank_tol))

    def row(b: float) -> np.ndarray:
        return np.array([min_residual(complex(a, b)) for a in re_axis])

    values = np.vstack(parallel_map(row, im_axis, workers))
    return PseudospectrumGrid(re_axis, im_axis, values)


def eigenfunction_field(dic: RbfDictionary, g: np.ndarray,
                        query_states: np.ndarray) -> np.ndarray:
    """Evaluate the observable with coefficients ``g`` at query states."""
    g = np.asarray(g).reshape(-1)
    if g.size != dic.n:
        raise ValueError(f"coefficient vector length {g.size} != dictionary size {dic.n}")
    return eval_dictionary(dic, query_states) @ g


def koopman_kreiss(mats: ResDmdMatrices, c: float = 1.05, radial_grid: int = 96,
                   angular_grid: int = 128, r_max: float | None = None,
                   rank_tol: float = 1e-12, workers: int = 1) -> KreissResult:
    """Kreiss constant with the reciprocal minimal residual as resolvent norm.

    Requires ``c >= 1`` (the circle eigenvalues sit at modulus about 1)
    and ``c`` strictly above the retained spectral radius.
    """
    if c < 1.0:
        raise ValueError("koopman_kreiss requires c >= 1")
    red = _reduce(mats, rank_tol)
    radius = float(np.abs(np.linalg.eigvals(red.Ahat)).max())
    if radius >= c:
        raise ValueError(
            f"retained spectral radius {radius:.6f} >= c = {c}; "
            "increase c above the retained spectrum"
        )
    min_residual = _min_residual_fn(red)

    def resolvent(z: complex) -> float:
        v = min_residual(z)
        return float("inf") if v == 0.0 else 1.0 / v

    return kreiss_constant(resolvent, c, radial_grid=radial_grid,
                           angular_grid=angular_grid, r_max=r_max, workers=workers)


def cycle_embedding(cycle: dde.LimitCycle, taus, d: int, lag: float) -> np.ndarray:
    """Embedded states on the limit cycle at phases ``taus`` (periodic pullback)."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    blocks = [cycle.state(taus - k * lag) for k in range(d)]
    return np.concatenate(blocks, axis=-1)


@dataclass(frozen=True)
class LatticeResult:
    """Unit-circle eigenvalues organized as integer harmonics of a base phase."""

    base_phase: float
    indices: np.ndarray          # indices into the eigenvalue array
    harmonics: np.ndarray        # integer k per member, phase ~ k * base_phase
    deviations: np.ndarray       # |phase - k * base_phase| per member
    consecutive: bool = field(default=False)

    @property
    def size(self) -> int:
        return self.indices.size


def find_circle_lattice(eigvals: np.ndarray, residuals: np.ndarray,
                        modulus_band: tuple[float, float] = (0.95, 1.05),
                        res_max: float = 0.15,
                        phase_tol: float = 0.05) -> LatticeResult:
    """Select near-unit-modulus, low-residual eigenvalues and fit the phase lattice.

    The base phase is the smallest positive phase among the selected
    eigenvalues; each member phase is matched to its nearest integer
    multiple.  ``consecutive`` records whether the positive harmonics are
    exactly 1, 2, ..., m with no gaps.
    """
    eigvals = np.asarray(eigvals)
    residuals = np.asarray(residuals, dtype=float)
    mod = np.abs(eigvals)
    sel = np.where((mod >= modulus_band[0]) & (mod <= modulus_band[1])
                   & (residuals <= res_max))[0]
    phases = np.angle(eigvals[sel])
    positive = phases[phases > 1e-6]
    if positive.size == 0:
        return LatticeResult(base_phase=float("nan"), indices=sel,
                             harmonics=np.zeros(sel.size, dtype=int),
                             deviations=np.full(sel.size, np.nan), consecutive=False)
    base = float(positive.min())
    ks = np.rint(phases / base).astype(int)
    dev = np.abs(phases - ks * base)
    within = dev <= phase_tol
    members = sel[within]
    ks = ks[within]
    dev = dev[within]
    pos_ks = np.sort(ks[ks > 0])
    consecutive = bool(pos_ks.size and np.array_equal(pos_ks, np.arange(1, pos_ks.size + 1)))
    order = np.argsort(ks)
    return LatticeResult(base_phase=base, indices=members[order],
                         harmonics=ks[order], deviations=dev[order],
                         consecutive=consecutive)


@dataclass(frozen=True)
class KoopmanSweepRow:
    h: float
    kreiss: float | None
    c: float
    error: str | None = None


def koopman_sweep_h(h_values: Sequence[float], p_template: dde.NondimParams,
                    n_init: int = 2000, dict_size: int = 400, seed: int = 0,
                    c: float = 1.05, rank_tol: float = 1e-12, d: int = 10,
                    step: float = 1e-3, transient: float = 200.0,
                    workers: int = 1) -> list[KoopmanSweepRow]:
    """Kreiss constant of the data-driven operator for each drive value.

    The cycle, sampling interval, snapshots, and dictionary are all
    recomputed per ``h`` (the period, and with it ``delta_tau``, changes).
    """
    rows = []
    for h in h_values:
        p = p_template.with_h(float(h))
        try:
            cycle = dde.find_limit_cycle(p, transient=transient, step=step)
            cfg = default_embedding(cycle, n_init=n_init, seed=seed, d=d)
            ds = generate_snapshots(p, cfg, step=step)
            dic = build_dictionary(ds, N=dict_size, seed=seed)
            mats = assemble_matrices(eval_dictionary(dic, ds.X0),
                                     eval_dictionary(dic, ds.X1))
            kr = koopman_kreiss(mats, c=c, rank_tol=rank_tol, workers=workers)
            rows.append(KoopmanSweepRow(float(h), kr.value, c))
        except Exception as exc:  # noqa: BLE001 - row-level flagging by contract
            rows.append(KoopmanSweepRow(float(h), None, c,
                                        f"{type(exc).__name__}: {exc}"))
    return rows


def write_eigs_csv(path, eigvals: np.ndarray, residuals: np.ndarray) -> None:
    write_rows_csv(path, ["re", "im", "residual"],
                   [(float(z.real), float(z.imag), float(r))
                    for z, r in zip(eigvals, residuals)])


def write_koopman_sweep_csv(path, rows: Sequence[KoopmanSweepRow]) -> None:
    write_rows_csv(path, ["h", "kreiss", "c"],
                   [(r.h, r.kreiss, r.c) for r in rows])
