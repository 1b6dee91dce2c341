"""Heat-side <-> Hermite-side transforms and the rough-metric coordinate change.

The conjugation dictionary is

    t = e^{-4s},  x = 2 e^{-2s} y,
    v(s, y) = e^{-ns} e^{-y^2/2} u(t, x),
    g(s, y) = e^{-(n+4)s} e^{-y^2/2} f(t, x),

under which (d/dt + Laplacian) u = f  iff  (d/ds + H) v = g with the
Hermite operator H = -Laplacian + y^2.  This is the unique scaling for
which t^{n/4} e^{-x^2/8t} = e^{-ns} e^{-y^2/2} and the identity is
exact; it fixes y = x t^{-1/2} / 2.

The coordinate change for a rough metric g(t, x) assembles the frozen
linear maps chi_ij = g^{-1/2}(t_i, x_ij) at the anchor points
(e^{-4i}, e^{-2i+j} e_1) through a partition of unity that is constant
near every anchor, so the pushforward metric is exactly the identity
there.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hermite import HermiteBasis, project_all, reconstruct
from .partition import PartitionWindow
from .regularize import AlphaTable
from .smooth import pou_eta

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# conformal transform
# ---------------------------------------------------------------------------

def heat_coords(s, y):
    """(t, x) image of Hermite-side points; y has a trailing dim axis."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.exp(-4.0 * s)
    x = 2.0 * np.exp(-2.0 * s)[..., None] * y if y.ndim > s.ndim else 2.0 * np.exp(-2.0 * s) * y
    return t, x


@dataclass
class HermiteSample:
    """Values on the tensor (s-grid) x (quadrature y-grid)."""

    basis: HermiteBasis
    s_grid: np.ndarray
    values: np.ndarray  # (ns, n_points)

    def __post_init__(self):
        expected = (len(self.s_grid), self.basis.grid().shape[0])
        if self.values.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {self.values.shape}")


@dataclass
class HeatSample:
    """Values of u on the heat-side image of a Hermite grid.

    The spatial grid is s-dependent (x = 2 sqrt(t) y), so each time
    slice carries its own scaled copy of the quadrature nodes.
    """

    basis: HermiteBasis
    s_grid: np.ndarray
    values: np.ndarray

    @property
    def t_grid(self):
        return np.exp(-4.0 * self.s_grid)

    def x_grid(self, slice_index: int):
        t = math.exp(-4.0 * self.s_grid[slice_index])
        return 2.0 * math.sqrt(t) * self.basis.grid()

    @classmethod
    def from_function(cls, basis: HermiteBasis, s_grid, u_fn) -> "HeatSample":
        s_grid = np.asarray(s_grid, dtype=float)
        pts = basis.grid()
        vals = np.empty((len(s_grid), pts.shape[0]))
        for k, s in enumerate(s_grid):
            t = math.exp(-4.0 * s)
            vals[k] = u_fn(t, 2.0 * math.sqrt(t) * pts)
        return cls(basis, s_grid, vals)


def _conjugation_factor(basis: HermiteBasis, s_grid, extra_exp: float):
    s_grid = np.asarray(s_grid, dtype=float)
    pts = basis.grid()
    y2 = np.sum(pts * pts, axis=-1)
    return np.exp(-(basis.dim + extra_exp) * s_grid)[:, None] * np.exp(-0.5 * y2)[None, :]


def to_hermite(u: HeatSample) -> HermiteSample:
    """v = e^{-ns} e^{-y^2/2} u on the matching grid."""
    fac = _conjugation_factor(u.basis, u.s_grid, 0.0)
    return HermiteSample(u.basis, u.s_grid, fac * u.values)


def from_hermite(v: HermiteSample) -> HeatSample:
    fac = _conjugation_factor(v.basis, v.s_grid, 0.0)
    return HeatSample(v.basis, v.s_grid, v.values / fac)


def rhs_to_hermite(f: HeatSample) -> HermiteSample:
    """g = -4 e^{-(n+4)s} e^{-y^2/2} f, the right-hand-side dictionary.

    The -4 comes from 4t (d/dt + Laplacian) being the operator that
    conjugates to -(d/ds + H); without it the equivalence is off by a
    constant factor.
    """
    fac = _conjugation_factor(f.basis, f.s_grid, 4.0)
    return HermiteSample(f.basis, f.s_grid, -4.0 * fac * f.values)


def apply_H_spectral(basis: HermiteBasis, values) -> np.ndarray:
    """H on grid samples through the eigenbasis (no discretization error
    for band-limited data)."""
    sv = project_all(basis, values)
    return reconstruct(basis, sv.copy_map(lambda lam, c: lam * c))


_FD_STENCILS = {
    2: (np.array([-0.5, 0.0, 0.5]), 1),
    4: (np.array([1.0 / 12, -2.0 / 3, 0.0, 2.0 / 3, -1.0 / 12]), 2),
    6: (np.array([-1.0 / 60, 3.0 / 20, -3.0 / 4, 0.0, 3.0 / 4, -3.0 / 20, 1.0 / 60]), 3),
}


def conjugation_identity_check(basis: HermiteBasis, s_grid, u_fn, f_fn,
                               fd_order: int = 4) -> dict:
    """Relative residual of (d/ds + H) v = g against sampled u, f.

    d/ds uses a central finite difference of the given order, H is
    spectral; the residual is reported over the interior slices where
    the stencil fits.  u_fn(t, x_points) and f_fn(t, x_points) must be
    vectorized over the point cloud.
    """
    stencil, reach = _FD_STENCILS[fd_order]
    u = HeatSample.from_function(basis, s_grid, u_fn)
    f = HeatSample.from_function(basis, s_grid, f_fn)
    v = to_hermite(u)
    g = rhs_to_hermite(f)
    ds = float(s_grid[1] - s_grid[0])

    dv = np.zeros_like(v.values)
    for off, c in zip(range(-reach, reach + 1), stencil):
        if c != 0.0:
            dv[reach:-reach] += c * v.values[reach + off: len(s_grid) - reach + off]
    dv /= ds

    Hv = np.stack([apply_H_spectral(basis, v.values[k])
                   for k in range(len(s_grid))])
    resid = dv[reach:-reach] + Hv[reach:-reach] - g.values[reach:-reach]
    w = basis.grid_weights()
    num = math.sqrt(float(np.sum(w * resid ** 2)))
    den = math.sqrt(float(np.sum(w * g.values[reach:-reach] ** 2)))
    return dict(residual=num / max(den, 1e-300), fd_order=fd_order, ds=ds)


# ---------------------------------------------------------------------------
# rough metrics and the Appendix-A coordinate change
# ---------------------------------------------------------------------------

@dataclass
class MetricField:
    """Symmetric coefficient field g(t, x) with anchor-lattice metadata.

    ``fn(t, x) -> (n, n)`` must accept a single point; the anchor
    lattice spans rows i in i_range and columns j in [0, j_top].
    """

    dim: int
    fn: Callable
    i_range: tuple[int, int] = (0, 6)
    j_top: int = 6

    def __call__(self, t: float, x) -> np.ndarray:
        g = np.asarray(self.fn(float(t), np.asarray(x, dtype=float)), dtype=float)
        if g.shape != (self.dim, self.dim):
            raise ValueError(f"metric must be {self.dim}x{self.dim}, got {g.shape}")
        return 0.5 * (g + g.T)

    def anchors(self):
        out = []
        for i in range(self.i_range[0], self.i_range[1] + 1):
            for j in range(self.j_top + 1):
                x = np.zeros(self.dim)
                x[0] = math.exp(-2.0 * i + j)
                out.append((i, j, math.exp(-4.0 * i), x))
        return out


def identity_metric(dim: int, **kw) -> MetricField:
    return MetricField(dim=dim, fn=lambda t, x: np.eye(dim), **kw)


def constant_metric(g0, **kw) -> MetricField:
    g0 = np.asarray(g0, dtype=float)
    return MetricField(dim=g0.shape[0], fn=lambda t, x: g0, **kw)


def random_perturbation_metric(dim: int, rng: np.random.Generator,
                               amplitude: float = 0.05, n_bumps: int = 4,
                               i_range=(0, 6), j_top=6) -> MetricField:
    """id plus smooth symmetric bumps localized on dyadic cells."""
    lo, hi = i_range
    bumps = []
    for _ in range(n_bumps):
        S = rng.standard_normal((dim, dim))
        S = 0.5 * (S + S.T)
        S /= max(np.abs(np.linalg.eigvalsh(S)).max(), 1e-12)
        ic = rng.uniform(lo, hi)
        jc = rng.uniform(0.0, j_top)
        amp = amplitude * rng.uniform(0.3, 1.0)
        bumps.append((amp, ic, jc, S))

    def fn(t, x):
        u = -math.log(t) / 4.0
        w = 1.0 + 2.0 * float(np.linalg.norm(x)) / math.sqrt(t)
        g = np.eye(dim)
        for amp, ic, jc, S in bumps:
            g = g + amp * float(pou_eta(u - ic) * pou_eta(math.log(w) - jc)) * S
        return g

    return MetricField(dim=dim, fn=fn, i_range=i_range, j_top=j_top)


def _inv_sqrt_spd(g: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    vals, vecs = np.linalg.eigh(g)
    if vals.min() <= 0.0:
        raise ValueError("metric sample is not positive definite")
    vals = np.maximum(vals, floor)
    return (vecs * vals ** -0.5) @ vecs.T


class ChiMap:
    """Assembled coordinate change chi(t, x) = sum eta_ij chi_ij x.

    The partition of unity lives on the lattice coordinates
    (u, v) = (-ln t / 4, ln(2 |x| t^{-1/2}) - ln 2 + 1/2), with indices
    clamped to the anchor window; every anchor sits mid-plateau in both
    directions, so eta_ij = 1 with all derivatives flat there.
    """

    def __init__(self, metric: MetricField, eig_floor: float = 1e-8):
        self.metric = metric
        self.dim = metric.dim
        self.i_lo, self.i_hi = metric.i_range
        self.j_top = metric.j_top
        self.maps = {}
        for i, j, t, x in metric.anchors():
            self.maps[(i, j)] = _inv_sqrt_spd(metric(t, x), eig_floor)

    # -- lattice coordinates -------------------------------------------------
    def _uv(self, t: float, x):
        u = -math.log(t) / 4.0
        r = float(np.linalg.norm(x))
        v = math.log(max(2.0 * r / math.sqrt(t), 1e-300)) + 0.5
        return u, v

    def _weights(self, t: float, x, order: int = 0):
        """eta_ij and (optionally) lattice-coordinate derivatives."""
        u, v = self._uv(t, x)
        wgt = {}
        for di in range(-2, 3):
            i = math.floor(u) + di
            wi = float(pou_eta(u - i))
            if wi == 0.0 and order == 0:
                continue
            ic = min(max(i, self.i_lo), self.i_hi)
            for dj in range(-2, 3):
                j = math.floor(v) + dj
                wj = float(pou_eta(v - j))
                if wi * wj == 0.0:
                    continue
                jc = min(max(j, 0), self.j_top)
                key = (ic, jc)
                wgt[key] = wgt.get(key, 0.0) + wi * wj
        return wgt

    def _weight_grads(self, t: float, x):
        """d eta_ij / dx and d eta_ij / dt via the chain rule."""
        u, v = self._uv(t, x)
        r = float(np.linalg.norm(x))
        xhat = np.zeros(self.dim)
        if r > 0.0:
            xhat = np.asarray(x, dtype=float) / r
        dv_dx = xhat / max(r, 1e-300)       # grad of ln(2|x|/sqrt(t))
        du_dt = -1.0 / (4.0 * t)
        dv_dt = -0.5 / t
        grads, dts = {}, {}
        for di in range(-2, 3):
            i = math.floor(u) + di
            wi = float(pou_eta(u - i))
            wi_p = float(pou_eta(u - i, order=1))
            if wi == 0.0 and wi_p == 0.0:
                continue
            ic = min(max(i, self.i_lo), self.i_hi)
            for dj in range(-2, 3):
                j = math.floor(v) + dj
                wj = float(pou_eta(v - j))
                wj_p = float(pou_eta(v - j, order=1))
                if wi * wj == 0.0 and wi_p * wj == 0.0 and wi * wj_p == 0.0:
                    continue
                jc = min(max(j, 0), self.j_top)
                key = (ic, jc)
                g = grads.get(key, np.zeros(self.dim))
                grads[key] = g + wi * wj_p * dv_dx
                dts[key] = dts.get(key, 0.0) + wi_p * wj * du_dt + wi * wj_p * dv_dt
        return grads, dts

    # -- evaluators ------------------------------------------------------------
    def chi(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.dim)
        for key, w in self._weights(t, x).items():
            out += w * (self.maps[key] @ x)
        return out

    def dchi_dx(self, t: float, x) -> np.ndarray:
        """Jacobian d chi_l / d x_m as matrix [l, m]."""
        x = np.asarray(x, dtype=float)
        J = np.zeros((self.dim, self.dim))
        for key, w in self._weights(t, x).items():
            J += w * self.maps[key]
        grads, _ = self._weight_grads(t, x)
        for key, gw in grads.items():
            J += np.outer(self.maps[key] @ x, gw)
        return J

    def dchi_dt(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _, dts = self._weight_grads(t, x)
        out = np.zeros(self.dim)
        for key, dw in dts.items():
            out += dw * (self.maps[key] @ x)
        return out

    def d2chi_dx2(self, t: float, x, rel_step: float = 1e-5) -> np.ndarray:
        """Second spatial derivatives [l, m, q] by differencing the
        analytic Jacobian; step scales with the parabolic distance."""
        x = np.asarray(x, dtype=float)
        h = rel_step * (math.sqrt(t) + float(np.linalg.norm(x)))
        out = np.zeros((self.dim, self.dim, self.dim))
        for q in range(self.dim):
            e = np.zeros(self.dim)
            e[q] = h
            out[:, :, q] = (self.dchi_dx(t, x + e) - self.dchi_dx(t, x - e)) / (2.0 * h)
        return out


def build_chi(metric: MetricField, eig_floor: float = 1e-8) -> ChiMap:
    return ChiMap(metric, eig_floor)


def pushforward_metric(metric: MetricField, chi: ChiMap):
    """(g~, d~) field evaluators after the coordinate change.

    g~ = J g J^T with J the spatial Jacobian of chi.  The first-order
    field d~ collects the time derivative of chi and the contraction of
    the second derivatives with g, normalized so that (x_k / t) d~^{kl}
    is the produced first-order coefficient; |d~| <~ t/x^2 is the
    recorded bound.
    """

    def g_tilde(t, x):
        J = chi.dchi_dx(t, x)
        return J @ metric(t, x) @ J.T

    def d_tilde(t, x):
        x = np.asarray(x, dtype=float)
        r2 = float(np.dot(x, x))
        if r2 == 0.0:
            return np.zeros((chi.dim, chi.dim))
        J = chi.dchi_dx(t, x)
        D2 = chi.d2chi_dx2(t, x)
        g = metric(t, x)
        contracted = np.einsum("lij,ij->l", D2, g)
        c = chi.dchi_dt(t, x) + np.linalg.solve(J, contracted)
        return t * np.outer(x / r2, c)

    return g_tilde, d_tilde


def anchor_defect(metric: MetricField, chi: ChiMap) -> float:
    """max over anchors of |g~(t_i, x_ij) - id|."""
    g_tilde, _ = pushforward_metric(metric, chi)
    worst = 0.0
    for i, j, t, x in metric.anchors():
        worst = max(worst, float(np.abs(g_tilde(t, x) - np.eye(chi.dim)).max()))
    return worst


def jacobian_deviation(chi: ChiMap, rng: np.random.Generator,
                       n_samples: int = 200) -> float:
    """sup-norm estimate of |d chi / dx - id| over the anchor region."""
    worst = 0.0
    for _ in range(n_samples):
        u = rng.uniform(chi.i_lo - 0.5, chi.i_hi + 0.5)
        t = math.exp(-4.0 * u)
        j = rng.uniform(0.0, chi.j_top)
        r = 0.5 * math.sqrt(t) * (math.exp(j) - 1.0) + 1e-3 * math.sqrt(t)
        x = np.zeros(chi.dim)
        vec = rng.standard_normal(chi.dim)
        x = r * vec / np.linalg.norm(vec)
        worst = max(worst, float(np.abs(chi.dchi_dx(t, x) - np.eye(chi.dim)).max()))
    return worst


# ---------------------------------------------------------------------------
# roughness ingestion: (gbound)-style cell seminorms -> alpha table
# ---------------------------------------------------------------------------

def roughness_alpha(fields, window: PartitionWindow, dim: int,
                    delta1: float = 1.0, n_t: int = 3, n_j: int = 4,
                    normalize: bool = True):
    """Sampled cell seminorms of coefficient fields, scaled by 1/delta1.

    ``fields`` is a list of callables d(t, x) -> array in which every
    entry is a generic coefficient deviation.  Per cell the recorded
    quantity is sup |d| + e^{j-2i} Lip_x(d) + C_t-modulus(d) with the
    anisotropic time modulus m(rho) = e^{4i} rho + e^{2(2i-j)/3} rho^{1/3},
    all estimated from a small deterministic point cloud on the first
    coordinate ray.  Returns (AlphaTable, raw_l1) with the table
    rescaled to l1 mass <= 1 when ``normalize`` (the scale factor is
    folded into delta1).
    """
    vals = np.zeros((window.n_rows, window.j_cap + 1))
    for i in window.rows():
        for j in range(window.j_cap + 1):
            ts = np.exp(np.linspace(-4.0 * i - 4.0, -4.0 * i, n_t + 1))[1:]
            sup = lip = modt = 0.0
            for t in ts:
                ws = np.linspace(math.exp(j), math.exp(j + 1), n_j)
                rs = 0.5 * math.sqrt(t) * (ws - 1.0)
                pts = [np.concatenate([[r], np.zeros(dim - 1)]) for r in rs]
                samples = [np.concatenate([np.ravel(d(t, p)) for d in fields])
                           for p in pts]
                sup = max(sup, max(float(np.abs(sm).max()) for sm in samples))
                for a in range(len(pts) - 1):
                    dr = float(np.linalg.norm(pts[a + 1] - pts[a]))
                    if dr > 0:
                        lip = max(lip, float(np.abs(samples[a + 1] - samples[a]).max()) / dr)
            for a in range(len(ts) - 1):
                rho = abs(float(ts[a + 1] - ts[a]))
                m = math.exp(4.0 * i) * rho + math.exp(2.0 * (2 * i - j) / 3.0) * rho ** (1.0 / 3.0)
                x0 = np.concatenate([[0.5 * math.sqrt(ts[a]) * (math.exp(j) - 1.0) + 1e-9],
                                     np.zeros(dim - 1)])
                diff = max(float(np.abs(d(ts[a + 1], x0) - d(ts[a], x0)).max())
                           for d in fields)
                modt = max(modt, diff / m)
            vals[i - window.i_min, j] = (sup + math.exp(j - 2.0 * i) * lip + modt) / delta1
    raw_l1 = float(vals.sum())
    scale = 1.0
    if normalize and raw_l1 > 1.0:
        scale = raw_l1
        vals = vals / scale
    return AlphaTable(window=window, values=vals, delta1=delta1 * scale), raw_l1


# ---------------------------------------------------------------------------
# CSV interchange for metric fields
# ---------------------------------------------------------------------------

def metric_to_csv(path, metric: MetricField, points):
    """Rows (t, x_1..x_n, g_11..g_nn row-major) over a point cloud."""
    n = metric.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{m+1}" for m in range(n)]
                        + [f"g{a+1}{b+1}" for a in range(n) for b in range(n)])
        for t, x in points:
            g = metric(t, x)
            writer.writerow([f"{t:.17g}"] + [f"{xi:.17g}" for xi in np.atleast_1d(x)]
                            + [f"{gij:.17g}" for gij in g.ravel()])


def metric_from_csv(path, dim: int, **kw) -> MetricField:
    """Nearest-neighbor metric interpolant in (ln t, x / sqrt(t)) coords."""
    ts, xs, gs = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t = float(row["t"])
            x = np.array([float(row[f"x{m+1}"]) for m in range(dim)])
            g = np.array([[float(row[f"g{a+1}{b+1}"]) for b in range(dim)]
                          for a in range(dim)])
            ts.append(t)
            xs.append(x)
            gs.append(g)
    ts = np.array(ts)
    xs = np.stack(xs)
    gs = np.stack(gs)
    keys = np.concatenate([np.log(ts)[:, None] / 4.0,
                           xs / np.sqrt(ts)[:, None]], axis=1)

    def fn(t, x):
        q = np.concatenate([[math.log(t) / 4.0], np.asarray(x) / math.sqrt(t)])
        k = int(np.argmin(np.sum((keys - q) ** 2, axis=1)))
        return gs[k]

    return MetricField(dim=dim, fn=fn, **kw)
