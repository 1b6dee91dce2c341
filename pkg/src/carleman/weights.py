"""Convex weight construction driven by a regularized epsilon table.

Three layers:

* ``build_h``: a piecewise-quadratic convex temporal weight.  Unit
  intervals [i, i+1] whose mass budget rho * eps_i * tau falls below
  1/4 become exact plateaus (h' frozen at a half-integer, so the
  distance to the integers is exactly 1/2 and h'' = 0); the rest become
  ramps with constant curvature equal to the mass rounded to an integer
  rise, which keeps h'' >= 1 while h' crosses integer values.  h'
  therefore starts and ends every interval on a half-integer, h is C^1,
  and h''' vanishes identically inside pieces.

* ``build_phi``: the spherically symmetric spatial weight
  phi(s, y) = sqrt(tau) chi(|y|/sqrt(tau)) sum_j a_j(s) phi_j(|y|)
  with phi_j(r) = sqrt(e^{2j} + r^2) and log-interpolated amplitudes
  ln a_j(s) = sum_i eta(s - i) ln eps_ij.  All derivatives used
  downstream (4 radial, 2 temporal) are closed-form.

* ``AuxWeights`` / ``eval_aux``: the localization weights a_int, a,
  a_perp and their coarsened versions b, b_perp, built as smooth
  interpolations of the per-cell target values with all approximate
  constants fixed at 1.

Cells on the Hermite side are addressed by s in [i, i+1) and
e^j <= 1 + |y| < e^{j+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .regularize import EpsilonTable
from .smooth import cutoff_chi, pou_eta, smoothstep


class BudgetError(RuntimeError):
    """Raised when the h' rise cannot fit inside [tau, 2 tau]."""


# ---------------------------------------------------------------------------
# temporal weight h
# ---------------------------------------------------------------------------

@dataclass
class WeightH:
    """Piecewise-quadratic convex weight with closed-form derivatives.

    pieces[k] = (h_k, hp_k, hpp_k) gives h on [knots[k], knots[k+1]] as
    h_k + hp_k u + hpp_k u^2 / 2 with u = s - knots[k].
    """

    tau: float
    knots: np.ndarray
    pieces: np.ndarray
    rho: float
    interval_kinds: list[str] = field(default_factory=list)
    dropped_mass: float = 0.0

    @property
    def s_min(self) -> float:
        return float(self.knots[0])

    @property
    def s_max(self) -> float:
        return float(self.knots[-1])

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.knots, s, side="right") - 1,
                    0, len(self.pieces) - 1)
        u = s - self.knots[k]
        return k, u

    def h(self, s):
        k, u = self._locate(s)
        c = self.pieces[k]
        return c[..., 0] + c[..., 1] * u + 0.5 * c[..., 2] * u * u

    def hp(self, s):
        k, u = self._locate(s)
        c = self.pieces[k]
        return c[..., 1] + c[..., 2] * u

    def hpp(self, s):
        k, _ = self._locate(s)
        return self.pieces[k][..., 2].copy()

    def hppp(self, s):
        s = np.asarray(s, dtype=float)
        return np.zeros_like(s)

    def validate(self, points_per_interval: int = 1000) -> dict:
        """Sampled invariants; returns the recorded constants.

        The gap margin is h'' + dist(h', N) - 1/4; on plateau pieces it
        equals 1/4 exactly by construction.  The curvature-versus-mass
        ratios are recorded over ramp intervals only: plateaus have
        h'' = 0 by design, which is where this construction deviates
        from a two-sided eps_i tau comparison.
        """
        s = np.linspace(self.s_min, self.s_max, points_per_interval
                        * (len(self.knots) - 1) + 1)
        s = s[:-1] + 0.5 * np.diff(s)  # midpoints, avoid knot ambiguity
        hp, hpp = self.hp(s), self.hpp(s)
        dist = np.abs(hp - np.round(hp))
        gap_margin = hpp + dist - 0.25
        plateau = hpp == 0.0
        report = {
            "hp_min": float(hp.min()), "hp_max": float(hp.max()),
            "hp_in_range": bool(hp.min() >= self.tau - 1e-9
                                and hp.max() <= 2.0 * self.tau + 1e-9),
            "convex": bool(hpp.min() >= 0.0),
            "gap_margin_min": float(gap_margin.min()),
            "plateau_margin_min": float(gap_margin[plateau].min()) if plateau.any() else 0.25,
            "hppp_ratio": 0.0,  # h''' = 0 inside every piece
            "rho": self.rho,
        }
        # finite-difference consistency of h'' with the piece coefficients;
        # h is exactly quadratic inside a piece, so any stencil that stays
        # in one piece reproduces h'' up to roundoff
        ds = 1e-2
        inner = s[(s > self.s_min + ds) & (s < self.s_max - ds)]
        k, _ = self._locate(inner)
        same = (self._locate(inner - ds)[0] == k) & (self._locate(inner + ds)[0] == k)
        pts = inner[same]
        fd = (self.h(pts + ds) - 2.0 * self.h(pts) + self.h(pts - ds)) / ds ** 2
        an = self.hpp(pts)
        denom = np.maximum(np.abs(an), 1.0)
        report["hpp_fd_relerr"] = float((np.abs(fd - an) / denom).max())
        return report


def _half_integer_at_least(x: float) -> float:
    k = math.floor(x)
    return k + 0.5 if k + 0.5 >= x else k + 1.5


def build_h(eps: EpsilonTable, budget_margin: float | None = None,
            lead_intervals: int = 4) -> WeightH:
    """Plateau/ramp temporal weight from the row masses eps_i * tau.

    The uniform rescale rho keeps the total rise inside the budget
    [tau, 2 tau]; the default margin reserves the integer-rounding
    overhead of one half per interval.  ``lead_intervals`` plateau
    intervals are prepended and appended so ensemble members with
    Gaussian tails can span every data row while staying inside the
    domain of h.  Raises ``BudgetError`` when the rises cannot fit even
    after rescaling (the error reports rho).
    """
    tau = eps.tau
    w = eps.window
    masses = eps.row_sums * tau
    if budget_margin is None:
        budget_margin = 0.5 * w.n_rows + 1.0
    capped = np.minimum(masses, tau)
    total = float(capped.sum())
    rho = min(1.0, (tau - 1.0 - budget_margin) / total) if total > 0 else 1.0
    if rho <= 0.0:
        raise BudgetError(f"no budget left after margin {budget_margin} (tau = {tau})")

    p0 = _half_integer_at_least(tau)
    hp = p0
    h = 0.0
    knots = [float(w.i_min - lead_intervals)]
    pieces = []
    kinds = []
    dropped = 0.0
    for _ in range(lead_intervals):
        pieces.append((h, hp, 0.0))
        kinds.append("plateau")
        h += hp
        knots.append(knots[-1] + 1.0)
    for i in w.rows():
        m = rho * float(capped[i - w.i_min])
        if m < 0.25:
            pieces.append((h, hp, 0.0))
            kinds.append("plateau")
            dropped += m
            h += hp
        else:
            rise = max(1, round(m))
            pieces.append((h, hp, float(rise)))
            kinds.append("ramp")
            h += hp + 0.5 * rise
            hp += rise
        knots.append(float(i + 1))
    for _ in range(lead_intervals):
        pieces.append((h, hp, 0.0))
        kinds.append("plateau")
        h += hp
        knots.append(knots[-1] + 1.0)
    if hp > 2.0 * tau:
        raise BudgetError(
            f"h' budget exceeded: final h' = {hp} > 2 tau = {2 * tau} (rho = {rho})")
    return WeightH(tau=tau, knots=np.array(knots), pieces=np.array(pieces),
                   rho=rho, interval_kinds=kinds, dropped_mass=dropped)


def linear_h(tau: float, s_min: float, s_max: float, slope: float | None = None) -> WeightH:
    """Pure plateau h with a half-integer slope; the flat-case weight."""
    if slope is None:
        slope = _half_integer_at_least(tau)
    knots = np.array([s_min, s_max])
    pieces = np.array([(0.0, slope, 0.0)])
    return WeightH(tau=tau, knots=knots, pieces=pieces, rho=1.0,
                   interval_kinds=["plateau"])


# ---------------------------------------------------------------------------
# spatial weight phi
# ---------------------------------------------------------------------------

class WeightPhi:
    """Evaluator bundle for the spatial weight and its derivatives."""

    def __init__(self, eps: EpsilonTable):
        self.eps = eps
        self.tau = eps.tau
        self.window = eps.window
        self.j_cap = eps.window.j_cap
        self.sqrt_tau = math.sqrt(self.tau)
        self.support_radius = 2.0 * self.sqrt_tau
        self._logv = np.log(eps.values)  # (rows, cols)

    # -- temporal amplitudes ------------------------------------------------
    def _row_weights(self, s):
        """Partition-of-unity weights over (clamped) window rows."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        base = np.floor(s).astype(int)
        offsets = np.arange(-2, 3)
        idx = base[:, None] + offsets[None, :]
        wgt = pou_eta(s[:, None] - idx)
        dg1 = pou_eta(s[:, None] - idx, order=1)
        dg2 = pou_eta(s[:, None] - idx, order=2)
        rows = np.clip(idx - self.window.i_min, 0, self.window.n_rows - 1)
        return rows, wgt, dg1, dg2

    def log_amplitudes(self, s):
        """(L, L', L'') of ln a_j(s) = sum_i eta(s - i) ln eps_ij.

        Shapes (ns, j_cap + 1).  Out-of-window rows are redirected to
        the nearest window row, which keeps sum_i eta = 1 exact.
        """
        rows, wgt, dg1, dg2 = self._row_weights(s)
        lv = self._logv[rows]                      # (ns, 5, cols)
        L = np.einsum("sk,skj->sj", wgt, lv)
        L1 = np.einsum("sk,skj->sj", dg1, lv)
        L2 = np.einsum("sk,skj->sj", dg2, lv)
        return L, L1, L2

    def amplitudes(self, s):
        """(a_j, a_j', a_j'') stacked along the last axis-0 triple."""
        L, L1, L2 = self.log_amplitudes(s)
        a = np.exp(L)
        return a, a * L1, a * (L1 * L1 + L2)

    # -- radial profiles ----------------------------------------------------
    def _phi_j(self, r, order: int):
        """order-th radial derivative of sqrt(e^{2j} + r^2), shape (nr, cols)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))[:, None]
        e2j = np.exp(2.0 * np.arange(self.j_cap + 1, dtype=float))[None, :]
        p = np.sqrt(e2j + r * r)
        if order == 0:
            return p
        if order == 1:
            return r / p
        if order == 2:
            return e2j / p ** 3
        if order == 3:
            return -3.0 * e2j * r / p ** 5
        if order == 4:
            return 3.0 * e2j * (4.0 * r * r - e2j) / p ** 7
        raise ValueError(f"radial derivative order {order} not available")

    def eval(self, s, r, dr: int = 0, ds: int = 0):
        """partial_s^ds partial_r^dr phi at broadcastable (s, r) arrays."""
        if not 0 <= dr <= 4 or not 0 <= ds <= 2:
            raise ValueError("derivative orders limited to dr <= 4, ds <= 2")
        s = np.atleast_1d(np.asarray(s, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        s_b, r_b = np.broadcast_arrays(s, r)
        shape = s_b.shape
        sf, rf = s_b.ravel(), r_b.ravel()

        a, a1, a2 = self.amplitudes(sf)
        amp = (a, a1, a2)[ds]
        # F^{(m)}(s, r) = sum_j amp_j(s) phi_j^{(m)}(r), m = 0..dr
        F = [np.sum(amp * self._phi_j(rf, m), axis=1) for m in range(dr + 1)]

        u = rf / self.sqrt_tau
        out = np.zeros_like(rf)
        for m in range(dr + 1):
            chi_m = cutoff_chi(u, order=m) / self.sqrt_tau ** m
            out += math.comb(dr, m) * chi_m * F[dr - m]
        return (self.sqrt_tau * out).reshape(shape)

    def value(self, s, r):
        return self.eval(s, r, 0, 0)

    def eval_outer(self, s_1d, r_1d, dr: int = 0, ds: int = 0):
        """Tensor-grid evaluation, shape (ns, nr).

        Amplitudes are computed once per s value and radial profiles
        once per r value, so large grids cost two small matmuls instead
        of a flattened meshgrid sweep.
        """
        if not 0 <= dr <= 4 or not 0 <= ds <= 2:
            raise ValueError("derivative orders limited to dr <= 4, ds <= 2")
        s_1d = np.atleast_1d(np.asarray(s_1d, dtype=float))
        r_1d = np.atleast_1d(np.asarray(r_1d, dtype=float))
        amp = self.amplitudes(s_1d)[ds]              # (ns, cols)
        prof = [self._phi_j(r_1d, m) for m in range(dr + 1)]   # (nr, cols)
        u = r_1d / self.sqrt_tau
        out = np.zeros((len(s_1d), len(r_1d)))
        for m in range(dr + 1):
            chi_m = cutoff_chi(u, order=m) / self.sqrt_tau ** m  # (nr,)
            out += math.comb(dr, m) * (amp @ prof[dr - m].T) * chi_m[None, :]
        return self.sqrt_tau * out

    def radial_over_r_outer(self, s_1d, r_1d, ds: int = 0, r_floor: float = 1e-4):
        rr = np.maximum(np.asarray(r_1d, dtype=float), r_floor)
        return self.eval_outer(s_1d, rr, 1, ds) / rr[None, :]

    def bilaplacian_outer(self, s_1d, r_1d, n: int):
        rr = np.maximum(np.asarray(r_1d, dtype=float), 1e-4)
        d1 = self.eval_outer(s_1d, rr, 1, 0)
        d2 = self.eval_outer(s_1d, rr, 2, 0)
        d3 = self.eval_outer(s_1d, rr, 3, 0)
        d4 = self.eval_outer(s_1d, rr, 4, 0)
        return (d4 + 2.0 * (n - 1) * d3 / rr[None, :]
                + (n - 1) * (n - 3) * (d2 / rr[None, :] ** 2 - d1 / rr[None, :] ** 3))

    # -- assembled differential-geometry quantities -------------------------
    def radial_over_r(self, s, r, ds: int = 0, r_floor: float = 1e-4):
        """phi_r / r with the radius floored away from the origin."""
        rr = np.maximum(np.asarray(r, dtype=float), r_floor)
        return self.eval(s, rr, 1, ds) / rr

    def laplacian(self, s, r, n: int, ds: int = 0):
        return self.eval(s, r, 2, ds) + (n - 1) * self.radial_over_r(s, r, ds)

    def bilaplacian(self, s, r, n: int):
        """Delta^2 phi for the radial function in dimension n."""
        rr = np.maximum(np.asarray(r, dtype=float), 1e-4)
        d1 = self.eval(s, rr, 1, 0)
        d2 = self.eval(s, rr, 2, 0)
        d3 = self.eval(s, rr, 3, 0)
        d4 = self.eval(s, rr, 4, 0)
        return (d4 + 2.0 * (n - 1) * d3 / rr
                + (n - 1) * (n - 3) * (d2 / rr ** 2 - d1 / rr ** 3))

    # -- cell addressing ----------------------------------------------------
    def cell_of(self, s: float, r: float):
        i = int(np.clip(math.floor(s), self.window.i_min, self.window.i_max))
        j = int(np.clip(math.floor(math.log(1.0 + r)), 0, self.j_cap))
        return i, j

    def cell_r_range(self, j: int):
        return math.exp(j) - 1.0, math.exp(j + 1.0) - 1.0


def build_phi(eps: EpsilonTable) -> WeightPhi:
    return WeightPhi(eps)


# ---------------------------------------------------------------------------
# combined weight psi = h + delta2 phi
# ---------------------------------------------------------------------------

class PsiWeight:
    """psi(s, y) = h(s) + delta2 phi(s, |y|) with assembled evaluators."""

    def __init__(self, h: WeightH, phi: WeightPhi, delta2: float, dim: int = 1):
        if not 0.0 <= delta2 < 1.0:
            raise ValueError("delta2 must lie in [0, 1)")
        self.h = h
        self.phi = phi
        self.delta2 = float(delta2)
        self.dim = int(dim)
        self.tau = phi.tau

    def value(self, s, r):
        return self.h.h(s) + self.delta2 * self.phi.value(s, r)

    def ds(self, s, r):
        return self.h.hp(s) + self.delta2 * self.phi.eval(s, r, 0, 1)

    def dss(self, s, r):
        return self.h.hpp(s) + self.delta2 * self.phi.eval(s, r, 0, 2)

    def dr(self, s, r):
        return self.delta2 * self.phi.eval(s, r, 1, 0)

    def drr(self, s, r):
        return self.delta2 * self.phi.eval(s, r, 2, 0)

    def dr_over_r(self, s, r):
        return self.delta2 * self.phi.radial_over_r(s, r)

    def dsr(self, s, r):
        return self.delta2 * self.phi.eval(s, r, 1, 1)

    def laplacian(self, s, r):
        return self.delta2 * self.phi.laplacian(s, r, self.dim)

    def bilaplacian(self, s, r):
        return self.delta2 * self.phi.bilaplacian(s, r, self.dim)

    def hessian_eigs(self, s, r):
        """Radial Hessian eigenvalues (psi_rr, psi_r / r)."""
        return self.drr(s, r), self.dr_over_r(s, r)

    def heat_weight(self, t, x):
        """Original-coordinates weight e^{psi(s, y)} e^{-|x|^2 / 8t}.

        Coordinates follow the exact conjugation dictionary
        s = -ln t / 4, y = x t^{-1/2} / 2.
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        r = np.abs(x) if x.ndim == t.ndim else np.linalg.norm(x, axis=-1)
        s = -np.log(t) / 4.0
        y = 0.5 * r / np.sqrt(t)
        return np.exp(self.value(s, y)) * np.exp(-r * r / (8.0 * t))


def build_psi(h: WeightH, phi: WeightPhi, delta2: float, dim: int = 1) -> PsiWeight:
    return PsiWeight(h, phi, delta2, dim)


# ---------------------------------------------------------------------------
# auxiliary localization weights
# ---------------------------------------------------------------------------

def _smooth_max(u, v, p: int = 8):
    """(u^p + v^p)^{1/p}: equals max within 2^{1/p} and is exact at v = 0."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    m = np.maximum(u, np.maximum(v, 1e-300))
    return m * ((u / m) ** p + (v / m) ** p) ** (1.0 / p)


class AuxWeights:
    """Smooth realizations of a_int, a, a_perp and the coarsened b, b_perp.

    All approximate equalities in the defining formulas are pinned at
    constant 1.  The radial dependence enters through rho = 1 + r; the
    coarsening freezes rho at e^{j(i)} below the threshold (exact for
    j(i) = 0 rows, where the freeze radius degenerates to 0), and rows
    whose threshold sits at the cap collapse to b = 1.
    """

    def __init__(self, eps: EpsilonTable):
        self.eps = eps
        self.tau = eps.tau
        self.window = eps.window
        self.j_cap = eps.window.j_cap
        self.sqrt_tau = math.sqrt(self.tau)
        self._logv = np.log(eps.values)
        self._log_rows = np.log(eps.row_sums)
        self._thr = np.array([eps.thresholds[i] for i in eps.window.rows()], dtype=float)

    # partition-of-unity helpers over rows -----------------------------------
    def _rows(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        base = np.floor(s).astype(int)
        offsets = np.arange(-2, 3)
        idx = base[:, None] + offsets[None, :]
        wgt = pou_eta(s[:, None] - idx)
        rows = np.clip(idx - self.window.i_min, 0, self.window.n_rows - 1)
        return rows, wgt

    def _col_weights(self, u):
        """Clamped partition of unity over columns at u = ln(rho)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        base = np.floor(u).astype(int)
        offsets = np.arange(-2, 3)
        idx = base[:, None] + offsets[None, :]
        wgt = pou_eta(u[:, None] - idx)
        cols = np.clip(idx, 0, self.j_cap)
        return cols, wgt

    def eps_interp(self, s, rho):
        """Smooth eps_ij interpolant at (s, ln rho)."""
        rows, rw = self._rows(s)
        cols, cw = self._col_weights(np.log(np.maximum(rho, 1.0)))
        lv = self._logv[rows[:, :, None], cols[:, None, :]]   # (ns, 5, 5)
        return np.exp(np.einsum("sk,sl,skl->s", rw, cw, lv))

    def _col_interp_rows(self, rho_1d):
        """ln eps interpolated in j only, per window row: (n_rows, nr)."""
        cols, cw = self._col_weights(np.log(np.maximum(rho_1d, 1.0)))
        return np.einsum("rl,nrl->nr", cw, self._logv[:, cols])

    def eps_interp_outer(self, s_1d, rho_1d):
        """Tensor-grid eps_ij interpolant, shape (ns, nr)."""
        rows, rw = self._rows(s_1d)
        M = self._col_interp_rows(np.asarray(rho_1d, dtype=float))
        out = np.zeros((len(np.atleast_1d(s_1d)), M.shape[1]))
        for k in range(rows.shape[1]):
            out += rw[:, k][:, None] * M[rows[:, k]]
        return np.exp(out)

    def a_int4_outer(self, s_1d, r_1d):
        rho = 1.0 + np.asarray(r_1d, dtype=float)
        inner = self.tau ** 1.5 * self.eps_interp_outer(s_1d, rho) / rho[None, :]
        outer = self.tau * self.eps_row(s_1d)[:, None]
        sigma = smoothstep(rho / self.sqrt_tau - 1.0)[None, :]
        return (1.0 - sigma) * inner + sigma * outer

    def a_perp4_outer(self, s_1d, r_1d):
        r = np.asarray(r_1d, dtype=float)
        u = np.log(1.0 + r)[None, :]
        J = self.threshold_interp(s_1d)[:, None]
        window = smoothstep(u - (J - 1.0)) \
            * (1.0 - smoothstep(u - (0.5 * math.log(self.tau) - 1.0)))
        return self.tau ** 1.5 * self.eps_row(s_1d)[:, None] / (1.0 + r)[None, :] * window

    def eps_row(self, s):
        """Smooth eps_i row-sum interpolant."""
        rows, rw = self._rows(s)
        return np.exp(np.einsum("sk,sk->s", rw, self._log_rows[rows]))

    def threshold_interp(self, s):
        """Smooth J(s) with J = j(i) on the interior of [i, i+1]."""
        rows, rw = self._rows(s)
        return np.einsum("sk,sk->s", rw, self._thr[rows])

    def r_of_s(self, s):
        """Smooth, slowly varying freeze radius, r(s) = e^{J(s)}."""
        return np.exp(self.threshold_interp(s))

    # the weights themselves --------------------------------------------------
    def _a_int4_at(self, s, rho):
        inner = self.tau ** 1.5 * self.eps_interp(s, rho) / rho
        outer = self.tau * self.eps_row(s)
        sigma = smoothstep(rho / self.sqrt_tau - 1.0)
        return (1.0 - sigma) * inner + sigma * outer

    def a_int4(self, s, r):
        s, r = np.broadcast_arrays(np.atleast_1d(np.asarray(s, float)),
                                   np.atleast_1d(np.asarray(r, float)))
        return self._a_int4_at(s.ravel(), 1.0 + r.ravel()).reshape(s.shape)

    def a4(self, s, r):
        return 1.0 + self.a_int4(s, r)

    def a_perp4(self, s, r):
        """Supported in j(i) - 1 <= ln(1 + r) <= ln(tau)/2; 1-level inside."""
        s = np.atleast_1d(np.asarray(s, float))
        r = np.atleast_1d(np.asarray(r, float))
        s, r = np.broadcast_arrays(s, r)
        sf, rf = s.ravel(), r.ravel()
        u = np.log(1.0 + rf)
        J = self.threshold_interp(sf)
        window = smoothstep(u - (J - 1.0)) * (1.0 - smoothstep(u - (0.5 * math.log(self.tau) - 1.0)))
        val = self.tau ** 1.5 * self.eps_row(sf) / (1.0 + rf) * window
        return val.reshape(s.shape)

    def _b4_row_target(self, i: int, rho):
        """Case target of Definition-style coarsening for one row."""
        j_i = self.eps.thresholds[i]
        if j_i >= self.j_cap:
            return np.ones_like(rho)
        freeze = math.exp(j_i) - 1.0
        rho_f = _smooth_max(rho, freeze)
        srow = np.full_like(rho, i + 0.5)
        inner = self.tau ** 1.5 * self.eps_interp(srow, rho_f) / rho_f
        outer = self.tau * self.eps_row(srow)
        sigma = smoothstep(rho_f / self.sqrt_tau - 1.0)
        return 1.0 + (1.0 - sigma) * inner + sigma * outer

    def b4(self, s, r):
        s = np.atleast_1d(np.asarray(s, float))
        r = np.atleast_1d(np.asarray(r, float))
        s, r = np.broadcast_arrays(s, r)
        sf, rf = s.ravel(), r.ravel()
        rows, rw = self._rows(sf)
        rho = 1.0 + rf
        # log-blend the per-row case targets across adjacent rows
        acc = np.zeros_like(sf)
        for k in range(rows.shape[1]):
            for rr in np.unique(rows[:, k]):
                i = int(rr) + self.window.i_min
                sel = rows[:, k] == rr
                tgt = self._b4_row_target(i, rho[sel])
                acc[sel] += rw[sel, k] * np.log(tgt)
        return np.exp(acc).reshape(s.shape)

    def b_perp4(self, s, r):
        """Coarsened transverse weight; the J(s)-window already encodes
        the vanishing below j(i) - 1 and on cap rows."""
        return self.a_perp4(s, r)


def eval_aux(eps: EpsilonTable, s, y):
    """(a, a_int, a_perp, b, b_perp) at (s, |y|); fourth-root scale."""
    aux = AuxWeights(eps)
    r = np.abs(np.asarray(y, dtype=float)) if np.ndim(y) <= np.ndim(np.asarray(s)) \
        else np.linalg.norm(np.asarray(y, dtype=float), axis=-1)
    a4 = aux.a4(s, r)
    ai4 = aux.a_int4(s, r)
    ap4 = aux.a_perp4(s, r)
    b4 = aux.b4(s, r)
    bp4 = aux.b_perp4(s, r)
    quarter = lambda v: np.maximum(v, 0.0) ** 0.25
    return quarter(a4), quarter(ai4), quarter(ap4), quarter(b4), quarter(bp4)
