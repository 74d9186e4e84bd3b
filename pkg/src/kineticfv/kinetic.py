"""Gas-kinetic BGK interface flux and the Maxwellian moment algebra.

The interface flux integrates moments of the time-dependent BGK solution

    f(t) = (1 - e^(-t/tau)) g0
         + ((t+tau) e^(-t/tau) - tau) (a1 u + a2 v + a3 w) g0
         + (t - tau + tau e^(-t/tau)) A g0
         + e^(-t/tau) g_l [1 - (tau+t)(al.u) - tau Al] H(u)
         + e^(-t/tau) g_r [1 - (tau+t)(ar.u) - tau Ar] (1 - H(u))

in a face-local frame whose first axis is the outward normal.  g_l/g_r are
Maxwellians built from the two one-sided reconstructions, g0 comes from the
kinetic compatibility condition, and every micro-slope (a*, A*) is the
solution of the 5x5 Maxwellian moment system.  All operations are
vectorized over batches of quadrature points.

Internal degrees of freedom: N = (5 - 3 gamma)/(gamma - 1), so N = 2 for
the default diatomic gamma = 1.4, and lambda = rho / (2 p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from kineticfv.errors import InvalidState

GAMMA_DEFAULT = 1.4


def internal_dof(gamma=GAMMA_DEFAULT):
    return (5.0 - 3.0 * gamma) / (gamma - 1.0)


# ---------------------------------------------------------------------------
# state conversions


def conserved_to_primitive(q, gamma=GAMMA_DEFAULT):
    """(...,5) conserved -> (rho, U, V, W, p); raises on non-physical input."""
    q = np.asarray(q, dtype=float)
    rho = q[..., 0]
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise InvalidState("non-positive density")
    U = q[..., 1] / rho
    V = q[..., 2] / rho
    W = q[..., 3] / rho
    eint = q[..., 4] - 0.5 * rho * (U * U + V * V + W * W)
    if np.any(eint <= 0.0):
        raise InvalidState("non-positive internal energy")
    p = (gamma - 1.0) * eint
    return rho, U, V, W, p


def primitive_to_conserved(rho, U, V, W, p, gamma=GAMMA_DEFAULT):
    rho, U, V, W, p = np.broadcast_arrays(*map(np.asarray, (rho, U, V, W, p)))
    q = np.empty(rho.shape + (5,))
    q[..., 0] = rho
    q[..., 1] = rho * U
    q[..., 2] = rho * V
    q[..., 3] = rho * W
    q[..., 4] = p / (gamma - 1.0) + 0.5 * rho * (U * U + V * V + W * W)
    return q


def maxwellian_params(q, gamma=GAMMA_DEFAULT):
    """Conserved state -> (rho, U, V, W, lam) of the matching Maxwellian."""
    rho, U, V, W, p = conserved_to_primitive(q, gamma)
    ndof = internal_dof(gamma)
    lam = (ndof + 3.0) * rho / (4.0 * (q[..., 4] - 0.5 * rho * (U * U + V * V + W * W)))
    return rho, U, V, W, lam


def params_to_conserved(rho, U, V, W, lam, gamma=GAMMA_DEFAULT):
    ndof = internal_dof(gamma)
    p = rho / (2.0 * lam)
    del ndof
    return primitive_to_conserved(rho, U, V, W, p, gamma)


def state_is_valid(q, gamma=GAMMA_DEFAULT):
    """Vectorized positivity check; returns a boolean mask."""
    q = np.asarray(q)
    rho = q[..., 0]
    ke = 0.5 * (q[..., 1] ** 2 + q[..., 2] ** 2 + q[..., 3] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        eint = q[..., 4] - ke / np.where(rho > 0, rho, 1.0)
    return np.isfinite(q).all(axis=-1) & (rho > 0.0) & (eint > 0.0)


def sound_speed(q, gamma=GAMMA_DEFAULT):
    rho, U, V, W, p = conserved_to_primitive(q, gamma)
    return np.sqrt(gamma * p / rho)


def euler_flux(q, gamma=GAMMA_DEFAULT):
    """Inviscid flux along the first velocity axis of the state's frame."""
    q = np.asarray(q, dtype=float)
    rho = q[..., 0]
    U = q[..., 1] / rho
    V = q[..., 2] / rho
    W = q[..., 3] / rho
    p = (gamma - 1.0) * (q[..., 4] - 0.5 * rho * (U * U + V * V + W * W))
    F = np.empty_like(q)
    F[..., 0] = q[..., 1]
    F[..., 1] = q[..., 1] * U + p
    F[..., 2] = q[..., 1] * V
    F[..., 3] = q[..., 1] * W
    F[..., 4] = U * (q[..., 4] + p)
    return F


# ---------------------------------------------------------------------------
# Maxwellian moments


class Moments:
    """Moment tables of a (unit-density) Maxwellian at (U,V,W,lam).

    u carries the mean flow of the face-normal direction and is the only
    velocity split into half-space tables.  Entries follow the recursion
    <u^(a+2)> = U <u^(a+1)> + (a+1)/(2 lam) <u^a>, seeded with erfc/exp
    expressions for the half moments.  Product moments
    <u^i v^j w^k xi^(2l)> factorize and are cached on demand.
    """

    NMAX = 6

    def __init__(self, U, V, W, lam, ndof):
        self.U, self.V, self.W, self.lam = U, V, W, lam
        self.ndof = ndof
        self.mu = _full_moments(U, lam, self.NMAX)
        self.mv = _full_moments(V, lam, self.NMAX)
        self.mw = _full_moments(W, lam, self.NMAX)
        self.mu_pos = None
        self.mu_neg = None
        self.xi2 = ndof / (2.0 * lam)
        self.xi4 = (ndof ** 2 + 2.0 * ndof) / (4.0 * lam ** 2)
        self._prod = {}
        self._psi = {}

    def want_halves(self, pos=True, neg=True):
        if pos and self.mu_pos is None:
            self.mu_pos = _half_moments(self.U, self.lam, +1, self.NMAX)
        if neg and self.mu_neg is None:
            self.mu_neg = _half_moments(self.U, self.lam, -1, self.NMAX)

    def _utab(self, which):
        if which == "full":
            return self.mu
        if which == "pos":
            self.want_halves(pos=True, neg=False)
            return self.mu_pos
        if which == "neg":
            self.want_halves(pos=False, neg=True)
            return self.mu_neg
        raise KeyError(which)

    def prod(self, which, i, j, k, l=0):
        """<u^i v^j w^k xi^(2l)> with u from the chosen table."""
        key = (which, i, j, k, l)
        out = self._prod.get(key)
        if out is not None:
            return out
        out = self._utab(which)[i]
        if j:
            out = out * self.mv[j]
        if k:
            out = out * self.mw[k]
        if l == 1:
            out = out * self.xi2
        elif l == 2:
            out = out * self.xi4
        self._prod[key] = out
        return out

    def psi(self, which, i, j, k, l=0):
        """5-vector <u^i v^j w^k xi^(2l) psi>, shape (n,5)."""
        key = (which, i, j, k, l)
        out = self._psi.get(key)
        if out is not None:
            return out
        p = self.prod
        if l == 0:
            last = 0.5 * (p(which, i + 2, j, k) + p(which, i, j + 2, k)
                          + p(which, i, j, k + 2) + p(which, i, j, k, 1))
        else:
            # l == 1 is the deepest level the flux needs
            last = 0.5 * (p(which, i + 2, j, k, 1) + p(which, i, j + 2, k, 1)
                          + p(which, i, j, k + 2, 1) + p(which, i, j, k, 2))
        out = np.stack([p(which, i, j, k, l), p(which, i + 1, j, k, l),
                        p(which, i, j + 1, k, l), p(which, i, j, k + 1, l),
                        last], axis=-1)
        self._psi[key] = out
        return out

    def slope_psi(self, a, which, i, j, k):
        """<(a . psi) u^i v^j w^k psi> for micro-slope coefficients a (n,5)."""
        quad = 0.5 * (self.psi(which, i + 2, j, k) + self.psi(which, i, j + 2, k)
                      + self.psi(which, i, j, k + 2) + self.psi(which, i, j, k, 1))
        return (a[..., 0:1] * self.psi(which, i, j, k)
                + a[..., 1:2] * self.psi(which, i + 1, j, k)
                + a[..., 2:3] * self.psi(which, i, j + 1, k)
                + a[..., 3:4] * self.psi(which, i, j, k + 1)
                + a[..., 4:5] * quad)

    def solve(self, b):
        """Solve <psi psi^T> a = b for micro-slope coefficients (closed form)."""
        U, V, W, lam, N = self.U, self.V, self.W, self.lam, self.ndof
        b1, b2, b3, b4, b5 = (b[..., m] for m in range(5))
        qsq = U * U + V * V + W * W
        beta1 = 2.0 * lam * (b2 - b1 * U)
        beta2 = 2.0 * lam * (b3 - b1 * V)
        beta3 = 2.0 * lam * (b4 - b1 * W)
        B = b5 + 0.5 * qsq * b1 - (U * b2 + V * b3 + W * b4)
        gam = (B - (N + 3.0) / (4.0 * lam) * b1) * 8.0 * lam ** 2 / (N + 3.0)
        a = np.empty_like(b)
        a[..., 4] = gam
        a[..., 1] = beta1 - gam * U
        a[..., 2] = beta2 - gam * V
        a[..., 3] = beta3 - gam * W
        alpha = b1 - gam * (N + 3.0) / (4.0 * lam)
        a[..., 0] = (alpha - a[..., 1] * U - a[..., 2] * V - a[..., 3] * W
                     - gam * 0.5 * qsq)
        return a


def _full_moments(U, lam, nmax):
    out = np.empty((nmax + 1,) + np.shape(U))
    out[0] = 1.0
    out[1] = U
    inv2lam = 0.5 / lam
    for a in range(nmax - 1):
        out[a + 2] = U * out[a + 1] + (a + 1) * inv2lam * out[a]
    return out


def _half_moments(U, lam, sign, nmax):
    """Moments over u > 0 (sign=+1) or u < 0 (sign=-1)."""
    out = np.empty((nmax + 1,) + np.shape(U))
    s = np.sqrt(lam)
    gauss = 0.5 * np.exp(-lam * U * U) / np.sqrt(np.pi * lam)
    if sign > 0:
        out[0] = 0.5 * erfc(-s * U)
        out[1] = U * out[0] + gauss
    else:
        out[0] = 0.5 * erfc(s * U)
        out[1] = U * out[0] - gauss
    inv2lam = 0.5 / lam
    for a in range(nmax - 1):
        out[a + 2] = U * out[a + 1] + (a + 1) * inv2lam * out[a]
    return out


def moment_matrix(U, V, W, lam, ndof):
    """Dense <psi psi^T>, mainly as the oracle for Moments.solve."""
    m = Moments(np.asarray(U, float), np.asarray(V, float),
                np.asarray(W, float), np.asarray(lam, float), ndof)
    rows = [m.psi("full", 0, 0, 0), m.psi("full", 1, 0, 0),
            m.psi("full", 0, 1, 0), m.psi("full", 0, 0, 1)]
    quad = 0.5 * (m.psi("full", 2, 0, 0) + m.psi("full", 0, 2, 0)
                  + m.psi("full", 0, 0, 2) + m.psi("full", 0, 0, 0, 1))
    rows.append(quad)
    return np.stack(rows, axis=-2)


# ---------------------------------------------------------------------------
# collision time


def collision_time(p_left, p_right, dt_s, mu=None, eps=0.05, c_jump=2.5):
    """Particle collision time at the interface.

    Inviscid: eps*dt_s plus a pressure-jump switch that adds first-order
    dissipation at shocks.  Viscous: mu/p plus the same jump term.
    """
    p_left = np.asarray(p_left, dtype=float)
    p_right = np.asarray(p_right, dtype=float)
    jump = c_jump * np.abs(p_left - p_right) / (p_left + p_right) * dt_s
    if mu is None:
        return eps * dt_s + jump
    return mu / (0.5 * (p_left + p_right)) + jump


# ---------------------------------------------------------------------------
# interface flux


@dataclass
class FaceSideData:
    """One-sided reconstruction at face quadrature points, local frame.

    q  : (n,5) conserved values (momentum components along n, t1, t2)
    dq : (n,3,5) directional derivatives along the local frame axes
    """
    q: np.ndarray
    dq: np.ndarray


def _time_integral_coeffs(tau, delta):
    """Integrals over [0, delta] of the five BGK time factors.

    Returns (c1..c6): c1 multiplies g0, c2 the equilibrium slopes, c3 the
    equilibrium time slope, c4 the free-streaming parts, c5 the one-sided
    slopes, c6 the one-sided time slopes.  Safe for tau = 0 and tau >> delta.
    """
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(tau > 0.0, delta / np.where(tau > 0.0, tau, 1.0), np.inf)
    em = np.exp(-x)
    one_em = -np.expm1(-x)  # 1 - e^(-x) without cancellation
    c4 = tau * one_em
    c1 = delta - c4
    c5 = 2.0 * tau * c4 - (tau * delta) * em
    c2 = c5 - tau * delta
    c3 = 0.5 * delta ** 2 - tau * delta + tau * c4
    c6 = tau * c4
    return c1, c2, c3, c4, c5, c6


def _time_value_coeffs(tau, t):
    """Point-in-time BGK factors at time t (same ordering as the integrals)."""
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(tau > 0.0, t / np.where(tau > 0.0, tau, 1.0), np.inf)
    em = np.where((tau > 0.0) | (t > 0.0), np.exp(-x), 1.0)
    # at tau = 0, t = 0 the split form g_l H + g_r (1-H) is kept
    v1 = 1.0 - em
    v2 = (t + tau) * em - tau
    v3 = t - tau + tau * em
    v4 = em
    v5 = (tau + t) * em
    v6 = tau * em
    return v1, v2, v3, v4, v5, v6


class _BGKWorkspace:
    """Everything the flux and the point value share for one batch."""

    def __init__(self, left, right, gamma):
        ndof = internal_dof(gamma)
        self.ndof = ndof
        rl, Ul, Vl, Wl, laml = maxwellian_params(left.q, gamma)
        rr, Ur, Vr, Wr, lamr = maxwellian_params(right.q, gamma)
        self.rl, self.rr = rl, rr
        self.ml = Moments(Ul, Vl, Wl, laml, ndof)
        self.mr = Moments(Ur, Vr, Wr, lamr, ndof)
        # one-sided micro-slopes from the three directional derivatives
        self.al = [self.ml.solve(left.dq[:, d, :] / rl[:, None]) for d in range(3)]
        self.ar = [self.mr.solve(right.dq[:, d, :] / rr[:, None]) for d in range(3)]
        self.Al = self.ml.solve(-self._adv_moment(self.ml, "full", self.al))
        self.Ar = self.mr.solve(-self._adv_moment(self.mr, "full", self.ar))
        # equilibrium state from the compatibility condition
        q0 = rl[:, None] * self.ml.psi("pos", 0, 0, 0) \
            + rr[:, None] * self.mr.psi("neg", 0, 0, 0)
        self.q0 = q0
        r0, U0, V0, W0, lam0 = maxwellian_params(q0, gamma)
        self.r0 = r0
        self.m0 = Moments(U0, V0, W0, lam0, ndof)
        # equilibrium slopes: differentiate the compatibility condition
        self.a0 = []
        for d in range(3):
            dq0 = rl[:, None] * self.ml.slope_psi(self.al[d], "pos", 0, 0, 0) \
                + rr[:, None] * self.mr.slope_psi(self.ar[d], "neg", 0, 0, 0)
            self.a0.append(self.m0.solve(dq0 / r0[:, None]))
        self.A0 = self.m0.solve(-self._adv_moment(self.m0, "full", self.a0))

    @staticmethod
    def _adv_moment(mom, which, a_dirs):
        """<(a1 u + a2 v + a3 w) psi> for one micro-slope triple."""
        return (mom.slope_psi(a_dirs[0], which, 1, 0, 0)
                + mom.slope_psi(a_dirs[1], which, 0, 1, 0)
                + mom.slope_psi(a_dirs[2], which, 0, 0, 1))

    def flux_time_integral(self, tau, delta):
        """Integral over [0, delta] of the normal flux moments, (n,5)."""
        c1, c2, c3, c4, c5, c6 = _time_integral_coeffs(tau, delta)
        m0, ml, mr = self.m0, self.ml, self.mr
        r0 = self.r0[:, None]
        rl = self.rl[:, None]
        rr = self.rr[:, None]
        eq_slope = (m0.slope_psi(self.a0[0], "full", 2, 0, 0)
                    + m0.slope_psi(self.a0[1], "full", 1, 1, 0)
                    + m0.slope_psi(self.a0[2], "full", 1, 0, 1))
        out = c1[:, None] * r0 * m0.psi("full", 1, 0, 0) \
            + c2[:, None] * r0 * eq_slope \
            + c3[:, None] * r0 * m0.slope_psi(self.A0, "full", 1, 0, 0)
        l_slope = (ml.slope_psi(self.al[0], "pos", 2, 0, 0)
                   + ml.slope_psi(self.al[1], "pos", 1, 1, 0)
                   + ml.slope_psi(self.al[2], "pos", 1, 0, 1))
        out += c4[:, None] * rl * ml.psi("pos", 1, 0, 0) \
            - c5[:, None] * rl * l_slope \
            - c6[:, None] * rl * ml.slope_psi(self.Al, "pos", 1, 0, 0)
        r_slope = (mr.slope_psi(self.ar[0], "neg", 2, 0, 0)
                   + mr.slope_psi(self.ar[1], "neg", 1, 1, 0)
                   + mr.slope_psi(self.ar[2], "neg", 1, 0, 1))
        out += c4[:, None] * rr * mr.psi("neg", 1, 0, 0) \
            - c5[:, None] * rr * r_slope \
            - c6[:, None] * rr * mr.slope_psi(self.Ar, "neg", 1, 0, 0)
        return out

    def point_value(self, tau, t):
        """Conserved moments of f at the interface at time t, (n,5)."""
        v1, v2, v3, v4, v5, v6 = _time_value_coeffs(tau, t)
        m0, ml, mr = self.m0, self.ml, self.mr
        r0 = self.r0[:, None]
        rl = self.rl[:, None]
        rr = self.rr[:, None]
        eq_slope = self._adv_moment(m0, "full", self.a0)
        out = v1[:, None] * r0 * m0.psi("full", 0, 0, 0) \
            + v2[:, None] * r0 * eq_slope \
            + v3[:, None] * r0 * m0.slope_psi(self.A0, "full", 0, 0, 0)
        l_slope = self._adv_moment(ml, "pos", self.al)
        out += v4[:, None] * rl * ml.psi("pos", 0, 0, 0) \
            - v5[:, None] * rl * l_slope \
            - v6[:, None] * rl * ml.slope_psi(self.Al, "pos", 0, 0, 0)
        r_slope = self._adv_moment(mr, "neg", self.ar)
        out += v4[:, None] * rr * mr.psi("neg", 0, 0, 0) \
            - v5[:, None] * rr * r_slope \
            - v6[:, None] * rr * mr.slope_psi(self.Ar, "neg", 0, 0, 0)
        return out


def interface_flux(left, right, tau, dt_full, dt_half=None, gamma=GAMMA_DEFAULT,
                   workspace=None):
    """Time-averaged kinetic flux over [0, dt_full] (and [0, dt_half]).

    Returns the (n,5) average flux, or a pair of averages when dt_half is
    given (used by the explicit two-stage scheme to extract d/dt of the
    flux).  Fluxes are in the face-local frame.
    """
    ws = workspace or _BGKWorkspace(left, right, gamma)
    full = ws.flux_time_integral(tau, dt_full) / dt_full
    if dt_half is None:
        return full
    half = ws.flux_time_integral(tau, dt_half) / dt_half
    return full, half


def interface_point_value(left, right, tau, t, gamma=GAMMA_DEFAULT,
                          workspace=None):
    """Conserved variables of the evolved distribution at the interface."""
    ws = workspace or _BGKWorkspace(left, right, gamma)
    return ws.point_value(tau, t)


def make_workspace(left, right, gamma=GAMMA_DEFAULT):
    """Prebuild the shared moment workspace for flux + point value calls."""
    return _BGKWorkspace(left, right, gamma)
