"""Band structure and band topology of the pumped two-band lattice.

Berry curvature is evaluated with gauge-invariant link variables on a
``(k, t)`` grid, so Chern numbers come out as integers even on coarse grids.
Orientation convention: the curvature is ``d_k A_t - d_t A_k`` with
``A = i<u|du>``; with the ``e^{-ijk}`` Bloch convention of
:func:`oampump.model.bloch_hamiltonian` this makes the Chern number equal to
the number of unit cells a Wannier state advances per cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import GapClosed
from .model import (
    PumpSchedule,
    RiceMeleParams,
    bloch_hamiltonian,
    bloch_matrix,
)

TWO_PI = 2.0 * np.pi
GAP_TOL = 1e-6  # in units of J1

_BANDS = {"lower": 0, "upper": 1, "-": 0, "+": 1, 0: 0, 1: 1}


def band_index(band) -> int:
    try:
        return _BANDS[band]
    except (KeyError, TypeError):
        raise ValueError(f"unknown band {band!r}") from None


@dataclass(frozen=True, eq=False)
class CurvatureGrid:
    """Plaquette Berry fluxes on an ``n_k x n_t`` periodic grid."""

    flux: np.ndarray
    band: str
    k: np.ndarray
    t: np.ndarray

    @property
    def chern(self) -> float:
        return float(self.flux.sum() / TWO_PI)


def grid(schedule: PumpSchedule, n_k: int, n_t: int):
    """Uniform periodic grid over the Brillouin zone and one loop period."""
    if n_k < 2 or n_t < 2:
        raise ValueError("grid needs n_k, n_t >= 2")
    k = TWO_PI * np.arange(n_k) / n_k
    t = schedule.period * np.arange(n_t) / n_t
    return k, t


def _h_on_grid(schedule, p, k, t):
    b0, b1 = schedule.loop_point(t)
    b0 = b0 + schedule.offset[0]
    b1 = b1 + schedule.offset[1]
    return bloch_hamiltonian(k[:, None], b0[None, :], b1[None, :], p)


def band_energies(schedule: PumpSchedule, p: RiceMeleParams, n_k: int = 64, n_t: int = 64):
    """Band energies ``E[band, k, t]`` over one loop period and the minimum gap.

    The returned gap is the grid minimum of ``2|h|`` polished by a local
    minimisation in ``(k, t)``, so it is the gap of the loop itself rather
    than of the grid.
    """
    k, t = grid(schedule, n_k, n_t)
    h = _h_on_grid(schedule, p, k, t)
    e = np.linalg.norm(h, axis=-1)
    energies = np.stack([-e, e])
    return energies, min_gap(schedule, p, n_k, n_t, _norms=e)


def min_gap(schedule: PumpSchedule, p: RiceMeleParams, n_k: int = 64, n_t: int = 64, _norms=None):
    k, t = grid(schedule, n_k, n_t)
    e = np.linalg.norm(_h_on_grid(schedule, p, k, t), axis=-1) if _norms is None else _norms
    T = schedule.period

    def gap(x):
        kk, tt = x
        b0, b1 = schedule.loop_point(np.array([tt % T]))
        h = bloch_hamiltonian(kk, b0[0] + schedule.offset[0], b1[0] + schedule.offset[1], p)
        return 2.0 * float(np.linalg.norm(h))

    best = 2.0 * float(e.min())
    # polish the few smallest grid points; the loop has kinks so stay local
    for flat in np.argsort(e, axis=None)[:4]:
        ik, it = np.unravel_index(flat, e.shape)
        x0 = np.array([k[ik], t[it]])
        step = np.array([TWO_PI / n_k, T / n_t])
        res = optimize.minimize(
            gap,
            x0,
            method="Nelder-Mead",
            bounds=[(x0[0] - step[0], x0[0] + step[0]), (x0[1] - step[1], x0[1] + step[1])],
            options=dict(xatol=1e-12, fatol=1e-14, maxiter=2000),
        )
        best = min(best, float(res.fun))
    return best


def bloch_states(h: np.ndarray, band) -> np.ndarray:
    """Eigenvectors of ``h . sigma`` for the chosen band, stacked like ``h``."""
    _, vecs = np.linalg.eigh(bloch_matrix(h))
    return vecs[..., :, band_index(band)]


def fix_gauge(u: np.ndarray, ref: int | None = None) -> np.ndarray:
    """Make component ``ref`` real-positive (default: the larger one, per vector)."""
    u = np.asarray(u)
    if ref is None:
        ref_c = np.take_along_axis(u, np.argmax(np.abs(u), axis=-1)[..., None], axis=-1)
    else:
        ref_c = u[..., ref : ref + 1]
    mag = np.abs(ref_c)
    phase = np.where(mag > 0, ref_c / np.where(mag > 0, mag, 1.0), 1.0)
    return u * np.conj(phase)


def _links(u, axis):
    nxt = np.roll(u, -1, axis=axis)
    return np.einsum("...i,...i->...", np.conj(u), nxt)


def plaquette_flux(u: np.ndarray) -> np.ndarray:
    """Berry flux through each plaquette of a periodic ``(k, t)`` grid of states.

    ``u`` has shape ``(n_k, n_t, dim)``.  Flux values lie in ``(-pi, pi]``.
    """
    uk = _links(u, 0)
    ut = _links(u, 1)
    loop = uk * np.roll(ut, -1, axis=0) * np.conj(np.roll(uk, -1, axis=1)) * np.conj(ut)
    return -np.angle(loop)


def _check_gap(schedule, p, n_k, n_t, tol):
    k, t = grid(schedule, n_k, n_t)
    e = np.linalg.norm(_h_on_grid(schedule, p, k, t), axis=-1)
    # |h| cannot drop below the grid minimum minus the largest neighbour
    # jump, so polishing is only needed when that bound is inconclusive
    jump = max(np.abs(np.diff(e, axis=0)).max(), np.abs(np.diff(e, axis=1)).max())
    if 2.0 * (e.min() - jump) >= tol * p.J1:
        return 2.0 * float(e.min())
    g = min_gap(schedule, p, n_k, n_t, _norms=e)
    if g < tol * p.J1:
        raise GapClosed(f"band gap {g:.3g} below tolerance on the pump loop")
    return g


def curvature_grid(
    schedule: PumpSchedule,
    p: RiceMeleParams,
    band="lower",
    n_k: int = 64,
    n_t: int = 64,
    tol: float = GAP_TOL,
) -> CurvatureGrid:
    _check_gap(schedule, p, n_k, n_t, tol)
    k, t = grid(schedule, n_k, n_t)
    u = bloch_states(_h_on_grid(schedule, p, k, t), band)
    return CurvatureGrid(plaquette_flux(u), "lower" if band_index(band) == 0 else "upper", k, t)


def chern_number(
    schedule: PumpSchedule,
    p: RiceMeleParams,
    band="lower",
    n_k: int = 64,
    n_t: int = 64,
    tol: float = GAP_TOL,
) -> int:
    c = curvature_grid(schedule, p, band, n_k, n_t, tol).chern
    return int(round(c))


def _solid_angle(a, b, c):
    """Signed solid angle of the spherical triangle ``(a, b, c)`` of unit vectors."""
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (
        1.0
        + np.einsum("...i,...i->...", a, b)
        + np.einsum("...i,...i->...", b, c)
        + np.einsum("...i,...i->...", c, a)
    )
    return 2.0 * np.arctan2(num, den)


def winding_number(
    schedule: PumpSchedule,
    p: RiceMeleParams,
    band="lower",
    n_k: int = 64,
    n_t: int = 64,
    tol: float = GAP_TOL,
) -> int:
    """Degree of ``(k, t) -> +-h/|h|`` on the sphere (``+h`` for the lower band)."""
    _check_gap(schedule, p, n_k, n_t, tol)
    k, t = grid(schedule, n_k, n_t)
    h = _h_on_grid(schedule, p, k, t)
    n = h / np.linalg.norm(h, axis=-1, keepdims=True)
    if band_index(band) == 1:
        n = -n
    a = n
    b = np.roll(n, -1, axis=0)
    c = np.roll(np.roll(n, -1, axis=0), -1, axis=1)
    d = np.roll(n, -1, axis=1)
    total = _solid_angle(a, b, c).sum() + _solid_angle(a, c, d).sum()
    return int(round(total / (4.0 * np.pi)))


def berry_phase(
    k: float,
    schedule: PumpSchedule,
    p: RiceMeleParams,
    band="lower",
    t: float | None = None,
    n_steps: int = 2048,
    ref: int | None = None,
    tol: float = GAP_TOL,
) -> float:
    """``gamma(k, t) = i int_0^t <u|d_t u> dt`` in a fixed gauge.

    The gauge holds one spinor component real-positive: the component
    ``ref``, by default whichever is larger at the loop start.  ``t`` is
    loop time measured from the pump start (default: a full period); for a
    full period the result is the gauge-invariant cyclic phase modulo 2pi.
    """
    T = schedule.period
    t = T if t is None else float(t)
    if not 0 <= t <= schedule.n_cycles * T + 1e-12 and not 0 <= t <= T + 1e-12:
        raise ValueError("t outside the pumping window")
    if t == 0:
        return 0.0
    n = max(2, int(np.ceil(n_steps * t / T)))
    ts = np.linspace(0.0, t, n + 1)
    b0, b1 = schedule.loop_point(ts % T if t > T else ts)
    h = bloch_hamiltonian(k, b0 + schedule.offset[0], b1 + schedule.offset[1], p)
    if np.min(np.linalg.norm(h, axis=-1)) * 2 < tol * p.J1:
        raise GapClosed("band gap closes along the Berry-phase path")
    u = bloch_states(h, band)
    if ref is None:
        ref = int(np.argmax(np.abs(u[0])))
    u = fix_gauge(u, ref)
    overlaps = np.einsum("ti,ti->t", np.conj(u[:-1]), u[1:])
    return float(-np.angle(overlaps).sum())


def berry_connection_k(k, t, schedule, p, band="lower", ref=None, dk=1e-5):
    """``A_k = i<u|d_k u>`` by central differences in the same fixed gauge."""
    T = schedule.period
    b0, b1 = schedule.loop_point(np.array([t % T]))
    kk = np.array([k - dk, k + dk])
    h = bloch_hamiltonian(kk, b0[0] + schedule.offset[0], b1[0] + schedule.offset[1], p)
    u = bloch_states(h, band)
    if ref is None:
        h0 = bloch_hamiltonian(0.0, *(x + o for x, o in zip(schedule.loop_point(np.array([0.0])), schedule.offset)), p)
        ref = int(np.argmax(np.abs(bloch_states(h0, band)[0])))
    u = fix_gauge(u, ref)
    return float(-np.angle(np.vdot(u[0], u[1])) / (2 * dk))


def curvature_density(k, t, schedule: PumpSchedule, p: RiceMeleParams, band="lower", dk=1e-4, dt=1e-4):
    """Berry curvature ``d_k A_t - d_t A_k`` at points ``(k, t)`` (vectorised).

    Evaluated from a small plaquette centred on each point, so it is gauge
    invariant; kinks of the loop make it one-sided at segment boundaries.
    """
    k = np.atleast_1d(np.asarray(k, float))
    t = np.atleast_1d(np.asarray(t, float))
    k, t = np.broadcast_arrays(k, t)
    T = schedule.period
    corners = []
    for sk, st in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        kk = k + sk * dk / 2
        tt = np.clip(t + st * dt / 2, 0.0, None) % T
        b0, b1 = schedule.loop_point(tt)
        h = bloch_hamiltonian(kk, b0 + schedule.offset[0], b1 + schedule.offset[1], p)
        corners.append(bloch_states(h, band))
    a, b, c, d = corners
    dot = lambda x, y: np.einsum("...i,...i->...", np.conj(x), y)
    loop = dot(a, b) * dot(b, c) * dot(c, d) * dot(d, a)
    return -np.angle(loop) / (dk * dt)


def group_velocity(k, t, schedule: PumpSchedule, p: RiceMeleParams, band="lower", dk=1e-5):
    """Cell velocity ``-d_k E`` (the minus sign follows the ``e^{-ijk}`` convention)."""
    k = np.asarray(k, float)
    T = schedule.period
    b0, b1 = schedule.loop_point(np.asarray(t, float) % T)
    b0 = b0 + schedule.offset[0]
    b1 = b1 + schedule.offset[1]
    sign = -1.0 if band_index(band) == 0 else 1.0
    e_p = sign * np.linalg.norm(bloch_hamiltonian(k + dk, b0, b1, p), axis=-1)
    e_m = sign * np.linalg.norm(bloch_hamiltonian(k - dk, b0, b1, p), axis=-1)
    return -(e_p - e_m) / (2 * dk)


def flat_band_approx(k, beta1, p: RiceMeleParams, band="upper"):
    """Second-order band energy for ``beta0`` in ``{0, pi}`` (``|Delta| = 4 J0``).

    ``2 J0 + J1^2/J0 + (J1^2 / 2 J0) [cos k - cos(k + 2 beta1)]`` for the upper
    band, its negative for the lower band.  Expanding
    ``sqrt(4 J0^2 + 4 J1^2 + 2 J1^2 [cos k - cos(k + 2 beta1)])`` in ``J1/J0``
    fixes the 1/2; the neglected term is of order ``J1^4 / J0^3``.
    """
    k = np.asarray(k, float)
    e = 2 * p.J0 + p.J1**2 / p.J0 + p.J1**2 / (2 * p.J0) * (np.cos(k) - np.cos(k + 2 * beta1))
    return e if band_index(band) == 1 else -e


def exact_band(k, beta0, beta1, p: RiceMeleParams, band="upper"):
    e = np.linalg.norm(bloch_hamiltonian(k, beta0, beta1, p), axis=-1)
    return e if band_index(band) == 1 else -e
