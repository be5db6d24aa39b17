"""Closed-system pumping of a single photon through the OAM lattice.

The propagator is built from fourth-order Magnus steps (two Gauss points
per step).  Each step exponential is applied to the state by a Taylor
series truncated below 1e-17, so the norm is conserved to rounding error.
Step grids are aligned to the kinks of the pump schedule and refined by
halving until sampled observables converge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EdgeLeak, StepFailure
from .model import (
    LatticeConfig,
    LatticeState,
    PumpSchedule,
    RiceMeleParams,
    bloch_hamiltonian,
    hamiltonian_terms,
    term_coefficients,
)
from .topology import band_index, bloch_states, curvature_density, fix_gauge, group_velocity

log = logging.getLogger(__name__)

EDGE_POPULATION = 1e-6
EDGE_MARGIN = 6
_SQ3 = np.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    amplitudes: np.ndarray  # (n_times, n_sites)
    cfg: LatticeConfig
    max_edge_population: float = 0.0
    n_steps: int = 0

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norms(self) -> np.ndarray:
        return self.populations.sum(axis=1)

    @property
    def center_of_mass(self) -> np.ndarray:
        P = self.populations
        return P @ self.cfg.sites / P.sum(axis=1)

    def state(self, i: int) -> LatticeState:
        return LatticeState(self.amplitudes[i], self.cfg, float(self.times[i]))

    def index_of(self, t: float, atol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise ValueError(f"time {t} was not sampled")
        return i

    def at(self, t: float) -> LatticeState:
        return self.state(self.index_of(t))

    @property
    def final(self) -> LatticeState:
        return self.state(-1)


@dataclass(frozen=True)
class PumpResult:
    displacement: float
    purity: float
    target: int
    final: LatticeState


# --------------------------------------------------------------------------
# observables


def center_of_mass(state: LatticeState, unit: str = "site") -> float:
    """``sum_l l P_l`` (``unit="site"``) or ``sum_j j P_j`` over cells ``(2j, 2j+1)``.

    Populations are normalised first, so lossy states give the centre of
    the surviving photon.
    """
    P = state.populations
    P = P / P.sum()
    l = state.cfg.sites
    if unit == "site":
        return float(P @ l)
    if unit == "cell":
        return float(P @ np.floor_divide(l, 2 * state.cfg.step))
    raise ValueError(f"unknown unit {unit!r}")


def purity(state: LatticeState, target: int) -> float:
    """Probability of finding the photon in OAM state ``target``."""
    return state.population(target)


# --------------------------------------------------------------------------
# initial states


def _cell_sites(cfg: LatticeConfig, origin: int):
    """Sites of sublattice ``origin + m*step`` as (cell, sublattice) pairs."""
    m_lo = -((origin - cfg.l_min) // cfg.step)
    m_hi = (cfg.l_max_site - origin) // cfg.step
    m = np.arange(m_lo, m_hi + 1)
    return m, origin + m * cfg.step


def wannier_state(
    cfg: LatticeConfig,
    p: RiceMeleParams,
    schedule: PumpSchedule,
    band="lower",
    cell: int = 0,
    origin: int = 0,
) -> LatticeState:
    """Wannier state of ``band`` at the schedule start, centred on unit cell ``cell``.

    Built as the uniform Bloch sum ``N^-1/2 sum_k e^{-i(j-cell)k} u(k)`` in the
    gauge with the dominant spinor component real-positive.  Cells count from
    ``origin`` along the sublattice ``origin + m*step``; phases are measured
    relative to ``origin`` so a cascade stage can recentre on the photon.
    For a flat-band start the result is ``cos(theta)|2j> + sin(theta)|2j+1>``.
    """
    if cfg.single_sublattice and (origin - cfg.l_min) % cfg.step:
        raise ValueError(f"origin {origin} is not on the chain through {cfg.l_min}")
    m, sites = _cell_sites(cfg, origin)
    cells = np.floor_divide(m, 2)
    if not (cells.min() <= cell <= cells.max()):
        raise IndexError(f"cell {cell} outside the truncated chain")
    n_cells = max(int(cells.max() - cells.min() + 1), 2)
    n_k = max(64, n_cells)
    k = 2 * np.pi * np.arange(n_k) / n_k

    b0, b1 = schedule.beta(schedule.t_start)
    shift = origin * np.array([p.alpha0, p.alpha1])
    h = bloch_hamiltonian(k, float(b0) + shift[0], float(b1) + shift[1], p)
    u = bloch_states(h, band)
    ref = int(np.argmax(np.abs(u[0])))
    u = fix_gauge(u, ref)

    amp = np.zeros(cfg.n_sites, complex)
    sub = np.mod(m, 2)
    phase = np.exp(-1j * np.outer(cells - cell, k))  # (n_sites_sub, n_k)
    vals = (phase * u[:, sub].T).sum(axis=1) / n_k
    amp[(sites - cfg.l_min) // cfg.stride] = vals
    amp /= np.linalg.norm(amp)
    return LatticeState(amp, cfg, schedule.t_start)


# --------------------------------------------------------------------------
# propagation

_PAIRS = [(a, b) for a in range(5) for b in range(a + 1, 5)]


class _MagnusStepper:
    """Fourth-order Magnus generators for a batch of Hamiltonians.

    Each member ``b`` has ``H_b(t) = sum_a c_a(t) M_{b,a}`` over the basis of
    :func:`hamiltonian_terms` (its ``H0`` carrying the member's onsite
    shift), so the Magnus commutator reduces to precomputed ``[M_a, M_b]``.
    """

    def __init__(self, cfg: LatticeConfig, p: RiceMeleParams, shifts: Optional[np.ndarray], batch: int):
        base = hamiltonian_terms(cfg, p)
        n = cfg.n_sites
        terms = np.repeat(base[None], batch, axis=0)
        if shifts is not None:
            idx = np.arange(n)
            terms[:, 0, idx, idx] += shifts
        comms = np.stack(
            [terms[:, a] @ terms[:, b] - terms[:, b] @ terms[:, a] for a, b in _PAIRS], axis=1
        )
        self.n = n
        self.terms = terms.reshape(batch, 5, n * n)
        self.comms = comms.reshape(batch, len(_PAIRS), n * n)

    def generators(self, c1: np.ndarray, c2: np.ndarray, h: np.ndarray) -> np.ndarray:
        """``K`` with ``U = exp(-iK)``; ``c1, c2`` are (batch, steps, 5) Gauss-point coefficients."""
        a = np.array([q[0] for q in _PAIRS])
        b = np.array([q[1] for q in _PAIRS])
        w = c2[..., a] * c1[..., b] - c2[..., b] * c1[..., a]
        hh = h[None, :, None]
        K = (0.5 * hh * (c1 + c2)) @ self.terms
        K = K + (-1j * _SQ3 / 12.0 * hh**2 * w) @ self.comms
        return K.reshape(K.shape[:2] + (self.n, self.n))


def _taylor_orders(K: np.ndarray, eps: float = 1e-17) -> np.ndarray:
    """Number of Taylor terms per step so the remainder of ``exp(-iK)`` is below ``eps``."""
    nrm = np.abs(K).sum(axis=-1).max(axis=-1).max(axis=0)
    out = np.empty(nrm.shape, int)
    for i, x in enumerate(nrm):
        m, term = 0, 1.0
        while term > eps or m < 2:
            m += 1
            term *= x / m
        out[i] = m
    return out


def _step_grid(knots: np.ndarray, dt: float) -> np.ndarray:
    pieces = [knots[:1]]
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pieces)


def _propagate(psi0, stepper, schedules, grid, sample_idx, edge_sites, chunk):
    """Advance a batch of states over ``grid``; returns samples and edge maxima."""
    batch, n = psi0.shape
    psi = psi0.astype(complex)[..., None]
    out = np.empty((batch, len(sample_idx), n), complex)
    want = {int(i): k for k, i in enumerate(sample_idx)}
    if 0 in want:
        out[:, want[0]] = psi[..., 0]
    track = len(edge_sites) > 0
    edge_max = np.zeros(batch)
    if track:
        edge_max = np.max(np.abs(psi[:, edge_sites, 0]) ** 2, axis=1)
    n_steps = len(grid) - 1
    off = _SQ3 / 6.0
    for c0 in range(0, n_steps, chunk):
        c1 = min(n_steps, c0 + chunk)
        ta, tb = grid[c0:c1], grid[c0 + 1 : c1 + 1]
        h = tb - ta
        mid = 0.5 * (ta + tb)
        g1 = np.stack([term_coefficients(*s.beta(mid - off * h)) for s in schedules])
        g2 = np.stack([term_coefficients(*s.beta(mid + off * h)) for s in schedules])
        mK = -1j * stepper.generators(g1, g2, h)
        orders = _taylor_orders(mK)
        for j in range(c1 - c0):
            A = mK[:, j]
            term = psi
            acc = psi
            for k in range(1, orders[j] + 1):
                term = (A @ term) * (1.0 / k)
                acc = acc + term
            psi = acc
            if track:
                np.maximum(edge_max, np.max(np.abs(psi[:, edge_sites, 0]) ** 2, axis=1), out=edge_max)
            idx = c0 + j + 1
            if idx in want:
                out[:, want[idx]] = psi[..., 0]
    return out, edge_max


def _edge_sites(cfg: LatticeConfig) -> np.ndarray:
    if cfg.boundary == "periodic":
        return np.array([], int)
    m = cfg.hop
    return np.concatenate([np.arange(m), np.arange(cfg.n_sites - m, cfg.n_sites)])


def check_support(state: LatticeState, margin: int = EDGE_MARGIN, threshold: float = 1e-12):
    """Raise :class:`EdgeLeak` if the state has weight within ``margin`` sites of an edge."""
    cfg = state.cfg
    if cfg.boundary == "periodic":
        return
    P = state.populations
    occupied = np.nonzero(P > threshold * P.sum())[0]
    band = margin * cfg.hop
    if occupied.size and (occupied.min() < band or occupied.max() >= cfg.n_sites - band):
        raise EdgeLeak(f"initial support closer than {margin} sites to the chain edge")


def evolve_ensemble(
    psi0,
    schedules,
    p: RiceMeleParams,
    cfg: Optional[LatticeConfig] = None,
    t_span=None,
    samples=None,
    onsite_shifts=None,
    dt: float = 0.02,
    tol: float = 1e-8,
    max_halvings: int = 6,
    check_edges: bool = True,
) -> list:
    """Evolve several independent runs on a shared step grid.

    ``psi0`` is one :class:`LatticeState` or one per run; ``schedules`` is a
    schedule or a sequence (one per run); ``onsite_shifts`` is ``None``, one
    shift vector, or an array of shape ``(runs, n_sites)``.  Runs share the
    time grid, so the step refinement stops only when every run has
    converged.  Returns one :class:`Trajectory` per run.
    """
    if isinstance(schedules, PumpSchedule):
        schedules = [schedules]
    schedules = list(schedules)
    states = [psi0] if isinstance(psi0, LatticeState) else list(psi0)
    shifts = None if onsite_shifts is None else np.atleast_2d(np.asarray(onsite_shifts))
    if shifts is not None and np.iscomplexobj(shifts):
        if np.any(shifts.imag != 0):
            raise ValueError("onsite_shift must be real (Hermitian Hamiltonian)")
        shifts = shifts.real
    batch = max(len(schedules), len(states), 1 if shifts is None else len(shifts))
    for name, seq in (("schedules", schedules), ("states", states)):
        if len(seq) not in (1, batch):
            raise ValueError(f"{name} must have 1 or {batch} entries")
    if shifts is not None and len(shifts) not in (1, batch):
        raise ValueError(f"onsite_shifts must have 1 or {batch} rows")
    schedules = schedules * (batch // len(schedules))
    states = states * (batch // len(states))

    cfg = states[0].cfg if cfg is None else cfg
    if any(s.cfg != cfg for s in states):
        raise ValueError("state and lattice configuration differ")
    if shifts is not None:
        if shifts.shape[-1] != cfg.n_sites:
            raise ValueError(f"onsite_shift needs {cfg.n_sites} entries, got {shifts.shape[-1]}")
        shifts = np.broadcast_to(shifts.astype(float), (batch, cfg.n_sites))
    if t_span is None:
        t_span = (min(s.t_start for s in schedules), max(s.t_end for s in schedules))
    t0, t1 = map(float, t_span)
    if t1 < t0:
        raise ValueError("t_span must be increasing")
    if samples is None:
        samples = np.linspace(t0, t1, 201)
    samples = np.unique(np.asarray(samples, float))
    if samples.min() < t0 - 1e-12 or samples.max() > t1 + 1e-12:
        raise ValueError("sample times outside t_span")
    for s in states:
        if abs(s.norm - 1.0) > 1e-9:
            raise ValueError(f"initial state not normalised (norm {s.norm})")

    edges = _edge_sites(cfg)
    if check_edges:
        for s in states:
            check_support(s)

    stepper = _MagnusStepper(cfg, p, shifts, batch)
    kinks = [s.breakpoints(t0, t1) for s in schedules]
    knots = np.unique(np.concatenate([[t0, t1], samples, *kinks]))
    amps0 = np.stack([s.amplitudes for s in states])
    chunk = max(4, min(4096, 2**21 // (batch * cfg.n_sites**2)))
    prev = None
    for _ in range(max_halvings + 1):
        grid = _step_grid(knots, dt)
        sample_idx = np.searchsorted(grid, samples)
        amps, edge_max = _propagate(amps0, stepper, schedules, grid, sample_idx, edges, chunk)
        P = np.abs(amps) ** 2
        if prev is not None:
            change = float(np.max(np.abs(P - prev)))
            log.debug("dt=%g: max population change %.3g", dt, change)
            if change < tol:
                break
        prev = P
        dt /= 2.0
    else:
        raise StepFailure(f"populations not converged to {tol} after {max_halvings} halvings")

    worst = float(edge_max.max())
    if check_edges and worst > EDGE_POPULATION:
        raise EdgeLeak(f"edge population reached {worst:.3g}; enlarge the chain")
    return [Trajectory(samples, amps[b], cfg, float(edge_max[b]), len(grid) - 1) for b in range(batch)]


def evolve(
    psi0: LatticeState,
    schedule: PumpSchedule,
    p: RiceMeleParams,
    cfg: Optional[LatticeConfig] = None,
    t_span=None,
    samples=None,
    onsite_shift=None,
    dt: float = 0.02,
    tol: float = 1e-8,
    max_halvings: int = 6,
    check_edges: bool = True,
) -> Trajectory:
    """Solve ``i dpsi/dt = H(t) psi`` for the OAM-lattice Hamiltonian.

    ``samples`` are the output times (default: 201 points over ``t_span``);
    ``t_span`` defaults to the pumping window of ``schedule``.  The step is
    halved until every sampled population changes by less than ``tol``.
    """
    return evolve_ensemble(
        psi0, schedule, p, cfg, t_span, samples, onsite_shift, dt, tol, max_halvings, check_edges
    )[0]


def half_cycle_times(schedule: PumpSchedule, m_max: Optional[int] = None) -> np.ndarray:
    """``t_m = t_start + m T/2`` for ``m = 0 .. 2 n_cycles``."""
    m_max = int(round(2 * schedule.n_cycles)) if m_max is None else m_max
    return schedule.t_start + 0.5 * schedule.period * np.arange(m_max + 1)


def pump_report(traj: Trajectory, l0: int, m: int, schedule: PumpSchedule, direction: int = 1) -> PumpResult:
    """Displacement and purity at ``t_m = m T/2``; the target is ``l0 + direction*m*step``."""
    t_m = schedule.t_start + 0.5 * m * schedule.period
    i = traj.index_of(t_m)
    state = traj.state(i)
    target = l0 + direction * m * traj.cfg.step
    disp = center_of_mass(state) - center_of_mass(traj.state(traj.index_of(schedule.t_start)))
    return PumpResult(disp, purity(state, target), target, state)


# --------------------------------------------------------------------------
# band-resolved transport


def bloch_weights(state: LatticeState, schedule: PumpSchedule, p: RiceMeleParams, band="lower", t=None, n_k=None, origin: int = 0):
    """``|psi_k|^2`` of ``state`` in ``band`` at schedule time ``t``.

    Cells are those of :func:`wannier_state`; the state is Fourier
    transformed over cells with the ``e^{-ijk}`` convention and projected on
    the Bloch spinor.  Weights are normalised to sum to one over the grid.
    """
    cfg = state.cfg
    m, sites = _cell_sites(cfg, origin)
    cells = np.floor_divide(m, 2)
    sub = np.mod(m, 2)
    if n_k is None:
        n_k = int(cells.max() - cells.min() + 1)
    k = 2 * np.pi * np.arange(n_k) / n_k
    t = schedule.t_start if t is None else t
    b0, b1 = schedule.beta(t)
    u = bloch_states(bloch_hamiltonian(k, float(b0), float(b1), p), band)
    a = state.amplitudes[(sites - cfg.l_min) // cfg.stride]
    comp = np.zeros((n_k, 2), complex)
    for s in (0, 1):
        sel = sub == s
        comp[:, s] = np.exp(1j * np.outer(k, cells[sel])) @ a[sel]
    proj = np.einsum("ks,ks->k", np.conj(u), comp)
    w = np.abs(proj) ** 2
    return k, w / w.sum()


def mean_current(weights, schedule: PumpSchedule, p: RiceMeleParams, t, band="lower", k=None):
    """Average cell current ``I(t) = sum_k |psi_k|^2 [v(k, t) + Omega(k, t)]``.

    ``weights`` are ``|psi_k|^2`` on the grid ``k`` (default uniform grid of
    matching length).  ``t`` is loop time (scalar or array).  The result is
    in unit cells per time; multiply by ``2 * step`` for OAM units.
    """
    w = np.asarray(weights, float)
    if k is None:
        k = 2 * np.pi * np.arange(len(w)) / len(w)
    t_arr = np.atleast_1d(np.asarray(t, float))
    kk, tt = np.meshgrid(k, t_arr, indexing="ij")
    omega = curvature_density(kk.ravel(), tt.ravel(), schedule, p, band).reshape(kk.shape)
    vel = group_velocity(kk, tt, schedule, p, band)
    cur = (w[:, None] * (vel + omega)).sum(axis=0)
    return cur if np.ndim(t) else float(cur[0])


def integrated_current(weights, schedule, p, t0=0.0, t1=None, band="lower", k=None, n_t=2000):
    """``int I dt`` over loop time ``[t0, t1]`` (Gauss-Legendre per segment)."""
    t1 = schedule.period if t1 is None else t1
    bounds = schedule.boundaries
    knots = np.unique(np.concatenate([[t0, t1], bounds[(bounds > t0) & (bounds < t1)]]))
    xg, wg = np.polynomial.legendre.leggauss(16)
    total = 0.0
    per = max(1, n_t // (16 * (len(knots) - 1)))
    for a, b in zip(knots[:-1], knots[1:]):
        edges = np.linspace(a, b, per + 1)
        for c, d in zip(edges[:-1], edges[1:]):
            ts = 0.5 * (d - c) * xg + 0.5 * (d + c)
            total += 0.5 * (d - c) * float(np.dot(wg, mean_current(weights, schedule, p, ts, band, k)))
    return total
