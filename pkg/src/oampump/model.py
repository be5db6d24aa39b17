"""Synthetic OAM lattice: parameters, pump loops and Hamiltonians.

Energies are in units of ``J1`` and times in ``1/J1`` unless stated
otherwise (hbar = 1).  Sites are OAM indices ``l``; unit cell ``j`` holds
the pair ``(2j, 2j+1)``.
"""

from __future__ import annotations

import bisect
import math

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

PI = np.pi
TWO_PI = 2.0 * np.pi

__all__ = [
    "RiceMeleParams",
    "Segment",
    "PumpSchedule",
    "DerivedCouplings",
    "LatticeConfig",
    "LatticeState",
    "derived_couplings",
    "delta_j",
    "bloch_hamiltonian",
    "bloch_matrix",
    "real_space_hamiltonian",
    "hamiltonian_terms",
    "term_coefficients",
    "default_pump_loop",
    "circular_pump_loop",
    "hold_schedule",
]


@dataclass(frozen=True)
class RiceMeleParams:
    J0: float = 5.0
    J1: float = 1.0
    alpha0: float = PI
    alpha1: float = PI

    def __post_init__(self):
        if not (self.J0 > 0 and self.J1 > 0):
            raise ValueError(f"J0 and J1 must be positive, got {self.J0}, {self.J1}")

    @classmethod
    def for_step(cls, J0: float, J1: float, step: int) -> "RiceMeleParams":
        """Parameters for an SLM step ``step`` with ``mod(alpha*step, 2pi) = pi``."""
        alpha = PI / step
        return cls(J0=J0, J1=J1, alpha0=alpha, alpha1=alpha)


@dataclass(frozen=True)
class DerivedCouplings:
    Delta: float
    Jplus: complex
    Jminus: complex

    @property
    def dJ(self) -> float:
        return abs(self.Jplus) - abs(self.Jminus)


def derived_couplings(beta0: float, beta1: float, p: RiceMeleParams) -> DerivedCouplings:
    e = np.exp(1j * beta1)
    return DerivedCouplings(
        Delta=float(-4.0 * p.J0 * np.cos(beta0)),
        Jplus=complex(p.J1 * (1.0 + e)),
        Jminus=complex(p.J1 * (1.0 - e)),
    )


def delta_j(beta1, J1: float = 1.0):
    """``|J+| - |J-|`` in closed form."""
    half = np.asarray(beta1) / 2.0
    return 2.0 * J1 * (np.abs(np.cos(half)) - np.abs(np.sin(half)))


def bloch_hamiltonian(k, beta0, beta1, p: RiceMeleParams) -> np.ndarray:
    """Bloch vector ``h(k)`` with ``h_x + i h_y = -(J+ + J-^* e^{-ik})`` and ``h_z = Delta/2``.

    Broadcasts over its arguments; the last axis of the result holds
    ``(h_x, h_y, h_z)``.  The band energies are ``+-|h|``.  With this sign of
    ``k`` a Bloch eigenstate reads ``e^{-ijk} u(k)`` on unit cell ``j``.
    """
    k, beta0, beta1 = np.broadcast_arrays(
        np.asarray(k, float), np.asarray(beta0, float), np.asarray(beta1, float)
    )
    e1 = np.exp(1j * beta1)
    jp = p.J1 * (1.0 + e1)
    jm = p.J1 * (1.0 - e1)
    off = -(jp + np.conj(jm) * np.exp(-1j * k))
    hz = -2.0 * p.J0 * np.cos(beta0)
    return np.stack([off.real, off.imag, hz], axis=-1)


_PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)


def bloch_matrix(h: np.ndarray) -> np.ndarray:
    """``h . sigma`` for a stack of Bloch vectors."""
    return np.einsum("...a,aij->...ij", h, _PAULI)


@dataclass(frozen=True)
class LatticeConfig:
    """Truncated OAM chain ``l_min .. l_max_site`` (inclusive).

    ``step`` is the SLM step of the tunneling cavities (1 for the basic
    switch, ``N**n`` for stage ``n`` of a cascade).  A step-``M`` lattice
    splits into ``M`` decoupled chains; ``single_sublattice=True`` keeps only
    the chain through ``l_min`` (sites ``l_min + i*step``).
    """

    l_min: int = -20
    l_max_site: int = 21
    boundary: str = "open"
    step: int = 1
    single_sublattice: bool = False

    def __post_init__(self):
        if self.l_max_site <= self.l_min:
            raise ValueError("l_max_site must exceed l_min")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.single_sublattice and (self.l_max_site - self.l_min) % self.step:
            raise ValueError("single-sublattice chain must end on its own sublattice")
        if self.boundary == "periodic" and self.n_sites % (2 * self.hop):
            raise ValueError("periodic chain needs whole unit cells")

    @classmethod
    def centered(
        cls,
        l0: int = 0,
        n_sites: int = 42,
        step: int = 1,
        boundary: str = "open",
        single_sublattice: bool = False,
    ):
        """``n_sites`` sites (per sublattice for ``step > 1``) around ``l0``.

        Cells are aligned so that ``l0`` is the first site of a unit cell.
        """
        below = n_sites // 2 - 1
        below += below % 2
        lo = l0 - below * step
        if single_sublattice:
            hi = lo + (n_sites - 1) * step
        else:
            hi = lo + n_sites * step - 1
        return cls(lo, hi, boundary, step, single_sublattice)

    @property
    def stride(self) -> int:
        return self.step if self.single_sublattice else 1

    @property
    def hop(self) -> int:
        """Index offset between sites joined by one tunneling."""
        return 1 if self.single_sublattice else self.step

    @property
    def n_sites(self) -> int:
        return (self.l_max_site - self.l_min) // self.stride + 1

    @property
    def sites(self) -> np.ndarray:
        return self.l_min + self.stride * np.arange(self.n_sites)

    def index(self, l: int) -> int:
        if not self.l_min <= l <= self.l_max_site or (l - self.l_min) % self.stride:
            raise IndexError(f"OAM {l} is not a site of the chain [{self.l_min}, {self.l_max_site}]")
        return (l - self.l_min) // self.stride


@dataclass(frozen=True, eq=False)
class LatticeState:
    amplitudes: np.ndarray
    cfg: LatticeConfig
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.cfg.n_sites,):
            raise ValueError(f"expected {self.cfg.n_sites} amplitudes, got {a.shape}")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def localized(cls, cfg: LatticeConfig, l: int) -> "LatticeState":
        a = np.zeros(cfg.n_sites, complex)
        a[cfg.index(l)] = 1.0
        return cls(a, cfg)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(self.populations.sum())

    def population(self, l: int) -> float:
        return float(self.populations[self.cfg.index(l)])


def real_space_hamiltonian(
    cfg: LatticeConfig,
    beta0,
    beta1,
    p: RiceMeleParams,
    onsite_shift: Optional[np.ndarray] = None,
) -> np.ndarray:
    """OAM-lattice Hamiltonian over the sites of ``cfg``.

    ``H[l, l] = -2 J0 cos(l alpha0 + beta0) + shift_l`` and
    ``H[l+M, l] = -J1 (exp(i(l alpha1 + beta1)) + 1)`` with ``M = cfg.step``.
    ``beta0``/``beta1`` may be arrays of equal shape, giving a stack of
    matrices with those leading dimensions.
    """
    b0 = np.asarray(beta0, float)
    b1 = np.asarray(beta1, float)
    b0, b1 = np.broadcast_arrays(b0, b1)
    lead = b0.shape
    l = cfg.sites.astype(float)
    n, m = cfg.n_sites, cfg.hop

    H = np.zeros(lead + (n, n), complex)
    diag = -2.0 * p.J0 * np.cos(l * p.alpha0 + b0[..., None])
    if onsite_shift is not None:
        shift = np.asarray(onsite_shift)
        if np.iscomplexobj(shift) and np.any(np.abs(shift.imag) > 0):
            raise ValueError("onsite_shift must be real (Hermitian Hamiltonian)")
        shift = np.real(shift).astype(float)
        if shift.shape[-1] != n:
            raise ValueError(f"onsite_shift needs {n} entries, got {shift.shape}")
        diag = diag + shift
    idx = np.arange(n)
    H[..., idx, idx] = diag

    src = idx if cfg.boundary == "periodic" else idx[: n - m]
    dst = (src + m) % n
    hop = -p.J1 * (np.exp(1j * (l[src] * p.alpha1 + b1[..., None])) + 1.0)
    H[..., dst, src] = hop
    H[..., src, dst] = np.conj(hop)
    return H


def hamiltonian_terms(
    cfg: LatticeConfig, p: RiceMeleParams, onsite_shift: Optional[np.ndarray] = None
) -> np.ndarray:
    """Hermitian basis ``(H0, Dc, Ds, Bc, Bs)`` of :func:`real_space_hamiltonian`.

    ``H(beta0, beta1) = H0 + cos(beta0) Dc + sin(beta0) Ds + cos(beta1) Bc
    + sin(beta1) Bs``.  Used by the integrators to assemble many
    Hamiltonians (and their commutators) with a single contraction.
    """
    H0 = real_space_hamiltonian(cfg, 0.0, 0.0, p, onsite_shift)
    l = cfg.sites.astype(float)
    n, m = cfg.n_sites, cfg.hop
    idx = np.arange(n)
    Dc = np.diag(-2.0 * p.J0 * np.cos(l * p.alpha0)).astype(complex)
    Ds = np.diag(2.0 * p.J0 * np.sin(l * p.alpha0)).astype(complex)
    src = idx if cfg.boundary == "periodic" else idx[: n - m]
    dst = (src + m) % n
    B = np.zeros((n, n), complex)
    B[dst, src] = -p.J1 * np.exp(1j * l[src] * p.alpha1)
    Bc = B + B.conj().T
    Bs = 1j * (B - B.conj().T)
    # remove the beta = 0 parts already contained in H0
    H0 = H0 - Dc - Bc
    return np.stack([H0, Dc, Ds, Bc, Bs])


def term_coefficients(beta0, beta1) -> np.ndarray:
    """Coefficients ``(1, cos b0, sin b0, cos b1, sin b1)`` along the last axis."""
    b0 = np.asarray(beta0, float)
    b1 = np.asarray(beta1, float)
    b0, b1 = np.broadcast_arrays(b0, b1)
    return np.stack([np.ones_like(b0), np.cos(b0), np.sin(b0), np.cos(b1), np.sin(b1)], axis=-1)


# --------------------------------------------------------------------------
# pump loops


def _gap_adapted_fraction(s, ratio: float):
    """Traversal fraction for a ``beta0`` half turn between 0 and pi (mod 2pi).

    The phase speed is proportional to the squared dimer gap
    ``16 (J0^2 cos^2 beta0 + J1^2)``, which keeps the ratio of non-adiabatic
    coupling to gap bounded along the leg.  Integrating gives the closed form
    ``beta0 = atan2(sqrt(1 + 1/ratio^2) sin(pi s), cos(pi s))``; it is analytic
    in ``s``.  ``ratio`` is ``J1/J0``.
    """
    tau = np.pi * np.asarray(s, float)
    stretch = np.sqrt(1.0 + 1.0 / ratio**2)
    return np.arctan2(stretch * np.sin(tau), np.cos(tau)) / np.pi


@dataclass(frozen=True)
class Segment:
    """One leg of a pump loop: ``beta`` moves from ``start`` to ``end``.

    ``ramp="linear"`` interpolates linearly, ``ramp="smooth"`` uses
    ``s - sin(2 pi s)/(2 pi)`` (zero phase velocity at both ends).
    ``ramp="gap"`` is only valid
    for a ``beta0`` half turn at fixed ``beta1`` and uses the gap-adapted
    sweep of ``_gap_adapted_fraction`` (``gap_ratio = J1/J0``).
    """

    duration: float
    start: tuple
    end: tuple
    ramp: str = "linear"
    gap_ratio: float = 0.0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("negative segment duration")
        if self.ramp not in ("linear", "smooth", "gap"):
            raise ValueError(f"unknown ramp {self.ramp!r}")
        if self.ramp == "gap":
            d0 = self.end[0] - self.start[0]
            if not (np.isclose(abs(d0), PI) and np.isclose(self.start[1], self.end[1])):
                raise ValueError("gap ramp needs a pure beta0 half turn")
            if not np.isclose(np.cos(self.start[0]) ** 2, 1.0):
                raise ValueError("gap ramp must start at beta0 = 0 or pi")
            if self.gap_ratio <= 0:
                raise ValueError("gap ramp needs gap_ratio = J1/J0 > 0")

    def fraction(self, s):
        s = np.clip(np.asarray(s, float), 0.0, 1.0)
        if self.ramp == "linear":
            return s
        if self.ramp == "smooth":
            return s - np.sin(TWO_PI * s) / TWO_PI
        return _gap_adapted_fraction(s, self.gap_ratio)

    def fraction_scalar(self, s: float) -> float:
        s = min(max(s, 0.0), 1.0)
        if self.ramp == "linear":
            return s
        if self.ramp == "smooth":
            return s - math.sin(TWO_PI * s) / TWO_PI
        stretch = math.sqrt(1.0 + 1.0 / self.gap_ratio**2)
        return math.atan2(stretch * math.sin(PI * s), math.cos(PI * s)) / PI

    def at(self, s):
        g = self.fraction(s)
        b0 = self.start[0] + (self.end[0] - self.start[0]) * g
        b1 = self.start[1] + (self.end[1] - self.start[1]) * g
        return b0, b1

    def reversed(self) -> "Segment":
        return replace(self, start=self.end, end=self.start)


@dataclass(frozen=True)
class PumpSchedule:
    """Closed loop in the ``(beta0, beta1)`` torus traversed ``n_cycles`` times.

    Absolute time ``t`` maps to loop time ``t - t_start``, clamped to the
    pumping window ``[0, n_cycles * period]``: before the window the phases
    sit at the loop start, after it at the point reached.  ``offset`` is a
    constant phase error added to both phases.
    """

    segments: tuple
    n_cycles: float = 1.0
    orientation: str = "clockwise"
    t_start: float = 0.0
    offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("empty schedule")
        if self.n_cycles < 0 or not np.isclose(2 * self.n_cycles, round(2 * self.n_cycles)):
            raise ValueError("n_cycles must be a non-negative half-integer")
        for a, b in zip(segs, segs[1:] + segs[:1]):
            gap = np.subtract(b.start, a.end)
            if b is segs[0]:
                # closing leg: equal modulo 2pi
                gap = np.angle(np.exp(1j * gap))
            if np.max(np.abs(gap)) > 1e-9:
                raise ValueError("segments do not form a closed loop")
        if self.period <= 0:
            raise ValueError("loop period must be positive")
        cum = [0.0]
        for seg in segs:
            cum.append(cum[-1] + seg.duration)
        object.__setattr__(self, "_cum", cum)

    @property
    def period(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def duration(self) -> float:
        return self.n_cycles * self.period

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    @property
    def boundaries(self) -> np.ndarray:
        """Segment end times within one period, starting with 0."""
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def loop_point(self, tau):
        """Phases at loop time ``tau`` in ``[0, period]`` (no offset)."""
        tau = np.asarray(tau, float)
        bounds = self.boundaries
        idx = np.clip(np.searchsorted(bounds, tau, side="right") - 1, 0, len(self.segments) - 1)
        b0 = np.empty(tau.shape)
        b1 = np.empty(tau.shape)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if not np.any(mask):
                continue
            s = (tau[mask] - bounds[i]) / seg.duration if seg.duration > 0 else np.ones(mask.sum())
            b0[mask], b1[mask] = seg.at(s)
        return b0, b1

    def beta(self, t):
        """Phases ``(beta0, beta1)`` at absolute time(s) ``t``."""
        t = np.asarray(t, float)
        tau = np.clip(t - self.t_start, 0.0, self.duration)
        T = self.period
        cyc = np.floor(tau / T)
        rem = tau - cyc * T
        # land exactly on the loop end rather than wrapping back to its start
        at_end = (rem < 1e-12 * T) & (cyc > 0) & np.isclose(tau, self.duration)
        rem = np.where(at_end, T, rem)
        b0, b1 = self.loop_point(rem)
        return b0 + self.offset[0], b1 + self.offset[1]

    def beta_scalar(self, t: float):
        """Fast path of :meth:`beta` for one time (used inside ODE right-hand sides)."""
        T = self._cum[-1]
        dur = self.n_cycles * T
        tau = min(max(t - self.t_start, 0.0), dur)
        cyc = math.floor(tau / T)
        rem = tau - cyc * T
        if rem < 1e-12 * T and cyc > 0 and abs(tau - dur) <= 1e-8 * max(1.0, dur):
            rem = T
        bounds = self._cum
        i = min(max(bisect.bisect_right(bounds, rem) - 1, 0), len(self.segments) - 1)
        seg = self.segments[i]
        s = (rem - bounds[i]) / seg.duration if seg.duration > 0 else 1.0
        g = seg.fraction_scalar(s)
        b0 = seg.start[0] + (seg.end[0] - seg.start[0]) * g
        b1 = seg.start[1] + (seg.end[1] - seg.start[1]) * g
        return b0 + self.offset[0], b1 + self.offset[1]


    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        """Times in ``(t0, t1)`` where the phase profile has a kink."""
        T = self.period
        n_full = int(np.ceil(self.n_cycles)) + 1
        pts = [
            self.t_start + c * T + b
            for c in range(n_full)
            for b in self.boundaries
            if c * T + b <= self.duration + 1e-12
        ]
        pts = np.unique(np.round(np.asarray(pts), 12))
        return pts[(pts > t0) & (pts < t1)]

    def reversed(self) -> "PumpSchedule":
        """Same loop traversed the other way round, still starting at the start point."""
        segs = tuple(s.reversed() for s in reversed(self.segments))
        # shift so the first segment begins where the original started
        shift = np.subtract(self.segments[0].start, segs[0].start)
        segs = tuple(
            replace(s, start=tuple(np.add(s.start, shift)), end=tuple(np.add(s.end, shift)))
            for s in segs
        )
        other = "counterclockwise" if self.orientation == "clockwise" else "clockwise"
        return replace(self, segments=segs, orientation=other)

    def with_offset(self, d0: float, d1: float) -> "PumpSchedule":
        return replace(self, offset=(self.offset[0] + d0, self.offset[1] + d1))


def default_pump_loop(
    p: RiceMeleParams,
    T: float = 21.0,
    orientation: str = "clockwise",
    n_cycles: float = 1.0,
    beta1_share: float = 0.05,
    ramp: str = "gap",
    beta1_ramp: str = "linear",
    t_start: float = 0.0,
) -> PumpSchedule:
    """Rectangular pump loop starting at ``dJ = 2 J1``, ``Delta = -4 J0``.

    Clockwise in the ``(Delta, dJ)`` plane: ``(beta0, beta1)`` runs
    ``(0,0) -> (pi,0) -> (pi,pi) -> (2pi,pi) -> (2pi,2pi)``.  A lower-band
    photon moves by ``+1`` site on each ``beta0`` leg.  The two ``beta1``
    legs take ``beta1_share`` of the period between them.  ``ramp="linear"``
    with ``beta1_share=0.5`` gives four equal linear legs.
    """
    if T <= 0:
        raise ValueError("period must be positive")
    if orientation not in ("clockwise", "counterclockwise"):
        raise ValueError(f"unknown orientation {orientation!r}")
    if not 0 < beta1_share < 1:
        raise ValueError("beta1_share must lie in (0, 1)")
    t0 = (1.0 - beta1_share) * T / 2.0
    t1 = beta1_share * T / 2.0
    r = p.J1 / p.J0
    kw = dict(ramp=ramp, gap_ratio=r) if ramp == "gap" else {}
    segs = (
        Segment(t0, (0.0, 0.0), (PI, 0.0), **kw),
        Segment(t1, (PI, 0.0), (PI, PI), ramp=beta1_ramp),
        Segment(t0, (PI, PI), (TWO_PI, PI), **kw),
        Segment(t1, (TWO_PI, PI), (TWO_PI, TWO_PI), ramp=beta1_ramp),
    )
    sched = PumpSchedule(segs, n_cycles=n_cycles, orientation="clockwise", t_start=t_start)
    return sched.reversed() if orientation == "counterclockwise" else sched


def circular_pump_loop(
    center=(PI / 2, PI / 2),
    radius: float = 1.0,
    T: float = 21.0,
    orientation: str = "clockwise",
    n_segments: int = 96,
    n_cycles: float = 1.0,
    radii=None,
) -> PumpSchedule:
    """Polygonal approximation of a circle (or ellipse via ``radii``).

    ``clockwise`` refers to the ``(Delta, dJ)`` plane near the critical
    point, which is counterclockwise in ``(beta0, beta1)``.
    """
    r0, r1 = (radius, radius) if radii is None else radii
    sign = 1.0 if orientation == "clockwise" else -1.0
    ang = sign * np.linspace(0.0, TWO_PI, n_segments + 1) + PI
    pts = [(center[0] + r0 * np.cos(a), center[1] + r1 * np.sin(a)) for a in ang]
    pts[-1] = pts[0]
    dt = T / n_segments
    segs = tuple(Segment(dt, pts[i], pts[i + 1]) for i in range(n_segments))
    return PumpSchedule(segs, n_cycles=n_cycles, orientation=orientation)


def hold_schedule(beta0: float, beta1: float, T: float = 1.0) -> PumpSchedule:
    """Frozen phases: a degenerate loop collapsed to one point."""
    pt = (float(beta0), float(beta1))
    return PumpSchedule((Segment(T, pt, pt),))
