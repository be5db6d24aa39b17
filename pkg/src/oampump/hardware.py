"""Physical layer: degenerate-cavity optics, coupling rates and disorder.

Ray-matrix convention
---------------------
The main cavity is a rectangle with sides ``X`` and ``Y`` and a focusing
mirror in each corner.  ``F`` is the mirror radius of curvature, so each
mirror acts as a thin lens of focal length ``F/2``.  One round trip is
``(P(Y) L(F/2) P(X) L(F/2))**2``.  With ``x = X/F`` and ``y = Y/F`` the
half-trip trace is ``4 (x-1)(y-1) - 2``, which gives

* full transverse degeneracy (round-trip matrix = identity) at ``X = Y = F``;
* stability iff ``0 <= (X-F)(Y-F) <= F**2``;
* ``arccos((A+D)/2) ~= 4 sqrt((X-F)(Y-F)) / F`` near degeneracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import Unstable
from .model import LatticeConfig

TWO_PI = 2.0 * np.pi

# default physical scales (rad/s)
OMEGA_F = TWO_PI * 1e9
J0_PHYS = TWO_PI * 20e6
J1_PHYS = TWO_PI * 4e6


@dataclass(frozen=True)
class CavityGeometry:
    X: float
    Y: float
    F: float = 0.1
    wavelength: float = 1e-6
    omega_F: float = OMEGA_F
    n: int = 0

    def __post_init__(self):
        for name in ("X", "Y", "F", "wavelength", "omega_F"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def degenerate(cls, F: float = 0.1, **kw) -> "CavityGeometry":
        return cls(X=F, Y=F, F=F, **kw)

    @property
    def misalignment(self) -> float:
        """``(X - F)(Y - F)`` in m^2."""
        return (self.X - self.F) * (self.Y - self.F)


def propagation(d: float) -> np.ndarray:
    return np.array([[1.0, d], [0.0, 1.0]])


def thin_lens(f: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [-1.0 / f, 1.0]])


def round_trip_abcd(geom: CavityGeometry, start: str = "X") -> np.ndarray:
    """Round-trip ray matrix (reference plane just after a mirror, facing side ``start``)."""
    if start not in ("X", "Y"):
        raise ValueError("start must be 'X' or 'Y'")
    f = geom.F / 2.0
    a, b = (geom.X, geom.Y) if start == "X" else (geom.Y, geom.X)
    half = thin_lens(f) @ propagation(b) @ thin_lens(f) @ propagation(a)
    return half @ half


def half_trace(geom: CavityGeometry) -> float:
    """``(A + D)/2`` of the round-trip matrix."""
    M = round_trip_abcd(geom)
    return 0.5 * float(M[0, 0] + M[1, 1])


def is_stable(geom: CavityGeometry, tol: float = 1e-12) -> bool:
    return abs(half_trace(geom)) <= 1.0 + tol


def gouy_angle(geom: CavityGeometry) -> float:
    """``arccos((A+D)/2)``; raises :class:`Unstable` outside the stability region."""
    c = half_trace(geom)
    if abs(c) > 1.0 + 1e-12:
        raise Unstable(f"|A+D|/2 = {abs(c):.6g} > 1")
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def mode_frequency(p: int, l: int, geom: CavityGeometry) -> float:
    """Resonance of the LG mode ``(p, l)`` in rad/s."""
    if p < 0:
        raise ValueError("radial index must be non-negative")
    return geom.n * geom.omega_F + (2 * p + abs(l) + 1) * gouy_angle(geom) / TWO_PI * geom.omega_F


def beam_waist(geom: CavityGeometry) -> float:
    """Waist ``w0`` with ``w0**2 = (lambda F / 2 pi) sqrt((X-F)/(Y-F))``."""
    dx, dy = geom.X - geom.F, geom.Y - geom.F
    if dy == 0 or dx == 0:
        raise Unstable("waist undefined on the degeneracy lines X = F or Y = F")
    ratio = dx / dy
    if ratio < 0 or not is_stable(geom):
        raise Unstable("geometry outside the stability region")
    return float(np.sqrt(geom.wavelength * geom.F / TWO_PI * np.sqrt(ratio)))


def degeneracy_detuning(geom: CavityGeometry) -> float:
    """Per-|l| detuning ``delta_omega = 3 arccos((A+D)/2) Omega_F / 2 pi`` (rad/s).

    The factor 3 assumes radial indices of the same order as ``|l|``.
    """
    return 3.0 * gouy_angle(geom) / TWO_PI * geom.omega_F


def onsite_detuning(l, delta_omega: float):
    """``delta_omega_l = |l| delta_omega``."""
    return np.abs(np.asarray(l)) * delta_omega


def usable_oam(geom: CavityGeometry, J1: float = J1_PHYS) -> float:
    """Largest ``|l|`` with ``|l| delta_omega <= 4 J1`` (inf at degeneracy)."""
    dw = degeneracy_detuning(geom)
    return np.inf if dw == 0 else 4.0 * J1 / dw


def misalignment_for_detuning(delta_omega: float, F: float = 0.1, omega_F: float = OMEGA_F) -> float:
    """``sqrt((X-F)(Y-F))`` giving ``delta_omega`` for a square detuning ``X-F = Y-F``.

    Solved by bisection on the exact ray matrix, not the small-angle form.
    """
    from scipy.optimize import brentq

    if delta_omega <= 0:
        return 0.0

    def f(s):
        return degeneracy_detuning(CavityGeometry(F + s, F + s, F, omega_F=omega_F)) - delta_omega

    hi = 0.999 * F
    if f(hi) < 0:
        raise Unstable("detuning not reachable inside the stability region")
    return float(brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-13))


def detuning_map(X, Y, F: float = 0.1, J1: float = J1_PHYS, omega_F: float = OMEGA_F) -> np.ndarray:
    """``delta_omega / 4 J1`` over a grid of ``(X, Y)``; NaN where unstable."""
    X, Y = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float))
    out = np.full(X.shape, np.nan)
    for idx in np.ndindex(X.shape):
        g = CavityGeometry(float(X[idx]), float(Y[idx]), F, omega_F=omega_F)
        if is_stable(g):
            out[idx] = degeneracy_detuning(g) / (4.0 * J1)
    return out


# --------------------------------------------------------------------------
# beam splitters


@dataclass(frozen=True)
class BeamSplitterSpec:
    r: complex
    t: complex

    def __post_init__(self):
        if abs(self.r) ** 2 + abs(self.t) ** 2 > 1.0 + 1e-12:
            raise ValueError("|r|^2 + |t|^2 must not exceed 1")

    @classmethod
    def lossless(cls, reflectance: float) -> "BeamSplitterSpec":
        if not 0.0 <= reflectance <= 1.0:
            raise ValueError("reflectance must lie in [0, 1]")
        return cls(np.sqrt(reflectance), np.sqrt(1.0 - reflectance))


def tunneling_from_bs(bs: BeamSplitterSpec, omega_F: float = OMEGA_F) -> float:
    """Tunneling rate ``Omega_F |r|^2 / (2 pi (1 + |t|^2))`` (rad/s)."""
    r2, t2 = abs(bs.r) ** 2, abs(bs.t) ** 2
    return omega_F * r2 / (TWO_PI * (1.0 + t2))


def coupling_from_bs(r_P: complex, omega_F: float = OMEGA_F) -> float:
    """External coupling ``kappa_e ~= |r_P|^2 Omega_F / 2 pi`` (valid for ``|r_P|^2 << 1``)."""
    return abs(r_P) ** 2 * omega_F / TWO_PI


def reflectance_for_coupling(kappa_e: float, omega_F: float = OMEGA_F) -> float:
    """Inverse of :func:`coupling_from_bs`: the ``|r_P|^2`` giving ``kappa_e``."""
    return kappa_e * TWO_PI / omega_F


def to_physical_time(t: float, J1: float = J1_PHYS) -> float:
    """Dimensionless ``t J1`` to seconds."""
    return t / J1


def to_physical_rate(x: float, J1: float = J1_PHYS) -> float:
    """Energy in units of ``J1`` to rad/s."""
    return x * J1


# --------------------------------------------------------------------------
# disorder


@dataclass(frozen=True)
class DisorderSpec:
    """Seeded disorder ensemble.

    ``kind="phase"`` draws one constant ``(dbeta0, dbeta1)`` pair per trial.
    ``kind="onsite"`` draws per-site shifts with standard deviation
    ``|l| sigma_detune`` (``onsite_mode="per_site"``) or a single Gaussian
    ``delta_omega`` scaled by ``|l|`` (``onsite_mode="global"``).
    """

    kind: str = "phase"
    sigma_phase: float = 0.1
    sigma_detune: float = 0.0
    seed: int = 0
    trials: int = 100
    onsite_mode: str = "per_site"

    def __post_init__(self):
        if self.kind not in ("phase", "onsite"):
            raise ValueError(f"unknown disorder kind {self.kind!r}")
        if self.onsite_mode not in ("per_site", "global"):
            raise ValueError(f"unknown onsite_mode {self.onsite_mode!r}")
        if self.sigma_phase < 0 or self.sigma_detune < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _rng(spec: DisorderSpec, trial: int) -> np.random.Generator:
    if not 0 <= trial:
        raise ValueError("trial index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([spec.seed, trial]))


def sample_disorder(spec: DisorderSpec, trial: int, cfg: Optional[LatticeConfig] = None):
    """Draw for one trial: ``(dbeta0, dbeta1)`` or an onsite-shift vector over ``cfg``."""
    rng = _rng(spec, trial)
    if spec.kind == "phase":
        d = spec.sigma_phase * rng.standard_normal(2)
        return float(d[0]), float(d[1])
    if cfg is None:
        raise ValueError("onsite disorder needs a lattice configuration")
    l = np.abs(cfg.sites).astype(float)
    if spec.onsite_mode == "per_site":
        g = rng.standard_normal(cfg.n_sites)
    else:
        g = rng.standard_normal()
    return l * spec.sigma_detune * g
