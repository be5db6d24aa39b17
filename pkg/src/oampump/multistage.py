"""Cascade planning: realise an OAM change as pumping stages with SLM steps ``N**n``.

Stage ``n`` moves the photon by ``c_n N**n`` using ``|c_n|/2`` pump cycles;
a negative digit runs the loop counterclockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .dynamics import EDGE_MARGIN, EDGE_POPULATION, evolve_ensemble, wannier_state
from .errors import EdgeLeak, Unrepresentable
from .model import LatticeConfig, LatticeState, RiceMeleParams, default_pump_loop


@dataclass(frozen=True)
class StagePlan:
    """Digits are stored least significant first: ``delta_l = sum c_n N**n``."""

    delta_l: int
    base: int
    digits: tuple
    mode: str = "unsigned"

    def __post_init__(self):
        if sum(c * self.base**n for n, c in enumerate(self.digits)) != self.delta_l:
            raise ValueError("digits do not sum to delta_l")
        if any(abs(c) > self.base - 1 for c in self.digits):
            raise ValueError("digit magnitude exceeds base - 1")

    @property
    def stages(self) -> int:
        return len(self.digits)

    @property
    def cycles(self) -> tuple:
        """Pump cycles per stage (half-integers, negative = counterclockwise)."""
        return tuple(c / 2 for c in self.digits)

    @property
    def steps(self) -> tuple:
        return tuple(self.base**n for n in range(self.stages))

    @property
    def total_time(self) -> float:
        """Pump time in units of the loop period ``T``."""
        return sum(abs(c) for c in self.digits) / 2

    def as_dict(self) -> dict:
        return {
            "delta_l": self.delta_l,
            "base": self.base,
            "mode": self.mode,
            "digits_msb_first": list(reversed(self.digits)),
            "steps": list(self.steps),
            "cycles": list(self.cycles),
            "total_time_T": self.total_time,
        }


def _unsigned_digits(n: int, base: int) -> list:
    out = []
    while n:
        n, r = divmod(n, base)
        out.append(r)
    return out


def _balanced_digits(delta_l: int, base: int, q: int) -> Optional[tuple]:
    """Exact minimum of ``sum |c_n|`` over ``q`` digits, ``|c_n| <= base - 1``.

    At each stage the digit is congruent to the remainder mod ``base``, so only
    ``r`` and ``r - base`` compete; the carry recursion is memoised.  Ties
    prefer fewer non-zero stages, then the smaller largest digit.
    """

    @lru_cache(maxsize=None)
    def best(rem: int, n: int):
        if rem == 0:
            return (0, 0, 0, ())
        if n == q:
            return None
        r = rem % base
        options = []
        for c in (r, r - base):
            if abs(c) >= base:
                continue
            sub = best((rem - c) // base, n + 1)
            if sub is None:
                continue
            cost, nz, big, tail = sub
            options.append((cost + abs(c), nz + (c != 0), max(big, abs(c)), (c,) + tail))
        return min(options) if options else None

    res = best(delta_l, 0)
    best.cache_clear()
    return None if res is None else res[3]


def plan_switch(delta_l: int, N: int, q: Optional[int] = None, mode: str = "unsigned") -> StagePlan:
    """Stage digits for an OAM change ``delta_l`` in base ``N`` with at most ``q`` stages.

    ``mode="unsigned"`` writes ``|delta_l|`` in base ``N`` and gives every digit
    the sign of ``delta_l``.  ``mode="balanced"`` lets digits take either sign
    and minimises the total number of cycles.  ``q=None`` allows as many
    stages as the representation needs (one extra for balanced carries).
    """
    if int(N) != N or N < 2:
        raise ValueError("base N must be an integer >= 2")
    if int(delta_l) != delta_l:
        raise ValueError("delta_l must be an integer")
    delta_l, N = int(delta_l), int(N)
    if mode not in ("unsigned", "balanced"):
        raise ValueError(f"unknown mode {mode!r}")
    if q is not None and q < 0:
        raise ValueError("q must be non-negative")

    unsigned = _unsigned_digits(abs(delta_l), N)
    sign = 1 if delta_l >= 0 else -1
    if mode == "unsigned":
        if q is not None and len(unsigned) > q:
            raise Unrepresentable(f"|{delta_l}| needs {len(unsigned)} base-{N} stages, only {q} allowed")
        digits = tuple(sign * c for c in unsigned)
    else:
        limit = len(unsigned) + 1 if q is None else q
        found = _balanced_digits(delta_l, N, limit)
        if found is None:
            raise Unrepresentable(f"{delta_l} not representable in {limit} base-{N} stages")
        digits = found
    if q is not None:
        digits = digits + (0,) * (q - len(digits))
    return StagePlan(delta_l, N, digits, mode)


def plan_bounds(l_max: int, N: int) -> tuple:
    """``(ceil(log_N l_max), (N/2) log_N l_max)``: stage count and time bound in units of T."""
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    if N < 2:
        raise ValueError("base N must be >= 2")
    # integer stage count avoids floating-point trouble at exact powers
    stages, reach = 0, 1
    while reach < l_max:
        reach *= N
        stages += 1
    return stages, N / 2 * math.log(l_max, N)


# --------------------------------------------------------------------------
# simulated execution


@dataclass(frozen=True, eq=False)
class StageOutcome:
    step: int
    cycles: float
    start: float
    end: float


@dataclass(frozen=True, eq=False)
class PlanRun:
    """Sparse final state ``{l: amplitude}`` and per-stage outcomes."""

    amplitudes: dict
    outcomes: list

    @property
    def center_of_mass(self) -> float:
        l = np.array(sorted(self.amplitudes))
        P = np.abs(np.array([self.amplitudes[x] for x in l])) ** 2
        return float(P @ l / P.sum())

    def population(self, l: int) -> float:
        return float(abs(self.amplitudes.get(l, 0.0)) ** 2)


def _com(amps: dict) -> float:
    l = np.array(list(amps))
    P = np.abs(np.array(list(amps.values()))) ** 2
    return float(P @ l / P.sum())


def execute_plan(
    plan: StagePlan,
    p: RiceMeleParams = RiceMeleParams(),
    T: float = 21.0,
    l0: int = 0,
    pad: int = 2 * EDGE_MARGIN + 2,
    dt: float = 0.02,
    cutoff: float = 1e-14,
) -> PlanRun:
    """Pump a lower-band Wannier photon from ``l0`` through every stage of ``plan``.

    Stage ``n`` uses step ``M = N**n`` and ``alpha0 = alpha1 = pi/M``; its
    loop is offset by ``-l alpha`` with ``l`` the nominal photon position,
    which puts the photon at the start of a unit cell with flat bands.  A
    step-``M`` lattice splits into ``M`` independent chains (one per residue
    of ``l`` mod ``M``), so each stage evolves only the occupied residue
    chains, batched on a window ``pad`` hops wider than the photon's support
    and travel.  Residues with weight below ``cutoff`` are dropped.
    """
    active = [(n, c) for n, c in enumerate(plan.digits) if c != 0]
    M0 = plan.base ** active[0][0] if active else 1
    pm0 = RiceMeleParams.for_step(p.J0, p.J1, M0)
    cfg0 = LatticeConfig(l0 - 20 * M0, l0 + 21 * M0, "open", M0, single_sublattice=True)
    psi = wannier_state(cfg0, pm0, default_pump_loop(pm0, T).with_offset(-l0 * pm0.alpha0, -l0 * pm0.alpha1), origin=l0)
    amps = {int(l): a for l, a in zip(cfg0.sites, psi.amplitudes) if abs(a) ** 2 > cutoff}

    l_nom = l0
    outcomes = []
    for n, c in active:
        M = plan.base**n
        pm = RiceMeleParams.for_step(p.J0, p.J1, M)
        orient = "clockwise" if c > 0 else "counterclockwise"
        sched = default_pump_loop(pm, T, orient, n_cycles=abs(c) / 2)
        sched = sched.with_offset(-l_nom * pm.alpha0, -l_nom * pm.alpha1)
        occ = sorted(amps)
        lo = min(occ[0], occ[0] + c * M) - pad * M
        hi = max(occ[-1], occ[-1] + c * M) + pad * M
        lo -= lo % M
        n_m = (hi - lo) // M + 1
        cfg = LatticeConfig(lo, lo + (n_m - 1) * M, "open", M, single_sublattice=True)
        residues, states, scheds, weights = [], [], [], []
        for r in range(M):
            v = np.array([amps.get(lo + r + i * M, 0.0) for i in range(n_m)], complex)
            w = float(np.linalg.norm(v))
            if w * w <= cutoff:
                continue
            residues.append(r)
            weights.append(w)
            states.append(LatticeState(v / w, cfg))
            scheds.append(sched.with_offset(r * pm.alpha0, r * pm.alpha1))
        start = _com(amps)
        trajs = evolve_ensemble(
            states, scheds, pm, cfg, samples=[sched.t_start, sched.t_end], dt=dt, check_edges=False
        )
        # sparsely populated residues are off-resonant and may spread, so
        # the edge test weighs each chain by its share of the photon
        leak = max(w * w * tr.max_edge_population for w, tr in zip(weights, trajs))
        if leak > EDGE_POPULATION:
            raise EdgeLeak(f"stage with step {M}: edge population {leak:.3g}")
        amps = {}
        for r, w, tr in zip(residues, weights, trajs):
            for i, a in enumerate(tr.final.amplitudes):
                if abs(w * a) ** 2 > cutoff:
                    amps[lo + r + i * M] = w * a
        outcomes.append(StageOutcome(M, c / 2, start, _com(amps)))
        l_nom += c * M
    return PlanRun(dict(sorted(amps.items())), outcomes)
