import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oampump.dynamics import (
    bloch_weights,
    center_of_mass,
    check_support,
    evolve,
    evolve_ensemble,
    half_cycle_times,
    integrated_current,
    mean_current,
    pump_report,
    purity,
    wannier_state,
)
from oampump.errors import EdgeLeak, StepFailure
from oampump.model import (
    LatticeConfig,
    LatticeState,
    RiceMeleParams,
    default_pump_loop,
    hold_schedule,
    real_space_hamiltonian,
)
from oampump.topology import group_velocity

PI = np.pi
P = RiceMeleParams(5.0, 1.0)
CFG = LatticeConfig.centered(0)


@pytest.fixture(scope="module")
def two_cycles():
    sched = default_pump_loop(P, 21.0, n_cycles=2)
    psi = wannier_state(CFG, P, sched)
    samples = np.union1d(np.linspace(0, 42.0, 85), half_cycle_times(sched))
    return sched, psi, evolve(psi, sched, P, samples=samples)


class TestWannier:
    def test_cell_form(self):
        psi = wannier_state(CFG, P, default_pump_loop(P))
        w, v = np.linalg.eigh(real_space_hamiltonian(LatticeConfig(0, 1), 0.0, 0.0, P))
        lower = v[:, 0] * np.sign(v[0, 0])
        theta = 0.5 * np.arctan(P.J1 / P.J0)
        assert psi.population(0) == pytest.approx(np.cos(theta) ** 2, abs=1e-12)
        assert psi.population(0) == pytest.approx(0.9903, abs=1e-4)
        a = psi.amplitudes[[CFG.index(0), CFG.index(1)]]
        a = a * np.exp(-1j * np.angle(a[0]))
        np.testing.assert_allclose(a, lower, atol=1e-12)
        assert abs(np.tan(theta)) == pytest.approx(abs(a[1] / a[0]), rel=1e-12)

    def test_weak_coupling_limit(self):
        p = RiceMeleParams(1e4, 1.0)
        psi = wannier_state(CFG, p, default_pump_loop(p), cell=3)
        assert psi.population(6) > 1 - 1e-8

    def test_cell_out_of_range(self):
        with pytest.raises(IndexError):
            wannier_state(CFG, P, default_pump_loop(P), cell=50)

    def test_is_normalised_for_any_cell(self):
        for cell in (-5, 0, 7):
            psi = wannier_state(CFG, P, default_pump_loop(P), cell=cell)
            assert psi.norm == pytest.approx(1.0, abs=1e-12)
            assert center_of_mass(psi) == pytest.approx(2 * cell, abs=0.05)


class TestObservables:
    def test_center_of_mass(self):
        cfg = LatticeConfig(-4, 5)
        assert center_of_mass(LatticeState.localized(cfg, 0)) == 0.0
        a = np.zeros(cfg.n_sites, complex)
        a[cfg.index(0)] = a[cfg.index(2)] = np.sqrt(0.5)
        assert center_of_mass(LatticeState(a, cfg)) == pytest.approx(1.0)
        assert center_of_mass(LatticeState(a, cfg), "cell") == pytest.approx(0.5)
        assert purity(LatticeState(a, cfg), 2) == pytest.approx(0.5)


class TestEvolve:
    def test_stationary_state_only_gains_phase(self):
        psi = wannier_state(CFG, P, default_pump_loop(P))
        hold = hold_schedule(0.0, 0.0, 7.0)
        traj = evolve(psi, hold, P, samples=np.linspace(0, 7.0, 8))
        E = -np.sqrt(4 * P.J0**2 + 4 * P.J1**2)
        for t, a in zip(traj.times, traj.amplitudes):
            np.testing.assert_allclose(a, psi.amplitudes * np.exp(-1j * E * t), atol=1e-9)

    def test_step_like_transport(self, two_cycles):
        sched, psi, traj = two_cycles
        for m in range(1, 5):
            r = pump_report(traj, 0, m, sched)
            assert r.displacement == pytest.approx(m, abs=0.05 * max(1, m // 2))
            assert 0.0 <= r.purity <= 1.0

    def test_norm_conserved(self, two_cycles):
        _, _, traj = two_cycles
        assert np.max(np.abs(traj.norms - 1.0)) < 1e-9

    def test_follows_lower_band(self, two_cycles):
        sched, _, traj = two_cycles
        for i in range(0, len(traj.times), 4):
            H = real_space_hamiltonian(CFG, *map(float, sched.beta(traj.times[i])), P)
            w, v = np.linalg.eigh(H)
            low = v[:, w < 0]
            assert np.sum(np.abs(low.conj().T @ traj.amplitudes[i]) ** 2) > 0.99

    def test_upper_band_moves_backwards(self):
        sched = default_pump_loop(P, 21.0)
        psi = wannier_state(CFG, P, sched, "upper")
        traj = evolve(psi, sched, P, samples=half_cycle_times(sched))
        assert pump_report(traj, 0, 2, sched, -1).displacement == pytest.approx(-2.0, abs=0.05)

    def test_adiabatic_limit(self):
        devs = []
        for T in (5.0, 21.0, 80.0):
            sched = default_pump_loop(P, T)
            psi = wannier_state(CFG, P, sched)
            traj = evolve(psi, sched, P, samples=[0.0, T])
            devs.append(abs(traj.center_of_mass[-1] - traj.center_of_mass[0] - 2.0))
        assert devs[0] > devs[1] > devs[2]
        assert devs[1] < 0.05

    @settings(max_examples=3)
    @given(st.complex_numbers(max_magnitude=2, min_magnitude=0.1), st.complex_numbers(max_magnitude=2, min_magnitude=0.1))
    def test_linearity(self, a, b):
        sched = default_pump_loop(P, 21.0)
        s1 = wannier_state(CFG, P, sched, cell=0)
        s2 = wannier_state(CFG, P, sched, cell=2)
        mix = a * s1.amplitudes + b * s2.amplitudes
        mix = LatticeState(mix / np.linalg.norm(mix), CFG)
        span = dict(t_span=(0.0, 6.0), samples=[6.0], tol=1e-10)
        u1 = evolve(s1, sched, P, **span).amplitudes[-1]
        u2 = evolve(s2, sched, P, **span).amplitudes[-1]
        um = evolve(mix, sched, P, **span).amplitudes[-1]
        norm = np.linalg.norm(a * s1.amplitudes + b * s2.amplitudes)
        np.testing.assert_allclose(um * norm, a * u1 + b * u2, atol=1e-7)

    def test_ensemble_matches_single_runs(self):
        sched = default_pump_loop(P, 21.0)
        scheds = [sched, sched.with_offset(0.1, -0.05)]
        psis = [wannier_state(CFG, P, s) for s in scheds]
        shifts = np.stack([np.zeros(CFG.n_sites), 0.02 * np.abs(CFG.sites)])
        batch = evolve_ensemble(psis, scheds, P, samples=[0.0, 10.5, 21.0], onsite_shifts=shifts)
        for i in range(2):
            one = evolve(psis[i], scheds[i], P, samples=[0.0, 10.5, 21.0], onsite_shift=shifts[i])
            np.testing.assert_allclose(batch[i].amplitudes, one.amplitudes, atol=1e-8)

    def test_edge_leak(self):
        cfg = LatticeConfig.centered(0, 20)
        sched = default_pump_loop(P, 21.0, n_cycles=3)
        psi = wannier_state(cfg, P, sched)
        with pytest.raises(EdgeLeak):
            evolve(psi, sched, P, samples=[0.0, sched.t_end])

    def test_support_check(self):
        cfg = LatticeConfig(0, 19)
        with pytest.raises(EdgeLeak):
            check_support(LatticeState.localized(cfg, 2))

    def test_step_failure(self):
        sched = default_pump_loop(P, 21.0)
        psi = wannier_state(CFG, P, sched)
        with pytest.raises(StepFailure):
            evolve(psi, sched, P, samples=[0.0, 21.0], max_halvings=0)

    def test_rejects_unnormalised_state(self):
        with pytest.raises(ValueError):
            evolve(LatticeState(np.full(CFG.n_sites, 0.5), CFG), default_pump_loop(P), P)


class TestCurrent:
    def test_group_velocity_averages_out(self):
        k = 2 * PI * np.arange(64) / 64
        for t in (0.0, 3.0, 10.6, 17.0):
            assert abs(group_velocity(k, t, default_pump_loop(P), P).mean()) < 1e-9

    def test_uniform_filling_gives_chern_number(self):
        sched = default_pump_loop(P, 21.0)
        w = np.full(48, 1 / 48)
        assert integrated_current(w, sched, P) == pytest.approx(1.0, abs=1e-3)
        assert integrated_current(w, sched, P, band="upper") == pytest.approx(-1.0, abs=1e-3)

    def test_current_integral_matches_evolution(self, two_cycles):
        sched, psi, traj = two_cycles
        k, w = bloch_weights(psi, sched, P)
        cells = integrated_current(w, sched, P, 0.0, 21.0, k=k)
        moved = center_of_mass(traj.at(21.0), "cell") - center_of_mass(psi, "cell")
        assert cells == pytest.approx(moved, abs=0.02)

    def test_mean_current_scalar_and_vector(self):
        sched = default_pump_loop(P, 21.0)
        w = np.full(32, 1 / 32)
        v = mean_current(w, sched, P, np.array([2.0, 5.0]))
        assert v.shape == (2,)
        assert mean_current(w, sched, P, 2.0) == pytest.approx(v[0])
