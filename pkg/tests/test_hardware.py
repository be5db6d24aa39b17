import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oampump.dynamics import evolve, evolve_ensemble, wannier_state
from oampump.errors import Unstable
from oampump.hardware import (
    J1_PHYS,
    OMEGA_F,
    BeamSplitterSpec,
    CavityGeometry,
    DisorderSpec,
    beam_waist,
    coupling_from_bs,
    degeneracy_detuning,
    detuning_map,
    gouy_angle,
    half_trace,
    is_stable,
    misalignment_for_detuning,
    mode_frequency,
    onsite_detuning,
    reflectance_for_coupling,
    round_trip_abcd,
    sample_disorder,
    to_physical_rate,
    to_physical_time,
    tunneling_from_bs,
    usable_oam,
)
from oampump.model import LatticeConfig, RiceMeleParams, default_pump_loop

F = 0.1
lengths = st.floats(0.01, 0.5)


@given(lengths, lengths, st.floats(0.02, 0.3))
def test_round_trip_is_symplectic(X, Y, f):
    M = round_trip_abcd(CavityGeometry(X, Y, f))
    scale = max(1.0, np.abs(M).max() ** 2)
    assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-12 * scale)


def test_degenerate_round_trip_is_identity():
    for start in ("X", "Y"):
        np.testing.assert_allclose(round_trip_abcd(CavityGeometry.degenerate(F), start), np.eye(2), atol=1e-12)
    assert half_trace(CavityGeometry.degenerate(F)) == pytest.approx(1.0)


def test_half_trace_closed_form():
    for X, Y in [(0.11, 0.13), (0.09, 0.05), (0.2, 0.3)]:
        # half-trip trace 4(x-1)(y-1) - 2, squared for the round trip
        c = 2 * (X / F - 1) * (Y / F - 1) - 1
        assert half_trace(CavityGeometry(X, Y, F)) == pytest.approx(2 * c**2 - 1, abs=1e-12)


def test_stability_boundary_scan():
    d = np.linspace(-0.05, 0.05, 41)
    for dx in d:
        for dy in d:
            g = CavityGeometry(F + dx, F + dy, F)
            assert is_stable(g) == (dx * dy >= -1e-15 and dx * dy <= F**2 + 1e-15)


def test_mode_frequencies():
    g0 = CavityGeometry.degenerate(F, n=7)
    assert {mode_frequency(p, l, g0) for p in range(3) for l in range(-3, 4)} == {7 * OMEGA_F}
    g = CavityGeometry(F + 1e-4, F + 2e-4, F, n=3)
    for l in range(-4, 5):
        assert mode_frequency(1, l, g) == mode_frequency(1, -l, g)
    step = mode_frequency(0, 3, g) - mode_frequency(0, 2, g)
    assert step == pytest.approx(gouy_angle(g) / (2 * np.pi) * OMEGA_F, rel=1e-12)
    with pytest.raises(Unstable):
        mode_frequency(0, 1, CavityGeometry(F + 0.01, F - 0.01, F))
    with pytest.raises(ValueError):
        mode_frequency(-1, 0, g)


def test_gouy_small_angle():
    s = 1e-5
    g = CavityGeometry(F + s, F + s, F)
    assert gouy_angle(g) == pytest.approx(4 * s / F, rel=1e-6)


def test_beam_waist():
    g = CavityGeometry(F + 1e-5, F + 1e-5, F, wavelength=1e-6)
    assert beam_waist(g) == pytest.approx(np.sqrt(1e-6 * F / (2 * np.pi)))
    assert beam_waist(g) == pytest.approx(126e-6, rel=0.01)
    a = CavityGeometry(F + 1e-5, F + 4e-5, F)
    b = CavityGeometry(F + 4e-5, F + 1e-5, F)
    assert (beam_waist(a) / beam_waist(b)) ** 4 == pytest.approx(1 / 16, rel=1e-9)
    with pytest.raises(Unstable):
        beam_waist(CavityGeometry(F + 1e-5, F, F))
    with pytest.raises(Unstable):
        beam_waist(CavityGeometry(F + 1e-5, F - 1e-5, F))


def test_detuning():
    assert degeneracy_detuning(CavityGeometry.degenerate(F)) == 0.0
    np.testing.assert_allclose(onsite_detuning([-3, 0, 2], 0.5), [1.5, 0.0, 1.0])
    assert usable_oam(CavityGeometry.degenerate(F)) == np.inf
    with pytest.raises(Unstable):
        degeneracy_detuning(CavityGeometry(F + 0.01, F - 0.01, F))


def test_usable_oam_scale():
    # l_max * sqrt((X-F)(Y-F)) stays below about 1000 micrometres
    for s in (5e-6, 10e-6, 30e-6):
        g = CavityGeometry(F + s, F + s, F)
        prod = usable_oam(g) * s
        assert 700e-6 < prod <= 1000e-6


def test_calibration_and_map():
    s = misalignment_for_detuning(0.05 * J1_PHYS, F)
    assert s == pytest.approx(10e-6, rel=0.2)
    assert degeneracy_detuning(CavityGeometry(F + s, F + s, F)) == pytest.approx(0.05 * J1_PHYS, rel=1e-9)
    m = detuning_map([F + s, F - 1e-5], [F + s, F + 1e-5], F)
    assert m[0] == pytest.approx(0.05 / 4, rel=1e-6)
    assert np.isnan(m[1])
    assert misalignment_for_detuning(0.0) == 0.0


def test_beam_splitter_rates():
    assert tunneling_from_bs(BeamSplitterSpec(0.0, 1.0)) == 0.0
    J = tunneling_from_bs(BeamSplitterSpec.lossless(0.2))
    assert J / (2 * np.pi) == pytest.approx(1e9 * 0.2 / (2 * np.pi * 1.8), rel=1e-12)
    assert J / (2 * np.pi * 1e6) == pytest.approx(17.68, abs=0.01)
    r = 0.01
    assert np.sqrt(coupling_from_bs(r)) == pytest.approx(r * np.sqrt(OMEGA_F / (2 * np.pi)))
    assert reflectance_for_coupling(coupling_from_bs(r)) == pytest.approx(r**2)
    with pytest.raises(ValueError):
        BeamSplitterSpec(0.9, 0.9)
    with pytest.raises(ValueError):
        BeamSplitterSpec.lossless(1.5)


def test_unit_conversion():
    assert to_physical_time(21.0) == pytest.approx(21.0 / J1_PHYS)
    assert to_physical_rate(5.0) == pytest.approx(5.0 * J1_PHYS)


class TestDisorder:
    cfg = LatticeConfig.centered(0)

    def test_zero_sigma(self):
        assert sample_disorder(DisorderSpec("phase", 0.0), 3) == (0.0, 0.0)
        np.testing.assert_array_equal(sample_disorder(DisorderSpec("onsite", 0.0, 0.0), 3, self.cfg), 0.0)

    @given(st.integers(0, 2**32), st.integers(0, 1000))
    def test_deterministic(self, seed, trial):
        spec = DisorderSpec("onsite", sigma_detune=0.1, seed=seed)
        np.testing.assert_array_equal(sample_disorder(spec, trial, self.cfg), sample_disorder(spec, trial, self.cfg))
        ph = DisorderSpec("phase", seed=seed)
        assert sample_disorder(ph, trial) == sample_disorder(ph, trial)
        assert sample_disorder(ph, trial) != sample_disorder(ph, trial + 1)

    def test_onsite_std_grows_with_l(self):
        spec = DisorderSpec("onsite", sigma_detune=0.05, seed=5)
        draws = np.stack([sample_disorder(spec, i, self.cfg) for i in range(4000)])
        std = draws.std(axis=0)
        l = np.abs(self.cfg.sites)
        np.testing.assert_allclose(std[l > 0], 0.05 * l[l > 0], rtol=0.06)
        assert np.all(draws[:, l == 0] == 0)

    def test_global_mode_is_one_draw(self):
        spec = DisorderSpec("onsite", sigma_detune=0.05, seed=5, onsite_mode="global")
        d = sample_disorder(spec, 0, self.cfg)
        l = np.abs(self.cfg.sites)
        ratio = d[l > 0] / l[l > 0]
        np.testing.assert_allclose(ratio, ratio[0])

    def test_validation(self):
        with pytest.raises(ValueError):
            DisorderSpec("bogus")
        with pytest.raises(ValueError):
            DisorderSpec(trials=0)
        with pytest.raises(ValueError):
            DisorderSpec(sigma_phase=-1)
        with pytest.raises(ValueError):
            sample_disorder(DisorderSpec("onsite"), 0)


def test_global_shift_leaves_distribution_unchanged():
    p = RiceMeleParams(5.0, 1.0)
    cfg = LatticeConfig.centered(0)
    sched = default_pump_loop(p, 21.0)
    psi = wannier_state(cfg, p, sched)
    a = evolve(psi, sched, p, samples=[0, 10.5, 21.0])
    b = evolve(psi, sched, p, samples=[0, 10.5, 21.0], onsite_shift=np.full(cfg.n_sites, 3.7))
    np.testing.assert_allclose(a.populations, b.populations, atol=1e-9)


def test_step_ten_onsite_disorder():
    # SLM step 10: photon moves 20 OAM per cycle through sites l0 + 10 m
    p = RiceMeleParams.for_step(5.0, 1.0, 10)
    cfg = LatticeConfig.centered(0, 42, step=10, single_sublattice=True)
    sched = default_pump_loop(p, 21.0)
    psi = wannier_state(cfg, p, sched)
    spec = DisorderSpec("onsite", sigma_detune=0.05, seed=3, trials=10)
    shifts = np.stack([sample_disorder(spec, i, cfg) for i in range(spec.trials)])
    trajs = evolve_ensemble(psi, sched, p, samples=[0.0, 21.0], onsite_shifts=shifts)
    disp = np.array([t.center_of_mass[-1] - t.center_of_mass[0] for t in trajs])
    assert disp.mean() == pytest.approx(20.0, abs=1.5)
