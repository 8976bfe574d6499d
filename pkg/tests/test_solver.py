import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import G_T, M_T
from reference import storage_reference
from lineshape_memory.lineshape import FrequencyGrid, Lineshape
from lineshape_memory.solver import (
    ControlParams,
    DegenerateInputError,
    InstabilityError,
    MemoryParams,
    SimGrid,
    bandwidth_from_pulse_duration,
    control_field,
    coupling_weights,
    efficiency,
    gaussian_input,
    pulse_duration_from_bandwidth,
    run_memory,
    simulate_retrieval,
    simulate_storage,
)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(d=-1, tau_gamma=1), dict(d=1, tau_gamma=0), dict(d=1, tau_gamma=1, gamma=-1),
                                    dict(d=1, tau_gamma=1, depth="volume")])
    def test_memory_invalid(self, kw):
        with pytest.raises(ValueError):
            MemoryParams(**kw)

    @pytest.mark.parametrize("args", [(-1.0, 0.0, 1.0), (1.0, 0.0, 0.0)])
    def test_control_invalid(self, args):
        with pytest.raises(ValueError):
            ControlParams(*args)

    def test_array_roundtrip(self):
        assert ControlParams.from_array(G_T.as_array()) == G_T

    def test_mirrored(self):
        assert G_T.mirrored() == ControlParams(G_T.theta, 0.25, 1.25)


class TestControlField:
    def test_zero_area(self):
        assert np.all(control_field(ControlParams(0.0, 0.3, 1.0), np.linspace(-5, 5, 11)) == 0)

    @pytest.mark.parametrize("tg", [0.5, 1.0, 3.0])
    def test_area(self, tg):
        c = ControlParams(2.75 * math.pi, -0.25, 1.25)
        s = c.sigma(tg)
        t = np.linspace(c.delay * tg - 8 * s, c.delay * tg + 8 * s, 20001)
        area = np.trapezoid(control_field(c, t, tg), t)
        assert area == pytest.approx(c.theta, abs=1e-6)

    def test_peak_and_center(self):
        assert control_field(G_T, -0.25) == pytest.approx(G_T.peak_rabi(1.0))
        assert G_T.peak_rabi(1.0) == pytest.approx(G_T.theta / (2 * math.sqrt(math.pi) * G_T.sigma(1.0)))

    def test_bandwidth_roundtrip(self):
        assert pulse_duration_from_bandwidth(bandwidth_from_pulse_duration(1.7)) == pytest.approx(1.7)
        assert pulse_duration_from_bandwidth(1.0) == pytest.approx(4 * math.log(2))


class TestGaussianInput:
    def test_shape(self):
        t = np.array([0.0, -0.5, 0.5])
        a = gaussian_input(None, 1.0, t)
        assert a[0] == 1.0
        np.testing.assert_allclose(np.abs(a[1:]) ** 2, 0.5)


class TestEfficiency:
    def test_basic(self):
        a = np.exp(-np.linspace(-3, 3, 61) ** 2)
        assert efficiency(a, a) == pytest.approx(1.0)
        assert efficiency(a, 0 * a) == 0.0
        assert efficiency(a, a / math.sqrt(2)) == pytest.approx(0.5)

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            efficiency(np.zeros(5), np.ones(5))


class TestGrid:
    def test_auto_rules(self):
        g = SimGrid.auto(M_T, G_T, Lineshape.rectangular())
        assert g.check(M_T, G_T, 1.0) == []
        assert g.dt * 0.5 * G_T.peak_rabi(1.0) <= 0.2
        assert g.t_min == -6.0 and g.t_out_max - g.t_out_min == pytest.approx(70.0)

    def test_long_pulses_stop_before_revival(self):
        mem = MemoryParams(5.0, 4.0)
        g = SimGrid.auto(mem, G_T, Lineshape.rectangular())
        assert g.elapsed <= 0.9 * g.revival_time + 1e-9
        assert any("revival" in p for p in SimGrid(50, 0.1, -24, 16, -10, 270, g.freq).check(mem, G_T, 1.0))

    def test_irregular_grid_never_revives(self):
        g = SimGrid(50, 0.1, -6, 4, -5, 65, FrequencyGrid.from_nodes([-1.0, 0.0, 0.5, 2.0]))
        assert g.revival_time == math.inf

    def test_empty_window(self):
        with pytest.raises(ValueError):
            SimGrid(50, 0.1, 1.0, 1.0, 0, 1)

    def test_coarse_step_rejected(self):
        g = SimGrid(50, 0.5, -6, 4, -5, 65)
        with pytest.raises(InstabilityError):
            simulate_storage(M_T, ControlParams(12 * math.pi, 0, 0.1), Lineshape.rectangular(), g)


class TestCouplings:
    def test_area_convention(self):
        d, w = coupling_weights(Lineshape.gaussian(), FrequencyGrid.uniform())
        assert np.sum(w**2) == pytest.approx(1.0)

    def test_peak_convention(self):
        grid = FrequencyGrid.uniform()
        _, w = coupling_weights(Lineshape.lorentzian(), grid, "peak")
        assert np.max(w**2) == pytest.approx(0.5 * 0.04)
        _, wr = coupling_weights(Lineshape.rectangular(), grid, "peak")
        _, wa = coupling_weights(Lineshape.rectangular(), grid, "area")
        np.testing.assert_allclose(wr, wa)

    def test_inert_classes_dropped(self):
        d, _ = coupling_weights(Lineshape.rectangular(), FrequencyGrid.uniform())
        assert d.size == 51 and d.min() == -1.0 and d.max() == 1.0


def _small_grid(tg=1.0):
    return SimGrid.auto(MemoryParams(5.0, tg), G_T, Lineshape.rectangular(), output_span=30.0)


class TestStorage:
    def test_no_medium(self):
        g = _small_grid()
        st_ = simulate_storage(MemoryParams(0.0, 1.0), G_T, Lineshape.rectangular(), g)
        np.testing.assert_array_equal(st_.a, gaussian_input(g, 1.0))
        assert st_.excitation() == 0.0

    def test_two_level_absorption_conserves(self):
        # free polarization rings for the whole window; the balance error is
        # second order in dt (4e-4 at the default step, 9e-5 at half of it)
        g = _small_grid()
        g = SimGrid(g.nz, g.dt / 2, g.t_min, g.t_store, g.t_out_min, g.t_out_max, g.freq)
        st_ = simulate_storage(M_T, ControlParams(0.0, 0.0, 1.0), Lineshape.rectangular(), g)
        assert np.all(st_.b == 0)
        e_in = np.sum(np.abs(gaussian_input(g, 1.0)) ** 2) * g.dt
        balance = np.sum(np.abs(st_.a) ** 2) * g.dt + st_.excitation()
        assert balance / e_in == pytest.approx(1.0, abs=1e-4)

    def test_matches_reference_integrator(self):
        ls = Lineshape.rectangular()
        deltas, weights = coupling_weights(ls, FrequencyGrid.uniform())
        leak, spin, _ = storage_reference(5.0, 1.0, G_T.theta, G_T.delay, G_T.duration, deltas, weights,
                                          nz=100, dt=0.01)
        run = run_memory(M_T, G_T, ls)
        assert run.leakage == pytest.approx(leak, abs=1e-3)
        assert run.stored_norm == pytest.approx(spin, abs=1e-3)

    def test_frozen_efficiency(self):
        # regression value for the reference point on the default grid
        assert run_memory(M_T, G_T, Lineshape.rectangular()).efficiency == pytest.approx(0.81941, abs=2e-4)

    def test_input_length_checked(self):
        g = _small_grid()
        with pytest.raises(ValueError):
            simulate_storage(M_T, G_T, Lineshape.rectangular(), g, np.ones(3))

    def test_zero_input_rejected(self):
        g = _small_grid()
        with pytest.raises(DegenerateInputError):
            run_memory(M_T, G_T, Lineshape.rectangular(), g, np.zeros(g.storage_times.size))

    @given(st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False))
    @settings(max_examples=5, deadline=None)
    def test_linearity(self, c):
        g = _small_grid()
        a = gaussian_input(g, 1.0)
        base = run_memory(M_T, G_T, Lineshape.rectangular(), g, a)
        scaled = run_memory(M_T, G_T, Lineshape.rectangular(), g, c * a)
        np.testing.assert_allclose(scaled.retrieval.a, c * base.retrieval.a, rtol=1e-9, atol=1e-12)


class TestRetrieval:
    def test_empty_state_gives_dark_output(self):
        g = _small_grid()
        st_ = simulate_storage(MemoryParams(0.0, 1.0), G_T, Lineshape.rectangular(), g)
        out = simulate_retrieval(st_, M_T, G_T, g)
        assert np.all(out.a == 0)

    def test_double_flip_is_identity(self):
        g = _small_grid()
        st_ = simulate_storage(M_T, G_T, Lineshape.rectangular(), g)
        twice = st_.flipped().flipped()
        np.testing.assert_array_equal(twice.p, st_.p)
        np.testing.assert_array_equal(twice.b, st_.b)

    def test_state_untouched(self):
        g = _small_grid()
        st_ = simulate_storage(M_T, G_T, Lineshape.rectangular(), g)
        b = st_.b.copy()
        simulate_retrieval(st_, M_T, G_T, g)
        np.testing.assert_array_equal(st_.b, b)

    def test_no_control_retrieves_nothing(self):
        # with the spin-wave handoff a control-free run has nothing to read out
        run = run_memory(MemoryParams(5.0, 4.0), ControlParams(1e-9, 0.0, 1.0), Lineshape.rectangular())
        assert run.efficiency < 1e-6

    @pytest.mark.parametrize("kind", ["rectangular", "gaussian", "lorentzian"])
    @pytest.mark.parametrize("theta", [math.pi, 2.75 * math.pi, 6 * math.pi])
    def test_passive(self, kind, theta):
        run = run_memory(M_T, ControlParams(theta, -0.25, 1.25), Lineshape.named(kind))
        assert run.efficiency + run.leakage <= 1.0 + 1e-4
