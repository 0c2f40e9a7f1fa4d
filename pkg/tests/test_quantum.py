import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydbeam import kernels
from rydbeam.errors import SingularSystem, StepTooSmall
from rydbeam.quantum import (TWO_PI, DopplerSpec, DriveParams, LevelScheme, absorption,
                             build_hamiltonian, doppler_averaged_coherence,
                             lindblad_residual, liouvillian, sensitivity, steady_state,
                             susceptibility, velocity_grid)

from conftest import MHZ, random_drive


def rk4_long_time_limit(scheme, drive):
    """Fourth-order Runge-Kutta propagation of the master equation from |1><1|.

    The RK4 step for a linear ODE is the matrix polynomial P(hL); stepping N
    times is applied as P**N. Runs to max(50/gamma3, 40/slowest decay).
    """
    L = liouvillian(scheme, drive)
    lam = np.linalg.eigvals(L)
    h = 0.5 / np.max(np.abs(lam))
    hL = h * L
    P = np.eye(16) + hL + hL @ hL / 2 + hL @ hL @ hL / 6 + hL @ hL @ hL @ hL / 24
    decays = -lam.real[np.abs(lam) > 1e-6 * np.max(np.abs(lam))]
    t_end = max(50.0 / scheme.gamma3, 40.0 / np.min(decays[decays > 0]))
    steps = int(np.ceil(t_end / h))
    rho0 = np.zeros(16, dtype=complex)
    rho0[0] = 1.0
    return (np.linalg.matrix_power(P, steps) @ rho0).reshape(4, 4)


class TestHamiltonian:
    def test_zero_drive_is_zero(self):
        H = build_hamiltonian(DriveParams(omega_p=0.0, omega_c=0.0))
        assert np.all(H == 0)

    def test_probe_only(self):
        H = build_hamiltonian(DriveParams(omega_p=TWO_PI * 1e6, omega_c=0.0))
        nz = np.argwhere(H != 0)
        assert sorted(map(tuple, nz)) == [(0, 1), (1, 0)]
        assert H[0, 1] == pytest.approx(np.pi * 1e6)

    def test_lo_only_entry_is_half_rabi(self):
        H = build_hamiltonian(DriveParams(omega_rf=TWO_PI * 7e6))
        assert H[2, 3] == pytest.approx(TWO_PI * 7e6 / 2)
        assert H[2, 3].imag == 0

    def test_hermitian_for_complex_rf(self):
        H = build_hamiltonian(DriveParams(omega_rf=3e7 * np.exp(0.4j), delta_p=1e6))
        assert np.allclose(H, H.conj().T)


class TestSteadyState:
    def test_no_driving_ground_state(self, scheme):
        dm = steady_state(scheme, DriveParams(omega_p=0.0, omega_c=0.0))
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        assert np.allclose(dm.rho, expected, atol=1e-14)

    def test_generic_matches_time_integration(self, scheme):
        drive = DriveParams(omega_p=5 * MHZ, omega_c=1 * MHZ, omega_rf=10 * MHZ)
        dm = steady_state(scheme, drive)
        assert np.max(np.abs(dm.rho - rk4_long_time_limit(scheme, drive))) <= 1e-8

    def test_invariants_and_residual(self, scheme, generic_drive):
        dm = steady_state(scheme, generic_drive)
        assert dm.hermiticity_error() <= 1e-12
        assert dm.trace_error() <= 1e-12
        assert dm.min_eigenvalue() >= -1e-10
        tol = 1e-9 * max(scheme.gamma2, generic_drive.omega_p)
        assert lindblad_residual(scheme, generic_drive, dm) <= tol

    def test_dark_subspace_reported(self):
        scheme = LevelScheme(gamma3=1e-30, gamma4=1e-30)
        with pytest.raises(SingularSystem):
            steady_state(scheme, DriveParams(omega_c=0.0, omega_rf=0.0))

    def test_rf_phase_does_not_change_probe_coherence(self, scheme):
        a = steady_state(scheme, DriveParams(omega_rf=8 * MHZ)).rho21
        b = steady_state(scheme, DriveParams(omega_rf=8 * MHZ * np.exp(1.3j))).rho21
        assert a == pytest.approx(b, abs=1e-14)


class TestDoppler:
    def test_weights_normalized(self, scheme):
        for n in (8, 13, 64, 128, 257):
            _, w = velocity_grid(scheme, DopplerSpec(node_count=n))
            assert abs(w.sum() - 1) <= 1e-12

    def test_cold_limit_equals_stationary_atom(self, generic_drive, backend):
        cold = LevelScheme(t_env=1e-6 ** 2 * LevelScheme().mass / (2 * 1.380649e-23))
        assert cold.u == pytest.approx(1e-6)
        avg = doppler_averaged_coherence(cold, generic_drive, DopplerSpec())
        ref = steady_state(cold, generic_drive).rho21
        assert abs(avg - ref) <= 1e-9

    def test_node_refinement(self, scheme, generic_drive, backend):
        a = doppler_averaged_coherence(scheme, generic_drive, DopplerSpec(node_count=64))
        b = doppler_averaged_coherence(scheme, generic_drive, DopplerSpec(node_count=128))
        assert abs(a - b) / abs(b) <= 1e-6

    def test_matches_dense_brute_force(self, scheme, generic_drive):
        # trapezoid on a velocity grid far finer than the narrowest feature
        v = np.linspace(-6 * scheme.u, 6 * scheme.u, 120001)
        w = np.exp(-(v / scheme.u) ** 2)
        w /= w.sum()
        d = generic_drive
        rho, status = kernels.rho21_doppler(
            d.omega_p, d.omega_c, d.omega_rf, d.delta_p, d.delta_c, d.delta_l,
            scheme.gammas, scheme.k_p, scheme.k_c, scheme.u, v, w, 0.0)
        assert status == 0
        avg = doppler_averaged_coherence(scheme, d, DopplerSpec())
        assert abs(avg - rho) / abs(rho) <= 1e-6

    def test_reversed_grid_invariance(self, scheme, generic_drive, backend):
        v, w = velocity_grid(scheme, DopplerSpec())
        d = generic_drive
        args = (d.omega_p, d.omega_c, d.omega_rf, d.delta_p, d.delta_c, d.delta_l,
                scheme.gammas, scheme.k_p, scheme.k_c, scheme.u)
        fwd, _ = kernels.rho21_doppler(*args, v, w, scheme.u)
        rev, _ = kernels.rho21_doppler(*args, v[::-1].copy(), w[::-1].copy(), scheme.u)
        assert abs(fwd - rev) <= 1e-14 * abs(fwd)

    def test_backends_agree(self, scheme):
        if len(kernels.available_backends()) < 2:
            pytest.skip("compiled kernel not built")
        rng = np.random.default_rng(7)
        drives = [random_drive(rng) for _ in range(40)]
        out = {}
        for name in kernels.available_backends():
            kernels.set_backend(name)
            out[name] = np.array([doppler_averaged_coherence(scheme, d, DopplerSpec())
                                  for d in drives])
        kernels.set_backend("cython")
        assert np.max(np.abs(out["cython"] - out["python"]) / np.abs(out["python"])) <= 1e-9

    def test_singular_annotated(self):
        scheme = LevelScheme(gamma3=1e-30, gamma4=1e-30)
        with pytest.raises(SingularSystem):
            doppler_averaged_coherence(scheme, DriveParams(omega_c=0.0), DopplerSpec())


class TestSusceptibility:
    def test_zero_coherence(self, scheme, generic_drive):
        assert susceptibility(scheme, generic_drive, 0j) == 0

    def test_linear_in_density(self, generic_drive):
        a = susceptibility(LevelScheme(n0=1e16), generic_drive, 0.01 - 0.02j)
        b = susceptibility(LevelScheme(n0=2e16), generic_drive, 0.01 - 0.02j)
        assert b == pytest.approx(2 * a)

    def test_eit_dip_requires_coupling(self, scheme, spec):
        dc = np.linspace(-3, 3, 61) * MHZ
        with_c = absorption(scheme, DriveParams(omega_c=1 * MHZ), spec, delta_c=dc)
        without = absorption(scheme, DriveParams(omega_c=0.0), spec, delta_c=dc)
        centre = 30
        assert with_c[centre] < 0.95 * with_c[0]
        assert np.ptp(without) <= 1e-6 * np.max(without)

    @settings(max_examples=60, deadline=None)
    @given(dp=st.floats(-50, 50), dc=st.floats(-50, 50), wrf=st.floats(0, 30),
           wc=st.floats(0, 30), wp=st.floats(0.1, 30))
    def test_passive_medium(self, dp, dc, wrf, wc, wp):
        drive = DriveParams(omega_p=wp * MHZ, omega_c=wc * MHZ, delta_p=dp * MHZ,
                            delta_c=dc * MHZ, omega_rf=wrf * MHZ)
        rho = doppler_averaged_coherence(LevelScheme(), drive, DopplerSpec())
        assert rho.imag <= 1e-9
        assert absorption(LevelScheme(), drive, DopplerSpec()) >= -1e-9 * 1e-4


class TestSensitivity:
    def test_is_central_difference(self, scheme, generic_drive, spec):
        h = 1e-3 * abs(generic_drive.omega_rf)
        w = abs(generic_drive.omega_rf)
        hi = absorption(scheme, generic_drive, spec, omega_rf=w + h)
        lo = absorption(scheme, generic_drive, spec, omega_rf=w - h)
        assert sensitivity(scheme, generic_drive, spec) == (hi - lo) / (2 * h)

    def test_step_refinement(self, scheme, generic_drive, spec):
        a = sensitivity(scheme, generic_drive, spec, step=1e-2)
        b = sensitivity(scheme, generic_drive, spec, step=5e-3)
        assert abs(a - b) <= 0.01 * abs(b)

    def test_richardson_consistent(self, scheme, generic_drive, spec):
        a = sensitivity(scheme, generic_drive, spec, step=1e-2, richardson=True)
        b = sensitivity(scheme, generic_drive, spec, step=1e-3)
        assert abs(a - b) <= 1e-4 * abs(b)

    def test_first_order_expansion(self, scheme, generic_drive, spec):
        w = abs(generic_drive.omega_rf)
        ws = 0.01 * w
        full = (absorption(scheme, generic_drive, spec, omega_rf=w + ws)
                - absorption(scheme, generic_drive, spec, omega_rf=w))
        lin = sensitivity(scheme, generic_drive, spec) * ws
        assert abs(full - lin) <= 0.05 * abs(lin)

    def test_step_too_small(self, scheme, generic_drive, spec):
        with pytest.raises(StepTooSmall):
            sensitivity(scheme, generic_drive, spec, step=1e-9)

    def test_step_out_of_range(self, scheme, generic_drive, spec):
        with pytest.raises(ValueError):
            sensitivity(scheme, generic_drive, spec, step=0.5)
