import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_state
from gaugephase.core import KET_PLUS, SIGMA_Z, Operator, StateVector
from gaugephase.lindblad import DephasingSpinModel, LindbladModel
from gaugephase.sse import (
    LINEAR, NONLINEAR, DegenerateStateError, SdeConfig, UnravellingGauge, girsanov_shift, measure_weight,
    nonlinear_drift_diffusion, pathwise_deviations, pathwise_equivalence_check, simulate_batch,
    simulate_trajectory, step_linear, step_nonlinear, wiener_increments,
)

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def reference_coefficients(H, Ls, lam, phases, psi):
    """Drift and diffusions written out term by term."""
    drift = -1j * H @ psi
    diff = []
    for L, ph in zip(Ls, phases):
        Lt = np.exp(1j * ph) * L
        r = 0.5 * np.vdot(psi, (Lt.conj().T + Lt) @ psi).real
        drift = drift - 0.5 * lam**2 * (Lt.conj().T @ Lt @ psi - 2 * r * Lt @ psi + r * r * psi)
        diff.append(lam * (Lt @ psi - r * psi))
    return drift, diff


@given(st.integers(0, 2**32 - 1), st.lists(angles, min_size=2, max_size=2), st.floats(0, 2))
def test_coefficients_match_reference(seed, phases, lam):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    Ls = [rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(2)]
    model = LindbladModel(Operator(A + A.conj().T), tuple(map(Operator, Ls)), lam)
    psi = random_state(rng, 3)
    drift, diff = nonlinear_drift_diffusion(model, UnravellingGauge(phases), StateVector(psi))
    ref_drift, ref_diff = reference_coefficients(A + A.conj().T, Ls, lam, phases, psi)
    np.testing.assert_allclose(drift, ref_drift, atol=1e-12)
    for a, b in zip(diff, ref_diff):
        np.testing.assert_allclose(a, b, atol=1e-12)


@given(angles)
def test_eigenstate_diffusion_is_pure_phase(phi):
    lam = 0.5
    model = DephasingSpinModel(lam=lam).lindblad()
    _, (d,) = nonlinear_drift_diffusion(model, UnravellingGauge([phi]), KET_PLUS)
    np.testing.assert_allclose(d, [1j * lam * np.sin(phi), 0], atol=1e-15)


def test_schroedinger_limit():
    model = DephasingSpinModel(mu_b=1.3, lam=0.0).lindblad()
    psi = StateVector(random_state(np.random.default_rng(1)))
    drift, (d,) = nonlinear_drift_diffusion(model, UnravellingGauge([0.3]), psi)
    np.testing.assert_allclose(drift, -1j * model.hamiltonian.entries @ psi.amplitudes, atol=1e-15)
    np.testing.assert_allclose(d, 0, atol=1e-15)


def test_equator_state_at_zero_gauge():
    lam, mu_b = 0.7, 1.0
    model = DephasingSpinModel(mu_b=mu_b, lam=lam).lindblad()
    psi = StateVector.normalize([1, 1])
    drift, (d,) = nonlinear_drift_diffusion(model, UnravellingGauge([0.0]), psi)
    np.testing.assert_allclose(d, lam * SIGMA_Z.entries @ psi.amplitudes, atol=1e-15)
    noise_part = drift + 1j * model.hamiltonian.entries @ psi.amplitudes
    np.testing.assert_allclose(noise_part, -0.5 * lam**2 * psi.amplitudes, atol=1e-15)


def test_unitary_step_norm_change_is_second_order():
    model = DephasingSpinModel(mu_b=1.0, lam=0.0).lindblad()
    psi = StateVector(random_state(np.random.default_rng(2)))
    for dt in (1e-2, 1e-3):
        out = step_nonlinear(model, UnravellingGauge([0.0]), psi, [0.0], dt, renormalize=False)
        assert abs(out.norm2 - 1) <= 2 * dt**2


@given(angles, st.floats(-1, 1))
def test_eigenstate_stays_on_its_ray(phi, dW):
    model = DephasingSpinModel(lam=0.8).lindblad()
    out = step_nonlinear(model, UnravellingGauge([phi]), KET_PLUS, [dW], 1e-3)
    assert abs(out.amplitudes[1]) == 0
    assert abs(out.amplitudes[0]) == pytest.approx(1, abs=1e-15)


@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5))
def test_quadrature_gauge_freezes_sz(seed, dW):
    dt = 1e-3
    model = DephasingSpinModel(lam=1.0).lindblad()
    psi = StateVector(random_state(np.random.default_rng(seed)))
    out = step_nonlinear(model, UnravellingGauge([np.pi / 2]), psi, [dW], dt)
    sz = lambda p: np.abs(p.amplitudes[0]) ** 2 - np.abs(p.amplitudes[1]) ** 2
    assert abs(sz(out) - sz(psi)) <= 10 * dt


def test_degenerate_step_raises():
    # 1 - lam^2 dt / 2 = 0 annihilates the equator state when dW = 0
    model = DephasingSpinModel(mu_b=0.0, lam=1.0).lindblad()
    with pytest.raises(DegenerateStateError):
        step_nonlinear(model, UnravellingGauge([0.0]), StateVector.normalize([1, 1]), [0.0], 2.0)


@given(angles, st.floats(-0.3, 0.3))
def test_linear_step_eigen_amplitude(phi, dxi):
    mu_b, lam, dt = 1.1, 0.6, 1e-3
    model = DephasingSpinModel(mu_b=mu_b, lam=lam).lindblad()
    out = step_linear(model, UnravellingGauge([phi]), KET_PLUS, [dxi], dt)
    factor = 1 + 1j * mu_b * dt + lam * np.exp(1j * phi) * dxi - 0.5 * lam**2 * dt
    assert out.amplitudes[0] == pytest.approx(factor, abs=1e-15)
    if phi == 0:
        assert out.norm2 == pytest.approx(abs(factor) ** 2, abs=1e-15)


def test_linear_norm_factor_is_martingale_increment():
    lam, dt, dxi = 0.5, 1e-3, 0.02
    model = DephasingSpinModel(mu_b=1.0, lam=lam).lindblad()
    n2 = step_linear(model, UnravellingGauge([0.0]), KET_PLUS, [dxi], dt).norm2
    # 1 + 2 lam dxi plus terms of order dt
    assert abs(n2 - (1 + 2 * lam * dxi)) <= 5 * dt


def test_linear_matches_nonlinear_without_noise_coupling():
    model = DephasingSpinModel(mu_b=1.0, lam=0.0).lindblad()
    psi = StateVector(random_state(np.random.default_rng(3)))
    g = UnravellingGauge([0.2])
    a = step_linear(model, g, psi, [0.4], 1e-3)
    b = step_nonlinear(model, g, psi, [0.0], 1e-3, renormalize=False)
    np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-15)


def test_gauge_angles_reduced():
    assert UnravellingGauge([3 * np.pi]).phases[0] == pytest.approx(np.pi)
    assert UnravellingGauge([-np.pi]).phases[0] == pytest.approx(np.pi)
    assert UnravellingGauge.uniform(0.3, 2).phases == pytest.approx([0.3, 0.3])


def test_sde_config_validation():
    assert SdeConfig(1e-3, 2.0).steps == 2000
    with pytest.raises(ValueError):
        SdeConfig(0.3, 1.0)
    with pytest.raises(ValueError):
        SdeConfig(1e-3, 1.0, scheme="milstein")
    assert list(SdeConfig(0.1, 1.0, record_stride=3).record_indices()) == [0, 3, 6, 9, 10]


def test_wiener_increments_deterministic_and_scaled():
    a = wiener_increments(7, 3, 500, 2, 0.01)
    np.testing.assert_array_equal(a, wiener_increments(7, 3, 500, 2, 0.01))
    assert not np.array_equal(a, wiener_increments(7, 4, 500, 2, 0.01))
    big = wiener_increments(1, 0, 200_000, 1, 0.01)
    assert big.mean() == pytest.approx(0, abs=5 * 0.1 / np.sqrt(2e5))
    assert big.var() == pytest.approx(0.01, rel=0.02)


def test_refined_increments_share_the_path():
    fine = wiener_increments(5, 2, 40, 1, 0.025, refinement=1)
    coarse = wiener_increments(5, 2, 10, 1, 0.1, refinement=4)
    np.testing.assert_allclose(coarse[:, 0], fine[:, 0].reshape(10, 4).sum(axis=1), atol=1e-15)


def test_girsanov_examples(preset):
    cfg = SdeConfig(1e-3, 0.2)
    for phi in (np.pi / 2,):
        m = preset.lindblad()
        tr = simulate_trajectory(m, UnravellingGauge([phi]), preset.initial_state(), cfg, master_seed=1)
        q = girsanov_shift(m, UnravellingGauge([phi]), tr)
        np.testing.assert_allclose(q.increments, tr.noise.increments, atol=1e-17)
    m0 = DephasingSpinModel(lam=0.0).lindblad()
    tr = simulate_trajectory(m0, UnravellingGauge([0.0]), preset.initial_state(), cfg, master_seed=1)
    np.testing.assert_array_equal(girsanov_shift(m0, UnravellingGauge([0.0]), tr).increments, tr.noise.increments)
    lam = 0.5
    m = DephasingSpinModel(lam=lam).lindblad()
    tr = simulate_trajectory(m, UnravellingGauge([0.0]), KET_PLUS, cfg, master_seed=2)
    q = girsanov_shift(m, UnravellingGauge([0.0]), tr)
    np.testing.assert_allclose(q.increments, tr.noise.increments + 2 * lam * cfg.dt, atol=1e-15)


def test_pathwise_trivial_cases(preset):
    dt = 1e-2
    inc = wiener_increments(3, 0, 200, 1, dt)
    from gaugephase.sse import NoisePath
    noise = NoisePath(inc.T, dt, "Q")
    m0 = DephasingSpinModel(lam=0.0).lindblad()
    assert pathwise_equivalence_check(m0, UnravellingGauge([0.5]), preset.initial_state(), noise, dt) <= 1e-10
    m = preset.lindblad()
    assert pathwise_equivalence_check(m, UnravellingGauge([0.5]), KET_PLUS, noise, dt) <= 1e-9


@pytest.mark.parametrize("phi", [0.0, np.pi / 4])
def test_pathwise_strong_order_one_half(preset, phi):
    m = preset.lindblad()
    g = UnravellingGauge([phi])
    T, n_paths = 1.0, 200
    dts = [0.02, 0.01, 0.005, 0.0025]
    medians = []
    for dt in dts:
        k = int(round(dt / dts[-1]))
        inc = np.stack([wiener_increments(11, i, int(round(T / dt)), 1, dt, refinement=k)
                        for i in range(n_paths)])
        medians.append(np.median(pathwise_deviations(m, g, preset.initial_state(), inc, dt)))
    slope = np.polyfit(np.log(dts), np.log(medians), 1)[0]
    assert 0.4 <= slope <= 0.65


def test_measure_weight_examples(preset):
    cfg = SdeConfig(1e-3, 0.5)
    tr = simulate_trajectory(preset.lindblad(), UnravellingGauge([0.3]), preset.initial_state(), cfg,
                             equation=LINEAR, master_seed=4)
    w = measure_weight(tr)
    assert w[0] == pytest.approx(1, abs=1e-15)
    assert np.all(w > 0)
    m0 = DephasingSpinModel(lam=0.0).lindblad()
    tr0 = simulate_trajectory(m0, UnravellingGauge([0.3]), preset.initial_state(), cfg, equation=LINEAR)
    # Euler steps of a unitary drift change the norm at order dt^2 per step
    np.testing.assert_allclose(measure_weight(tr0), 1, atol=2 * cfg.steps * cfg.dt**2)
    with pytest.raises(ValueError):
        measure_weight(simulate_trajectory(m0, UnravellingGauge([0.3]), preset.initial_state(), cfg))


def test_eigenstate_weight_is_lognormal():
    lam, dt = 0.5, 1e-4
    cfg = SdeConfig(dt, 1.0)
    m = DephasingSpinModel(lam=lam).lindblad()
    tr = simulate_trajectory(m, UnravellingGauge([0.0]), KET_PLUS, cfg, equation=LINEAR, master_seed=8)
    xi = np.r_[0, np.cumsum(tr.noise.increments[0])]
    expected = np.exp(2 * lam * xi - 2 * lam**2 * tr.times)
    np.testing.assert_allclose(measure_weight(tr), expected, rtol=0.05)


def test_nonlinear_trajectory_invariants(preset):
    cfg = SdeConfig(1e-3, 1.0)
    tr = simulate_trajectory(preset.lindblad(), UnravellingGauge([np.pi / 2]), preset.initial_state(), cfg,
                             master_seed=12, index=5)
    np.testing.assert_allclose(np.sum(np.abs(tr.states) ** 2, axis=1), 1, atol=1e-6)
    assert np.ptp(tr.sz_path) <= 10 * cfg.dt
    assert tr.noise.measure_tag == "P"


def test_batch_rows_do_not_depend_on_batch_size(preset):
    cfg = SdeConfig(1e-2, 1.0)
    m, g = preset.lindblad(), UnravellingGauge([0.7])
    noise = np.stack([wiener_increments(2, i, cfg.steps, 1, cfg.dt) for i in range(5)])
    psi0 = np.repeat(preset.initial_state().amplitudes[None], 5, axis=0)
    for eq in (NONLINEAR, LINEAR):
        full = simulate_batch(m, g, psi0, noise, cfg, eq)
        one = simulate_batch(m, g, psi0[3:4], noise[3:4], cfg, eq)
        np.testing.assert_array_equal(full.states[3], one.states[0])
        np.testing.assert_array_equal(full.dyn_phase[3], one.dyn_phase[0])


def test_gauges_diverge_pathwise(preset):
    spin = DephasingSpinModel(1.0, 1.0, np.pi / 3)
    cfg = SdeConfig(1e-3, 2.0)
    dist = []
    for i in range(21):
        inc = wiener_increments(99, i, cfg.steps, 1, cfg.dt)
        a = simulate_trajectory(spin.lindblad(), UnravellingGauge([0.0]), spin.initial_state(), cfg, inc)
        b = simulate_trajectory(spin.lindblad(), UnravellingGauge([np.pi / 2]), spin.initial_state(), cfg, inc)
        # compare rays: remove the global phase before measuring distance
        ov = np.sum(np.conj(a.states) * b.states, axis=1)
        dist.append(np.sqrt(np.maximum(0, 2 - 2 * np.abs(ov))).max())
    assert np.median(dist) > 0.1


def test_ray_metric_ignores_global_phase(preset):
    dt = 1e-2
    inc = np.stack([wiener_increments(6, i, 100, 1, dt) for i in range(20)])
    m = preset.lindblad()
    g = UnravellingGauge([0.4])
    ray = pathwise_deviations(m, g, preset.initial_state(), inc, dt)
    vec = pathwise_deviations(m, g, preset.initial_state(), inc, dt, metric="vector")
    assert np.all(ray <= vec + 1e-15)
    # at the quadrature gauge the two Euler schemes coincide as rays
    quad = pathwise_deviations(m, UnravellingGauge([np.pi / 2]), preset.initial_state(), inc, dt)
    assert quad.max() <= 1e-12
    with pytest.raises(ValueError):
        pathwise_deviations(m, g, preset.initial_state(), inc, dt, metric="angle")
