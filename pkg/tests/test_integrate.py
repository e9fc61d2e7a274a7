"""Adaptive integrator against closed forms, chart consistency, blowup runs,
and the omega estimator on synthetic and real data."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rbklab.core import phi_field, rbk_field
from rbklab.integrate import (
    BlowupEstimate,
    IntegrationError,
    IntegratorSettings,
    Trajectory,
    autonomous,
    chart_map_t_to_phi,
    density_aux_fields,
    estimate_omega,
    geometric_grid,
    integrate_adaptive,
    integrate_logtime,
    integrate_phi_to_blowup,
    integrate_rbk,
)

RTOL = IntegratorSettings().rtol


# ---------------------------------------------------------------------------
# t-chart against closed forms
# ---------------------------------------------------------------------------


def test_monodisperse_closed_form():
    """Monodisperse data decays by c_N' = -c_N^2, so c_N(t) = 1/(1 + t)."""
    traj = integrate_rbk([0.0, 0.0, 1.0], 9.0)
    assert traj.final_state[-1] == pytest.approx(0.1, rel=10 * RTOL)


def test_zero_initial_data_constant():
    traj = integrate_rbk(np.zeros(4), 5.0)
    assert np.all(traj.states == 0.0)
    assert np.all(traj.aux_series("y") == 0.0)


def test_odd_density_closed_form_n5():
    traj = integrate_rbk([1.0, 0.0, 1.0, 0.0, 0.0], 4.0)
    odd_sum = traj.states[-1, 0::2].sum()
    assert odd_sum == pytest.approx(2.0 / 9.0, rel=10 * RTOL)


def test_exact_zero_preservation_bitwise():
    traj = integrate_rbk([0.0, 1.0, 0.0, 1.0, 0.0, 1.0], 50.0)
    assert np.all(traj.states[:, 0::2] == 0.0)


def test_states_stay_nonnegative():
    rng = np.random.default_rng(9)
    traj = integrate_rbk(rng.uniform(0.0, 1.0, 6), 200.0)
    assert np.all(traj.states >= 0.0)


def test_nu_monotone_and_half_rate_bound():
    rng = np.random.default_rng(13)
    c0 = rng.uniform(0.1, 1.0, 5)
    traj = integrate_rbk(c0, 100.0)
    nu = traj.states.sum(axis=1)
    assert np.all(np.diff(nu) < 0)
    bound = 1.0 / (1.0 / nu[0] + traj.abscissae / 2.0)
    assert np.all(nu <= bound * (1 + 1e-12))


def test_cn_integrating_factor_identity():
    rng = np.random.default_rng(17)
    c0 = rng.uniform(0.1, 1.0, 4)
    traj = integrate_rbk(c0, 50.0)
    predicted = c0[-1] * np.exp(-traj.aux_series("nu_int"))
    assert_allclose(traj.states[:, -1], predicted, rtol=100 * RTOL)


def test_grid_points_hit_exactly():
    grid = geometric_grid(0.1, 10.0, 8)
    traj = integrate_adaptive(
        autonomous(rbk_field), np.ones(3), (0.0, 10.0), grid=grid,
        aux_fields=density_aux_fields(),
    )
    sampled = set(traj.abscissae.tolist())
    assert all(g in sampled for g in grid.tolist())


def test_negativity_guard_rejects_then_clamps():
    """A component driven through zero settles at exact zero: overshoots past
    -guard reject the step, values inside (-guard, 0) clamp to 0."""

    def field(t, x):
        return np.array([-1.0 if x[0] > 0 else 0.0, 0.0])

    settings = IntegratorSettings(negativity_guard=1e-6)
    traj = integrate_adaptive(field, [0.5, 1.0], (0.0, 1.0), settings)
    assert np.all(traj.states[:, 0] >= 0.0)
    assert traj.states[-1, 0] == 0.0
    assert np.all(traj.states[:, 1] == 1.0)


def test_max_steps_exhaustion():
    with pytest.raises(IntegrationError, match="max_steps"):
        integrate_rbk(np.ones(3), 1e6, IntegratorSettings(max_steps=10))


def test_span_validation():
    with pytest.raises(ValueError):
        integrate_adaptive(autonomous(rbk_field), np.ones(3), (1.0, 1.0))


# ---------------------------------------------------------------------------
# log-time chart
# ---------------------------------------------------------------------------


def test_logtime_matches_t_chart_at_e():
    c0 = np.array([1.0, 1.0, 1.0])
    a = integrate_logtime(c0, np.e)
    b = integrate_rbk(c0, np.e)
    assert_allclose(a.final_state, b.final_state, rtol=100 * RTOL)


def test_logtime_monodisperse_to_1e6():
    settings = IntegratorSettings(atol=1e-30)
    traj = integrate_logtime([0.0, 0.0, 1.0], 1e6, settings)
    closed = 1.0 / (1.0 + traj.abscissae)
    assert_allclose(traj.states[:, -1], closed, rtol=100 * RTOL)


def test_logtime_requires_t_end_beyond_switch():
    with pytest.raises(ValueError):
        integrate_logtime(np.ones(3), 0.5)


def test_logtime_tc1_approaches_one(logtime_n3):
    traj = logtime_n3
    t_c1 = traj.final_abscissa * traj.final_state[0]
    assert abs(t_c1 - 1.0) < 0.2


def test_logtime_zero_lattice_preserved():
    traj = integrate_logtime([0.0, 1.0, 0.0, 1.0, 0.0, 1.0], 1e4)
    assert np.all(traj.states[:, 0::2] == 0.0)


# ---------------------------------------------------------------------------
# phi chart and blowup
# ---------------------------------------------------------------------------


def test_blowup_terminates_with_monotone_components(blowup_n4):
    traj, estimate = blowup_n4
    assert traj.final_state[0] >= 1e10
    assert np.all(np.diff(traj.states, axis=0) > 0)
    assert estimate.omega > traj.final_abscissa
    assert np.isfinite(traj.aux_series("tau")[-1])


def test_blowup_ratio_divergence_n3():
    traj, _ = integrate_phi_to_blowup(np.ones(2), cap=1e10)
    assert traj.final_state[0] / traj.final_state[1] > 10.0


def test_blowup_omega_matches_reference_fixture(oracle_fixtures):
    for n in (3, 4, 5):
        fx = oracle_fixtures[f"omega/N{n}_ones"]
        _, estimate = integrate_phi_to_blowup(np.ones(n - 1), cap=1e10)
        rel = abs(estimate.omega / fx["oracle"]["omega"] - 1.0)
        assert rel < fx["tolerance"], f"N={n}: omega off by {rel:.2e}"


def test_blowup_uncertainty_shrinks_with_cap():
    for n in (3, 4, 5):
        _, e8 = integrate_phi_to_blowup(np.ones(n - 1), cap=1e8)
        _, e9 = integrate_phi_to_blowup(np.ones(n - 1), cap=1e9)
        assert e9.uncertainty < e8.uncertainty


def test_blowup_rejects_bad_initial_data():
    with pytest.raises(ValueError):
        integrate_phi_to_blowup([1.0, -1.0])
    with pytest.raises(ValueError):
        integrate_phi_to_blowup([1.0, 1.0], cap=0.5)


def test_blowup_cap_unreachable_with_tight_budget():
    with pytest.raises(IntegrationError, match="cap not reached"):
        integrate_phi_to_blowup(np.ones(3), cap=1e10, settings=IntegratorSettings(max_steps=20))


# ---------------------------------------------------------------------------
# omega estimation
# ---------------------------------------------------------------------------


def test_estimate_omega_exact_synthetic():
    n = 4
    y = np.array([1.9, 1.99, 1.999])
    tau = ((n - 2) / 6.0 * (2.0 - y)) ** (-1.0 / (n - 2))
    est = estimate_omega(np.column_stack([y, tau]), n)
    assert est.omega == pytest.approx(2.0, abs=1e-9)
    assert est.method == "tauy-extrapolation"


def test_estimate_omega_perturbed_synthetic():
    n, omega = 4, 2.0
    y = omega - np.geomspace(0.5, 1e-4, 60)
    tau = ((n - 2) / 6.0 * (omega - y) * 1.01) ** (-1.0 / (n - 2))
    est = estimate_omega(np.column_stack([y, tau]), n)
    assert abs(est.omega / omega - 1.0) < 0.02


def test_estimate_omega_errors():
    with pytest.raises(ValueError):
        estimate_omega([[0.1, 1.0], [0.2, 2.0]], 4)  # two samples
    with pytest.raises(ValueError):
        estimate_omega([[0.1, 1.0], [0.2, 2.0], [0.3, 1.5]], 4)  # non-monotone
    with pytest.raises(ValueError):
        estimate_omega([[0.1, 1.0], [0.2, 2.0], [0.3, 3.0]], 2)  # N too small


# ---------------------------------------------------------------------------
# chart map
# ---------------------------------------------------------------------------


def test_chart_map_monodisperse():
    q = 2.0
    traj = integrate_rbk([0.0, 0.0, q], 5.0)
    mapped = chart_map_t_to_phi(traj)
    assert np.all(mapped.states == 0.0)
    # y(t) = log(1 + q t) for monodisperse decay
    expected = np.log(1.0 + q * traj.abscissae[1:])
    assert_allclose(mapped.abscissae[1:], expected, rtol=100 * RTOL)


def test_chart_map_round_trip_algebraic():
    rng = np.random.default_rng(23)
    c0 = rng.uniform(0.1, 1.0, 4)
    traj = integrate_rbk(c0, 3.0)
    mapped = chart_map_t_to_phi(traj)
    rebuilt = mapped.states * traj.states[:, -1][:, None]
    assert_allclose(rebuilt, traj.states[:, :-1], rtol=4e-16, atol=0)


def test_chart_map_requires_positive_cn():
    traj = integrate_rbk([1.0, 0.0, 0.0], 1.0)  # c_3 identically zero
    with pytest.raises(ValueError, match="chart breakdown"):
        chart_map_t_to_phi(traj)


def test_phi_chart_consistency_with_mapped_trajectory():
    """Mapping a t-run into the phi chart agrees with integrating the
    phi-system directly at the matched y values."""
    c0 = np.array([1.0, 1.0, 1.0])
    traj = integrate_rbk(c0, 3.0, points_per_decade=16)
    mapped = chart_map_t_to_phi(traj)
    y = mapped.abscissae
    direct = integrate_adaptive(
        autonomous(phi_field),
        c0[:-1] / c0[-1],
        (0.0, y[-1]),
        grid=y[1:-1],
        nonneg_guard=False,
        chart="phi-y",
    )
    idx = np.searchsorted(direct.abscissae, y[1:-1])
    assert np.all(direct.abscissae[idx] == y[1:-1])
    assert_allclose(direct.states[idx], mapped.states[1:-1], rtol=100 * RTOL)


# ---------------------------------------------------------------------------
# settings / trajectory plumbing
# ---------------------------------------------------------------------------


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(rtol=0.0)
    with pytest.raises(ValueError):
        IntegratorSettings(max_steps=0)
    assert IntegratorSettings().negativity_guard == IntegratorSettings().atol
    assert IntegratorSettings(negativity_guard=1e-9).negativity_guard == 1e-9


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory("t", [0.0, 0.0], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        Trajectory("t", [0.0, 1.0], [[1.0]])
    with pytest.raises(ValueError):
        Trajectory("t", [0.0, 1.0], [[1.0], [1.0]], aux={"y": [1.0, 0.0]})
    traj = Trajectory("t", [0.0, 1.0], [[1.0], [0.5]], aux={"y": [0.0, 0.7]})
    assert traj.n_samples == 2 and traj.dim == 1
    with pytest.raises(KeyError):
        traj.aux_series("nope")


def test_blowup_estimate_validation():
    with pytest.raises(ValueError):
        BlowupEstimate(-1.0, 0.0)
    with pytest.raises(ValueError):
        BlowupEstimate(1.0, 0.0, method="magic")
