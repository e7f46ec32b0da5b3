"""Nonlinear radial evolution: stationarity, consistency, conservation."""

import numpy as np
import pytest

from fastdiff_lab import closedform as cf
from fastdiff_lab import evolve
from fastdiff_lab import geometry as geo
from fastdiff_lab import linop
from fastdiff_lab.closedform import ModeIndex  # noqa: F401

def zero_state(grid, params):
    return evolve.EvolutionState(
        0.0, geo.GridFunction(grid, 0, np.zeros(grid.count + 1)), params)


def test_rhs_zero_at_fixed_point(grid12, params33):
    w = geo.GridFunction(grid12, 0, np.zeros(grid12.count + 1))
    out = evolve.nonlinear_rhs(w, params33)
    assert np.all(out.values == 0.0)


def test_rhs_positivity_abort(grid12, params33):
    vals = np.zeros(grid12.count + 1)
    vals[37] = -1.5
    w = geo.GridFunction(grid12, 0, vals)
    with pytest.raises(evolve.PositivityError) as exc:
        evolve.nonlinear_rhs(w, params33)
    assert exc.value.node == 37
    assert exc.value.value == pytest.approx(-0.5)


def test_rhs_linearization_consistency(grid12, params33):
    # rhs(eps v01) = eps lambda_01 v01 + O(eps^2)
    v01 = cf.eigenfunction_v(ModeIndex(0, 1), grid12.nodes, params33)
    lam = cf.eigenvalue(ModeIndex(0, 1), params33)
    devs = []
    for eps in (1e-2, 5e-3):
        w = geo.GridFunction(grid12, 0, eps * v01)
        rhs = evolve.nonlinear_rhs(w, params33)
        dev = rhs.values[:grid12.count - 1] - eps * lam * v01[:grid12.count - 1]
        devs.append(np.max(np.abs(dev)) / eps)
    # quadratic in amplitude until the O(h^2) floor
    assert devs[1] <= 0.6 * devs[0] + 1e-4


def test_rhs_matches_manufactured_time_derivative(params33):
    tau0, bplus = 0.2, 1.4
    errs = []
    for count in (300, 600):
        grid = geo.make_grid(12.0, count)
        w = geo.GridFunction(
            grid, 0,
            cf.delayed_barenblatt_v(0.3, grid.nodes, tau0, bplus, params33) - 1.0)
        rhs = evolve.nonlinear_rhs(w, params33)
        exact = cf.delayed_barenblatt_time_derivative(0.3, grid.nodes, tau0,
                                                      bplus, params33)
        errs.append(np.max(np.abs(rhs.values - exact)[:count - 1]))
    assert errs[0] / errs[1] == pytest.approx(4.0, abs=1.0)


def test_step_fixed_point_exact(grid12, params33):
    st = zero_state(grid12, params33)
    st2 = evolve.step_nonlinear(st, 1e-2)
    assert np.max(np.abs(st2.w.values)) <= 1e-12


def test_step_rejects_bad_dt(grid12, params33):
    with pytest.raises(ValueError, match="dt"):
        evolve.step_nonlinear(zero_state(grid12, params33), -0.1)


def test_state_positivity_guard(grid12, params33):
    vals = np.zeros(grid12.count + 1)
    vals[5] = -1.01
    with pytest.raises(evolve.PositivityError):
        evolve.EvolutionState(0.0, geo.GridFunction(grid12, 0, vals), params33)


def test_run_trivial_trace(grid_coarse, params33):
    tr = evolve.run(zero_state(grid_coarse, params33), 1e-2, 0.1)
    assert np.all(tr.sup == 0.0)
    assert np.all(tr.mass_defect == 0.0)
    assert np.all(tr.energy == 0.0)
    assert np.all(tr.min_v == 1.0) and np.all(tr.max_v == 1.0)


def test_run_conservation_and_envelope(grid12, params33):
    st = evolve.bump_data(grid12, 0.05, seed=2, params=params33)
    tr = evolve.run(st, 2e-3, 1.0, evolve.RecordOptions(record_every=10))
    drift = np.max(np.abs(tr.mass_defect - tr.mass_defect[0]))
    assert drift <= 1e-6
    env = evolve.comparison_envelope(st, params33)
    assert env.lower < 1.0 < env.upper
    assert tr.min_v.min() >= env.lower - 1e-12
    assert tr.max_v.max() <= env.upper + 1e-12


def test_run_delayed_barenblatt_extrema_limits(grid12, params33):
    # extrema approach the (B/B+)-type limits predicted by the quotient
    bplus = 1.3
    st = evolve.delayed_barenblatt_data(grid12, 0.2, bplus, params33)
    def boundary(t):
        E = np.exp(2 * params33.p * t)
        th = (E / (E + 2 * params33.p * 0.2)) ** params33.beta
        return th ** (-params33.p) * (params33.B / bplus) ** 0.0 - 1.0
    tr = evolve.run(st, 2e-3, 2.5, evolve.RecordOptions(record_every=25),
                    boundary=boundary)
    # v(t) -> u_{B+}/u_B whose range is [(B/B+)^a, 1] for B+ > B
    lo_lim = (params33.B / bplus) ** params33.a
    assert tr.min_v[-1] == pytest.approx(lo_lim, rel=1e-3)
    assert tr.max_v[-1] == pytest.approx(1.0, rel=1e-3)
    # monotone approach of the minimum toward its limit
    mins = tr.min_v
    assert np.all(np.diff(mins) >= -1e-12)


def test_mass_and_moments(grid12, params33):
    zero = geo.GridFunction(grid12, 0, np.zeros(grid12.count + 1))
    mm = evolve.mass_and_moments(zero, params33)
    assert mm.mass_defect == 0.0 and mm.second_moment == 0.0

    s = grid12.nodes
    eps = 1e-3
    w00 = geo.GridFunction(
        grid12, 0, eps * cf.eigenfunction_v(ModeIndex(0, 0), s, params33))
    mm0 = evolve.mass_and_moments(w00, params33)
    assert mm0.mass_defect != 0.0
    assert abs(mm0.mass_defect) > 1e-3 * eps

    # the dilation mode is mass-neutral (quadrature level)
    w01 = eps * cf.eigenfunction_v(ModeIndex(0, 1), s, params33)
    mm1 = evolve.mass_and_moments(geo.GridFunction(grid12, 0, w01), params33)
    assert abs(mm1.mass_defect) <= 1e-8

    # p <= 2: second moment flagged non-convergent
    p_small = cf.derive_params(3, 0.55)
    mm2 = evolve.mass_and_moments(zero, p_small)
    assert not mm2.second_moment_converged
    assert np.isnan(mm2.second_moment)


def test_energy(grid12, params33):
    zero = geo.GridFunction(grid12, 0, np.zeros(grid12.count + 1))
    assert evolve.energy(zero, params33) == 0.0
    # H(1) at m = 1/2 equals (2^1.5 - 2.5)/0.75; check through a constant w=1
    # on a short grid against the independent quadrature of H
    p_half = cf.derive_params(3, 0.5)
    grid = geo.make_grid(2.0, 100)
    one = geo.GridFunction(grid, 0, np.ones(grid.count + 1))
    e_val = evolve.energy(one, p_half)
    h1 = (2.0 ** 1.5 - 2.5) / 0.75
    ref = geo.sphere_area(3) * h1 * float(
        np.trapezoid(np.tanh(grid.nodes) ** 2, grid.nodes))
    assert e_val == pytest.approx(ref, rel=1e-12)
    assert h1 == pytest.approx(0.43790283, abs=1e-7)


def test_energy_quadratic_proxy(grid12, params33):
    # E / (0.5 int w^2 dmu) -> 1 as amplitude -> 0
    s = grid12.nodes
    shape = np.exp(-((s - 1.0) ** 2))
    ratios = []
    for eps in (1e-2, 1e-3):
        w = geo.GridFunction(grid12, 0, eps * shape)
        ref = 0.5 * geo.sphere_area(3) * float(np.trapezoid(
            (eps * shape) ** 2 * geo.volume_weight(s, 3), s))
        ratios.append(evolve.energy(w, params33) / ref)
    assert abs(ratios[1] - 1.0) < abs(ratios[0] - 1.0)
    assert ratios[1] == pytest.approx(1.0, abs=2e-3)


def test_envelope_continuity(grid12, params33):
    # c -> 1 implies C -> 1
    prev = None
    for eps in (0.2, 0.1, 0.05, 0.01):
        st = evolve.EvolutionState(
            0.0, geo.GridFunction(
                grid12, 0, eps * np.exp(-(grid12.nodes - 1) ** 2)), params33)
        env = evolve.comparison_envelope(st, params33)
        width = env.upper - env.lower
        if prev is not None:
            assert width < prev
        prev = width
    assert env.upper == pytest.approx(1.0, abs=0.05)


def test_step_extrapolated_second_order(grid_coarse, params33):
    st0 = evolve.eigenmode_data(grid_coarse, ModeIndex(0, 1), 0.05, params33)
    # reference with tiny BE steps
    ref = st0
    for _ in range(512):
        ref = evolve.step_nonlinear(ref, 0.2 / 512)
    errs = []
    for nsteps in (2, 4):
        st = st0
        for _ in range(nsteps):
            st = evolve.step_nonlinear_extrapolated(st, 0.2 / nsteps)
        errs.append(np.max(np.abs(st.w.values - ref.w.values)))
    assert errs[0] / errs[1] == pytest.approx(4.0, abs=1.3)


def test_nonlinear_slope_converges_to_linear(params33):
    # as amplitude -> 0, the nonlinear decay slope approaches the linear
    # semigroup slope of the same initial shape, difference O(eps); the
    # second-order stepper keeps the time-integrator bias out of the gap
    from fastdiff_lab.asymptotics import WindowPolicy, fit_rate
    grid = geo.make_grid(12.0, 600)
    op = linop.assemble(0, 0.0, grid, params33)
    shape = evolve.bump_data(grid, 1.0, seed=4, params=params33).w.values
    lin = linop.semigroup_decay(
        op, geo.GridFunction(grid, 0, shape), [ModeIndex(0, 0)],
        1.2, 1e-3, params33, policy=WindowPolicy(1e-4, 0.5))
    slopes = []
    for eps in (0.1, 0.05, 0.025):
        st = evolve.EvolutionState(
            0.0, geo.GridFunction(grid, 0, eps * shape), params33)
        times, sups = [0.0], [eps]
        dt = 1e-3
        for j in range(1200):
            st = evolve.step_nonlinear_extrapolated(st, dt)
            times.append(st.t)
            sups.append(float(np.max(np.abs(st.w.values))))
        fit = fit_rate(np.array(times), np.array(sups) / max(sups),
                       WindowPolicy(1e-4, 0.5))
        slopes.append(fit.slope)
    # the amplitude-dependent part halves with eps ...
    d1 = abs(slopes[0] - slopes[1])
    d2 = abs(slopes[1] - slopes[2])
    assert d2 <= 0.7 * d1
    # ... and the limit agrees with the linear slope up to the O(h^2)
    # discrepancy between the two spatial discretizations
    assert abs(slopes[-1] - lin.slope) <= 0.02


def test_builders(grid12, params33):
    st = evolve.eigenmode_data(grid12, ModeIndex(0, 1), 0.03, params33)
    assert st.w.values[0] == pytest.approx(0.03 * 1.0)  # v01(0) = 1 at p=3
    with pytest.raises(ValueError, match="radial"):
        evolve.eigenmode_data(grid12, ModeIndex(1, 0), 0.03, params33)
    stb = evolve.bump_data(grid12, 0.05, seed=9, params=params33)
    mm = evolve.mass_and_moments(stb.w, params33)
    assert abs(mm.mass_defect) <= 1e-14
    stb2 = evolve.bump_data(grid12, 0.05, seed=9, params=params33)
    assert np.array_equal(stb.w.values, stb2.w.values)  # seeded determinism
    std = evolve.delayed_barenblatt_data(grid12, 0.1, 1.0, params33)
    assert std.w.values[0] != 0.0
