"""Ergodic-average operators on phase grids.

The weighted backward averages are checked against independent references:
the exact free-streaming symbol, constancy on functions of the invariants,
vanishing orbit averages of characters, and the norm bound of the
continuum operator.
"""

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmstab.averaging import (
    AveragingConfig,
    PhaseGrid,
    apply_QT,
    apply_QT_many,
    apply_QT_points,
    apply_Qinf,
    dump_averaged_csv,
    orbit_summary,
    qt_operator_norm_probe,
)
from vmstab.equilibrium import VelocityQuadrature, invariants_of, preset_equilibrium
from vmstab.errors import ConfigError, DriftExceeded

# module-wide step: coarse enough to keep the suite quick, fine enough that
# the trapezoid term (dt * k)^2 / 12 stays far below every tolerance used here
CFG = AveragingConfig(dt=2e-3)

# sampling rules for the phase grids: much coarser than the moment
# quadrature the equilibria were built with, which is fine because the
# averaging layer only reads node coordinates and positive weights
QUAD_FREE = VelocityQuadrature.build(4, 8.0)
QUAD_WELL = VelocityQuadrature.build(6, 7.0)
QUAD_SMALL = VelocityQuadrature.build(4, 7.0)


@pytest.fixture(scope="module")
def free_eq():
    eq = preset_equilibrium("maxwellian-pair", nx=16)
    assert eq.fields.is_zero
    return eq


@pytest.fixture(scope="module")
def free_grid(free_eq):
    return PhaseGrid.from_equilibrium(free_eq, n_x=8, quad=QUAD_FREE)


@pytest.fixture(scope="module")
def well_eq():
    return preset_equilibrium("magnetic-well", nx=16)


@pytest.fixture(scope="module")
def well_grid(well_eq):
    return PhaseGrid.from_equilibrium(well_eq, n_x=6, quad=QUAD_WELL)


@pytest.fixture(scope="module")
def small_grid(well_eq):
    # 4 x-nodes times a 4x4 velocity rule: cheap enough for convergence scans
    return PhaseGrid.from_equilibrium(well_eq, n_x=4, quad=QUAD_SMALL)


def _vhat(v1, v2):
    g = np.sqrt(1.0 + v1 * v1 + v2 * v2)
    return v1 / g, v2 / g


def _character(k, period):
    w = 2.0 * np.pi * k / period
    return lambda x, v1, v2: np.exp(1j * w * x)


def _invariant_symbol(fields, sign):
    def g(x, v1, v2):
        e, p = invariants_of(x, v1, v2, fields, sign)
        return np.exp(-e) * (1.0 + 0.3 * np.sin(p))
    return g


def _smooth_symbol(period):
    w = 2.0 * np.pi / period
    def g(x, v1, v2):
        vh1, vh2 = _vhat(v1, v2)
        return np.exp(1j * w * x) * vh2 + 0.5 * np.cos(w * x) + 0.2 * vh1
    return g


# ---------------------------------------------------------------------------
# grid construction


def test_phase_grid_layout_and_weights(well_eq):
    grid = PhaseGrid.from_equilibrium(well_eq, n_x=6, quad=QUAD_WELL)
    nvv = QUAD_WELL.nv ** 2
    assert grid.size == 6 * nvv
    assert grid.X.shape == grid.V1.shape == grid.W.shape == (grid.size,)
    # x-major layout: one full velocity block per x node
    assert np.all(grid.X[:nvv] == grid.x[0])
    assert np.array_equal(grid.V1[:nvv], QUAD_WELL.V1)
    # product weights integrate 1 exactly over the slab
    box = grid.period * (2.0 * QUAD_WELL.v_max) ** 2
    assert np.isclose(grid.W.sum(), box, rtol=1e-12)
    assert np.all(grid.W > 0.0)
    # norm weights: the species envelope evaluated at the node invariants
    for sign, w in ((+1, grid.w_plus), (-1, grid.w_minus)):
        prof = well_eq.plus if sign > 0 else well_eq.minus
        e, _ = invariants_of(grid.X, grid.V1, grid.V2, well_eq.fields, sign)
        assert np.allclose(w, prof.c * (1.0 + np.abs(e)) ** (-prof.alpha), rtol=1e-14)
        assert np.all(w > 0.0)
    # weighted norm agrees with the explicit sum
    vals = np.exp(1j * grid.X) * grid.V2
    direct = np.sqrt(np.sum(grid.W * grid.w_plus * np.abs(vals) ** 2))
    assert np.isclose(grid.weighted_norm(vals, +1), direct, rtol=1e-14)
    with pytest.raises(ConfigError):
        grid.norm_weight(0)


# ---------------------------------------------------------------------------
# finite-horizon averages


def test_qt_constant_is_one(well_eq, well_grid):
    one = lambda x, v1, v2: np.ones_like(x)
    s = apply_QT(one, 1.0, well_grid, +1, well_eq.fields, CFG)
    assert s.T == 1.0
    assert s.tail_bound <= CFG.epsilon_tail * (1.0 + 1e-12)
    assert np.max(np.abs(s.values - 1.0)) <= 2e-10


def test_qt_free_streaming_matches_symbol(free_eq, free_grid):
    cfg = replace(CFG, dt=5e-4)
    period = free_eq.fields.period
    symbols = [_character(k, period) for k in (1, 2, 3)]
    vh1, _ = _vhat(free_grid.V1, free_grid.V2)
    worst = 0.0
    for T in (0.1, 1.0, 10.0):
        outs = apply_QT_many(symbols, T, free_grid, +1, free_eq.fields, cfg)
        for k, s in zip((1, 2, 3), outs):
            w = 2.0 * np.pi * k / period
            expected = np.exp(1j * w * free_grid.X) / (1.0 + 1j * w * vh1 * T)
            rel = np.max(np.abs(s.values - expected) / np.abs(expected))
            worst = max(worst, rel)
    assert worst <= 1e-6


def test_qt_fixes_functions_of_invariants(well_eq, well_grid):
    g = _invariant_symbol(well_eq.fields, -1)
    expected = g(well_grid.X, well_grid.V1, well_grid.V2)
    s = apply_QT(g, 0.7, well_grid, -1, well_eq.fields, CFG)
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(s.values - expected)) <= 1e-8 * scale


def test_qt_rejects_bad_horizon(well_eq, well_grid):
    one = lambda x, v1, v2: np.ones_like(x)
    for T in (0.0, -1.0, np.inf, np.nan):
        with pytest.raises(ConfigError):
            apply_QT(one, T, well_grid, +1, well_eq.fields, CFG)


def test_qt_points_free_streaming_off_grid(free_eq):
    # point-cloud variant against the same closed form, at coordinates that
    # lie on no grid, exercising the no-folding full-window path
    cfg = replace(CFG, dt=1e-3)
    period = free_eq.fields.period
    rng = np.random.default_rng(7)
    x = rng.uniform(0.0, period, 12)
    v1 = rng.uniform(-2.0, 2.0, 12)
    v2 = rng.uniform(-2.0, 2.0, 12)
    vh1, _ = _vhat(v1, v2)
    for k, T in ((1, 0.4), (2, 1.3)):
        w = 2.0 * np.pi * k / period
        vals = apply_QT_points(_character(k, period), T, x, v1, v2, +1,
                               free_eq.fields, cfg)
        expected = np.exp(1j * w * x) / (1.0 + 1j * w * vh1 * T)
        assert np.max(np.abs(vals - expected) / np.abs(expected)) <= 1e-5


def test_qt_points_matches_grid_variant_unfolded(well_eq, small_grid):
    # at T = 0.1 the window S_max = 2.3 stays below every orbit period, so
    # the grid variant never folds and both paths do the identical panel sum
    g = _smooth_symbol(well_eq.fields.period)
    grid_out = apply_QT(g, 0.1, small_grid, -1, well_eq.fields, CFG)
    pts = apply_QT_points(g, 0.1, small_grid.X, small_grid.V1, small_grid.V2,
                          -1, well_eq.fields, CFG)
    assert np.array_equal(pts, grid_out.values)


def test_qt_points_rejects_infinite_horizon(well_eq, small_grid):
    one = lambda x, v1, v2: np.ones_like(x)
    with pytest.raises(ConfigError):
        apply_QT_points(one, np.inf, small_grid.X, small_grid.V1,
                        small_grid.V2, +1, well_eq.fields, CFG)


def test_qt_many_matches_single_calls(well_eq, small_grid):
    period = well_eq.fields.period
    g1 = _character(1, period)
    g2 = _smooth_symbol(period)
    outs = apply_QT_many([g1, g2], 0.2, small_grid, +1, well_eq.fields, CFG)
    for g, out in zip((g1, g2), outs):
        single = apply_QT(g, 0.2, small_grid, +1, well_eq.fields, CFG)
        assert np.array_equal(out.values, single.values)


def test_qt_thread_count_invariance(well_eq, small_grid):
    # same chunking, different thread counts: bitwise identical values
    g = _smooth_symbol(well_eq.fields.period)
    base = apply_QT(g, 0.2, small_grid, +1, well_eq.fields, replace(CFG, chunk=17))
    threaded = apply_QT(g, 0.2, small_grid, +1, well_eq.fields,
                        replace(CFG, chunk=17, threads=4))
    assert np.array_equal(base.values, threaded.values)


def test_qt_identity_limit_small_t(well_eq, small_grid):
    g = _smooth_symbol(well_eq.fields.period)
    g0 = g(small_grid.X, small_grid.V1, small_grid.V2)
    errs = []
    for T in (0.2, 0.05, 0.0125):
        s = apply_QT(g, T, small_grid, +1, well_eq.fields, CFG)
        errs.append(small_grid.weighted_norm(s.values - g0, +1))
    # first-order vanishing: each 4x horizon cut should cut the error ~4x
    assert errs[1] <= 0.4 * errs[0]
    assert errs[2] <= 0.4 * errs[1]


def test_qt_lipschitz_in_horizon(well_eq, small_grid):
    g = _smooth_symbol(well_eq.fields.period)
    gn = small_grid.weighted_norm(g(small_grid.X, small_grid.V1, small_grid.V2), +1)
    S = 1.0
    mid = apply_QT(g, S, small_grid, +1, well_eq.fields, CFG)
    for T in (0.5, 2.0):
        other = apply_QT(g, T, small_grid, +1, well_eq.fields, CFG)
        ratio = small_grid.weighted_norm(other.values - mid.values, +1) / abs(T - S)
        assert ratio <= 4.0 * gn


def test_qt_converges_to_orbit_average(well_eq, small_grid):
    cfg = replace(CFG, dt=5e-3)
    table = orbit_summary(small_grid, +1, well_eq.fields, cfg)
    assert table.found.all()
    g = _smooth_symbol(well_eq.fields.period)
    limit = apply_Qinf(g, small_grid, +1, well_eq.fields, cfg)
    errs = []
    for T in (10.0, 1e2, 1e3, 1e4):
        s = apply_QT(g, T, small_grid, +1, well_eq.fields, cfg)
        errs.append(small_grid.weighted_norm(s.values - limit.values, +1))
    for a, b in zip(errs, errs[1:]):
        assert b <= 1.05 * a
    assert errs[-1] <= 1e-2 * errs[0]


def test_tail_bound_honesty(free_eq, free_grid):
    # horizon chosen so both truncation windows stay below every orbit
    # period (at least 2 pi / max |vhat1| = 6.8 here): the two runs then
    # share their panel sequence and differ by pure tail mass
    g = _character(1, free_eq.fields.period)
    s1 = apply_QT(g, 0.1, free_grid, +1, free_eq.fields, CFG)
    # squaring epsilon doubles the truncation window
    doubled = replace(CFG, epsilon_tail=CFG.epsilon_tail ** 2)
    s2 = apply_QT(g, 0.1, free_grid, +1, free_eq.fields, doubled)
    assert np.max(np.abs(s2.values - s1.values)) <= s1.tail_bound + 1e-15


def test_qt_propagates_drift_budget(well_eq, small_grid):
    g = _smooth_symbol(well_eq.fields.period)
    cfg = replace(CFG, dt=0.5, drift_tol=1e-16)
    with pytest.raises(DriftExceeded):
        apply_QT(g, 0.05, small_grid, +1, well_eq.fields, cfg)


# ---------------------------------------------------------------------------
# the infinite-horizon projection


def test_qinf_fixes_functions_of_invariants(well_eq, well_grid):
    g = _invariant_symbol(well_eq.fields, +1)
    expected = g(well_grid.X, well_grid.V1, well_grid.V2)
    s = apply_Qinf(g, well_grid, +1, well_eq.fields, CFG)
    assert np.isinf(s.T)
    assert s.tail_bound == 0.0
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(s.values - expected)) <= 1e-8 * scale


def test_qinf_free_streaming_characters_vanish(free_eq, free_grid):
    vh1, _ = _vhat(free_grid.V1, free_grid.V2)
    assert np.min(np.abs(vh1)) > 0.05
    s = apply_Qinf(_character(2, free_eq.fields.period), free_grid, +1,
                   free_eq.fields, CFG)
    assert np.max(np.abs(s.values)) <= 1e-8


def test_qinf_parity_odd_in_v1(well_eq, well_grid):
    # time reversal maps the orbit of (x, -v1, v2) onto the orbit of
    # (x, v1, v2), so the orbit average of an odd-in-v1 symbol is odd
    table = orbit_summary(well_grid, +1, well_eq.fields, CFG)
    assert table.found.all()
    g = lambda x, v1, v2: _vhat(v1, v2)[0]
    s = apply_Qinf(g, well_grid, +1, well_eq.fields, CFG)
    nx, nv = well_grid.x.size, QUAD_WELL.nv
    vals = s.values.reshape(nx, nv, nv)
    assert np.max(np.abs(vals + vals[:, ::-1, :])) <= 1e-7


def test_qinf_fallback_records_substitution(well_eq, small_grid):
    # a horizon below every return time forces the substitute average
    cfg = replace(CFG, orbit_horizon=5.0, fallback_horizon=30.0)
    g = _invariant_symbol(well_eq.fields, +1)
    expected = g(small_grid.X, small_grid.V1, small_grid.V2)
    s = apply_Qinf(g, small_grid, +1, well_eq.fields, cfg)
    assert s.fallback is not None and s.fallback.any()
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(s.values - expected)) <= 1e-6 * scale


# ---------------------------------------------------------------------------
# operator norm probes


def test_norm_probe_zero_fields_tight(free_eq, free_grid):
    cfg = replace(CFG, dt=5e-4)
    r = qt_operator_norm_probe(1.0, free_grid, +1, free_eq.fields, trials=8,
                               cfg=cfg, k_max=3, seed=1)
    assert r <= 1.0 + 1e-6


def test_norm_probe_magnetized_slack(well_eq, well_grid):
    r = qt_operator_norm_probe(1.0, well_grid, -1, well_eq.fields, trials=20,
                               cfg=CFG, k_max=2, seed=2)
    assert r <= 1.0 + 5e-3


def test_norm_probe_validates_degree(well_eq, well_grid):
    with pytest.raises(ConfigError):
        qt_operator_norm_probe(1.0, well_grid, +1, well_eq.fields, trials=2,
                               cfg=CFG, k_max=3, seed=0)
    with pytest.raises(ConfigError):
        qt_operator_norm_probe(1.0, well_grid, +1, well_eq.fields, trials=0,
                               cfg=CFG, k_max=2, seed=0)


# ---------------------------------------------------------------------------
# diagnostics


def test_averaged_csv_dump(tmp_path, well_eq, small_grid):
    g = _smooth_symbol(well_eq.fields.period)
    s = apply_QT(g, 0.1, small_grid, +1, well_eq.fields, CFG)
    path = tmp_path / "averages.csv"
    rows = dump_averaged_csv(path, small_grid, s)
    assert rows == small_grid.size
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert set(data.dtype.names) == {"x", "v1", "v2", "value_re", "value_im"}
    assert np.array_equal(data["x"], small_grid.X)
    assert np.array_equal(data["value_re"] + 1j * data["value_im"], s.values)


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=12, deadline=None)
@given(coeffs=st.lists(st.floats(-2.0, 2.0, allow_nan=False), min_size=6, max_size=6),
       scale=st.floats(-3.0, 3.0, allow_nan=False))
def test_qt_linear_and_contractive(well_eq, small_grid, coeffs, scale):
    period = well_eq.fields.period
    w = 2.0 * np.pi / period

    def g1(x, v1, v2):
        vh1, vh2 = _vhat(v1, v2)
        return (coeffs[0] + coeffs[1] * np.cos(w * x) + coeffs[2] * np.sin(w * x)
                + coeffs[3] * vh1 + coeffs[4] * vh2 * np.cos(w * x))

    def g2(x, v1, v2):
        return coeffs[5] * np.sin(w * x) * _vhat(v1, v2)[1]

    def combo(x, v1, v2):
        return scale * g1(x, v1, v2) + g2(x, v1, v2)

    outs = apply_QT_many([g1, g2, combo], 0.05, small_grid, +1, well_eq.fields, CFG)
    lin = scale * outs[0].values + outs[1].values
    ref = max(np.max(np.abs(lin)), 1.0)
    assert np.max(np.abs(outs[2].values - lin)) <= 1e-12 * ref

    gn = small_grid.weighted_norm(g1(small_grid.X, small_grid.V1, small_grid.V2), +1)
    if gn > 1e-9:
        assert small_grid.weighted_norm(outs[0].values, +1) <= (1.0 + 5e-3) * gn
