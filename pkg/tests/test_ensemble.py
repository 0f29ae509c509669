import math

import numpy as np
import pytest

from entangletraj import ensemble, sse
from entangletraj.ensemble import (
    EnsembleConfig, compare_psi11, compare_to_analytic, compare_to_master, optimality_scan,
    run_ensemble,
)
from entangletraj.oracle import MasterEvolution
from entangletraj.sse import SseConfig, StepDivergence
from entangletraj.states import PRESETS, DensityMatrix, make_state
from entangletraj.unraveling import ZERO, optimal_unraveling

SOLID_U = optimal_unraveling(PRESETS["fig1-solid"]).u


def _fields(st):
    return [st.mean_c, st.se_c, st.mean_psi11sq, st.se_psi11sq, st.theta_circ_mean,
            st.theta_circ_std, st.mean_rho, st.rho_se]


def test_config_validation():
    base = SseConfig(t_max=1.0)
    with pytest.raises(ValueError, match="n_traj"):
        EnsembleConfig(base, 1)
    with pytest.raises(ValueError, match="outside"):
        EnsembleConfig(base, 10, stat_times=(2.0,))


def test_dark_state_has_zero_mean_and_variance():
    st = run_ensemble(make_state([1, 0, 0, 0]), EnsembleConfig(SseConfig(t_max=0.2), 20))
    assert np.all(st.mean_c == 0) and np.all(st.se_c == 0)


def test_schedule_independence():
    cfg = EnsembleConfig(SseConfig(u=SOLID_U, t_max=0.5, seed=3), 300,
                         stat_times=(0.0, 0.1, 0.25, 0.5), checkpoints=(0.5,), diagnostics=True)
    one = run_ensemble(PRESETS["fig1-solid"], cfg)
    two = run_ensemble(PRESETS["fig1-solid"], EnsembleConfig(**{**cfg.__dict__, "jobs": 2}))
    for a, b in zip(_fields(one), _fields(two)):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(one.diagnostics.theta_std_before, two.diagnostics.theta_std_before)


def test_chunk_size_does_not_matter(monkeypatch):
    cfg = EnsembleConfig(SseConfig(u=ZERO, t_max=0.3, seed=8), 40, checkpoints=(0.3,))
    ref = run_ensemble(PRESETS["fig1-dashed"], cfg)
    monkeypatch.setattr(ensemble, "CHUNK", 7)
    again = run_ensemble(PRESETS["fig1-dashed"], cfg)
    for a, b in zip(_fields(ref), _fields(again)):
        np.testing.assert_array_equal(a, b)


def test_standard_error_scales_with_sqrt_n():
    base = SseConfig(u=SOLID_U, t_max=0.5, seed=5)
    se = [run_ensemble(PRESETS["fig1-solid"], EnsembleConfig(base, n, stat_times=(0.5,))).se_c[0]
          for n in (125, 500, 2000)]
    for lo, hi in zip(se[:-1], se[1:]):
        assert 1.6 < lo / hi < 2.4


def test_mean_density_matrix_is_valid_and_matches_master():
    cfg = EnsembleConfig(SseConfig(u=SOLID_U, t_max=1.0, seed=2), 400, checkpoints=(0.5, 1.0))
    st = run_ensemble(PRESETS["fig1-solid"], cfg)
    for m in st.mean_rho:
        DensityMatrix(m).check(1e-6)
    assert compare_to_master(st, MasterEvolution()).passed


def test_two_trajectories_pass_on_error_consistency():
    cfg = EnsembleConfig(SseConfig(u=SOLID_U, t_max=1.0, seed=0), 2, checkpoints=(1.0,))
    rep = compare_to_master(run_ensemble(PRESETS["fig1-solid"], cfg), MasterEvolution())
    assert rep.stat_error[0] > 0.05
    assert rep.passed


def test_no_checkpoints_is_an_error():
    st = run_ensemble(PRESETS["bell"], EnsembleConfig(SseConfig(t_max=0.1), 4))
    with pytest.raises(ValueError):
        compare_to_master(st, MasterEvolution())


def test_excited_state_population_decay():
    cfg = EnsembleConfig(SseConfig(u=ZERO, t_max=2.0, seed=6), 500,
                         stat_times=tuple(np.linspace(0, 2, 21)))
    st = run_ensemble(make_state([0, 0, 0, 1]), cfg)
    assert compare_psi11(st).passed


def test_dashed_mean_concurrence_with_gaussian_increments():
    u = optimal_unraveling(PRESETS["fig1-dashed"]).u
    p = (np.arange(1, 51) - 0.5) / 50
    times = tuple(np.rint(-np.log1p(-p) / 1e-3) * 1e-3)
    st = run_ensemble(PRESETS["fig1-dashed"],
                      EnsembleConfig(SseConfig(u=u, seed=2026), 500, stat_times=times))
    assert compare_to_analytic(st).passed


def test_scan_orders_phases():
    theta = -math.pi / 2
    phases = [theta, theta + math.pi / 2, theta + math.pi]
    cfg = EnsembleConfig(SseConfig(t_max=3.0, seed=4), 100, stat_times=tuple(np.linspace(0, 3, 31)))
    rows = optimality_scan(PRESETS["fig1-solid"], phases, cfg)
    ints = [r.integrated for r in rows]
    assert int(np.argmin(ints)) == 0
    opt, flip = rows[0].stats, rows[2].stats
    assert np.all(flip.mean_c[1:] > opt.mean_c[1:])
    # E|psi11|^2 does not depend on the unraveling
    for r in rows[1:]:
        se = np.hypot(r.stats.se_psi11sq, opt.se_psi11sq)
        assert np.all(np.abs(r.stats.mean_psi11sq - opt.mean_psi11sq) <= 4 * se + 1e-12)


def test_scan_needs_three_phases():
    cfg = EnsembleConfig(SseConfig(t_max=0.1), 2)
    with pytest.raises(ValueError):
        optimality_scan(PRESETS["fig1-solid"], [0.0, 1.0], cfg)


def test_divergence_aborts_with_index(monkeypatch):
    def broken(psi, dxi, gamma, dt, hamiltonian=None):
        out = psi.copy()
        out[-1] = np.nan
        return out

    monkeypatch.setattr(sse, "step_batch", broken)
    cfg = EnsembleConfig(SseConfig(t_max=0.01, seed=12), 5)
    with pytest.raises(StepDivergence, match=r"trajectory 4, seed 12"):
        run_ensemble(PRESETS["bell"], cfg)
