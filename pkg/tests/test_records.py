import math

import numpy as np
import pytest

from entangletraj.records import (
    CurrentRecord, RecordMismatch, _homodyne_det, generic_record_step, homodyne_currents,
    optimal_record_step, read_record_csv, reconstruct_Y, record_trajectory, replay_from_record,
    shot_noise_from_increments, write_record_csv,
)
from entangletraj.sse import SseConfig
from entangletraj.states import PRESETS, make_state
from entangletraj.unraveling import ZERO, CorrelationMatrix, optimal_unraveling

from conftest import random_state

SOLID = PRESETS["fig1-solid"]
SOLID_OPT = optimal_unraveling(SOLID)


def test_basis_states_give_pure_noise():
    d = np.array([0.01 + 0.02j, -0.03j])
    for amps in ([1, 0, 0, 0], [0, 0, 0, 1]):
        np.testing.assert_allclose(optimal_record_step(make_state(amps), d, 0.4, 1.0, 1e-3), d,
                                   atol=1e-18)
    z = np.array([0.01, -0.02])
    np.testing.assert_allclose(homodyne_currents(make_state([1, 0, 0, 0]), z, 0.4, 1.0, 1e-3), z)


def test_explicit_and_generic_record_forms_agree():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        psi = random_state(rng)
        theta = rng.uniform(-np.pi, np.pi)
        dxi = (rng.normal(size=2) + 1j * rng.normal(size=2)) * 0.03
        a = optimal_record_step(psi, dxi, theta, 0.8, 1e-3)
        b = generic_record_step(psi, dxi, CorrelationMatrix.off_diagonal(theta), 0.8, 1e-3)
        worst = max(worst, np.max(np.abs(a - b)))
    assert worst < 1e-12


def test_homodyne_deterministic_parts_reconstruct_record():
    rng = np.random.default_rng(1)
    for _ in range(100):
        psi = random_state(rng)
        theta = rng.uniform(-np.pi, np.pi)
        y_det = optimal_record_step(psi, np.zeros(2), theta, 1.0, 1.0)
        i_det = _homodyne_det(psi, theta, 1.0)
        np.testing.assert_allclose(reconstruct_Y(i_det, theta), y_det, atol=1e-12)


def test_reconstruct_plug_in_values():
    theta = 0.7
    y = reconstruct_Y(np.array([math.sqrt(2), 0.0]), theta)
    np.testing.assert_allclose(y, [1.0, -np.exp(1j * theta)], atol=1e-15)
    np.testing.assert_array_equal(reconstruct_Y(np.zeros((3, 2)), theta), 0)


def test_reconstruction_preserves_squared_norm():
    rng = np.random.default_rng(2)
    I = rng.normal(size=(50, 2))
    Y = reconstruct_Y(I, 1.1)
    np.testing.assert_allclose((np.abs(Y) ** 2).sum(axis=1), (I ** 2).sum(axis=1), rtol=1e-14)


def test_record_roundtrip_and_replay():
    cfg = SseConfig(u=SOLID_OPT.u, dt=1e-3, t_max=7.0, seed=11)
    traj, rec = record_trajectory(SOLID, cfg)
    assert len(rec) == 7000
    assert np.max(np.abs(reconstruct_Y(rec.I, rec.theta_opt) - rec.Y)) < 1e-12
    for source in ("Y", "I"):
        rep = replay_from_record(SOLID, rec, cfg.replace(state_stride=1), source=source)
        assert np.max(np.abs(rep.states - traj.states)) < 1e-8


def test_replay_is_idempotent():
    cfg = SseConfig(u=SOLID_OPT.u, t_max=1.0, seed=3, state_stride=1)
    _, rec = record_trajectory(SOLID, cfg)
    first = replay_from_record(SOLID, rec, cfg)
    again = CurrentRecord(rec.times, first.currents, rec.I, rec.theta_opt, rec.gamma, rec.dt)
    second = replay_from_record(SOLID, again, cfg)
    np.testing.assert_array_equal(first.states, second.states)


def test_replay_with_wrong_initial_state_departs():
    cfg = SseConfig(u=SOLID_OPT.u, t_max=1.0, seed=5, state_stride=1)
    traj, rec = record_trajectory(SOLID, cfg)
    wrong = replay_from_record(PRESETS["fig1-dashed"], rec, cfg)
    assert np.linalg.norm(wrong.states[-1] - traj.states[-1]) > 0.1


def test_dark_record_replays_to_dark_state():
    cfg = SseConfig(u=CorrelationMatrix.off_diagonal(0.0), t_max=0.5, seed=1)
    dark = make_state([1, 0, 0, 0])
    traj, rec = record_trajectory(dark, cfg)
    np.testing.assert_allclose(rec.Y, traj.increments)  # pure noise
    rep = replay_from_record(dark, rec, cfg)
    np.testing.assert_allclose(np.abs(rep.states[:, 0]), 1.0, atol=1e-15)
    # variance dt per component of the complex noise pair
    assert abs(np.mean(np.abs(rec.Y[:, 0]) ** 2) / cfg.dt - 1) < 0.2


def test_mismatch_detected():
    cfg = SseConfig(u=SOLID_OPT.u, t_max=0.2, seed=1)
    _, rec = record_trajectory(SOLID, cfg)
    with pytest.raises(RecordMismatch, match="record/config mismatch"):
        replay_from_record(SOLID, rec, cfg.replace(dt=2e-3))
    with pytest.raises(RecordMismatch):
        replay_from_record(SOLID, rec, cfg.replace(u=CorrelationMatrix.off_diagonal(0.3)))
    with pytest.raises(RecordMismatch):
        replay_from_record(SOLID, rec, cfg.replace(u=ZERO))
    shifted = CurrentRecord(rec.times + 0.5, rec.Y, rec.I, rec.theta_opt, rec.gamma, rec.dt)
    with pytest.raises(RecordMismatch):
        replay_from_record(SOLID, shifted, cfg)


def test_record_needs_optimal_form():
    with pytest.raises(ValueError):
        record_trajectory(SOLID, SseConfig(u=ZERO, t_max=0.1))


def test_record_mean_equals_deterministic_part():
    u = SOLID_OPT.u
    dt, n = 1e-3, 20000
    cfg = SseConfig(u=u, t_max=dt, seed=0)
    ys = np.array([record_trajectory(SOLID, cfg.replace(seed=s))[1].Y[0] for s in range(2000)])
    det = generic_record_step(np.asarray(SOLID), np.zeros(2), u, 1.0, dt)
    se = np.sqrt(dt / len(ys))
    assert np.all(np.abs(ys.mean(axis=0) - det) < 4 * se * math.sqrt(2))
    del n


def test_shot_noise_statistics():
    from entangletraj.noise import NoiseGenerator
    dt = 1e-3
    x = NoiseGenerator(SOLID_OPT.u, 4).sample(dt, 200_000)
    z = shot_noise_from_increments(x)
    se = math.sqrt(2 / len(z))
    assert abs(z[:, 0].var() / dt - 1) < 4 * se
    assert abs(z[:, 1].var() / dt - 1) < 4 * se
    assert abs(np.mean(z[:, 0] * z[:, 1]) / dt) < 4 / math.sqrt(len(z))


def test_csv_roundtrip_is_exact(tmp_path):
    cfg = SseConfig(u=SOLID_OPT.u, t_max=0.3, seed=2)
    _, rec = record_trajectory(SOLID, cfg)
    path = tmp_path / "rec.csv"
    write_record_csv(path, rec, {"note": "x"})
    back = read_record_csv(path)
    np.testing.assert_array_equal(back.Y, rec.Y)
    np.testing.assert_array_equal(back.I, rec.I)
    np.testing.assert_array_equal(back.times, rec.times)
    assert back.theta_opt == rec.theta_opt and back.dt == rec.dt and back.seed == 2
    np.testing.assert_array_equal(np.asarray(back.psi0), np.asarray(rec.psi0))
    # replay from the file is as good as from memory
    rep = replay_from_record(back.psi0, back, cfg)
    ref = replay_from_record(SOLID, rec, cfg)
    np.testing.assert_array_equal(rep.states, ref.states)
