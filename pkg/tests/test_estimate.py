import numpy as np
import pytest

from floatgnc.estimate import (
    LIN, ROT, Estimate, KfConfig, Measurement, Observer, initial_estimate, kf_predict, kf_update,
    kf_update_linear, lie_kf_update,
)
from floatgnc.model import NU, NX, PlatformParams, wrap_angle
from oracles import I_W, chi2_band

P = PlatformParams()
SIG2 = np.array([1e-5, 1e-5, 1e-5, 1e-4])   # x, y, theta, omega_rw


def est_from(mean, P_diag):
    P_diag = np.asarray(P_diag, dtype=float)
    return Estimate(np.asarray(mean, dtype=float), np.diag(P_diag[LIN]), np.diag(P_diag[ROT]))


def meas_of(x, noise=np.zeros(4), valid=(True,) * 4):
    return Measurement(x[0] + noise[0], x[1] + noise[1], float(wrap_angle(x[2] + noise[2])),
                       x[6] + noise[3], valid)


# -- predict ----------------------------------------------------------------

def test_predict_without_noise_keeps_static_covariance():
    cfg = KfConfig(Q=np.zeros(NX))
    est = Estimate(np.zeros(NX), np.diag([1e-2, 1e-2, 0, 0, 1e-2]), np.diag([1e-2, 0.0]))
    out = kf_predict(est, np.zeros(NU), 0.01, P, cfg)
    assert np.array_equal(out.covariance, est.covariance)
    assert np.array_equal(out.mean, est.mean)


def test_predict_coasting():
    x = np.zeros(NX)
    x[3] = 0.1
    est = est_from(x, np.full(NX, 1e-3))
    for _ in range(100):
        est = kf_predict(est, np.zeros(NU), 0.01, P)
    assert est.mean[0] == pytest.approx(0.1, abs=1e-12)


def test_predict_wheel_torque():
    est = est_from(np.zeros(NX), np.full(NX, 1e-3))
    out = kf_predict(est, np.r_[0.1, np.zeros(8)], 0.01, P)
    assert out.mean[6] == pytest.approx(0.1 / I_W * 0.01, rel=1e-12)
    assert out.mean[6] == pytest.approx(0.02128, abs=1e-5)


def test_predict_rejects_bad_dt():
    est = est_from(np.zeros(NX), np.full(NX, 1e-3))
    with pytest.raises(ValueError):
        kf_predict(est, np.zeros(NU), 0.0, P)


# -- linear update ------------------------------------------------------------

def test_perfect_prior_ignores_measurement():
    x = np.array([0.3, -0.2, 0.1, 0.0, 0.0, 0.0, 2.0])
    est = est_from(x, np.full(NX, 1e-20))
    out, acc = kf_update_linear(est, Measurement(0.30001, -0.20001, 0.1, 2.0001))
    assert all(acc)
    assert np.allclose(out.mean, x, atol=1e-12)


def test_repeated_measurements_shrink_variance():
    sig2 = 1e-5
    cfg = KfConfig(R=[sig2, sig2, sig2, 5e3, 5e3, 5e3, 1e-4], P0=[1e3] * 7)
    est = est_from(np.zeros(NX), cfg.P0)
    rng = np.random.default_rng(0)
    n = 50
    for _ in range(n):
        est, _ = kf_update_linear(est, Measurement(rng.normal(0, np.sqrt(sig2)), 0.0, 0.0, 0.0), cfg)
    exact = 1.0 / (1.0 / 1e3 + n / sig2)
    assert est.P_lin[0, 0] == pytest.approx(exact, rel=1e-9)
    assert est.P_lin[0, 0] == pytest.approx(sig2 / n, rel=1e-6)


def test_outlier_gated():
    est = est_from(np.zeros(NX), np.full(NX, 1e-4))
    cfg = KfConfig()
    s = est.P_lin[0, 0] + cfg.R[0]
    meas = Measurement(10 * np.sqrt(s), 0.0, 0.0, 0.0)
    out, info = kf_update(est, meas, cfg)
    assert out.mean[0] == est.mean[0]
    assert info.accepted == (False, True, True, True)
    assert info.gated == (True, False, False, False)
    assert info.innovation[0] == pytest.approx(10 * np.sqrt(s))


def test_all_invalid_is_predict_only():
    est = est_from(np.ones(NX), np.full(NX, 1e-3))
    out, info = kf_update(est, Measurement(5.0, 5.0, 1.0, 5.0, (False,) * 4))
    assert np.array_equal(out.mean, est.mean)
    assert np.array_equal(out.covariance, est.covariance)
    assert info.accepted == (False,) * 4 and info.gated == (False,) * 4


# -- heading update -----------------------------------------------------------

def test_wrapped_innovation():
    x = np.zeros(NX)
    x[2] = np.pi - 0.01
    est = est_from(x, np.full(NX, 1e-3))
    _, nu, ok = lie_kf_update(est, -np.pi + 0.01)
    assert ok
    assert nu == pytest.approx(0.02, abs=1e-12)


def test_equal_heading_leaves_mean():
    x = np.zeros(NX)
    x[2] = 1.1
    est = est_from(x, np.full(NX, 1e-3))
    out, nu, _ = lie_kf_update(est, 1.1)
    assert nu == 0.0
    assert np.array_equal(out.mean, est.mean)


def test_seam_crossing_is_continuous():
    rate = 0.5
    dt = 0.01
    theta0 = 3.0
    obs = Observer(P)
    prev = None
    errors = []
    n = 3000
    for k in range(n):
        th = theta0 + rate * k * dt
        x = np.zeros(NX)
        x[2] = th
        est = obs.step(meas_of(x), np.zeros(NU), dt)
        if prev is not None:
            assert abs(est.mean[2] - prev) < 0.05
        prev = est.mean[2]
        errors.append(abs(est.mean[2] - th))
        assert -np.pi < est.state[2] <= np.pi
    assert theta0 + rate * (n - 1) * dt > 3 * np.pi  # crossed the seam more than once
    assert max(errors[-500:]) < 1e-6


def test_rotation_equivariance():
    rng = np.random.default_rng(4)
    d = 0.9
    c, s = np.cos(d), np.sin(d)
    R2 = np.array([[c, -s], [s, c]])
    obs_a, obs_b = Observer(P), Observer(P)
    u = np.r_[0.05, 10.0, 0, 0, 0, 10.0, 0, 0, 0]
    # per-axis gating is not rotation invariant, so keep the data consistent
    for k in range(300):
        t = 0.01 * k
        truth = np.r_[0.1 * t, -0.05 * t * t, 2.5 + 0.4 * t, 1.0]
        z = truth + rng.normal(0, np.sqrt(SIG2))
        z[2] = wrap_angle(z[2])
        zr = np.r_[R2 @ z[:2], wrap_angle(z[2] + d), z[3]]
        a = obs_a.step(Measurement(*z), u, 0.01)
        b = obs_b.step(Measurement(*zr), u, 0.01)
    assert np.allclose(b.mean[:2], R2 @ a.mean[:2], atol=1e-9)
    assert np.allclose(b.mean[3:5], R2 @ a.mean[3:5], atol=1e-9)
    assert wrap_angle(b.mean[2] - a.mean[2] - d) == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(b.mean[5:], a.mean[5:], atol=1e-9)


# -- properties ---------------------------------------------------------------

def test_covariance_psd_over_long_random_sequence():
    rng = np.random.default_rng(9)
    cfg = KfConfig()
    est = initial_estimate(Measurement(0.0, 0.0, 0.0, 0.0), cfg)
    worst = np.inf
    for k in range(100_000):
        u = np.r_[rng.uniform(-0.2, 0.2), rng.uniform(0, 10, 8) * (rng.uniform(size=8) < 0.3)]
        est = kf_predict(est, u, rng.uniform(1e-3, 0.05), P, cfg)
        if rng.uniform() < 0.9:
            valid = tuple(rng.uniform(size=4) < 0.9)
            z = est.mean[[0, 1, 2, 6]] + rng.normal(0, 0.01, 4) * np.where(rng.uniform() < 0.01, 1e3, 1)
            est, _ = kf_update(est, Measurement(z[0], z[1], float(wrap_angle(z[2])), z[3], valid), cfg)
        if k % 100 == 0:
            C = est.covariance
            assert np.array_equal(C, C.T)
            worst = min(worst, np.linalg.eigvalsh(C)[0])
    assert worst >= -1e-10


def test_nees_consistent_with_matched_noise():
    q = np.array([0.1] * 6 + [1.0])
    r = np.array([SIG2[0], SIG2[1], SIG2[2], 5e3, 5e3, 5e3, SIG2[3]])
    p0 = np.array([SIG2[0], SIG2[1], SIG2[2], 0.1, 0.1, 0.1, SIG2[3]])
    cfg = KfConfig(Q=q, R=r, P0=p0)
    dt, steps, runs = 0.01, 300, 100
    rng = np.random.default_rng(2024)
    nees = np.zeros((runs, steps))
    for i in range(runs):
        x = np.zeros(NX)
        x[3:6] = rng.normal(0, np.sqrt(0.1), 3)
        x[6] = rng.normal(0, 1.0)
        est = initial_estimate(meas_of(x, rng.normal(0, np.sqrt(SIG2))), cfg)
        # the initial pose error is the measurement noise and the velocity error the prior draw
        for k in range(steps):
            x = x.copy()
            x[0:3] += x[3:6] * dt
            x += rng.normal(0, np.sqrt(q * dt))
            est = kf_predict(est, np.zeros(NU), dt, P, cfg)
            est, _ = kf_update(est, meas_of(x, rng.normal(0, np.sqrt(SIG2))), cfg)
            e = est.mean - x
            e[2] = wrap_angle(e[2])
            nees[i, k] = e @ np.linalg.solve(est.covariance, e)
    lo, hi = chi2_band(NX, runs)
    avg = nees.mean(axis=0)
    inside = np.mean((avg >= lo) & (avg <= hi))
    assert inside >= 0.90, (inside, lo, hi, avg.mean())


def test_velocity_beats_finite_difference():
    rng = np.random.default_rng(1)
    dt = 0.01
    t = np.arange(0, 60, dt)
    xs = 0.5 * np.sin(0.2 * t)
    vs = 0.1 * np.cos(0.2 * t)
    obs = Observer(P)
    v_est = []
    z = []
    for k, tk in enumerate(t):
        x = np.zeros(NX)
        x[0] = xs[k]
        noise = rng.normal(0, np.sqrt(SIG2))
        z.append(xs[k] + noise[0])
        v_est.append(obs.step(meas_of(x, noise), np.zeros(NU), dt).mean[3])
    v_est = np.array(v_est)[1:]
    v_fd = np.diff(z) / dt
    skip = 500
    rms_kf = np.sqrt(np.mean((v_est[skip:] - vs[1:][skip:]) ** 2))
    rms_fd = np.sqrt(np.mean((v_fd[skip:] - vs[1:][skip:]) ** 2))
    assert rms_kf < rms_fd


def test_config_validation_and_roundtrip():
    cfg = KfConfig()
    assert np.array_equal(cfg.Q, np.r_[np.full(6, 0.1), 1.0])
    assert np.array_equal(KfConfig.from_dict(cfg.to_dict()).R, cfg.R)
    with pytest.raises(ValueError):
        KfConfig(R=np.zeros(NX))
    with pytest.raises(ValueError):
        KfConfig(Q=np.ones(6))
    with pytest.raises(ValueError):
        KfConfig.from_dict({"Qkf": [1] * 7})
    with pytest.raises(ValueError):
        Measurement(0, 0, 0, 0, valid=(True,))
