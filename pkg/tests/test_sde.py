import numpy as np
import pytest

from kineticflow import covariance, sde, stats
from kineticflow._rng import derive_stream_seed, mix64, GOLDEN, stream_keys
from kineticflow.errors import DegenerateNormError, InvalidStepError, StepFailureError


def unit(n, i=0):
    v = np.zeros(n)
    v[i] = 1.0
    return v


class TestVelocityStep:
    def test_sigma_zero_frozen(self, iso4):
        v = unit(4)
        out = sde.velocity_step(v, iso4, 0.0, 1e-3, np.zeros(4))
        np.testing.assert_allclose(out, v)

    def test_radial_drift_killed_by_renormalization(self, iso4):
        v = unit(4, 2)
        out = sde.velocity_step(v, iso4, 1.0, 1e-3, np.zeros(4))
        np.testing.assert_allclose(out, v, atol=1e-15)

    def test_zero_intermediate_raises(self):
        spec = covariance.isotropic_spectrum(3)
        # drift factor 1 - (d-1) dt / 2 vanishes at dt = 1 for d = 3
        with pytest.raises(StepFailureError):
            sde.velocity_step(unit(3), spec, 1.0, 1.0, np.zeros(3))

    def test_invalid_dt(self, iso4):
        with pytest.raises(InvalidStepError):
            sde.velocity_step(unit(4), iso4, 1.0, -0.1, np.zeros(4))


class TestVelocitySimulation:
    def test_sigma_zero_constant(self, iso4):
        traj = sde.simulate_velocity(unit(4), iso4, 0.0, 1.0, 1e-2, seed=0)
        np.testing.assert_array_equal(traj.v, np.tile(unit(4), (len(traj.times), 1)))

    def test_norm_drift_many_steps(self, iso4):
        traj = sde.simulate_velocity(unit(4), iso4, 1.0, 100.0, 1e-4, seed=1, save_stride=10_000)
        assert traj.max_norm_drift() <= 1e-10

    def test_spherical_autocorrelation(self, iso4):
        """Mean (v_0, v_t) against the closed form exp(-(d-1) t / 2), d = 4.

        The closed form is cross-checked below by a fine-step reference run.
        """
        R, T, dt = 10_000, 2.0, 1e-3
        v0s = np.tile(unit(4), (R, 1))
        times, V = sde.simulate_velocity_ensemble(v0s, iso4, 1.0, T, dt, 11, save_stride=200)
        emp = (V @ unit(4)).mean(axis=0)
        se = (V @ unit(4)).std(axis=0, ddof=1) / np.sqrt(R)
        ref = np.exp(-1.5 * times)
        assert (np.abs(emp - ref) < 4 * se + 2e-3).all()

    def test_weak_order_dt_halving(self, iso4):
        """Halving dt moves the autocorrelation curve less than the MC band."""
        R, T = 4000, 1.0
        v0s = np.tile(unit(4), (R, 1))
        t1, V1 = sde.simulate_velocity_ensemble(v0s, iso4, 1.0, T, 2e-3, 13, save_stride=250)
        t2, V2 = sde.simulate_velocity_ensemble(v0s, iso4, 1.0, T, 1e-3, 13, save_stride=500)
        np.testing.assert_allclose(t1, t2)
        e1 = (V1 @ unit(4)).mean(axis=0)
        e2 = (V2 @ unit(4)).mean(axis=0)
        band = (V2 @ unit(4)).std(axis=0, ddof=1) / np.sqrt(R)
        assert (np.abs(e1 - e2) < 4 * band + 1e-3).all()

    def test_time_change_invariance(self, iso4):
        """Speed-sigma on [0, T] matches speed-1 on [0, sigma^2 T] in law."""
        R, T, sig = 8000, 0.5, 2.0
        v0s = np.tile(unit(4), (R, 1))
        n1 = int(round(T / 1e-3))
        chk1 = np.array([n1 // 4, n1 // 2, n1], dtype=np.int64)
        _, Va = sde.simulate_velocity_ensemble(v0s, iso4, sig, T, 1e-3, 17, chk_idx=chk1)
        n2 = int(round(sig**2 * T / 1e-3))
        chk2 = np.array([n2 // 4, n2 // 2, n2], dtype=np.int64)
        _, Vb = sde.simulate_velocity_ensemble(v0s, iso4, 1.0, sig**2 * T, 1e-3, 19, chk_idx=chk2)
        for j in range(3):
            r = stats.ks_statistic(Va[:, j, 0], Vb[:, j, 0])
            assert r.passed, f"time-change KS failed at checkpoint {j}: {r}"

    def test_long_run_matches_invariant_oracle(self):
        spec = covariance.isotropic_spectrum(3, np.array([1.0, 0.7, 0.4]))
        R = 6000
        v0s = np.tile(unit(3), (R, 1))
        T = 12.0
        _, V = sde.simulate_velocity_ensemble(
            v0s, spec, 1.0, T, 1e-3, 23, save_stride=int(T / 1e-3)
        )
        oracle = stats.sample_invariant_oracle(spec, 100_000, np.random.default_rng(5))
        r = stats.ks_statistic(oracle.points[:, 0], V[:, -1, 0], w_a=oracle.weights)
        assert r.passed, r


class TestPosition:
    def test_sigma_zero_straight_line(self, iso4):
        x0 = np.array([0.5, 0.0, -1.0, 2.0])
        traj = sde.simulate_position(unit(4), x0, iso4, 0.0, 1.0, 1e-2, seed=2)
        want = x0 + traj.times[:, None] * unit(4)
        np.testing.assert_allclose(traj.x, want, atol=1e-13)

    def test_position_is_velocity_integral(self, iso4):
        traj = sde.simulate_position(unit(4), np.zeros(4), iso4, 1.0, 1.0, 1e-3, seed=3)
        dt = np.diff(traj.times)[:, None]
        want = np.cumsum(0.5 * dt * (traj.v[:-1] + traj.v[1:]), axis=0)
        np.testing.assert_allclose(traj.x[1:], want, atol=1e-12)

    def test_speed_bound_rescaled(self, iso4):
        ens = sde.rescaled_position_ensemble(
            iso4, 2.0, 50, 29, 1e-3, np.linspace(0, 1, 9)
        )
        for a in range(len(ens.times)):
            for b in range(a + 1, len(ens.times)):
                norms = np.linalg.norm(ens.x[:, b] - ens.x[:, a], axis=1)
                assert (norms <= 2.0**2 * (ens.times[b] - ens.times[a]) + 1e-12).all()

    def test_homogenized_variance_sigma4(self, iso4):
        """Var of each component of X^sigma_1 approaches 4/(d(d-1)) = 1/3."""
        rng = np.random.default_rng(31)
        v0s = rng.standard_normal((600, 4))
        v0s /= np.linalg.norm(v0s, axis=1, keepdims=True)
        ens = sde.rescaled_position_ensemble(
            iso4, 4.0, 600, 37, 5e-3, [0.0, 1.0], v0s=v0s, with_level2=False
        )
        var = ens.x[:, -1, :].var(axis=0, ddof=1)
        assert (np.abs(var - 1.0 / 3.0) < 0.25 / 3.0).all()

    def test_moment_ratio_bounded_over_sigma(self, iso4):
        """E|X_t - X_s|^4 / (t-s)^2 stays bounded across sigma (small grid)."""
        ratios = []
        for si, sig in enumerate((1.0, 2.0, 4.0)):
            ens = sde.rescaled_position_ensemble(
                iso4, sig, 400, 41 + si, 5e-3, [0.0, 0.5, 1.0], with_level2=False
            )
            for a, b in ((0, 1), (1, 2), (0, 2)):
                d4 = (np.linalg.norm(ens.x[:, b] - ens.x[:, a], axis=1) ** 4).mean()
                ratios.append(d4 / (ens.times[b] - ens.times[a]) ** 2)
        assert max(ratios) < 10.0  # uniform bound at unit-trace scale


class TestLift:
    def test_sigma_zero_constant(self, iso4):
        u0 = np.array([0.3, -0.2, 0.9, 0.1])
        _, u = sde.simulate_lift(u0, iso4, 0.0, 0.5, 1e-2, seed=5)
        np.testing.assert_array_equal(u, np.tile(u0, (len(u), 1)))

    def test_zero_start_rejected(self, iso4):
        with pytest.raises(DegenerateNormError):
            sde.simulate_lift(np.zeros(4), iso4, 1.0, 0.5, 1e-2, seed=5)

    def test_norm_floor_degeneracy(self, iso4):
        with pytest.raises(DegenerateNormError):
            sde.simulate_lift(1e-9 * unit(4), iso4, 1.0, 0.1, 1e-3, seed=5)

    def test_projected_lift_matches_velocity_law(self):
        spec = covariance.isotropic_spectrum(3, np.array([1.0, 0.7, 0.4]))
        R, T, dt = 8000, 1.0, 1e-3
        u0s = np.tile(unit(3), (R, 1))
        _, U = sde.simulate_lift_ensemble(u0s, spec, 1.0, T, dt, 43, save_stride=1000)
        proj = U[:, -1, :] / np.linalg.norm(U[:, -1, :], axis=1, keepdims=True)
        _, V = sde.simulate_velocity_ensemble(u0s, spec, 1.0, T, dt, 47, save_stride=1000)
        r = stats.ks_statistic(proj[:, 0], V[:, -1, 0])
        assert r.passed, r

    def test_isotropic_norm_equilibrates(self, iso4):
        """E|u_t|^2 settles at the invariant value E_gamma|u| / E_gamma|u|^{-1} = 3."""
        R = 4000
        u0s = np.tile(unit(4), (R, 1))
        _, U = sde.simulate_lift_ensemble(u0s, iso4, 1.0, 6.0, 1e-3, 53, save_stride=2000)
        sq = (U[:, -1, :] ** 2).sum(axis=1)
        se = sq.std(ddof=1) / np.sqrt(R)
        assert abs(sq.mean() - 3.0) < 5 * se


class TestCoupledPair:
    def test_equal_start_stays_equal(self, iso4):
        pair = sde.simulate_coupled_pair(unit(4), unit(4), iso4, 1.0, 1e-3, seed=7)
        assert np.abs(pair.n_t).max() < 1e-13

    def test_antipodal_start(self, iso4):
        pair = sde.simulate_coupled_pair(unit(4), -unit(4), iso4, 2.0, 1e-3, seed=8, save_stride=100)
        assert pair.n_t[0, 0] == pytest.approx(2.0)
        assert pair.n_t[0, -1] < 2.0

    def test_half_squared_distance_identity(self, iso4):
        """N_t = 1 - (v, w) equals |w - v|^2 / 2 on the recorded states."""
        rng = np.random.default_rng(71)
        v, w = unit(4, 0), unit(4, 1)
        for _ in range(200):
            dW = covariance.brownian_increment(iso4, 1e-3, rng)
            v = sde.velocity_step(v, iso4, 1.0, 1e-3, dW)
            w = sde.velocity_step(w, iso4, 1.0, 1e-3, dW)
            n_ip = 1.0 - float(v @ w)
            n_dist = 0.5 * float(np.sum((w - v) ** 2))
            assert abs(n_ip - n_dist) < 1e-10
            assert -1e-12 <= n_ip <= 2.0 + 1e-12

    def test_mean_decay_bound(self, iso4):
        """E[N_t] <= exp(-t (tr - 3 max alpha^2)) N_0 for isotropic d=4."""
        R = 2000
        v0s = np.tile(unit(4, 0), (R, 1))
        w0s = np.tile(unit(4, 1), (R, 1))
        times, n_t = sde.simulate_coupled_ensemble(v0s, w0s, iso4, 4.0, 1e-3, 59, save_stride=200)
        mean = n_t.mean(axis=0)
        se = n_t.std(axis=0, ddof=1) / np.sqrt(R)
        bound = np.exp(-times) * mean[0]
        assert (mean <= bound + 3 * se + 1e-12).all()


class TestStreams:
    def test_distinct_seeds(self):
        seeds = {int(derive_stream_seed(0, i)) for i in range(10_000)}
        assert len(seeds) == 10_000

    def test_documented_fixed_point(self):
        # frozen value of the published derivation at (root, index) = (0, 0)
        assert int(derive_stream_seed(0, 0)) == int(mix64(GOLDEN))
        assert int(derive_stream_seed(0, 0)) == 16294208416658607535

    def test_replica_order_invariance(self, iso4):
        keys = stream_keys(97, 8)
        v0s = np.tile(unit(4), (8, 1))
        from kineticflow import _kernels

        chk = np.array([0, 50], dtype=np.int64)
        a, _ = _kernels.velocity_paths(keys, v0s, iso4.alpha, 1.0, 1e-3, 50, chk)
        b, _ = _kernels.velocity_paths(keys[::-1].copy(), v0s, iso4.alpha, 1.0, 1e-3, 50, chk)
        np.testing.assert_array_equal(a, b[::-1])

    def test_default_dt_rule(self, iso4):
        assert sde.default_dt(0.0, 4.0) == 1e-3
        assert sde.default_dt(1.0, 4.0) == 1e-3
        assert sde.default_dt(8.0, 4.0) == pytest.approx(0.1 / (64 * 4))
