"""Reproducible experiment runner.

Subcommands: invariant-check, mixing-rate, homogenize, roughpath-check,
geodesic, kinetic-flow.  Every run writes CSV outputs plus a report.txt of
``name,value,bound,pass`` assertion lines into --out; the exit status is 0
when all assertions pass, 1 when any fails, 2 on precondition violations.
Outputs are byte-identical for identical (config, seed): every random
stream is derived from the root seed with :func:`derive_stream_seed`.
"""
import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import covariance, development, exports, modes, roughpath, sde, stats
from ._rng import derive_stream_seed
from .errors import KineticFlowError

EXPERIMENTS = (
    "invariant-check",
    "mixing-rate",
    "homogenize",
    "roughpath-check",
    "geodesic",
    "kinetic-flow",
)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str = "out"
    replicas: int = 400
    dt: float = None
    sigma: tuple = (1.0,)
    cutoff: int = 2
    sobolev_s: float = 2.0
    sobolev_a: float = 1.0
    grid: int = 64
    horizon: float = None
    alphas: tuple = None  # explicit isotropic spectrum overriding the torus one
    omega: str = "auto"   # geodesic driver: "auto", "0", or comma coefficients

    def lines(self):
        """Verbatim echo for output headers."""
        items = [
            ("experiment", self.experiment),
            ("seed", self.seed),
            ("replicas", self.replicas),
            ("dt", self.dt),
            ("sigma", ",".join(str(s) for s in self.sigma)),
            ("cutoff", self.cutoff),
            ("sobolev_s", self.sobolev_s),
            ("sobolev_a", self.sobolev_a),
            ("grid", self.grid),
            ("horizon", self.horizon),
        ]
        if self.alphas is not None:
            items.append(("alphas", ",".join(str(a) for a in self.alphas)))
        items.append(("omega", self.omega))
        return [f"{k}={v}" for k, v in items]


def _spectrum(cfg):
    if cfg.alphas is not None:
        spec = covariance.isotropic_spectrum(len(cfg.alphas), np.array(cfg.alphas))
        table = None
    else:
        table = modes.enumerate_modes(cfg.cutoff)
        spec = covariance.sobolev_spectrum(table, cfg.sobolev_a, cfg.sobolev_s)
    return spec, table


def _rng_for(cfg, purpose):
    return np.random.default_rng(int(derive_stream_seed(cfg.seed, 1_000_000 + purpose)))


def _dt(cfg, sigma, spec):
    return cfg.dt if cfg.dt is not None else sde.default_dt(sigma, spec.trace)


def _stationary_starts(spec, n, rng):
    return stats.sample_invariant_oracle(spec, max(4 * n, 4096), rng).resample(n, rng)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _exp_invariant_check(cfg):
    spec, _ = _spectrum(cfg)
    cond = covariance.trace_condition(spec)
    meta = cfg.lines() + [f"trace={spec.trace:.17g}", f"margin={cond.margin:.17g}"]
    oracle = stats.sample_invariant_oracle(spec, 40 * cfg.replicas, _rng_for(cfg, 0))
    dt = _dt(cfg, 1.0, spec)
    T = cfg.horizon or 8.0
    v0 = np.zeros(spec.dim)
    v0[0] = 1.0
    v0s = np.tile(v0, (cfg.replicas, 1))
    _, V = sde.simulate_velocity_ensemble(
        v0s, spec, 1.0, T, dt, cfg.seed, save_stride=int(round(T / dt))
    )
    vT = V[:, -1, :]
    assertions = []
    for coord in range(min(3, spec.dim)):
        r = stats.ks_statistic(oracle.points[:, coord], vT[:, coord], w_a=oracle.weights)
        assertions.append((f"ks_coord_{coord}", r.statistic, r.threshold, r.passed))
    exports.write_spectrum(os.path.join(cfg.out, "spectrum.csv"), spec, meta)
    rows = [(T, f"ks_coord_{c}", a[1], 0.0) for c, a in enumerate(assertions)]
    exports.write_ensemble_summary(os.path.join(cfg.out, "summary.csv"), rows, meta)
    return assertions


def _exp_mixing_rate(cfg):
    spec, _ = _spectrum(cfg)
    cond = covariance.trace_condition(spec)
    if not cond.satisfied:
        from .errors import ConditionViolatedError

        raise ConditionViolatedError(
            f"trace-condition margin {cond.margin:.6g} is not positive"
        )
    dt = _dt(cfg, 1.0, spec)
    T = cfg.horizon or 4.0
    v0 = np.zeros(spec.dim)
    v0[0] = 1.0
    w0 = np.zeros(spec.dim)
    w0[1] = 1.0
    v0s = np.tile(v0, (cfg.replicas, 1))
    w0s = np.tile(w0, (cfg.replicas, 1))
    stride = max(1, int(round(0.05 / dt)))
    times, n_t = sde.simulate_coupled_ensemble(v0s, w0s, spec, T, dt, cfg.seed, stride)
    fit = stats.mixing_decay_fit(times, n_t, cond.margin)
    mean = n_t.mean(axis=0)
    se = n_t.std(axis=0, ddof=1) / np.sqrt(len(n_t))
    exports.write_ensemble_summary(
        os.path.join(cfg.out, "coupling_decay.csv"),
        [(t, "mean_N", m, s) for t, m, s in zip(times, mean, se)],
        cfg.lines(),
    )
    assertions = [
        ("mixing_slope_vs_margin", fit.slope, -fit.margin + 2 * fit.slope_stderr, fit.bound_satisfied),
        ("tau_hat_positive", fit.tau_hat, 0.0, fit.tau_hat > 0.0),
    ]
    return assertions


def _exp_homogenize(cfg):
    spec, _ = _spectrum(cfg)
    rng = _rng_for(cfg, 1)
    dt = cfg.dt if cfg.dt is not None else 1e-2
    # reference covariance from a stationary autocovariance ensemble
    lag_max = cfg.horizon or 8.0
    n_lags = 40
    lag_dt = sde.default_dt(1.0, spec.trace)
    stride = max(1, int(round(lag_max / n_lags / lag_dt)))
    v0s = _stationary_starts(spec, cfg.replicas, rng)
    times, V = sde.simulate_velocity_ensemble(
        v0s, spec, 1.0, lag_max, lag_dt, derive_stream_seed(cfg.seed, 7), save_stride=stride
    )
    curve = stats.autocovariance(times, V)
    C, info = stats.limit_covariance(curve)
    gamma_ref = np.diag(C)
    exports.write_autocov_curve(os.path.join(cfg.out, "autocovariance.csv"), curve, cfg.lines())

    assertions = [("psd_defect", info["psd_defect"], 1e-8, info["psd_defect"] <= 1e-8)]
    rows = []
    for si, sigma in enumerate(cfg.sigma):
        ens = sde.rescaled_position_ensemble(
            spec, sigma, cfg.replicas, derive_stream_seed(cfg.seed, 11 + si), dt,
            checkpoint_times=[0.0, 1.0],
            v0s=_stationary_starts(spec, cfg.replicas, rng), with_level2=False,
        )
        var = ens.x[:, -1, :].var(axis=0, ddof=1)
        se = var * np.sqrt(2.0 / (cfg.replicas - 1))
        for i, (v, s) in enumerate(zip(var, se)):
            rows.append((sigma, f"var_x_{i}", v, s))
        if sigma == max(cfg.sigma):
            rel = np.abs(var - gamma_ref) / gamma_ref
            assertions.append(
                (f"var_rel_err_sigma_{sigma:g}", float(rel.max()), 0.10, bool(rel.max() <= 0.10))
            )
    exports.write_ensemble_summary(os.path.join(cfg.out, "variance.csv"), rows, cfg.lines())
    return assertions


def _exp_roughpath_check(cfg):
    spec, _ = _spectrum(cfg)
    sigma = max(cfg.sigma)
    dt = cfg.dt if cfg.dt is not None else 1e-2
    rng = _rng_for(cfg, 2)
    level = 3
    t_chk = np.linspace(0.0, 1.0, (1 << level) + 1)
    ens = sde.rescaled_position_ensemble(
        spec, sigma, cfg.replicas, cfg.seed, dt, t_chk,
        v0s=_stationary_starts(spec, cfg.replicas, rng),
    )
    rp = roughpath.lift_from_prefix(ens.times, ens.x[0], ens.xx[0])
    n_checked = roughpath.chen_recheck(rp)
    exports.write_rough_level1(os.path.join(cfg.out, "level1.csv"), rp, cfg.lines())
    exports.write_rough_level2(os.path.join(cfg.out, "level2.csv"), rp, cfg.lines())

    X1 = ens.x[:, -1, :]
    A12 = 0.5 * (ens.xx[:, -1, 0, 1] - ens.xx[:, -1, 1, 0])
    curveV = sde.simulate_velocity_ensemble(
        _stationary_starts(spec, cfg.replicas, rng), spec, 1.0,
        8.0, sde.default_dt(1.0, spec.trace), derive_stream_seed(cfg.seed, 23),
        save_stride=max(1, int(round(0.2 / sde.default_dt(1.0, spec.trace)))),
    )
    C, _ = stats.limit_covariance(stats.autocovariance(*curveV))
    oX, oXX = roughpath.brownian_endpoint_samples(C, 512, cfg.replicas, _rng_for(cfg, 3))
    oA = 0.5 * (oXX[:, 0, 1] - oXX[:, 1, 0])
    assertions = [("chen_recheck_nodes", float(n_checked), 1.0, n_checked >= 1)]
    for i in range(min(2, spec.dim)):
        r = stats.ks_statistic(X1[:, i], oX[:, i])
        assertions.append((f"ks_x1_{i}", r.statistic, r.threshold, r.passed))
    r = stats.ks_statistic(A12, oA)
    assertions.append(("ks_levy_area", r.statistic, r.threshold, r.passed))
    return assertions


def _default_omega(table):
    omega = np.zeros(table.dim)
    omega[table.index(modes.ModeIndex(0, 1, modes.COS))] = 1.0
    omega[table.index(modes.ModeIndex(1, 0, modes.COS))] = 1.0
    omega[table.index(modes.ModeIndex(1, 1, modes.SIN))] = 0.5
    return omega / np.linalg.norm(omega)


def _parse_omega(cfg, table):
    if cfg.omega == "auto":
        return _default_omega(table)
    if cfg.omega.strip() == "0":
        return np.zeros(table.dim)
    vals = np.array([float(v) for v in cfg.omega.split(",")])
    if len(vals) != table.dim:
        raise KineticFlowError(f"omega needs {table.dim} coefficients, got {len(vals)}")
    return vals


def _exp_geodesic(cfg):
    table = modes.enumerate_modes(cfg.cutoff)
    constants = modes.structure_constants(table)
    gamma = modes.christoffel_tensor(constants)
    exports.write_mode_table(os.path.join(cfg.out, "modes.csv"), table, cfg.lines())
    exports.write_sparse_tensor(
        os.path.join(cfg.out, "structure_constants.csv"), constants.entries, cfg.lines()
    )
    omega = _parse_omega(cfg, table)
    T = cfg.horizon or 1.0
    dt = cfg.dt if cfg.dt is not None else 1e-3
    res = development.run_geodesic(
        omega, table, gamma, T, dt, grid_m=cfg.grid, snapshot_times=(T,)
    )
    diag = development.flow_diagnostics(res.flow)
    energy_drift = float(np.abs(res.l2_energy - res.l2_energy[0]).max())
    exports.write_energy_trace(
        os.path.join(cfg.out, "energy.csv"), res.times, res.l2_energy, res.q0, cfg.lines()
    )
    exports.write_snapshots(os.path.join(cfg.out, "snapshots.csv"), res.snapshots, cfg.lines())
    exports.write_marker_curves(os.path.join(cfg.out, "markers.csv"), res.snapshots, cfg.lines())
    return [
        ("energy_drift", energy_drift, 1e-8, energy_drift <= 1e-8),
        ("orthogonality_defect", res.max_orth_defect, 1e-10, res.max_orth_defect <= 1e-10),
        ("volume_defect", diag.volume_defect, 0.01, diag.volume_defect <= 0.01),
    ]


def _exp_kinetic_flow(cfg):
    table = modes.enumerate_modes(cfg.cutoff)
    spec = covariance.sobolev_spectrum(table, cfg.sobolev_a, cfg.sobolev_s)
    gamma = modes.christoffel_tensor(modes.structure_constants(table))
    sigma = cfg.sigma[0]
    T = cfg.horizon or 4.0
    dt = cfg.dt if cfg.dt is not None else 2e-3
    res = development.run_kinetic(
        sigma, spec, table, gamma, T, dt, cfg.seed, grid_m=cfg.grid, snapshot_times=(T,)
    )
    exports.write_energy_trace(
        os.path.join(cfg.out, "energy.csv"), res.times, res.l2_energy, res.q0, cfg.lines()
    )
    if res.velocity_samples is not None:
        stride = max(1, len(res.times) // 200)
        exports.write_trajectory(
            os.path.join(cfg.out, "velocity.csv"),
            res.times[::stride], res.velocity_samples[::stride], cfg.lines(),
        )
    exports.write_snapshots(os.path.join(cfg.out, "snapshots.csv"), res.snapshots, cfg.lines())
    exports.write_marker_curves(os.path.join(cfg.out, "markers.csv"), res.snapshots, cfg.lines())
    q0_bound = float(np.min(table.eigenvalues) ** (-cfg.sobolev_s))
    in_range = bool(np.all((res.q0 > 0.0) & (res.q0 <= q0_bound + 1e-12)))
    identity_defect = float(
        np.abs(res.l2_energy - sigma**2 * np.sqrt(res.q0)).max()
    )
    return [
        ("q0_in_range", float(res.q0.max()), q0_bound, in_range),
        ("l2_identity_defect", identity_defect, 1e-10, identity_defect <= 1e-10),
        ("orthogonality_defect", res.max_orth_defect, 1e-10, res.max_orth_defect <= 1e-10),
    ]


_RUNNERS = {
    "invariant-check": _exp_invariant_check,
    "mixing-rate": _exp_mixing_rate,
    "homogenize": _exp_homogenize,
    "roughpath-check": _exp_roughpath_check,
    "geodesic": _exp_geodesic,
    "kinetic-flow": _exp_kinetic_flow,
}


def run_experiment(cfg):
    """Execute one named experiment; returns the exit status."""
    if cfg.experiment not in _RUNNERS:
        raise KineticFlowError(f"unknown experiment {cfg.experiment!r}")
    os.makedirs(cfg.out, exist_ok=True)
    assertions = _RUNNERS[cfg.experiment](cfg)
    return exports.write_report(
        os.path.join(cfg.out, "report.txt"), assertions, cfg.lines()
    )


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _load_config_file(path):
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def build_config(argv=None):
    parser = argparse.ArgumentParser(prog="kineticflow", description=__doc__)
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="flat key=value file; flags override it")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--replicas", type=int, default=None)
    parser.add_argument("--dt", type=float, default=None)
    parser.add_argument("--sigma", default=None, help="comma list, e.g. 1,2,4,8")
    parser.add_argument("--cutoff", type=int, default=None)
    parser.add_argument("--sobolev-s", type=float, default=None)
    parser.add_argument("--sobolev-a", type=float, default=None)
    parser.add_argument("--grid", type=int, default=None)
    parser.add_argument("--horizon", type=float, default=None)
    parser.add_argument("--alphas", default=None, help="comma list for an explicit spectrum")
    parser.add_argument("--omega", default=None, help="geodesic driver: auto, 0, or comma coefficients")
    args = parser.parse_args(argv)

    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for key in ("seed", "out", "replicas", "dt", "sigma", "cutoff", "sobolev_s",
                "sobolev_a", "grid", "horizon", "alphas", "omega"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v

    cfg = ExperimentConfig(experiment=args.experiment)
    casts = {
        "seed": int, "out": str, "replicas": int, "dt": float, "cutoff": int,
        "sobolev_s": float, "sobolev_a": float, "grid": int, "horizon": float,
    }
    for key, cast in casts.items():
        if key in values:
            setattr(cfg, key, cast(values[key]))
    if "omega" in values:
        cfg.omega = str(values["omega"])
    if "sigma" in values:
        cfg.sigma = tuple(float(s) for s in str(values["sigma"]).split(","))
    if "alphas" in values:
        cfg.alphas = tuple(float(a) for a in str(values["alphas"]).split(","))
    return cfg


def main(argv=None):
    cfg = build_config(argv)
    try:
        status = run_experiment(cfg)
    except KineticFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
