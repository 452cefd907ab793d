"""Delimiter-separated text exports for every module's external interface.

All files use comma delimiters, ``.`` decimal separator, LF line endings and
17 significant digits for floats (round-trip exact for 64-bit values).
Leading ``#`` lines echo the experiment configuration verbatim.
"""
import numpy as np


def fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write(path, header_cols, rows, config_lines=()):
    with open(path, "w", newline="\n") as fh:
        for line in config_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_mode_table(path, table, config_lines=()):
    rows = (
        (i, m.k1, m.k2, m.parity, m.eigenvalue)
        for i, m in enumerate(table.modes)
    )
    _write(path, ("mode_id", "k1", "k2", "parity", "eigenvalue"), rows, config_lines)


def write_sparse_tensor(path, entries, config_lines=()):
    """Sparse triplets n,k,l,value, deterministically ordered."""
    rows = ((n, k, l, v) for (n, k, l), v in sorted(entries.items()))
    _write(path, ("n", "k", "l", "value"), rows, config_lines)


def write_spectrum(path, spec, config_lines=()):
    rows = ((i, a) for i, a in enumerate(spec.alpha))
    _write(path, ("mode_id", "alpha"), rows, config_lines)


def write_trajectory(path, times, values, config_lines=()):
    """Long format t,mode_id,value for a (n_times, N) array."""
    rows = (
        (t, i, values[j, i])
        for j, t in enumerate(times)
        for i in range(values.shape[1])
    )
    _write(path, ("t", "mode_id", "value"), rows, config_lines)


def write_ensemble_summary(path, entries, config_lines=()):
    """entries: iterable of (t, stat_name, value, stderr)."""
    _write(path, ("t", "stat", "value", "stderr"), entries, config_lines)


def write_autocov_curve(path, curve, config_lines=()):
    rows = []
    for li, lag in enumerate(curve.lags):
        if curve.cross:
            N = curve.rho.shape[1]
            for i in range(N):
                for j in range(N):
                    rows.append((lag, i, j, curve.rho[li, i, j], curve.stderr[li, i, j]))
        else:
            for i in range(curve.rho.shape[1]):
                rows.append((lag, i, i, curve.rho[li, i], curve.stderr[li, i]))
    _write(path, ("lag", "mode_i", "mode_j", "value", "stderr"), rows, config_lines)


def write_rough_level1(path, rp, config_lines=()):
    X, _ = rp.levels[0]
    rows = (
        (rp.times[b], rp.times[b + 1], i, X[b, i])
        for b in range(rp.n_base)
        for i in range(rp.dim)
    )
    _write(path, ("s", "t", "i", "value"), rows, config_lines)


def write_rough_level2(path, rp, config_lines=()):
    _, XX = rp.levels[0]
    rows = (
        (rp.times[b], rp.times[b + 1], i, j, XX[b, i, j])
        for b in range(rp.n_base)
        for i in range(rp.dim)
        for j in range(rp.dim)
    )
    _write(path, ("s", "t", "i", "j", "value"), rows, config_lines)


def write_snapshots(path, snapshots, config_lines=()):
    rows = []
    for t, grid in snapshots:
        if grid is None:
            continue
        P = grid.positions
        for i in range(P.shape[0]):
            for j in range(P.shape[1]):
                rows.append((t, i, j, P[i, j, 0], P[i, j, 1]))
    _write(path, ("time", "particle_i", "particle_j", "theta1", "theta2"), rows, config_lines)


def write_marker_curves(path, snapshots, config_lines=()):
    rows = []
    for t, grid in snapshots:
        if grid is None:
            continue
        for name, curve in grid.marker_curves.items():
            for p, pt in enumerate(curve):
                rows.append((t, name, p, pt[0], pt[1]))
    _write(path, ("time", "curve_id", "point_idx", "theta1", "theta2"), rows, config_lines)


def write_energy_trace(path, times, l2_energy, q0, config_lines=()):
    q = q0 if q0 is not None else np.full(len(times), np.nan)
    rows = zip(times, l2_energy, q)
    _write(path, ("time", "l2_energy", "q0"), rows, config_lines)


def write_report(path, assertions, config_lines=()):
    """Stable-ordered name,value,bound,pass lines; returns the exit status.

    assertions: iterable of (name, value, bound, passed).
    """
    assertions = list(assertions)
    rows = [(name, value, bound, "true" if ok else "false") for name, value, bound, ok in assertions]
    _write(path, ("name", "value", "bound", "pass"), rows, config_lines)
    return 0 if all(a[3] for a in assertions) else 1


def parse_report(path):
    """Inverse of write_report; skips configuration comments."""
    out = []
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    for ln in lines[1:]:
        if not ln:
            continue
        name, value, bound, ok = ln.split(",")
        out.append((name, float(value), float(bound), ok == "true"))
    return out
