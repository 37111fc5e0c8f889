"""Config-driven experiment runner and figure-reproduction harness.

All commands are deterministic under a fixed seed and config. Exit codes:
0 success, 2 config error, 3 completeness abort, 4 fingerprint mismatch.
"""

from __future__ import annotations

import hashlib
import sys

import click
import numpy as np
import yaml

from . import models
from .estimators import (
    CSV_HEADER,
    Observable,
    estimate_linear,
    estimate_nonlinear,
    wrong_postprocessing_values,
)
from .qmatrix import SpectralHamiltonian, evolve, partial_trace, swap_operator
from .rdu import (
    DegeneracySpec,
    diagonal_design,
    frame_potential_finite_time,
    frame_potential_mc,
    frame_potential_rdu_exact,
    rdu_sampler,
    window_sampler,
)
from .sampler import (
    TimeModel,
    load_snapshots,
    run_batch,
    save_snapshots,
    write_manifest,
)
from .shadowmap import build_inverter, diagnose_detection, hamiltonian_fingerprint
from .variance import (
    VARIANCE_CSV_HEADER,
    empirical_variance,
    variance_approx_linear,
    variance_approx_nonlinear,
    variance_exact,
    second_moment_exact,
    shadow_norm_sq,
)

EXIT_CONFIG = 2
EXIT_INCOMPLETE = 3
EXIT_FINGERPRINT = 4


class ConfigError(Exception):
    pass


def _require_keys(section: dict, allowed: set, required: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def load_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config: {e}")
    _require_keys(cfg, {"version", "model", "state", "time_model", "shots",
                        "seed", "estimators", "output"},
                  {"model"}, "config")
    if cfg.get("version", 1) != 1:
        raise ConfigError("unsupported config version")
    return cfg


def config_digest(cfg: dict) -> str:
    blob = yaml.safe_dump(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def build_model(cfg: dict) -> SpectralHamiltonian:
    m = cfg["model"]
    _require_keys(m, {"kind", "num_atoms", "seed", "spacing", "jitter",
                      "positions", "dim", "theta", "n"}, {"kind"},
                  "config.model")
    kind = m["kind"]
    try:
        if kind == "rydberg":
            if "positions" in m:
                pos = np.asarray(m["positions"], dtype=float)
            else:
                pos = models.random_positions(
                    int(m["num_atoms"]), m.get("spacing", models.DEFAULT_SPACING),
                    m.get("jitter", models.DEFAULT_JITTER), int(m.get("seed", 0)))
            return models.rydberg_hamiltonian(models.RydbergParams(pos))
        if kind == "gue":
            return models.gue_hamiltonian(int(m["dim"]), int(m.get("seed", 0)))
        if kind == "exp-family":
            v = models.exp_family_vh(int(m["dim"]), float(m["theta"]),
                                     int(m.get("seed", 0)))
            return models.hamiltonian_from_unitary(v)
        if kind == "single-qubit-theta":
            return models.single_qubit_theta(float(m["theta"]))
        if kind == "hadamard":
            return models.hamiltonian_from_unitary(
                models.hadamard_basis(int(m["n"])))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad model section: {e}")
    raise ConfigError(f"unknown model kind {kind!r}")


def build_state(cfg: dict, h: SpectralHamiltonian) -> np.ndarray:
    s = cfg.get("state")
    if s is None:
        raise ConfigError("config.state is required for this command")
    _require_keys(s, {"kind", "n", "n_zero", "n_one", "seed", "beta"},
                  {"kind"}, "config.state")
    try:
        spec = models.StateSpec(
            kind=s["kind"], n=int(s.get("n", 0)),
            n_zero=int(s.get("n_zero", 0)), n_one=int(s.get("n_one", 0)),
            seed=int(s.get("seed", 0)), beta=float(s.get("beta", 1.0)))
        return models.prepare_state(spec, h)
    except ValueError as e:
        raise ConfigError(f"bad state section: {e}")


def build_time_model(cfg: dict) -> TimeModel:
    t = cfg.get("time_model")
    if t is None:
        raise ConfigError("config.time_model is required for this command")
    _require_keys(t, {"kind", "t_min", "t_max", "k"}, {"kind"},
                  "config.time_model")
    try:
        return TimeModel(t["kind"], t_min=float(t.get("t_min", 0.0)),
                         t_max=float(t.get("t_max", 0.0)),
                         k=int(t.get("k", 2)))
    except ValueError as e:
        raise ConfigError(f"bad time_model section: {e}")


def build_observables(cfg: dict, rho: np.ndarray | None, d: int) -> list:
    e = cfg.get("estimators", {})
    _require_keys(e, {"method", "batches", "observables"}, set(),
                  "config.estimators")
    out = []
    for i, spec in enumerate(e.get("observables", [])):
        _require_keys(spec, {"name", "kind", "labels"}, {"kind"},
                      f"config.estimators.observables[{i}]")
        kind = spec["kind"]
        if kind == "pauli":
            labels = spec.get("labels")
            if not labels or 2**len(labels) != d:
                raise ConfigError(f"pauli labels must cover {d}-dim system")
            out.append(Observable(models.pauli_tensor(labels),
                                  name=spec.get("name", labels)))
        elif kind == "fidelity":
            if rho is None:
                raise ConfigError("fidelity observable needs a state section")
            out.append(Observable(rho, name=spec.get("name", "fidelity")))
        elif kind == "purity":
            out.append(Observable(swap_operator(d), copies=2,
                                  name=spec.get("name", "purity")))
        else:
            raise ConfigError(f"unknown observable kind {kind!r}")
    if not out:
        raise ConfigError("no observables configured")
    return out


def _estimator_settings(cfg: dict) -> tuple[str, int]:
    e = cfg.get("estimators", {})
    method = e.get("method", "mean")
    if method not in ("mean", "median-of-means"):
        raise ConfigError(f"unknown estimator method {method!r}")
    batches = int(e.get("batches", 1)) if method == "median-of-means" else 1
    return method, batches


@click.group()
def main():
    """Quench-dynamics shadow estimation toolkit."""


def _fail(code: int, msg: str):
    click.echo(msg, err=True)
    sys.exit(code)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override config seed.")
@click.option("--shots", type=int, default=None, help="Override config shots.")
@click.option("--allow-incomplete", is_flag=True)
@click.option("--threads", type=int, default=1, help="Speed only; never results.")
def simulate(config_path, seed, shots, allow_incomplete, threads):
    """Run a simulated experiment and write snapshots plus a manifest."""
    try:
        cfg = load_config(config_path)
        h = build_model(cfg)
        rho = build_state(cfg, h)
        tm = build_time_model(cfg)
        num_shots = int(shots if shots is not None else cfg.get("shots", 1000))
        the_seed = int(seed if seed is not None else cfg.get("seed", 0))
        out = cfg.get("output", {})
        _require_keys(out, {"snapshots", "manifest", "reports"}, {"snapshots"},
                      "config.output")
    except ConfigError as e:
        _fail(EXIT_CONFIG, f"config error: {e}")
    diag = diagnose_detection(h)
    if not diag.complete and not allow_incomplete:
        _fail(EXIT_INCOMPLETE,
              "Hamiltonian is not tomography-complete:\n" + diag.summary())
    snaps = run_batch(h, rho, tm, num_shots, the_seed)
    save_snapshots(out["snapshots"], snaps)
    if "manifest" in out:
        write_manifest(out["manifest"], snaps,
                       {"config_digest": config_digest(cfg),
                        "completeness": diag.verdict})
    click.echo(f"wrote {num_shots} snapshots to {out['snapshots']}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--snapshots", "snap_path", required=True, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--finite-time", is_flag=True,
              help="Invert with the time-window-corrected map.")
@click.option("--wrong-postprocessing", is_flag=True,
              help="Biased comparison baseline; for figure reproduction only.")
def estimate(config_path, snap_path, out_path, finite_time, wrong_postprocessing):
    """Estimate configured observables from a snapshot file."""
    try:
        cfg = load_config(config_path)
        h = build_model(cfg)
        rho = build_state(cfg, h) if "state" in cfg else None
        method, batches = _estimator_settings(cfg)
        obs = build_observables(cfg, rho, h.dim)
    except ConfigError as e:
        _fail(EXIT_CONFIG, f"config error: {e}")
    snaps = load_snapshots(snap_path)
    if snaps.hamiltonian_fingerprint != hamiltonian_fingerprint(h):
        _fail(EXIT_FINGERPRINT,
              "snapshot fingerprint does not match the configured Hamiltonian")
    if finite_time:
        tm = build_time_model(cfg)
        inv = build_inverter(h, mode="finite-time", t_min=tm.t_min, t_max=tm.t_max)
    else:
        inv = build_inverter(h)
    rows = []
    for o in obs:
        if wrong_postprocessing and o.copies == 1:
            vals = wrong_postprocessing_values(inv, snaps, o)
            from .estimators import median_of_means
            rep = median_of_means(vals, batches)
            name = o.name + "(wrong-postprocessing)"
        elif o.copies == 2:
            rep = estimate_nonlinear(inv, snaps, o)
            name = o.name
        else:
            rep = estimate_linear(inv, snaps, o, num_batches=batches)
            name = o.name
        rows.append(rep.csv_row(name, snaps.seed, snaps.hamiltonian_fingerprint))
    text = (f"# seed={snaps.seed} config_digest={config_digest(cfg)}\n"
            + CSV_HEADER + "\n" + "\n".join(rows) + "\n")
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
def variance(config_path, out_path):
    """Exact and approximate variance figures for configured observables."""
    try:
        cfg = load_config(config_path)
        h = build_model(cfg)
        rho = build_state(cfg, h) if "state" in cfg else None
        obs = build_observables(cfg, rho, h.dim)
    except ConfigError as e:
        _fail(EXIT_CONFIG, f"config error: {e}")
    diag = diagnose_detection(h)
    if not diag.complete:
        _fail(EXIT_INCOMPLETE,
              "Hamiltonian is not tomography-complete:\n" + diag.summary())
    inv = build_inverter(h)
    fp = hamiltonian_fingerprint(h)
    rows = []
    for o in obs:
        if o.copies == 2:
            approx = variance_approx_nonlinear(inv, o)
            exact = norm = None
        else:
            approx = variance_approx_linear(inv, o)
            exact = second_moment_exact(inv, o, rho) if rho is not None else None
            norm = shadow_norm_sq(inv, o)
        def fmt(x):
            return "" if x is None else repr(x)
        rows.append(f"{o.name},{fmt(exact)},{fmt(norm)},{approx!r},,"
                    f"d={h.dim};mode=ideal,{cfg.get('seed', 0)},{fp}")
    text = (f"# config_digest={config_digest(cfg)}\n"
            + VARIANCE_CSV_HEADER + "\n" + "\n".join(rows) + "\n")
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


@main.command("frame-potential")
@click.option("--dim", type=int, required=True)
@click.option("-k", "order", type=int, default=2)
@click.option("--mode", type=click.Choice(["rdu-exact", "finite-time", "mc",
                                           "mc-window"]),
              default="rdu-exact")
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="Supplies the model energies for window modes.")
@click.option("--t-min", type=float, default=0.0)
@click.option("--t-max", type=float, default=0.0)
@click.option("--samples", type=int, default=10000)
@click.option("--seed", type=int, default=0)
def frame_potential(dim, order, mode, config_path, t_min, t_max, samples, seed):
    """Frame potential of the phase ensemble, closed-form or Monte-Carlo."""
    energies = np.arange(dim, dtype=float)
    if config_path is not None:
        try:
            h = build_model(load_config(config_path))
        except ConfigError as e:
            _fail(EXIT_CONFIG, f"config error: {e}")
        energies = h.energies
        dim = h.dim
    try:
        if mode == "rdu-exact":
            val = frame_potential_rdu_exact(order, dim)
            click.echo(f"F({order}) rdu-exact d={dim}: {val!r}")
        elif mode == "finite-time":
            val = frame_potential_finite_time(
                DegeneracySpec(energies), order, t_min, t_max)
            click.echo(f"F({order}) finite-time d={dim} "
                       f"window=[{t_min},{t_max}]: {val!r}")
        elif mode == "mc":
            est, err = frame_potential_mc(rdu_sampler(dim), order, samples, seed)
            click.echo(f"F({order}) mc d={dim}: {est!r} +- {err!r}")
        else:
            est, err = frame_potential_mc(
                window_sampler(energies, t_min, t_max), order, samples, seed)
            click.echo(f"F({order}) mc-window d={dim}: {est!r} +- {err!r}")
    except ValueError as e:
        _fail(EXIT_CONFIG, f"invalid frame-potential request: {e}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
def diagnose(config_path):
    """Print the tomography-completeness diagnosis for the configured model."""
    try:
        h = build_model(load_config(config_path))
    except ConfigError as e:
        _fail(EXIT_CONFIG, f"config error: {e}")
    diag = diagnose_detection(h)
    click.echo(diag.summary())
    click.echo(f"fingerprint={hamiltonian_fingerprint(h)}")
    if not diag.complete:
        sys.exit(EXIT_INCOMPLETE)


FIGURES = {}


def _figure(key):
    def deco(fn):
        FIGURES[key] = fn
        return fn
    return deco


def _write_series(out_path, key, seed, header, rows):
    lines = [f"# figure={key} seed={seed} scale=desk", header]
    lines += [",".join(repr(x) if isinstance(x, float) else str(x) for x in r)
              for r in rows]
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


@_figure("fig3a")
def _repro_fig3a(seed):
    """Variance proxy vs exact variance for a 3-qubit Pauli string."""
    o = Observable(models.pauli_tensor("XXX"), name="XXX")
    rho = models.ghz_state(3)
    rows = []
    thetas = [0.2, 0.3, 0.4, 0.6, 0.8, 1.0, 1.4, 2.0]
    for theta in thetas:
        fs, exacts = [], []
        for rep in range(10):
            v = models.exp_family_vh(8, theta, seed + rep)
            inv = build_inverter(models.hamiltonian_from_unitary(v))
            fs.append(variance_approx_linear(inv, o))
            exacts.append(variance_exact(inv, o, rho))
        rows.append((theta, float(np.median(fs)), float(np.median(exacts))))
    return "theta,approx_f_median,variance_exact_median", rows


@_figure("fig3b")
def _repro_fig3b(seed):
    """Fidelity-estimation variance growth with qubit number."""
    rows = []
    for n in range(2, 6):
        rho = models.ghz_state(n)
        o = Observable(rho, name="fidelity")
        exacts = []
        for rep in range(5):
            v = models.exp_family_vh(2**n, 2.0, seed + rep)
            inv = build_inverter(models.hamiltonian_from_unitary(v))
            exacts.append(variance_exact(inv, o, rho))
        rows.append((n, float(np.median(exacts))))
    return "n,variance_exact_median", rows


def _rydberg_setup(n, seed):
    pos = models.random_positions(n, seed=seed)
    return models.rydberg_hamiltonian(models.RydbergParams(pos))


@_figure("fig4b")
def _repro_fig4b(seed):
    """Rydberg GHZ fidelity vs time-window length, corrected inversion."""
    h = _rydberg_setup(4, seed)
    rho = models.ghz_state(4)
    o = Observable(rho, name="fidelity")
    rows = []
    for dt in [2.0, 5.0, 10.0, 20.0]:
        tm = TimeModel("uniform-window", t_min=2.0, t_max=2.0 + dt)
        snaps = run_batch(h, rho, tm, 4000, seed)
        inv = build_inverter(h, mode="finite-time", t_min=tm.t_min, t_max=tm.t_max)
        rep = estimate_linear(inv, snaps, o)
        rows.append((dt, rep.value, rep.std_error))
    return "window_dt_us,fidelity,std_error", rows


@_figure("fig4c")
def _repro_fig4c(seed):
    """Rydberg cluster-state stabilizer expectation vs window length."""
    h = _rydberg_setup(4, seed)
    rho = models.cluster_state(4)
    o = Observable(models.pauli_tensor("ZXZI"), name="ZXZI")
    rows = []
    for dt in [2.0, 5.0, 10.0, 20.0]:
        tm = TimeModel("uniform-window", t_min=2.0, t_max=2.0 + dt)
        snaps = run_batch(h, rho, tm, 4000, seed)
        inv = build_inverter(h, mode="finite-time", t_min=tm.t_min, t_max=tm.t_max)
        rep = estimate_linear(inv, snaps, o)
        rows.append((dt, rep.value, rep.std_error))
    return "window_dt_us,stabilizer,std_error", rows


@_figure("fig4d")
def _repro_fig4d(seed):
    """Subsystem purity along quench dynamics of a 6-atom ladder.

    Desk-scale substitute for the 12-atom ladder: two legs of 3 atoms,
    evolve, trace out the upper leg, then run a fresh 3-atom shadow
    experiment on the reduced state.
    """
    spacing = 10.733
    upper = [(j * spacing, 0.0) for j in range(3)]
    lower = [(j * spacing, spacing) for j in range(3)]
    h6 = models.rydberg_hamiltonian(models.RydbergParams(np.array(upper + lower)))
    rho0 = models.ladder_product_state(3, 3)
    # fixed well-conditioned chain for the fresh experiment on the kept leg
    h3 = _rydberg_setup(3, seed=8)
    inv3 = build_inverter(h3)
    rows = []
    for i, t in enumerate([0.0, 0.2, 0.4, 0.8, 1.2, 2.0]):
        rho_t = evolve(h6, t, rho0)
        reduced = partial_trace(rho_t, [2] * 6, keep=[3, 4, 5])
        reduced = (reduced + reduced.conj().T) / 2
        true_purity = float(np.trace(reduced @ reduced).real)
        tm = TimeModel("ideal-rdu")
        snaps = run_batch(h3, reduced, tm, 20000, seed + i)
        rep = estimate_nonlinear(
            inv3, snaps, Observable(swap_operator(8), copies=2, name="SWAP"))
        rows.append((t, rep.value, rep.std_error, true_purity))
    return "t_us,purity,std_error,purity_true", rows


@_figure("fig6")
def _repro_fig6(seed):
    """Converging vs biased post-processing on the same snapshot stream."""
    h = models.gue_hamiltonian(8, seed)
    rho = models.ghz_state(3)
    o = Observable(rho, name="fidelity")
    tm = TimeModel("ideal-rdu")
    snaps = run_batch(h, rho, tm, 10000, seed)
    inv = build_inverter(h)
    from .estimators import snapshot_values
    good = snapshot_values(inv, snaps.snapshots, o)
    bad = wrong_postprocessing_values(inv, snaps, o)
    rows = []
    for k in [100, 300, 1000, 3000, 10000]:
        rows.append((k, float(np.mean(good[:k])), float(np.mean(bad[:k]))))
    return "k,estimate,wrong_postprocessing_estimate", rows


@_figure("fig8")
def _repro_fig8(seed):
    """Finite-window frame potential vs the ideal-phase value."""
    rows = []
    for n in range(2, 6):
        d = 2**n
        h = models.gue_hamiltonian(d, seed)
        f_window = frame_potential_finite_time(
            DegeneracySpec(h.energies), 2, 0.0, 20.0)
        f_rdu = frame_potential_rdu_exact(2, d)
        rows.append((n, f_window, f_rdu))
    return "n,f2_finite_time,f2_rdu", rows


@_figure("fig10")
def _repro_fig10(seed):
    """Single-qubit sweep: variance diverges near incomplete angles."""
    o = Observable(models.PAULI["X"] + models.PAULI["Y"] + models.PAULI["Z"],
                   name="X+Y+Z")
    rho = np.array([[1, 0], [0, 0]], dtype=complex)
    rows = []
    for theta in np.linspace(0.05, np.pi - 0.05, 25):
        h = models.single_qubit_theta(float(theta))
        diag = diagnose_detection(h)
        if not diag.complete:
            rows.append((float(theta), 0, float("nan")))
            continue
        inv = build_inverter(h)
        rows.append((float(theta), 1,
                     variance_exact(inv, o, rho)))
    return "theta,complete,variance_exact", rows


@_figure("fig12")
def _repro_fig12(seed):
    """Flat-eigenbasis protocol variance against the 3 Tr(O^2) bound."""
    rows = []
    for n in range(2, 5):
        d = 2**n
        v = models.hadamard_basis(n)
        h = models.hamiltonian_from_unitary(v)
        inv = build_inverter(h, mode="pseudo-inverse")
        o = models.pauli_tensor("X" * n)
        rho = models.ghz_state(n)
        rho_rot = v @ rho @ v.conj().T
        o_rot = Observable(v @ o @ v.conj().T, name="X" * n)
        tm = TimeModel("ideal-rdu")
        snaps = run_batch(h, rho_rot, tm, 5000, seed + n)
        from .estimators import snapshot_values
        vals = snapshot_values(inv, snaps.snapshots, o_rot)
        bound = 3 * float(np.trace(o @ o).real)
        rows.append((n, empirical_variance(vals), bound))
    return "n,empirical_variance,bound_3_tr_o2", rows


@_figure("fig13")
def _repro_fig13(seed):
    """Purity-estimation variance proxy vs empirical pair variance."""
    rows = []
    for n in (2, 3):
        d = 2**n
        h = models.gue_hamiltonian(d, seed + n)
        inv = build_inverter(h)
        o2 = Observable(swap_operator(d), copies=2, name="SWAP")
        approx = variance_approx_nonlinear(inv, o2)
        rho = models.random_pure_state(d, seed + n)
        tm = TimeModel("ideal-rdu")
        snaps = run_batch(h, rho, tm, 2000, seed + n)
        from .estimators import snapshot_states
        rhos = snapshot_states(inv, snaps.snapshots)
        half = len(rhos) // 2
        pair_vals = np.einsum("kmn,knm->k", rhos[:half], rhos[half:2 * half]).real
        rows.append((n, approx, empirical_variance(pair_vals)))
    return "n,approx_nonlinear,empirical_pair_variance", rows


@main.command()
@click.option("--figure", "figure_key", required=True,
              type=click.Choice(sorted(FIGURES)))
@click.option("--scale", type=click.Choice(["desk"]), default="desk")
@click.option("--seed", type=int, default=7)
@click.option("--out", "out_path", default=None, type=click.Path())
def reproduce(figure_key, scale, seed, out_path):
    """Emit the desk-scale data series behind a benchmark figure."""
    header, rows = FIGURES[figure_key](seed)
    _write_series(out_path, figure_key, seed, header, rows)


if __name__ == "__main__":
    main()
