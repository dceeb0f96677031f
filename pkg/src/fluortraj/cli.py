"""Command-line surface: simulate | sweep | histogram | validate.

Angles are taken in degrees on the command line and converted to radians
internally.  A JSON config file may predefine any flag (underscored key
names); explicit flags win.  Relative output paths are resolved against
$FLUORTRAJ_OUTDIR when it is set.

Exit codes: 0 success, 1 validation/compute failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import __version__, ensemble, kraus, qstate
from .engine import run_trajectory
from .errors import ConfigError, FluortrajError
from .kraus import MeasurementConfig

OUTDIR_ENV = "FLUORTRAJ_OUTDIR"

_NAMED_STATES = {
    "ee": (1, 0, 0, 0),
    "eg": (0, 1, 0, 0),
    "ge": (0, 0, 1, 0),
    "gg": (0, 0, 0, 1),
    "phi+": (1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2)),
    "phi-": (1 / math.sqrt(2), 0, 0, -1 / math.sqrt(2)),
    "psi+": (0, 1 / math.sqrt(2), 1 / math.sqrt(2), 0),
    "psi-": (0, 1 / math.sqrt(2), -1 / math.sqrt(2), 0),
}

_DEFAULTS = {
    "scheme": "homodyne",
    "theta_deg": 0.0,
    "vartheta_deg": 90.0,
    "gamma": 1.0,
    "dt": 1e-3,
    "t_max": 4.0,
    "n": 10_000,
    "seed": 0,
    "initial": "ee",
    "sampler": "exact",
    "snapshot_stride": 10,
    "workers": 1,
    "threshold": 0.999,
    "n_samples": 100_000,
    "max_trajectories": 2_000_000,
    "deltas_deg": "0,30,45,60,90",
    "hermite_nodes": 7,
    "laguerre_nodes": 5,
    "angular_nodes": 8,
    "out": None,
}


@dataclasses.dataclass(frozen=True)
class RunSpec:
    """Fully resolved run description; echoed into every output sidecar."""

    command: str
    scheme: str
    theta_deg: float
    vartheta_deg: float
    gamma: float
    dt: float
    t_max: float
    n: int
    seed: int
    initial: str
    sampler: str
    snapshot_stride: int
    workers: int
    threshold: float
    n_samples: int
    max_trajectories: int
    deltas_deg: tuple
    hermite_nodes: int
    laguerre_nodes: int
    angular_nodes: int
    out: str | None

    def config(self) -> MeasurementConfig:
        return MeasurementConfig(
            scheme=self.scheme,
            theta=math.radians(self.theta_deg),
            vartheta=math.radians(self.vartheta_deg),
            gamma=self.gamma,
            dt=self.dt,
        )

    def initial_state(self) -> qstate.PureTwoQubitState:
        return parse_initial(self.initial)

    def sidecar(self) -> dict:
        d = dataclasses.asdict(self)
        d["deltas_deg"] = list(self.deltas_deg)
        d["version"] = __version__
        return {"run_spec": d}


def parse_initial(text: str) -> qstate.PureTwoQubitState:
    """Named state or four comma-separated complex amplitudes."""
    key = text.strip().lower()
    if key in _NAMED_STATES:
        return qstate.PureTwoQubitState(
            np.array(_NAMED_STATES[key], dtype=np.complex128)
        ).normalized()
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(
            f"initial state must be a name {sorted(_NAMED_STATES)} or four "
            f"comma-separated complex amplitudes, got {text!r}"
        )
    try:
        amps = [complex(p.strip().replace(" ", "")) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"could not parse amplitude in {text!r}: {exc}") from exc
    return qstate.PureTwoQubitState(np.array(amps, dtype=np.complex128)).normalized()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluortraj",
        description="Two-qubit entanglement generation by continuous fluorescence monitoring",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, need_out=True):
        p.add_argument("--config", help="JSON file with default values for any flag")
        p.add_argument("--scheme", choices=kraus.SCHEMES)
        p.add_argument("--theta-deg", type=float, dest="theta_deg")
        p.add_argument("--vartheta-deg", type=float, dest="vartheta_deg")
        p.add_argument("--gamma", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--t-max", type=float, dest="t_max")
        p.add_argument("--n", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--initial")
        p.add_argument("--sampler", choices=("exact", "gaussian"))
        p.add_argument("--snapshot-stride", type=int, dest="snapshot_stride")
        p.add_argument("--workers", type=int)
        p.add_argument("--out", required=False)

    p_sim = sub.add_parser("simulate", help="run one trajectory (--n 1) or an ensemble")
    add_common(p_sim)

    p_sweep = sub.add_parser("sweep", help="homodyne phase sweep with common random numbers")
    add_common(p_sweep)
    p_sweep.add_argument("--deltas-deg", dest="deltas_deg",
                         help="comma-separated vartheta-theta values in degrees")

    p_hist = sub.add_parser("histogram", help="heralded-state Bell-amplitude samples")
    add_common(p_hist)
    p_hist.add_argument("--threshold", type=float)
    p_hist.add_argument("--n-samples", type=int, dest="n_samples")
    p_hist.add_argument("--max-trajectories", type=int, dest="max_trajectories")

    p_val = sub.add_parser("validate", help="run the invariant suite and report pass/fail")
    add_common(p_val, need_out=False)
    p_val.add_argument("--hermite-nodes", type=int, dest="hermite_nodes")
    p_val.add_argument("--laguerre-nodes", type=int, dest="laguerre_nodes")
    p_val.add_argument("--angular-nodes", type=int, dest="angular_nodes")
    return parser


def parse_run_spec(argv) -> RunSpec:
    """Resolve argv plus optional config file into a validated RunSpec.

    Precedence: explicit flag > config-file key > built-in default.  Unknown
    config-file keys are hard errors.
    """
    args = _build_parser().parse_args(argv)
    file_values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config!r} is not valid JSON: {exc}") from exc
        unknown = set(file_values) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(
                f"unknown config key(s) {sorted(unknown)}; allowed: {sorted(_DEFAULTS)}"
            )

    def resolve(key):
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            return cli_val
        if key in file_values:
            return file_values[key]
        return _DEFAULTS[key]

    deltas_raw = resolve("deltas_deg")
    if isinstance(deltas_raw, str):
        try:
            deltas = tuple(float(x) for x in deltas_raw.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad deltas_deg value {deltas_raw!r}") from exc
    else:
        deltas = tuple(float(x) for x in deltas_raw)

    out = resolve("out")
    if out is not None:
        outdir = os.environ.get(OUTDIR_ENV)
        if outdir and not os.path.isabs(out):
            out = os.path.join(outdir, out)

    spec = RunSpec(
        command=args.command,
        scheme=resolve("scheme"),
        theta_deg=float(resolve("theta_deg")),
        vartheta_deg=float(resolve("vartheta_deg")),
        gamma=float(resolve("gamma")),
        dt=float(resolve("dt")),
        t_max=float(resolve("t_max")),
        n=int(resolve("n")),
        seed=int(resolve("seed")),
        initial=str(resolve("initial")),
        sampler=str(resolve("sampler")),
        snapshot_stride=int(resolve("snapshot_stride")),
        workers=int(resolve("workers")),
        threshold=float(resolve("threshold")),
        n_samples=int(resolve("n_samples")),
        max_trajectories=int(resolve("max_trajectories")),
        deltas_deg=deltas,
        hermite_nodes=int(resolve("hermite_nodes")),
        laguerre_nodes=int(resolve("laguerre_nodes")),
        angular_nodes=int(resolve("angular_nodes")),
        out=out,
    )
    if spec.command != "validate":
        spec.config()  # raises ConfigError on invalid gamma/dt/epsilon
        spec.initial_state()
        if spec.out is None:
            raise ConfigError("--out is required (key: out)")
        if spec.t_max <= 0:
            raise ConfigError("t_max must be positive (key: t_max)")
        if spec.n < 1:
            raise ConfigError("n must be >= 1 (key: n)")
    return spec


def _is_doubly_excited(state) -> bool:
    a = state.amps
    return abs(abs(a[0]) - 1.0) < 1e-12 and np.all(np.abs(a[1:]) < 1e-12)


def emit_timeseries(stats: ensemble.EnsembleStats, path, spec: RunSpec, analytic: bool):
    stats.to_csv(
        path,
        analytic_gamma=spec.gamma if analytic else None,
        sidecar=spec.sidecar(),
    )


def emit_histogram(samples, path, spec: RunSpec, n_run: int):
    """CSV of heralded Bell amplitudes plus a summary JSON sidecar."""
    if not samples:
        print(f"warning: no heralded samples; writing header-only file {path}",
              file=sys.stderr)
    with open(path, "w") as fh:
        fh.write("first_crossing_time,b,c,e,residual_abs,seed,step\n")
        for s in samples:
            a = s.amplitudes
            fh.write(
                f"{s.first_crossing_time!r},{a.b!r},{a.c!r},{a.e!r},"
                f"{abs(a.residual)!r},{s.seed},{s.step}\n"
            )
    summary = {"kind": "histogram", "n_samples": len(samples), "n_trajectories": n_run}
    for name in ("b", "c", "e"):
        vals = np.array([getattr(s.amplitudes, name) for s in samples]) if samples else np.array([])
        summary[name] = {
            "mean": float(vals.mean()) if len(vals) else None,
            "var": float(vals.var()) if len(vals) else None,
            "stderr": float(vals.std() / math.sqrt(len(vals))) if len(vals) else None,
        }
    summary.update(spec.sidecar())
    with open(str(path) + ".json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(spec: RunSpec) -> int:
    cfg = spec.config()
    initial = spec.initial_state()
    if spec.n == 1:
        rec = run_trajectory(
            initial, cfg, spec.t_max, ensemble.derive_stream_key(spec.seed, 0),
            snapshot_stride=spec.snapshot_stride, sampler=spec.sampler,
        )
        rec.to_csv(spec.out, sidecar=spec.sidecar())
        print(f"wrote trajectory ({rec.n_steps} steps) to {spec.out}")
        return 0
    stats = ensemble.run_ensemble(
        initial, cfg, spec.t_max, spec.n, spec.seed,
        workers=spec.workers, sampler=spec.sampler,
    )
    emit_timeseries(stats, spec.out, spec, analytic=_is_doubly_excited(initial))
    print(f"wrote ensemble of {spec.n} trajectories to {spec.out}")
    return 0


def cmd_sweep(spec: RunSpec) -> int:
    cfg = dataclasses.replace(spec.config(), scheme="homodyne")
    initial = spec.initial_state()
    deltas_rad = [math.radians(d) for d in spec.deltas_deg]
    stats_list = ensemble.phase_sweep(
        deltas_rad, cfg, initial, spec.t_max, spec.n, spec.seed,
        workers=spec.workers, sampler=spec.sampler,
    )
    base, ext = os.path.splitext(spec.out)
    for delta_deg, stats in zip(spec.deltas_deg, stats_list):
        path = f"{base}_d{delta_deg:g}deg{ext or '.csv'}"
        emit_timeseries(stats, path, spec, analytic=_is_doubly_excited(initial))
        print(f"wrote delta={delta_deg:g} deg ensemble to {path}")
    return 0


def cmd_histogram(spec: RunSpec) -> int:
    cfg = spec.config()
    samples, n_run = ensemble.collect_heralds(
        spec.initial_state(), cfg, spec.t_max, spec.n_samples, spec.seed,
        threshold=spec.threshold, max_trajectories=spec.max_trajectories,
        workers=spec.workers, sampler=spec.sampler,
    )
    emit_histogram(samples, spec.out, spec, n_run)
    print(f"wrote {len(samples)} heralded samples ({n_run} trajectories) to {spec.out}")
    return 0


def cmd_validate(spec: RunSpec) -> int:
    """Run the invariant suite; prints one pass/fail line per check."""
    checks = []
    eps = spec.gamma * spec.dt
    checks.append(("small-timestep bound 0 < eps < 0.05",
                   0.0 < eps < kraus.EPSILON_MAX, f"eps = {eps:g}"))
    cfg_ok = checks[-1][1] and spec.gamma > 0 and spec.dt > 0

    def run_check(name, fn, tol):
        if not cfg_ok:
            checks.append((name, False, "skipped: invalid base config"))
            return
        try:
            value = fn()
        except FluortrajError as exc:
            checks.append((name, False, str(exc)))
            return
        checks.append((name, value < tol, f"{value:.3e} (tol {tol:g})"))

    theta = math.radians(spec.theta_deg)
    vartheta = math.radians(spec.vartheta_deg)

    def mk(scheme):
        return MeasurementConfig(scheme, theta, vartheta, spec.gamma, spec.dt)

    run_check("photodetection completeness",
              lambda: kraus.completeness_defect(mk("photodetection")), 1e-13)
    run_check("homodyne completeness (Gauss-Hermite)",
              lambda: kraus.completeness_defect(
                  mk("homodyne"), hermite_nodes=spec.hermite_nodes), 1e-12)
    run_check("heterodyne completeness (radial-angular)",
              lambda: kraus.completeness_defect(
                  mk("heterodyne"), laguerre_nodes=spec.laguerre_nodes,
                  angular_nodes=spec.angular_nodes), 1e-10)

    def isometry_grid():
        worst = 0.0
        for e in np.linspace(1e-4, 0.04, 5):
            for th in np.linspace(0.0, math.pi, 5):
                for vt in np.linspace(0.0, math.pi, 5):
                    c = MeasurementConfig("homodyne", th, vt, 1.0, e)
                    prop = kraus.joint_propagator(c)
                    worst = max(worst, prop.isometry_defect(),
                                prop.eleven_component_max())
        return worst

    run_check("propagator isometry + |11> cancellation (5x5x5 grid)",
              isometry_grid, 1e-12)

    def determinant_law():
        rng = np.random.default_rng(20230817)
        worst = 0.0
        for _ in range(100):
            th, vt = rng.uniform(0, 2 * math.pi, 2)
            x3, x4 = rng.normal(0, 1.5, 2)
            e = rng.uniform(1e-4, 0.01)
            c = MeasurementConfig("homodyne", th, vt, 1.0, e)
            m = kraus.homodyne_kraus(c, x3, x4).matrix
            psi = m[:, 0]
            det = 2.0 * abs(psi[0] * psi[3] - psi[1] * psi[2])
            ref = (e * (1 - e) / math.pi * math.exp(-x3 * x3 - x4 * x4)
                   * abs(np.exp(2j * vt) - np.exp(2j * th)))
            worst = max(worst, abs(det - ref) / ref if ref > 0 else abs(det))
        return worst

    run_check("one-step entanglement law from the doubly excited state",
              determinant_law, 1e-12)

    def oracle_agreement():
        t, c = ensemble.mean_concurrence_ode(spec.gamma, 5.0 / spec.gamma, 1e-3 / spec.gamma)
        ref = np.array([ensemble.analytic_mean_concurrence(tk, spec.gamma) for tk in t])
        return float(np.max(np.abs(c - ref)))

    run_check("mean-concurrence ODE vs closed form", oracle_agreement, 1e-8)

    def which_path_norm():
        nodes, weights = np.polynomial.hermite.hermgauss(7)
        worst = 0.0
        for delta in (0.0, math.pi / 4, math.pi / 2):
            for port in (1, 2):
                total = 0.0
                for xa, wa in zip(nodes, weights):
                    for xb, wb in zip(nodes, weights):
                        total += wa * wb * kraus.which_path_density(
                            xa, xb, 0.0, delta, port) * math.exp(xa**2 + xb**2)
                worst = max(worst, abs(total - 1.0))
        return worst

    run_check("which-path density normalization", which_path_norm, 1e-10)

    width = max(len(name) for name, _, _ in checks)
    ok = True
    for name, passed, detail in checks:
        ok &= passed
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}  {detail}")
    return 0 if ok else 1


def main(argv=None) -> int:
    try:
        spec = parse_run_spec(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if spec.command == "simulate":
            return cmd_simulate(spec)
        if spec.command == "sweep":
            return cmd_sweep(spec)
        if spec.command == "histogram":
            return cmd_histogram(spec)
        return cmd_validate(spec)
    except FluortrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
