"""Seeded parallel trajectory ensembles, statistics, heralding, and analytic oracles.

Trajectories are split into fixed-size chunks of consecutive indices.  Each
chunk is reduced internally in index order and chunk partials are combined in
chunk order, so ensemble statistics are bit-identical for any worker count.
Workers are separate processes; everything sent across is plain arrays and
dataclasses.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import _kernels
from .engine import derive_stream_key, make_rng, run_trajectory
from .errors import ConfigError
from .kraus import MeasurementConfig
from .qstate import BellAmplitudes, PureTwoQubitState, bell_decompose

__all__ = [
    "EnsembleStats",
    "HeraldedSample",
    "run_ensemble",
    "analytic_mean_concurrence",
    "mean_concurrence_ode",
    "postselect_heralded",
    "collect_heralds",
    "phase_sweep",
]

CHUNK_SIZE = 256          # trajectories per reduction chunk (worker-count independent)
_HERALD_WAVE_CHUNKS = 16  # chunks per scheduling wave in collect_heralds


@dataclasses.dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Per-time-bin mean/std concurrence over an ensemble."""

    t: np.ndarray
    mean_concurrence: np.ndarray
    std_concurrence: np.ndarray
    n_trajectories: int
    fingerprint: str

    def to_csv(self, path, analytic_gamma: float | None = None, sidecar: dict | None = None):
        """CSV columns t, mean_concurrence, std_concurrence, analytic_reference
        (blank unless ``analytic_gamma`` is given) plus a JSON sidecar."""
        with open(path, "w") as fh:
            fh.write("t,mean_concurrence,std_concurrence,analytic_reference\n")
            for k in range(len(self.t)):
                ref = (
                    repr(analytic_mean_concurrence(float(self.t[k]), analytic_gamma))
                    if analytic_gamma is not None
                    else ""
                )
                fh.write(
                    f"{float(self.t[k])!r},{float(self.mean_concurrence[k])!r},"
                    f"{float(self.std_concurrence[k])!r},{ref}\n"
                )
        meta = {"kind": "ensemble", "n_trajectories": self.n_trajectories,
                "fingerprint": self.fingerprint}
        if sidecar:
            meta.update(sidecar)
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def read_csv(path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        return meta, data


@dataclasses.dataclass(frozen=True, eq=False)
class HeraldedSample:
    """First threshold crossing of one successful trajectory."""

    first_crossing_time: float
    amplitudes: BellAmplitudes
    seed: int
    step: int


def _fingerprint(initial, cfg, t_max, n, master_seed, sampler) -> str:
    payload = json.dumps(
        {
            "initial": [[a.real, a.imag] for a in initial.amps],
            "scheme": cfg.scheme,
            "theta": cfg.theta,
            "vartheta": cfg.vartheta,
            "gamma": cfg.gamma,
            "dt": cfg.dt,
            "t_max": t_max,
            "n": n,
            "master_seed": master_seed,
            "sampler": sampler,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _chunk_payload(initial, cfg, n_steps, master_seed, sampler, herald_threshold,
                   stop_at_herald):
    return (
        np.asarray(initial.normalized().amps),
        cfg.scheme, cfg.epsilon, cfg.theta, cfg.vartheta,
        n_steps, master_seed, sampler, herald_threshold, stop_at_herald,
    )


def _run_chunk(args):
    """Run trajectories [start, stop); return (sum, sumsq, heralds).

    Heralds are (index, step, psi4-complex-array) tuples in index order.
    Module-level so it pickles for process pools.
    """
    (payload, start, stop) = args
    (amps, scheme, eps, theta, vartheta, n_steps, master_seed, sampler,
     herald_threshold, stop_at_herald) = payload
    track_heralds = herald_threshold <= 1.0
    acc = np.zeros(n_steps + 1)
    acc_sq = np.zeros(n_steps + 1)
    conc = np.empty(n_steps + 1)
    herald_psi = np.zeros(4, dtype=np.complex128)
    dummy_snaps = np.zeros((1, 4), dtype=np.complex128)
    heralds = []
    fast = sampler == "gaussian"
    for index in range(start, stop):
        key = derive_stream_key(master_seed, index)
        rng = make_rng(key)
        psi = amps.astype(np.complex128).copy()
        if scheme == "photodetection":
            i3 = np.zeros(n_steps, dtype=np.int64)
            i4 = np.zeros(n_steps, dtype=np.int64)
            status, h_step, _, done = _kernels.run_traj_photodetection(
                psi, eps, theta, vartheta, n_steps, rng, conc, i3, i4,
                herald_threshold, stop_at_herald, herald_psi, 0, dummy_snaps,
            )
        elif scheme == "homodyne":
            x3 = np.empty(n_steps)
            x4 = np.empty(n_steps)
            status, h_step, _, done = _kernels.run_traj_homodyne(
                psi, eps, theta, vartheta, n_steps, rng, conc, x3, x4,
                herald_threshold, stop_at_herald, herald_psi, 0, dummy_snaps,
                fast, _kernels._GH_X, _kernels._GH_W,
            )
        else:
            r3 = np.empty(n_steps)
            j3 = np.empty(n_steps)
            r4 = np.empty(n_steps)
            j4 = np.empty(n_steps)
            status, h_step, _, done = _kernels.run_traj_heterodyne(
                psi, eps, theta, vartheta, n_steps, rng, conc, r3, j3, r4, j4,
                herald_threshold, stop_at_herald, herald_psi, 0, dummy_snaps,
            )
        if status != _kernels.STATUS_OK:
            raise RuntimeError(f"kernel status {status} in trajectory {index}")
        if not stop_at_herald:
            acc += conc
            acc_sq += conc * conc
        if track_heralds and h_step >= 0:
            heralds.append((index, int(h_step), key, herald_psi.copy()))
    return acc, acc_sq, heralds


def _run_chunks(chunks, workers):
    """Map _run_chunk over chunk argument tuples, in order."""
    if workers is None or workers <= 1:
        return [_run_chunk(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chunk, chunks))


def run_ensemble(
    initial: PureTwoQubitState,
    cfg: MeasurementConfig,
    t_max: float,
    n: int,
    master_seed: int,
    workers: int | None = None,
    sampler: str = "exact",
) -> EnsembleStats:
    """Mean/std concurrence curves over ``n`` independent seeded trajectories."""
    if n < 1:
        raise ConfigError("ensemble size must be >= 1")
    n_steps = int(math.ceil(t_max / cfg.dt - 1e-12))
    payload = _chunk_payload(initial, cfg, n_steps, master_seed, sampler, 2.0, False)
    chunks = [
        (payload, start, min(start + CHUNK_SIZE, n))
        for start in range(0, n, CHUNK_SIZE)
    ]
    total = np.zeros(n_steps + 1)
    total_sq = np.zeros(n_steps + 1)
    for acc, acc_sq, _ in _run_chunks(chunks, workers):
        total += acc
        total_sq += acc_sq
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    return EnsembleStats(
        t=np.arange(n_steps + 1) * cfg.dt,
        mean_concurrence=mean,
        std_concurrence=np.sqrt(var),
        n_trajectories=n,
        fingerprint=_fingerprint(initial, cfg, t_max, n, master_seed, sampler),
    )


def analytic_mean_concurrence(t: float, gamma: float) -> float:
    """Closed-form ensemble-average concurrence from the doubly excited state,
    2 e^{-gamma t}(1 - e^{-gamma t})."""
    if t < 0:
        raise ConfigError("t must be >= 0")
    x = math.exp(-gamma * t)
    return 2.0 * x * (1.0 - x)


def mean_concurrence_ode(gamma: float, t_max: float, dt_ode: float):
    """Integrate dC/dt = -gamma C + 2 gamma e^{-2 gamma t} from C(0) = 0 with
    classic fixed-step RK4; returns (t grid, C series)."""
    if dt_ode <= 0:
        raise ConfigError("dt_ode must be positive")
    n = int(math.ceil(t_max / dt_ode - 1e-12))
    t = np.arange(n + 1) * dt_ode
    c = np.empty(n + 1)
    c[0] = 0.0

    def f(tk, ck):
        return -gamma * ck + 2.0 * gamma * math.exp(-2.0 * gamma * tk)

    for k in range(n):
        tk = t[k]
        ck = c[k]
        k1 = f(tk, ck)
        k2 = f(tk + 0.5 * dt_ode, ck + 0.5 * dt_ode * k1)
        k3 = f(tk + 0.5 * dt_ode, ck + 0.5 * dt_ode * k2)
        k4 = f(tk + dt_ode, ck + dt_ode * k3)
        c[k + 1] = ck + dt_ode * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return t, c


def postselect_heralded(records, threshold: float = 0.999):
    """First-crossing samples from completed trajectory records.

    For each record whose concurrence ever exceeds ``threshold``, returns the
    first crossing step, the state there (from the snapshot if stored at that
    step, else recomputed by replay), and its Bell decomposition.
    """
    if not (0.0 < threshold < 1.0):
        raise ConfigError("threshold must lie in (0, 1)")
    samples = []
    for rec in records:
        above = np.nonzero(rec.concurrence > threshold)[0]
        if len(above) == 0:
            continue
        step = int(above[0])
        state = _state_at_step(rec, step)
        samples.append(
            HeraldedSample(
                first_crossing_time=float(rec.times[step]),
                amplitudes=bell_decompose(state),
                seed=rec.seed,
                step=step,
            )
        )
    return samples


def _state_at_step(rec, step):
    from . import kraus as kr
    from .engine import apply_kraus
    from .kraus import KrausOperator

    if step == 0:
        return rec.initial
    for t_snap, snap in rec.snapshots:
        if round(t_snap / rec.cfg.dt) == step:
            return snap
    blocks = kr.joint_propagator(rec.cfg).blocks
    psi = rec.initial
    for k in range(step):
        if rec.cfg.scheme == "photodetection":
            lab = (int(rec.readouts["n3"][k]), int(rec.readouts["m4"][k]))
            mat = blocks[:, :, kr.FOCK_LABELS.index(lab)]
        elif rec.cfg.scheme == "homodyne":
            mat = kr._contract(
                blocks,
                kr.quadrature_overlaps(rec.readouts["x3"][k]),
                kr.quadrature_overlaps(rec.readouts["x4"][k]),
            )
        else:
            a3 = complex(rec.readouts["re_a3"][k], rec.readouts["im_a3"][k])
            a4 = complex(rec.readouts["re_a4"][k], rec.readouts["im_a4"][k])
            mat = kr._contract(blocks, kr.coherent_overlaps(a3), kr.coherent_overlaps(a4))
        psi, _ = apply_kraus(psi, KrausOperator(mat, None))
    return psi


def collect_heralds(
    initial: PureTwoQubitState,
    cfg: MeasurementConfig,
    t_max: float,
    n_samples: int,
    master_seed: int,
    threshold: float = 0.999,
    max_trajectories: int = 10_000_000,
    workers: int | None = None,
    sampler: str = "exact",
):
    """Run trajectories (stopping each at its first crossing) until
    ``n_samples`` heralded samples are collected or ``max_trajectories`` is hit.

    Scheduling proceeds in fixed-size waves of chunks, so the trajectory set
    examined (and therefore the result) is independent of the worker count.
    Returns (samples, n_trajectories_run).
    """
    if not (0.0 < threshold < 1.0):
        raise ConfigError("threshold must lie in (0, 1)")
    n_steps = int(math.ceil(t_max / cfg.dt - 1e-12))
    payload = _chunk_payload(initial, cfg, n_steps, master_seed, sampler, threshold, True)
    raw = []
    start = 0
    while len(raw) < n_samples and start < max_trajectories:
        wave_end = min(start + _HERALD_WAVE_CHUNKS * CHUNK_SIZE, max_trajectories)
        chunks = [
            (payload, s, min(s + CHUNK_SIZE, wave_end))
            for s in range(start, wave_end, CHUNK_SIZE)
        ]
        for _, _, heralds in _run_chunks(chunks, workers):
            raw.extend(heralds)
        start = wave_end
    raw = raw[:n_samples]
    samples = [
        HeraldedSample(
            first_crossing_time=step * cfg.dt,
            amplitudes=bell_decompose(PureTwoQubitState(psi)),
            seed=key,
            step=step,
        )
        for (_, step, key, psi) in raw
    ]
    return samples, start


def phase_sweep(
    deltas,
    base_cfg: MeasurementConfig,
    initial: PureTwoQubitState,
    t_max: float,
    n: int,
    master_seed: int,
    workers: int | None = None,
    sampler: str = "exact",
):
    """One homodyne ensemble per phase difference vartheta - theta (radians).

    All ensembles share the same per-trajectory seeds (common random numbers),
    which makes the phase-ordering comparison nearly noise-free.
    """
    out = []
    for delta in deltas:
        cfg = dataclasses.replace(base_cfg, theta=0.0, vartheta=float(delta))
        out.append(run_ensemble(initial, cfg, t_max, n, master_seed, workers, sampler))
    return out
