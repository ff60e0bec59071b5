"""End-to-end experiment pipeline: config, simulation stages, mitigation, observables.

Stages communicate through plain files in the output directory so that each
can be re-run on its own:

    build     -> circuit_wp.txt, circuit_vac.txt
    simulate  -> ideal.npz, dist/step<k>_<wp|vac>_<phys|nec>.json
    mitigate  -> mitigated.npz   (every (epsilon, n_C) candidate, no bootstrap)
    scan      -> selected.npz    (per-step choice plus bootstrap errors)
    report    -> results.csv, summary.json, occupation.svg
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .backends.mps import mps_all_expectation_z, mps_evolve
from .backends.stabilizer import StabilizerTableau, pauli_frame_sample_steps, tableau_evolve
from .backends.statevector import (DEFAULT_MAX_QUBITS, StateVector, all_expectation_z,
                                   basis_vector, noisy_trajectory_sample_steps, statevector_evolve)
from .circuit import (Circuit, Experiment, build_trotter_circuit, clifford_round, export_gatelist,
                      make_experiment, twirl_circuit)
from .counts import BitstringDistribution
from .mitigation import MitigationConfig, MitigationError, mitigated_z, scan_hyperparams
from .model import ModelParams
from .noise import NoiseModel
from .observables import TimeSeriesResult, central_flux, occupation_profile

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "ideal_z_series",
    "noisy_samples",
    "nec_references",
    "run_experiment",
    "emit_report",
    "read_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("step", "time", "site", "occupation", "occupation_std", "flux", "flux_std",
               "epsilon", "n_C")
ROLES = ("wp", "vac")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass
class ExperimentConfig:
    """Validated experiment description (see ``README.md`` for the YAML layout)."""

    model: ModelParams
    kind: str = "ep_scatter"
    separation: Optional[int] = None
    physics_backend: str = "exact"
    mps_tol: float = 1e-8
    max_qubits: int = DEFAULT_MAX_QUBITS
    noise: Optional[NoiseModel] = None
    twirls: int = 500
    shots_per_twirl: int = 100
    shots_per_trajectory: int = 1
    batch_size: int = 10
    epsilons: tuple = (0.05,)
    n_Cs: tuple = (4,)
    bootstrap_count: int = 100
    clamp: str = "direct"
    seeds: dict = field(default_factory=dict)
    steps: Optional[tuple] = None
    out_dir: str = "out"
    workers: int = 1

    @property
    def total_shots(self) -> int:
        return self.twirls * self.shots_per_twirl

    @property
    def noiseless(self) -> bool:
        return self.noise is None or self.noise.is_noiseless

    def step_list(self) -> list:
        if self.steps is None:
            return list(range(1, self.model.n_steps + 1))
        return list(self.steps)

    def experiment(self) -> Experiment:
        return make_experiment(self.kind, self.model.L, self.separation)

    def seed(self, name: str) -> int:
        return int(self.seeds[name])

    def to_dict(self) -> dict:
        d = {
            "model": asdict(self.model),
            "experiment": {"kind": self.kind, "separation": self.separation},
            "backend": {"physics": self.physics_backend, "mps_tol": self.mps_tol,
                        "max_qubits": self.max_qubits, "reference": "stabilizer"},
            "noise": None if self.noise is None else {
                "p2q": self.noise.p2q, "p1q": self.noise.p1q, "p_ro": self.noise.p_ro},
            "shots": {"twirls": self.twirls, "per_twirl": self.shots_per_twirl,
                      "per_trajectory": self.shots_per_trajectory, "batch_size": self.batch_size},
            "mitigation": {"epsilon": list(self.epsilons), "n_C": list(self.n_Cs),
                           "bootstrap_count": self.bootstrap_count, "clamp": self.clamp},
            "seeds": dict(self.seeds),
            "steps": None if self.steps is None else list(self.steps),
            "output": {"dir": self.out_dir},
            "workers": self.workers,
        }
        return d


_SEED_NAMES = ("twirl", "noise", "bootstrap")


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _parse_steps(spec, n_steps: int):
    if spec is None:
        return None
    if isinstance(spec, str):
        lo, _, hi = spec.partition("-")
        steps = list(range(int(lo), int(hi or lo) + 1))
    else:
        steps = [int(s) for s in _as_list(spec)]
    if not steps or any(not 1 <= s <= n_steps for s in steps):
        raise ConfigError(f"steps must lie in [1, {n_steps}], got {spec!r}")
    return tuple(sorted(set(steps)))


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed YAML mapping; every problem raises ``ConfigError``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {"model", "experiment", "backend", "noise", "shots", "mitigation", "seeds", "steps",
             "output", "workers"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        model = ModelParams(**(raw.get("model") or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    seeds = raw.get("seeds")
    if not isinstance(seeds, dict):
        raise ConfigError("a 'seeds' section with integer seeds is required")
    missing = [s for s in _SEED_NAMES if s not in seeds]
    if missing:
        raise ConfigError(f"missing seeds: {missing}")
    for k, v in seeds.items():
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"seed {k!r} must be a non-negative integer, got {v!r}")
    exp = raw.get("experiment") or {}
    backend = raw.get("backend") or {}
    shots = raw.get("shots") or {}
    mit = raw.get("mitigation") or {}
    out = raw.get("output") or {}
    noise_raw = raw.get("noise")
    try:
        noise = None if noise_raw is None else NoiseModel(**noise_raw)
        if noise is not None:
            noise.validate_for(model.L)
        cfg = ExperimentConfig(
            model=model,
            kind=str(exp.get("kind", "ep_scatter")),
            separation=exp.get("separation"),
            physics_backend=str(backend.get("physics", "exact")),
            mps_tol=float(backend.get("mps_tol", 1e-8)),
            max_qubits=int(backend.get("max_qubits", DEFAULT_MAX_QUBITS)),
            noise=noise,
            twirls=int(shots.get("twirls", 500)),
            shots_per_twirl=int(shots.get("per_twirl", 100)),
            shots_per_trajectory=int(shots.get("per_trajectory", 1)),
            batch_size=int(shots.get("batch_size", 10)),
            epsilons=tuple(float(e) for e in _as_list(mit.get("epsilon", 0.05))),
            n_Cs=tuple(int(n) for n in _as_list(mit.get("n_C", 4))),
            bootstrap_count=int(mit.get("bootstrap_count", 100)),
            clamp=str(mit.get("clamp", "direct")),
            seeds={k: int(v) for k, v in seeds.items()},
            steps=_parse_steps(raw.get("steps"), model.n_steps),
            out_dir=str(out.get("dir", "out")),
            workers=int(raw.get("workers", 1)),
        )
        cfg.experiment()
        for e in cfg.epsilons:
            for n in cfg.n_Cs:
                MitigationConfig(e, n, cfg.bootstrap_count, cfg.clamp)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if cfg.physics_backend not in ("exact", "mps"):
        raise ConfigError(f"backend.physics must be 'exact' or 'mps', got {cfg.physics_backend!r}")
    if cfg.physics_backend == "mps" and not cfg.noiseless:
        raise ConfigError("noisy runs need the exact backend; the MPS backend is noiseless")
    if cfg.physics_backend == "exact" and model.L > cfg.max_qubits:
        raise ConfigError(f"L={model.L} exceeds the statevector limit {cfg.max_qubits}; use mps")
    if min(cfg.twirls, cfg.shots_per_twirl, cfg.batch_size, cfg.workers) < 1:
        raise ConfigError("twirls, per_twirl, batch_size and workers must be >= 1")
    if cfg.shots_per_twirl % cfg.shots_per_trajectory:
        raise ConfigError("shots.per_twirl must be a multiple of shots.per_trajectory")
    if not cfg.epsilons or not cfg.n_Cs:
        raise ConfigError("mitigation grid is empty")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return config_from_dict(raw)


# --- circuits ------------------------------------------------------------------

def circuits(cfg: ExperimentConfig) -> dict:
    exp = cfg.experiment()
    return {"wp": (build_trotter_circuit(cfg.model, exp), exp.initial),
            "vac": (build_trotter_circuit(cfg.model, exp.background()), exp.background().initial)}


# --- ideal simulation ----------------------------------------------------------

def _step_slices(circuit: Circuit):
    start = 0
    for end in circuit.step_marks:
        yield replace(circuit, layers=circuit.layers[start:end], step_marks=(end - start,))
        start = end


def ideal_z_series(circuit: Circuit, initial, backend: str = "exact", tol: float = 1e-8,
                   max_qubits: int = DEFAULT_MAX_QUBITS) -> np.ndarray:
    """Per-site ``<Z>`` after steps ``0..n_steps``, shape ``(n_steps + 1, L)``."""
    out = [initial.z_values()]
    if backend == "exact":
        if initial.L > max_qubits:
            raise ValueError(f"{initial.L} qubits exceed the statevector limit of {max_qubits}")
        from .backends import _kernels as K
        from .backends.statevector import _compile
        psi = basis_vector(initial)
        for part in _step_slices(circuit):
            kinds, q1, q2, mats, _ = _compile(part)
            if len(kinds):
                K.run_circuit(psi, kinds, q1, q2, mats)
            out.append(all_expectation_z(StateVector(psi, initial.L)))
    elif backend == "mps":
        state = None
        for part in _step_slices(circuit):
            state = mps_evolve(part, initial if state is None else state, tol)
            out.append(mps_all_expectation_z(state))
        if state is not None:
            logger.info("mps: max bond %d, truncation %.3g", max(state.bond_dimensions(), default=1),
                        state.truncation_error)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return np.array(out)


# --- noisy sampling -----------------------------------------------------------

def _twirl_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def _run_batch(args):
    circuit, initial, noise, steps, twirl_seed, noise_seed, first, count, per_twirl, per_traj = args
    phys = [None] * len(steps)
    nec = [None] * len(steps)
    for t in range(first, first + count):
        tw = twirl_circuit(circuit, _twirl_seed(twirl_seed, t))
        s_phys, s_nec = np.random.SeedSequence([noise_seed, t]).spawn(2)
        p = noisy_trajectory_sample_steps(tw, noise, per_twirl, s_phys, initial, steps,
                                          shots_per_trajectory=per_traj)
        n = pauli_frame_sample_steps(clifford_round(tw), noise, per_twirl, s_nec, initial, steps)
        phys = [d if acc is None else acc.merged(d) for acc, d in zip(phys, p)]
        nec = [d if acc is None else acc.merged(d) for acc, d in zip(nec, n)]
    return phys, nec


def noisy_samples(circuit: Circuit, initial, noise: NoiseModel, steps, *, twirls: int,
                  shots_per_twirl: int, twirl_seed: int, noise_seed: int, batch_size: int = 10,
                  shots_per_trajectory: int = 1, workers: int = 1):
    """Physics and noise-estimation samples after each step, summed over twirl instances.

    Twirl ``t`` always uses seeds derived from ``(seed, t)``, so batches can
    run in any order or on any worker and merge to identical counts.
    """
    steps = list(steps)
    jobs = [(circuit, initial, noise, steps, twirl_seed, noise_seed, b,
             min(batch_size, twirls - b), shots_per_twirl, shots_per_trajectory)
            for b in range(0, twirls, batch_size)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch, jobs))
    else:
        results = [_run_batch(j) for j in jobs]
    phys = [None] * len(steps)
    nec = [None] * len(steps)
    for p, n in results:
        phys = [d if acc is None else acc.merged(d) for acc, d in zip(phys, p)]
        nec = [d if acc is None else acc.merged(d) for acc, d in zip(nec, n)]
    return phys, nec


def nec_references(circuit: Circuit, initial, steps) -> list:
    """Ideal tableaus of the Clifford-rounded prefix circuits.

    Twirl Paulis compose to the identity on the ideal circuit, so one
    untwirled reference serves every twirl instance.
    """
    rounded = clifford_round(circuit)
    tab = StabilizerTableau.from_basis_state(initial)
    out = {}
    parts = list(_step_slices(rounded))
    want = set(steps)
    if 0 in want:
        out[0] = tab.copy()
    for s, part in enumerate(parts, 1):
        tab = tableau_evolve(part, tab)
        if s in want:
            out[s] = tab.copy()
    return [out[s] for s in steps]


# --- file stages ----------------------------------------------------------------

def _dist_path(out: Path, step: int, role: str, kind: str) -> Path:
    return out / "dist" / f"step{step:03d}_{role}_{kind}.json"


def stage_build(cfg: ExperimentConfig) -> list:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for role, (circ, _) in circuits(cfg).items():
        p = out / f"circuit_{role}.txt"
        p.write_text(export_gatelist(circ))
        paths.append(p)
    return paths


def stage_simulate(cfg: ExperimentConfig) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps = cfg.step_list()
    ideal = {}
    for role, (circ, init) in circuits(cfg).items():
        z = ideal_z_series(circ, init, cfg.physics_backend, cfg.mps_tol, cfg.max_qubits)
        ideal[role] = z
        if cfg.noiseless:
            continue
        phys, nec = noisy_samples(circ, init, cfg.noise, steps, twirls=cfg.twirls,
                                  shots_per_twirl=cfg.shots_per_twirl,
                                  twirl_seed=cfg.seed("twirl"), noise_seed=cfg.seed("noise") + (role == "vac"),
                                  batch_size=cfg.batch_size,
                                  shots_per_trajectory=cfg.shots_per_trajectory, workers=cfg.workers)
        (out / "dist").mkdir(exist_ok=True)
        for s, dp, dn in zip(steps, phys, nec):
            _dist_path(out, s, role, "phys").write_text(dp.to_json())
            _dist_path(out, s, role, "nec").write_text(dn.to_json())
    np.savez(out / "ideal.npz", wp=ideal["wp"], vac=ideal["vac"])


def _load_dist(out: Path, step: int, role: str, kind: str) -> BitstringDistribution:
    return BitstringDistribution.from_json(_dist_path(out, step, role, kind).read_text())


def stage_mitigate(cfg: ExperimentConfig) -> None:
    out = Path(cfg.out_dir)
    steps = cfg.step_list()
    grid = [(e, n) for e in cfg.epsilons for n in cfg.n_Cs]
    L = cfg.model.L
    vals = {role: np.full((len(grid), len(steps), L), np.nan) for role in ROLES}
    raw = {role: np.zeros((len(steps), L)) for role in ROLES}
    for role, (circ, init) in circuits(cfg).items():
        refs = nec_references(circ, init, steps)
        for k, s in enumerate(steps):
            zp = _load_dist(out, s, role, "phys")
            zn = _load_dist(out, s, role, "nec")
            raw[role][k] = zp.expectation_z()
            for g, (e, n) in enumerate(grid):
                res = mitigated_z(zp, zn, refs[k], MitigationConfig(e, n, 0, cfg.clamp))
                vals[role][g, k] = res.values
                for site, msg in res.errors.items():
                    logger.warning("step %d %s site %d (eps=%g, n_C=%d): %s", s, role, site, e, n, msg)
    np.savez(out / "mitigated.npz", grid=np.array(grid, dtype=float), steps=np.array(steps),
             wp=vals["wp"], vac=vals["vac"], raw_wp=raw["wp"], raw_vac=raw["vac"])


def stage_scan(cfg: ExperimentConfig) -> None:
    """Pick ``(epsilon, n_C)`` per step against the ideal reference, then bootstrap it.

    Wave-packet and vacuum runs share the choice: the summed squared RMSE of
    both is minimized.
    """
    out = Path(cfg.out_dir)
    mit = np.load(out / "mitigated.npz")
    ideal = np.load(out / "ideal.npz")
    steps = [int(s) for s in mit["steps"]]
    grid = [(float(e), int(n)) for e, n in mit["grid"]]
    ref = np.concatenate([ideal["wp"][steps], ideal["vac"][steps]], axis=1)
    cands = {g: np.concatenate([mit["wp"][i], mit["vac"][i]], axis=1) for i, g in enumerate(grid)}
    choice = scan_hyperparams(cands, ref)
    z = {role: np.zeros((len(steps), cfg.model.L)) for role in ROLES}
    zs = {role: np.zeros((len(steps), cfg.model.L)) for role in ROLES}
    rng = np.random.SeedSequence(cfg.seed("bootstrap"))
    boot_seeds = rng.spawn(2 * len(steps))
    for role_i, (role, (circ, init)) in enumerate(circuits(cfg).items()):
        refs = nec_references(circ, init, steps)
        for k, s in enumerate(steps):
            c = MitigationConfig(choice[k].epsilon, choice[k].n_C, cfg.bootstrap_count, cfg.clamp)
            res = mitigated_z(_load_dist(out, s, role, "phys"), _load_dist(out, s, role, "nec"),
                              refs[k], c, seed=boot_seeds[2 * k + role_i])
            if res.errors:
                raise MitigationError(f"step {s}, {role}: " + "; ".join(
                    f"site {i}: {m}" for i, m in sorted(res.errors.items())))
            z[role][k], zs[role][k] = res.values, res.std
    np.savez(out / "selected.npz", steps=np.array(steps), wp=z["wp"], vac=z["vac"],
             wp_std=zs["wp"], vac_std=zs["vac"],
             epsilon=np.array([c.epsilon for c in choice]), n_C=np.array([c.n_C for c in choice]),
             rmse=np.array([c.rmse for c in choice]))


def assemble_result(cfg: ExperimentConfig) -> TimeSeriesResult:
    out = Path(cfg.out_dir)
    steps = cfg.step_list()
    L = cfg.model.L
    if cfg.noiseless:
        ideal = np.load(out / "ideal.npz")
        zw, zv = ideal["wp"][steps], ideal["vac"][steps]
        sw, sv = np.zeros_like(zw), np.zeros_like(zv)
        eps, ncs = [None] * len(steps), [None] * len(steps)
    else:
        sel = np.load(out / "selected.npz")
        zw, zv, sw, sv = sel["wp"], sel["vac"], sel["wp_std"], sel["vac_std"]
        eps = [float(e) for e in sel["epsilon"]]
        ncs = [int(n) for n in sel["n_C"]]
    occ = np.zeros((len(steps), L - 1))
    occ_s = np.zeros_like(occ)
    flux = np.zeros(len(steps))
    flux_s = np.zeros(len(steps))
    for k in range(len(steps)):
        occ[k], occ_s[k] = occupation_profile(zw[k], zv[k], sw[k], sv[k])
        flux[k], flux_s[k] = central_flux(zw[k], L, sw[k])
    meta = {"config": cfg.to_dict(), "total_shots": None if cfg.noiseless else cfg.total_shots}
    return TimeSeriesResult(L, steps, cfg.model.dt, occ, occ_s, flux, flux_s, eps, ncs, meta)


def run_experiment(cfg: ExperimentConfig) -> TimeSeriesResult:
    """Every stage in order; returns the assembled result and writes the report files."""
    stage_build(cfg)
    stage_simulate(cfg)
    if not cfg.noiseless:
        stage_mitigate(cfg)
        stage_scan(cfg)
    result = assemble_result(cfg)
    emit_report(result, cfg.out_dir)
    return result


# --- report -------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(result: TimeSeriesResult, out_dir, formats=("csv", "json", "svg")) -> list:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if "csv" in formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k, step in enumerate(result.steps):
            for i in range(result.L - 1):
                w.writerow([step, _fmt(float(step * result.dt)), i + 1,
                            _fmt(float(result.occupation[k, i])), _fmt(float(result.occupation_std[k, i])),
                            _fmt(float(result.flux[k])), _fmt(float(result.flux_std[k])),
                            _fmt(result.epsilon[k]), _fmt(result.n_C[k])])
        (out / "results.csv").write_text(buf.getvalue())
        written.append(out / "results.csv")
    if "json" in formats:
        summary = {
            "L": result.L,
            "steps": list(result.steps),
            "dt": result.dt,
            "flux": [float(f) for f in result.flux],
            "flux_std": [float(f) for f in result.flux_std],
            "total_occupation": [float(v) for v in result.occupation.sum(axis=1)],
            "epsilon": list(result.epsilon),
            "n_C": list(result.n_C),
            "metadata": result.metadata,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        written.append(out / "summary.json")
    if "svg" in formats and len(result.steps):
        written.append(_heatmap(result, out / "occupation.svg"))
    return written


def _heatmap(result: TimeSeriesResult, path: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "qlmsim"
    fig, ax = plt.subplots(figsize=(6, 4))
    extent = (0.5, result.L - 0.5, result.steps[-1] * result.dt + 0.5 * result.dt,
              result.steps[0] * result.dt - 0.5 * result.dt)
    im = ax.imshow(result.occupation, aspect="auto", cmap="magma", extent=extent,
                   interpolation="nearest")
    ax.set_xlabel("matter site")
    ax.set_ylabel("time")
    fig.colorbar(im, ax=ax, label="occupation")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def read_csv(path) -> list:
    """Rows of a results CSV as dicts with typed values."""
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "step": int(r["step"]), "time": float(r["time"]), "site": int(r["site"]),
                "occupation": float(r["occupation"]), "occupation_std": float(r["occupation_std"]),
                "flux": float(r["flux"]), "flux_std": float(r["flux_std"]),
                "epsilon": float(r["epsilon"]) if r["epsilon"] else None,
                "n_C": int(r["n_C"]) if r["n_C"] else None,
            })
    return rows
