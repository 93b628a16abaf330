"""Offline and online stages, evaluation and studies, with on-disk artifacts.

Output directory layout::

    manifest.json
    offline/lo/cand_NNNN.{bin,json}     low-fidelity candidates
    offline/hi/cand_NNNN.{bin,json}     high-fidelity runs at selected nodes
    offline/model/                      selection + aligned bases
    eval/{lo,hi}_NNNN.{bin,json}        held-out runs
    online/bifi_NNNN.{bin,json}         bi-fidelity outputs
    errors.csv, errors_per_sample.csv, convergence.csv,
    energy.csv, energy_summary.json

Every sample is written to its own file by whichever worker computed it; the
index is built afterwards, so completion order never affects the output.
Existing files whose checksum matches are reused, which makes an interrupted
sweep resumable.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, io
from .bifidelity import BiFiModel, build_model, greedy_select
from .config import RunConfig
from .diagnostics import (
    bifi_predict,
    convergence_study,
    energy_report,
    mean_l2_error,
    primary,
    write_convergence_csv,
    write_csv,
)
from .errors import BifiError, ConfigError, MissingArtifact, NumericalError
from .random_inputs import ParameterSample, draw_samples
from .simulate import run_high_fidelity, run_kinetic, run_low_fidelity
from .snapshot import Snapshot, SnapshotSet

log = logging.getLogger(__name__)

OFFLINE_SECTIONS = ("model", "grid", "lofi", "kl", "initial")
OFFLINE_SAMPLING = ("seed", "distribution", "M", "K")
PER_SAMPLE_COLUMNS = ["sample", "component", "err_bi", "err_lo"]

# per-process cache so workers build the KL basis once
_WORKER = {}


def _problem(cfg: RunConfig):
    key = cfg.hash()
    if _WORKER.get("key") != key:
        _WORKER.update(key=key, problem=cfg.problem())
    return _WORKER["problem"]


def _run_one(args):
    """Worker entry point: compute one snapshot and write it to ``stem``."""
    cfg_dict, fidelity, z, stem, index = args
    cfg = RunConfig.from_dict(cfg_dict)
    problem = _problem(cfg)
    try:
        if fidelity == "lo":
            snap = run_low_fidelity(z, problem, cfg.lofi, sample_id=index)
        else:
            snap = run_high_fidelity(z, problem, sample_id=index)
    except BifiError as exc:
        return index, f"{type(exc).__name__}: {exc}", 0
    snap.meta["sample_index"] = index
    snap.save(stem)
    return index, None, snap.meta.get("clamped_points", 0)


@dataclass
class SweepResult:
    done: list
    failed: dict
    reused: int
    clamped: int
    seconds: float


def sweep(cfg: RunConfig, fidelity: str, samples, stems) -> SweepResult:
    """Run (or reuse) one snapshot per sample, in parallel when configured."""
    t0 = time.perf_counter()
    todo = []
    reused = 0
    for s, stem in zip(samples, stems):
        if Snapshot.is_valid(stem):
            reused += 1
        else:
            todo.append((cfg.to_dict(), fidelity, s.z, str(stem), s.index))
    if cfg.run.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            results = list(pool.map(_run_one, todo, chunksize=max(1, len(todo) // (4 * cfg.run.workers))))
    else:
        results = [_run_one(t) for t in todo]
    failed = {i: msg for i, msg, _ in results if msg is not None}
    clamped = sum(c for _, msg, c in results if msg is None)
    done = [s.index for s in samples if s.index not in failed]
    return SweepResult(done, failed, reused, clamped, time.perf_counter() - t0)


# ----------------------------------------------------------------- manifest


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def _offline_key(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    key = {s: d[s] for s in OFFLINE_SECTIONS}
    key["sampling"] = {k: d["sampling"][k] for k in OFFLINE_SAMPLING}
    key["t_final"] = d["run"]["t_final"]
    key["cfl"] = d["run"]["cfl"]
    return key


def read_manifest(out: Path) -> dict:
    p = _manifest_path(out)
    return io.read_json(p) if p.exists() else {}


def update_manifest(cfg: RunConfig, stage: str, files: dict, info: dict) -> dict:
    out = cfg.out
    man = read_manifest(out)
    man.update(
        version=__version__,
        config_hash=cfg.hash(),
        config=cfg.to_dict(),
    )
    inv = man.setdefault("inventory", {})
    for path, digest in files.items():
        inv[str(Path(path).relative_to(out))] = digest
    man.setdefault("stages", {})[stage] = info
    warnings = info.get("warnings", [])
    if warnings:
        man.setdefault("warnings", {})[stage] = warnings
    io.write_json(_manifest_path(out), man)
    return man


def verify_inventory(out: Path, prefix: str = "") -> None:
    """Raise if any inventoried file under ``prefix`` is missing or corrupt."""
    man = read_manifest(out)
    if not man:
        raise MissingArtifact(f"no manifest in {out}; run the offline stage first")
    for rel, digest in man.get("inventory", {}).items():
        if not rel.startswith(prefix):
            continue
        p = out / rel
        if not p.exists():
            raise MissingArtifact(f"inventoried file {p} is missing")
        if io.file_sha256(p) != digest:
            raise MissingArtifact(f"checksum mismatch for {p}")


def _snapshot_files(stem: Path) -> dict:
    b = stem.with_suffix(".bin")
    return {b: io.file_sha256(b)}


# ------------------------------------------------------------------ stages


def train_samples(cfg: RunConfig, problem=None) -> list[ParameterSample]:
    problem = problem or _problem(cfg)
    s = cfg.sampling
    return draw_samples(s.M, problem.z_dim, s.distribution, s.seed, "train")


def eval_samples(cfg: RunConfig, problem=None) -> list[ParameterSample]:
    problem = problem or _problem(cfg)
    s = cfg.sampling
    return draw_samples(s.M_eval, problem.z_dim, s.distribution, s.seed, "eval")


def _check_failures(cfg: RunConfig, res: SweepResult, total: int, what: str) -> None:
    if len(res.failed) > cfg.run.max_failure_fraction * total:
        first = next(iter(res.failed.items()))
        raise NumericalError(f"{len(res.failed)}/{total} {what} runs failed; first: sample {first[0]}: {first[1]}")


def cmd_offline(cfg: RunConfig) -> BiFiModel:
    """Low-fidelity sweep, greedy selection and high-fidelity runs at the nodes."""
    out = cfg.out
    problem = _problem(cfg)
    samples = train_samples(cfg, problem)
    lo_dir, hi_dir = out / "offline" / "lo", out / "offline" / "hi"
    lo_stems = [lo_dir / f"cand_{s.index:04d}" for s in samples]
    lo_res = sweep(cfg, "lo", samples, lo_stems)
    _check_failures(cfg, lo_res, len(samples), "low-fidelity")

    t0 = time.perf_counter()
    ok = lo_res.done
    candidates = SnapshotSet(primary([Snapshot.load(lo_stems[i]) for i in ok]))
    selection = greedy_select(candidates, cfg.sampling.K)
    # map positions within the successful subset back to sample indices
    nodes = [ok[int(p)] for p in selection.pivots]
    t_select = time.perf_counter() - t0

    hi_samples = [samples[i] for i in nodes]
    hi_stems = [hi_dir / f"cand_{i:04d}" for i in nodes]
    hi_res = sweep(cfg, "hi", hi_samples, hi_stems)
    if hi_res.failed:
        raise NumericalError(f"high-fidelity runs failed at nodes {sorted(hi_res.failed)}")

    hi_basis = primary([Snapshot.load(st) for st in hi_stems])
    model = build_model(selection, list(candidates), hi_basis)
    model_dir = out / "offline" / "model"
    inventory = {model_dir / k: v for k, v in model.save(model_dir).items()}
    for st in lo_stems:
        if Path(st).with_suffix(".bin").exists():
            inventory.update(_snapshot_files(st))
    for st in hi_stems:
        inventory.update(_snapshot_files(st))
    warnings = [f"sample {i}: {m}" for i, m in sorted(lo_res.failed.items())]
    clamped = lo_res.clamped + hi_res.clamped
    if clamped:
        warnings.append(f"{clamped} grid points had non-positive KL factors and were clamped")
    update_manifest(
        cfg,
        "offline",
        inventory,
        {
            "offline_key": _offline_key(cfg),
            "nodes": nodes,
            "lo_runs": len(lo_stems),
            "hi_runs": len(hi_stems),
            "lo_reused": lo_res.reused,
            "hi_reused": hi_res.reused,
            "timings_s": {"lo_sweep": lo_res.seconds, "select": t_select, "hi_sweep": hi_res.seconds},
            "condition_number": model.condition_number(),
            "warnings": warnings,
        },
    )
    log.info("offline: %d candidates, nodes %s", len(ok), nodes)
    return model


def load_model(cfg: RunConfig) -> BiFiModel:
    out = cfg.out
    man = read_manifest(out)
    if "offline" not in man.get("stages", {}):
        raise MissingArtifact(f"no offline artifacts in {out}; run the offline stage first")
    if man["stages"]["offline"]["offline_key"] != _offline_key(cfg):
        raise ConfigError("offline artifacts were produced with a different configuration")
    verify_inventory(out, "offline/model")
    return BiFiModel.load(out / "offline" / "model")


@dataclass
class OnlineResult:
    snapshots: list
    lo_seconds: list
    total_seconds: list

    @property
    def overhead_ratio(self) -> float:
        """Mean online time per query over mean low-fidelity run time."""
        return float(np.mean(self.total_seconds) / np.mean(self.lo_seconds))


def online_query(z, cfg: RunConfig, model: BiFiModel, problem=None):
    """One low-fidelity run, Galerkin projection and reconstruction."""
    problem = problem or _problem(cfg)
    t0 = time.perf_counter()
    lo = run_low_fidelity(z, problem, cfg.lofi)
    t1 = time.perf_counter()
    (bifi,) = bifi_predict(model, [lo], cfg.run.projection)
    t2 = time.perf_counter()
    return bifi, t1 - t0, t2 - t0


def cmd_online(cfg: RunConfig, queries=None, write: bool = True) -> OnlineResult:
    """Bi-fidelity predictions at ``queries`` (default: the held-out samples)."""
    model = load_model(cfg)
    problem = _problem(cfg)
    if queries is None:
        queries = [s.z for s in eval_samples(cfg, problem)]
    snaps, lo_t, tot_t = [], [], []
    files = {}
    for j, z in enumerate(queries):
        z = np.asarray(z, dtype=float)
        if z.shape != (problem.z_dim,):
            raise ConfigError(f"query {j} has {z.size} coordinates, expected {problem.z_dim}")
        bifi, tl, tt = online_query(z, cfg, model, problem)
        snaps.append(bifi)
        lo_t.append(tl)
        tot_t.append(tt)
        if write:
            stem = cfg.out / "online" / f"bifi_{j:04d}"
            bifi.save(stem)
            files.update(_snapshot_files(stem))
    res = OnlineResult(snaps, lo_t, tot_t)
    if write:
        update_manifest(
            cfg,
            "online",
            files,
            {
                "queries": len(queries),
                "mean_lo_s": float(np.mean(lo_t)) if lo_t else 0.0,
                "mean_online_s": float(np.mean(tot_t)) if tot_t else 0.0,
            },
        )
    return res


def eval_data(cfg: RunConfig):
    """Held-out low- and high-fidelity snapshots, computed once and cached."""
    problem = _problem(cfg)
    samples = eval_samples(cfg, problem)
    d = cfg.out / "eval"
    lo_stems = [d / f"lo_{s.index:04d}" for s in samples]
    hi_stems = [d / f"hi_{s.index:04d}" for s in samples]
    lo_res = sweep(cfg, "lo", samples, lo_stems)
    hi_res = sweep(cfg, "hi", samples, hi_stems)
    bad = set(lo_res.failed) | set(hi_res.failed)
    if bad:
        log.warning("evaluation samples %s failed and are skipped", sorted(bad))
    keep = [s.index for s in samples if s.index not in bad]
    lo = [Snapshot.load(lo_stems[i]) for i in keep]
    hi = [Snapshot.load(hi_stems[i]) for i in keep]
    files = {}
    for i in keep:
        files.update(_snapshot_files(lo_stems[i]))
        files.update(_snapshot_files(hi_stems[i]))
    return lo, hi, files


def _runtime(snaps, cfg: RunConfig) -> float:
    if not cfg.run.timings:
        return float("nan")
    return float(np.mean([s.meta["runtime_s"] for s in snaps]))


def cmd_evaluate(cfg: RunConfig) -> list[dict]:
    """Errors of the bi-fidelity and low-fidelity models on the held-out set."""
    model = load_model(cfg)
    lo, hi, files = eval_data(cfg)
    lo, hi = primary(lo), primary(hi)
    approx = bifi_predict(model, lo, cfg.run.projection)
    rep_bi = mean_l2_error(hi, approx, model.K)
    rep_lo = mean_l2_error(hi, lo)
    rows = []
    for c in hi[0].components:
        eb, el = rep_bi.errors[c], rep_lo.errors[c]
        rows.append(
            {
                "K": model.K,
                "component": c,
                "err_bi": eb,
                "err_lo": el,
                "err_ratio": eb / el if el > 0 else float("nan"),
                "runtime_hi_s": _runtime(hi, cfg),
                "runtime_lo_s": _runtime(lo, cfg),
            }
        )
    path = cfg.out / "errors.csv"
    write_convergence_csv(path, rows)
    files[path] = io.file_sha256(path)
    per_sample = [
        [int(h.meta.get("sample_index", j)), c, rep_bi.per_sample[c][j], rep_lo.per_sample[c][j]]
        for c in hi[0].components
        for j, h in enumerate(hi)
    ]
    path = cfg.out / "errors_per_sample.csv"
    write_csv(path, PER_SAMPLE_COLUMNS, per_sample)
    files[path] = io.file_sha256(path)
    update_manifest(cfg, "evaluate", files, {"M_eval": len(hi), "K": model.K})
    return rows


def cmd_convergence_study(cfg: RunConfig) -> list[dict]:
    """Error table over ``sampling.K_list`` reusing the offline artifacts."""
    load_model(cfg)
    out = cfg.out
    nodes = read_manifest(out)["stages"]["offline"]["nodes"]
    lo_stems = sorted((out / "offline" / "lo").glob("cand_*.bin"))
    candidates = SnapshotSet([Snapshot.load(p.with_suffix("")) for p in lo_stems])
    index_of = {int(p.stem.split("_")[1]): j for j, p in enumerate(lo_stems)}
    hi_dir = out / "offline" / "hi"
    problem = _problem(cfg)

    def hi_runner(lo_snap: Snapshot) -> Snapshot:
        i = int(lo_snap.meta["sample_index"])
        stem = hi_dir / f"cand_{i:04d}"
        if Snapshot.is_valid(stem):
            return Snapshot.load(stem)
        snap = run_high_fidelity(lo_snap.z, problem, sample_id=i)
        snap.meta["sample_index"] = i
        snap.save(stem)
        return snap

    lo, hi, files = eval_data(cfg)
    rows = convergence_study(candidates, hi_runner, lo, hi, cfg.sampling.k_values, cfg.run.projection)
    if not cfg.run.timings:
        for r in rows:
            r["runtime_hi_s"] = r["runtime_lo_s"] = float("nan")
    path = out / "convergence.csv"
    write_convergence_csv(path, rows)
    files[path] = io.file_sha256(path)
    update_manifest(cfg, "convergence", files, {"K_list": list(cfg.sampling.k_values), "nodes_used": nodes})
    return rows


def cmd_energy_study(cfg: RunConfig) -> list:
    """Energy series and fitted decay rate for the first held-out samples."""
    problem = _problem(cfg)
    samples = eval_samples(cfg, problem)[: cfg.run.energy_samples]
    reports = []
    files = {}
    for s in samples:
        states = []
        run_kinetic(s.z, problem, n_checkpoints=cfg.run.n_checkpoints, callback=lambda st: states.append(st.copy()))
        rep = energy_report(states, problem.params, problem.grid)
        reports.append(rep)
        path = cfg.out / ("energy.csv" if s.index == 0 else f"energy_{s.index:04d}.csv")
        rep.write_csv(path)
        files[path] = io.file_sha256(path)
    summary = {
        "samples": [
            {
                "index": s.index,
                "decay_rate": r.decay_rate,
                "r_squared": r.r_squared,
                "monotone": r.monotone,
                "E2_initial": float(r.E[0, 2]),
                **r.meta,
            }
            for s, r in zip(samples, reports)
        ],
        "sup_E2_initial": max(float(r.E[0, 2]) for r in reports),
    }
    path = cfg.out / "energy_summary.json"
    io.write_json(path, summary)
    files[path] = io.file_sha256(path)
    update_manifest(cfg, "energy", files, {"samples": len(samples)})
    return reports
