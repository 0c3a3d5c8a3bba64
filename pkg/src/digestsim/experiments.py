"""Experiment harness: configs, seed sweeps, learning-rate grids, speed-up runs.

Configs are YAML with the sections shown in the README. Every run is fully
determined by (config, seed), and output files are written in a fixed order
so repeated invocations are byte-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import AsyncGossip, CentralParallel, SyncGossip, Urw
from .data import (generate_blobs, load_libsvm, partition_iid_balanced,
                   partition_noniid_unbalanced)
from .digest import LocalSgd, MultiStreamDigest, SingleStreamDigest
from .metrics import gap_stats, report_min_over_averages
from .objectives import LogisticTask, NoisyQuadTask, quad_loss
from .simcore import RunRecord, SimConfig, run
from .topology import Graph, assign_delays, generate_erdos_renyi, load_graph

__all__ = [
    "ConfigError",
    "TopologyConfig",
    "DataConfig",
    "ObjectiveConfig",
    "AlgoConfig",
    "GridConfig",
    "SpeedupAlgo",
    "SpeedupConfig",
    "ExperimentConfig",
    "load_config",
    "build_topology",
    "build_task",
    "make_algo",
    "run_cell",
    "run_experiment",
    "grid_search_lr",
    "speedup_study",
    "time_to_fraction",
]

ALGO_NAMES = ("local_sgd", "digest_single", "digest_multi", "urw",
              "sync_gossip", "async_gossip", "central_parallel")
_NEEDS_H = ("digest_single", "digest_multi", "central_parallel")
_NEEDS_HG = ("sync_gossip", "async_gossip")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


def _get(d: dict, key: str, path: str, types, default=..., choices=None):
    where = f"{path}.{key}" if path else key
    if key not in d:
        if default is ...:
            raise ConfigError(f"{where}: required field is missing")
        return default
    val = d[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, types):
        raise ConfigError(f"{where}: expected {getattr(types, '__name__', types)},"
                          f" got {type(val).__name__}")
    if choices is not None and val not in choices:
        raise ConfigError(f"{where}: {val!r} is not one of {sorted(choices)}")
    return val


def _reject_unknown(d: dict, known, path: str) -> None:
    for key in d:
        if key not in known:
            raise ConfigError(f"{path + '.' if path else ''}{key}: unknown field")


@dataclass
class TopologyConfig:
    kind: str = "erdos_renyi"         # erdos_renyi | edgelist
    v: int = 2
    p: float = 0.3
    delay: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    path: str | None = None

    @staticmethod
    def from_dict(d: dict, path: str = "topology") -> "TopologyConfig":
        _reject_unknown(d, {"kind", "v", "p", "delay", "seed", "path"}, path)
        kind = _get(d, "kind", path, str, "erdos_renyi",
                    choices={"erdos_renyi", "edgelist"})
        delay = _get(d, "delay", path, (list, tuple), [0.0, 0.0])
        if len(delay) != 2:
            raise ConfigError(f"{path}.delay: expected [lo, hi]")
        cfg = TopologyConfig(
            kind=kind,
            v=_get(d, "v", path, int, 2),
            p=_get(d, "p", path, float, 0.3),
            delay=(float(delay[0]), float(delay[1])),
            seed=_get(d, "seed", path, int, 0),
            path=_get(d, "path", path, str, None),
        )
        if cfg.kind == "edgelist" and not cfg.path:
            raise ConfigError(f"{path}.path: required for kind 'edgelist'")
        if cfg.kind == "erdos_renyi" and cfg.v < 1:
            raise ConfigError(f"{path}.v: must be >= 1")
        return cfg

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "v": self.v, "p": self.p,
             "delay": list(self.delay), "seed": self.seed}
        if self.path:
            d["path"] = self.path
        return d


@dataclass
class DataConfig:
    source: str = "none"              # blobs | libsvm | none
    classes: int = 2
    per_class: int = 50
    dim: int = 2
    spread: float = 1.0
    seed: int = 0
    path: str | None = None
    partition: str = "iid_balanced"   # iid_balanced | noniid_unbalanced
    ratio: float = 0.5

    @staticmethod
    def from_dict(d: dict, path: str = "data") -> "DataConfig":
        known = {"source", "classes", "per_class", "dim", "spread", "seed",
                 "path", "partition", "ratio"}
        _reject_unknown(d, known, path)
        cfg = DataConfig(
            source=_get(d, "source", path, str, "none",
                        choices={"blobs", "libsvm", "none"}),
            classes=_get(d, "classes", path, int, 2),
            per_class=_get(d, "per_class", path, int, 50),
            dim=_get(d, "dim", path, int, 2),
            spread=_get(d, "spread", path, float, 1.0),
            seed=_get(d, "seed", path, int, 0),
            path=_get(d, "path", path, str, None),
            partition=_get(d, "partition", path, str, "iid_balanced",
                           choices={"iid_balanced", "noniid_unbalanced"}),
            ratio=_get(d, "ratio", path, float, 0.5),
        )
        if cfg.source == "libsvm" and not cfg.path:
            raise ConfigError(f"{path}.path: required for source 'libsvm'")
        return cfg

    def to_dict(self) -> dict:
        d = {"source": self.source, "classes": self.classes,
             "per_class": self.per_class, "dim": self.dim,
             "spread": self.spread, "seed": self.seed,
             "partition": self.partition, "ratio": self.ratio}
        if self.path:
            d["path"] = self.path
        return d


@dataclass
class ObjectiveConfig:
    kind: str = "softmax_logistic"    # softmax_logistic | noisy_quadratic
    lam: float | str = "auto"
    sigma: float = 0.0
    zeta_abs: float = 0.0
    zeta_mode: str = "zero"           # zero | alternating
    x0: float = 0.0

    @staticmethod
    def from_dict(d: dict, path: str = "objective") -> "ObjectiveConfig":
        known = {"kind", "lam", "sigma", "zeta_abs", "zeta_mode", "x0"}
        _reject_unknown(d, known, path)
        lam = d.get("lam", "auto")
        if not (lam == "auto" or isinstance(lam, (int, float))):
            raise ConfigError(f"{path}.lam: expected a number or 'auto'")
        return ObjectiveConfig(
            kind=_get(d, "kind", path, str, "softmax_logistic",
                      choices={"softmax_logistic", "noisy_quadratic"}),
            lam=lam if lam == "auto" else float(lam),
            sigma=_get(d, "sigma", path, float, 0.0),
            zeta_abs=_get(d, "zeta_abs", path, float, 0.0),
            zeta_mode=_get(d, "zeta_mode", path, str, "zero",
                           choices={"zero", "alternating"}),
            x0=_get(d, "x0", path, float, 0.0),
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": self.lam, "sigma": self.sigma,
                "zeta_abs": self.zeta_abs, "zeta_mode": self.zeta_mode,
                "x0": self.x0}


@dataclass
class AlgoConfig:
    name: str
    t: int
    eta: float | None = None
    h: int | None = None
    h_g: int | None = None
    e: int = 0
    label: str | None = None

    @staticmethod
    def from_dict(d: dict, path: str) -> "AlgoConfig":
        known = {"name", "t", "eta", "h", "h_g", "e", "label"}
        _reject_unknown(d, known, path)
        name = _get(d, "name", path, str)
        if name not in ALGO_NAMES:
            raise ConfigError(f"{path}.name: unknown algorithm {name!r};"
                              f" choose from {list(ALGO_NAMES)}")
        cfg = AlgoConfig(
            name=name,
            t=_get(d, "t", path, int),
            eta=_get(d, "eta", path, float, None),
            h=_get(d, "h", path, int, None),
            h_g=_get(d, "h_g", path, int, None),
            e=_get(d, "e", path, int, 0),
            label=_get(d, "label", path, str, None),
        )
        if cfg.t < 1:
            raise ConfigError(f"{path}.t: must be >= 1")
        if name in _NEEDS_H and cfg.h is None:
            raise ConfigError(f"{path}.h: required for {name}")
        if name in _NEEDS_HG and cfg.h_g is None:
            raise ConfigError(f"{path}.h_g: required for {name}")
        return cfg

    @property
    def display(self) -> str:
        return self.label or self.name

    def to_dict(self) -> dict:
        d = {"name": self.name, "t": self.t}
        for key in ("eta", "h", "h_g", "label"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        if self.e:
            d["e"] = self.e
        return d


@dataclass
class GridConfig:
    span: int = 2
    seeds: int = 3

    @staticmethod
    def from_dict(d: dict, path: str = "grid") -> "GridConfig":
        _reject_unknown(d, {"span", "seeds"}, path)
        cfg = GridConfig(span=_get(d, "span", path, int, 2),
                         seeds=_get(d, "seeds", path, int, 3))
        if cfg.span < 0:
            raise ConfigError(f"{path}.span: must be >= 0")
        return cfg

    def to_dict(self) -> dict:
        return {"span": self.span, "seeds": self.seeds}


@dataclass
class SpeedupAlgo:
    name: str                      # digest_single | digest_multi | central_parallel
    h: int | str = "v"             # fixed period or 'v' for per-size period = V
    label: str | None = None

    @staticmethod
    def from_dict(d: dict, path: str) -> "SpeedupAlgo":
        _reject_unknown(d, {"name", "h", "label"}, path)
        name = _get(d, "name", path, str,
                    choices={"digest_single", "digest_multi", "central_parallel"})
        h = d.get("h", "v")
        if not (h == "v" or isinstance(h, int)):
            raise ConfigError(f"{path}.h: expected an int or 'v'")
        return SpeedupAlgo(name=name, h=h,
                           label=_get(d, "label", path, str, None))

    @property
    def display(self) -> str:
        return self.label or self.name

    def to_dict(self) -> dict:
        d = {"name": self.name, "h": self.h}
        if self.label:
            d["label"] = self.label
        return d


@dataclass
class SpeedupConfig:
    vs: tuple[int, ...] = (1, 2, 4, 8)
    seeds: int = 50
    t: int = 10000
    eta: float = 0.001
    sigma: float = 5.0
    zeta_abs: float = 5.0
    distribution: str = "iid"     # iid | noniid
    x0: float = 3.0
    p: float = 0.3
    topo_seed: int = 7
    run_seed: int = 0
    algos: tuple[SpeedupAlgo, ...] = ()

    @staticmethod
    def from_dict(d: dict, path: str = "speedup") -> "SpeedupConfig":
        known = {"vs", "seeds", "t", "eta", "sigma", "zeta_abs", "distribution",
                 "x0", "p", "topo_seed", "run_seed", "algos"}
        _reject_unknown(d, known, path)
        vs = _get(d, "vs", path, (list, tuple), [1, 2, 4, 8])
        if any(not isinstance(v, int) or v < 1 for v in vs):
            raise ConfigError(f"{path}.vs: entries must be integers >= 1")
        algos_raw = _get(d, "algos", path, (list, tuple), [
            {"name": "central_parallel", "h": 1},
            {"name": "digest_single"},
            {"name": "digest_multi"},
        ])
        algos = tuple(SpeedupAlgo.from_dict(a, f"{path}.algos[{i}]")
                      for i, a in enumerate(algos_raw))
        return SpeedupConfig(
            vs=tuple(int(v) for v in vs),
            seeds=_get(d, "seeds", path, int, 50),
            t=_get(d, "t", path, int, 10000),
            eta=_get(d, "eta", path, float, 0.001),
            sigma=_get(d, "sigma", path, float, 5.0),
            zeta_abs=_get(d, "zeta_abs", path, float, 5.0),
            distribution=_get(d, "distribution", path, str, "iid",
                              choices={"iid", "noniid"}),
            x0=_get(d, "x0", path, float, 3.0),
            p=_get(d, "p", path, float, 0.3),
            topo_seed=_get(d, "topo_seed", path, int, 7),
            run_seed=_get(d, "run_seed", path, int, 0),
            algos=algos,
        )

    def to_dict(self) -> dict:
        return {"vs": list(self.vs), "seeds": self.seeds, "t": self.t,
                "eta": self.eta, "sigma": self.sigma,
                "zeta_abs": self.zeta_abs, "distribution": self.distribution,
                "x0": self.x0, "p": self.p, "topo_seed": self.topo_seed,
                "run_seed": self.run_seed,
                "algos": [a.to_dict() for a in self.algos]}


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    algos: tuple[AlgoConfig, ...] = ()
    seeds: int = 1
    eval_every: int = 0               # 0 -> max(1, T // 500)
    record_models: bool = False
    record_grads: bool = False
    out: str = "results"
    grid: GridConfig = field(default_factory=GridConfig)
    speedup: SpeedupConfig | None = None

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        known = {"topology", "data", "objective", "algos", "seeds",
                 "eval_every", "record_models", "record_grads", "out",
                 "grid", "speedup"}
        _reject_unknown(d, known, "")
        algos_raw = _get(d, "algos", "", (list, tuple), [])
        algos = tuple(AlgoConfig.from_dict(a, f"algos[{i}]")
                      for i, a in enumerate(algos_raw))
        cfg = ExperimentConfig(
            topology=TopologyConfig.from_dict(d.get("topology", {})),
            data=DataConfig.from_dict(d.get("data", {})),
            objective=ObjectiveConfig.from_dict(d.get("objective", {})),
            algos=algos,
            seeds=_get(d, "seeds", "", int, 1),
            eval_every=_get(d, "eval_every", "", int, 0),
            record_models=_get(d, "record_models", "", bool, False),
            record_grads=_get(d, "record_grads", "", bool, False),
            out=_get(d, "out", "", str, "results"),
            grid=GridConfig.from_dict(d.get("grid", {})),
            speedup=(SpeedupConfig.from_dict(d["speedup"])
                     if "speedup" in d else None),
        )
        if cfg.seeds < 1:
            raise ConfigError("seeds: must be >= 1")
        return cfg

    def to_dict(self) -> dict:
        d = {"topology": self.topology.to_dict(),
             "data": self.data.to_dict(),
             "objective": self.objective.to_dict(),
             "algos": [a.to_dict() for a in self.algos],
             "seeds": self.seeds,
             "eval_every": self.eval_every,
             "record_models": self.record_models,
             "record_grads": self.record_grads,
             "out": self.out,
             "grid": self.grid.to_dict()}
        if self.speedup is not None:
            d["speedup"] = self.speedup.to_dict()
        return d


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return ExperimentConfig.from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


# ---------------------------------------------------------------------------
# builders


def build_topology(cfg: ExperimentConfig, run_seed: int) -> Graph:
    """Graph structure is fixed by the topology seed; link delays are
    redrawn per run seed so seed sweeps average over delay realizations."""
    tc = cfg.topology
    if tc.kind == "edgelist":
        return load_graph(tc.path)
    if tc.v == 1:
        return Graph(1, (), ())
    g = generate_erdos_renyi(tc.v, tc.p, tc.seed)
    return assign_delays(g, tc.delay, tc.seed * 100003 + run_seed)


def alternating_zeta(v_count: int, magnitude: float) -> np.ndarray:
    """Per-node gradient-noise means +/-magnitude that sum to zero."""
    zeta = np.array([magnitude if v % 2 == 0 else -magnitude
                     for v in range(v_count)])
    if v_count % 2 == 1:
        zeta[-1] = 0.0
    return zeta


def build_task(cfg: ExperimentConfig, topo: Graph):
    v_count = topo.node_count
    oc = cfg.objective
    if oc.kind == "noisy_quadratic":
        if oc.zeta_mode == "alternating" and v_count > 1:
            zeta = alternating_zeta(v_count, oc.zeta_abs)
        else:
            zeta = np.zeros(v_count)
        return NoisyQuadTask(v_count, zeta=zeta, sigma=oc.sigma, x0=oc.x0)
    dc = cfg.data
    if dc.source == "blobs":
        ds = generate_blobs(dc.classes, dc.per_class, dc.dim, dc.spread, dc.seed)
    elif dc.source == "libsvm":
        ds = load_libsvm(dc.path)
    else:
        raise ConfigError("data.source: 'none' only fits the noisy_quadratic"
                          " objective")
    if dc.partition == "iid_balanced":
        part = partition_iid_balanced(ds, v_count, dc.seed)
    else:
        part = partition_noniid_unbalanced(ds, v_count, dc.ratio, dc.seed)
    lam = None if oc.lam == "auto" else float(oc.lam)
    return LogisticTask(ds, part, lam=lam)


def make_algo(algo_cfg: AlgoConfig, eta: float):
    name = algo_cfg.name
    if name == "local_sgd":
        return LocalSgd(eta)
    if name == "digest_single":
        return SingleStreamDigest(eta, algo_cfg.h)
    if name == "digest_multi":
        return MultiStreamDigest(eta, algo_cfg.h)
    if name == "urw":
        return Urw(eta)
    if name == "sync_gossip":
        return SyncGossip(eta, algo_cfg.h_g)
    if name == "async_gossip":
        return AsyncGossip(eta, algo_cfg.h_g)
    if name == "central_parallel":
        return CentralParallel(eta, algo_cfg.h)
    raise ConfigError(f"unknown algorithm {name!r}")


def _task_mu(task) -> float:
    return getattr(getattr(task, "spec", None), "lam", 0.0) or 0.0


def run_cell(cfg: ExperimentConfig, algo_cfg: AlgoConfig, run_seed: int,
             eta: float | None = None, record_models: bool | None = None):
    """One (algorithm, seed, learning-rate) simulation."""
    eta = algo_cfg.eta if eta is None else eta
    if eta is None:
        raise ConfigError(f"algos: {algo_cfg.display} needs an eta")
    topo = build_topology(cfg, run_seed)
    task = build_task(cfg, topo)
    record_models = cfg.record_models if record_models is None else record_models
    sim = SimConfig(
        total_slots=algo_cfg.t,
        seed=run_seed,
        max_lag=algo_cfg.e,
        eval_every=cfg.eval_every or None,
        record_models=record_models,
        record_grads=cfg.record_grads,
    )
    record = run(sim, topo, make_algo(algo_cfg, eta), task)
    summary = {
        "algo": algo_cfg.display,
        "seed": run_seed,
        "eta": eta,
        "t_slots": record.stop_slot,
        "final_loss": record.eval_global_loss[-1],
        "initial_loss": record.initial_loss,
        "msgs": record.msg_count,
        "bytes_proxy": record.byte_proxy,
        "max_gap": gap_stats(record).overall,
        "max_lag": record.max_lag,
        "diverged": record.diverged,
    }
    if record.model_traj is not None and len(record.model_traj) and not record.diverged:
        kind, loss = report_min_over_averages(record, task.loss,
                                              mu=_task_mu(task), eta=eta)
        summary["best_avg_kind"] = kind
        summary["best_avg_loss"] = loss
    else:
        summary["best_avg_kind"] = "last"
        summary["best_avg_loss"] = summary["final_loss"]
    return record, summary


def _cell_worker(args):
    cfg_dict, algo_index, run_seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    algo_cfg = cfg.algos[algo_index]
    record, summary = run_cell(cfg, algo_cfg, run_seed)
    curve = [(int(t), float(l), summary["algo"], run_seed)
             for t, l in zip(record.eval_slots, record.eval_global_loss)]
    return algo_index, run_seed, summary, curve, record.to_recorder_csv()


SUMMARY_FIELDS = ("algo", "seed", "eta", "t_slots", "final_loss",
                  "best_avg_kind", "best_avg_loss", "initial_loss", "msgs",
                  "bytes_proxy", "max_gap", "max_lag", "diverged")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int = 1,
                   seed_base: int = 0) -> Path:
    """Run every (algorithm, seed) cell and write CSVs, figures and metadata."""
    if not cfg.algos:
        raise ConfigError("algos: at least one algorithm is required")
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)

    cells = [(cfg.to_dict(), ai, seed_base + s)
             for ai in range(len(cfg.algos))
             for s in range(cfg.seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_worker, cells))
    else:
        results = [_cell_worker(c) for c in cells]
    results.sort(key=lambda r: (r[0], r[1]))

    curve_lines = ["slot,loss,algo,seed"]
    summary_lines = [",".join(SUMMARY_FIELDS)]
    for ai, seed, summary, curve, rec_csv in results:
        for slot, loss, algo, sd in curve:
            curve_lines.append(f"{slot},{loss!r},{algo},{sd}")
        summary_lines.append(",".join(_fmt(summary[k]) for k in SUMMARY_FIELDS))
        run_name = f"{summary['algo']}-seed{seed}.csv"
        (out / "runs" / run_name).write_text(rec_csv, encoding="utf-8")
    (out / "curves.csv").write_text("\n".join(curve_lines) + "\n",
                                    encoding="utf-8")
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n",
                                     encoding="utf-8")

    meta = {"config": cfg.to_dict(), "version": __version__,
            "jobs": jobs, "seed_base": seed_base}
    with open(out / "run_meta.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)

    from .plotting import render_curves
    render_curves(out / "curves.csv", out / "figures" / "curves.png")
    return out


def grid_search_lr(cfg: ExperimentConfig, span: int | None = None,
                   out_dir=None, seed_base: int = 0) -> dict[str, float]:
    """Tune each algorithm's rate over base * 2^k for k in [-span, span].

    The score of a candidate is the mean best-average loss over the grid
    seeds; any diverged run disqualifies the candidate. Ties go to the
    smaller rate.
    """
    span = cfg.grid.span if span is None else span
    if span < 0:
        raise ConfigError("grid.span: must be >= 0")
    rows = []
    best: dict[str, float] = {}
    for algo_cfg in cfg.algos:
        if algo_cfg.eta is None:
            raise ConfigError(f"algos: {algo_cfg.display} needs a base eta")
        best_eta, best_score = None, math.inf
        for k in range(-span, span + 1):
            eta = algo_cfg.eta * (2.0 ** k)
            finals = []
            diverged = 0
            for s in range(cfg.grid.seeds):
                _, summary = run_cell(cfg, algo_cfg, seed_base + s, eta=eta,
                                      record_models=True)
                if summary["diverged"]:
                    diverged += 1
                else:
                    finals.append(summary["best_avg_loss"])
            score = math.inf if diverged else float(np.mean(finals))
            rows.append((algo_cfg.display, eta, score, diverged))
            if score < best_score:
                best_eta, best_score = eta, score
        if best_eta is None:
            raise RuntimeError(f"{algo_cfg.display}: every grid point diverged")
        best[algo_cfg.display] = best_eta
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["algo,eta,score,diverged_runs,selected"]
        for algo, eta, score, div in rows:
            sel = 1 if best.get(algo) == eta else 0
            lines.append(f"{algo},{eta!r},{score!r},{div},{sel}")
        (out / "grid.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return best


# ---------------------------------------------------------------------------
# speed-up study


def _speedup_algo(spec: SpeedupAlgo, v_count: int, eta: float):
    h = v_count if spec.h == "v" else int(spec.h)
    h = max(1, h)
    if spec.name == "central_parallel":
        return CentralParallel(eta, h)
    if spec.name == "digest_single":
        return SingleStreamDigest(eta, h)
    return MultiStreamDigest(eta, h)


def _speedup_run(sp: SpeedupConfig, spec: SpeedupAlgo, v_count: int) -> np.ndarray:
    """Per-seed final errors for one (algorithm, network size) pair.

    Seeds ride along a batch axis of the scalar objective: all replicas share
    one network schedule while their gradient noise differs, so one run
    yields every seed's trajectory.
    """
    if v_count == 1:
        topo = Graph(1, (), ())
    else:
        g = generate_erdos_renyi(v_count, sp.p, sp.topo_seed + v_count)
        topo = assign_delays(g, (0.0, 0.0), 0)
    if sp.distribution == "noniid" and v_count > 1:
        zeta = alternating_zeta(v_count, sp.zeta_abs)
    else:
        zeta = np.zeros(v_count)
    task = NoisyQuadTask(v_count, zeta=zeta, sigma=sp.sigma,
                         batch=sp.seeds, x0=sp.x0)
    sim = SimConfig(total_slots=sp.t, seed=sp.run_seed, max_lag=0,
                    eval_every=sp.t, record_grads=False,
                    guard_divergence=False)
    record = run(sim, topo, _speedup_algo(spec, v_count, sp.eta), task)
    xhat = record.weights @ record.final_models      # (seeds,)
    return np.asarray(quad_loss(xhat), dtype=np.float64)


def speedup_study(sp: SpeedupConfig, out_dir=None) -> list[dict]:
    """Speed-up ratios per network size: single-node error over method error."""
    baseline = _speedup_run(sp, SpeedupAlgo("central_parallel", 1), 1)
    base_mean = float(baseline.mean())
    base_se = float(baseline.std(ddof=1) / math.sqrt(len(baseline)))
    rows = []
    for spec in sp.algos:
        for v_count in sp.vs:
            errs = _speedup_run(sp, spec, v_count)
            mean = float(errs.mean())
            se = float(errs.std(ddof=1) / math.sqrt(len(errs)))
            ratio = base_mean / mean
            stderr = ratio * math.sqrt((base_se / base_mean) ** 2
                                       + (se / mean) ** 2)
            rows.append({"V": v_count, "algo": spec.display,
                         "ratio": ratio, "stderr": stderr,
                         "error": mean, "baseline_error": base_mean})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["V,algo,ratio,stderr"]
        for r in rows:
            lines.append(f"{r['V']},{r['algo']},{r['ratio']!r},{r['stderr']!r}")
        (out / "speedup.csv").write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")
        meta = {"speedup": sp.to_dict(), "version": __version__}
        with open(out / "speedup_meta.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(meta, fh, sort_keys=True)
        from .plotting import render_speedup
        render_speedup(rows, out / "figures" / "speedup.png")
    return rows


def time_to_fraction(record: RunRecord, drop: float) -> int | None:
    """First sampled slot whose loss fell by ``drop`` relative to the start."""
    target = (1.0 - drop) * record.initial_loss
    for slot, loss in zip(record.eval_slots, record.eval_global_loss):
        if loss <= target:
            return slot
    return None
