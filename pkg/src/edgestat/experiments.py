"""Batch experiment runner: config parsing, dispatch, JSON/CSV reports, cache.

A config is a YAML mapping::

    kind: exact_pmf
    name: c5-triples            # optional; names the report files
    graph:                      # exactly one of family / graph6 / graph6_file / edge_list
      family: {variant: cycle, n: 5}
    params: {k: 3}
    mc: {trials: 100000, seed: 7, confidence_level: 0.99}
    output: {dir: reports, csv: true}

Rationals are written as ``"num/den"`` strings with a ``*_float`` sibling.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from edgestat import __version__
from edgestat.coloring import coupling_report
from edgestat.events import (
    ContextParams,
    EventId,
    HypergeomSpec,
    exact_moments,
    heavy_count_report,
    hypergeom_pmf,
    poisson_mode_bound,
    poisson_mode_is_optimal,
    predicted_mode_degree,
    variance_x_minus_z,
)
from edgestat.graph import FamilySpec, Graph, generate, graph_from_edges
from edgestat.graph6 import parse_graph6, read_graph6_lines
from edgestat.montecarlo import McConfig, containment_breakdown, joint_counts, make_estimate
from edgestat.subset_dist import (
    BudgetExceeded,
    DEFAULT_BUDGET,
    exact_pmf,
    max_over_graphs,
    monotonicity_report,
)

log = logging.getLogger(__name__)

KINDS = (
    "exact_pmf", "extremal", "monotonicity", "mc_event", "containment", "coupling",
    "moments", "event_frequencies", "hypergeom", "poisson_bound",
)
GRAPH_KINDS = {"exact_pmf", "mc_event", "containment", "coupling", "moments", "event_frequencies"}
MC_KINDS = {"mc_event", "containment", "coupling", "event_frequencies"}
GRAPH_SOURCES = ("family", "graph6", "graph6_file", "edge_list")
CACHE_ENV = "EDGESTAT_CACHE"
TIMING_FIELDS = ("duration_s",)


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    graph: dict | None = None
    mc: McConfig | None = None
    name: str | None = None
    out_dir: str | None = None
    csv: bool = False
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | os.PathLike = ".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a mapping")
        unknown = set(d) - {"kind", "name", "graph", "params", "mc", "output"}
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"kind: expected one of {KINDS}, got {kind!r}")
        graph = d.get("graph")
        if kind in GRAPH_KINDS:
            if not isinstance(graph, dict):
                raise ConfigError(f"graph: required for kind {kind!r}")
            present = [s for s in GRAPH_SOURCES if s in graph]
            if len(present) != 1:
                raise ConfigError(f"graph: exactly one of {GRAPH_SOURCES} required, got {present}")
        elif graph is not None:
            raise ConfigError(f"graph: not used by kind {kind!r}")
        mc = None
        if kind in MC_KINDS:
            raw = d.get("mc")
            if not isinstance(raw, dict) or "trials" not in raw or "seed" not in raw:
                raise ConfigError("mc: trials and seed are required")
            try:
                mc = McConfig(**raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"mc: {exc}") from None
        params = d.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("params: expected a mapping")
        out = d.get("output") or {}
        cfg = cls(kind, dict(params), graph, mc, d.get("name"), out.get("dir"), bool(out.get("csv", False)),
                  str(base_dir))
        cfg._validate_params()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data, base_dir=path.parent)

    def _need(self, *names: str) -> None:
        for name in names:
            if name not in self.params:
                raise ConfigError(f"params.{name}: required for kind {self.kind!r}")
            v = self.params[name]
            if name in ("k", "n", "d", "N", "t", "m") and (not isinstance(v, int) or v < 0):
                raise ConfigError(f"params.{name}: expected a nonnegative integer, got {v!r}")

    def _validate_params(self) -> None:
        kind = self.kind
        if kind in ("exact_pmf",):
            self._need("k")
        elif kind == "extremal":
            self._need("n", "k", "ell")
        elif kind == "monotonicity":
            self._need("n_list", "k", "ell")
        elif kind in ("mc_event",):
            self._need("k", "event")
        elif kind == "containment":
            self._need("k", "event_e", "event_f")
        elif kind in ("coupling", "moments"):
            self._need("k", "ell")
        elif kind == "event_frequencies":
            self._need("k", "ell", "events")
        elif kind == "hypergeom":
            self._need("N", "t", "m")
        elif kind == "poisson_bound":
            if "d" not in self.params and "d_max" not in self.params:
                raise ConfigError("params.d or params.d_max: required for kind 'poisson_bound'")
        for key in ("event", "event_e", "event_f"):
            if key in self.params:
                try:
                    EventId.parse(str(self.params[key]))
                except ValueError as exc:
                    raise ConfigError(f"params.{key}: {exc}") from None
        if kind == "hypergeom":
            try:
                HypergeomSpec(self.params["N"], self.params["t"], self.params["m"])
            except ValueError as exc:
                raise ConfigError(f"params: {exc}") from None

    def with_overrides(self, seed: int | None = None, trials: int | None = None,
                       out_dir: str | None = None) -> "ExperimentConfig":
        mc = self.mc
        if mc is not None and (seed is not None or trials is not None):
            mc = McConfig(trials if trials is not None else mc.trials, seed if seed is not None else mc.seed,
                          mc.confidence_level, mc.interval, mc.workers, mc.chunk_size)
        return ExperimentConfig(self.kind, dict(self.params), self.graph, mc, self.name,
                                out_dir if out_dir is not None else self.out_dir, self.csv, self.base_dir)

    def echo(self) -> dict:
        """Canonical description of everything that determines the payload."""
        out: dict[str, Any] = {"kind": self.kind, "params": self.params, "version": __version__}
        if self.graph is not None:
            out["graph"] = self.graph
        if self.mc is not None:
            mc = self.mc
            # worker count never changes results
            out["mc"] = {"trials": mc.trials, "seed": mc.seed, "confidence_level": mc.confidence_level,
                         "interval": mc.interval, "chunk_size": mc.chunk_size}
        return out

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


# --- graph loading ------------------------------------------------------------------

def load_graph(cfg: ExperimentConfig) -> Graph:
    src = cfg.graph
    try:
        if "family" in src:
            return generate(FamilySpec.from_dict(src["family"]))
        if "graph6" in src:
            return parse_graph6(src["graph6"])
        if "graph6_file" in src:
            with open(cfg.resolve(src["graph6_file"]), encoding="ascii") as fh:
                graphs = list(read_graph6_lines(fh))
            index = src.get("index", 0)
            return graphs[index]
        with open(cfg.resolve(src["edge_list"]), encoding="utf-8") as fh:
            return parse_edge_list(fh.read())
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"graph: {exc}") from None


def parse_edge_list(text: str) -> Graph:
    """First non-comment line holds ``n``; each later line holds ``u v``."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty edge list")
    n = int(lines[0])
    edges = []
    for ln in lines[1:]:
        u, v = ln.split()
        edges.append((int(u), int(v)))
    return graph_from_edges(n, edges)


# --- serialization ------------------------------------------------------------------

def rat(x: Fraction | int) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return rat(obj)
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            out[str(k)] = _jsonable(v)
            if isinstance(v, Fraction):
                out[f"{k}_float"] = float(v)
        return out
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# --- dispatch -----------------------------------------------------------------------

def _estimate_dict(est) -> dict:
    return est.to_dict()


def _payload(cfg: ExperimentConfig, g: Graph | None) -> tuple[dict, list[list]]:
    """Kind-specific payload and its CSV table (header row first)."""
    p = cfg.params
    kind = cfg.kind
    if kind == "exact_pmf":
        budget = p.get("budget", DEFAULT_BUDGET)
        try:
            table = exact_pmf(g, p["k"], budget)
        except BudgetExceeded as exc:
            raise BudgetExceeded(f"{exc} (kind 'mc_event' with event X(ell))") from None
        probs = table.probs
        payload = {
            "n": g.n, "k": table.k, "subsets": table.total,
            "counts": {str(e): c for e, c in enumerate(table.counts) if c},
            "probs": {str(e): rat(q) for e, q in probs.items()},
            "probs_float": {str(e): float(q) for e, q in probs.items()},
            "mean": table.mean(),
        }
        rows = [["ell", "count", "prob", "prob_float"]]
        rows += [[e, table.counts[e], rat(q), float(q)] for e, q in probs.items()]
        return payload, rows
    if kind == "extremal":
        source = p.get("source", "exhaustive_labeled")
        if source != "exhaustive_labeled":
            source = str(cfg.resolve(source))
        res = max_over_graphs(p["n"], p["k"], p["ell"], source, workers=p.get("workers", 1))
        payload = res.to_dict()
        if source != "exhaustive_labeled":
            payload["source"] = "catalog:" + os.path.basename(source)
        rows = [["n", "k", "ell", "value", "value_float", "witness_graph6"],
                [res.n, res.k, res.ell, rat(res.value), float(res.value), payload["witness_graph6"]]]
        return payload, rows
    if kind == "monotonicity":
        rep = monotonicity_report(p["n_list"], p["k"], p["ell"], workers=p.get("workers", 1))
        payload = {
            "k": rep.k, "ell": rep.ell,
            "values": [{"n": n, "value": v} for n, v in rep.values],
            "violations": list(rep.violations), "non_increasing": rep.ok,
        }
        rows = [["n", "value", "value_float"]] + [[n, rat(v), float(v)] for n, v in rep.values]
        return payload, rows
    if kind in ("mc_event", "containment", "event_frequencies"):
        ell = p.get("ell", 1)
        params = ContextParams.for_graph(g, p["k"], ell, w=p.get("w"), m=p.get("m", 0 if kind == "mc_event" else None),
                                         mu=exact_moments(g, p["k"], ell).mu if p.get("with_mu") else None)
        common = {"k": params.k, "ell": params.ell, "w": params.w, "m": params.m}
        if kind == "mc_event":
            ev = EventId.parse(str(p["event"]))
            est = make_estimate(joint_counts(g, p["k"], [ev], cfg.mc, params)[1], cfg.mc.trials, cfg.mc)
            payload = {**common, "event": str(ev), "estimate": _estimate_dict(est)}
            rows = [["event", "successes", "trials", "point", "ci_low", "ci_high"],
                    [str(ev), est.successes, est.trials, est.point, est.ci_low, est.ci_high]]
            return payload, rows
        if kind == "containment":
            e, f = EventId.parse(str(p["event_e"])), EventId.parse(str(p["event_f"]))
            br = containment_breakdown(g, p["k"], e, f, cfg.mc, params)
            payload = {**common, "event_e": str(e), "event_f": str(f),
                       "e_minus_f": _estimate_dict(br.e_minus_f), "e_and_f": _estimate_dict(br.e_and_f),
                       "e": _estimate_dict(br.e)}
            rows = [["quantity", "successes", "trials", "point", "ci_low", "ci_high"]]
            for name, est in (("e_minus_f", br.e_minus_f), ("e_and_f", br.e_and_f), ("e", br.e)):
                rows.append([name, est.successes, est.trials, est.point, est.ci_low, est.ci_high])
            return payload, rows
        events = [EventId.parse(str(x)) for x in p["events"]]
        counts = joint_counts(g, p["k"], events, cfg.mc, params)
        freqs = {}
        rows = [["event", "successes", "trials", "point", "ci_low", "ci_high"]]
        for i, ev in enumerate(events):
            hits = sum(c for code, c in enumerate(counts) if (code >> i) & 1)
            est = make_estimate(hits, cfg.mc.trials, cfg.mc)
            freqs[str(ev)] = _estimate_dict(est)
            rows.append([str(ev), est.successes, est.trials, est.point, est.ci_low, est.ci_high])
        return {**common, "frequencies": freqs}, rows
    if kind == "coupling":
        rep = coupling_report(g, p["k"], p["ell"], cfg.mc, step_cap=p.get("step_cap", 10 ** 6))
        payload = {"k": p["k"], "ell": p["ell"], **rep.to_dict()}
        rows = [["quantity", "successes", "trials", "point", "ci_low", "ci_high"]]
        for name in ("pr_x_tilde", "pr_both", "pr_y1", "pr_distinct"):
            est = getattr(rep, name)
            rows.append([name, est.successes, est.trials, est.point, est.ci_low, est.ci_high])
        return payload, rows
    if kind == "moments":
        k, ell = p["k"], p["ell"]
        mom = exact_moments(g, k, ell)
        pred = predicted_mode_degree(g, k, ell, w=p.get("w"))
        payload = {
            "k": k, "ell": ell, "mu1": mom.mu1, "mu2": mom.mu2, "mu": mom.mu,
            "heavy_edges": mom.heavy_edges, "light_edges": mom.light_edges,
            "heavy": heavy_count_report(g, k, ell),
            "predicted_mode_degree": {"d": pred.d, "center": pred.center, "half_width": pred.half_width,
                                      "ambiguous": pred.ambiguous},
        }
        try:
            var = variance_x_minus_z(g, k, ell, p.get("budget", DEFAULT_BUDGET))
            payload["variance"] = {"var_x_minus_z": var.var_diff, "var_h": var.var_h, "var_l": var.var_l,
                                   "bound": var.bound, "bound_holds": var.bound_holds,
                                   "decomposition_holds": var.decomposition_holds}
        except BudgetExceeded:
            payload["variance"] = None
        rows = [["quantity", "value", "value_float"]]
        rows += [[name, rat(v), float(v)] for name, v in (("mu1", mom.mu1), ("mu2", mom.mu2), ("mu", mom.mu))]
        return payload, rows
    if kind == "hypergeom":
        spec = HypergeomSpec(p["N"], p["t"], p["m"])
        pmf = hypergeom_pmf(spec)
        var = float(spec.variance)
        local = 1 / math.sqrt(2 * math.pi * var) if var > 0 else None
        payload = {
            "N": spec.N, "t": spec.t, "m": spec.m, "lo": pmf.lo,
            "pmf": [rat(x) for x in pmf.probs], "pmf_float": [float(x) for x in pmf.probs],
            "argmax": pmf.argmax, "max": pmf.max, "variance": spec.variance,
            "local_limit": local, "max_over_local_limit": float(pmf.max) / local if local else None,
        }
        rows = [["i", "prob", "prob_float"]]
        rows += [[pmf.lo + i, rat(x), float(x)] for i, x in enumerate(pmf.probs)]
        return payload, rows
    if kind == "poisson_bound":
        ds = [p["d"]] if "d" in p else list(range(1, p["d_max"] + 1))
        vals = []
        rows = [["d", "bound", "le_inv_e", "lambda_optimal"]]
        for d in ds:
            b = poisson_mode_bound(d)
            item = {"d": d, "bound": b, "le_inv_e": b <= math.exp(-1) + 1e-9, "lambda_optimal": poisson_mode_is_optimal(d)}
            vals.append(item)
            rows.append([d, b, item["le_inv_e"], item["lambda_optimal"]])
        return {"values": vals, "inv_e": math.exp(-1)}, rows
    raise AssertionError(kind)


# --- cache ----------------------------------------------------------------------------

def cache_root() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "edgestat")


def _graph_bytes(cfg: ExperimentConfig) -> bytes:
    if cfg.graph is None:
        return b""
    src = cfg.graph
    for key in ("graph6_file", "edge_list"):
        if key in src:
            return cfg.resolve(src[key]).read_bytes()
    return b""


def cache_key(cfg: ExperimentConfig) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(cfg.echo(), sort_keys=True, default=str).encode())
    h.update(b"\0")
    h.update(_graph_bytes(cfg))
    return h.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cache_path(key: str, root: Path | None = None) -> Path:
    return (root or cache_root()) / key[:2] / f"{key}.json"


# --- records ----------------------------------------------------------------------------

@dataclass
class ReportRecord:
    config: dict
    payload: dict | None
    duration_s: float
    cache_key: str
    error: str | None = None
    from_cache: bool = False  # not serialized
    table: list[list] | None = None  # CSV projection, not serialized

    def to_dict(self) -> dict:
        out = {"config": self.config, "payload": self.payload, "duration_s": self.duration_s,
               "cache_key": self.cache_key}
        if self.error is not None:
            out["error"] = self.error
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())


def strip_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k not in TIMING_FIELDS}


def to_csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\r\n").writerows(rows)
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, use_cache: bool = True) -> ReportRecord:
    """Run one experiment, consulting the on-disk cache, and write its report files."""
    key = cache_key(cfg)
    echo = _jsonable(cfg.echo())
    t0 = time.perf_counter()
    cached = None
    path = _cache_path(key)
    if use_cache and path.exists():
        with open(path, encoding="utf-8") as fh:
            cached = json.load(fh)
    if cached is not None:
        payload, table = cached["payload"], cached["table"]
        log.info("cache hit %s", key[:12])
    else:
        g = load_graph(cfg) if cfg.kind in GRAPH_KINDS else None
        raw, table = _payload(cfg, g)
        payload = _jsonable(raw)
        table = _jsonable(table)
        if use_cache:
            _atomic_write(path, dumps({"config": echo, "base_dir": os.path.abspath(cfg.base_dir),
                                       "payload": payload, "table": table}))
    rec = ReportRecord(echo, payload, round(time.perf_counter() - t0, 6), key, from_cache=cached is not None,
                       table=table)
    if cfg.out_dir:
        write_report(rec, cfg)
    return rec


def report_name(cfg: ExperimentConfig, key: str) -> str:
    return cfg.name or f"{cfg.kind}-{key[:12]}"


def write_report(rec: ReportRecord, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    name = report_name(cfg, rec.cache_key)
    path = out / f"{name}.json"
    _atomic_write(path, rec.to_json())
    if cfg.csv and rec.table is not None:
        _atomic_write(out / f"{name}.csv", to_csv(rec.table))
    return path


def _sweep_one(args) -> ReportRecord:
    cfg, use_cache = args
    try:
        return run_experiment(cfg, use_cache)
    except Exception as exc:  # isolated per config
        try:
            key = cache_key(cfg)
        except Exception:
            key = ""
        return ReportRecord(_jsonable(cfg.echo()), None, 0.0, key, error=f"{type(exc).__name__}: {exc}")


def sweep(configs: list, parallelism: int = 1, use_cache: bool = True) -> list[ReportRecord]:
    """Run configs independently; results come back in input order.

    Entries may be :class:`ExperimentConfig`, mappings, or paths.  A config
    that fails to load or run yields a record carrying ``error``.
    """
    jobs: list = []
    for item in configs:
        try:
            if isinstance(item, ExperimentConfig):
                jobs.append(item)
            elif isinstance(item, dict):
                jobs.append(ExperimentConfig.from_dict(item))
            else:
                jobs.append(ExperimentConfig.load(item))
        except Exception as exc:
            jobs.append(f"{type(exc).__name__}: {exc}")
    results: list[ReportRecord | None] = [None] * len(jobs)
    runnable = [(i, j) for i, j in enumerate(jobs) if isinstance(j, ExperimentConfig)]
    for i, j in enumerate(jobs):
        if isinstance(j, str):
            results[i] = ReportRecord({"source": str(configs[i])}, None, 0.0, "", error=j)
    if parallelism > 1 and len(runnable) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            done = list(pool.map(_sweep_one, [(j, use_cache) for _, j in runnable]))
    else:
        done = [_sweep_one((j, use_cache)) for _, j in runnable]
    for (i, _), rec in zip(runnable, done):
        results[i] = rec
    return results


def cache_audit(fraction: float = 0.1, seed: int = 0, root: Path | None = None) -> dict:
    """Recompute a random ``fraction`` of cache entries and compare payloads."""
    root = root or cache_root()
    entries = sorted(root.glob("*/*.json")) if root.exists() else []
    rng = np.random.default_rng(seed)
    count = math.ceil(len(entries) * fraction) if entries else 0
    picked = sorted(rng.choice(len(entries), size=count, replace=False).tolist()) if count else []
    mismatches = []
    for i in picked:
        path = entries[i]
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        conf = entry["config"]
        d = {"kind": conf["kind"], "params": conf["params"]}
        if "graph" in conf:
            d["graph"] = conf["graph"]
        if "mc" in conf:
            d["mc"] = conf["mc"]
        try:
            cfg = ExperimentConfig.from_dict(d, base_dir=entry.get("base_dir", "."))
            fresh = run_experiment(cfg, use_cache=False)
            if fresh.cache_key != path.stem:
                mismatches.append({"key": path.stem, "reason": "stale (inputs changed)"})
            elif fresh.payload != entry["payload"]:
                mismatches.append({"key": path.stem, "reason": "payload differs"})
        except Exception as exc:
            mismatches.append({"key": path.stem, "reason": f"{type(exc).__name__}: {exc}"})
    return {"entries": len(entries), "audited": len(picked), "mismatches": mismatches}
