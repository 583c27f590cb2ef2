"""Experiment specs, dispatch, persistence, plots and pre-baked recipes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1
OUTPUT_ENV = "GFFPERC_OUTPUT"
CSV_HEADER = ("d", "L", "h", "n", "seed", "estimate", "se")
SUBCOMMANDS = ("greens", "sample", "estimate", "renorm", "slab-cert")
ESTIMATES = ("crossing", "connectivity", "plane", "hstar", "decay", "seed")

# keys that are not forwarded as operation parameters
_SPEC_KEYS = ("name", "subcommand", "seed", "workers", "output")


class SpecError(ValueError):
    """Invalid experiment configuration."""


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "gffperc-output"))


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; commas make lists."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        key = k.strip().replace("-", "_")
        if not key:
            raise SpecError(f"line {lineno}: empty key")
        out[key] = _parse_value(v)
    return out


@dataclass
class ExperimentSpec:
    name: str
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise SpecError(f"unknown subcommand {self.subcommand!r}; expected one of {SUBCOMMANDS}")
        if int(self.workers) < 1:
            raise SpecError("workers must be positive")
        self.seed = int(self.seed)
        self.workers = int(self.workers)

    @property
    def spec_hash(self) -> str:
        """Hash of everything that determines the numbers (not the worker count or output path)."""
        canon = json.dumps({"subcommand": self.subcommand, "params": self.params, "seed": self.seed}, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def to_config(self) -> str:
        lines = [f"name = {self.name}", f"subcommand = {self.subcommand}", f"seed = {self.seed}", f"workers = {self.workers}"]
        if self.output:
            lines.append(f"output = {self.output}")
        lines += [f"{k} = {_format_value(v)}" for k, v in sorted(self.params.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text: str, overrides: dict | None = None) -> "ExperimentSpec":
        values = parse_config(text)
        values.update(overrides or {})
        if "subcommand" not in values:
            raise SpecError("config needs a subcommand")
        params = {k: v for k, v in values.items() if k not in _SPEC_KEYS}
        return cls(
            name=str(values.get("name", values["subcommand"])),
            subcommand=str(values["subcommand"]),
            params=params,
            seed=values.get("seed", 0),
            workers=values.get("workers", 1),
            output=values.get("output"),
        )


@dataclass
class ResultRecord:
    spec_hash: str
    name: str
    subcommand: str
    started: float
    finished: float
    payload: dict
    version: str = __version__
    failures: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    def payload_json(self) -> str:
        return json.dumps(self.payload, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


# ---------------------------------------------------------------- CSV and plots


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(["" if r.get(k) is None else (repr(float(r[k])) if k in ("h", "estimate", "se") else r[k]) for k in CSV_HEADER])
    return buf.getvalue()


def csv_to_rows(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for r in reader:
        out.append({
            "d": int(r["d"]) if r["d"] else None,
            "L": int(r["L"]) if r["L"] else None,
            "h": float(r["h"]),
            "n": int(r["n"]),
            "seed": int(r["seed"]),
            "estimate": float(r["estimate"]),
            "se": float(r["se"]),
        })
    return out


def plot_curves(rows, path, fits: dict | None = None, title: str = "") -> None:
    """Probability against L for each h, with SE bars and fitted stretched-exponential curves."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    by_h: dict[float, list] = {}
    for r in rows:
        by_h.setdefault(float(r["h"]), []).append(r)
    for h, rs in sorted(by_h.items()):
        rs = sorted(rs, key=lambda r: r["L"])
        Ls = np.array([r["L"] for r in rs], dtype=float)
        p = np.array([r["estimate"] for r in rs])
        se = np.array([r["se"] for r in rs])
        line = ax.errorbar(Ls, p, yerr=se, marker="o", capsize=3, label=f"h = {h:g}")
        fit = (fits or {}).get(h)
        if fit and fit.get("rho") is not None:
            grid = np.linspace(Ls.min(), Ls.max(), 50)
            ax.plot(grid, fit["c"] * np.exp(-fit["c_prime"] * grid ** fit["rho"]), ls="--", color=line[0].get_color())
    ax.set_xlabel("L")
    ax.set_ylabel("crossing probability")
    ax.set_xscale("log")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------- dispatch


def _as_list(v) -> list:
    if v is None:
        return []
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _need(params: dict, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise SpecError(f"missing parameter(s): {', '.join(missing)}")


def _h_grid(p: dict) -> list[float]:
    if "h" in p:
        return [float(h) for h in _as_list(p["h"])]
    _need(p, "h_min", "h_max", "h_step")
    lo, hi, step = float(p["h_min"]), float(p["h_max"]), float(p["h_step"])
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def _run_greens(spec: ExperimentSpec) -> dict:
    from .greens import green

    p = spec.params
    _need(p, "dim")
    d = int(p["dim"])
    point = [int(v) for v in _as_list(p.get("point", 0))]
    if len(point) == 1 and d > 1:
        point = point + [0] * (d - 1)
    if len(point) != d:
        raise SpecError("point must have dim coordinates")
    gv = green(d, point, float(p.get("tol", 1e-10)), str(p.get("method", "quadrature")))
    return {"d": d, "point": point, **gv.to_json()}


def _run_sample(spec: ExperimentSpec) -> dict:
    from .lattice import Window
    from .percolation import default_margin
    from .sampler import sample_window, write_fields

    p = spec.params
    _need(p, "dim", "side")
    d, side = int(p["dim"]), int(p["side"])
    count = int(p.get("count", 1))
    win = Window((0,) * d, (side,) * d)
    margin = int(p.get("margin", default_margin(side)))
    fields = [sample_window(win, margin, spec.seed, i, "cli-sample") for i in range(count)]
    out = {"d": d, "side": side, "margin": margin, "count": count,
           "mean": [float(f.values.mean()) for f in fields], "variance": [float(f.values.var()) for f in fields]}
    if p.get("file"):
        write_fields(p["file"], fields, spec.seed)
        out["file"] = str(p["file"])
    return out


def _run_estimate(spec: ExperimentSpec) -> dict:
    from . import percolation as perc

    p = spec.params
    what = str(p.get("what", "crossing"))
    if what not in ESTIMATES:
        raise SpecError(f"unknown estimate {what!r}; expected one of {ESTIMATES}")
    d = int(p.get("dim", 3))
    n = int(p.get("n", 100))
    margin = p.get("margin")
    margin = None if margin in (None, "auto") else int(margin)
    w = spec.workers
    seed = spec.seed
    out: dict = {"what": what, "d": d, "n": n, "seed": seed}

    if what == "seed":
        from .renorm import RenormConfig, p0_estimate

        _need(p, "L0", "h0")
        cfg = RenormConfig(d, int(p["L0"]), int(p.get("l0", 100)), float(p["h0"]), strict=False)
        est = p0_estimate(cfg, n, seed, margin, w)
        out["rows"] = [est.row()]
        return out
    if what == "hstar":
        _need(p, "L")
        sizes = [int(L) for L in _as_list(p["L"])]
        ns = p.get("n_per_L")
        n_arg = {L: int(k) for L, k in zip(sizes, _as_list(ns))} if ns else n
        est = perc.estimate_hstar(d, sizes, _h_grid(p), n_arg, seed, margin, str(p.get("field", "gff")), w)
        out["hstar"] = est.to_json()
        return out
    if what == "plane":
        rows = []
        for L in _as_list(p.get("L", 16)):
            t = perc.plane_thresholds(int(L), n, seed, margin, min(_h_grid(p)), w)
            rows += [perc.McEstimate.bernoulli(perc.fraction_above(t, h), n, seed, d=3, L=int(L), h=h, what="plane").row() for h in _h_grid(p)]
        out["rows"] = rows
        return out
    if what == "connectivity":
        _need(p, "x")
        x = [int(v) for v in _as_list(p["x"])]
        rows = []
        t = perc.connectivity_thresholds(d, x, n, seed, margin, min(_h_grid(p)), w)
        for h in _h_grid(p):
            rows.append(perc.McEstimate.bernoulli(perc.fraction_above(t, h), n, seed, d=d, L=int(np.abs(x).max()), h=h, what="connectivity").row())
        out["rows"] = rows
        return out

    # crossing and decay share the per-size threshold samples
    sizes = [int(L) for L in _as_list(p.get("L", [8, 16]))]
    hs = _h_grid(p)
    curves = {L: perc.crossing_curve(d, L, hs, n, seed, margin, w, str(p.get("field", "gff"))) for L in sizes}
    out["rows"] = [e.row() for L in sizes for e in curves[L]]
    if what == "decay":
        fits, failures = {}, []
        for j, h in enumerate(hs):
            try:
                fits[repr(h)] = perc.fit_decay([(L, curves[L][j]) for L in sizes]).to_json()
            except ValueError as exc:
                failures.append({"task": f"fit h={h!r}", "error": str(exc)})
        out["fits"] = fits
        if failures:
            out["failures"] = failures
    return out


def _run_renorm(spec: ExperimentSpec) -> dict:
    from .renorm import ConstantsLedger, RenormConfig, certify_from_seed, p0_estimate, p0_upper_bound, rho

    p = spec.params
    d = int(p.get("dim", 3))
    ledger = ConstantsLedger.load(p["ledger"]) if p.get("ledger") else None
    cfg = RenormConfig(d, int(p.get("L0", 10)), int(p.get("l0", 100)), float(p.get("h0", 20.0)), ledger)
    mode = str(p.get("p0", "analytic"))
    nmax = int(p.get("nmax", 40))
    seed_info: dict = {"mode": mode}
    if mode == "analytic":
        try:
            p0 = p0_upper_bound(cfg)
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
        source = "analytic"
    elif mode.startswith("mc:"):
        parts = mode.split(":")
        if len(parts) != 3:
            raise SpecError("p0 must be 'analytic' or 'mc:<n>:<seed>'")
        est = p0_estimate(cfg, int(parts[1]), int(parts[2]), workers=spec.workers)
        p0 = est.value
        seed_info.update(est.row())
        source = "mc"
    else:
        raise SpecError("p0 must be 'analytic' or 'mc:<n>:<seed>'")
    trace = certify_from_seed(cfg, p0, source, nmax)
    out = trace.to_json()
    out["rho"] = rho(cfg.l0)
    out["seed"] = seed_info
    return out


def _run_slab(spec: ExperimentSpec) -> dict:
    from .slab import slab_pipeline

    p = spec.params
    _need(p, "h0", "L0")
    pc = p.get("pcsite")
    rep = slab_pipeline(float(p["h0"]), int(p["L0"]), None if pc in (None, "auto") else float(pc), int(p.get("mc", 0)), spec.seed)
    out = rep.to_json()
    if int(p.get("circuit_n", 0)) > 0:
        from .blocks import bad_circuit_probe

        probe = bad_circuit_probe(int(p.get("dim", rep.d0)), float(p["h0"]), int(p["L0"]), int(p.get("blocks", 4)), int(p["circuit_n"]), spec.seed)
        out["empirical_checks"]["bad_circuit"] = probe.row()
    return out


_HANDLERS = {
    "greens": _run_greens,
    "sample": _run_sample,
    "estimate": _run_estimate,
    "renorm": _run_renorm,
    "slab-cert": _run_slab,
}


def run(spec: ExperimentSpec, write: bool = True) -> ResultRecord:
    """Execute a spec. The payload depends only on the spec and its seed."""
    start = time.time()
    payload = _HANDLERS[spec.subcommand](spec)
    payload = json.loads(json.dumps(payload, sort_keys=True, default=_json_default))
    payload["schema_version"] = SCHEMA_VERSION
    rec = ResultRecord(spec.spec_hash, spec.name, spec.subcommand, start, time.time(), payload, failures=list(payload.get("failures", [])))
    if write and spec.output:
        persist(rec, spec)
    return rec


def persist(rec: ResultRecord, spec: ExperimentSpec) -> Path:
    outdir = Path(spec.output)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "results.jsonl", "a") as fh:
        fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    (outdir / f"{spec.name}.json").write_text(dumps(rec.payload) + "\n")
    rows = rec.payload.get("rows")
    if rows:
        (outdir / f"{spec.name}.csv").write_text(rows_to_csv(rows))
        fits = {float(h): f for h, f in rec.payload.get("fits", {}).items()}
        plot_curves(rows, outdir / f"{spec.name}.svg", fits, spec.name)
    return outdir


# ---------------------------------------------------------------- recipes

RECIPES = ("d3-hstar", "decay-scan", "slab-probe", "renorm-trace")


def recipe(name: str, output: str | None = None) -> list[ExperimentSpec]:
    """Pre-baked spec bundles matching the acceptance runs."""
    out = output or str(default_output_dir() / name)
    if name == "d3-hstar":
        return [ExperimentSpec(name, "estimate", {
            "what": "hstar", "dim": 3, "L": [16, 32, 64], "h_min": 0.0, "h_max": 2.5, "h_step": 0.05,
            "n": 200, "n_per_L": [400, 400, 200],
        }, seed=2024, output=out)]
    if name == "decay-scan":
        return [ExperimentSpec(name, "estimate", {
            "what": "decay", "dim": 3, "L": [8, 16, 32], "h": [1.5, 2.0, 2.5, 3.0], "n": 2000,
        }, seed=7, output=out)]
    if name == "slab-probe":
        return [ExperimentSpec(name, "slab-cert", {"h0": 0.25, "L0": 2, "mc": 200, "circuit_n": 20, "blocks": 4}, seed=11, output=out)]
    if name == "renorm-trace":
        return [ExperimentSpec(name, "renorm", {"dim": 3, "L0": 10, "l0": 100, "h0": 16.0, "nmax": 40, "p0": "analytic"}, seed=0, output=out)]
    raise SpecError(f"unknown recipe {name!r}; expected one of {RECIPES}")
