"""Instance generation and experiment orchestration.

Configs are JSON documents.  A config holds a list of sweeps; each sweep
expands the cartesian product of its list-valued fields and repeats every
combination ``count`` times::

    {
      "sweeps": [
        {"n": [1, 2], "family": "mixed", "m": 4, "perturbation": "affine",
         "epsilon": [0.001, 0.01], "count": 20}
      ],
      "radius_multiple": 2.0,
      "tube_samples": 0,
      "flow": {"step_tol": 0.05},
      "tolerances": {"cert_slack": 1e-6}
    }

The seed of an instance depends on the run seed, the sweep index, ``n``,
``m``, the family and the repetition number, but not on the perturbation or
its magnitude.  An epsilon sweep therefore perturbs the same ``(f, x)``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Optional

import numpy as np

from .bounds import CERTIFICATE_COLUMNS, kn_order_bound, lemma1_certificate
from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import (
    ConvexFunction,
    add_affine,
    add_constant,
    argmin,
    check_convexity,
    dist_to_argmin,
    from_dict,
    scale as scale_fn,
)
from .flow import FlowOptions, integrate
from .stability import REPORT_COLUMNS, VerifyOptions, cv1_rhs, verify_instance

__all__ = [
    "FAMILIES",
    "PERTURBATIONS",
    "ConfigError",
    "GenerationError",
    "InstanceSpec",
    "Instance",
    "ExperimentConfig",
    "generate",
    "instance_seed",
    "load_config",
    "parse_config",
    "expand",
    "run_sweep",
    "write_csv",
]

FAMILIES = ("pure-quadratic", "max-affine", "mixed")
PERTURBATIONS = ("constant", "affine", "scale", "random-mixed")


class ConfigError(ValueError):
    """Invalid experiment config; ``field`` is a dotted path into the document."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    """Recipe for one ``(f, g, x)`` triple.

    ``B`` is the half-width of the coercivity box: max-affine and mixed
    families get the pieces ``+-B x_i - B^2``.  ``shift`` is added to ``g`` on
    top of the perturbation.  ``flat_bottom`` adds a constant piece above the
    minimum so that the argmin set is full-dimensional.
    """

    n: int
    family: str = "mixed"
    m: int = 4
    B: float = 3.0
    perturbation: str = "affine"
    epsilon: float = 0.01
    shift: float = 0.0
    seed: int = 0
    flat_bottom: bool = False
    radius_multiple: float = 2.0

    def __post_init__(self):
        if not (isinstance(self.n, int) and 1 <= self.n <= 16):
            raise ConfigError("n", f"must be an integer in [1, 16], got {self.n!r}")
        if self.family not in FAMILIES:
            raise ConfigError("family", f"must be one of {FAMILIES}, got {self.family!r}")
        if not (isinstance(self.m, int) and 1 <= self.m <= 64):
            raise ConfigError("m", f"must be an integer in [1, 64], got {self.m!r}")
        if not self.B > 0:
            raise ConfigError("B", f"must be positive, got {self.B!r}")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigError("perturbation", f"must be one of {PERTURBATIONS}, got {self.perturbation!r}")
        if not self.epsilon >= 0:
            raise ConfigError("epsilon", f"must be nonnegative, got {self.epsilon!r}")
        if not math.isfinite(self.shift):
            raise ConfigError("shift", "must be finite")
        if not self.radius_multiple >= 1:
            raise ConfigError("radius_multiple", f"must be at least 1, got {self.radius_multiple!r}")


@dataclass(frozen=True, eq=False)
class Instance:
    f: ConvexFunction
    g: ConvexFunction
    x: np.ndarray
    r: float
    spec: Optional[InstanceSpec] = None
    rejections: int = 0


def _box_pieces(n: int, B: float) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(n)
    return B * np.vstack([eye, -eye]), np.full(2 * n, -B * B)


def _random_psd(rng: np.random.Generator, n: int, rank: int) -> np.ndarray:
    M = rng.normal(size=(n, rank))
    return M @ M.T / max(rank, 1)


def _base_function(spec: InstanceSpec, rng: np.random.Generator) -> ConvexFunction:
    n, m = spec.n, spec.m
    if spec.family == "pure-quadratic":
        A = _random_psd(rng, n, n) + 0.1 * np.eye(n)
        return ConvexFunction(A, rng.normal(size=n), np.zeros((0, n)), np.zeros(0), 0.0)
    S = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    Sb, bb = _box_pieces(n, spec.B)
    if spec.family == "max-affine":
        A = np.zeros((n, n))
        c = np.zeros(n)
    else:
        rank = int(rng.integers(0, n + 1))
        A = _random_psd(rng, n, rank) if rank else np.zeros((n, n))
        c = rng.normal(size=n)
    f = ConvexFunction(A, c, np.vstack([S, Sb]), np.concatenate([b, bb]), 0.0)
    if spec.flat_bottom:
        level = argmin(f).min_value + 0.5 * float(rng.uniform(0.5, 1.5))
        f = ConvexFunction(A, c, np.vstack([f.affine_slopes, np.zeros((1, n))]),
                           np.concatenate([f.affine_offsets, [level]]), 0.0)
    return f


def _perturb(f: ConvexFunction, spec: InstanceSpec, rng: np.random.Generator) -> ConvexFunction:
    eps, n = spec.epsilon, spec.n
    if spec.perturbation == "constant":
        g = add_constant(f, eps)
    elif spec.perturbation == "scale":
        g = scale_fn(f, 1.0 + eps)
    elif spec.perturbation == "affine":
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        g = add_affine(f, eps * a, eps * float(rng.normal()))
    else:
        W = rng.normal(size=(n, n))
        A = f.quad_matrix + eps * (W @ W.T) / n
        S = f.affine_slopes + eps * rng.normal(size=f.affine_slopes.shape)
        b = f.affine_offsets + eps * rng.normal(size=f.m)
        g = ConvexFunction(A, f.quad_center, S, b, f.constant + eps * float(rng.normal()))
        a = rng.normal(size=n)
        g = add_affine(g, eps * a / np.linalg.norm(a), 0.0)
    return add_constant(g, spec.shift) if spec.shift else g


def generate(spec: InstanceSpec, tol: Tolerances = DEFAULT_TOLERANCES, max_rejections: int = 100) -> Instance:
    """Build ``(f, g, x, r)`` deterministically from ``spec``.

    ``x`` is drawn around a minimizer at a random distance and rejected while
    it lies in ``C_f``; ``r`` is ``radius_multiple * d(x, C_f)``.

    Raises
    ------
    GenerationError
        If the generated ``f`` fails its self-checks or ``x`` cannot be placed
        outside ``C_f`` within ``max_rejections`` draws.
    """
    rng = np.random.default_rng(spec.seed)
    f = _base_function(spec, rng)
    if check_convexity(f, np.random.default_rng(spec.seed + 1), samples=64) > 1e-9:
        raise GenerationError(f"generated function is not convex (seed {spec.seed})")
    desc = argmin(f, tol=tol)
    if not desc.bounded:
        raise GenerationError(f"generated function has an unbounded argmin set (seed {spec.seed})")
    g = _perturb(f, spec, rng)
    lo, hi = desc.bounding_box()
    width = float(np.max(hi - lo))
    rejections = 0
    while True:
        u = rng.normal(size=spec.n)
        u /= np.linalg.norm(u)
        x = desc.witness + (width + rng.uniform(0.2, 2.0)) * u
        d = float(dist_to_argmin(f, x, tol=tol))
        if d > 1e-6:
            break
        rejections += 1
        if rejections >= max_rejections:
            raise GenerationError(f"could not sample x outside C_f after {rejections} draws")
    return Instance(f, g, x, spec.radius_multiple * d, spec, rejections)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_SWEEP_LIST_FIELDS = ("n", "family", "m", "perturbation", "epsilon", "B", "shift", "flat_bottom")
_SWEEP_KEYS = set(_SWEEP_LIST_FIELDS) | {"count"}
_TOP_KEYS = {"sweeps", "radius_multiple", "tube_samples", "flow", "tolerances", "outputs",
             "instance", "kn", "name"}
_OUTPUT_DEFAULTS = {
    "reports": "reports.csv",
    "certificates": "certificates.csv",
    "summary": "summary.json",
    "plot": "sweep_plot.csv",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see the module docstring for the grammar."""

    sweeps: tuple = ()
    radius_multiple: float = 2.0
    tube_samples: int = 0
    flow: FlowOptions = FlowOptions()
    tolerances: Tolerances = DEFAULT_TOLERANCES
    outputs: tuple = tuple(_OUTPUT_DEFAULTS.items())
    instance: Optional[dict] = None
    kn: Optional[dict] = None
    name: str = "experiment"

    def output(self, key: str) -> str:
        return dict(self.outputs)[key]


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _check_number(path: str, v, positive=False, nonneg=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {v!r}")
    if nonneg and not v >= 0:
        raise ConfigError(path, f"must be nonnegative, got {v!r}")


def _check_sweep(i: int, sw: Any) -> dict:
    path = f"sweeps[{i}]"
    if not isinstance(sw, dict):
        raise ConfigError(path, "expected an object")
    unknown = set(sw) - _SWEEP_KEYS
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    if "n" not in sw:
        raise ConfigError(f"{path}.n", "required field missing")
    out = dict(sw)
    out.setdefault("count", 1)
    _check_number(f"{path}.count", out["count"], positive=True, integer=True)
    for key in _SWEEP_LIST_FIELDS:
        if key not in out:
            continue
        for j, v in enumerate(_as_list(out[key])):
            p = f"{path}.{key}" + (f"[{j}]" if isinstance(out[key], list) else "")
            if key in ("n", "m"):
                _check_number(p, v, positive=True, integer=True)
            elif key in ("epsilon",):
                _check_number(p, v, nonneg=True)
            elif key == "B":
                _check_number(p, v, positive=True)
            elif key == "shift":
                _check_number(p, v)
            elif key == "flat_bottom" and not isinstance(v, bool):
                raise ConfigError(p, f"expected true or false, got {v!r}")
            elif key == "family" and v not in FAMILIES:
                raise ConfigError(p, f"must be one of {FAMILIES}, got {v!r}")
            elif key == "perturbation" and v not in PERTURBATIONS:
                raise ConfigError(p, f"must be one of {PERTURBATIONS}, got {v!r}")
        if key == "n" and any(not 1 <= v <= 16 for v in _as_list(out[key])):
            raise ConfigError(f"{path}.n", "must lie in [1, 16]")
        if key == "m" and any(not 1 <= v <= 64 for v in _as_list(out[key])):
            raise ConfigError(f"{path}.m", "must lie in [1, 64]")
    return out


def _dataclass_overrides(path: str, cls, base, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for k, v in data.items():
        if k not in names:
            raise ConfigError(f"{path}.{k}", "unknown field")
        if v is not None and not isinstance(v, bool):
            _check_number(f"{path}.{k}", v)
    try:
        return dataclasses.replace(base, **data)
    except ValueError as exc:
        msg = str(exc)
        field = next((k for k in data if k in msg), next(iter(data), ""))
        raise ConfigError(f"{path}.{field}", msg) from None


def parse_config(doc: Any) -> ExperimentConfig:
    """Validate a decoded JSON document.

    Raises
    ------
    ConfigError
        Naming the offending field by its dotted path.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    sweeps = doc.get("sweeps", [])
    if not isinstance(sweeps, list):
        raise ConfigError("sweeps", "expected a list")
    sweeps = tuple(_check_sweep(i, sw) for i, sw in enumerate(sweeps))
    rm = doc.get("radius_multiple", 2.0)
    _check_number("radius_multiple", rm, positive=True)
    if rm < 1:
        raise ConfigError("radius_multiple", f"must be at least 1 (the tube must contain x), got {rm!r}")
    ts = doc.get("tube_samples", 0)
    _check_number("tube_samples", ts, nonneg=True, integer=True)
    flow = _dataclass_overrides("flow", FlowOptions, FlowOptions(), doc.get("flow", {}))
    tol = _dataclass_overrides("tolerances", Tolerances, DEFAULT_TOLERANCES, doc.get("tolerances", {}))
    for f_ in dataclasses.fields(Tolerances):
        if not getattr(tol, f_.name) > 0:
            raise ConfigError(f"tolerances.{f_.name}", "must be positive")
    outputs = dict(_OUTPUT_DEFAULTS)
    user_out = doc.get("outputs", {})
    if not isinstance(user_out, dict):
        raise ConfigError("outputs", "expected an object")
    for k, v in user_out.items():
        if k not in outputs:
            raise ConfigError(f"outputs.{k}", "unknown output")
        if not isinstance(v, str) or not v or os.path.isabs(v) or ".." in v.split("/"):
            raise ConfigError(f"outputs.{k}", "must be a relative file name inside --out")
        outputs[k] = v
    inst = doc.get("instance")
    if inst is not None and not isinstance(inst, dict):
        raise ConfigError("instance", "expected an object")
    if inst is not None and "r" in inst:
        _check_number("instance.r", inst["r"], positive=True)
    kn = doc.get("kn")
    if kn is not None:
        if not isinstance(kn, dict):
            raise ConfigError("kn", "expected an object")
        kn = _check_sweep(0, kn) if "n" in kn else kn
    name = doc.get("name", "experiment")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")
    return ExperimentConfig(sweeps, float(rm), int(ts), flow, tol, tuple(outputs.items()), inst, kn, name)


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        On a syntax error (field ``line N``) or an invalid field.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}", f"JSON syntax error: {exc.msg} (column {exc.colno})") from None
    return parse_config(doc)


# ---------------------------------------------------------------------------
# Expansion and execution
# ---------------------------------------------------------------------------


def instance_seed(seed: int, *parts) -> int:
    """Derived 63-bit seed from the run seed and integer labels."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(p) for p in parts]])
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 2**32], dtype=np.uint64)) >> 1


def expand(cfg: ExperimentConfig, seed: int) -> list[InstanceSpec]:
    """Every instance of every sweep, in instance-id order."""
    specs = []
    for si, sw in enumerate(cfg.sweeps):
        keys = [k for k in _SWEEP_LIST_FIELDS if k in sw]
        grids = [_as_list(sw[k]) for k in keys]
        for combo in itertools.product(*grids):
            kw = dict(zip(keys, combo))
            fam = FAMILIES.index(kw.get("family", "mixed"))
            for rep in range(sw["count"]):
                s = instance_seed(seed, si, kw["n"], kw.get("m", 4), fam, rep)
                specs.append(InstanceSpec(seed=s, radius_multiple=cfg.radius_multiple, **kw))
    return specs


def _verify_task(args) -> dict:
    iid, spec, vopts = args
    inst = generate(spec, tol=vopts.tol)
    traj = integrate(inst.f, inst.x, vopts.flow, tol=vopts.tol)
    rep = verify_instance(inst.f, inst.g, inst.x, inst.r, vopts, instance_id=iid, traj=traj)
    delta = rep.delta_star if rep.delta_star > 0 else 0.5 * float(traj.slopes[0])
    cert = lemma1_certificate(inst.f, traj, delta, slack=vopts.tol.slack(1.0)) if delta > 0 else None
    return {
        "report": rep.csv_row(),
        "extra": {
            "n": spec.n,
            "epsilon": spec.epsilon,
            "perturbation": spec.perturbation,
            "kn_ratio": rep.kn_ratio,
            "slack": rep.slack,
            "ad1_grid_min": rep.ad1_grid_min,
            "rejections": inst.rejections,
        },
        "certificate": cert.csv_row(iid, spec.n) if cert is not None else None,
    }


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str, columns, rows, timestamp: bool) -> None:
    """Write rows (dicts) with a fixed column order; floats use ``repr``."""
    buf = io.StringIO()
    if timestamp:
        buf.write(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_json(path: str, doc: dict, timestamp: bool) -> None:
    if timestamp:
        doc = {"generated": datetime.now(timezone.utc).isoformat(timespec="seconds"), **doc}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_sweep(
    cfg: ExperimentConfig,
    seed: int,
    out: str,
    jobs: int = 1,
    timestamp: bool = True,
) -> tuple[int, dict]:
    """Generate, verify and certify every configured instance.

    Writes the report CSV, the length-certificate CSV, the epsilon plot data
    and the summary JSON into ``out``.  Results are ordered by instance id
    whatever the completion order.  The cv1 column uses, for each dimension,
    the largest length ratio observed in the run.

    Returns
    -------
    (exit_code, summary)
        ``exit_code`` is 1 if any certificate failed, 0 otherwise.
    """
    os.makedirs(out, exist_ok=True)
    specs = expand(cfg, seed)
    vopts = VerifyOptions(flow=cfg.flow, tube_samples=cfg.tube_samples, seed=seed & (2**32 - 1),
                          keep_sequence=False, tol=cfg.tolerances)
    tasks = [(i, s, vopts) for i, s in enumerate(specs)]
    results: list = [None] * len(tasks)
    errors = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_verify_task, t) for t in tasks]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:  # keep going; report at the end
                    errors.append({"instance_id": i, "error": f"{type(exc).__name__}: {exc}"})
    else:
        for i, t in enumerate(tasks):
            try:
                results[i] = _verify_task(t)
            except Exception as exc:
                errors.append({"instance_id": i, "error": f"{type(exc).__name__}: {exc}"})

    done = [r for r in results if r is not None]
    K_by_n: dict = {}
    for r in done:
        n = r["extra"]["n"]
        K_by_n[n] = max(K_by_n.get(n, 1.0), r["extra"]["kn_ratio"])
    rows, certs = [], []
    cv1_fail = 0
    for r in done:
        row = dict(r["report"])
        K = K_by_n[r["extra"]["n"]]
        row["rhs_cv1"] = cv1_rhs(row["slope_dev_traj"], row["value_dev_argmin"], row["dist_x"], K)
        if not row["lhs"] <= row["rhs_cv1"] + r["extra"]["slack"]:
            cv1_fail += 1
        rows.append(row)
        if r["certificate"] is not None:
            certs.append(r["certificate"])
    write_csv(os.path.join(out, cfg.output("reports")), REPORT_COLUMNS, rows, timestamp)
    write_csv(os.path.join(out, cfg.output("certificates")), CERTIFICATE_COLUMNS, certs, timestamp)

    # epsilon sweep data: sup over the instances sharing each (perturbation, epsilon)
    groups: dict = {}
    for r, row in zip(done, rows):
        key = (r["extra"]["perturbation"], r["extra"]["epsilon"])
        g = groups.setdefault(key, {"slope_dev": 0.0, "lhs_sup_sampled": -math.inf, "rhs_main": 0.0})
        g["slope_dev"] = max(g["slope_dev"], row["slope_dev_traj"])
        g["lhs_sup_sampled"] = max(g["lhs_sup_sampled"], row["lhs"])
        g["rhs_main"] = max(g["rhs_main"], row["rhs_main"])
    plot_rows = [{"perturbation": k[0], "epsilon": k[1], **v} for k, v in sorted(groups.items())]
    write_csv(os.path.join(out, cfg.output("plot")),
              ("perturbation", "epsilon", "slope_dev", "lhs_sup_sampled", "rhs_main"), plot_rows, timestamp)

    failures = sum(1 for row in rows if not row["passed"])
    lemma_fail = sum(1 for c in certs if not c["passed"])
    ad1_bad = sum(
        1 for r, row in zip(done, rows)
        if row["rhs_main"] > 0 and abs(r["extra"]["ad1_grid_min"] - row["rhs_main"]) > 1e-2 * row["rhs_main"]
    )
    equality = sum(1 for row in rows if abs(row["margin"]) <= 1e-9 * (1.0 + abs(row["lhs"])))
    summary = {
        "name": cfg.name,
        "seed": seed,
        "instances": len(tasks),
        "completed": len(done),
        "errors": errors,
        "certificate_failures": failures,
        "lemma1_failures": lemma_fail,
        "cv1_failures": cv1_fail,
        "ad1_mismatches": ad1_bad,
        "equality_cases": equality,
        "min_margin": min((row["margin"] for row in rows), default=None),
        "max_margin": max((row["margin"] for row in rows), default=None),
        "proof_cases": {c: sum(1 for row in rows if row["proof_case"] == c) for c in ("argmin", "i", "ii")},
        "empirical_K": {str(n): K for n, K in sorted(K_by_n.items())},
        "kn_order_bound": {str(n): kn_order_bound(n) for n in sorted(K_by_n)},
        "generator_rejections": sum(r["extra"]["rejections"] for r in done),
    }
    write_json(os.path.join(out, cfg.output("summary")), summary, timestamp)
    bad = failures or lemma_fail or cv1_fail or errors
    return (1 if bad else 0), summary


def instance_from_config(cfg: ExperimentConfig, seed: int, tol: Tolerances) -> Instance:
    """The single instance of a ``flow``/``verify``/``reconstruct`` config.

    ``instance`` is either an :class:`InstanceSpec` (its ``seed`` defaults to
    the run seed) or explicit data ``{"f": ..., "g": ..., "x": [...], "r": ...}``
    with functions in the :func:`~slopelab.convex_core.to_dict` layout; ``g``
    defaults to ``f`` and ``r`` to ``radius_multiple * d(x, C_f)``.
    """
    inst = cfg.instance
    if inst is None:
        if not cfg.sweeps:
            raise ConfigError("instance", "required for this subcommand")
        return generate(expand(cfg, seed)[0], tol=tol)
    if "f" in inst:
        try:
            f = from_dict(inst["f"])
            g = from_dict(inst["g"]) if "g" in inst else f
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("instance.f", f"invalid function: {exc}") from None
        if "x" not in inst:
            raise ConfigError("instance.x", "required field missing")
        x = np.asarray(inst["x"], dtype=float).reshape(-1)
        if x.shape[0] != f.n:
            raise ConfigError("instance.x", f"expected {f.n} coordinates, got {x.shape[0]}")
        d = float(dist_to_argmin(f, x, tol=tol))
        r = float(inst.get("r", max(cfg.radius_multiple * d, 1e-12)))
        return Instance(f, g, x, r)
    kw = dict(inst)
    kw.setdefault("seed", seed)
    kw.setdefault("radius_multiple", cfg.radius_multiple)
    try:
        return generate(InstanceSpec(**kw), tol=tol)
    except TypeError as exc:
        raise ConfigError("instance", str(exc)) from None
    except ConfigError as exc:
        raise ConfigError(f"instance.{exc.field}", str(exc).split(": ", 1)[1]) from None
