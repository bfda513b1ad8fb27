"""Batch experiments driven by a JSON run configuration.

A configuration names one experiment kind, a representation, a convolution
semigroup, an input state and a time grid.  :func:`run` executes it and
returns a :class:`RunReport`; :func:`write_report` stores the report plus the
experiment's CSV data.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import groups as G
from . import semigroups as S
from . import star, weyl
from .core_ops import embed, hs_norm, operator_from_json, random_density, validate_density
from .phase_space import PhaseGrid

SCHEMA_VERSION = 1
EXPERIMENTS = ("dequantize", "evolve", "intertwine_check", "star_check", "generator_check", "bochner_check")

_matrix2 = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "minItems": 2, "maxItems": 2}
_vector2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "experiment", "representation", "semigroup", "state", "time_grid"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "representation": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "d"],
                    "properties": {"kind": {"const": "discrete_weyl"}, "d": {"type": "integer", "minimum": 3}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "fock_displacement"},
                        "N": {"type": "integer", "minimum": 8, "default": 32},
                        "grid": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["n"],
                            "properties": {
                                "n": {"type": "integer", "minimum": 8},
                                "L": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    },
                },
            ]
        },
        "semigroup": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "base", "rate"],
                    "properties": {
                        "kind": {"const": "compound_poisson"},
                        "base": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["support", "weights"],
                            "properties": {
                                "support": {"type": "array", "items": _vector2, "minItems": 1},
                                "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                            },
                        },
                        "rate": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "diffusion"],
                    "properties": {
                        "kind": {"const": "gaussian"},
                        "drift": _vector2,
                        "diffusion": _matrix2,
                    },
                },
            ]
        },
        "state": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "seed"],
                    "properties": {
                        "kind": {"const": "random"},
                        "seed": {"type": "integer", "minimum": 0},
                        "support": {"type": "integer", "minimum": 1},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "n"],
                    "properties": {"kind": {"const": "fock"}, "n": {"type": "integer", "minimum": 0}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "path"],
                    "properties": {"kind": {"const": "file"}, "path": {"type": "string"}},
                },
            ]
        },
        "time_grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "seed": {"type": "integer", "minimum": 0},
        "monte_carlo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 2},
                "shards": {"type": "integer", "minimum": 2},
            },
        },
        "output_dir": {"type": "string"},
    },
}

DEFAULT_TOLERANCES = {
    "isometry": 1e-10,
    "inverse_roundtrip": 1e-10,
    "wigner_imaginary": 1e-10,
    "density": 1e-10,
    "intertwining": 1e-12,
    "intertwining_sigma": 5.0,
    "homomorphism_finite": 1e-12,
    "homomorphism_grid": 1e-4,
    "route_agreement": 1e-3,
    "generator_finite": 1e-8,
    "generator_plane": 1e-6,
    "slope": 1e-3,
    "char_origin": 1e-15,
    "char_bound": 1e-12,
    "gram_psd": 1e-10,
}


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class CheckRecord:
    name: str
    value: float
    tolerance: float
    passed: bool
    error_estimate: float | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed}
        if self.error_estimate is not None:
            out["error_estimate"] = self.error_estimate
        return out


@dataclass
class RunReport:
    experiment: str
    config: dict
    records: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)  # file name -> CSV text

    @property
    def status(self) -> str:
        return "pass" if all(r.passed for r in self.records) else "fail"

    def check(self, name, value, tolerance, error_estimate=None, passed=None) -> CheckRecord:
        value = float(value)
        ok = bool(value <= tolerance) if passed is None else bool(passed)
        rec = CheckRecord(name, value, float(tolerance), ok, None if error_estimate is None else float(error_estimate))
        self.records.append(rec)
        return rec

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "status": self.status,
            "records": [r.to_dict() for r in self.records],
            "environment": self.environment,
            "timings": self.timings,
            "data_files": sorted(self.data),
            "config": self.config,
        }


# --------------------------------------------------------------------------
# configuration


def _field_path(err: jsonschema.ValidationError) -> str:
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        path.append(missing)
    elif err.validator == "additionalProperties" and "'" in err.message:
        path.append(err.message.split("'")[1])
    return ".".join(str(p) for p in path) or "<root>"


def validate_config(cfg, base_dir: Path | None = None) -> dict:
    """Check ``cfg`` against :data:`CONFIG_SCHEMA` plus the semantic rules.

    Returns a resolved deep copy with defaults filled in.  Raises
    :class:`ConfigError` naming the first offending field.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(list(e.absolute_path)), str(e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_field_path(err), err.message)
    cfg = copy.deepcopy(cfg)
    tg = np.asarray(cfg["time_grid"], dtype=float)
    if tg[0] != 0 or np.any(np.diff(tg) <= 0):
        raise ConfigError("time_grid", "must start at 0 and be strictly increasing")
    rep = cfg["representation"]
    if rep["kind"] == "discrete_weyl" and rep["d"] % 2 == 0:
        raise ConfigError("representation.d", "d must be odd")
    if rep["kind"] == "fock_displacement":
        rep.setdefault("N", 32)
        grid = rep.setdefault("grid", {"n": 256})
        n = grid["n"]
        if n & (n - 1):
            raise ConfigError("representation.grid.n", "must be a power of two")
        grid.setdefault("L", float(np.sqrt(n * np.pi / 2)))
    sg = cfg["semigroup"]
    finite = rep["kind"] == "discrete_weyl"
    if finite and sg["kind"] != "compound_poisson":
        raise ConfigError("semigroup.kind", "the finite group supports compound_poisson semigroups only")
    if not finite and sg["kind"] == "compound_poisson":
        raise ConfigError("semigroup.kind", "the plane supports gaussian semigroups only")
    if sg["kind"] == "compound_poisson":
        if len(sg["base"]["support"]) != len(sg["base"]["weights"]):
            raise ConfigError("semigroup.base.weights", "support and weights differ in length")
        if abs(sum(sg["base"]["weights"]) - 1.0) > 1e-12:
            raise ConfigError("semigroup.base.weights", "weights must sum to 1")
    else:
        sg.setdefault("drift", [0.0, 0.0])
        try:
            G._check_psd(np.asarray(sg["diffusion"], dtype=float))
        except ValueError as exc:
            raise ConfigError("semigroup.diffusion", str(exc)) from None
    state = cfg["state"]
    dim = rep["d"] if finite else rep["N"]
    if state["kind"] == "file":
        p = Path(state["path"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.is_file():
            raise ConfigError("state.path", f"file {str(p)!r} does not exist")
        state["path"] = str(p)
    if state["kind"] == "fock" and (finite or state["n"] >= dim):
        raise ConfigError("state.n", "Fock states need the fock_displacement representation and n < N")
    if state["kind"] == "random":
        state.setdefault("support", dim if finite else 4)
        if state["support"] > dim:
            raise ConfigError("state.support", "support exceeds the representation dimension")
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in cfg.get("tolerances", {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{k}", f"unknown tolerance; expected one of {sorted(DEFAULT_TOLERANCES)}")
        tol[k] = v
    cfg["tolerances"] = tol
    cfg.setdefault("seed", 0)
    mc = cfg.setdefault("monte_carlo", {})
    mc.setdefault("n_samples", 200_000)
    mc.setdefault("shards", 16)
    if mc["n_samples"] < mc["shards"]:
        raise ConfigError("monte_carlo.n_samples", "fewer samples than shards")
    if cfg["experiment"] == "bochner_check" and finite:
        raise ConfigError("experiment", "bochner_check needs the plane (fock_displacement) representation")
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{str(path)!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"not valid JSON: {exc}") from None
    return validate_config(raw, base_dir=path.parent)


def config_schema() -> dict:
    return copy.deepcopy(CONFIG_SCHEMA)


# --------------------------------------------------------------------------
# building blocks from a resolved config


def build_representation(cfg: dict) -> weyl.Representation:
    rep = cfg["representation"]
    if rep["kind"] == "discrete_weyl":
        return weyl.discrete_weyl_representation(rep["d"])
    return weyl.fock_representation(rep["N"], PhaseGrid(rep["grid"]["n"], rep["grid"]["L"]))


def build_semigroup(cfg: dict, ctx: G.GroupContext):
    return G.semigroup_from_dict(ctx, cfg["semigroup"])


def build_state(cfg: dict, rep: weyl.Representation) -> np.ndarray:
    st = cfg["state"]
    if st["kind"] == "random":
        return embed(random_density(st["support"], st["seed"]), rep.dim)
    if st["kind"] == "fock":
        return weyl.fock_state(rep.dim, st["n"])
    rho = operator_from_json(Path(st["path"]).read_text())
    if rho.shape[0] != rep.dim:
        raise ConfigError("state.path", f"operator has dimension {rho.shape[0]}, expected {rep.dim}")
    report = validate_density(rho)
    if not report.ok:
        raise ConfigError("state.path", f"operator is not a density operator: {report.violations}")
    return rho


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _evolution_csv(rows) -> str:
    return _csv(["t", "observable_name", "value", "error_estimate"],
                [(t, name, v, "" if e is None else repr(float(e))) for t, name, v, e in rows])


def _tomogram_csv(values: np.ndarray) -> str:
    n = values.shape[0]
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rows = [(str(a), str(b), v.real, v.imag) for a, b, v in zip(i.ravel(), j.ravel(), values.ravel())]
    return _csv(["index1", "index2", "re", "im"], rows)


# --------------------------------------------------------------------------
# experiments


def _dequantize(cfg, rep, sg, rho, report, tol):
    fw = weyl.fw_transform(rep, rho)
    report.check("isometry", abs(fw.norm() - hs_norm(rho)) / hs_norm(rho), tol["isometry"])
    back = weyl.fw_inverse(rep, fw)
    report.check("inverse_roundtrip", np.abs(back - rho).max(), tol["inverse_roundtrip"])
    report.data["fourier_wigner.csv"] = _tomogram_csv(fw.values)
    if not rep.is_finite:
        w = weyl.fw_to_wigner(fw)
        report.check("wigner_imaginary", np.abs(w.values.imag).max(), tol["wigner_imaginary"])
        report.data["wigner.csv"] = _tomogram_csv(w.values)


def _wigner_moments(values: np.ndarray, grid: PhaseGrid):
    Q, P = grid.mesh()
    p = values.real * grid.weight
    mass = p.sum()
    mq, mp = (p * Q).sum() / mass, (p * P).sum() / mass
    cqq = (p * (Q - mq) ** 2).sum() / mass
    cpp = (p * (P - mp) ** 2).sum() / mass
    cqp = (p * (Q - mq) * (P - mp)).sum() / mass
    return {"mass": mass, "mean_q": mq, "mean_p": mp, "cov_qq": cqq, "cov_pp": cpp, "cov_qp": cqp}


def _slope(ts, ys) -> float:
    return float(np.polyfit(ts, ys, 1)[0])


def _evolve(cfg, rep, sg, rho, report, tol):
    ts = cfg["time_grid"]
    rows = []
    if rep.is_finite:
        handle = S.SemigroupHandle("twirl", sg, rep)
        worst = 0.0
        for t in ts:
            out = handle.apply(rho, t)
            dr = validate_density(out, tol["density"])
            worst = max(worst, dr.hermitian_deviation, max(-dr.min_eigenvalue, 0.0), dr.trace_deviation)
            rows.append((t, "purity", float(np.real(np.trace(out @ out))), None))
            rows.append((t, "min_eigenvalue", dr.min_eigenvalue, None))
        report.check("density", worst, tol["density"])
    else:
        w0 = weyl.wigner_transform(rep, rho)
        covs = {"cov_qq": [], "cov_pp": [], "cov_qp": []}
        for t in ts:
            m = _wigner_moments(S.wigner_convolve_step(w0, sg, t).values, w0.domain)
            for name in ("mass", "mean_q", "mean_p", "cov_qq", "cov_pp", "cov_qp"):
                rows.append((t, name, m[name], None))
            for k in covs:
                covs[k].append(m[k])
        if len(ts) >= 2:
            S_ = sg.diffusion
            for key, target in (("cov_qq", S_[0, 0]), ("cov_pp", S_[1, 1]), ("cov_qp", S_[0, 1])):
                err = abs(_slope(ts, covs[key]) - target) / max(abs(target), np.abs(S_).max())
                report.check(f"slope_{key}", err, tol["slope"])
    report.data["evolution.csv"] = _evolution_csv(rows)


def _intertwine(cfg, rep, sg, rho, report, tol):
    rows = []
    mc = cfg["monte_carlo"]
    for t in cfg["time_grid"]:
        r = S.check_intertwining(rep, rho, sg, t, n_samples=mc["n_samples"], seed=cfg["seed"], shards=mc["shards"])
        if r.error_bar is None:
            report.check(f"intertwining_t={t!r}", r.deviation, tol["intertwining"])
        else:
            bound = tol["intertwining_sigma"] * r.error_bar
            # t = 0 has a zero error bar and must match exactly
            report.check(f"intertwining_t={t!r}", r.deviation, max(bound, tol["intertwining"]), r.error_bar)
        rows.append((t, "intertwining_deviation", r.deviation, r.error_bar))
    report.data["evolution.csv"] = _evolution_csv(rows)


def _random_states(rep, rng, k):
    if rep.is_finite:
        return [random_density(rep.dim, rng) for _ in range(k)]
    return [weyl.localized_density(rep.dim, rng) for _ in range(k)]


def _star(cfg, rep, sg, rho, report, tol):
    rng = np.random.default_rng(cfg["seed"])
    if rep.is_finite:
        worst = 0.0
        for _ in range(20):
            A, B = _random_states(rep, rng, 2)
            prod = star.finite_twisted(weyl.fw_transform(rep, A), weyl.fw_transform(rep, B))
            worst = max(worst, float(np.abs(prod.values - weyl.fw_transform(rep, A @ B).values).max()))
        report.check("homomorphism_finite", worst, tol["homomorphism_finite"])
        return
    A = rho
    B = _random_states(rep, rng, 1)[0]
    fa, fb = weyl.fw_transform(rep, A), weyl.fw_transform(rep, B)
    fab = weyl.fw_transform(rep, A @ B)
    conv = star.twisted_convolution(fa, fb)
    report.check("homomorphism_twisted_convolution", np.abs(conv.values - fab.values).max(), tol["homomorphism_grid"])
    prod = star.twisted_product(weyl.fw_to_wigner(fa), weyl.fw_to_wigner(fb))
    report.check("homomorphism_twisted_product", np.abs(prod.values - weyl.fw_to_wigner(fab).values).max(),
                 tol["homomorphism_grid"])
    coarse = PhaseGrid(32, 4.0)
    Q, P = coarse.mesh()
    g1 = np.exp(-((Q - 0.3) ** 2 + P**2) / 1.5)
    g2 = np.exp(-(Q**2 + (P + 0.4) ** 2) / 2.0)
    diff = star.twisted_product(g1, g2, coarse, "kernel") - star.twisted_product(g1, g2, coarse, "fourier")
    report.check("route_agreement", np.abs(diff).max(), tol["route_agreement"])


def _generator(cfg, rep, sg, rho, report, tol):
    if rep.is_finite:
        handle = S.SemigroupHandle("twirl", sg, rep)
        est = S.estimate_generator(handle, rho)
        exact = S.analytic_generator(handle).apply(rho)
        report.check("generator_finite", np.abs(est.value - exact).max(), tol["generator_finite"], est.error)
        return
    f = weyl.fw_transform(rep, rho)
    est = S.estimate_generator(S.SemigroupHandle("fw_multiply", sg), f)
    pts = f.domain.points()
    k = np.stack([-pts[..., 1], pts[..., 0]], axis=-1)
    sigma = np.einsum("...i,ij,...j->...", k, sg.diffusion, k)
    symbol = 1j * (k @ sg.drift) - 0.5 * sigma
    report.check("generator_plane", np.abs(est.value.values - symbol * f.values).max(), tol["generator_plane"],
                 est.error)


def _bochner(cfg, rep, sg, rho, report, tol):
    dual = PhaseGrid(64, rep.grid.L).dual()
    ctx = G.GroupContext.plane()
    origin_dev = bound = 0.0
    gram = np.inf
    rng = np.random.default_rng(cfg["seed"])
    for t in cfg["time_grid"]:
        mu = sg.at(t)
        origin_dev = max(origin_dev, abs(G.symplectic_char(mu, np.zeros(2)) - 1.0))
        bound = max(bound, float(np.abs(G.symplectic_char(mu, dual.points())).max()) - 1.0)
        pts = rng.uniform(-3, 3, size=(40, 2))
        gram = min(gram, G.is_positive_definite(lambda g, mu=mu: G.symplectic_char(mu, g), pts, ctx))
    report.check("char_origin", origin_dev, tol["char_origin"])
    report.check("char_bound", max(bound, 0.0), tol["char_bound"])
    report.check("gram_psd", max(-gram, 0.0), tol["gram_psd"])


_RUNNERS = {
    "dequantize": _dequantize,
    "evolve": _evolve,
    "intertwine_check": _intertwine,
    "star_check": _star,
    "generator_check": _generator,
    "bochner_check": _bochner,
}


def run(cfg: dict, seed: int | None = None) -> RunReport:
    """Execute a (raw or resolved) configuration.

    ``seed`` overrides the configuration's master seed, which drives Monte
    Carlo sampling and auxiliary random states.  Numerical failures become
    failed records rather than exceptions.
    """
    cfg = validate_config(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    report = RunReport(cfg["experiment"], cfg)
    t0 = time.perf_counter()
    rep = build_representation(cfg)
    sg = build_semigroup(cfg, rep.ctx)
    rho = build_state(cfg, rep)
    report.timings["setup"] = time.perf_counter() - t0
    report.environment = {
        "precision": "float64",
        "numpy": np.__version__,
        "representation": rep.describe(),
        "seed": cfg["seed"],
    }
    t0 = time.perf_counter()
    try:
        _RUNNERS[cfg["experiment"]](cfg, rep, sg, rho, report, cfg["tolerances"])
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        report.records.append(CheckRecord("numerical_error", float("nan"), 0.0, False))
        report.environment["error"] = f"{type(exc).__name__}: {exc}"
    report.timings["experiment"] = time.perf_counter() - t0
    return report


def write_report(report: RunReport, out_dir) -> Path:
    """Write ``report.json`` and the data CSVs into ``out_dir``; returns the JSON path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in report.data.items():
        (out / name).write_text(text)
    path = out / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# comparison


def _identity_key(report: dict):
    cfg = report.get("config", {})
    return report.get("experiment"), json.dumps(cfg.get("representation"), sort_keys=True)


def compare_runs(report_a: dict, report_b: dict, rel_tol: float = 1e-9) -> dict:
    """Record-by-record comparison of two report dictionaries.

    A value pair differing by more than ``rel_tol`` (relative) is a
    ``difference`` unless both records carry error estimates and the gap is
    within the combined error bar, in which case it is ``statistical_ok``.
    Reports of different experiment kinds or representations are rejected.
    """
    if _identity_key(report_a) != _identity_key(report_b):
        raise ValueError("reports come from different experiment kinds or representations")
    a = {r["name"]: r for r in report_a.get("records", [])}
    b = {r["name"]: r for r in report_b.get("records", [])}
    out = {"differences": [], "statistical_ok": [], "missing": sorted(set(a) ^ set(b))}
    for name in sorted(set(a) & set(b)):
        va, vb = a[name]["value"], b[name]["value"]
        if va == vb or (np.isnan(va) and np.isnan(vb)):
            continue
        rel = abs(va - vb) / max(abs(va), abs(vb))
        if rel <= rel_tol:
            continue
        entry = {"name": name, "a": va, "b": vb, "relative_difference": rel}
        ea, eb = a[name].get("error_estimate"), b[name].get("error_estimate")
        if ea is not None and eb is not None and abs(va - vb) <= ea + eb:
            out["statistical_ok"].append(entry)
        else:
            out["differences"].append(entry)
    out["identical"] = not (out["differences"] or out["statistical_ok"] or out["missing"])
    return out
