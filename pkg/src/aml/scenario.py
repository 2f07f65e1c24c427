"""Scenario files, the analysis pipeline and canonical JSON reports.

A scenario is a JSON document naming a family of initial system-environment
states (``kind``) plus search and tolerance settings. Complex numbers are
written as ``[re, im]`` pairs, matrices as row-major nested lists, and any
density matrix may be replaced by a seeded generator,
``{"random_density": {"rank": r, "seed": s}}``.
"""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .assignment import (AssignmentBasis, OperatorSubspace, build_assignment,
                         canonical_extension, classify_assignment, consistency_check,
                         cp_assignment_from_structure, independence_rank, is_cp,
                         kernel_component, max_pair_deviation, u_consistency_check)
from .dynamics import (build_reference, classify_dynamics, counterexample_search,
                       markovianity_report, reduced_dynamics, sample_unitary)
from .errors import AMLError, DensityError
from .states import MarkovStructure, random_density, validate_density
from .tensor_linalg import LabeledOperator, partial_trace

KINDS = ("pechukas", "cq_blocks", "entangled_pair", "custom", "generalized_v")

_number = {"type": "number"}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}
_literal = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _complex}}
_generator = {
    "type": "object",
    "required": ["random_density"],
    "additionalProperties": False,
    "properties": {"random_density": {
        "type": "object",
        "additionalProperties": False,
        "required": ["seed"],
        "properties": {"rank": {"type": "integer", "minimum": 1}, "seed": {"type": "integer", "minimum": 0}},
    }},
}
_density = {"oneOf": [_literal, _generator]}
_density_list = {"type": "array", "minItems": 1, "items": _density}

SCHEMA = {
    "type": "object",
    "required": ["name", "kind", "d_S", "d_E"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "kind": {"enum": list(KINDS)},
        "d_S": {"type": "integer", "minimum": 1},
        "d_E": {"type": "integer", "minimum": 1},
        "states": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma_E": {"anyOf": [_density, _density_list]},  # single or per-block; kind decides
                "sigma_E_alt": _density,
                "system_states": _density_list,
                "kernel_system_state": _density,
                "joint_states": _density_list,
                "mixtures": {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trials": {"type": "integer", "minimum": 1},
                "samples_per_trial": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "domain": {"enum": ["vs", "full"]},
                "unitary_sampler": {"enum": ["haar", "mixed"]},
            },
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "unitaries": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "unitary_sampler": {"enum": ["haar", "mixed"]},
            },
        },
        "assignment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "extension_seed": {"type": "integer", "minimum": 0},
                "falsifier_samples": {"type": "integer", "minimum": 1},
                "falsifier_seed": {"type": "integer", "minimum": 0},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("hermiticity", "psd", "markov_gap", "witness_margin")},
        },
    },
}


class ScenarioError(AMLError, ValueError):
    """Invalid scenario document; ``pointer`` is a JSON pointer to the offending entry."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class PipelineError(AMLError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@dataclass
class SearchConfig:
    trials: int = 200
    samples_per_trial: int = 64
    seed: int = 0
    domain: str = "vs"
    unitary_sampler: str = "haar"


@dataclass
class DynamicsConfig:
    unitaries: int = 10
    samples: int = 256
    seed: int = 0
    unitary_sampler: str = "haar"


@dataclass
class AssignmentConfig:
    extension_seed: int = 0
    falsifier_samples: int = 2000
    falsifier_seed: int = 0


@dataclass
class Tolerances:
    hermiticity: float = 1e-9
    psd: float = 1e-9
    markov_gap: float = 1e-7
    witness_margin: float = 1e-3


@dataclass
class ScenarioConfig:
    name: str
    kind: str
    d_S: int
    d_E: int
    states: dict = field(default_factory=dict)
    description: str = ""
    search: SearchConfig = field(default_factory=SearchConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    assignment: AssignmentConfig = field(default_factory=AssignmentConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not d["description"]:
            del d["description"]
        return d


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def _complex(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, list) else complex(x)


def _matrix(entry, dim: int, ptr: str, tol: float) -> np.ndarray:
    """Materialize one density entry (literal or generator) of side ``dim``."""
    if isinstance(entry, dict):
        gen = entry["random_density"]
        rank = gen.get("rank", dim)
        if rank > dim:
            raise ScenarioError(ptr + "/random_density/rank", f"rank {rank} exceeds dimension {dim}")
        return random_density(dim, rank, gen["seed"]).matrix
    rows = len(entry)
    if rows != dim or any(len(r) != dim for r in entry):
        raise ScenarioError(ptr, f"expected a {dim}x{dim} matrix")
    try:
        m = np.array([[_complex(x) for x in row] for row in entry])
    except (TypeError, ValueError, IndexError):
        raise ScenarioError(ptr, "entries must be numbers or [re, im] pairs") from None
    try:
        validate_density(m, tol)
    except DensityError as exc:
        raise ScenarioError(ptr, f"not a density matrix: {exc}") from None
    return m


def _default_system_states(d: int) -> list[np.ndarray]:
    """A fixed informationally complete set of d^2 pure states."""
    out = []
    for i in range(d):
        out.append(np.outer(np.eye(d)[i], np.eye(d)[i]))
    for i in range(d):
        for j in range(i + 1, d):
            for phase in (1, 1j):
                v = np.zeros(d, dtype=complex)
                v[i], v[j] = 1 / np.sqrt(2), phase / np.sqrt(2)
                out.append(np.outer(v, v.conj()))
    return out


@dataclass
class Materialized:
    joint_states: list  # ndarray, side d_S*d_E
    structure: MarkovStructure | None = None
    right_states: list | None = None


def materialize(cfg: ScenarioConfig) -> Materialized:
    """Build the scenario's initial joint states (and Markov structure, when the kind fixes one)."""
    d_S, d_E, st, tol = cfg.d_S, cfg.d_E, cfg.states, cfg.tolerances.psd
    p = "/states"

    def system_states():
        if "system_states" in st:
            return [_matrix(e, d_S, f"{p}/system_states/{i}", tol) for i, e in enumerate(st["system_states"])]
        return _default_system_states(d_S)

    def single(key):
        if key not in st:
            raise ScenarioError(f"{p}/{key}", f"kind {cfg.kind!r} requires states.{key}")
        entry = st[key]
        return _matrix(entry, d_E, f"{p}/{key}", tol)

    if cfg.kind == "pechukas":
        sigma = single("sigma_E")
        joints = [np.kron(s, sigma) for s in system_states()]
        return Materialized(joints, MarkovStructure([(d_S, 1)]), [sigma])

    if cfg.kind == "generalized_v":
        sigma, alt = single("sigma_E"), single("sigma_E_alt")
        rho0 = (_matrix(st["kernel_system_state"], d_S, f"{p}/kernel_system_state", tol)
                if "kernel_system_state" in st else _default_system_states(d_S)[0])
        joints = [np.kron(s, sigma) for s in system_states()] + [np.kron(rho0, alt)]
        return Materialized(joints, MarkovStructure([(d_S, 1)]), [sigma])

    if cfg.kind == "cq_blocks":
        entries = st.get("sigma_E")
        if not isinstance(entries, list) or len(entries) != d_S or isinstance(entries[0], (int, float)):
            raise ScenarioError(f"{p}/sigma_E", f"cq_blocks needs a list of {d_S} environment states")
        sigmas = [_matrix(e, d_E, f"{p}/sigma_E/{k}", tol) for k, e in enumerate(entries)]
        proj = [np.outer(np.eye(d_S)[k], np.eye(d_S)[k]) for k in range(d_S)]
        joints = [np.kron(P, s) for P, s in zip(proj, sigmas)]
        for i, probs in enumerate(st.get("mixtures", [])):
            if len(probs) != d_S or abs(sum(probs) - 1) > tol:
                raise ScenarioError(f"{p}/mixtures/{i}", "not a probability distribution over the blocks")
            joints.append(sum(q * j for q, j in zip(probs, joints[:d_S])))
        return Materialized(joints, MarkovStructure([(1, 1)] * d_S), sigmas)

    if cfg.kind in ("entangled_pair", "custom"):
        if "joint_states" not in st:
            if cfg.kind == "custom" or (d_S, d_E) != (2, 2):
                raise ScenarioError(f"{p}/joint_states", f"kind {cfg.kind!r} requires states.joint_states")
            bell = np.zeros((4, 4))
            bell[np.ix_([0, 3], [0, 3])] = 0.5
            return Materialized([bell, np.diag([1.0, 0, 0, 0])])
        joints = [_matrix(e, d_S * d_E, f"{p}/joint_states/{i}", tol) for i, e in enumerate(st["joint_states"])]
        return Materialized(joints)

    raise ScenarioError("/kind", f"unknown kind {cfg.kind!r}")


def parse_scenario(source) -> ScenarioConfig:
    """Parse and validate a scenario from a path, JSON text or an already-loaded dict."""
    if isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("", f"invalid JSON: {exc}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        raise ScenarioError(_pointer(error.absolute_path), error.message)
    cfg = ScenarioConfig(
        name=doc["name"], kind=doc["kind"], d_S=doc["d_S"], d_E=doc["d_E"],
        states=doc.get("states", {}), description=doc.get("description", ""),
        search=SearchConfig(**doc.get("search", {})),
        dynamics=DynamicsConfig(**doc.get("dynamics", {})),
        assignment=AssignmentConfig(**doc.get("assignment", {})),
        tolerances=Tolerances(**doc.get("tolerances", {})),
    )
    materialize(cfg)
    return cfg


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("aml.presets").iterdir() if p.name.endswith(".json"))


def preset_document(name: str) -> dict:
    path = resources.files("aml.presets") / f"{name}.json"
    if not path.is_file():
        raise KeyError(f"unknown preset {name!r}; available: {preset_names()}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_preset(name: str) -> ScenarioConfig:
    return parse_scenario(preset_document(name))


# --- pipeline -----------------------------------------------------------------


def select_pairs(joint_states, d_S: int, d_E: int):
    """Split the initial states into m pairs with independent marginals and the rest."""
    chosen, rest, margins = [], [], []
    for j in joint_states:
        rho = partial_trace(LabeledOperator([("S", d_S), ("E", d_E)], j), "E").matrix
        if independence_rank(margins + [rho]) > len(margins):
            margins.append(rho)
            chosen.append((rho, j))
        else:
            rest.append(j)
    return chosen, rest


def _cmatrix(m) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


@dataclass
class RunReport:
    scenario: dict
    ranks: dict
    assignment: dict
    structure_map: dict | None
    markov: dict
    dynamics: list
    search: dict
    timing: dict
    tool: dict = field(default_factory=lambda: {"name": "aml", "version": __version__})

    @property
    def witness_found(self) -> bool:
        return self.search.get("witness") is not None

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            del d["timing"]
        return d


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def run_pipeline(cfg: ScenarioConfig) -> RunReport:
    """Ranks -> assignment map -> reference state -> per-U dynamics -> witness search."""
    timing = {}
    t0 = time.perf_counter()
    tol = cfg.tolerances
    d_S, d_E = cfg.d_S, cfg.d_E

    mat = _stage("scenario", materialize, cfg)
    pairs, rest = _stage("independence", select_pairs, mat.joint_states, d_S, d_E)
    M = _stage("independence", independence_rank, mat.joint_states)
    V = OperatorSubspace.span(mat.joint_states, [("S", d_S), ("E", d_E)])
    _, V0 = _stage("independence", kernel_component, V, d_S)
    ranks = {"M": M, "m": len(pairs), "dim_V0": V0.dim, "n_states": len(mat.joint_states)}
    timing["independence"] = time.perf_counter() - t0

    t = time.perf_counter()
    ext = canonical_extension([p[0] for p in pairs], d_S, d_E, cfg.assignment.extension_seed)
    basis = _stage("assignment", AssignmentBasis, tuple(pairs), ext)
    lam = _stage("assignment", build_assignment, basis)
    cls = _stage("assignment", classify_assignment, lam, cfg.assignment.falsifier_samples,
                 cfg.assignment.falsifier_seed, tol.psd)
    cons = consistency_check(lam, tol=tol.hermiticity)
    assignment = {
        "verdict": cls.verdict,
        "cp": cls.verdict == "cp",
        "choi_min_eig": cls.choi_min_eig,
        "extension_size": len(ext),
        "falsifier": {"samples": cls.samples, "seed": cls.seed,
                      "witness": None if cls.witness is None else
                      {"state": _cmatrix(cls.witness.state), "eigenvalue": cls.witness.eigenvalue}},
        "consistency": cons._asdict(),
    }
    structure_map = None
    if mat.structure is not None:
        lam_cp = _stage("assignment", cp_assignment_from_structure, mat.structure, mat.right_states)
        cp = is_cp(lam_cp, tol.psd)
        structure_map = {"blocks": [list(b) for b in mat.structure.blocks], "cp": cp.cp,
                         "choi_min_eig": cp.min_eigenvalue,
                         "max_pair_deviation": max_pair_deviation(lam_cp, basis.pairs)}
    # a CP map reproducing the pairs is a better extension off V_S than the canonical one
    dyn_map = lam
    if structure_map and structure_map["cp"] and structure_map["max_pair_deviation"] <= tol.hermiticity:
        dyn_map = lam_cp
    assignment["dynamics_map"] = "assignment" if dyn_map is lam else "structure"
    timing["assignment"] = time.perf_counter() - t

    t = time.perf_counter()
    ref = _stage("reference", build_reference, basis)
    rep = _stage("reference", markovianity_report, ref, tol.markov_gap)
    markov = rep._asdict()
    markov["agreement"] = max(abs(rep.lhs - rep.lhs_blocks), abs(rep.rhs - rep.rhs_blocks))
    timing["reference"] = time.perf_counter() - t

    t = time.perf_counter()
    domain = [s.matrix for s, _ in basis.pairs] if cfg.search.domain == "vs" else None
    dyn = []
    dc = cfg.dynamics
    for k in range(dc.unitaries):
        rng = np.random.default_rng([dc.seed, k])
        u = sample_unitary(rng, d_S, d_E, local=(dc.unitary_sampler == "mixed" and k % 2 == 1))
        uc = u_consistency_check(u, V0, tol.hermiticity, d_S=d_S)
        E = _stage("dynamics", reduced_dynamics, dyn_map, u)
        v = _stage("dynamics", classify_dynamics, E, domain, dc.samples, dc.seed + k, tol.psd)
        dyn.append({"index": k, "u_consistent": uc.consistent, "u_violation": uc.violation,
                    "cp": v.cp, "choi_min_eig": v.choi_min_eig, "hermitian": v.hermitian,
                    "trace_preserving": v.trace_preserving,
                    "witness_eigenvalue": None if v.witness is None else v.witness.eigenvalue})
    timing["dynamics"] = time.perf_counter() - t

    t = time.perf_counter()
    sc = cfg.search
    out = _stage("search", counterexample_search, dyn_map, sc.trials, sc.seed, domain or "full",
                 sc.samples_per_trial, tol.witness_margin, V0, sc.unitary_sampler)
    search = {"witness_found": out.witness is not None, "trials": out.trials,
              "accepted": out.accepted, "rejected": out.rejected, "seed": out.seed, "samples_per_trial": sc.samples_per_trial, "domain": sc.domain,
              "unitary_sampler": sc.unitary_sampler,
              "best_eigenvalue": out.best_eigenvalue if out.accepted else None,
              "best_trial": out.best_trial if out.accepted else None,
              "witness": None if out.witness is None else {
                  "trial": out.witness.trial, "eigenvalue": out.witness.eigenvalue,
                  "state": _cmatrix(out.witness.state), "unitary": _cmatrix(out.witness.unitary)}}
    timing["search"] = time.perf_counter() - t
    timing["total"] = time.perf_counter() - t0

    return RunReport(cfg.to_dict(), ranks, assignment, structure_map, markov, dyn, search, timing)


# --- canonical JSON -----------------------------------------------------------


def _encode(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(json.dumps(k) + ":" + _encode(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats with 17 significant digits."""
    return _encode(obj) + "\n"


def emit_report(report: RunReport, path=None, timing: bool = False) -> str:
    """Write the canonical report to ``path`` (if given) and return the text.

    Timing is left out by default so that reruns produce byte-identical files.
    """
    text = canonical_json(report.to_dict(timing=timing))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def exit_code(report: RunReport) -> int:
    return 2 if report.witness_found else 0
