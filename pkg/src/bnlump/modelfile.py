"""JSON model files: schema validation, loading and exact round-trip writing.

Probabilities are ``"p/q"`` strings (integers allowed); floats are rejected so
nothing inexact crosses the file boundary. CPT rows are keyed by the parent
states joined with commas, ``""`` for source vertices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema

from .errors import InvalidModelFile, LumpError
from .graph import Dag
from .lumping import Lumping
from .markov import matrix_from_json
from .model import BayesNet, Cpt, as_fraction

FLOAT_MESSAGE = "floats are not allowed; write probabilities as 'p/q' strings"


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("bnlump").joinpath("schema/modelfile.schema.json").read_text()
    return json.loads(text)


def _pointer(parts) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts) if parts else "/"


@dataclass
class ModelFile:
    net: Optional[BayesNet]
    dag: Dag
    alphabets: dict
    lumping: Optional[Lumping] = None
    markov: dict = field(default_factory=dict)
    description: Optional[str] = None


def validate(doc: Any) -> None:
    """Raise InvalidModelFile for the first schema violation (deepest path first)."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (-len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        if err.context:
            err = max(err.context, key=lambda e: len(e.absolute_path))
        if isinstance(err.instance, float):
            raise InvalidModelFile(_pointer(err.absolute_path), FLOAT_MESSAGE)
        raise InvalidModelFile(_pointer(err.absolute_path), err.message)


def _fraction(x, path):
    if isinstance(x, float):
        raise InvalidModelFile(path, FLOAT_MESSAGE)
    try:
        return as_fraction(x)
    except (ValueError, TypeError, ZeroDivisionError, LumpError) as exc:
        raise InvalidModelFile(path, f"not an exact rational: {x!r} ({exc})") from None


def _row(row, size, path):
    vals = [_fraction(x, f"{path}/{i}") for i, x in enumerate(row)]
    if len(vals) != size:
        raise InvalidModelFile(path, f"row has {len(vals)} entries, alphabet has {size}")
    for i, p in enumerate(vals):
        if p < 0:
            raise InvalidModelFile(f"{path}/{i}", f"negative probability {p}")
    total = sum(vals)
    if total != 1:
        raise InvalidModelFile(path, f"row sums to {total}, not 1")
    return vals


def parse(doc: dict, require_cpds: bool = True) -> ModelFile:
    validate(doc)
    dd = doc["dag"]
    vertices = list(dd["vertices"])
    for i, e in enumerate(dd.get("edges", [])):
        for j, u in enumerate(e):
            if u not in vertices:
                raise InvalidModelFile(f"/dag/edges/{i}/{j}", f"unknown vertex {u!r}")
    try:
        dag = Dag(vertices, [tuple(e) for e in dd.get("edges", [])])
    except LumpError as exc:
        raise InvalidModelFile("/dag/edges", str(exc)) from None
    st = doc["states"]
    if isinstance(st, dict):
        for v in st:
            if v not in vertices:
                raise InvalidModelFile(_pointer(["states", v]), f"unknown vertex {v!r}")
        missing = [v for v in vertices if v not in st]
        if missing:
            raise InvalidModelFile("/states", f"no alphabet for vertices {missing}")
        alphabets = {v: tuple(st[v]) for v in vertices}
    else:
        alphabets = {v: tuple(st) for v in vertices}

    net = None
    if "cpds" in doc:
        net = _parse_cpds(doc["cpds"], dag, alphabets)
    elif require_cpds:
        raise InvalidModelFile("/cpds", "missing CPDs")

    lump = _parse_lumping(doc["lumping"], dag, alphabets) if "lumping" in doc else None
    markov = _parse_markov(doc.get("markov", {}), alphabets, vertices)
    return ModelFile(net, dag, alphabets, lump, markov, doc.get("description"))


def _parse_cpds(cpds, dag, alphabets) -> BayesNet:
    for v in cpds:
        if v not in alphabets:
            raise InvalidModelFile(_pointer(["cpds", v]), f"unknown vertex {v!r}")
    tables = {}
    for v in dag.vertices:
        base = _pointer(["cpds", v])
        if v not in cpds:
            raise InvalidModelFile("/cpds", f"no CPD for vertex {v!r}")
        spec = cpds[v]
        parents = tuple(spec.get("parents", []))
        if parents != dag.parents(v):
            raise InvalidModelFile(f"{base}/parents",
                                   f"parents {list(parents)} differ from the DAG's {list(dag.parents(v))}")
        table = {}
        for key, row in spec["rows"].items():
            path = f"{base}/rows/{_pointer([key])[1:]}"
            states = tuple(s.strip() for s in key.split(",")) if key else ()
            if len(states) != len(parents):
                raise InvalidModelFile(path, f"row key names {len(states)} parent states, expected {len(parents)}")
            for p, s in zip(parents, states):
                if s not in alphabets[p]:
                    raise InvalidModelFile(path, f"{s!r} is not a state of parent {p!r}")
            table[states] = _row(row, len(alphabets[v]), path)
        expected = 1
        for p in parents:
            expected *= len(alphabets[p])
        if len(table) != expected:
            raise InvalidModelFile(f"{base}/rows", f"{len(table)} rows given, {expected} parent configurations")
        tables[v] = Cpt(v, parents, table)
    return BayesNet(dag, alphabets, tables)


def _check_map(m, alph, path):
    for a, b in m.items():
        if a not in alph:
            raise InvalidModelFile(_pointer(path + [a]), f"{a!r} is not a declared state")
    missing = [a for a in alph if a not in m]
    if missing:
        raise InvalidModelFile(_pointer(path), f"states {missing} are not mapped")
    return {a: m[a] for a in alph}


def _parse_lumping(spec, dag, alphabets) -> Lumping:
    if "per_vertex" in spec:
        pv = spec["per_vertex"]
        for v in pv:
            if v not in alphabets:
                raise InvalidModelFile(_pointer(["lumping", "per_vertex", v]), f"unknown vertex {v!r}")
        maps = {}
        for v in dag.vertices:
            if v not in pv:
                raise InvalidModelFile("/lumping/per_vertex", f"no map for vertex {v!r}")
            maps[v] = _check_map(pv[v], alphabets[v], ["lumping", "per_vertex", v])
        return Lumping(maps)
    maps = {v: _check_map(spec, alphabets[v], ["lumping"]) for v in dag.vertices}
    return Lumping(maps)


def _parse_markov(spec, alphabets, vertices) -> dict:
    if not spec:
        return {}
    states = alphabets[vertices[0]]
    out = {}
    try:
        if "matrix" in spec:
            out["matrix"] = matrix_from_json(spec["matrix"], states)
        if "matrices" in spec:
            out["matrices"] = [matrix_from_json(m, states) for m in spec["matrices"]]
    except LumpError as exc:
        raise InvalidModelFile("/markov", str(exc)) from None
    if "initial" in spec:
        out["initial"] = _row(spec["initial"], len(states), "/markov/initial")
    for k in ("horizon", "lumping"):
        if k in spec:
            out[k] = spec[k]
    return out


def load(source: Union[str, Path, dict], require_cpds: bool = True) -> ModelFile:
    """Load from a path or an already-decoded dict."""
    if isinstance(source, dict):
        return parse(source, require_cpds)
    try:
        doc = json.loads(Path(source).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidModelFile("/", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise InvalidModelFile("/", f"cannot read {source}: {exc.strerror}") from None
    return parse(doc, require_cpds)


def dump(net: BayesNet, lump: Optional[Lumping] = None, markov: Optional[dict] = None,
         description: Optional[str] = None) -> dict:
    """Model file dict for ``net``; every probability written as an exact string."""
    doc: dict = {}
    if description:
        doc["description"] = description
    shared = net.shared_alphabet
    doc["states"] = list(shared) if shared is not None else {v: list(a) for v, a in net.alphabets.items()}
    edges = sorted(net.dag.edges, key=lambda e: (net.dag.index(e[1]), net.dag.index(e[0])))
    doc["dag"] = {"vertices": list(net.vertices), "edges": [list(e) for e in edges]}
    cpds = {}
    for v in net.vertices:
        cpt = net.cpts[v]
        cpds[v] = {
            "parents": list(cpt.parents),
            "rows": {",".join(k): [str(p) for p in row] for k, row in cpt.table.items()},
        }
    doc["cpds"] = cpds
    if lump is not None:
        maps = {v: lump.map(v) for v in net.vertices}
        first = maps[net.vertices[0]]
        if all(m == first for m in maps.values()):
            doc["lumping"] = first
        else:
            doc["lumping"] = {"per_vertex": maps}
    if markov:
        mk = {}
        if "matrix" in markov:
            mk["matrix"] = markov["matrix"].to_json()
        if "matrices" in markov:
            mk["matrices"] = [m.to_json() for m in markov["matrices"]]
        if "initial" in markov:
            mk["initial"] = [str(p) for p in markov["initial"]]
        for k in ("horizon", "lumping"):
            if k in markov:
                mk[k] = markov[k]
        doc["markov"] = mk
    return doc


def save(path: Union[str, Path], net: BayesNet, lump: Optional[Lumping] = None, **kw) -> None:
    Path(path).write_text(json.dumps(dump(net, lump, **kw), indent=2) + "\n")
