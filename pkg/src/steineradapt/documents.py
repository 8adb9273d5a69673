"""Structured-text documents: instances, perturbations, run reports, traces.

All documents are JSON objects carrying ``format_version: 1``. Unknown
fields are rejected so that typos fail loudly. Numbers are emitted with
Python's shortest round-tripping representation, so encode/decode cycles
are lossless. Node references in edge lists are strings like ``"t0"`` and
``"s2"``.
"""

from __future__ import annotations

import json
import math
import re
from typing import Sequence

import numpy as np

from .adaptation import AdaptationReport, AdaptationStatus, HealthReport, Perturbation, StepRecord
from .errors import DocumentError
from .trees import Point2, SteinerTopology, SteinerTree, validate_topology

FORMAT_VERSION = 1

_NODE_REF_RE = re.compile(r"^([ts])(0|[1-9][0-9]*)$")
_INSTANCE_KEYS = {"format_version", "terminals", "steiner", "edges"}
_PERTURBATION_KEYS = {"format_version", "delta_t"}
_REPORT_KEYS = {"format_version", "status", "initial", "steps", "final_tree"}


def _load_object(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError(f"parse error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise DocumentError("document root must be an object")
    return doc


def _check_version_and_keys(doc: dict, allowed: set[str]) -> None:
    if "format_version" not in doc:
        raise DocumentError("missing field 'format_version'")
    if doc["format_version"] != FORMAT_VERSION:
        raise DocumentError(f"unsupported format_version: {doc['format_version']!r}")
    for key in doc:
        if key not in allowed:
            raise DocumentError(f"unknown field '{key}'")


def _decode_positions(raw, name: str) -> list[Point2]:
    if not isinstance(raw, list):
        raise DocumentError(f"'{name}' must be a list of [x, y] pairs")
    points = []
    for idx, item in enumerate(raw):
        if not (isinstance(item, list) and len(item) == 2) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in item
        ):
            raise DocumentError(f"'{name}[{idx}]' must be a pair of numbers")
        try:
            points.append(Point2(float(item[0]), float(item[1])))
        except ValueError as e:
            raise DocumentError(f"'{name}[{idx}]': {e}") from e
    return points


def _decode_edges(raw, n: int, k: int) -> SteinerTopology:
    if not isinstance(raw, list):
        raise DocumentError("'edges' must be a list of two-element node references")
    edges_t, edges_ts, edges_s = set(), set(), set()
    for idx, item in enumerate(raw):
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(v, str) for v in item)):
            raise DocumentError(f"'edges[{idx}]' must be a pair of node reference strings")
        refs = []
        for ref in item:
            m = _NODE_REF_RE.match(ref)
            if m is None:
                raise DocumentError(f"'edges[{idx}]': malformed node reference {ref!r}")
            kind, index = m.group(1), int(m.group(2))
            bound = n if kind == "t" else k
            if index >= bound:
                raise DocumentError(f"'edges[{idx}]': index out of range: {ref!r}")
            refs.append((kind, index))
        (ka, ia), (kb, ib) = refs
        if ka == "t" and kb == "t":
            edges_t.add((ia, ib))
        elif ka == "s" and kb == "s":
            edges_s.add((ia, ib))
        elif ka == "t":
            edges_ts.add((ia, ib))
        else:
            edges_ts.add((ib, ia))
    return SteinerTopology(n=n, k=k, edges_T=frozenset(edges_t), edges_TS=frozenset(edges_ts), edges_S=frozenset(edges_s))


def decode_instance(text: str) -> SteinerTree | list[Point2]:
    """Decode an instance document.

    Returns a :class:`SteinerTree` when the document carries edges, and a
    plain list of terminal positions otherwise.
    """
    doc = _load_object(text)
    _check_version_and_keys(doc, _INSTANCE_KEYS)
    if "terminals" not in doc:
        raise DocumentError("missing field 'terminals'")
    terminals = _decode_positions(doc["terminals"], "terminals")
    if not terminals:
        raise DocumentError("'terminals' must not be empty")

    if "edges" not in doc:
        if "steiner" in doc:
            raise DocumentError("'edges' is required when 'steiner' is present")
        return terminals

    steiner = _decode_positions(doc.get("steiner", []), "steiner")
    topology = _decode_edges(doc["edges"], n=len(terminals), k=len(steiner))
    validation = validate_topology(topology)
    if not validation.ok:
        raise DocumentError("invalid tree: " + "; ".join(validation.violations))
    return SteinerTree(topology, tuple(terminals), tuple(steiner))


def _tree_payload(tree: SteinerTree) -> dict:
    return {
        "terminals": [[p.x, p.y] for p in tree.terminal_positions],
        "steiner": [[p.x, p.y] for p in tree.steiner_positions],
        "edges": [[str(a), str(b)] for a, b in tree.topology.all_edges()],
    }


def encode_instance(obj: SteinerTree | Sequence[Point2]) -> str:
    if isinstance(obj, SteinerTree):
        doc = {"format_version": FORMAT_VERSION, **_tree_payload(obj)}
    else:
        doc = {"format_version": FORMAT_VERSION, "terminals": [[p.x, p.y] for p in obj]}
    return json.dumps(doc, indent=2) + "\n"


def decode_perturbation(text: str, expected_n: int | None = None) -> Perturbation:
    """Decode a perturbation document of per-terminal [dx, dy] pairs."""
    doc = _load_object(text)
    _check_version_and_keys(doc, _PERTURBATION_KEYS)
    if "delta_t" not in doc:
        raise DocumentError("missing field 'delta_t'")
    pairs = _decode_positions(doc["delta_t"], "delta_t")
    if expected_n is not None and len(pairs) != expected_n:
        raise DocumentError(f"'delta_t' has {len(pairs)} pairs but the instance has {expected_n} terminals")
    return Perturbation.from_pairs([[p.x, p.y] for p in pairs])


def encode_perturbation(p: Perturbation) -> str:
    pairs = p.delta_t.reshape(-1, 2)
    doc = {"format_version": FORMAT_VERSION, "delta_t": [[float(dx), float(dy)] for dx, dy in pairs]}
    return json.dumps(doc, indent=2) + "\n"


def _health_payload(health: HealthReport) -> dict:
    return {
        "min_edge_length": health.min_edge_length,
        "max_steiner_angle_deviation": health.max_steiner_angle_deviation,
        "hessian_condition": health.hessian_condition,
        "positive_definite": health.positive_definite,
    }


def _health_from_payload(raw: dict) -> HealthReport:
    try:
        return HealthReport(
            min_edge_length=float(raw["min_edge_length"]),
            max_steiner_angle_deviation=float(raw["max_steiner_angle_deviation"]),
            hessian_condition=float(raw["hessian_condition"]),
            positive_definite=bool(raw["positive_definite"]),
        )
    except (KeyError, TypeError) as e:
        raise DocumentError(f"malformed health record: {e}") from e


def _tree_from_payload(raw: dict, context: str) -> SteinerTree:
    if not isinstance(raw, dict):
        raise DocumentError(f"'{context}' must be an object")
    missing = {"terminals", "steiner", "edges"} - set(raw)
    if missing:
        raise DocumentError(f"'{context}' is missing field '{sorted(missing)[0]}'")
    terminals = _decode_positions(raw["terminals"], f"{context}.terminals")
    steiner = _decode_positions(raw["steiner"], f"{context}.steiner")
    topology = _decode_edges(raw["edges"], n=len(terminals), k=len(steiner))
    return SteinerTree(topology, tuple(terminals), tuple(steiner))


def encode_report(report: AdaptationReport) -> str:
    """Machine-readable mirror of a stepwise run, losslessly round-trippable."""
    doc = {
        "format_version": FORMAT_VERSION,
        "status": report.status.value,
        "initial": {
            "tree": _tree_payload(report.initial_tree),
            "health": _health_payload(report.initial_health),
            "length": report.initial_length,
        },
        "steps": [
            {
                "index": rec.index,
                "delta_t": [float(v) for v in rec.delta_t_fragment],
                "delta_s": [float(v) for v in rec.delta_s],
                "tree": _tree_payload(rec.tree),
                "health": _health_payload(rec.health),
                "length": rec.tree_length,
            }
            for rec in report.steps
        ],
        "final_tree": _tree_payload(report.final_tree),
    }
    return json.dumps(doc, indent=2) + "\n"


def decode_report(text: str) -> AdaptationReport:
    doc = _load_object(text)
    _check_version_and_keys(doc, _REPORT_KEYS)
    for key in ("status", "initial", "steps", "final_tree"):
        if key not in doc:
            raise DocumentError(f"missing field '{key}'")
    try:
        status = AdaptationStatus(doc["status"])
    except ValueError as e:
        raise DocumentError(f"unknown status {doc['status']!r}") from e
    initial = doc["initial"]
    if not isinstance(initial, dict):
        raise DocumentError("'initial' must be an object")
    records = []
    if not isinstance(doc["steps"], list):
        raise DocumentError("'steps' must be a list")
    for raw in doc["steps"]:
        records.append(
            StepRecord(
                index=int(raw["index"]),
                delta_t_fragment=np.asarray(raw["delta_t"], dtype=float),
                delta_s=np.asarray(raw["delta_s"], dtype=float),
                tree=_tree_from_payload(raw["tree"], "steps[].tree"),
                health=_health_from_payload(raw["health"]),
                tree_length=float(raw["length"]),
            )
        )
    return AdaptationReport(
        initial_tree=_tree_from_payload(initial.get("tree"), "initial.tree"),
        initial_health=_health_from_payload(initial.get("health", {})),
        initial_length=float(initial.get("length", math.nan)),
        steps=tuple(records),
        final_tree=_tree_from_payload(doc["final_tree"], "final_tree"),
        status=status,
    )


def emit_trace(report: AdaptationReport, target) -> None:
    """Write the per-step trajectory as comma-separated text for plotting.

    One row per configuration (the starting tree first), with columns:
    step index, Euclidean norm of the cumulative applied terminal
    displacement, tree length, minimum edge length, maximum Steiner angle
    deviation in degrees, Hessian condition number, then the flattened
    Steiner coordinates. ``target`` is a path or a writable file object.
    """
    k = report.initial_tree.k
    header = [
        "step",
        "cum_delta_t_norm",
        "tree_length",
        "min_edge_length",
        "max_angle_deviation_deg",
        "hessian_condition",
    ]
    for i in range(k):
        header += [f"s{i}_x", f"s{i}_y"]

    def row(step: int, cum_norm: float, length: float, health: HealthReport, tree: SteinerTree) -> str:
        values = [
            str(step),
            repr(float(cum_norm)),
            repr(float(length)),
            repr(float(health.min_edge_length)),
            repr(math.degrees(health.max_steiner_angle_deviation)),
            repr(float(health.hessian_condition)),
        ]
        values += [repr(float(v)) for v in tree.s_vector()]
        return ",".join(values)

    lines = [",".join(header)]
    lines.append(row(0, 0.0, report.initial_length, report.initial_health, report.initial_tree))
    cumulative = np.zeros(2 * report.initial_tree.n)
    for rec in report.steps:
        cumulative = cumulative + rec.delta_t_fragment
        lines.append(row(rec.index, float(np.linalg.norm(cumulative)), rec.tree_length, rec.health, rec.tree))
    text = "\n".join(lines) + "\n"

    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
