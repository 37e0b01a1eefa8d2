"""Problem-definition documents (JSON).

Schema::

    {
      "format": "graphnewton-problem",
      "version": 1,
      "name": "<label>",
      "nodes": [
        {"id": 0, "dim": 1, "parents": [],
         "transition": null | {"name": "<transition>", "params": {...}},
         "cost": null | {"name": "<cost>", "params": {...}}},
        ...
      ],
      "extra_constraint": null | {"scope": [ids], "function": {"name": ..., "params": ...}},
      "initial_point": null | [floats]
    }

``transition`` names: ``affine``, ``sum``, ``polynomial``, ``spring_damper``.
``cost`` names: ``quadratic``, ``elementwise_poly``, ``sum``, ``spring_damper``.
Parameters are the keyword arguments of the corresponding primitive class,
with arrays as nested lists.  ``parse(serialize(p))`` reproduces ``p`` and
``serialize(parse(text))`` is a fixed point after one round.
"""
from __future__ import annotations

import json

import numpy as np

from .compgraph import ExtraConstraint, NodeDecl, build_graph
from .errors import GraphError, ParseError
from .primitives import cost_from_dict, to_dict, transition_from_dict
from .problems import ProblemInstance

__all__ = ["FORMAT", "problem_to_dict", "problem_from_dict", "serialize", "parse", "load", "dump"]

FORMAT = "graphnewton-problem"
_NODE_KEYS = {"id", "dim", "parents", "transition", "cost"}
_TOP_KEYS = {"format", "version", "name", "nodes", "extra_constraint", "initial_point"}


def problem_to_dict(p: ProblemInstance) -> dict:
    nodes = []
    for n in p.graph.nodes:
        nodes.append({
            "id": n.id, "dim": n.dim, "parents": list(n.parents),
            "transition": to_dict(n.transition) if n.transition is not None else None,
            "cost": to_dict(n.cost) if n.cost is not None else None,
        })
    extra = None
    if p.extra is not None:
        extra = {"scope": list(p.extra.scope), "function": to_dict(p.extra.function)}
    return {
        "format": FORMAT, "version": 1, "name": p.name, "nodes": nodes,
        "extra_constraint": extra,
        "initial_point": None if p.x0 is None else np.asarray(p.x0, dtype=float).tolist(),
    }


def _require(d, key, where):
    if key not in d:
        raise ParseError(f"{where}: missing field {key!r}")
    return d[key]


def problem_from_dict(doc: dict) -> ProblemInstance:
    """Build a problem from a parsed document.

    Malformed documents raise :class:`ParseError`; structurally invalid graphs
    raise the corresponding :class:`GraphError` subclass from graph building.
    """
    if not isinstance(doc, dict):
        raise ParseError("problem document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ParseError(f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    if doc.get("format", FORMAT) != FORMAT:
        raise ParseError(f"unexpected format tag {doc.get('format')!r}")
    raw_nodes = _require(doc, "nodes", "document")
    if not isinstance(raw_nodes, list):
        raise ParseError("'nodes' must be a list")
    decls = []
    for k, nd in enumerate(raw_nodes):
        where = f"node entry {k}"
        if not isinstance(nd, dict):
            raise ParseError(f"{where}: must be an object")
        bad = set(nd) - _NODE_KEYS
        if bad:
            raise ParseError(f"{where}: unknown field(s) {', '.join(sorted(bad))}")
        try:
            tr = nd.get("transition")
            cost = nd.get("cost")
            decls.append(NodeDecl(
                int(_require(nd, "id", where)), int(_require(nd, "dim", where)),
                tuple(nd.get("parents", ())),
                transition_from_dict(tr) if tr is not None else None,
                cost_from_dict(cost) if cost is not None else None))
        except (TypeError, ValueError, KeyError) as exc:
            raise ParseError(f"{where}: {exc}") from exc
    decls.sort(key=lambda d: d.id)
    g = build_graph(decls)
    extra = None
    ec = doc.get("extra_constraint")
    if ec is not None:
        try:
            extra = ExtraConstraint(tuple(_require(ec, "scope", "extra_constraint")),
                                    transition_from_dict(_require(ec, "function", "extra_constraint")))
        except (TypeError, ValueError, KeyError) as exc:
            raise ParseError(f"extra_constraint: {exc}") from exc
        for v in extra.scope:
            if not 0 <= v < len(g):
                raise GraphError(f"extra constraint refers to unknown node {v}")
        if extra.function.in_dim != sum(g.dims[v] for v in extra.scope):
            raise ParseError("extra_constraint: function input size does not match its scope")
    x0 = doc.get("initial_point")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (g.input_dim,):
            raise ParseError(f"initial_point has {x0.size} entries, graph has {g.input_dim} inputs")
    return ProblemInstance(name=str(doc.get("name", "problem")), graph=g, extra=extra, x0=x0)


def serialize(p: ProblemInstance) -> str:
    return json.dumps(problem_to_dict(p), indent=1)


def parse(text: str) -> ProblemInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return problem_from_dict(doc)


def load(path) -> ProblemInstance:
    with open(path) as fh:
        return parse(fh.read())


def dump(p: ProblemInstance, path):
    with open(path, "w") as fh:
        fh.write(serialize(p))
