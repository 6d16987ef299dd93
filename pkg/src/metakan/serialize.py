"""Versioned JSON documents for KAN and MetaKAN networks.

Arrays are stored as ``{"shape": [...], "data": [...]}`` with ``data`` a flat
row-major list. Python's float repr round-trips doubles exactly, so
save -> load -> forward is bit-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .network import ActivationKind, ClusterPlan, KanNetwork, MetaKanNetwork, MetaLearner

FORMAT = "metakan-network"
VERSION = 1


class ModelFileError(ValueError):
    pass


def _arr(a) -> dict:
    a = np.asarray(a.data if isinstance(a, Tensor) else a)
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _unarr(d) -> np.ndarray:
    try:
        return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed array: {exc}") from None


def to_dict(net) -> dict:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "shape": list(net.shape.widths),
        "activation": net.kind.to_dict(),
    }
    if isinstance(net, MetaKanNetwork):
        doc["model"] = "metakan"
        doc["prompt_dim"] = net.prompt_dim
        doc["d_hidden"] = net.d_hidden
        doc["plan"] = [list(iv) for iv in net.plan.intervals]
        doc["prompts"] = [_arr(z) for z in net.prompts]
        doc["learners"] = [{p.name.split(".")[-1]: _arr(p) for p in lrn.parameters()}
                           for lrn in net.learners]
    elif isinstance(net, KanNetwork):
        doc["model"] = "kan"
        doc["weights"] = [_arr(w) for w in net.weights]
    else:
        raise TypeError(f"cannot serialise {type(net).__name__}")
    return doc


def from_dict(doc: dict):
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFileError("not a metakan network document")
    if doc.get("version") != VERSION:
        raise ModelFileError(f"unsupported version {doc.get('version')!r}")
    try:
        kind = ActivationKind.from_dict(doc["activation"])
        shape = doc["shape"]
        if doc["model"] == "kan":
            return KanNetwork(shape, kind, [_unarr(w) for w in doc["weights"]])
        if doc["model"] == "metakan":
            plan = ClusterPlan(tuple(tuple(iv) for iv in doc["plan"]))
            learners = []
            for c, ld in enumerate(doc["learners"]):
                lrn = MetaLearner(doc["prompt_dim"], doc["d_hidden"], kind.dim, seed=0, tag=f"c{c}.")
                for p in lrn.parameters():
                    p.data[...] = _unarr(ld[p.name.split(".")[-1]])
                learners.append(lrn)
            return MetaKanNetwork(shape, kind, [_unarr(z) for z in doc["prompts"]], plan, learners)
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid network document: {exc!r}") from None
    raise ModelFileError(f"unknown model {doc.get('model')!r}")


def dumps(net) -> str:
    return json.dumps(to_dict(net), separators=(",", ":")) + "\n"


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(doc)


def save(net, path) -> None:
    Path(path).write_text(dumps(net), encoding="utf-8")


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))
