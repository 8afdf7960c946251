"""Deterministic single-file bundles for model state and topic models.

A bundle is a stored (uncompressed) zip holding ``meta.json`` plus one
``.npy`` entry per array, written with fixed entry timestamps and sorted
entry order so that identical content produces byte-identical files.
"""
from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from .baselines import CtrState
from .errors import InputError
from .model import Hyperparams, ModelState
from .social import AttentionEdgeSet
from .topics import TopicModel

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
FORMAT_VERSION = 1


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr),
                              version=(1, 0), allow_pickle=False)
    return buf.getvalue()


def save_bundle(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_DATE),
                    json.dumps(meta, sort_keys=True, indent=1) + "\n")
        for name in sorted(arrays):
            zf.writestr(zipfile.ZipInfo(name + ".npy", _ZIP_DATE),
                        _npy_bytes(arrays[name]))


def load_bundle(path: str) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with zipfile.ZipFile(path) as zf:
            names = zf.namelist()
            if "meta.json" not in names:
                raise InputError(f"{path}: not a bundle (missing meta.json)")
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            arrays = {}
            for name in names:
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(
                        io.BytesIO(zf.read(name)), allow_pickle=False)
    except (zipfile.BadZipFile, json.JSONDecodeError, OSError) as exc:
        raise InputError(f"{path}: not a readable bundle ({exc})") from exc
    return arrays, meta


def save_model(path: str, state: ModelState | CtrState,
               hp: Hyperparams | None = None,
               extra_meta: dict | None = None) -> None:
    """Dump a trained state; the edge-keyed blocks are present only for the
    joint model (their absence marks a baseline dump)."""
    arrays = {
        "u": state.u, "v": state.v, "theta": state.theta, "beta": state.beta,
        "users": np.asarray(state.users, dtype=np.str_),
        "items": np.asarray(state.item_ids, dtype=np.str_),
    }
    if isinstance(state, ModelState):
        kind = "lactr"
        arrays.update({
            "s": state.s, "phi": state.phi,
            "edge_src": state.edges.src, "edge_dst": state.edges.dst,
            "edge_friend": state.edges.friend.astype(np.uint8),
        })
    elif isinstance(state, CtrState):
        kind = "ctr"
    else:
        raise InputError(f"cannot dump state of type {type(state).__name__}")
    meta = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "n_users": len(state.users),
        "n_items": len(state.item_ids),
        "k": state.k,
        "vocab_size": int(state.beta.shape[1]),
        "hyperparams": hp.as_dict() if hp is not None else None,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_bundle(path, arrays, meta)


def load_model(path: str) -> tuple[ModelState | CtrState, dict]:
    arrays, meta = load_bundle(path)
    kind = meta.get("kind")
    try:
        users = [str(x) for x in arrays["users"]]
        items = [str(x) for x in arrays["items"]]
        if kind == "lactr":
            edges = AttentionEdgeSet(users, arrays["edge_src"],
                                     arrays["edge_dst"],
                                     arrays["edge_friend"].astype(bool))
            state: ModelState | CtrState = ModelState(
                u=arrays["u"], s=arrays["s"], phi=arrays["phi"],
                v=arrays["v"], theta=arrays["theta"], beta=arrays["beta"],
                edges=edges, item_ids=items)
        elif kind == "ctr":
            state = CtrState(u=arrays["u"], v=arrays["v"],
                             theta=arrays["theta"], beta=arrays["beta"],
                             users=users, item_ids=items)
        else:
            raise InputError(f"{path}: unknown bundle kind {kind!r}")
    except KeyError as exc:
        raise InputError(f"{path}: bundle missing array {exc.args[0]!r}") \
            from None
    return state, meta


def hyperparams_from_meta(meta: dict) -> Hyperparams | None:
    raw = meta.get("hyperparams")
    if raw is None:
        return None
    try:
        return Hyperparams(**raw)
    except TypeError as exc:
        raise InputError(f"bundle hyperparams malformed: {exc}") from None


def save_topics(path: str, tm: TopicModel,
                extra_meta: dict | None = None) -> None:
    meta = {"format": FORMAT_VERSION, "kind": "topics", "k": tm.k,
            "n_items": tm.n_items, "vocab_size": tm.vocab_size}
    if extra_meta:
        meta.update(extra_meta)
    save_bundle(path, {"theta": tm.theta, "beta": tm.beta}, meta)


def load_topics(path: str) -> tuple[TopicModel, dict]:
    arrays, meta = load_bundle(path)
    if meta.get("kind") != "topics":
        raise InputError(f"{path}: not a topic bundle")
    try:
        tm = TopicModel(arrays["theta"], arrays["beta"], int(meta["k"]))
    except KeyError as exc:
        raise InputError(f"{path}: bundle missing array {exc.args[0]!r}") \
            from None
    return tm, meta
