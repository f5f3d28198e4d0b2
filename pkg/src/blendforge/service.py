"""Command-line entry points and the interactive session server."""
from __future__ import annotations

import argparse
import asyncio
import glob
import os
import struct
import sys
import uuid

import numpy as np
import scipy.sparse as sp

from . import wire
from .mesh import load_mesh, save_mesh
from .pipeline import BlendModel, PipelineConfig
from .registration import (
    PartialScan,
    correspondence_search_features,
    feature_constraints,
    nonrigid_icp,
)
from .solver import ConstraintSet, interpolate_poses, point_constraints


def _load_examples_dir(path):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"examples directory not found: {path}")
    paths = sorted(
        glob.glob(os.path.join(path, "*.off")) + glob.glob(os.path.join(path, "*.obj"))
    )
    if not paths:
        raise FileNotFoundError(f"no .off/.obj meshes in {path}")
    return [load_mesh(p) for p in paths]


def _load_pins(path, n):
    """pins.txt: lines `vertexIndex x y z`."""
    idx, targets = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'vertexIndex x y z'")
            idx.append(int(parts[0]))
            targets.append([float(p) for p in parts[1:]])
    if not idx:
        raise ValueError(f"{path}: no constraints")
    bad = [i for i in idx if not 0 <= i < n]
    if bad:
        raise ValueError(f"{path}: vertex indices out of range: {bad}")
    return point_constraints(idx, np.asarray(targets), n)


def _write_energy_log(state, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("phase,step,energy\n")
        for phase, step, e in state.trace:
            fh.write(f"{phase},{step},{e!r}\n")


def _build_model(args):
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    meshes = _load_examples_dir(args.examples)
    weights = None
    if getattr(args, "weights", None):
        from .skinning import import_skeleton_weights

        weights = import_skeleton_weights(args.weights, meshes[0]).weights
    return BlendModel(meshes, cfg, weights)


def cli_deform(args) -> int:
    model = _build_model(args)
    cs = _load_pins(args.constraints, model.rest_mesh.n_vertices)
    state = model.solve(cs)
    result = model.rest_mesh.copy_with(state.surface())
    save_mesh(result, args.out)
    _write_energy_log(state, args.out + ".log")
    print(f"wrote {args.out} (selected example {state.selected}, "
          f"alpha {float(np.mean(state.alpha)):.4f}, energy {state.energy:.6g})")
    return 0


def cli_interpolate(args) -> int:
    model = _build_model(args)
    n = model.rest_mesh.n_vertices
    cs_a = _load_pins(args.constraints_a, n)
    cs_b = _load_pins(args.constraints_b, n)
    if cs_a.h != cs_b.h or (cs_a.H != cs_b.H).nnz:
        raise ValueError("interpolation endpoints must pin the same vertices")
    state_a = model.solve(cs_a)
    state_b = model.solve(cs_b)
    os.makedirs(args.out_dir, exist_ok=True)
    k = args.frames
    ts = [0.0] if k == 1 else [i / (k - 1) for i in range(k)]
    for i, t in enumerate(ts):
        st = interpolate_poses(state_a, state_b, t)
        frame = model.rest_mesh.copy_with(st.surface())
        save_mesh(frame, os.path.join(args.out_dir, f"frame_{i:03d}.off"))
    print(f"wrote {k} frames to {args.out_dir}")
    return 0


def _load_features(path):
    """features.txt rows: `scanVertex modelVertex`, `scanVertex ?`, `? modelVertex`."""
    known, unknown_scan, unknown_model = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            s, m = parts
            if s == "?" and m == "?":
                raise ValueError(f"{path}:{lineno}: at most one side may be unknown")
            if s == "?":
                unknown_model.append(int(m))
            elif m == "?":
                unknown_scan.append(int(s))
            else:
                known.append((int(s), int(m)))
    return known, unknown_scan, unknown_model


def _permutation_candidates(known, unknown_scan, unknown_model):
    """Feature maps for every pairing of the unknown scan/model features."""
    from itertools import permutations

    if len(unknown_scan) != len(unknown_model):
        raise ValueError(
            f"{len(unknown_scan)} unknown scan features vs "
            f"{len(unknown_model)} unknown model anchors"
        )
    if len(unknown_scan) > 6:
        raise ValueError("too many unknown features to permute (max 6)")
    base_points = [(s, fid) for fid, (s, _) in enumerate(known)]
    base_map = {fid: m for fid, (_, m) in enumerate(known)}
    candidates, scan_points = [], None
    for perm in permutations(unknown_model):
        feats = dict(base_map)
        points = list(base_points)
        for i, (s, m) in enumerate(zip(unknown_scan, perm)):
            fid = len(known) + i
            points.append((s, fid))
            feats[fid] = m
        candidates.append(feats)
        scan_points = points
    return scan_points, candidates


def cli_register(args) -> int:
    model = _build_model(args)
    scan_mesh = load_mesh(args.scan)
    known, unknown_scan, unknown_model = _load_features(args.features)
    if unknown_scan or unknown_model:
        points, candidates = _permutation_candidates(known, unknown_scan, unknown_model)
        scan = PartialScan(mesh=scan_mesh, feature_points=points)
        best = correspondence_search_features(model, scan, candidates)
        features = candidates[best]
        print(f"feature disambiguation picked candidate {best} of {len(candidates)}")
    else:
        points = [(s, fid) for fid, (s, _) in enumerate(known)]
        features = {fid: m for fid, (_, m) in enumerate(known)}
        scan = PartialScan(mesh=scan_mesh, feature_points=points)
    cs = feature_constraints(scan, features, model.rest_mesh, model_areas=model.areas)
    state, cmap = nonrigid_icp(model, scan, cs)
    result = model.rest_mesh.copy_with(state.surface())
    save_mesh(result, args.out)
    if args.report:
        sqrt_area = np.sqrt(model.rest_mesh.area())
        d = cmap.pairs[:, 2] / sqrt_area
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("threshold,fraction\n")
            for t in np.round(np.arange(0.0, 0.2 + 1e-9, 0.002), 6):
                fh.write(f"{t},{float((d <= t).mean())}\n")
    print(f"wrote {args.out}; mean correspondence distance "
          f"{cmap.mean_distance:.6g} over {len(cmap.pairs)} pairs")
    return 0


# ---------------------------------------------------------------------------
# interactive sessions


class Session:
    """One client's pinned handles and solve state; revisions count edits."""

    def __init__(self, model: BlendModel, coarse_while_dragging: bool = True):
        self.id = uuid.uuid4().hex[:12]
        self.model = model
        self.revision = 0
        self.pins: dict = {}  # feature id -> [vertex, x, y, z]
        self.coarse_while_dragging = coarse_while_dragging

    def _constraints(self) -> ConstraintSet:
        if not self.pins:
            raise ValueError("no pins set")
        order = sorted(self.pins)
        idx = [self.pins[f][0] for f in order]
        targets = [self.pins[f][1:] for f in order]
        return point_constraints(idx, np.asarray(targets, dtype=np.float64),
                                 self.model.rest_mesh.n_vertices)

    def handle(self, msg: dict):
        """Returns a list of frames: dicts, or ('positions', ndarray)."""
        kind = msg.get("type")
        if kind == "hello":
            m = self.model
            return [{
                "type": "loaded", "session": self.id,
                "n": m.rest_mesh.n_vertices, "f": m.rest_mesh.n_faces,
                "q": m.q, "b": m.dict_rich.b,
            }]
        if kind == "pin":
            fid, v = msg["featureId"], int(msg["vertexIndex"])
            if not 0 <= v < self.model.rest_mesh.n_vertices:
                return [_err("bad_vertex", f"vertex {v} out of range")]
            rest = self.model.rest_mesh.vertices[v]
            self.pins[fid] = [v, float(rest[0]), float(rest[1]), float(rest[2])]
            self.revision += 1
            return [{"type": "ack", "revision": self.revision}]
        if kind == "move":
            fid = msg["featureId"]
            if fid not in self.pins:
                return [_err("unknown_feature", f"feature {fid!r} is not pinned")]
            self.pins[fid][1:] = [float(msg["x"]), float(msg["y"]), float(msg["z"])]
            self.revision += 1
            return [{"type": "ack", "revision": self.revision}]
        if kind == "unpin":
            fid = msg["featureId"]
            if fid not in self.pins:
                return [_err("unknown_feature", f"feature {fid!r} is not pinned")]
            del self.pins[fid]
            self.revision += 1
            return [{"type": "ack", "revision": self.revision}]
        if kind == "set_param":
            key, val = msg["key"], msg["val"]
            if not hasattr(self.model.params, key):
                return [_err("unknown_param", f"no parameter {key!r}")]
            setattr(self.model.params, key, type(getattr(self.model.params, key))(val))
            self.revision += 1
            return [{"type": "ack", "revision": self.revision}]
        if kind == "solve":
            try:
                cs = self._constraints()
                quality = msg.get("quality", "full")
                if quality == "coarse" and self.coarse_while_dragging:
                    state = self.model.solve_coarse(cs)
                else:
                    state = self.model.solve(cs)
            except Exception as exc:
                return [_err("solve_failed", str(exc))]
            return [
                {
                    "type": "result",
                    "revision": self.revision,
                    "energy": float(state.energy),
                    "alpha": float(np.mean(state.alpha)),
                    "selectedExample": state.selected,
                },
                ("positions", state.surface()),
            ]
        return [_err("bad_message", f"unknown message type {kind!r}")]


def _err(code, msg):
    return {"type": "error", "code": code, "msg": msg}


async def _read_frame(reader: asyncio.StreamReader) -> bytes:
    header = await reader.readexactly(4)
    (length,) = struct.unpack("<I", header)
    if length > wire.MAX_FRAME:
        raise ValueError("oversized frame announced")
    return await reader.readexactly(length)


async def _serve_connection(reader, writer, model):
    session = Session(model)
    try:
        while True:
            try:
                payload = await _read_frame(reader)
            except (asyncio.IncompleteReadError, ConnectionResetError):
                break
            try:
                msg = wire.decode_control(payload)
                replies = session.handle(msg)
            except Exception as exc:  # malformed message; session survives
                replies = [_err("bad_frame", str(exc))]
            for reply in replies:
                if isinstance(reply, tuple) and reply[0] == "positions":
                    writer.write(wire.encode_positions(reply[1]))
                else:
                    writer.write(wire.encode_control(reply))
            await writer.drain()
    finally:
        writer.close()


async def _serve(host, port, model, ready_cb=None):
    server = await asyncio.start_server(
        lambda r, w: _serve_connection(r, w, model), host, port
    )
    actual_port = server.sockets[0].getsockname()[1]
    print(f"listening on {host}:{actual_port}", flush=True)
    if ready_cb:
        ready_cb(actual_port)
    async with server:
        await server.serve_forever()


def cli_serve(args) -> int:
    model = _build_model(args)
    try:
        asyncio.run(_serve(args.host, args.port, model))
    except KeyboardInterrupt:
        pass
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="blendforge",
        description="Example-based shape deformation, interpolation, and registration",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--examples", required=True, help="directory of example meshes")
        p.add_argument("--config", help="flat key/value config file")
        p.add_argument("--weights", help="skeleton weight file (else spectral weights)")

    p = sub.add_parser("deform", help="solve for a pose from pinned vertices")
    common(p)
    p.add_argument("--constraints", required=True, help="pins.txt: vertexIndex x y z")
    p.add_argument("--out", required=True, help="output mesh (.off/.obj)")
    p.set_defaults(func=cli_deform)

    p = sub.add_parser("interpolate", help="blend between two solved poses")
    common(p)
    p.add_argument("--constraints-a", required=True)
    p.add_argument("--constraints-b", required=True)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cli_interpolate)

    p = sub.add_parser("register", help="fit the examples to a partial scan")
    common(p)
    p.add_argument("--scan", required=True)
    p.add_argument("--features", required=True,
                   help="lines: scanVertex modelVertex (either may be ?)")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write threshold,fraction rows")
    p.set_defaults(func=cli_register)

    p = sub.add_parser("serve", help="run the interactive session server")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cli_serve)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
