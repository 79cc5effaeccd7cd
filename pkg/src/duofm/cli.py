"""Command-line entry point: ``duofm {gen,precompute,match,refine,eval}``.

Exit codes: 0 success, 1 computation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .cache import cache_read, cache_write
from .convert_eval import (evaluate, load_pointmap, orientation_sign, p2p_from_C, p2p_from_Q,
                           save_pointmap)
from .descriptors import WksParams
from .errors import CacheError, DuoError
from .fmap import FmapOptions, estimate_C_regularized, loss_ortho_C, save_fmap
from .io import load_mesh, save_mesh
from .mesh import generate_blob, generate_icosphere, generate_symmetric_blob
from .qmap import (complex_spectral_coeffs, estimate_Q_regularized, loss_ortho_Q, save_qmap,
                   verify_pushforward_relation)
from .refine import TrainConfig, load_probe, make_pair, optimize, save_probe, write_log
from .scenarios import feature_stack
from .shape import prepare_shape
from .spectral import project_real


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    k_c: int = 50
    k_q: int = 20
    lam: float = 1e-3
    wks_dims: int = 128
    wks_sigma: float = 7.0
    n_orient: int = 8
    w_ortho: float = 1.0
    w_q_ortho: float = 1.0
    lr: float = 1e-3
    epochs: int = 15
    seed: int = 0
    d_out: int = 32
    cache_dir: str = ""
    output_dir: str = "."

    def validate(self):
        if self.k_c < 8:
            raise UsageError("k_c must be at least 8")
        if self.k_q < 1:
            raise UsageError("k_q must be positive")
        if self.lam <= 0:
            raise UsageError("lambda must be positive")
        try:
            WksParams(self.wks_dims, self.wks_sigma)
            TrainConfig(self.w_ortho, self.w_q_ortho, self.lam, self.lr, epochs=self.epochs, seed=self.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.n_orient < 2:
            raise UsageError("n_orient must be at least 2")
        if self.d_out < 1:
            raise UsageError("d_out must be positive")
        return self

    @property
    def wks_params(self):
        return WksParams(self.wks_dims, self.wks_sigma)

    @property
    def train(self):
        return TrainConfig(self.w_ortho, self.w_q_ortho, self.lam, self.lr, epochs=self.epochs, seed=self.seed)


_ALIASES = {"lambda": "lam", "k_C": "k_c", "k_Q": "k_q"}


def parse_config_text(text):
    """``key = value`` lines, ``#`` comments; returns a dict of typed values."""
    kinds = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = _ALIASES.get(key.strip(), key.strip())
        if not sep or key not in kinds:
            raise UsageError(f"config line {no}: unknown or malformed entry {line!r}")
        conv = {"int": int, "float": float, "str": str}[kinds[key]]
        try:
            out[key] = conv(val.strip())
        except ValueError:
            raise UsageError(f"config line {no}: bad value for {key}") from None
    return out


def build_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_text(Path(args.config).read_text()))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if not values.get("cache_dir"):
        values["cache_dir"] = os.environ.get("DUO_CACHE_DIR", "")
    return replace(RunConfig(), **values).validate()


def _say(msg):
    print(msg, flush=True)


# ------------------------------------------------------------------ commands

def cmd_gen(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "icosphere":
        mesh = generate_icosphere(args.subdiv, args.radius)
        path = out / f"icosphere_s{args.subdiv}.off"
        save_mesh(mesh, path)
        _say(f"wrote {path} ({mesh.n_vertices} vertices)")
        return 0
    if args.asymmetric:
        mesh = generate_blob(args.seed, args.resolution)
        path = out / f"blob_{args.seed:04d}.off"
        save_mesh(mesh, path)
    else:
        mesh, sym = generate_symmetric_blob(args.seed, args.resolution)
        path = out / f"{mesh.name}.off"
        save_mesh(mesh, path)
        sym_path = path.with_suffix(".sym")
        sym_path.write_text("\n".join(str(int(i)) for i in sym.permutation) + "\n")
        _say(f"wrote {sym_path}")
    _say(f"wrote {path} ({mesh.n_vertices} vertices)")
    return 0


def _cache_path(mesh_path, cfg):
    base = Path(cfg.cache_dir) if cfg.cache_dir else Path(mesh_path).parent
    return base / (Path(mesh_path).stem + ".duo")


def _cache_matches(shape, cfg):
    prm = shape.wks.provenance
    return (shape.lb.k == cfg.k_c and shape.conn.k == cfg.k_q and prm.get("num_energies") == cfg.wks_dims
            and prm.get("sigma_scale") == cfg.wks_sigma)


def cmd_precompute(args, cfg):
    mesh = load_mesh(args.mesh)
    path = _cache_path(args.mesh, cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        try:
            cached, _ = cache_read(path, mesh)
            if _cache_matches(cached, cfg):
                _say(f"cache hit: {path}")
                return 0
            _say(f"cache parameters differ, rebuilding {path}")
        except CacheError as exc:
            print(f"warning: rebuilding cache ({exc})", file=sys.stderr)
    shape = prepare_shape(mesh, cfg.k_c, cfg.k_q, cfg.wks_params)
    cache_write(path, shape)
    _say(f"wrote {path}")
    return 0


def _read_indices(path):
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return np.array([int(ln) for ln in lines if ln and not ln.startswith("#")], dtype=np.int64)


def _features(shape, cfg, probe):
    X = feature_stack(shape, cfg.n_orient)
    if probe is None:
        return X
    if probe.W.shape[0] != X.shape[1]:
        raise UsageError(f"probe expects {probe.W.shape[0]} input features, pipeline has {X.shape[1]}")
    return X @ probe.W


def cmd_match(args, cfg):
    S_M, _ = cache_read(args.source)
    S_N, _ = cache_read(args.target)
    probe = load_probe(args.probe) if args.probe else None
    D_M = _features(S_M, cfg, probe)
    D_N = _features(S_N, cfg, probe)
    if args.mirror_descriptors:
        perm = _read_indices(args.mirror_descriptors)
        if len(perm) != S_N.n:
            raise UsageError("symmetry file does not match the target vertex count")
        D_N = D_N[perm]
    A_M, A_N = project_real(S_M.lb, D_M), project_real(S_N.lb, D_N)
    fm = estimate_C_regularized(A_M, A_N, S_M.lb.evals, S_N.lb.evals, FmapOptions(cfg.lam))
    B_M = complex_spectral_coeffs(S_M.conn, S_M.gradient, D_M)
    B_N = complex_spectral_coeffs(S_N.conn, S_N.gradient, D_N)
    qm = estimate_Q_regularized(B_M, B_N, S_M.conn.evals, S_N.conn.evals, cfg.lam)
    pc = p2p_from_C(fm, S_M.lb.evecs, S_N.lb.evecs)
    pq = p2p_from_Q(qm, S_M.conn.evecs, S_N.conn.evecs, S_M.divergence, S_N.divergence)
    pc = pc.with_orientation(orientation_sign(pc, S_M.mesh, S_N.mesh))
    pq = pq.with_orientation(orientation_sign(pq, S_M.mesh, S_N.mesh))
    rep = verify_pushforward_relation(fm, qm, S_M.lb, S_N.lb, S_M.conn, S_N.conn, S_M.gradient, S_N.gradient)

    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_fmap(fm, out / "C.fmap")
    save_qmap(qm, out / "Q.qmap")
    save_pointmap(pc, out / "p2p_C.txt")
    save_pointmap(pq, out / "p2p_Q.txt")
    summary = {
        "orientation_C": pc.orientation, "orientation_Q": pq.orientation,
        "L_ortho": loss_ortho_C(fm.C)[0], "L_q_ortho": loss_ortho_Q(qm.Q)[0],
        "pushforward_residual_max": rep.max_residual, "pushforward_residual_mean": rep.mean_residual,
    }
    if args.truth:
        truth = _read_indices(args.truth)
        for tag, pm in (("C", pc), ("Q", pq)):
            r = evaluate(pm, truth, S_N.mesh)
            r.save(out / f"eval_{tag}.json")
            summary[f"mean_error_{tag}"] = r.mean_error
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    for k, v in summary.items():
        _say(f"{k}: {v}")
    return 0


def cmd_refine(args, cfg):
    pairs = []
    features = {}
    for no, line in enumerate(Path(args.pairs).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise UsageError(f"pair list line {no}: expected two cache paths")
        shapes = []
        for p in parts:
            if p not in features:
                S, _ = cache_read(Path(args.pairs).parent / p if not Path(p).is_absolute() else p)
                features[p] = (S, feature_stack(S, cfg.n_orient))
            shapes.append(features[p])
        (S_M, X_M), (S_N, X_N) = shapes
        pairs.append(make_pair(S_M, S_N, X_M, X_N, name=f"{no}"))
    if not pairs:
        raise UsageError("pair list is empty")
    res = optimize(pairs, cfg.train, d_out=cfg.d_out)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_probe(res.probe, out / "probe.bin")
    write_log(res.history, out / "train_log.jsonl")
    per_epoch = np.array([h["L_final"] for h in res.history]).reshape(cfg.epochs, len(pairs)).mean(axis=1)
    _say(f"mean loss per pair: first epoch {per_epoch[0]:.6g}, last epoch {per_epoch[-1]:.6g}")
    _say(f"wrote {out / 'probe.bin'} and {out / 'train_log.jsonl'}")
    return 0


def cmd_eval(args, cfg):
    pm = load_pointmap(args.p2p)
    truth = _read_indices(args.truth)
    target = load_mesh(args.target)
    rep = evaluate(pm, truth, target)
    if args.out:
        rep.save(args.out)
    _say(f"mean geodesic error x100: {rep.mean_error:.6g} over {rep.n} vertices")
    return 0


# ------------------------------------------------------------------ parser

def _subdiv(text):
    v = int(text)
    if not 0 <= v <= 6:
        raise argparse.ArgumentTypeError("subdivisions must be between 0 and 6")
    return v


def _common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--k-c", dest="k_c", type=int)
    p.add_argument("--k-q", dest="k_q", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--wks-dims", dest="wks_dims", type=int)
    p.add_argument("--n-orient", dest="n_orient", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--threads", type=int, help="cap on BLAS/worker threads")


def build_parser():
    ap = argparse.ArgumentParser(prog="duofm", description="orientation-aware functional maps")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic meshes")
    g.add_argument("kind", choices=["icosphere", "blob"])
    g.add_argument("--subdiv", type=_subdiv, default=3)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--resolution", type=int, default=10)
    g.add_argument("--asymmetric", action="store_true")
    g.add_argument("--out", default=".")
    g.add_argument("--threads", type=int)

    p = sub.add_parser("precompute", help="build the spectral cache of a mesh")
    p.add_argument("mesh")
    _common(p)

    m = sub.add_parser("match", help="estimate C and Q, extract and check point maps")
    m.add_argument("source")
    m.add_argument("target")
    m.add_argument("--probe")
    m.add_argument("--truth")
    m.add_argument("--mirror-descriptors", dest="mirror_descriptors", metavar="SYMFILE",
                   help="compose target descriptors with this vertex permutation")
    m.add_argument("--out")
    _common(m)

    r = sub.add_parser("refine", help="train a shared linear probe on a list of cache pairs")
    r.add_argument("pairs")
    r.add_argument("--epochs", type=int)
    r.add_argument("--lr", type=float)
    r.add_argument("--w-ortho", dest="w_ortho", type=float)
    r.add_argument("--w-q-ortho", dest="w_q_ortho", type=float)
    r.add_argument("--d-out", dest="d_out", type=int)
    r.add_argument("--out")
    _common(r)

    e = sub.add_parser("eval", help="geodesic error of a point map")
    e.add_argument("p2p")
    e.add_argument("truth")
    e.add_argument("target")
    e.add_argument("--out")
    e.add_argument("--threads", type=int)
    return ap


def _limits(threads):
    if not threads:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with _limits(getattr(args, "threads", None)):
            if args.command == "gen":
                return cmd_gen(args)
            cfg = build_config(args)
            return {"precompute": cmd_precompute, "match": cmd_match, "refine": cmd_refine,
                    "eval": cmd_eval}[args.command](args, cfg)
    except (UsageError, FileNotFoundError) as exc:
        print(f"duofm: error: {exc}", file=sys.stderr)
        return 2
    except DuoError as exc:
        print(f"duofm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())


def main_exit():
    sys.exit(main())
