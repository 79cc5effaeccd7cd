"""Unsupervised refinement of a shared linear descriptor probe.

The probe ``W`` (d, d') maps base features ``X`` to descriptors ``X W`` on
both shapes.  Spectral coefficients are linear in ``W`` (``A = P W`` with
``P = Phi^T M X`` and ``B = R W`` with ``R = Psi^H M G X``), so one pair
costs a handful of small dense solves.  Gradients flow through the per-row
regularized solves by implicit differentiation.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, DivergenceError, RankError, SolveError
from .fmap import loss_iso_C, loss_ortho_C, penalty_masks
from .qmap import loss_iso_Q, loss_ortho_Q
from .spectral import project_complex, project_real


@dataclass(frozen=True)
class TrainConfig:
    w_ortho: float = 1.0
    w_q_ortho: float = 1.0
    lam: float = 1e-3
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 15
    seed: int = 0
    normalize_spectra: bool = True

    def __post_init__(self):
        if self.w_ortho < 0 or self.w_q_ortho < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.lam <= 0:
            raise ValueError("refinement needs lam > 0 (the regularized blocks)")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")


@dataclass(eq=False)
class LinearProbe:
    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2 or not np.all(np.isfinite(self.W)):
            raise ValueError("probe must be a finite 2D matrix")

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    @classmethod
    def random(cls, d, d_out=32, seed=0, scale=None):
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(d) if scale is None else scale
        return cls(rng.normal(scale=scale, size=(d, d_out)))


@dataclass(eq=False)
class PairState:
    """Precomputed projections of base features for one (M, N) pair."""

    P_M: np.ndarray
    P_N: np.ndarray
    R_M: np.ndarray
    R_N: np.ndarray
    evals_M: np.ndarray
    evals_N: np.ndarray
    mu_M: np.ndarray
    mu_N: np.ndarray
    name: str = "pair"

    @property
    def d(self):
        return self.P_M.shape[1]


def make_pair(shape_M, shape_N, X_M, X_N, name="pair"):
    """Project base features of both shapes onto their bases."""
    X_M = X_M.values if hasattr(X_M, "values") else np.asarray(X_M)
    X_N = X_N.values if hasattr(X_N, "values") else np.asarray(X_N)
    if X_M.shape[1] != X_N.shape[1]:
        raise DimensionError("base features of the two shapes differ in width")
    return PairState(
        project_real(shape_M.lb, X_M), project_real(shape_N.lb, X_N),
        project_complex(shape_M.conn, shape_M.gradient @ X_M),
        project_complex(shape_N.conn, shape_N.gradient @ X_N),
        shape_M.lb.evals, shape_N.lb.evals, shape_M.conn.evals, shape_N.conn.evals, name)


def _factor_rows(K, masks, lam):
    facs = []
    for i in range(masks.shape[0]):
        try:
            facs.append(sla.cho_factor(K + lam * np.diag(masks[i])))
        except (sla.LinAlgError, ValueError):
            raise SolveError("regularized system is singular", row=i) from None
    return facs


def _solve_each(facs, rhs):
    return np.column_stack([sla.cho_solve(f, rhs[:, i]) for i, f in enumerate(facs)])


def _forward(pair, W, cfg):
    A_M, A_N = pair.P_M @ W, pair.P_N @ W
    B_M, B_N = pair.R_M @ W, pair.R_N @ W
    if not np.any(A_N) or not np.any(B_M):
        raise RankError("probe produces identically zero descriptors")
    with np.errstate(over="ignore", invalid="ignore"):
        K_C, K_Q = A_N @ A_N.T, B_M @ B_M.conj().T
    if not (np.all(np.isfinite(K_C)) and np.all(np.isfinite(K_Q))):
        raise DivergenceError("descriptor coefficients overflowed")
    mC = penalty_masks(pair.evals_M, pair.evals_N, cfg.normalize_spectra)
    fC = _factor_rows(K_C, mC, cfg.lam)
    C = _solve_each(fC, A_N @ A_M.T).T
    mQ = penalty_masks(pair.mu_N, pair.mu_M, cfg.normalize_spectra)
    fQ = _factor_rows(K_Q, mQ, cfg.lam)
    Q = _solve_each(fQ, B_M @ B_N.conj().T).conj().T
    return dict(A_M=A_M, A_N=A_N, B_M=B_M, B_N=B_N, C=C, Q=Q, fC=fC, fQ=fQ)


def _losses(pair, st, cfg):
    lo, gC = loss_ortho_C(st["C"])
    lq, gQ = loss_ortho_Q(st["Q"])
    li = loss_iso_C(st["C"], pair.evals_M, pair.evals_N, cfg.normalize_spectra)[0]
    lqi = loss_iso_Q(st["Q"], pair.mu_M, pair.mu_N, cfg.normalize_spectra)[0]
    total = cfg.w_ortho * lo + cfg.w_q_ortho * lq
    diag = {"L_final": total, "L_ortho": lo, "L_q_ortho": lq, "L_iso": li, "L_q_iso": lqi}
    return total, diag, cfg.w_ortho * gC, cfg.w_q_ortho * gQ


def total_loss(pair, W, cfg=TrainConfig()):
    """``w_ortho L_ortho(C) + w_q_ortho L_Q-ortho(Q)`` and per-term diagnostics."""
    W = np.asarray(W, dtype=float)
    if W.shape[0] != pair.d:
        raise DimensionError(f"probe has {W.shape[0]} rows, features have {pair.d}")
    st = _forward(pair, W, cfg)
    total, diag, _, _ = _losses(pair, st, cfg)
    diag["C"], diag["Q"] = st["C"], st["Q"]
    return total, diag


def _value_and_grad(pair, W, cfg):
    st = _forward(pair, W, cfg)
    total, diag, gC, gQ = _losses(pair, st, cfg)
    A_M, A_N, B_M, B_N, C, Q = (st[k] for k in ("A_M", "A_N", "B_M", "B_N", "C", "Q"))

    # C rows solve (A_N A_N^T + lam D_i) c_i = A_N a_i
    V = _solve_each(st["fC"], gC.T).T
    dA_N = V.T @ A_M - V.T @ C @ A_N - C.T @ V @ A_N
    dA_M = V @ A_N
    grad = pair.P_M.T @ dA_M + pair.P_N.T @ dA_N

    # Q rows solve (B_M B_M^H + lam D_i) q_i^H = B_M b_i^H; gQ is dL/d conj(Q)
    U = _solve_each(st["fQ"], gQ.conj().T)
    H_M = U @ B_N - U @ Q @ B_M - Q.conj().T @ U.conj().T @ B_M
    H_N = U.conj().T @ B_M
    grad += 2.0 * np.real(pair.R_M.conj().T @ H_M + pair.R_N.conj().T @ H_N)
    return total, diag, grad


def grad_total_loss(pair, W, cfg=TrainConfig()):
    """Gradient of :func:`total_loss` with respect to the probe ``W``."""
    W = np.asarray(W, dtype=float)
    if W.shape[0] != pair.d:
        raise DimensionError(f"probe has {W.shape[0]} rows, features have {pair.d}")
    return _value_and_grad(pair, W, cfg)[2]


class Adam:
    def __init__(self, shape, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return param - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainResult:
    probe: LinearProbe
    history: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)

    @property
    def losses(self):
        return np.array([h["L_final"] for h in self.history])


def optimize(pairs, cfg=TrainConfig(), W0=None, d_out=32, callback=None):
    """Adam over ``epochs x len(pairs)`` steps, one pair per step.

    Pairs are visited in an order reshuffled every epoch by a seeded
    generator.  ``trajectory`` holds the probe at the end of every epoch.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    rng = np.random.default_rng(cfg.seed)
    if W0 is None:
        W0 = LinearProbe.random(pairs[0].d, d_out, seed=cfg.seed).W
    W = np.array(W0.W if isinstance(W0, LinearProbe) else W0, dtype=float)
    opt = Adam(W.shape, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    res = TrainResult(LinearProbe(W.copy()))
    step = 0
    for epoch in range(cfg.epochs):
        for p in rng.permutation(len(pairs)):
            total, diag, grad = _value_and_grad(pairs[p], W, cfg)
            gnorm = float(np.linalg.norm(grad))
            if not (np.isfinite(total) and np.isfinite(gnorm)):
                raise DivergenceError(f"non-finite loss at step {step} (pair {pairs[p].name})")
            rec = {"step": step, "epoch": epoch, "pair": pairs[p].name, **diag, "grad_norm": gnorm}
            res.history.append(rec)
            if callback is not None:
                callback(rec)
            W = opt.step(W, grad)
            step += 1
        res.trajectory.append(W.copy())
    res.probe = LinearProbe(W)
    return res


def write_log(history, path):
    keys = ("step", "pair", "L_final", "L_ortho", "L_q_ortho", "L_iso", "L_q_iso", "grad_norm")
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps({k: rec[k] for k in keys}) + "\n")


def read_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_probe(probe, path):
    """Binary checkpoint: uint64 (d, d') then row-major little-endian float64."""
    W = np.ascontiguousarray(probe.W if isinstance(probe, LinearProbe) else probe, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array(W.shape, dtype="<u8").tobytes())
        fh.write(W.tobytes())


def load_probe(path):
    raw = open(path, "rb").read()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated probe checkpoint")
    d, dp = (int(x) for x in np.frombuffer(raw[:16], dtype="<u8"))
    if len(raw) != 16 + 8 * d * dp:
        raise ValueError(f"{path}: probe checkpoint size does not match header ({d}x{dp})")
    return LinearProbe(np.frombuffer(raw[16:], dtype="<f8").reshape(d, dp).copy())


def config_dict(cfg):
    return asdict(cfg)
