"""Wave kernel signatures, orientation-aware gradient channels and linear probes."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, SpectrumError


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    values: np.ndarray
    kind: str = "wks"
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def permuted(self, perm):
        """Descriptors composed with a vertex map: row ``i`` becomes row ``perm[i]``."""
        return DescriptorSet(self.values[np.asarray(perm)], self.kind, dict(self.provenance))


@dataclass(frozen=True)
class WksParams:
    num_energies: int = 128
    sigma_scale: float = 7.0

    def __post_init__(self):
        if self.num_energies < 2:
            raise ValueError("num_energies must be at least 2")
        if self.sigma_scale <= 0 or 4 * self.sigma_scale >= self.num_energies:
            raise ValueError("sigma_scale leaves an empty energy range (need 4*sigma_scale < num_energies)")


def wks_energies(evals, params):
    """Log-energy grid and Gaussian width for positive eigenvalues ``evals``."""
    logs = np.log(evals)
    step = (logs[-1] - logs[0]) / params.num_energies
    sigma = params.sigma_scale * step
    return np.linspace(logs[0] + 2 * sigma, logs[-1] - 2 * sigma, params.num_energies), sigma


def wks(basis, params=WksParams()):
    """Wave kernel signature of every vertex, one column per energy.

    The constant eigenfunction (first column of the basis) is skipped.
    """
    if basis.k < 8:
        raise SpectrumError(f"need at least 8 eigenpairs, got {basis.k}")
    evals = basis.evals[1:]
    evecs = basis.evecs[:, 1:]
    pos = evals > 0
    if len(np.unique(evals[pos])) < 2:
        raise SpectrumError("fewer than two distinct positive eigenvalues")
    evals, evecs = evals[pos], evecs[:, pos]
    energies, sigma = wks_energies(evals, params)
    logs = np.log(evals)
    coefs = np.exp(-((energies[:, None] - logs[None, :]) ** 2) / (2 * sigma**2))
    coefs /= coefs.sum(axis=1, keepdims=True)
    values = (evecs**2) @ coefs.T
    prov = {"num_energies": params.num_energies, "sigma_scale": params.sigma_scale,
            "sigma": float(sigma), "e_min": float(energies[0]), "e_max": float(energies[-1])}
    return DescriptorSet(values, "wks", prov)


def orientation_channels(base, gradient, n_select=8, mass=None):
    """Gauge-invariant gradient statistics of selected descriptor columns.

    For evenly spaced columns ``h_a`` the gradients ``g_a = G h_a`` give
    moduli ``|g_a|`` and, for consecutive pairs, the cosine and sine of the
    relative phase ``arg(conj(g_a) g_b)``.  Sines change sign under an
    orientation reversal; everything else is intrinsic.
    """
    values = base.values if isinstance(base, DescriptorSet) else np.asarray(base)
    cols = np.unique(np.linspace(0, values.shape[1] - 1, n_select).round().astype(int))
    g = gradient @ values[:, cols]
    mod = np.abs(g)
    prod = np.conj(g[:, :-1]) * g[:, 1:]
    floor = 1e-3 * np.median(mod) ** 2 + 1e-300
    denom = mod[:, :-1] * mod[:, 1:] + floor
    feats = np.hstack([mod, prod.real / denom, prod.imag / denom])
    if mass is not None:
        m = np.asarray(mass)
        feats = feats / np.sqrt(m @ feats**2)[None, :]
    return feats


def base_features(wks_set, gradient=None, n_orient=0, mass=None):
    """WKS optionally concatenated with orientation channels: the probe input."""
    if not n_orient:
        return DescriptorSet(wks_set.values, "wks", dict(wks_set.provenance))
    extra = orientation_channels(wks_set, gradient, n_orient, mass)
    prov = dict(wks_set.provenance, n_orient=n_orient)
    return DescriptorSet(np.hstack([wks_set.values, extra]), "base", prov)


def apply_probe(base, probe):
    """Refined descriptors ``base @ probe`` (shared probe for both shapes)."""
    W = np.asarray(probe, dtype=float)
    if W.ndim != 2 or W.shape[0] != base.d:
        raise DimensionError(f"probe has shape {W.shape}, descriptors have {base.d} columns")
    return DescriptorSet(base.values @ W, "refined", dict(base.provenance, probe_shape=W.shape))


def save_descriptors(desc, path):
    """Binary ``(n, d)`` uint64 header + row-major float64, plus a ``.txt`` sidecar."""
    path = Path(path)
    v = np.ascontiguousarray(desc.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array(v.shape, dtype="<u8").tobytes())
        fh.write(v.tobytes())
    lines = [f"kind={desc.kind}"] + [f"{k}={val}" for k, val in desc.provenance.items()]
    path.with_suffix(path.suffix + ".txt").write_text("\n".join(lines) + "\n")


def load_descriptors(path):
    path = Path(path)
    raw = path.read_bytes()
    n, d = np.frombuffer(raw[:16], dtype="<u8")
    values = np.frombuffer(raw[16:], dtype="<f8").reshape(int(n), int(d)).copy()
    prov = {}
    kind = "wks"
    side = path.with_suffix(path.suffix + ".txt")
    if side.exists():
        for line in side.read_text().splitlines():
            key, _, val = line.partition("=")
            if key == "kind":
                kind = val
            elif key:
                prov[key] = val
    return DescriptorSet(values, kind, prov)
