"""Marginal distribution error mitigation (mDEM).

A twirled circuit turns gate and readout noise into a Pauli channel.  On
Z-basis outcomes that channel acts as a convolution over XOR,

    z(b) = sum_e a(e) x(b ^ e),

which the Walsh-Hadamard transform diagonalizes: ``W z = (W a) * (W x)``.
The noise vector ``a`` is learned from a Clifford copy of the circuit whose
ideal output ``x_nec`` is known, then divided out of the physics data.
Everything is done on small windows of qubits around each site, where the
restricted channel is again a Pauli channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .counts import BitstringDistribution
from .observables import rmse

logger = logging.getLogger(__name__)

__all__ = [
    "MitigationError",
    "MitigationConfig",
    "NoiseVector",
    "MitigatedZ",
    "ScanChoice",
    "fwht",
    "ifwht",
    "naive_wht",
    "marginal_window",
    "learn_noise_vector",
    "mitigate_marginal",
    "z_from_marginal",
    "mitigated_z",
    "scan_hyperparams",
]

CLAMP_MODES = ("direct", "spectrum")


class MitigationError(ArithmeticError):
    """The data are inconsistent with a Pauli channel, or the inversion is ill-conditioned."""


def _width(n: int) -> int:
    w = n.bit_length() - 1
    if n < 1 or (1 << w) != n:
        raise ValueError(f"length {n} is not a power of two")
    return w


def fwht(v) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis, O(w 2^w)."""
    out = np.array(v, dtype=float, copy=True)
    n = out.shape[-1]
    _width(n)
    lead = out.shape[:-1]
    h = 1
    while h < n:
        blk = out.reshape(lead + (n // (2 * h), 2, h))
        a = blk[..., 0, :].copy()
        blk[..., 0, :] += blk[..., 1, :]
        blk[..., 1, :] = a - blk[..., 1, :]
        h *= 2
    return out


def ifwht(v) -> np.ndarray:
    """Inverse of ``fwht``: the forward transform divided by ``2^w``."""
    out = fwht(v)
    return out / out.shape[-1]


def naive_wht(v) -> np.ndarray:
    """Reference transform by the explicit ``(-1)^popcount(j & k)`` matrix."""
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    _width(n)
    j = np.arange(n)
    par = np.bitwise_and.outer(j, j)
    sign = np.ones((n, n))
    bit = 1
    while bit < n:
        sign *= np.where(par & bit, -1.0, 1.0)
        bit <<= 1
    return v @ sign.T


def marginal_window(site: int, n_C: int, L: int) -> tuple:
    """Sites ``site - n_C .. site + n_C`` clipped to the chain."""
    if not 1 <= site <= L:
        raise ValueError(f"site {site} outside [1, {L}]")
    if n_C < 0:
        raise ValueError("n_C must be >= 0")
    return tuple(range(max(1, site - n_C), min(L, site + n_C) + 1))


@dataclass(frozen=True)
class MitigationConfig:
    epsilon: float = 0.05
    n_C: int = 4
    bootstrap_count: int = 100
    clamp: str = "direct"
    spectral_floor: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.n_C < 0:
            raise ValueError(f"n_C must be >= 0, got {self.n_C}")
        if self.bootstrap_count < 0:
            raise ValueError("bootstrap_count must be >= 0")
        if self.clamp not in CLAMP_MODES:
            raise ValueError(f"clamp must be one of {CLAMP_MODES}")


@dataclass(frozen=True)
class NoiseVector:
    """Learned error-pattern weights ``a`` over a window (index bit ``p`` = window position ``p``).

    ``raw`` is the unclamped estimate; ``a`` is what mitigation divides by.
    """

    a: np.ndarray
    raw: np.ndarray
    epsilon: float
    clamp: str = "direct"

    @property
    def width(self) -> int:
        return _width(self.a.size)

    def spectrum(self) -> np.ndarray:
        return fwht(self.a)


def _ratio(num: np.ndarray, den: np.ndarray, atol: float) -> np.ndarray:
    """Element-wise ``num / den`` with ``0/0 -> 1``."""
    zero_den = np.abs(den) <= atol
    bad = zero_den & (np.abs(num) > atol)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise MitigationError(f"reference Walsh coefficient {k} vanishes but the noisy one is "
                              f"{num[k]:.3g}; the noise is not a Pauli channel on this window")
    out = np.ones_like(num)
    ok = ~zero_den
    out[ok] = num[ok] / den[ok]
    return out


def learn_noise_vector(z_nec, x_nec, epsilon: float, clamp: str = "direct",
                       atol: float = 1e-12) -> NoiseVector:
    """``a = ifwht(fwht(z_nec) / fwht(x_nec))`` followed by the clamp.

    ``clamp="direct"`` replaces entries below ``epsilon`` by ``epsilon``.
    ``clamp="spectrum"`` instead raises Walsh coefficients of ``a`` below
    ``epsilon`` to ``epsilon``, which keeps the total weight at 1.
    """
    z_nec = np.asarray(z_nec, dtype=float)
    x_nec = np.asarray(x_nec, dtype=float)
    if z_nec.shape != x_nec.shape or z_nec.ndim != 1:
        raise ValueError("z_nec and x_nec must be marginals over the same window")
    if clamp not in CLAMP_MODES:
        raise ValueError(f"clamp must be one of {CLAMP_MODES}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    spec = _ratio(fwht(z_nec), fwht(x_nec), atol)
    raw = ifwht(spec)
    if clamp == "direct":
        a = np.maximum(raw, epsilon)
    else:
        a = ifwht(np.maximum(spec, epsilon))
    return NoiseVector(a, raw, float(epsilon), clamp)


def mitigate_marginal(z, a: Union[NoiseVector, np.ndarray], floor: float = 1e-6) -> np.ndarray:
    """``ifwht(fwht(z) / fwht(a))``: the deconvolved quasi-distribution.

    Entries may be negative.  The zeroth Walsh coefficient is passed through
    unchanged, so the output keeps the total weight of ``z`` even when a direct
    clamp has lifted the weight of ``a`` above 1.  All other coefficients,
    and with them every ``<Z>`` read off the window, are those of the plain
    clamped inverse.
    """
    z = np.asarray(z, dtype=float)
    vec = a.a if isinstance(a, NoiseVector) else np.asarray(a, dtype=float)
    if vec.shape != z.shape:
        raise ValueError(f"window widths differ: {z.shape} vs {vec.shape}")
    spec = fwht(vec)
    if not spec[0] > 0:
        raise MitigationError("noise vector has non-positive total weight")
    spec[0] = 1.0
    small = np.abs(spec) < floor
    if np.any(small):
        k = int(np.flatnonzero(small)[0])
        raise MitigationError(f"Walsh coefficient {k} of the noise vector is {spec[k]:.3g}, "
                              f"below the floor {floor:g}")
    return ifwht(fwht(z) / spec)


def z_from_marginal(x, position: int) -> float:
    """``sum_b x(b) (-1)^{b_p}`` for window position ``p``."""
    x = np.asarray(x, dtype=float)
    bit = (np.arange(x.size) >> position) & 1
    return float(np.sum(x * (1 - 2 * bit)))


# --- full pipeline -----------------------------------------------------------

Reference = Union[BitstringDistribution, Callable[[Sequence[int]], np.ndarray], object]


def _reference_marginal(x_nec: Reference, window) -> np.ndarray:
    if isinstance(x_nec, BitstringDistribution):
        return x_nec.marginal(window)
    if callable(x_nec):
        return np.asarray(x_nec(window), dtype=float)
    from .backends.stabilizer import StabilizerTableau, tableau_marginal
    if isinstance(x_nec, StabilizerTableau):
        return tableau_marginal(x_nec, window)
    raise TypeError(f"unsupported reference type {type(x_nec).__name__}")


@dataclass
class MitigatedZ:
    """Per-site mitigated ``<Z>`` with bootstrap standard deviations.

    ``errors`` maps a site to the message of a failed window; such sites hold NaN.
    """

    values: np.ndarray
    std: np.ndarray
    config: MitigationConfig
    errors: dict = field(default_factory=dict)


def _site_z(z_w, x_w, pos, cfg) -> float:
    a = learn_noise_vector(z_w[1], x_w, cfg.epsilon, cfg.clamp)
    return z_from_marginal(mitigate_marginal(z_w[0], a, cfg.spectral_floor), pos)


def mitigated_z(z_phys: BitstringDistribution, z_nec: BitstringDistribution, x_nec: Reference,
                config: MitigationConfig = MitigationConfig(), seed=None,
                sites: Optional[Iterable[int]] = None) -> MitigatedZ:
    """Mitigate every site on its own window and bootstrap the uncertainty.

    The point estimate uses all shots.  Each bootstrap replicate redraws the
    physics and noise-estimation shots with replacement (multinomially) and
    repeats the whole per-window learning and inversion.
    """
    L = z_phys.n_qubits
    if z_nec.n_qubits != L:
        raise ValueError("physics and noise-estimation data differ in width")
    sites = list(range(1, L + 1)) if sites is None else list(sites)
    rng = np.random.default_rng(seed)
    n_boot = config.bootstrap_count if not (z_phys.exact or z_nec.exact) else 0
    boots_p = [z_phys.resample(rng) for _ in range(n_boot)]
    boots_n = [z_nec.resample(rng) for _ in range(n_boot)]
    values = np.full(L, np.nan)
    std = np.full(L, np.nan)
    errors = {}
    for site in sites:
        window = marginal_window(site, config.n_C, L)
        pos = window.index(site)
        try:
            x_w = _reference_marginal(x_nec, window)
            values[site - 1] = _site_z((z_phys.marginal(window), z_nec.marginal(window)),
                                       x_w, pos, config)
            reps = [_site_z((z_phys.marginal(window, bp), z_nec.marginal(window, bn)),
                            x_w, pos, config) for bp, bn in zip(boots_p, boots_n)]
            std[site - 1] = float(np.std(reps, ddof=1)) if len(reps) > 1 else 0.0
        except MitigationError as exc:
            errors[site] = str(exc)
            logger.warning("site %d: %s", site, exc)
    return MitigatedZ(values, std, config, errors)


@dataclass(frozen=True)
class ScanChoice:
    epsilon: float
    n_C: int
    rmse: float


def scan_hyperparams(candidates: Mapping, reference) -> list:
    """Pick the RMSE-optimal ``(epsilon, n_C)`` separately for each time step.

    ``candidates`` maps ``(epsilon, n_C)`` to per-step magnetizations of shape
    ``(n_steps, L)``; ``reference`` has the same shape.  Ties go to the smaller
    epsilon, then the smaller n_C.  Candidates with NaN entries at a step are
    skipped for that step.
    """
    if not candidates:
        raise ValueError("empty candidate grid")
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    keys = sorted(candidates, key=lambda k: (float(k[0]), int(k[1])))
    vals = {k: np.atleast_2d(np.asarray(candidates[k], dtype=float)) for k in keys}
    for k, v in vals.items():
        if v.shape != reference.shape:
            raise ValueError(f"candidate {k} has shape {v.shape}, reference {reference.shape}")
    out = []
    for s in range(reference.shape[0]):
        best = None
        for k in keys:
            row = vals[k][s]
            if np.any(np.isnan(row)):
                continue
            err = rmse(row, reference[s])
            if best is None or err < best.rmse:
                best = ScanChoice(float(k[0]), int(k[1]), err)
        if best is None:
            raise MitigationError(f"every candidate failed at step index {s}")
        out.append(best)
    return out
