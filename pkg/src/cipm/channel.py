"""Rayleigh MISO channels and equivalent-channel statistics.

The per-symbol precoding problem can be rephrased on an "effective" channel
whose row j is rotated by the phase difference between a common reference
symbol and user j's symbol, and scaled by the inverse symbol amplitude. The
resulting per-row power is the channel power divided by the symbol power,
a Gamma mixture over the constellation's amplitude levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .constellation import ConstellationSpec

REFERENCE_SYMBOL = (1.0 + 1.0j) / np.sqrt(2.0)


@dataclass(frozen=True)
class FadingConfig:
    """I.i.d. Rayleigh fading; each entry is CN(0, 1/beta)."""

    beta: float
    n_antennas: int
    k_users: int
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.n_antennas < 1 or self.k_users < 1:
            raise ValueError("n_antennas and k_users must be >= 1")


@dataclass(frozen=True)
class ChannelMatrix:
    """K x Nt complex channel; row j is user j's downlink channel."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim != 2:
            raise ValueError("channel entries must be a 2-D array")
        object.__setattr__(self, "entries", e)
        e.setflags(write=False)

    @property
    def k_users(self) -> int:
        return self.entries.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.entries.shape[1]

    def save_text(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.k_users} {self.n_antennas}\n")
            for row in self.entries:
                fh.write(" ".join(f"{float(v.real)!r},{float(v.imag)!r}"
                                  for v in row) + "\n")

    @classmethod
    def load_text(cls, path) -> "ChannelMatrix":
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ValueError("channel file must start with a 'K Nt' header line")
            k, nt = int(header[0]), int(header[1])
            rows = []
            for j in range(k):
                parts = fh.readline().split()
                if len(parts) != nt:
                    raise ValueError(f"channel row {j} has {len(parts)} entries, expected {nt}")
                rows.append([complex(float(p.split(",")[0]), float(p.split(",")[1]))
                             for p in parts])
        return cls(entries=np.array(rows, dtype=complex))


def sample_rayleigh(cfg: FadingConfig, rng: np.random.Generator | None = None) -> ChannelMatrix:
    """Draw one channel realization with per-entry power 1/beta."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    scale = np.sqrt(1.0 / (2.0 * cfg.beta))
    shape = (cfg.k_users, cfg.n_antennas)
    h = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ChannelMatrix(entries=h)


@dataclass(frozen=True)
class EquivalentChannel:
    """Row-rescaled channel; |a_diag[j]| is the inverse symbol amplitude."""

    entries: np.ndarray
    a_diag: np.ndarray


def effective_channel(channel: ChannelMatrix,
                      specs: list[ConstellationSpec],
                      symbols,
                      reference: complex = REFERENCE_SYMBOL) -> EquivalentChannel:
    """Rotate/scale each user row so all users share one reference target.

    Row j is multiplied by exp(i(angle(reference) - angle(d_j))) / |d_j|,
    which maps the exact-constraint target for symbol d_j onto the common
    unit-modulus reference point.
    """
    if abs(abs(reference) - 1.0) > 1e-12:
        raise ValueError("reference symbol must be unit-modulus")
    d = np.array([spec.points[idx] for spec, idx in zip(specs, symbols)])
    kappa = np.abs(d)
    if np.any(kappa == 0):
        raise ValueError("symbol amplitude is zero; cannot form the effective channel")
    a = np.exp(1j * (np.angle(reference) - np.angle(d))) / kappa
    return EquivalentChannel(entries=a[:, None] * channel.entries, a_diag=a)


@dataclass(frozen=True)
class SymbolStats:
    """Amplitude-squared and phase levels of a constellation with weights."""

    gamma: np.ndarray         # distinct |d|^2 levels, ascending
    gamma_probs: np.ndarray
    phases: np.ndarray        # distinct angles in [-pi, pi), ascending
    phase_probs: np.ndarray


def symbol_stats(spec: ConstellationSpec, decimals: int = 9) -> SymbolStats:
    g = np.round(np.abs(spec.points) ** 2, decimals)
    ph = np.round(np.angle(spec.points), decimals)
    gu, gc = np.unique(g, return_counts=True)
    pu, pc = np.unique(ph, return_counts=True)
    m = float(spec.order)
    return SymbolStats(gamma=gu, gamma_probs=gc / m, phases=pu, phase_probs=pc / m)


def _gamma_pdf(z: np.ndarray, shape: int, rate: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    zp = z[pos]
    log_pdf = shape * np.log(rate) + (shape - 1) * np.log(zp) - rate * zp - gammaln(shape)
    out[pos] = np.exp(log_pdf)
    return out


def eq_power_pdf(z, cfg: FadingConfig, stats: SymbolStats) -> np.ndarray:
    """Density of ||h||^2 / |d|^2: a Gamma(Nt, beta*gamma_k) mixture."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for g, p in zip(stats.gamma, stats.gamma_probs):
        out += p * _gamma_pdf(z, cfg.n_antennas, cfg.beta * g)
    return out


def eq_power_cdf(z, cfg: FadingConfig, stats: SymbolStats) -> np.ndarray:
    """Mixture CDF via the regularized lower incomplete gamma function."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    zc = np.clip(z, 0.0, None)
    for g, p in zip(stats.gamma, stats.gamma_probs):
        out += p * gammainc(cfg.n_antennas, cfg.beta * g * zc)
    return out


def eq_power_mean(cfg: FadingConfig, stats: SymbolStats) -> float:
    """Mean of the mixture: (Nt/beta) * E[1/gamma]."""
    inv = float(np.sum(stats.gamma_probs / stats.gamma))
    return cfg.n_antennas / cfg.beta * inv


def eq_amplitude_pdf(u, cfg: FadingConfig, stats: SymbolStats) -> np.ndarray:
    """Density of ||h|| / |d|, the change of variables u = sqrt(z)."""
    u = np.asarray(u, dtype=float)
    return 2.0 * u * eq_power_pdf(u * u, cfg, stats)
