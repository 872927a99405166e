"""Geometric sparse-path uplink channels for a uniform linear array.

Every user is a single-antenna transmitter whose signal reaches the base
station over a small random number of paths.  Column ``u`` of the channel
matrix is

    h_u = sqrt(N_r / L_u) * sum_l g_{u,l} a(theta_{u,l})

with unit-variance complex Gaussian gains ``g`` and unit-norm array
response vectors ``a``, so that ``E[||h_u||^2] = N_r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

__all__ = [
    "ArrayGeometry",
    "ChannelEnsembleConfig",
    "PathSet",
    "MultiUserChannel",
    "ula_response",
    "draw_paths",
    "assemble_channel",
    "draw_channel",
    "left_singular_basis",
    "trial_rng",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array; spacing is measured in carrier wavelengths."""

    num_antennas: int
    element_spacing: float = 0.5

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 1:
            raise ValueError(f"num_antennas must be a positive integer, got {self.num_antennas}")
        if not np.isfinite(self.element_spacing) or self.element_spacing <= 0:
            raise ValueError(f"element_spacing must be > 0, got {self.element_spacing}")


@dataclass(frozen=True)
class ChannelEnsembleConfig:
    geometry: ArrayGeometry
    num_users: int
    avg_paths: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if int(self.num_users) != self.num_users or self.num_users < 1:
            raise ValueError(f"num_users must be a positive integer, got {self.num_users}")
        if not np.isfinite(self.avg_paths) or self.avg_paths <= 0:
            raise ValueError(f"avg_paths must be > 0, got {self.avg_paths}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class PathSet:
    """Per-user path gains and angles of arrival (radians)."""

    gains: Tuple[np.ndarray, ...]
    aoas: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.gains) != len(self.aoas):
            raise ValueError("gains and aoas must list the same users")
        for u, (g, a) in enumerate(zip(self.gains, self.aoas)):
            if len(g) != len(a):
                raise ValueError(f"user {u}: {len(g)} gains but {len(a)} angles")

    @property
    def num_users(self) -> int:
        return len(self.gains)

    @property
    def path_counts(self) -> np.ndarray:
        return np.array([len(g) for g in self.gains], dtype=int)


@dataclass(frozen=True)
class MultiUserChannel:
    """N_r x N_u uplink channel matrix with the paths that produced it."""

    matrix: np.ndarray
    paths: PathSet | None = field(default=None, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        if not np.all(np.isfinite(m)):
            raise ValueError("channel matrix has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def num_antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_users(self) -> int:
        return self.matrix.shape[1]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for Monte Carlo trial ``trial`` of a run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(trial),)))


def ula_response(geometry: ArrayGeometry, aoa: float) -> np.ndarray:
    """Unit-norm ULA steering vector for angle of arrival ``aoa`` (radians)."""
    aoa = float(aoa)
    if not np.isfinite(aoa):
        raise ValueError(f"aoa must be finite, got {aoa}")
    n = np.arange(geometry.num_antennas)
    phase = 2.0 * np.pi * geometry.element_spacing * np.sin(aoa)
    return np.exp(1j * phase * n) / np.sqrt(geometry.num_antennas)


def _ula_matrix(geometry: ArrayGeometry, aoas: np.ndarray) -> np.ndarray:
    n = np.arange(geometry.num_antennas)[:, None]
    phase = 2.0 * np.pi * geometry.element_spacing * np.sin(np.asarray(aoas))[None, :]
    return np.exp(1j * phase * n) / np.sqrt(geometry.num_antennas)


def draw_paths(config: ChannelEnsembleConfig, rng: np.random.Generator) -> PathSet:
    """Draw path gains and angles for every user.

    The path count per user is ``max(1, Poisson(avg_paths))``; gains are
    CN(0, 1) and angles uniform on [-pi/2, pi/2].
    """
    counts = np.maximum(1, rng.poisson(config.avg_paths, size=config.num_users))
    gains, aoas = [], []
    for count in counts:
        g = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2.0)
        gains.append(g)
        aoas.append(rng.uniform(-np.pi / 2, np.pi / 2, size=count))
    return PathSet(tuple(gains), tuple(aoas))


def assemble_channel(paths: PathSet, geometry: ArrayGeometry) -> MultiUserChannel:
    if paths.num_users == 0:
        raise ValueError("path set has no users")
    n_r = geometry.num_antennas
    columns = []
    for u, (g, a) in enumerate(zip(paths.gains, paths.aoas)):
        if len(g) == 0:
            raise ValueError(f"user {u} has an empty path list")
        steering = _ula_matrix(geometry, a)
        columns.append(np.sqrt(n_r / len(g)) * steering @ np.asarray(g, dtype=complex))
    return MultiUserChannel(np.stack(columns, axis=1), paths)


def draw_channel(config: ChannelEnsembleConfig, rng: np.random.Generator) -> MultiUserChannel:
    return assemble_channel(draw_paths(config, rng), config.geometry)


def left_singular_basis(channel, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Return the ``k`` dominant left-singular vectors and all singular values.

    Parameters
    ----------
    channel : MultiUserChannel or array_like
        N_r x N_u channel.
    k : int
        Number of vectors, ``1 <= k <= min(N_r, N_u)``.

    Returns
    -------
    basis : ndarray, shape (N_r, k)
        Orthonormal columns.
    sigma : ndarray
        Singular values in descending order.
    """
    h = channel.matrix if isinstance(channel, MultiUserChannel) else np.asarray(channel, dtype=complex)
    rank_max = min(h.shape)
    if int(k) != k or not 1 <= k <= rank_max:
        raise ValueError(f"k must be in [1, {rank_max}], got {k}")
    u, s, _ = np.linalg.svd(h, full_matrices=False)
    return u[:, :k], s
