"""Finite probability spaces, densities and the elementary functionals on them.

Every measure is stored as its density with respect to the reference
weights ``mu`` (so ``E_P[X] = sum_i mu_i * g_i * x_i``).  Arrays are frozen
on construction; all functions here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import DimensionError, InvalidInputError

WEIGHT_SUM_TOL = 1e-12
DENSITY_MASS_TOL = 1e-10


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must contain finite numbers only")
    arr.setflags(write=False)
    return arr


class FiniteProbSpace:
    """Atoms with strictly positive reference weights summing to one."""

    __slots__ = ("labels", "mu")

    def __init__(self, mu: Sequence[float], labels: Sequence | None = None):
        mu = _frozen(mu, "mu")
        if mu.size == 0:
            raise InvalidInputError("a space needs at least one atom")
        if np.any(mu <= 0.0):
            raise InvalidInputError("reference weights must be strictly positive")
        if abs(mu.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInputError(f"reference weights sum to {mu.sum()!r}, not 1")
        if labels is None:
            labels = tuple(str(i) for i in range(mu.size))
        labels = tuple(labels)
        if len(labels) != mu.size:
            raise DimensionError("one label per atom is required")
        if len(set(labels)) != len(labels):
            raise InvalidInputError("atom labels must be distinct")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mu", mu)

    def __setattr__(self, name, value):
        raise AttributeError("FiniteProbSpace is immutable")

    @property
    def n(self) -> int:
        return self.mu.size

    def __len__(self) -> int:
        return self.mu.size

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, FiniteProbSpace):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.mu, other.mu)

    def __hash__(self) -> int:
        return hash((self.labels, self.mu.tobytes()))

    def __repr__(self) -> str:
        return f"FiniteProbSpace(mu={self.mu.tolist()}, labels={list(self.labels)})"

    @classmethod
    def uniform(cls, n: int) -> "FiniteProbSpace":
        return cls(np.full(n, 1.0 / n))

    def density(self, values) -> "DensityVector":
        return DensityVector(self, values)

    def density_from_probabilities(self, probs) -> "DensityVector":
        """Density of the measure with the given atom probabilities."""
        probs = np.asarray(probs, dtype=float)
        return DensityVector(self, probs / self.mu)

    def variable(self, values) -> "RandomVariable":
        return RandomVariable(self, values)

    def reference(self) -> "DensityVector":
        """Density of mu itself (identically one)."""
        return DensityVector(self, np.ones(self.n))


def _check_length(space: FiniteProbSpace, values: np.ndarray, what: str) -> None:
    if values.size != space.n:
        raise DimensionError(f"{what} has {values.size} entries, space has {space.n} atoms")


@dataclass(frozen=True, eq=False)
class DensityVector:
    """Radon-Nikodym derivative dP/dmu of a probability measure P << mu."""

    space: FiniteProbSpace
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, "density")
        _check_length(self.space, values, "density")
        if np.any(values < 0.0):
            raise InvalidInputError("density values must be nonnegative")
        mass = float(self.space.mu @ values)
        if abs(mass - 1.0) > DENSITY_MASS_TOL:
            raise InvalidInputError(f"density integrates to {mass!r} under mu, not 1")
        object.__setattr__(self, "values", values)

    @property
    def weights(self) -> np.ndarray:
        """Atom probabilities P({i}) = mu_i * g_i."""
        return self.space.mu * self.values

    def __eq__(self, other) -> bool:
        if not isinstance(other, DensityVector):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.space, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class RandomVariable:
    """A bounded payoff X on a finite space."""

    space: FiniteProbSpace
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, "random variable")
        _check_length(self.space, values, "random variable")
        object.__setattr__(self, "values", values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RandomVariable):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash((self.space, self.values.tobytes()))

    def __add__(self, other):
        if isinstance(other, RandomVariable):
            _same_space(self.space, other.space)
            return RandomVariable(self.space, self.values + other.values)
        return RandomVariable(self.space, self.values + float(other))

    __radd__ = __add__

    def __mul__(self, scalar):
        return RandomVariable(self.space, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return RandomVariable(self.space, -self.values)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other


def _same_space(a: FiniteProbSpace, b: FiniteProbSpace) -> None:
    if a is not b and a != b:
        raise DimensionError("operands are defined on different spaces")


def expectation(density: DensityVector, x: RandomVariable) -> float:
    """E_P[X] = sum_i mu_i * g_i * x_i."""
    _same_space(density.space, x.space)
    return float(density.weights @ x.values)


def kl_divergence(q: DensityVector, q0: DensityVector) -> float:
    """Relative entropy of Q with respect to Q0; ``inf`` unless Q << Q0."""
    _same_space(q.space, q0.space)
    return float(np.sum(rel_entr(q.weights, q0.weights)))


class Partition(NamedTuple):
    greater: tuple[int, ...]
    equal: tuple[int, ...]
    less: tuple[int, ...]


def partition_arrays(g: np.ndarray, h: np.ndarray, z: float, tau_eq: float = 1e-9) -> Partition:
    scaled = z * h
    diff = scaled - g
    scale = np.maximum.reduce([np.abs(scaled), np.abs(g), np.ones_like(g)])
    equal = np.abs(diff) <= tau_eq * scale
    greater = (diff > 0) & ~equal
    less = (diff < 0) & ~equal
    idx = np.arange(g.size)
    return Partition(tuple(idx[greater].tolist()), tuple(idx[equal].tolist()), tuple(idx[less].tolist()))


def likelihood_ratio_partition(g: DensityVector, h: DensityVector, z: float, tau_eq: float = 1e-9) -> Partition:
    """Split atoms by the sign of ``z*h_i - g_i`` into greater / equal / less.

    The equality band is ``tau_eq`` after normalizing by ``max(|z h_i|, |g_i|, 1)``.
    """
    _same_space(g.space, h.space)
    if not np.isfinite(z) or z < 0:
        raise InvalidInputError("threshold z must be finite and nonnegative")
    return partition_arrays(g.values, h.values, float(z), tau_eq)
