"""Stream data model: schemas, instances, predictions and seeded randomness."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence


class DomainError(ValueError):
    """Raised when an operation receives arguments outside its domain."""


@dataclass(frozen=True)
class Attribute:
    name: str
    values: Optional[tuple] = None  # None means numeric

    @property
    def is_nominal(self) -> bool:
        return self.values is not None


@dataclass(frozen=True)
class Schema:
    attributes: tuple
    class_values: tuple
    nominal_indices: tuple = field(init=False, repr=False)
    numeric_indices: tuple = field(init=False, repr=False)

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "class_values", tuple(self.class_values))
        names = [a.name for a in attrs]
        if len(set(names)) != len(names):
            raise DomainError("attribute names must be unique")
        if len(self.class_values) < 2:
            raise DomainError("schema needs at least two class values")
        for a in attrs:
            if a.is_nominal and len(a.values) == 0:
                raise DomainError(f"nominal attribute {a.name!r} has no values")
        object.__setattr__(
            self, "nominal_indices", tuple(i for i, a in enumerate(attrs) if a.is_nominal)
        )
        object.__setattr__(
            self, "numeric_indices", tuple(i for i, a in enumerate(attrs) if not a.is_nominal)
        )

    @property
    def n_features(self) -> int:
        return len(self.attributes)

    @property
    def n_classes(self) -> int:
        return len(self.class_values)

    def validate(self, inst: "Instance") -> None:
        if len(inst.values) != len(self.attributes):
            raise DomainError(
                f"instance has {len(inst.values)} values, schema has {len(self.attributes)}"
            )
        for i in self.nominal_indices:
            v = inst.values[i]
            if not (isinstance(v, int) and 0 <= v < len(self.attributes[i].values)):
                raise DomainError(f"nominal index {v!r} out of range for {self.attributes[i].name!r}")
        if not (0 <= inst.label < len(self.class_values)):
            raise DomainError(f"label {inst.label} out of range")

    def to_dict(self) -> dict:
        attrs = []
        for a in self.attributes:
            if a.is_nominal:
                attrs.append({"name": a.name, "kind": "nominal", "values": list(a.values)})
            else:
                attrs.append({"name": a.name, "kind": "numeric"})
        return {"attributes": attrs, "class_values": list(self.class_values)}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        attrs = []
        for a in d["attributes"]:
            if a.get("kind", "numeric") == "nominal":
                attrs.append(Attribute(a["name"], tuple(a["values"])))
            else:
                attrs.append(Attribute(a["name"]))
        return cls(tuple(attrs), tuple(d["class_values"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class Instance(NamedTuple):
    values: tuple
    label: int


class Prediction(NamedTuple):
    votes: tuple

    @property
    def label(self) -> int:
        return argmax_class(self)


def argmax_class(p) -> int:
    """Index of the largest vote, lowest index on ties."""
    votes = p.votes if isinstance(p, Prediction) else p
    if len(votes) == 0:
        raise DomainError("empty vote vector")
    best = 0
    best_v = votes[0]
    for i in range(1, len(votes)):
        if votes[i] > best_v:
            best_v = votes[i]
            best = i
    return best


def _derive_seed(seed: int, stream_id) -> int:
    key = f"{int(seed)}|{stream_id!r}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


class RngStream:
    """Deterministic substream keyed by ``(seed, stream_id)``.

    ``stream_id`` may be any value with a stable ``repr`` (ints, tuples of ints).
    """

    __slots__ = ("seed", "stream_id", "_rng", "draws")

    def __init__(self, seed: int, stream_id=0):
        self.seed = int(seed)
        self.stream_id = stream_id
        self._rng = random.Random(_derive_seed(seed, stream_id))
        self.draws = 0

    def random(self) -> float:
        self.draws += 1
        return self._rng.random()

    def randrange(self, n: int) -> int:
        self.draws += 1
        return self._rng.randrange(n)

    def sample(self, population: Sequence, k: int) -> list:
        self.draws += 1
        return self._rng.sample(list(population), k)

    def uniform(self, a: float, b: float) -> float:
        self.draws += 1
        return self._rng.uniform(a, b)

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        self.draws += 1
        return self._rng.gauss(mu, sigma)

    def getstate(self):
        return (self.draws, self._rng.getstate())


_KNUTH_LIMIT = 30.0


def poisson_sample(rng: RngStream, lam: float) -> int:
    """Draw k ~ Poisson(lam).

    Knuth's multiplication method up to lam=30; larger rates are split into
    independent Poisson(30) chunks, which keeps the draw exact.
    """
    if lam < 0 or math.isnan(lam):
        raise DomainError(f"Poisson rate must be non-negative, got {lam}")
    if lam == 0:
        return 0
    total = 0
    while lam > _KNUTH_LIMIT:
        total += _knuth(rng, _KNUTH_LIMIT)
        lam -= _KNUTH_LIMIT
    return total + _knuth(rng, lam)


def _knuth(rng: RngStream, lam: float) -> int:
    limit = math.exp(-lam)
    rand = rng._rng.random
    k = 0
    p = rand()
    draws = 1
    while p > limit:
        k += 1
        p *= rand()
        draws += 1
    rng.draws += draws
    return k
