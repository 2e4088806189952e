"""Stream sources: ARFF/CSV loaders and seeded synthetic generators.

Loaders return single-pass iterators; nothing is buffered beyond the current
row.  Missing values are rejected.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

from .core import Attribute, DomainError, Instance, RngStream, Schema


class ParseError(DomainError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    instance_count: int
    feature_count: int
    nominal_count: int
    normalized: bool
    class_count: int

    def __post_init__(self):
        if self.nominal_count > self.feature_count:
            raise DomainError("nominal_count cannot exceed feature_count")

    def matches(self, other: "DatasetDescriptor", count_tolerance: float = 0.01) -> bool:
        return (abs(self.instance_count - other.instance_count) <= count_tolerance * self.instance_count
                and self.feature_count == other.feature_count
                and self.nominal_count == other.nominal_count
                and self.class_count == other.class_count)


# The four benchmark streams, as summarised in the original experiments.
BENCHMARK_DATASETS = {
    "airlines": DatasetDescriptor("airlines", 540_000, 7, 4, False, 2),
    "gmsc": DatasetDescriptor("gmsc", 150_000, 10, 0, False, 2),
    "electricity": DatasetDescriptor("electricity", 45_000, 8, 1, True, 2),
    "covertype": DatasetDescriptor("covertype", 581_000, 54, 45, True, 7),
}


def describe(name: str, schema: Schema, instances) -> DatasetDescriptor:
    """Count a stream and summarise it (consumes the iterator)."""
    n = 0
    normalized = True
    numeric = schema.numeric_indices
    for x in instances:
        n += 1
        if normalized:
            for i in numeric:
                if not (0.0 <= x.values[i] <= 1.0):
                    normalized = False
                    break
    return DatasetDescriptor(name, n, schema.n_features, len(schema.nominal_indices),
                             normalized, schema.n_classes)


# --- ARFF ---------------------------------------------------------------------

def _split_row(line: str) -> List[str]:
    return [f.strip().strip("'\"") for f in next(csv.reader([line], skipinitialspace=True,
                                                                quotechar="'"))]


def _parse_attribute(rest: str, lineno: int) -> Attribute:
    rest = rest.strip()
    if rest[0] in "'\"":
        q = rest[0]
        end = rest.index(q, 1)
        name, kind = rest[1:end], rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise ParseError(f"malformed @attribute declaration {rest!r}", lineno)
        name, kind = parts
    if kind.startswith("{"):
        if not kind.endswith("}"):
            raise ParseError(f"unterminated nominal value list for {name!r}", lineno)
        values = tuple(v for v in _split_row(kind[1:-1]) if v != "")
        if not values:
            raise ParseError(f"empty nominal value list for {name!r}", lineno)
        return Attribute(name, values)
    if kind.lower() in ("numeric", "real", "integer"):
        return Attribute(name)
    raise ParseError(f"unsupported attribute type {kind!r} for {name!r}", lineno)


def load_arff(path, class_attribute: Optional[str] = None) -> Tuple[Schema, Iterator[Instance]]:
    """Parse an ARFF header and return ``(schema, instances)``.

    The class attribute defaults to the last declared attribute and must be
    nominal.
    """
    fh = open(path)
    attrs: List[Attribute] = []
    lineno = 0
    try:
        for raw in fh:
            lineno += 1
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            low = line.lower()
            if low.startswith("@relation"):
                continue
            if low.startswith("@attribute"):
                attrs.append(_parse_attribute(line[len("@attribute"):], lineno))
                continue
            if low.startswith("@data"):
                break
            raise ParseError(f"unexpected header line {line!r}", lineno)
        else:
            raise ParseError("no @data section", lineno)
        if len(attrs) < 2:
            raise ParseError("need at least one feature and a class attribute", lineno)
        names = [a.name for a in attrs]
        cidx = len(attrs) - 1 if class_attribute is None else names.index(class_attribute)
        cls = attrs[cidx]
        if not cls.is_nominal:
            raise ParseError(f"class attribute {cls.name!r} must be nominal", lineno)
        features = [a for i, a in enumerate(attrs) if i != cidx]
        schema = Schema(tuple(features), cls.values)
    except Exception:
        fh.close()
        raise
    return schema, _arff_rows(fh, lineno, attrs, cidx, schema)


def _arff_rows(fh, lineno, attrs, cidx, schema) -> Iterator[Instance]:
    codes = [{v: k for k, v in enumerate(a.values)} if a.is_nominal else None for a in attrs]
    n = len(attrs)
    with fh:
        for raw in fh:
            lineno += 1
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if line.startswith("{"):
                raise ParseError("sparse rows are not supported", lineno)
            fields = _split_row(line)
            if len(fields) != n:
                raise ParseError(f"expected {n} values, found {len(fields)}", lineno)
            values = []
            label = None
            for i, (f, code) in enumerate(zip(fields, codes)):
                if f == "?":
                    raise ParseError(f"missing value for {attrs[i].name!r}", lineno)
                if code is not None:
                    try:
                        v = code[f]
                    except KeyError:
                        raise ParseError(f"unknown value {f!r} for {attrs[i].name!r}", lineno) from None
                else:
                    try:
                        v = float(f)
                    except ValueError:
                        raise ParseError(f"bad numeric value {f!r} for {attrs[i].name!r}", lineno) from None
                if i == cidx:
                    label = v
                else:
                    values.append(v)
            yield Instance(tuple(values), label)


# --- CSV ----------------------------------------------------------------------

def load_schema(path) -> Schema:
    with open(path) as fh:
        return Schema.from_dict(json.load(fh))


def load_csv(path, schema: Schema, header: bool = True) -> Iterator[Instance]:
    """Rows of feature values followed by the class label, typed by ``schema``."""
    codes = [{v: k for k, v in enumerate(a.values)} if a.is_nominal else None
             for a in schema.attributes]
    label_codes = {v: k for k, v in enumerate(schema.class_values)}
    n = schema.n_features + 1
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            lineno = reader.line_num
            if header and lineno == 1:
                continue
            if not row:
                continue
            if len(row) != n:
                raise ParseError(f"expected {n} columns, found {len(row)}", lineno)
            values = []
            for i, (f, code) in enumerate(zip(row, codes)):
                f = f.strip()
                if f in ("", "?"):
                    raise ParseError(f"missing value for {schema.attributes[i].name!r}", lineno)
                if code is not None:
                    if f not in code:
                        raise ParseError(f"unknown nominal value {f!r} for "
                                         f"{schema.attributes[i].name!r}", lineno)
                    values.append(code[f])
                else:
                    try:
                        values.append(float(f))
                    except ValueError:
                        raise ParseError(f"bad numeric value {f!r}", lineno) from None
            lab = row[-1].strip()
            if lab not in label_codes:
                raise ParseError(f"unknown class value {lab!r}", lineno)
            yield Instance(tuple(values), label_codes[lab])


def write_csv(path, schema: Schema, instances) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([a.name for a in schema.attributes] + ["class"])
        for x in instances:
            row = [schema.attributes[i].values[v] if schema.attributes[i].is_nominal else repr(v)
                   for i, v in enumerate(x.values)]
            w.writerow(row + [schema.class_values[x.label]])


# --- synthetic streams --------------------------------------------------------

GENERATORS = ("threshold_concept", "rotating_hyperplane", "abrupt_bernoulli_drift", "agrawal_like")


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str
    n: int
    noise: float = 0.0
    drift_points: Tuple[int, ...] = ()
    seed: int = 1
    n_features: int = 4

    def __post_init__(self):
        object.__setattr__(self, "drift_points", tuple(self.drift_points))
        if self.generator not in GENERATORS:
            raise DomainError(f"unknown generator {self.generator!r}")
        if self.n < 0:
            raise DomainError("n must be non-negative")
        if not (0.0 <= self.noise <= 1.0):
            raise DomainError("noise must lie in [0, 1]")
        d = self.drift_points
        if any(b <= a for a, b in zip(d, d[1:])):
            raise DomainError("drift_points must be strictly increasing")
        if d and (d[0] < 0 or d[-1] >= max(self.n, 1)):
            raise DomainError("drift_points must lie in [0, n)")
        if self.n_features < 1:
            raise DomainError("n_features must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls(**json.loads(text))


def _segment_of(i: int, drift_points: Sequence[int], current: int) -> int:
    while current < len(drift_points) and i >= drift_points[current]:
        current += 1
    return current


def generate(spec: SyntheticSpec) -> Tuple[Schema, Iterator[Instance]]:
    if spec.generator == "agrawal_like":
        schema = _AGRAWAL_SCHEMA
    else:
        schema = Schema(tuple(Attribute(f"x{i}") for i in range(spec.n_features)), ("0", "1"))
    return schema, _GENERATOR_IMPL[spec.generator](spec)


def _threshold(spec: SyntheticSpec):
    rng = RngStream(spec.seed, ("synthetic", spec.generator))
    seg = 0
    for i in range(spec.n):
        seg = _segment_of(i, spec.drift_points, seg)
        x = tuple(rng.random() for _ in range(spec.n_features))
        y = 1 if x[0] > 0.5 else 0
        if seg % 2:
            y = 1 - y
        if spec.noise and rng.random() < spec.noise:
            y = 1 - y
        yield Instance(x, y)


def _abrupt_bernoulli(spec: SyntheticSpec):
    """Class-1 prior alternates 0.2 / 0.8 between drift points; y = [x0 > 1 - prior]."""
    rng = RngStream(spec.seed, ("synthetic", spec.generator))
    seg = 0
    for i in range(spec.n):
        seg = _segment_of(i, spec.drift_points, seg)
        prior = 0.8 if seg % 2 else 0.2
        x = tuple(rng.random() for _ in range(spec.n_features))
        y = 1 if x[0] > 1.0 - prior else 0
        if spec.noise and rng.random() < spec.noise:
            y = 1 - y
        yield Instance(x, y)


def _hyperplane(spec: SyntheticSpec):
    rng = RngStream(spec.seed, ("synthetic", spec.generator))
    d = spec.n_features
    weights = [rng.random() for _ in range(d)]
    seg = 0
    for i in range(spec.n):
        new_seg = _segment_of(i, spec.drift_points, seg)
        if new_seg != seg:
            weights = [rng.random() for _ in range(d)]
            seg = new_seg
        x = tuple(rng.random() for _ in range(d))
        y = 1 if sum(w * v for w, v in zip(weights, x)) > 0.5 * sum(weights) else 0
        if spec.noise and rng.random() < spec.noise:
            y = 1 - y
        yield Instance(x, y)


_AGRAWAL_SCHEMA = Schema((
    Attribute("salary"), Attribute("commission"), Attribute("age"),
    Attribute("elevel", tuple(str(i) for i in range(5))),
    Attribute("car", tuple(str(i) for i in range(1, 21))),
    Attribute("zipcode", tuple(str(i) for i in range(9))),
    Attribute("hvalue"), Attribute("hyears"), Attribute("loan"),
), ("groupA", "groupB"))


def _agrawal_fn(k: int, v) -> int:
    salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan = v
    if k == 0:
        a = age < 40 or age >= 60
    elif k == 1:
        a = ((age < 40 and 50_000 <= salary <= 100_000)
             or (40 <= age < 60 and 75_000 <= salary <= 125_000)
             or (age >= 60 and 25_000 <= salary <= 75_000))
    elif k == 2:
        a = ((age < 40 and elevel <= 1) or (40 <= age < 60 and 1 <= elevel <= 3)
             or (age >= 60 and 2 <= elevel <= 4))
    else:
        disposable = 0.67 * (salary + commission) - 0.2 * loan - 20_000
        a = disposable > 0
    return 0 if a else 1


def _agrawal(spec: SyntheticSpec):
    rng = RngStream(spec.seed, ("synthetic", spec.generator))
    seg = 0
    for i in range(spec.n):
        seg = _segment_of(i, spec.drift_points, seg)
        salary = rng.uniform(20_000, 150_000)
        commission = 0.0 if salary >= 75_000 else rng.uniform(10_000, 75_000)
        age = float(20 + rng.randrange(61))
        elevel = rng.randrange(5)
        car = rng.randrange(20)
        zipcode = rng.randrange(9)
        hvalue = (9 - zipcode) * 100_000 * rng.uniform(0.5, 1.5)
        hyears = float(1 + rng.randrange(30))
        loan = rng.uniform(0, 500_000)
        v = (salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan)
        y = _agrawal_fn(seg % 4, v)
        if spec.noise and rng.random() < spec.noise:
            y = 1 - y
        yield Instance(v, y)


_GENERATOR_IMPL = {
    "threshold_concept": _threshold,
    "abrupt_bernoulli_drift": _abrupt_bernoulli,
    "rotating_hyperplane": _hyperplane,
    "agrawal_like": _agrawal,
}
