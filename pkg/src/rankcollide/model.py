"""System specifications, ranking, and structural validation.

Particles are named ``1..N`` and ranks run ``1..N`` from the bottom up; all
public indices are 1-based.  Internally arrays are ordinary 0-based numpy
arrays, so ``perm.p[k - 1]`` is the name of the particle with rank ``k``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

__all__ = [
    "InvalidInputError",
    "SpecError",
    "UnsupportedFamilyError",
    "FiniteSystemSpec",
    "InfiniteSystemSpec",
    "InitFamily",
    "RankingPermutation",
    "RankedState",
    "rank_permutation",
    "ranked_values",
    "gaps",
    "validate_finite_spec",
    "validate_infinite_spec",
    "series_condition_holds",
    "spec_from_dict",
    "spec_to_dict",
    "load_spec",
    "dump_spec",
]


class InvalidInputError(ValueError):
    """Raised when an operation receives numerically invalid input."""


class SpecError(ValueError):
    """Malformed spec document; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedFamilyError(ValueError):
    """Initial-configuration family the series rule cannot decide."""


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    return arr


# ----------------------------------------------------------------------------
# ranking
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RankingPermutation:
    """Bijection from ranks to names; ``p[k - 1]`` is the name holding rank k."""

    p: tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.p)

    def name_of(self, rank: int) -> int:
        return self.p[rank - 1]

    def rank_of(self, name: int) -> int:
        return self.p.index(name) + 1

    def as_index(self) -> np.ndarray:
        """0-based name indices ordered by rank."""
        return np.asarray(self.p, dtype=np.intp) - 1


@dataclass(frozen=True)
class RankedState:
    y: tuple[float, ...]
    perm: RankingPermutation


def rank_permutation(x: Sequence[float]) -> RankingPermutation:
    """Sort names by position, breaking exact ties in favour of the lower name.

    A stable sort over names ``1..N`` visited in increasing order gives both
    the ordering property and the lexicographic tie rule at once.
    """
    arr = _as_vector(x, "x")
    if arr.size < 1:
        raise InvalidInputError("x must contain at least one entry")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
        raise InvalidInputError(f"x[{bad}] is not finite")
    order = np.argsort(arr, kind="stable")
    return RankingPermutation(tuple(int(i) + 1 for i in order))


def ranked_values(x: Sequence[float]) -> RankedState:
    perm = rank_permutation(x)
    arr = np.asarray(x, dtype=float)
    y = arr[perm.as_index()]
    return RankedState(tuple(float(v) for v in y), perm)


def gaps(state: RankedState) -> np.ndarray:
    """Adjacent spreads ``Y_{k+1} - Y_k`` for k = 1..N-1."""
    y = np.asarray(state.y, dtype=float)
    if y.size < 2:
        raise InvalidInputError("gaps need at least two particles")
    return np.diff(y)


# ----------------------------------------------------------------------------
# finite systems
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteSystemSpec:
    """Rank-indexed drifts ``g``, diffusions ``sigma2`` and name-indexed ``x0``."""

    N: int
    g: tuple[float, ...]
    sigma2: tuple[float, ...]
    x0: tuple[float, ...]

    @classmethod
    def build(cls, g, sigma2, x0=None) -> "FiniteSystemSpec":
        g = tuple(float(v) for v in g)
        sigma2 = tuple(float(v) for v in sigma2)
        x0 = tuple(float(v) for v in (x0 if x0 is not None else range(len(g))))
        return cls(len(g), g, sigma2, x0)


def validate_finite_spec(spec: FiniteSystemSpec) -> list[str]:
    """Return every violated invariant; an empty list means the spec is valid."""
    problems: list[str] = []
    if not isinstance(spec.N, (int, np.integer)) or spec.N < 2:
        problems.append(f"N must be an integer >= 2 (got {spec.N!r})")
    for name in ("g", "sigma2", "x0"):
        vec = getattr(spec, name)
        if len(vec) != spec.N:
            problems.append(f"{name} has {len(vec)} entries, expected N={spec.N}")
        for k, v in enumerate(vec, start=1):
            if not math.isfinite(v):
                problems.append(f"{name}[{k}] must be finite")
    for k, v in enumerate(spec.sigma2, start=1):
        if math.isfinite(v) and v <= 0:
            problems.append(f"sigma2[{k}] must be > 0")
    return problems


# ----------------------------------------------------------------------------
# infinite systems
# ----------------------------------------------------------------------------

_TAIL_KINDS = ("linear", "power", "log")


@dataclass(frozen=True)
class InitFamily:
    """Initial configuration ``x_i`` for i = 1, 2, ...

    kinds:
      linear    x_i = a + b*i
      power     x_i = c * i**gamma
      log       x_i = c * log(i + 1)**beta
      explicit  x_1..x_m given by ``prefix``, later entries from ``tail``
    """

    kind: str
    params: dict[str, float] = field(default_factory=dict)
    prefix: tuple[float, ...] = ()
    tail: "InitFamily | None" = None

    def positions(self, count: int) -> np.ndarray:
        i = np.arange(1, count + 1, dtype=float)
        p = self.params
        if self.kind == "linear":
            return p.get("a", 0.0) + p["b"] * i
        if self.kind == "power":
            return p["c"] * i ** p["gamma"]
        if self.kind == "log":
            return p["c"] * np.log(i + 1.0) ** p["beta"]
        if self.kind == "explicit":
            if self.tail is None:
                raise UnsupportedFamilyError("explicit family needs a tail rule")
            head = np.asarray(self.prefix[:count], dtype=float)
            rest = self.tail.positions(count)[len(head):]
            return np.concatenate([head, rest])
        raise UnsupportedFamilyError(f"unknown initial family {self.kind!r}")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, **self.params}
        if self.kind == "explicit":
            out["prefix"] = list(self.prefix)
            out["tail"] = self.tail.to_dict() if self.tail else None
        return out

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "InitFamily":
        if not isinstance(doc, dict) or "kind" not in doc:
            raise SpecError("init", "must be an object with a 'kind' key")
        kind = doc["kind"]
        if kind == "explicit":
            if "tail" not in doc or doc["tail"] is None:
                raise SpecError("init.tail", "explicit family needs a tail rule")
            return cls(
                "explicit",
                prefix=tuple(float(v) for v in doc.get("prefix", ())),
                tail=cls.from_dict(doc["tail"]),
            )
        required = {"linear": ("b",), "power": ("c", "gamma"), "log": ("c", "beta")}
        if kind not in required:
            raise UnsupportedFamilyError(f"unknown initial family {kind!r}")
        params = {}
        for key, value in doc.items():
            if key == "kind":
                continue
            try:
                params[key] = float(value)
            except (TypeError, ValueError):
                raise SpecError(f"init.{key}", "must be a number") from None
        for key in required[kind]:
            if key not in params:
                raise SpecError(f"init.{key}", f"required for {kind} family")
        return cls(kind, params)


def series_condition_holds(init: InitFamily) -> bool:
    """Decide whether sum_i exp(-alpha x_i^2) < inf for every alpha > 0.

    The sum is finite for every alpha exactly when x_i^2 / log(i) -> inf,
    which each family below settles in closed form.  Parameters outside
    the family's domain are reported as failures.
    """
    p = init.params
    if init.kind == "linear":
        return p["b"] > 0
    if init.kind == "power":
        return p["c"] > 0 and p["gamma"] > 0
    if init.kind == "log":
        # x_i^2 = c^2 log(i+1)^(2 beta): beats log(i) only when 2*beta > 1;
        # at beta = 1/2 the sum is the p-series sum (i+1)^(-alpha c^2).
        return p["c"] > 0 and p["beta"] > 0.5
    if init.kind == "explicit":
        if init.tail is None:
            raise UnsupportedFamilyError("explicit family needs a tail rule")
        if not all(math.isfinite(v) for v in init.prefix):
            return False
        return series_condition_holds(init.tail)
    raise UnsupportedFamilyError(f"unknown initial family {init.kind!r}")


@dataclass(frozen=True)
class InfiniteSystemSpec:
    """Head coefficients for ranks 1..n0-1 and constant coefficients from n0 on."""

    n0: int
    g_head: tuple[float, ...]
    sigma2_head: tuple[float, ...]
    g_tail: float
    sigma2_tail: float
    init: InitFamily

    def drift(self, count: int) -> np.ndarray:
        return self._coeffs(self.g_head, self.g_tail, count)

    def diffusion(self, count: int) -> np.ndarray:
        return self._coeffs(self.sigma2_head, self.sigma2_tail, count)

    @staticmethod
    def _coeffs(head, tail, count):
        out = np.full(count, float(tail))
        m = min(count, len(head))
        out[:m] = head[:m]
        return out

    def truncate(self, M: int) -> FiniteSystemSpec:
        """Finite system made of the lowest M ranks and the first M names."""
        return FiniteSystemSpec(
            M,
            tuple(self.drift(M).tolist()),
            tuple(self.diffusion(M).tolist()),
            tuple(self.init.positions(M).tolist()),
        )


class GateViolation(str):
    """Violation message tagged with the gate it belongs to."""

    gate: str

    def __new__(cls, gate: str, message: str):
        obj = super().__new__(cls, message)
        obj.gate = gate
        return obj


def validate_infinite_spec(spec: InfiniteSystemSpec) -> list[GateViolation]:
    """Check coefficient bounds, tail structure and the initial series condition.

    Each violation carries a ``gate`` attribute: ``"bounded"`` for the
    sup-bounds on drifts and diffusions, ``"tail"`` for the eventually
    constant coefficient structure and ``"series"`` for the Gaussian series
    condition on the initial configuration.
    """
    out: list[GateViolation] = []
    if not isinstance(spec.n0, (int, np.integer)) or spec.n0 < 1:
        out.append(GateViolation("tail", f"n0 must be an integer >= 1 (got {spec.n0!r})"))
    else:
        for name in ("g_head", "sigma2_head"):
            vec = getattr(spec, name)
            if len(vec) != spec.n0 - 1:
                out.append(GateViolation(
                    "tail", f"{name} has {len(vec)} entries, expected n0-1={spec.n0 - 1}"))
    for name in ("g_head", "sigma2_head"):
        for k, v in enumerate(getattr(spec, name), start=1):
            if not math.isfinite(v):
                out.append(GateViolation("bounded", f"{name}[{k}] must be finite"))
            elif name == "sigma2_head" and v <= 0:
                out.append(GateViolation("bounded", f"sigma2_head[{k}] must be > 0"))
    if not math.isfinite(spec.g_tail):
        out.append(GateViolation("bounded", "g_tail must be finite"))
    if not math.isfinite(spec.sigma2_tail):
        out.append(GateViolation("bounded", "sigma2_tail must be finite"))
    elif spec.sigma2_tail <= 0:
        out.append(GateViolation("bounded", "sigma2_tail must be > 0"))
    if not series_condition_holds(spec.init):
        out.append(GateViolation(
            "series", f"initial family {spec.init.to_dict()} violates "
                      "sum exp(-alpha x_i^2) < inf for some alpha > 0"))
    return out


# ----------------------------------------------------------------------------
# JSON documents
# ----------------------------------------------------------------------------


def _number_list(doc: dict, key: str) -> tuple[float, ...]:
    if key not in doc:
        raise SpecError(key, "missing")
    value = doc[key]
    if not isinstance(value, list):
        raise SpecError(key, "must be a list of numbers")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise SpecError(key, "must be a list of numbers") from None


def _number(doc: dict, key: str) -> float:
    if key not in doc:
        raise SpecError(key, "missing")
    try:
        return float(doc[key])
    except (TypeError, ValueError):
        raise SpecError(key, "must be a number") from None


def spec_from_dict(doc: dict[str, Any]) -> FiniteSystemSpec | InfiniteSystemSpec:
    if not isinstance(doc, dict):
        raise SpecError("<root>", "spec document must be a JSON object")
    if "n0" in doc:
        n0 = doc["n0"]
        if not isinstance(n0, int) or isinstance(n0, bool):
            raise SpecError("n0", "must be an integer")
        if "init" not in doc:
            raise SpecError("init", "missing")
        return InfiniteSystemSpec(
            n0=n0,
            g_head=_number_list(doc, "g_head"),
            sigma2_head=_number_list(doc, "sigma2_head"),
            g_tail=_number(doc, "g_tail"),
            sigma2_tail=_number(doc, "sigma2_tail"),
            init=InitFamily.from_dict(doc["init"]),
        )
    sigma2 = _number_list(doc, "sigma2")
    N = doc.get("N", len(sigma2))
    if not isinstance(N, int) or isinstance(N, bool):
        raise SpecError("N", "must be an integer")
    g = _number_list(doc, "g") if "g" in doc else (0.0,) * N
    x0 = _number_list(doc, "x0") if "x0" in doc else tuple(float(i) for i in range(N))
    return FiniteSystemSpec(N, g, sigma2, x0)


def spec_to_dict(spec: FiniteSystemSpec | InfiniteSystemSpec) -> dict[str, Any]:
    if isinstance(spec, FiniteSystemSpec):
        return {"N": spec.N, "g": list(spec.g), "sigma2": list(spec.sigma2),
                "x0": list(spec.x0)}
    return {
        "n0": spec.n0,
        "g_head": list(spec.g_head),
        "sigma2_head": list(spec.sigma2_head),
        "g_tail": spec.g_tail,
        "sigma2_tail": spec.sigma2_tail,
        "init": spec.init.to_dict(),
    }


def load_spec(path: str | Path) -> FiniteSystemSpec | InfiniteSystemSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError("<root>", f"invalid JSON ({exc})") from None
    return spec_from_dict(doc)


def dump_spec(spec: FiniteSystemSpec | InfiniteSystemSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n", encoding="utf-8")
