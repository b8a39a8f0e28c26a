"""Sufficient conditions for absence of multiple collisions.

Every checker returns a :class:`ConditionReport` whose ``margin`` is
``RHS - LHS`` of the governing inequality, so positive means satisfied with
room to spare and compound reports compose by taking the minimum.
Margins are evaluated in exact rational arithmetic on the given floats and
rounded once at the end, so boundary cases such as ``max == (N-1)/2 * min``
are decided exactly, without an epsilon.

Known ambiguities in the source inequalities, handled here:

* the concavity display repeats ``sigma_{k-1}^2`` twice; the intended
  neighbour average ``(sigma_{k-1}^2 + sigma_{k+1}^2) / 2`` is used;
* the max-versus-sum bound is printed with ``<=`` for general N but with
  ``<`` in its four-particle form; ``cor22_check`` defaults to strict and
  takes an override;
* the max/min bound for n-tuple collisions is taken over all N
  coefficients, not only the first n.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .model import InfiniteSystemSpec, InvalidInputError, validate_infinite_spec

__all__ = [
    "CRITERIA",
    "ConditionReport",
    "PreconditionError",
    "WindowPair",
    "concavity_check",
    "pi_max",
    "lemma21_check",
    "cor22_check",
    "eq_total4_check",
    "cor24_check",
    "thm11_check",
    "window_total_check",
    "no_rank_collision_check",
    "no_ntuple_check",
    "four_particle_report",
    "infinite_ntuple_check",
    "reports_to_json",
    "reports_to_csv",
]

CRITERIA = (
    "CONCAVITY", "LEMMA21", "COR22", "EQ_TOTAL4", "COR24", "THM11",
    "LEMMA31A", "LEMMA31B", "LEMMA31C", "WINDOW_REDUCTION", "THM42",
)

# Inequality sense as printed for each criterion.
PRINTED_STRICT = {
    "CONCAVITY": False,
    "LEMMA21": True,
    "COR22": False,
    "EQ_TOTAL4": True,
    "COR24": False,
    "THM11": True,
    "THM42": True,
}


class PreconditionError(ValueError):
    """An infinite-system spec failed a validity gate; ``gate`` names it."""

    def __init__(self, gate: str, message: str):
        super().__init__(f"{gate}: {message}")
        self.gate = gate


@dataclass(frozen=True)
class ConditionReport:
    criterion: str
    holds: bool
    margin: float
    strict: bool
    details: tuple["ConditionReport", ...] = ()
    label: str | None = None
    inputs: dict[str, Any] = field(default_factory=dict)
    note: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "criterion": self.criterion,
            "holds": self.holds,
            "margin": self.margin,
            "strict": self.strict,
            "details": [d.to_dict() for d in self.details],
        }
        if self.label is not None:
            out["label"] = self.label
        if self.inputs:
            out["inputs"] = self.inputs
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class WindowPair:
    """Rank window ``l_minus..l_plus`` (1-based, inclusive)."""

    l_minus: int
    l_plus: int

    def __post_init__(self):
        if not 1 <= self.l_minus < self.l_plus:
            raise InvalidInputError(
                f"window needs 1 <= l_minus < l_plus (got {self.l_minus}, {self.l_plus})")

    def check_within(self, N: int) -> None:
        if self.l_plus > N:
            raise InvalidInputError(f"window ({self.l_minus}, {self.l_plus}) exceeds N={N}")


def _sigma2(values: Sequence[float], min_len: int = 2) -> np.ndarray:
    s = np.asarray(values, dtype=float)
    if s.ndim != 1 or s.size < min_len:
        raise InvalidInputError(f"need at least {min_len} diffusion coefficients")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise InvalidInputError("diffusion coefficients must be finite and > 0")
    return s


def _q(values) -> list[Fraction]:
    return [Fraction(float(v)) for v in values]


def _verdict(margin, strict: bool) -> bool:
    return margin > 0 if strict else margin >= 0


def _report(criterion, margin, strict, *, label=None, inputs=None, details=()):
    # margin may be an exact Fraction; the verdict is taken before rounding
    printed = PRINTED_STRICT.get(criterion)
    note = None
    if printed is not None and printed != strict:
        note = f"strictness overridden: printed sense is {'<' if printed else '<='}"
    return ConditionReport(criterion, bool(_verdict(margin, strict)), float(margin), bool(strict),
                           tuple(details), label, inputs or {}, note)


def _combine(criterion: str, subs: Sequence[ConditionReport], *, label=None,
             inputs=None) -> ConditionReport:
    """Conjunction of sub-reports.

    The margin is the smallest sub-margin; when several sub-checks tie at the
    minimum the combined report is strict if any of them is, which keeps
    ``holds`` consistent with the margin/strict rule.
    """
    if not subs:
        raise InvalidInputError("nothing to combine")
    margin = min(r.margin for r in subs)
    strict = any(r.strict for r in subs if r.margin == margin)
    holds = all(r.holds for r in subs)
    return ConditionReport(criterion, holds, float(margin), strict, tuple(subs), label,
                           inputs or {})


# ----------------------------------------------------------------------------
# single-vector criteria
# ----------------------------------------------------------------------------


def concavity_check(sigma2, strict: bool = False) -> ConditionReport:
    """Triple-collision criterion: sigma2 concave in the rank."""
    s = _sigma2(sigma2, 3)
    q = _q(s)
    slack = min(q[k] - (q[k - 1] + q[k + 1]) / 2 for k in range(1, len(q) - 1))
    return _report("CONCAVITY", slack, strict, inputs={"sigma2": s.tolist()})


def _hyperplane_basis(N: int) -> np.ndarray:
    # Householder reflection H sending e_1 to the unit all-ones vector; H is
    # symmetric and orthogonal, so its remaining columns span {sum x = 0}.
    ones = np.full(N, 1.0 / np.sqrt(N))
    u = ones.copy()
    u[0] -= 1.0
    u /= np.linalg.norm(u)
    H = np.eye(N) - 2.0 * np.outer(u, u)
    return H[:, 1:]


def pi_max(sigma2) -> float:
    """Maximum of sum_k sigma2[k] x_k^2 over the unit sphere of the zero-sum hyperplane.

    Computed as the top eigenvalue of the diagonal form restricted to the
    hyperplane.  The result lies between ``min(sigma2)`` and ``max(sigma2)``.
    """
    s = _sigma2(sigma2, 2)
    B = _hyperplane_basis(s.size)
    A = B.T @ (s[:, None] * B)
    A = 0.5 * (A + A.T)
    top = float(np.linalg.eigvalsh(A)[-1])
    return min(max(top, float(s.min())), float(s.max()))


def lemma21_check(sigma2, strict: bool = True) -> ConditionReport:
    s = _sigma2(sigma2, 2)
    N = s.size
    lhs = pi_max(s)
    rhs = Fraction(N - 1, 2 * N) * sum(_q(s))
    return _report("LEMMA21", rhs - Fraction(lhs), strict,
                   inputs={"sigma2": s.tolist(), "pi_max": lhs, "rhs": float(rhs)})


def cor22_check(sigma2, strict: bool = True) -> ConditionReport:
    s = _sigma2(sigma2, 2)
    N = s.size
    q = _q(s)
    rhs = Fraction(N - 1, 2 * N) * sum(q)
    return _report("COR22", rhs - max(q), strict,
                   inputs={"sigma2": s.tolist(), "rhs": float(rhs)})


def eq_total4_check(sigma2, strict: bool = True) -> ConditionReport:
    s = _sigma2(sigma2, 2)
    if s.size != 4:
        raise InvalidInputError("EQ_TOTAL4 applies to exactly four particles")
    q = _q(s)
    rhs = Fraction(3, 8) * sum(q)
    return _report("EQ_TOTAL4", rhs - max(q), strict,
                   inputs={"sigma2": s.tolist(), "rhs": float(rhs)})


def cor24_check(sigma2, strict: bool = False) -> ConditionReport:
    s = _sigma2(sigma2, 2)
    q = _q(s)
    rhs = Fraction(len(q) - 1, 2) * min(q)
    return _report("COR24", rhs - max(q), strict,
                   inputs={"sigma2": s.tolist(), "rhs": float(rhs)})


def thm11_check(sigma2, n: int, strict: bool = True) -> ConditionReport:
    s = _sigma2(sigma2, 2)
    if not 4 <= n <= s.size:
        raise InvalidInputError(f"n must satisfy 4 <= n <= N={s.size} (got {n})")
    q = _q(s)
    rhs = Fraction(n - 1, 2) * min(q)
    return _report("THM11", rhs - max(q), strict,
                   inputs={"sigma2": s.tolist(), "n": n, "rhs": float(rhs)})


TOTAL_CRITERIA: dict[str, Callable[..., ConditionReport]] = {
    "LEMMA21": lemma21_check,
    "COR22": cor22_check,
    "COR24": cor24_check,
}


def _total(criterion: str) -> Callable[..., ConditionReport]:
    try:
        return TOTAL_CRITERIA[criterion]
    except KeyError:
        raise InvalidInputError(
            f"window criterion must be one of {sorted(TOTAL_CRITERIA)} (got {criterion!r})"
        ) from None


# ----------------------------------------------------------------------------
# window reduction
# ----------------------------------------------------------------------------


def window_total_check(sigma2, w: WindowPair, criterion: str = "LEMMA21",
                       strict: bool | None = None) -> ConditionReport:
    """Total-collision criterion on the subsystem of ranks ``w.l_minus..w.l_plus``."""
    s = _sigma2(sigma2, 2)
    w.check_within(s.size)
    check = _total(criterion)
    sub = s[w.l_minus - 1:w.l_plus]
    r = check(sub) if strict is None else check(sub, strict=strict)
    inputs = dict(r.inputs, window=[w.l_minus, w.l_plus])
    return ConditionReport(r.criterion, r.holds, r.margin, r.strict, r.details,
                           r.label, inputs, r.note)


def _windows_covering(k_minus: int, k_plus: int, N: int) -> Iterable[WindowPair]:
    for lo in range(1, k_minus + 1):
        for hi in range(k_plus, N + 1):
            yield WindowPair(lo, hi)


def no_rank_collision_check(sigma2, k_minus: int, k_plus: int, criterion: str = "LEMMA21",
                            strict: bool | None = None) -> ConditionReport:
    """No collision among ranks k_minus..k_plus.

    Holds when every enclosing window ``l_minus <= k_minus < k_plus <= l_plus``
    is free of total collisions under ``criterion``.
    """
    s = _sigma2(sigma2, 2)
    N = s.size
    if not 1 <= k_minus < k_plus <= N:
        raise InvalidInputError(f"need 1 <= k_minus < k_plus <= N={N} (got {k_minus}, {k_plus})")
    _total(criterion)
    subs = [window_total_check(s, w, criterion, strict)
            for w in _windows_covering(k_minus, k_plus, N)]
    return _combine("WINDOW_REDUCTION", subs,
                    inputs={"k_minus": k_minus, "k_plus": k_plus, "criterion": criterion})


def no_ntuple_check(sigma2, n: int, criterion: str = "LEMMA21",
                    strict: bool | None = None) -> ConditionReport:
    s = _sigma2(sigma2, 2)
    N = s.size
    if not 2 <= n <= N:
        raise InvalidInputError(f"n must satisfy 2 <= n <= N={N} (got {n})")
    subs = [no_rank_collision_check(s, k, k + n - 1, criterion, strict)
            for k in range(1, N - n + 2)]
    label = "TOTAL" if n == N else f"{n}-TUPLE"
    return _combine("WINDOW_REDUCTION", subs, label=label,
                    inputs={"n": n, "criterion": criterion})


# ----------------------------------------------------------------------------
# four particles
# ----------------------------------------------------------------------------


def four_particle_report(sigma2, strict: bool | None = None) -> list[ConditionReport]:
    """Reports for the total, both triple, and the 12/34 simultaneous collision."""
    s = _sigma2(sigma2, 4)
    if s.size != 4:
        raise InvalidInputError("four_particle_report needs exactly four coefficients")
    total = eq_total4_check(s) if strict is None else eq_total4_check(s, strict=strict)
    total = ConditionReport(total.criterion, total.holds, total.margin, total.strict,
                            total.details, "TOTAL", total.inputs, total.note)

    def middle(k: int) -> ConditionReport:
        # rank k (1-based) against its two neighbours, non-strict
        return _report("CONCAVITY", s[k - 1] - 0.5 * (s[k - 2] + s[k]), False,
                       inputs={"rank": k})

    return [
        total,
        _combine("LEMMA31A", [total, middle(2)], label="TRIPLE_123"),
        _combine("LEMMA31B", [total, middle(3)], label="TRIPLE_234"),
        _combine("LEMMA31C", [total], label="SIMULT_12_34"),
    ]


# ----------------------------------------------------------------------------
# infinite systems
# ----------------------------------------------------------------------------


def infinite_ntuple_check(spec: InfiniteSystemSpec, n: int,
                          strict: bool = True) -> ConditionReport:
    violations = validate_infinite_spec(spec)
    if violations:
        v = violations[0]
        raise PreconditionError(v.gate, str(v))
    if n < 4:
        raise InvalidInputError(f"n must be >= 4 (got {n})")
    values = _q(list(spec.sigma2_head) + [spec.sigma2_tail])
    sup, inf = max(values), min(values)
    rhs = Fraction(n - 1, 2) * inf
    return _report("THM42", rhs - sup, strict,
                   inputs={"n": n, "sup_sigma2": float(sup), "inf_sigma2": float(inf),
                           "rhs": float(rhs)})


# ----------------------------------------------------------------------------
# export
# ----------------------------------------------------------------------------


def reports_to_json(reports: Sequence[ConditionReport], indent: int | None = 2) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=indent)


def reports_to_csv(reports: Sequence[ConditionReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["criterion", "holds", "margin"])
    for r in reports:
        writer.writerow([r.criterion, str(r.holds).lower(), repr(r.margin)])
    return buf.getvalue()
