"""Exact counting of bright, dark and intermediate collective states.

Closed forms use Python integers (arbitrary precision).  Each one has a
``nested_*`` counterpart that literally performs the nested summation over
collective occupations; the two are compared in the tests and by the
``count`` CLI command.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigurationError, DomainError


class CountKind(enum.Enum):
    DARK = "dark"
    ALL = "all"
    FIXED_N0 = "fixed_n0"
    INITIAL_EXCITATIONS = "initial_excitations"
    FINAL_EXCITATIONS = "final_excitations"


@dataclass(frozen=True)
class CountResult:
    value: int
    n: int
    m: int
    kind: CountKind
    n0: int | None = None


def binomial(a: int, b: int) -> int:
    """``C(a, b)``, zero outside ``0 <= b <= a``."""
    if b < 0 or a < 0 or b > a:
        return 0
    return math.comb(a, b)


def _check_nm(n: int, m: int, min_m: int) -> None:
    if n < 0:
        raise ConfigurationError(f"photon number must be >= 0, got {n}")
    if m < min_m:
        raise ConfigurationError(f"need m >= {min_m}, got {m}")


def count_dark(n: int, m: int) -> int:
    """Collective states with ``N = n`` and no photon in the bright mode."""
    _check_nm(n, m, 2)
    return binomial(n + m - 2, m - 2)


def count_all(n: int, m: int) -> int:
    """All collective states with ``n`` photons in ``m`` modes."""
    _check_nm(n, m, 1)
    return binomial(n + m - 1, m - 1)


def count_fixed_n0(n: int, m: int, n0: int) -> int:
    """Collective states with exactly ``n0`` of the ``n`` photons in the bright mode."""
    _check_nm(n, m, 2)
    if not 0 <= n0 <= n:
        raise ConfigurationError(f"need 0 <= n0 <= n, got n0={n0}, n={n}")
    return binomial(n - n0 + m - 2, m - 2)


def hockey_stick(k: int, r: int) -> tuple[int, int]:
    """Both sides of ``sum_{j=0}^{k} C(j+r, r) = C(k+r+1, r+1)``."""
    if k < 0 or r < 0:
        raise ConfigurationError(f"need k, r >= 0, got ({k}, {r})")
    lhs = sum(binomial(j + r, r) for j in range(k + 1))
    return lhs, binomial(k + r + 1, r + 1)


def initial_excitations(n: int, m: int) -> int:
    """Photons summed over every collective state with ``n`` photons."""
    _check_nm(n, m, 2)
    return n * binomial(n + m - 1, m - 1)


def final_excitations(n: int, m: int) -> int:
    """Photons left after each state has lost its bright-mode occupation."""
    _check_nm(n, m, 2)
    return (m - 1) * binomial(n + m - 1, m)


def survival_ratio(n: int, m: int) -> Fraction:
    if n == 0:
        raise DomainError("survival ratio is undefined for zero photons")
    _check_nm(n, m, 2)
    return Fraction(final_excitations(n, m), initial_excitations(n, m))


def count(kind: CountKind | str, n: int, m: int, n0: int | None = None) -> CountResult:
    kind = CountKind(kind)
    if kind is CountKind.DARK:
        value = count_dark(n, m)
    elif kind is CountKind.ALL:
        value = count_all(n, m)
    elif kind is CountKind.FIXED_N0:
        if n0 is None:
            raise ConfigurationError("fixed_n0 count needs n0")
        value = count_fixed_n0(n, m, n0)
    elif kind is CountKind.INITIAL_EXCITATIONS:
        value = initial_excitations(n, m)
    else:
        value = final_excitations(n, m)
    return CountResult(value, n, m, kind, n0)


# --- nested-sum oracles -------------------------------------------------------

def _nested(remaining: int, depth: int) -> int:
    # sum_{k_1=0}^{R} sum_{k_2=0}^{R-k_1} ... 1, with `depth` summations
    if depth == 0:
        return 1
    total = 0
    for k in range(remaining + 1):
        total += _nested(remaining - k, depth - 1)
    return total


def nested_count_dark(n: int, m: int) -> int:
    # sums over n_1..n_{M-2}; n_0 = 0 and n_{M-1} is fixed by the total
    return _nested(n, m - 2)


def nested_count_all(n: int, m: int) -> int:
    # sums over n_0..n_{M-2}
    return _nested(n, m - 1)


def nested_count_fixed_n0(n: int, m: int, n0: int) -> int:
    return _nested(n - n0, m - 2)


def nested_initial_excitations(n: int, m: int) -> int:
    return sum(n * nested_count_fixed_n0(n, m, n0) for n0 in range(n + 1))


def nested_final_excitations(n: int, m: int) -> int:
    return sum((n - n0) * nested_count_fixed_n0(n, m, n0) for n0 in range(n + 1))


def nested_survival_ratio(n: int, m: int) -> Fraction:
    return Fraction(nested_final_excitations(n, m), nested_initial_excitations(n, m))


def oracle_report(n: int, m: int) -> dict:
    """Closed forms next to their nested-sum counterparts for one ``(n, m)``."""
    rows = {
        "count_dark": (count_dark(n, m), nested_count_dark(n, m)),
        "count_all": (count_all(n, m), nested_count_all(n, m)),
        "initial_excitations": (initial_excitations(n, m), nested_initial_excitations(n, m)),
        "final_excitations": (final_excitations(n, m), nested_final_excitations(n, m)),
    }
    report = {
        name: {"closed_form": cf, "nested_sum": ns, "match": cf == ns}
        for name, (cf, ns) in rows.items()
    }
    report["count_fixed_n0"] = [
        {"n0": n0, "closed_form": count_fixed_n0(n, m, n0),
         "nested_sum": nested_count_fixed_n0(n, m, n0),
         "match": count_fixed_n0(n, m, n0) == nested_count_fixed_n0(n, m, n0)}
        for n0 in range(n + 1)
    ]
    if n >= 1:
        closed, nested = survival_ratio(n, m), nested_survival_ratio(n, m)
        report["survival_ratio"] = {
            "closed_form": str(closed), "nested_sum": str(nested),
            "expected": str(Fraction(m - 1, m)),
            "match": closed == nested == Fraction(m - 1, m),
        }
    return report
