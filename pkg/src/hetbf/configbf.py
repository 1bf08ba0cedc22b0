"""Configuration Bayes factors: which subgroups carry the effect.

A configuration marks each subgroup active or inactive.  Its Bayes factor
against the global null uses only the active subgroups' data, because the
inactive ones have the same likelihood under both hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .abf import BFResult
from .dispatch import bf_grid
from .errors import DataError
from .priors import ES_EQTL_MARGINALS, PriorGrid, cefn_grid
from .stats import SnpRecord

MAX_SUBGROUPS = 20
CONFIG_CEFN_K = 0.314


@dataclass(frozen=True)
class Configuration:
    """Activity pattern over subgroups; ``active[s]`` is True when subgroup s has an effect."""

    active: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(bool(a) for a in self.active))

    @classmethod
    def parse(cls, text: str) -> "Configuration":
        """From a 0/1 string such as ``"110"`` (first character = first subgroup)."""
        text = text.strip()
        if not text or any(ch not in "01" for ch in text):
            raise ValueError(f"configuration must be a string of 0s and 1s, got {text!r}")
        return cls(tuple(ch == "1" for ch in text))

    @classmethod
    def from_index(cls, index: int, S: int) -> "Configuration":
        """Binary counting with the first subgroup as the least significant bit."""
        return cls(tuple(bool((index >> s) & 1) for s in range(S)))

    @property
    def is_null(self) -> bool:
        return not any(self.active)

    @property
    def active_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.active) if a]

    def __str__(self) -> str:
        return "".join("1" if a else "0" for a in self.active)


def default_config_grid(k: float = CONFIG_CEFN_K) -> PriorGrid:
    """CEFN-ES grid used for configuration scans by default."""
    return cefn_grid(ES_EQTL_MARGINALS, k, family="CEFN_ES")


def config_bf(
    record: SnpRecord,
    c: Configuration,
    prior=None,
    method: str = "abf",
    subgroups: Sequence[str] | None = None,
    **options,
) -> BFResult:
    """Bayes factor of configuration ``c`` against the global null.

    Parameters
    ----------
    record : SnpRecord
    c : Configuration
        Pattern over ``subgroups`` (default: the record's own subgroup order).
    prior : EffectPrior or PriorGrid, optional
        Defaults to :func:`default_config_grid`.
    subgroups : sequence of str, optional
        Dataset-wide subgroup order that ``c`` refers to.  Every active
        subgroup must be present in the record.
    """
    labels = list(subgroups) if subgroups is not None else list(record.subgroups)
    if len(c.active) != len(labels):
        raise DataError(f"configuration has {len(c.active)} entries for {len(labels)} subgroups")
    prior = default_config_grid() if prior is None else prior
    if c.is_null:
        return BFResult(0.0, "abf", prior)
    pos = {lab: i for i, lab in enumerate(record.subgroups)}
    keep = []
    for idx in c.active_indices:
        lab = labels[idx]
        if lab not in pos:
            raise DataError(f"active subgroup {lab!r} has no data for SNP {record.snp}")
        keep.append(pos[lab])
    sub = record.restrict(keep)
    if not any(s.informative for s in sub.summaries):
        # only monomorphic subgroups are active: the likelihoods coincide
        return BFResult(0.0, "abf", prior, flags=("no_informative_subgroup",))
    return bf_grid(sub, prior, method, **options)


def config_scan(
    record: SnpRecord,
    prior=None,
    method: str = "abf",
    subgroups: Sequence[str] | None = None,
    **options,
) -> list[tuple[Configuration, BFResult]]:
    """Bayes factors of all ``2^S`` configurations in binary counting order."""
    labels = list(subgroups) if subgroups is not None else list(record.subgroups)
    S = len(labels)
    if S > MAX_SUBGROUPS:
        raise DataError(f"configuration scans are limited to {MAX_SUBGROUPS} subgroups")
    prior = default_config_grid() if prior is None else prior
    out = []
    for i in range(2 ** S):
        c = Configuration.from_index(i, S)
        out.append((c, config_bf(record, c, prior, method, labels, **options)))
    return out


def best_configuration(table: list[tuple[Configuration, BFResult]]) -> Configuration:
    """Configuration with the largest Bayes factor (first in scan order on ties)."""
    best = max(range(len(table)), key=lambda i: (table[i][1].log_bf, -i))
    return table[best][0]


__all__ = ["Configuration", "config_bf", "config_scan", "best_configuration", "default_config_grid",
           "MAX_SUBGROUPS"]
