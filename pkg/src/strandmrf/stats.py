"""Gumbel calibration of raw scores and ROC/AUC evaluation.

Raw scores are negative-log values where lower is better; the Gumbel is
fitted to ``s = -raw`` so the upper tail holds the good scores.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .model import MrfTemplate, PairScoreTables
from .search import SearchConfig, run_configured

EULER_GAMMA = 0.5772156649015329
MIN_FIT_SAMPLES = 30


class DegenerateSample(ValueError):
    pass


class SmallSampleWarning(UserWarning):
    pass


class CalibrationMismatch(ValueError):
    """Scores were produced under a different search configuration."""


@dataclass(frozen=True)
class EvdParams:
    mu: float
    beta: float
    n: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("EVD scale must be positive")


def _gumbel_mle_scale(x: np.ndarray, beta: float, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Newton solve of the profile score equation for the scale.

    g(b) = b - mean(x) + sum(x e^{-x/b}) / sum(e^{-x/b}) = 0
    Shifting x by its max keeps the exponentials bounded.
    """
    x = x - x.max()
    mean = x.mean()
    for _ in range(max_iter):
        w = np.exp(-x / beta)
        s0, s1, s2 = w.sum(), (x * w).sum(), (x * x * w).sum()
        g = beta - mean + s1 / s0
        dg = 1.0 + (s2 * s0 - s1 * s1) / (s0 * s0 * beta * beta)
        step = g / dg
        new = beta - step
        if new <= 0:
            new = beta / 2
        beta = new
        if abs(g) < tol:
            break
    return beta


def fit_evd(raw_scores: Sequence[float]) -> EvdParams:
    """Maximum-likelihood Gumbel fit to negated raw scores.

    Moment estimates start Newton iterations on the scale; the location then
    has a closed form.  Fewer than 30 samples still fit but emit
    ``SmallSampleWarning``.
    """
    s = -np.asarray(raw_scores, dtype=float)
    if s.size < 2 or np.ptp(s) == 0:
        raise DegenerateSample("cannot fit an EVD to constant or single-valued scores")
    if s.size < MIN_FIT_SAMPLES:
        warnings.warn(f"EVD fitted to only {s.size} scores (at least {MIN_FIT_SAMPLES} recommended)",
                      SmallSampleWarning, stacklevel=2)
    beta0 = s.std() * math.sqrt(6) / math.pi
    beta = _gumbel_mle_scale(s, beta0)
    shift = s.max()
    mu = shift - beta * math.log(np.mean(np.exp(-(s - shift) / beta)))
    return EvdParams(float(mu), float(beta), int(s.size))


def p_value(params: EvdParams, raw: float) -> float:
    """Probability that a decoy scores at least this well."""
    z = (-raw - params.mu) / params.beta
    return float(-math.expm1(-math.exp(-z)))


def evd_cdf(params: EvdParams, raw: float) -> float:
    return 1.0 - p_value(params, raw)


@dataclass(frozen=True)
class RocCurve:
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    thresholds: tuple[float, ...]  # raw-score cutoffs, hit iff raw <= threshold
    auc: float


def roc_auc(raw_scores: Sequence[float], labels: Sequence[bool]) -> RocCurve:
    """ROC with lower raw treated as more positive; AUC by midrank statistic."""
    raw = np.asarray(raw_scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if raw.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative")
    ranks = rankdata(-raw)  # larger rank = better score
    auc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)

    fpr, tpr, thr = [0.0], [0.0], [-math.inf]
    for t in np.unique(raw):
        hit = raw <= t
        fpr.append(float((hit & ~y).sum() / n_neg))
        tpr.append(float((hit & y).sum() / n_pos))
        thr.append(float(t))
    return RocCurve(tuple(fpr), tuple(tpr), tuple(thr), float(auc))


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class Calibration:
    evd: EvdParams
    search: SearchConfig

    def p_value(self, raw: float, search: SearchConfig) -> float:
        self.require(search)
        return p_value(self.evd, raw)

    def require(self, search: SearchConfig) -> None:
        if search.to_dict() != self.search.to_dict():
            raise CalibrationMismatch(
                "search configuration differs from the one the EVD was calibrated with: "
                f"calibrated {self.search.to_dict()}, requested {search.to_dict()}")

    def to_dict(self) -> dict:
        return {"mu": self.evd.mu, "beta": self.evd.beta, "n": self.evd.n, "search": self.search.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        return cls(EvdParams(d["mu"], d["beta"], d.get("n", 0)), SearchConfig.from_dict(d["search"]))


def _decoy_score(args) -> float:
    config, template, decoy, tables, seed = args
    return run_configured(config, template, decoy, tables, seed=seed).score


def decoy_scores(template: MrfTemplate, decoys: Sequence[str], tables: PairScoreTables,
                 config: SearchConfig, seed: int = 0, workers: int = 1) -> list[float]:
    """Search score of each decoy; decoy i uses seed ``seed + i``."""
    jobs = [(config, template, d, tables, seed + i) for i, d in enumerate(decoys)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_decoy_score, jobs))
    return [_decoy_score(j) for j in jobs]


def calibrate(template: MrfTemplate, decoys: Sequence[str], tables: PairScoreTables,
              config: SearchConfig, seed: int = 0, workers: int = 1) -> Calibration:
    scores = decoy_scores(template, decoys, tables, config, seed=seed, workers=workers)
    return Calibration(fit_evd(scores), config)
