"""Intersection experiments, recalibration and the large-scale stand-in.

Four agents watch vehicle B's lane position: vehicles A and B, an RSU and
vehicle C, whose view is occluded (fewer samples, down-weighted report).
Every run draws its own RNG stream from ``(seed, scenario, run)`` so results
do not depend on how runs are batched.
"""
from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .misbehavior import (
    DetectParams,
    ReportedOpinion,
    batch_detect,
    detect,
    pairwise_dc,
)
from .opinion import Domain, Opinion, k_from_evidence, k_project
from .trust import DiscountContext

SWEEP_HEADER = ("theta", "p_detected", "p_at_least_one", "p_wrong_accusation", "p_all_honest")
ROC_HEADER = ("mu_est", "sigma_est", "theta", "fp", "tp")
SCALE_HEADER = ("error_rate", "theta", "p_tp", "p_fp")


# ---------------------------------------------------------------- measurement

@dataclass(frozen=True)
class MeasurementModel:
    mu: float = 0.25
    sigma: float = 0.75
    mu_est: float = 0.25
    sigma_est: float = 0.75
    N: int = 50

    def __post_init__(self):
        if self.sigma <= 0 or self.sigma_est <= 0:
            raise ConfigError("standard deviations must be positive")
        if self.N < 1:
            raise ConfigError("sample count must be at least 1")

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return rng.normal(self.mu, self.sigma, self.N if size is None else size)


@dataclass(frozen=True)
class HistogramSpec:
    bins: int = 3
    lo: float = -2.0
    hi: float = 2.0

    def __post_init__(self):
        if self.bins < 2:
            raise ConfigError("histogram needs at least two bins")
        if not self.lo < self.hi:
            raise ConfigError("histogram range must satisfy lo < hi")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def domain(self) -> Domain:
        return Domain.of_size(self.bins, "bin")

    def counts(self, z: np.ndarray) -> np.ndarray:
        """Histogram counts along the last axis, outliers clamped to edge bins."""
        z = np.asarray(z, dtype=float)
        idx = np.clip(np.searchsorted(self.edges, z, side="right") - 1, 0, self.bins - 1)
        flat = idx.reshape(-1, idx.shape[-1]) if idx.ndim else idx.reshape(1, 1)
        out = np.zeros((flat.shape[0], self.bins))
        rows = np.repeat(np.arange(flat.shape[0]), flat.shape[1])
        np.add.at(out, (rows, flat.ravel()), 1.0)
        return out.reshape(idx.shape[:-1] + (self.bins,)) if idx.ndim else out[0]


def z_transform(samples, mu_est: float, sigma_est: float) -> np.ndarray:
    if sigma_est <= 0:
        raise ValueError("sigma_est must be positive")
    return (np.asarray(samples, dtype=float) - mu_est) / sigma_est


def histogram_opinion(z_samples, spec: HistogramSpec = HistogramSpec()) -> Opinion:
    z = np.asarray(z_samples, dtype=float).ravel()
    r = spec.counts(z) if z.size else np.zeros(spec.bins)
    b, u = k_from_evidence(r, spec.bins)
    return Opinion(spec.domain, b, float(u), np.full(spec.bins, 1.0 / spec.bins))


# ---------------------------------------------------------------- intersection

HONEST = MeasurementModel()
ATTACK = MeasurementModel(mu_est=1.0, sigma_est=0.75)
UNCALIBRATED = (0.0, 1.0)


@dataclass(frozen=True)
class IntersectionConfig:
    """Agents in report order with their sample counts and report weights."""
    agents: Tuple[str, ...] = ("A", "B", "RSU", "C")
    samples: Tuple[int, ...] = (50, 50, 50, 10)
    prior_weight: Tuple[float, ...] = (1.0, 1.0, 1.0, 0.9)
    spec: HistogramSpec = HistogramSpec()
    fusion: str = "chain"
    # vehicle C confirms the RSU's view of C's own position
    tie_priority: Tuple[Tuple[str, float], ...] = (("RSU", 1.0),)
    attackers: Tuple[str, ...] = ("A", "B")
    rsu: str = "RSU"

    def __post_init__(self):
        if not len(self.agents) == len(self.samples) == len(self.prior_weight):
            raise ConfigError("agents, samples and prior_weight must have equal length")
        for name in self.attackers + (self.rsu,):
            if name not in self.agents:
                raise ConfigError(f"unknown agent {name!r}")

    def index(self, name) -> int:
        return self.agents.index(name)

    def models(self, scenario: int, fault=UNCALIBRATED) -> List[MeasurementModel]:
        out = []
        for name, n in zip(self.agents, self.samples):
            m = replace(HONEST, N=n)
            if scenario == 2 and name == self.rsu:
                m = replace(m, mu_est=fault[0], sigma_est=fault[1])
            elif scenario == 3 and name in self.attackers:
                m = replace(ATTACK, N=n)
            out.append(m)
        return out

    def params(self) -> DetectParams:
        return DetectParams(fusion=self.fusion, priority=dict(self.tie_priority), discount_by_trust=False)

    def id_rank(self) -> np.ndarray:
        order = sorted(self.agents)
        return np.array([order.index(a) for a in self.agents])

    def priority_vector(self) -> np.ndarray:
        p = dict(self.tie_priority)
        return np.array([p.get(a, 0.0) for a in self.agents])


DEFAULT_CONFIG = IntersectionConfig()


def _run_rng(seed: int, scenario: int, run: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(scenario), int(run)])


def simulate_counts(scenario: int, runs: int, seed: int, cfg: IntersectionConfig = DEFAULT_CONFIG,
                    fault=UNCALIBRATED, start: int = 0) -> np.ndarray:
    """Histogram evidence per run and agent, shape (runs, n_agents, B)."""
    if scenario not in (1, 2, 3):
        raise ConfigError("scenario must be 1, 2 or 3")
    if runs < 1:
        raise ConfigError("runs must be at least 1")
    models = cfg.models(scenario, fault)
    out = np.zeros((runs, len(models), cfg.spec.bins))
    for k in range(runs):
        rng = _run_rng(seed, scenario, start + k)
        for i, m in enumerate(models):
            out[k, i] = cfg.spec.counts(z_transform(m.sample(rng), m.mu_est, m.sigma_est))
    return out


def discounted_arrays(counts: np.ndarray, cfg: IntersectionConfig = DEFAULT_CONFIG):
    """Opinion arrays (b, u, a) after the per-agent report weights."""
    W = cfg.spec.bins
    b, u = k_from_evidence(counts, W)
    b = b * np.asarray(cfg.prior_weight)[None, :, None]
    u = 1.0 - b.sum(-1)
    a = np.full(b.shape, 1.0 / W)
    return b, u, a


def _batch(counts, theta, cfg, D=None):
    b, u, a = discounted_arrays(counts, cfg)
    if D is None:
        D = pairwise_dc(b, u, a)
    return batch_detect(b, u, a, theta, cfg.fusion, cfg.priority_vector(), cfg.id_rank(), D), D


@dataclass
class SweepResult:
    kind: str
    header: tuple
    rows: List[tuple]
    runs: int
    seed: int
    extra: Dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([f"{x:.10g}" for x in row])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"kind": self.kind, "runs": self.runs, "seed": self.seed,
                "rows": [dict(zip(self.header, map(float, r))) for r in self.rows], **self.extra}

    def column(self, name) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows])


def _check_thetas(thetas) -> np.ndarray:
    t = np.atleast_1d(np.asarray(thetas, dtype=float))
    if t.size == 0 or np.any(t < 0) or np.any(t > 1):
        raise ConfigError("theta values must lie in [0, 1]")
    return t


def threshold_sweep(thetas, runs: int = 1000, seed: int = 0,
                    cfg: IntersectionConfig = DEFAULT_CONFIG) -> SweepResult:
    """Attack rates from scenario 3 and the all-honest rate from scenario 1."""
    thetas = _check_thetas(thetas)
    c3 = simulate_counts(3, runs, seed, cfg)
    c1 = simulate_counts(1, runs, seed, cfg)
    iA, iB = (cfg.index(x) for x in cfg.attackers)
    others = [i for i in range(len(cfg.agents)) if i not in (iA, iB)]
    D3 = D1 = None
    rows = []
    for t in thetas:
        r3, D3 = _batch(c3, t, cfg, D3)
        r1, D1 = _batch(c1, t, cfg, D1)
        mA, mB = ~r3.honest[:, iA], ~r3.honest[:, iB]
        one = mA | mB
        wrong = ~one & (~r3.honest[:, others]).any(1)
        rows.append((float(t), (mA & mB).mean(), one.mean(), wrong.mean(), r1.honest.all(1).mean()))
    return SweepResult("sweep", SWEEP_HEADER, rows, runs, seed)


def roc_sweep(faults: Sequence[Tuple[float, float]], thetas, runs: int = 1000, seed: int = 0,
              cfg: IntersectionConfig = DEFAULT_CONFIG) -> SweepResult:
    """False-positive rate (honest agents flagged) and true-positive rate (RSU flagged)."""
    thetas = _check_thetas(thetas)
    iR = cfg.index(cfg.rsu)
    hon = [i for i in range(len(cfg.agents)) if i != iR]
    rows = []
    for mu_est, sigma_est in faults:
        counts = simulate_counts(2, runs, seed, cfg, (mu_est, sigma_est))
        D = None
        for t in thetas:
            res, D = _batch(counts, t, cfg, D)
            fp = (~res.honest[:, hon]).mean()
            tp = (~res.honest[:, iR]).mean()
            rows.append((mu_est, sigma_est, float(t), fp, tp))
    return SweepResult("roc", ROC_HEADER, rows, runs, seed)


def run_intersection(scenario: int, theta: float, runs: int = 1000, seed: int = 0,
                     cfg: IntersectionConfig = DEFAULT_CONFIG, fault=UNCALIBRATED) -> SweepResult:
    if scenario == 2:
        res = roc_sweep([fault], [theta], runs, seed, cfg)
        mu, sig, n = recalibration_study(theta, runs, seed, cfg, fault)
        res.extra = {"recalibrated_mu": mu, "recalibrated_sigma": sig, "recalibrated_runs": n}
        return res
    res = threshold_sweep([theta], runs, seed, cfg)
    row = list(res.rows[0])
    if scenario == 1:
        row[1:4] = [float("nan")] * 3
    else:
        # the all-honest column belongs to scenario 1
        row[4] = float("nan")
    res.rows = [tuple(row)]
    return res


# ---------------------------------------------------------------- recalibration

def _recal_arrays(P_wrong, P_ref, centers):
    dz = P_wrong @ centers - P_ref @ centers
    spread = np.sqrt((((centers - dz[..., None]) ** 2) * P_wrong).sum(-1))
    return dz, spread


def recalibrate(wrong: Opinion, reference: Opinion, spec: HistogramSpec = HistogramSpec()):
    """Offset and spread of the wrong opinion in standardized units.

    The offset is the shift of the projected bin-center mean against the
    reference; the spread is the projection-weighted deviation of the bin
    centers around that offset.
    """
    from .errors import DomainMismatch
    if wrong.domain != reference.domain or wrong.W != spec.bins:
        raise DomainMismatch("recalibration needs two opinions on the histogram domain")
    from .opinion import project
    dz, s = _recal_arrays(project(wrong), project(reference), spec.centers)
    return float(dz), float(s)


def recalibrated_model(mu_est: float, sigma_est: float, dz: float, spread: float):
    """Map standardized recalibration back to meters."""
    return mu_est + sigma_est * dz, sigma_est * spread


def recalibration_study(theta: float = 0.15, runs: int = 1000, seed: int = 0,
                        cfg: IntersectionConfig = DEFAULT_CONFIG, fault=UNCALIBRATED):
    """Mean recalibrated (mu, sigma) of the RSU over runs where it was flagged."""
    counts = simulate_counts(2, runs, seed, cfg, fault)
    res, _ = _batch(counts, theta, cfg)
    iR = cfg.index(cfg.rsu)
    flagged = ~res.honest[:, iR]
    if not flagged.any():
        return float("nan"), float("nan"), 0
    b, u, a = discounted_arrays(counts, cfg)
    P_wrong = k_project(b[:, iR], u[:, iR], a[:, iR])
    P_ref = k_project(res.ref_b, res.ref_u, res.ref_a)
    dz, s = _recal_arrays(P_wrong, P_ref, cfg.spec.centers)
    mu, sig = recalibrated_model(fault[0], fault[1], dz, s)
    return float(mu[flagged].mean()), float(sig[flagged].mean()), int(flagged.sum())


# ---------------------------------------------------------------- single run

def run_reports(scenario: int, seed: int, run: int, cfg: IntersectionConfig = DEFAULT_CONFIG,
                fault=UNCALIBRATED) -> List[ReportedOpinion]:
    counts = simulate_counts(scenario, 1, seed, cfg, fault, start=run)[0]
    out = []
    for name, r, w in zip(cfg.agents, counts, cfg.prior_weight):
        b, u = k_from_evidence(r, cfg.spec.bins)
        op = Opinion(cfg.spec.domain, b, float(u), np.full(cfg.spec.bins, 1.0 / cfg.spec.bins))
        out.append(ReportedOpinion(name, op, DiscountContext(prior_weight=w)))
    return out


def single_run_trace(scenario: int, theta: float, seed: int, run: int = 0,
                     cfg: IntersectionConfig = DEFAULT_CONFIG, fault=UNCALIBRATED) -> dict:
    """Full classification of one run through the object pipeline."""
    reports = run_reports(scenario, seed, run, cfg, fault)
    res = detect(reports, None, theta, cfg.params())
    return {"scenario": scenario, "theta": theta, "seed": seed, "run": run,
            "reports": [r.to_json() for r in reports], "result": res.to_json()}


# ---------------------------------------------------------------- elimination

def elimination_model(p_tp: float, p_fp: float, batch_size: int = 3, n_batches: int = 15):
    """Probability that a misbehaving / honest agent is eliminated.

    An agent is removed once every report of some batch is flagged.
    Returns ``(p_dm, p_wb)``.
    """
    for p in (p_tp, p_fp):
        if not 0.0 <= p <= 1.0:
            raise ValueError("rates must lie in [0, 1]")
    p_dm = 1.0 - (1.0 - p_tp ** batch_size) ** n_batches
    p_wb = 1.0 - (1.0 - p_fp ** batch_size) ** n_batches
    return p_dm, p_wb


def elimination_monte_carlo(p: float, batch_size: int = 3, n_batches: int = 15,
                            trials: int = 100_000, seed: int = 0):
    """Simulated elimination rate and its binomial standard error."""
    rng = np.random.default_rng(seed)
    hits = rng.random((trials, n_batches, batch_size)) < p
    est = float(hits.all(axis=2).any(axis=1).mean())
    return est, float(np.sqrt(max(est * (1 - est), 1e-300) / trials))


# ---------------------------------------------------------------- large scale

@dataclass(frozen=True)
class ScaleConfig:
    agents_per_topic: int = 5
    samples: int = 100
    misbehaving_fraction: float = 0.1
    honest_shift: float = 1.0      # in sigma, applied to corrupted honest data
    attack_shift: float = 2.0      # in sigma, applied to falsified data
    spec: HistogramSpec = HistogramSpec()
    fusion: str = "mean"

    def __post_init__(self):
        if not 0.0 <= self.misbehaving_fraction <= 1.0:
            raise ConfigError("misbehaving_fraction must lie in [0, 1]")
        if self.agents_per_topic < 2:
            raise ConfigError("need at least two agents per topic")


def large_scale_synthetic(error_rates, thetas, reports_per_cell: int = 10_000, seed: int = 0,
                          cfg: ScaleConfig = ScaleConfig()) -> SweepResult:
    """Per-report detection rates on a synthetic population.

    Every datum is corrupted with probability equal to the error rate; honest
    agents shift it by ``honest_shift`` sigma, misbehaving agents by
    ``attack_shift`` sigma. The same draws are reused across the grid.
    """
    thetas = _check_thetas(thetas)
    error_rates = np.asarray(error_rates, dtype=float)
    if np.any(error_rates < 0) or np.any(error_rates > 1):
        raise ConfigError("error rates must lie in [0, 1]")
    n, N, W = cfg.agents_per_topic, cfg.samples, cfg.spec.bins
    topics = -(-reports_per_cell // n)
    z = np.empty((topics, n, N))
    coin = np.empty((topics, n, N))
    bad = np.empty((topics, n), bool)
    for t in range(topics):
        rng = np.random.default_rng([int(seed), 7, t])
        z[t] = rng.standard_normal((n, N))
        coin[t] = rng.random((n, N))
        bad[t] = rng.random(n) < cfg.misbehaving_fraction
    shift = np.where(bad, cfg.attack_shift, cfg.honest_shift)[..., None]
    a = np.full((topics, n, W), 1.0 / W)
    rows = []
    for e in error_rates:
        counts = cfg.spec.counts(z + shift * (coin < e))
        b, u = k_from_evidence(counts, W)
        D = pairwise_dc(b, u, a)
        for th in thetas:
            res = batch_detect(b, u, a, th, cfg.fusion, None, None, D)
            flagged = ~res.honest
            p_tp = flagged[bad].mean() if bad.any() else float("nan")
            p_fp = flagged[~bad].mean() if (~bad).any() else float("nan")
            rows.append((float(e), float(th), float(p_tp), float(p_fp)))
    return SweepResult("scale", SCALE_HEADER, rows, topics * n, seed)
