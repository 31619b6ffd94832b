"""Synthetic scenario generators, risk oracles and the consistency study.

The scenario catalogue reproduces a linear-signal design: 101 equispaced
inputs on [-5, 5], responses y = x + e with standard normal noise, plus
named contamination patterns (a gross y-outlier, leverage points far
outside the design, and a good/bad leverage pair).  The consistency
study fits a shrinking-regularization schedule over growing sample sizes
and tracks the held-out risk gap to the analytically computed optimal
risk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtri

from .errors import InvalidSchedule, UnknownScenario, UnsupportedNoiseModel
from .kernels import Kernel, RkhsFunction
from .losses import Loss, eps_insensitive, least_squares, parse_loss
from .solver import Dataset, FitOptions, FitResult, fit
from . import kernels as _kernels

SCENARIO_NAMES = ("fig1a", "fig1b", "fig1c", "fig1d", "consistency")

X_GRID = np.linspace(-5.0, 5.0, 101)


@dataclass(frozen=True)
class ScenarioSpec:
    """A named data scenario; (name, seed, overrides) fully determine it."""

    name: str
    seed: int = 0
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class GeneratedData:
    dataset: Dataset
    outlier_indices: tuple
    clean_n: int


def _base_sample(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    xs = X_GRID.copy()
    ys = xs + rng.standard_normal(xs.shape[0])
    return xs.reshape(-1, 1), ys


def generate(spec: ScenarioSpec) -> GeneratedData:
    """Generate a named scenario deterministically from its seed.

    fig1a: clean linear data, n = 101.
    fig1b: fig1a with the response at x = -2 replaced by 100.
    fig1c: fig1a plus ``extreme_copies`` (default 3) copies of (100, 0).
    fig1d: fig1a plus (100, 100) and (0, 100); with the
        ``caption_variant`` override the pair is (100, 0), (100, 100).
    consistency: ``n`` uniform inputs on [-5, 5] with the same response
        model (used by the consistency study).
    """
    known = {"extreme_copies", "caption_variant", "n"}
    unknown = set(spec.overrides) - known
    if unknown:
        raise UnknownScenario(f"unknown overrides {sorted(unknown)}")

    if spec.name == "fig1a":
        xs, ys = _base_sample(spec.seed)
        return GeneratedData(Dataset(xs, ys), (), 101)
    if spec.name == "fig1b":
        xs, ys = _base_sample(spec.seed)
        idx = int(np.argmin(np.abs(xs[:, 0] - (-2.0))))
        ys = ys.copy()
        ys[idx] = 100.0
        return GeneratedData(Dataset(xs, ys), (idx,), 101)
    if spec.name == "fig1c":
        copies = int(spec.overrides.get("extreme_copies", 3))
        if not 1 <= copies <= 3:
            raise UnknownScenario(f"extreme_copies must be 1..3, got {copies}")
        xs, ys = _base_sample(spec.seed)
        xs = np.vstack([xs, np.full((copies, 1), 100.0)])
        ys = np.concatenate([ys, np.zeros(copies)])
        return GeneratedData(Dataset(xs, ys), tuple(range(101, 101 + copies)), 101)
    if spec.name == "fig1d":
        xs, ys = _base_sample(spec.seed)
        if spec.overrides.get("caption_variant", False):
            extra = [(100.0, 0.0), (100.0, 100.0)]
        else:
            extra = [(100.0, 100.0), (0.0, 100.0)]
        xs = np.vstack([xs] + [np.array([[x]]) for x, _ in extra])
        ys = np.concatenate([ys, [y for _, y in extra]])
        return GeneratedData(Dataset(xs, ys), (101, 102), 101)
    if spec.name == "consistency":
        n = int(spec.overrides.get("n", 101))
        rng = np.random.default_rng(spec.seed)
        xs = rng.uniform(-5.0, 5.0, n).reshape(-1, 1)
        ys = xs[:, 0] + rng.standard_normal(n)
        return GeneratedData(Dataset(xs, ys), (), n)
    raise UnknownScenario(f"unknown scenario {spec.name!r}; expected one of {SCENARIO_NAMES}")


# -- risk oracles --------------------------------------------------------


@dataclass(frozen=True)
class GaussianNoise:
    """Additive N(0, sigma^2) noise on the identity signal f*(x) = x."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise UnsupportedNoiseModel(f"sigma must be > 0, got {self.sigma}")


def _noise_risk_quadrature(loss: Loss, sigma: float, shift: float = 0.0,
                           epsabs: float = 1e-12) -> float:
    """E l(e - shift) for e ~ N(0, sigma^2) by adaptive quadrature."""
    lo, hi = shift - 40.0 * sigma, shift + 40.0 * sigma
    pts = sorted(k + shift for k in loss.kinks if lo < k + shift < hi)

    def integrand(e):
        return loss.value(e - shift) * np.exp(-0.5 * (e / sigma) ** 2) / (
            sigma * np.sqrt(2.0 * np.pi)
        )

    val, _ = quad(integrand, lo, hi, points=pts or None, epsabs=epsabs, limit=200)
    return float(val)


def bayes_risk(loss: Loss, noise: GaussianNoise) -> float:
    """Optimal risk inf_f E l(y - f(x)) under the Gaussian noise model.

    For symmetric losses the optimal predictor is the signal itself; for
    the pinball loss it is shifted by the noise tau-quantile, giving the
    closed form sigma * phi(Phi^{-1}(tau)).  Closed forms are used where
    available, adaptive quadrature (1e-10 absolute) otherwise.
    """
    if not isinstance(noise, GaussianNoise):
        raise UnsupportedNoiseModel(f"unsupported noise model {noise!r}")
    s = noise.sigma
    if loss.kind == "least_squares":
        return s * s
    if loss.kind == "pinball":
        zq = float(ndtri(loss.param))
        return float(s * np.exp(-0.5 * zq * zq) / np.sqrt(2.0 * np.pi))
    if loss.kind == "eps_insensitive":
        # 2*[sigma*phi(m) - eps*(1 - Phi(m))], m = eps/sigma
        from scipy.stats import norm

        m = loss.param / s
        return float(2.0 * (s * norm.pdf(m) - loss.param * norm.sf(m)))
    return _noise_risk_quadrature(loss, s)


def estimate_risk(loss: Loss, f: RkhsFunction, xs, ys, chunk: int = 20000) -> float:
    """Monte-Carlo risk estimate of a fitted expansion, chunked for memory."""
    xs = np.asarray(xs, dtype=float).reshape(-1, 1) if np.asarray(xs).ndim == 1 else np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    total = 0.0
    for start in range(0, xs.shape[0], chunk):
        block = slice(start, start + chunk)
        total += float(np.sum(loss.value(ys[block] - f.eval(xs[block]))))
    return total / xs.shape[0]


# -- consistency study ----------------------------------------------------


@dataclass(frozen=True)
class LambdaSchedule:
    """lambda_n = n^(-exponent), written "lambda=n^-0.25"."""

    exponent: float

    def __call__(self, n: int) -> float:
        return float(n) ** (-self.exponent)

    @property
    def spec(self) -> str:
        return f"lambda=n^-{self.exponent:g}"


def parse_schedule(text: str) -> LambdaSchedule:
    text = text.strip()
    prefix = "lambda=n^"
    if not text.startswith(prefix):
        raise ValueError(f"bad schedule {text!r}; expected like 'lambda=n^-0.25'")
    try:
        exponent = -float(text[len(prefix):])
    except ValueError:
        raise ValueError(f"bad schedule exponent in {text!r}") from None
    return LambdaSchedule(exponent)


def validate_schedule(loss: Loss, ns, schedule: LambdaSchedule) -> None:
    """Check the consistency conditions along the n-grid.

    Requires lambda_n -> 0 (strictly decreasing along the grid) and
    lambda_n^{p*} * n -> infinity with p* = max(2p, p^2): strictly
    increasing with the final value at least twice the initial one.
    Raises :class:`InvalidSchedule` otherwise.
    """
    ns = [int(n) for n in ns]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise InvalidSchedule("n-grid must be strictly increasing with >= 2 entries")
    lams = [schedule(n) for n in ns]
    if any(b >= a for a, b in zip(lams, lams[1:])):
        raise InvalidSchedule(
            f"{schedule.spec}: lambda_n must decrease toward 0 along the grid"
        )
    p = loss.order_p
    pstar = max(2.0 * p, p * p)
    growth = [lam**pstar * n for lam, n in zip(lams, ns)]
    if any(b <= a for a, b in zip(growth, growth[1:])):
        raise InvalidSchedule(
            f"{schedule.spec}: lambda_n^(p*) * n must increase (p* = {pstar:g})"
        )
    if growth[-1] < 2.0 * growth[0]:
        raise InvalidSchedule(
            f"{schedule.spec}: lambda_n^(p*) * n grows only "
            f"{growth[-1] / growth[0]:.2f}x over the grid (p* = {pstar:g})"
        )


@dataclass(frozen=True, eq=False)
class ConsistencyRunResult:
    n_values: tuple
    lambda_values: tuple
    empirical_risks: np.ndarray  # (len(ns), n_seeds) held-out risk estimates
    bayes_risk: float
    decreasing_trend: bool
    median_gaps: tuple
    wall_times: np.ndarray

    @property
    def final_initial_gap_ratio(self) -> float:
        return self.median_gaps[-1] / self.median_gaps[0]


def consistency_study(loss: Loss, kernel: Kernel, schedule: LambdaSchedule,
                      ns, n_seeds: int, base_seed: int = 0,
                      test_size: int = 100_000, sigma: float = 1.0,
                      opts: FitOptions | None = None,
                      threads: int = 1) -> ConsistencyRunResult:
    """Risk-consistency trend study over growing samples.

    For every (n, seed) cell a fresh training sample is drawn, fitted
    with lambda_n, and its risk estimated on a single shared held-out
    test sample (common random numbers keep the cross-n comparison
    sharp).  The trend flag reports whether the median-over-seeds gap to
    the optimal risk is non-increasing across the n-grid.
    """
    validate_schedule(loss, ns, schedule)
    ns = [int(n) for n in ns]
    noise = GaussianNoise(sigma)
    target = bayes_risk(loss, noise)

    test_rng = np.random.default_rng([base_seed, 987_654_321])
    test_xs = test_rng.uniform(-5.0, 5.0, test_size).reshape(-1, 1)
    test_ys = test_xs[:, 0] + sigma * test_rng.standard_normal(test_size)

    def cell(i, j):
        n = ns[i]
        rng = np.random.default_rng([base_seed, n, j])
        xs = rng.uniform(-5.0, 5.0, n).reshape(-1, 1)
        ys = xs[:, 0] + sigma * rng.standard_normal(n)
        start = time.perf_counter()
        result = fit(loss, kernel, Dataset(xs, ys), schedule(n), opts=opts)
        wall = time.perf_counter() - start
        return estimate_risk(loss, result.f_hat, test_xs, test_ys), wall

    risks = np.zeros((len(ns), n_seeds))
    walls = np.zeros((len(ns), n_seeds))
    cells = [(i, j) for i in range(len(ns)) for j in range(n_seeds)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for (i, j), (rv, wv) in zip(cells, pool.map(lambda c: cell(*c), cells)):
                risks[i, j], walls[i, j] = rv, wv
    else:
        for i, j in cells:
            risks[i, j], walls[i, j] = cell(i, j)

    medians = tuple(float(np.median(risks[i]) - target) for i in range(len(ns)))
    trend = all(b <= a for a, b in zip(medians, medians[1:]))
    return ConsistencyRunResult(
        n_values=tuple(ns),
        lambda_values=tuple(schedule(n) for n in ns),
        empirical_risks=risks,
        bayes_risk=target,
        decreasing_trend=trend,
        median_gaps=medians,
        wall_times=walls,
    )


# -- scenario comparison ---------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    name: str
    loss: str
    kernel: str
    lam: float


DEFAULT_CONFIGS = (
    FitConfig("eps_rbf", "eps:0.1", "rbf:0.1", 0.05),
    FitConfig("eps_linear", "eps:0.1", "linear", 0.05),
    FitConfig("ls_rbf", "ls", "rbf:0.1", 0.05),
)


@dataclass(frozen=True, eq=False)
class ComparisonRow:
    config: FitConfig
    max_abs_deviation: float
    deviation_at: dict
    clean_values: np.ndarray
    contaminated_values: np.ndarray


@dataclass(frozen=True, eq=False)
class ComparisonResult:
    scenario: ScenarioSpec
    grid: np.ndarray
    rows: tuple
    clean_data: GeneratedData
    contaminated_data: GeneratedData


def fig1_comparison(scenario: ScenarioSpec, configs=DEFAULT_CONFIGS,
                    probe_xs=None, opts: FitOptions | None = None) -> ComparisonResult:
    """Fit each configuration on the clean and contaminated data and
    report the deviation of the contaminated fit on the design grid."""
    if scenario.name not in ("fig1b", "fig1c", "fig1d"):
        raise UnknownScenario(
            f"comparison needs a contaminated scenario, got {scenario.name!r}"
        )
    clean = generate(ScenarioSpec("fig1a", scenario.seed))
    contaminated = generate(scenario)
    grid = X_GRID.reshape(-1, 1)
    if probe_xs is None:
        probe_xs = {"fig1b": (-2.0,), "fig1c": (5.0,), "fig1d": (0.0,)}[scenario.name]

    rows = []
    for config in configs:
        loss = parse_loss(config.loss)
        kernel = _kernels.parse_kernel(config.kernel)
        f_clean = fit(loss, kernel, clean.dataset, config.lam, opts=opts).f_hat
        f_cont = fit(loss, kernel, contaminated.dataset, config.lam, opts=opts).f_hat
        clean_vals = f_clean.eval(grid)
        cont_vals = f_cont.eval(grid)
        deviation_at = {
            float(x): abs(f_cont(float(x)) - f_clean(float(x))) for x in probe_xs
        }
        rows.append(ComparisonRow(
            config=config,
            max_abs_deviation=float(np.max(np.abs(cont_vals - clean_vals))),
            deviation_at=deviation_at,
            clean_values=clean_vals,
            contaminated_values=cont_vals,
        ))
    return ComparisonResult(
        scenario=scenario, grid=X_GRID.copy(), rows=tuple(rows),
        clean_data=clean, contaminated_data=contaminated,
    )
