"""Influence functions, sensitivity curves and stability bound evaluators.

The central objects are finite discrete distributions on X x Y (possibly
signed, for differences), the Hessian operator of the regularized risk

    S = 2*lam*id_H + E_P[ l''(Y - f(X)) <Phi(X), .> Phi(X) ],

and the influence function of the fit map P -> f_{P,lam} toward a point
mass at z = (x, y):

    IF(z) = S^{-1}(E_P[L' Phi]) - L'(y, f(x)) * S^{-1} Phi(x),

with L'(y, t) = -l'(y - t).  Everything is computed exactly on the
finite span of the data (the operator S maps that span to itself), so no
discretization error enters beyond linear-algebra roundoff.

Contaminated fits minimize the weighted risk E_Q L + lam*||f||^2 with
explicit mixture weights rather than by resampling, which makes the
difference quotient of Eq.-(7) type and the sensitivity curve exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotTwiceDifferentiable, SingularSystem, UnboundedKernel
from .kernels import Kernel, RkhsFunction, as_points, combine, scale
from .losses import Loss
from .solver import Dataset, FitOptions, FitResult, fit


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Weighted point set on X x Y; weights may be signed for differences."""

    xs: np.ndarray
    ys: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        xs = as_points(self.xs)
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (xs.shape[0] == ys.shape[0] == w.shape[0]):
            raise DimensionMismatch(
                f"sizes differ: {xs.shape[0]} xs, {ys.shape[0]} ys, {w.shape[0]} weights"
            )
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def is_probability(self) -> bool:
        return bool(np.all(self.weights >= 0) and abs(self.weights.sum() - 1.0) <= 1e-12)

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "DiscreteDistribution":
        """Empirical distribution with uniform weights 1/n."""
        return cls(dataset.xs, dataset.ys, np.full(dataset.n, 1.0 / dataset.n))

    @classmethod
    def point_mass(cls, x, y: float, dim: int | None = None) -> "DiscreteDistribution":
        xs = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
        if dim is not None and xs.shape[1] != dim:
            raise DimensionMismatch(f"point mass has dimension {xs.shape[1]}, expected {dim}")
        return cls(xs, [float(y)], [1.0])


def mixture(p: DiscreteDistribution, ptilde: DiscreteDistribution,
            eps: float) -> DiscreteDistribution:
    """(1 - eps) * P + eps * Ptilde as a concatenated weighted point set."""
    if p.dim != ptilde.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {ptilde.dim}")
    return DiscreteDistribution(
        np.vstack([p.xs, ptilde.xs]),
        np.concatenate([p.ys, ptilde.ys]),
        np.concatenate([(1.0 - eps) * p.weights, eps * ptilde.weights]),
    )


def signed_difference(p: DiscreteDistribution, ptilde: DiscreteDistribution):
    """P - Ptilde as a signed measure.

    The representation concatenates the point lists without cancelling
    coincident points; moments computed on it dominate those of the true
    difference, so bounds evaluated this way remain valid upper bounds.
    """
    if p.dim != ptilde.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {ptilde.dim}")
    return DiscreteDistribution(
        np.vstack([p.xs, ptilde.xs]),
        np.concatenate([p.ys, ptilde.ys]),
        np.concatenate([p.weights, -ptilde.weights]),
    )


def moment(mu: DiscreteDistribution, q: float) -> float:
    """Total-variation moment: sum_i |w_i| |y_i|^q (q = 0 gives ||mu||_M)."""
    if q < 0:
        raise ValueError(f"moment order must be >= 0, got {q}")
    aw = np.abs(mu.weights)
    if q == 0:
        return float(aw.sum())
    return float(aw @ np.abs(mu.ys) ** q)


def risk(loss: Loss, p: DiscreteDistribution, f: RkhsFunction | None) -> float:
    """E_P l(y - f(x)); f = None means the zero function."""
    pred = 0.0 if f is None else f.eval(p.xs)
    return float(p.weights @ loss.value(p.ys - pred))


def fit_distribution(loss: Loss, kernel: Kernel, p: DiscreteDistribution,
                     lam: float, opts: FitOptions | None = None) -> FitResult:
    """Fit the regularized risk minimizer under a nonnegative discrete P."""
    if np.any(p.weights < 0):
        raise ValueError("cannot fit a signed distribution")
    return fit(loss, kernel, Dataset(p.xs, p.ys), lam, weights=p.weights, opts=opts)


# -- Hessian operator ---------------------------------------------------


def _require_c2(loss: Loss):
    if loss.smoothness != "C2":
        raise NotTwiceDifferentiable(
            f"{loss.spec} is not twice continuously differentiable; "
            "use difference_quotient or sensitivity_curve instead"
        )


def _union_basis(p: DiscreteDistribution, extra: np.ndarray | None):
    """Deduplicated union of P's support and extra centers.

    Returns (basis (m, d), index of each P-point in the basis).  The
    operator S maps span{Phi(u): u in basis} to itself, so solves on
    this basis are exact.
    """
    pts = [p.xs] if extra is None else [p.xs, as_points(extra, dim=p.dim)]
    stacked = np.vstack(pts)
    basis, inverse = np.unique(stacked, axis=0, return_inverse=True)
    return basis, inverse


def _hessian_matrix(loss, kernel, p, fit_vals, lam, basis, inverse):
    """Matrix of S restricted to the basis span, in coefficient coordinates."""
    lpp = loss.second_derivative(p.ys - fit_vals)
    coef = p.weights * lpp  # contribution per P-point
    ctilde = np.zeros(basis.shape[0])
    np.add.at(ctilde, inverse[: p.n], coef)
    k_uu = kernel.gram(basis)
    return 2.0 * lam * np.eye(basis.shape[0]) + ctilde[:, None] * k_uu


def _embed(rhs: RkhsFunction, basis: np.ndarray) -> np.ndarray:
    """Coefficients of rhs over the basis; rhs centers must be among it."""
    coef = np.zeros(basis.shape[0])
    if rhs.centers.shape[0] == 0:
        return coef
    flat = {tuple(u): j for j, u in enumerate(basis)}
    for c, u in zip(rhs.coefficients, rhs.centers):
        j = flat.get(tuple(u))
        if j is None:
            raise DimensionMismatch("rhs center outside the solve basis")
        coef[j] += c
    return coef


def hessian_apply(loss: Loss, kernel: Kernel, p: DiscreteDistribution,
                  fitted: RkhsFunction, lam: float, g: RkhsFunction) -> RkhsFunction:
    """Forward application S g, assembled through generic expansion algebra.

    Independent of the matrix route used by :func:`hessian_apply_inverse`,
    which makes it usable as a correctness oracle for the solve.
    """
    _require_c2(loss)
    lpp = loss.second_derivative(p.ys - fitted.eval(p.xs))
    weights = p.weights * lpp * g.eval(p.xs)
    data_part = RkhsFunction(kernel, p.xs, weights)
    return combine(scale(g, 2.0 * lam), data_part, 1.0, 1.0)


def hessian_apply_inverse(loss: Loss, kernel: Kernel, p: DiscreteDistribution,
                          fitted: RkhsFunction, lam: float,
                          rhs: RkhsFunction) -> RkhsFunction:
    """Solve S g = rhs exactly on the finite span.

    The solution is expanded over the union of P's support and the rhs
    centers; S maps that span to itself and S >= 2*lam*id, so the
    restricted system is square and invertible.  The result is verified
    by forward application; failure raises :class:`SingularSystem`.
    """
    _require_c2(loss)
    basis, inverse = _union_basis(p, rhs.centers if rhs.centers.shape[0] else None)
    a = _hessian_matrix(loss, kernel, p, fitted.eval(p.xs), lam, basis, inverse)
    b = _embed(rhs, basis)
    try:
        coef = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(a, b, rcond=None)[0]
    sol = RkhsFunction(kernel, basis, coef)
    forward = hessian_apply(loss, kernel, p, fitted, lam, sol)
    err = combine(forward, rhs, 1.0, -1.0).norm_h()
    rhs_norm = rhs.norm_h()
    if err > 1e-8 * (1.0 + rhs_norm):
        raise SingularSystem(
            f"Hessian solve verification failed: residual {err:.3e} "
            f"for rhs norm {rhs_norm:.3e}"
        )
    return sol


# -- influence function -------------------------------------------------


@dataclass(frozen=True, eq=False)
class InfluenceResult:
    """Influence function at a contamination point, split per source term."""

    if_function: RkhsFunction
    if_norm: float
    contamination_point: tuple
    first_term: RkhsFunction
    second_term: RkhsFunction
    first_term_identity_gap: float
    fit_result: FitResult


def influence_function(loss: Loss, kernel: Kernel, p: DiscreteDistribution,
                       lam: float, z, opts: FitOptions | None = None,
                       fit_result: FitResult | None = None) -> InfluenceResult:
    """Influence function of the fit map at contamination point z = (x, y).

    Only defined for the C2 losses (least squares, logistic); kinked
    losses raise :class:`NotTwiceDifferentiable` and are diagnosed with
    :func:`difference_quotient` / :func:`sensitivity_curve` instead.
    Requires a kernel with a finite sup-norm.

    The first term S^{-1}(E_P[L' Phi]) is also recomputed through the
    stationarity identity E_P[L' Phi] = -2*lam*f and the H-norm gap of
    the two routes is reported.
    """
    _require_c2(loss)
    if kernel.sup_norm is None:
        raise UnboundedKernel(
            "influence function requires a bounded kernel (declare a domain box)"
        )
    zx, zy = z
    zx = np.atleast_1d(np.asarray(zx, dtype=float))
    if zx.shape[0] != p.dim:
        raise DimensionMismatch(f"z has dimension {zx.shape[0]}, expected {p.dim}")

    if fit_result is None:
        fit_result = fit_distribution(loss, kernel, p, lam, opts=opts)
    fitted = fit_result.f_hat

    # first term: E_P[L' Phi] has coefficients w_i * (-l'(r_i)) over P's support
    resid = p.ys - fitted.eval(p.xs)
    ep_lprime = RkhsFunction(kernel, p.xs, -p.weights * loss.derivative(resid))
    first = hessian_apply_inverse(loss, kernel, p, fitted, lam, ep_lprime)
    alt = hessian_apply_inverse(loss, kernel, p, fitted, lam, scale(fitted, -2.0 * lam))
    identity_gap = combine(first, alt, 1.0, -1.0).norm_h()

    # second term: -L'(y, f(x)) S^{-1} Phi(x) = l'(y - f(x)) * S^{-1} Phi(x)
    phi_x = RkhsFunction(kernel, zx.reshape(1, -1), [1.0])
    s_inv_phi = hessian_apply_inverse(loss, kernel, p, fitted, lam, phi_x)
    factor = float(loss.derivative(float(zy) - fitted(zx)))
    second = scale(s_inv_phi, factor)

    if_fn = combine(first, second, 1.0, 1.0)
    return InfluenceResult(
        if_function=if_fn,
        if_norm=if_fn.norm_h(),
        contamination_point=(tuple(float(v) for v in zx), float(zy)),
        first_term=first,
        second_term=second,
        first_term_identity_gap=identity_gap,
        fit_result=fit_result,
    )


# -- finite-contamination diagnostics -----------------------------------


def difference_quotient(loss: Loss, kernel: Kernel, p: DiscreteDistribution,
                        lam: float, z, eps: float,
                        opts: FitOptions | None = None,
                        base: FitResult | None = None) -> RkhsFunction:
    """(T((1 - eps)P + eps*Delta_z) - T(P)) / eps for a point mass at z."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    zx, zy = z
    delta = DiscreteDistribution.point_mass(zx, zy, dim=p.dim)
    if base is None:
        base = fit_distribution(loss, kernel, p, lam, opts=opts)
    contaminated = fit_distribution(loss, kernel, mixture(p, delta, eps), lam, opts=opts)
    return combine(contaminated.f_hat, base.f_hat, 1.0 / eps, -1.0 / eps)


def sensitivity_curve(loss: Loss, kernel: Kernel, dataset: Dataset, lam: float,
                      z, opts: FitOptions | None = None,
                      base: FitResult | None = None) -> RkhsFunction:
    """n * (T_n(z_1..z_{n-1}, z) - T_{n-1}(z_1..z_{n-1})) with n = len + 1.

    Identical to the eps = 1/n difference quotient for estimators defined
    through the empirical fit map, which the suite checks.
    """
    if dataset.n < 1:
        raise ValueError("sensitivity curve needs at least one base observation")
    n = dataset.n + 1
    zx, zy = z
    zx = np.atleast_1d(np.asarray(zx, dtype=float))
    if base is None:
        base = fit(loss, kernel, dataset, lam, opts=opts)
    augmented = Dataset(
        np.vstack([dataset.xs, zx.reshape(1, -1)]),
        np.concatenate([dataset.ys, [float(zy)]]),
    )
    with_z = fit(loss, kernel, augmented, lam, opts=opts)
    return combine(with_z.f_hat, base.f_hat, float(n), -float(n))


# -- bound evaluators ----------------------------------------------------


@dataclass(frozen=True)
class BoundsReport:
    """Evaluated stability bounds next to the measured H-norm shift.

    ``thm17_general_bound`` is informational only: its printed grouping
    is ambiguous, so it is evaluated under the reading that multiplies
    both moment terms by c * lam^-1 * ||k||_inf * eps but never asserted.
    """

    lam: float
    eps: float
    delta_p_lambda: float
    observed_shift: float
    thm16_bound: float | None
    thm17_lipschitz_bound: float | None
    thm17_general_bound: float | None
    sc_bound: float | None
    violations: tuple = ()
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "eps": self.eps,
            "delta_p_lambda": self.delta_p_lambda,
            "observed_shift": self.observed_shift,
            "thm16_bound": self.thm16_bound,
            "thm17_lipschitz_bound": self.thm17_lipschitz_bound,
            "thm17_general_bound_informational": self.thm17_general_bound,
            "sc_bound": self.sc_bound,
            "violations": list(self.violations),
            "constants": dict(self.constants),
        }


def bounds_report(loss: Loss, kernel: Kernel, p: DiscreteDistribution,
                  ptilde: DiscreteDistribution, lam: float, eps: float,
                  opts: FitOptions | None = None,
                  base: FitResult | None = None) -> BoundsReport:
    """Evaluate every applicable stability bound against the measured shift.

    Fits f under P and under (1 - eps)P + eps*Ptilde, measures the
    H-norm difference and compares it with the growth-type bound and,
    for Lipschitz losses, the total-variation bound.  Requires a kernel
    with finite sup-norm.
    """
    if kernel.sup_norm is None:
        raise UnboundedKernel("bound evaluation requires a bounded kernel")
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must be in [0, 1), got {eps}")
    knorm = kernel.sup_norm

    if base is None:
        base = fit_distribution(loss, kernel, p, lam, opts=opts)
    if eps == 0.0:
        observed = 0.0
    else:
        contaminated = fit_distribution(loss, kernel, mixture(p, ptilde, eps), lam, opts=opts)
        observed = combine(contaminated.f_hat, base.f_hat, 1.0, -1.0).norm_h()

    r0 = risk(loss, p, None)
    delta = float(np.sqrt(r0 / lam))
    c = loss.type_constant_c
    pp = loss.order_p
    p_a = moment(p, pp)
    pt_a = moment(ptilde, pp)

    thm16 = None
    if delta > 0:
        thm16 = (2.0 * c / (lam * delta)) * eps * (
            p_a + pt_a + 2.0 ** (pp + 1.0) * delta**pp * knorm**pp + 2.0
        )

    diff = signed_difference(p, ptilde)
    lip = loss.lipschitz_constant
    thm17_lip = None
    sc_bound = None
    if lip is not None:
        thm17_lip = (lip * knorm / lam) * moment(diff, 0) * eps
        sc_bound = 2.0 * lip * knorm / lam

    general = (c * knorm / lam) * eps * (
        moment(diff, pp - 1.0)
        + moment(diff, 0)
        * (knorm ** (pp - 1.0) * moment(p, pp) ** ((pp - 1.0) / 2.0)
           * lam ** ((1.0 - pp) / 2.0) + 1.0)
    )

    violations = []
    if thm16 is not None and observed > thm16:
        violations.append("thm16")
    if thm17_lip is not None and observed > thm17_lip:
        violations.append("thm17_lipschitz")

    return BoundsReport(
        lam=lam, eps=eps, delta_p_lambda=delta, observed_shift=observed,
        thm16_bound=thm16, thm17_lipschitz_bound=thm17_lip,
        thm17_general_bound=general, sc_bound=sc_bound,
        violations=tuple(violations),
        constants={
            "type_constant_c": c,
            "order_p": pp,
            "lipschitz_constant": lip,
            "kernel_sup_norm": knorm,
            "P_a_moment": p_a,
            "Ptilde_a_moment": pt_a,
            "diff_total_variation": moment(diff, 0),
        },
    )
