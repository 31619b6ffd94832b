"""Regularized empirical risk minimization over the span of the data.

Minimizes  sum_i w_i * l(y_i - f(x_i)) + lam * ||f||_H^2  over the finite
expansion f = sum_i alpha_i k(., x_i); by the representer form of the
first-order conditions the minimizer lies in that span, so the finite
problem is exact, not an approximation.

Solvers:

* smooth losses (least squares, logistic): damped Newton with Armijo
  backtracking.  The Newton system G''*d = -grad factors as
  (2*lam*I + diag(w*l'')G) d = -(2*lam*alpha - w*l'(r)), which is the same
  direction restricted to the span but much better conditioned than the
  doubly-Gram form.
* kinked losses (eps-insensitive, huber, pinball): projected subgradient
  with step 1/(2*lam*(t+1)) (the objective is 2*lam-strongly convex in H),
  periodically finished by an active-set refinement that solves the
  piecewise-linear stationarity system exactly.  The subgradient track
  alone cannot certify stationarity for losses with derivative jumps --
  the min-norm-subgradient certificate is discontinuous at the optimum --
  so the refinement supplies the exact kink residuals.

Convergence is always decided by the stationarity certificate: the
H-norm of the minimal element of 2*lam*f - sum_i w_i s_i Phi(x_i) over
admissible subgradients s_i, a convex box QP solved by projected
coordinate descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidLambda, NonConvergence
from .kernels import Kernel, RkhsFunction, as_points, solve_psd
from .losses import Loss


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training sample: xs (n, d), ys (n,)."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = as_points(self.xs)
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if xs.shape[0] != ys.shape[0]:
            raise DimensionMismatch(f"{xs.shape[0]} xs for {ys.shape[0]} ys")
        if xs.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-6
    max_newton_iter: int = 200
    subgradient_budget: int = 50_000
    polish_every: int = 500
    max_polish_rounds: int = 200
    kink_snap: float = 1e-9
    allow_nonconverged: bool = False


@dataclass(frozen=True, eq=False)
class FitResult:
    """A fitted expansion plus solver diagnostics."""

    f_hat: RkhsFunction
    lam: float
    objective: float
    stationarity_residual: float
    iterations: int
    solver_kind: str
    converged: bool
    norm_h: float
    prop8_delta: float

    @property
    def coefficients(self) -> np.ndarray:
        return self.f_hat.coefficients


def _weights(dataset: Dataset, weights) -> np.ndarray:
    if weights is None:
        return np.full(dataset.n, 1.0 / dataset.n)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != dataset.n:
        raise DimensionMismatch(f"{w.shape[0]} weights for n={dataset.n}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("fit weights must be finite and nonnegative")
    if not w.sum() > 0:
        raise ValueError("fit weights must not all vanish")
    return w


def _check_lambda(lam: float) -> float:
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidLambda(f"lambda must be > 0, got {lam}")
    return float(lam)


def _objective_alpha(loss, g, ys, w, lam, alpha) -> float:
    r = ys - g @ alpha
    return float(w @ loss.value(r) + lam * alpha @ g @ alpha)


def objective(loss: Loss, kernel: Kernel, dataset: Dataset, lam: float, alpha,
              weights=None) -> float:
    """Regularized empirical risk at coefficient vector alpha."""
    lam = _check_lambda(lam)
    w = _weights(dataset, weights)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.shape[0] != dataset.n:
        raise DimensionMismatch(f"{alpha.shape[0]} coefficients for n={dataset.n}")
    g = kernel.gram(dataset.xs)
    return _objective_alpha(loss, g, dataset.ys, w, lam, alpha)


def risk_at_zero(loss: Loss, ys, weights=None) -> float:
    """Risk of the zero function: sum_i w_i * l(y_i)."""
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if weights is None:
        return float(np.mean(loss.value(ys)))
    return float(np.asarray(weights, dtype=float) @ loss.value(ys))


# -- stationarity certificate -----------------------------------------


def _certificate_alpha(loss, g, ys, w, lam, alpha, snap) -> float:
    """H-norm of the minimal admissible stationarity element.

    Minimizes ||2*lam*f - sum_i w_i s_i Phi(x_i)||_H over s_i in the
    subdifferential interval of the loss at the current residuals
    (widened by ``snap`` at kinks), via projected coordinate descent on
    the box QP.  Exact (no QP needed) when every interval is a point.
    """
    r = ys - g @ alpha
    lo, hi = loss.subdifferential_bounds(r, snap=snap)
    s = 0.5 * (lo + hi)
    v = 2.0 * lam * alpha - w * s
    gv = g @ v
    free = np.flatnonzero((hi > lo) & (w > 0) & (np.diag(g) > 0))
    if free.size == 0:
        return float(np.sqrt(max(v @ gv, 0.0)))
    q = float(v @ gv)
    for _ in range(200):
        for i in free:
            step = gv[i] / (w[i] * g[i, i])
            s_new = min(max(s[i] + step, lo[i]), hi[i])
            delta = s_new - s[i]
            if delta == 0.0:
                continue
            s[i] = s_new
            v[i] -= w[i] * delta
            gv -= g[:, i] * (w[i] * delta)
        q_new = float(v @ gv)
        if q - q_new <= 1e-15 * max(abs(q_new), 1e-30):
            q = q_new
            break
        q = q_new
    return float(np.sqrt(max(q, 0.0)))


def stationarity_certificate(loss: Loss, dataset: Dataset, lam: float,
                             f_hat: RkhsFunction, weights=None,
                             snap: float = 1e-9) -> float:
    """Certified distance from stationarity of ``f_hat`` in H-norm.

    ``f_hat`` must be expanded over the training points.  A value at
    solver tolerance certifies (by convexity) that ``f_hat`` is the
    global minimizer up to that tolerance.
    """
    lam = _check_lambda(lam)
    if not np.array_equal(f_hat.centers, dataset.xs):
        raise DimensionMismatch("f_hat must be expanded over the training xs")
    w = _weights(dataset, weights)
    g = f_hat.kernel.gram(dataset.xs)
    return _certificate_alpha(loss, g, dataset.ys, w, lam, f_hat.coefficients, snap)


# -- closed-form least squares oracle ----------------------------------


def closed_form_ls(kernel: Kernel, dataset: Dataset, lam: float,
                   weights=None) -> FitResult:
    """Exact stationary point for the least squares loss.

    Uniform weights solve (G + n*lam*I) alpha = y; general nonnegative
    weights solve (G_ss + lam*diag(1/w_s)) alpha_s = y_s on the support.
    Serves as the oracle the iterative path is tested against.
    """
    from .losses import least_squares

    lam = _check_lambda(lam)
    w = _weights(dataset, weights)
    g = kernel.gram(dataset.xs)
    alpha = np.zeros(dataset.n)
    support = np.flatnonzero(w > 0)
    a = g[np.ix_(support, support)] + lam * np.diag(1.0 / w[support])
    alpha[support] = solve_psd(a, dataset.ys[support])
    loss = least_squares()
    obj = _objective_alpha(loss, g, dataset.ys, w, lam, alpha)
    res = _certificate_alpha(loss, g, dataset.ys, w, lam, alpha, snap=0.0)
    f_hat = RkhsFunction(kernel, dataset.xs, alpha)
    r0 = float(w @ loss.value(dataset.ys))
    return FitResult(
        f_hat=f_hat, lam=lam, objective=obj, stationarity_residual=res,
        iterations=0, solver_kind="closed_form", converged=True,
        norm_h=f_hat.norm_h(), prop8_delta=float(np.sqrt(r0 / lam)),
    )


# -- Newton path for C2 losses -----------------------------------------


def _newton(loss, g, ys, w, lam, opts, alpha):
    n = alpha.shape[0]
    obj = _objective_alpha(loss, g, ys, w, lam, alpha)
    iters = 0
    for _ in range(opts.max_newton_iter):
        r = ys - g @ alpha
        grad_h = 2.0 * lam * alpha - w * loss.derivative(r)
        res = float(np.sqrt(max(grad_h @ g @ grad_h, 0.0)))
        if res <= opts.tol:
            return alpha, iters, res, obj, True
        m = 2.0 * lam * np.eye(n) + (w * loss.second_derivative(r))[:, None] * g
        try:
            direction = np.linalg.solve(m, -grad_h)
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(m, -grad_h, rcond=None)[0]
        slope = float(grad_h @ g @ direction)
        if slope >= 0:  # numerical breakdown; fall back to steepest descent in H
            direction = -grad_h
            slope = float(grad_h @ g @ direction)
            if slope >= 0:
                return alpha, iters, res, obj, res <= opts.tol
        t = 1.0
        while t > 1e-14:
            cand = alpha + t * direction
            obj_cand = _objective_alpha(loss, g, ys, w, lam, cand)
            if obj_cand <= obj + 1e-4 * t * slope:
                alpha, obj = cand, obj_cand
                break
            t *= 0.5
        iters += 1
    r = ys - g @ alpha
    grad_h = 2.0 * lam * alpha - w * loss.derivative(r)
    res = float(np.sqrt(max(grad_h @ g @ grad_h, 0.0)))
    return alpha, iters, res, obj, res <= opts.tol


# -- active-set refinement for piecewise-linear stationarity -----------


def _segments(loss):
    """Kink locations and the constant derivative on each open segment."""
    kinks = np.asarray(loss.kinks, dtype=float)
    reps = []
    for j in range(kinks.size + 1):
        if j == 0:
            reps.append(kinks[0] - 1.0)
        elif j == kinks.size:
            reps.append(kinks[-1] + 1.0)
        else:
            reps.append(0.5 * (kinks[j - 1] + kinks[j]))
    slopes = np.array([float(loss.derivative(rep)) for rep in reps])
    return kinks, slopes


def _solve_pinned(g, ys, alpha, pinned, targets):
    """Set alpha[pinned] so that (G alpha)[pinned] = targets, others fixed."""
    if pinned.size == 0:
        return alpha
    rest = np.setdiff1d(np.arange(alpha.shape[0]), pinned, assume_unique=False)
    a = g[np.ix_(pinned, pinned)]
    rhs = targets - g[np.ix_(pinned, rest)] @ alpha[rest]
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    sol += np.linalg.lstsq(a, rhs - a @ sol, rcond=None)[0]  # one refinement
    out = alpha.copy()
    out[pinned] = sol
    return out


def _coordinate_sweeps(loss, g, ys, w, lam, s, t, active, sweeps):
    """Exact coordinate minimization on the representer fixed point.

    Writing alpha_i = w_i s_i / (2 lam) (the representer form of the
    stationarity condition), the fit problem becomes a convex program in
    the subgradient variables s over a box with a separable nonsmooth
    term, and cyclic coordinate descent with exact per-coordinate
    minimization converges globally.  ``t = G @ (w * s)`` is maintained
    incrementally; updates mutate ``s`` and ``t`` in place.
    """
    diag = np.diag(g)
    for _ in range(sweeps):
        changed = 0.0
        for i in active:
            a = diag[i] * w[i] / (4.0 * lam)
            b = t[i] / (2.0 * lam) - ys[i]
            si = s[i]
            if loss.kind == "eps_insensitive":
                eps = loss.param
                if a > 0:
                    u = si - b / (2.0 * a)
                    v = np.sign(u) * max(abs(u) - eps / (2.0 * a), 0.0)
                    v = min(max(v, -1.0), 1.0)
                else:
                    v = -1.0 if b > eps else (1.0 if b < -eps else 0.0)
            elif loss.kind == "pinball":
                tau = loss.param
                if a > 0:
                    v = min(max(si - b / (2.0 * a), tau - 1.0), tau)
                else:
                    v = tau - 1.0 if b > 0 else (tau if b < 0 else si)
            else:  # huber
                c = loss.param
                v = min(max((2.0 * a * si - b) / (2.0 * a + 1.0), -c), c)
            d = v - si
            if d != 0.0:
                s[i] = v
                t += g[:, i] * (w[i] * d)
                changed = max(changed, abs(d))
        if changed <= 1e-15:
            break
    return s, t


def _finish_piecewise(loss, g, ys, w, lam, s, active):
    """Exact KKT finish for eps-insensitive / pinball from a near-optimal s.

    Points with strictly interior subgradient values belong to a kink
    and get their residual pinned by a linear solve; boundary values are
    segment points with s fixed at the segment slope.  The candidate is
    accepted only when the full KKT system verifies, in which case it is
    the exact global minimizer.
    """
    kinks, slopes = _segments(loss)
    n = ys.shape[0]
    tol_int = 1e-7
    scale = 1.0 + float(np.max(np.abs(ys)))

    alpha = np.zeros(n)
    cls = np.zeros(n, dtype=int)
    near = np.abs(slopes[None, :] - s[:, None])  # distance to each slope level
    for i in active:
        j_best = int(np.argmin(near[i]))
        if near[i, j_best] <= tol_int:
            cls[i] = 2 * j_best  # on a segment slope; trust s
        else:
            cls[i] = 2 * (int(np.searchsorted(slopes, s[i])) - 1) + 1  # kink
    is_kink = (cls % 2 == 1)
    seg_pts = active[~is_kink[active]]
    alpha[seg_pts] = w[seg_pts] * slopes[cls[seg_pts] // 2] / (2.0 * lam)
    pinned = active[is_kink[active]]
    alpha = _solve_pinned(g, ys, alpha, pinned, kinks[cls[pinned] // 2])

    r = ys - g @ alpha
    for i in active:
        j = cls[i] // 2
        if cls[i] % 2 == 1:
            s_i = 2.0 * lam * alpha[i] / w[i]
            if not (slopes[j] - 1e-9 <= s_i <= slopes[j + 1] + 1e-9):
                return alpha, False
            if abs(r[i] - kinks[j]) > 1e-9 * scale:
                return alpha, False
        else:
            lo = kinks[j - 1] if j > 0 else -np.inf
            hi = kinks[j] if j < kinks.size else np.inf
            if not (lo - 1e-9 * scale <= r[i] <= hi + 1e-9 * scale):
                return alpha, False
    return alpha, True


def _finish_huber(loss, g, ys, w, lam, s, active):
    """Exact KKT finish for huber: one block solve over the quadratic set."""
    c = loss.param
    n = ys.shape[0]
    tol_int = 1e-7
    scale = 1.0 + float(np.max(np.abs(ys)))

    alpha = np.zeros(n)
    sat_hi = active[s[active] >= c - tol_int]
    sat_lo = active[s[active] <= -c + tol_int]
    quad = active[np.abs(s[active]) < c - tol_int]
    alpha[sat_hi] = w[sat_hi] * c / (2.0 * lam)
    alpha[sat_lo] = -w[sat_lo] * c / (2.0 * lam)
    if quad.size:
        # 2*lam*alpha_Q = w_Q * (y_Q - (G alpha)_Q)
        a = 2.0 * lam * np.eye(quad.size) + w[quad, None] * g[np.ix_(quad, quad)]
        rest = np.setdiff1d(np.arange(n), quad)
        rhs = w[quad] * (ys[quad] - g[np.ix_(quad, rest)] @ alpha[rest])
        try:
            alpha[quad] = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            alpha[quad] = np.linalg.lstsq(a, rhs, rcond=None)[0]

    r = ys - g @ alpha
    tol_r = 1e-9 * scale
    for i in quad:
        if abs(r[i]) > c + tol_r:
            return alpha, False
    for i in sat_hi:
        if r[i] < c - tol_r:
            return alpha, False
    for i in sat_lo:
        if r[i] > -c + tol_r:
            return alpha, False
    return alpha, True


def _polish_kinked(loss, g, ys, w, lam, alpha0, opts):
    """Coordinate-descent refinement plus exact active-set finish."""
    if loss.kind == "huber":
        finish = _finish_huber
        s_lo, s_hi = -loss.param, loss.param
    else:
        finish = _finish_piecewise
        _, slopes = _segments(loss)
        s_lo, s_hi = slopes[0], slopes[-1]
    active = np.flatnonzero(w > 0)
    s = np.zeros(ys.shape[0])
    s[active] = 2.0 * lam * alpha0[active] / w[active]
    np.clip(s, s_lo, s_hi, out=s)
    t = g @ (w * s)
    alpha = alpha0
    for block in range(40):
        s, t = _coordinate_sweeps(loss, g, ys, w, lam, s, t, active, sweeps=15)
        alpha, ok = finish(loss, g, ys, w, lam, s, active)
        if ok:
            return alpha, True
    return w * s / (2.0 * lam), False


def _subgradient(loss, g, ys, w, lam, opts, alpha):
    """Projected subgradient with periodic active-set finishing."""
    polish = _polish_kinked
    r0 = float(w @ loss.value(ys))
    delta = float(np.sqrt(r0 / lam))  # norm bound of the minimizer

    def project(a):
        q = float(a @ g @ a)
        if q > delta * delta and q > 0:
            return a * (delta / np.sqrt(q))
        return a

    def attempt(a, iters):
        cand, _ = polish(loss, g, ys, w, lam, a, opts)
        res = _certificate_alpha(loss, g, ys, w, lam, cand, snap=opts.kink_snap)
        return cand, res, iters

    alpha = project(alpha.copy())
    best_alpha = alpha.copy()
    best_obj = _objective_alpha(loss, g, ys, w, lam, alpha)

    cand, res, _ = attempt(best_alpha, 0)
    if res <= opts.tol:
        obj = _objective_alpha(loss, g, ys, w, lam, cand)
        return cand, 0, res, obj, True
    best_cert = (res, cand)

    for t in range(opts.subgradient_budget):
        r = ys - g @ alpha
        d = 2.0 * lam * alpha - w * loss.midpoint_gradient(r)
        alpha = project(alpha - d / (2.0 * lam * (t + 1)))
        obj = _objective_alpha(loss, g, ys, w, lam, alpha)
        if obj < best_obj:
            best_obj, best_alpha = obj, alpha.copy()
        if (t + 1) % opts.polish_every == 0 or t + 1 == opts.subgradient_budget:
            cand, res, _ = attempt(best_alpha, t + 1)
            if res <= opts.tol:
                obj = _objective_alpha(loss, g, ys, w, lam, cand)
                return cand, t + 1, res, obj, True
            if res < best_cert[0]:
                best_cert = (res, cand)

    res, cand = best_cert
    direct = _certificate_alpha(loss, g, ys, w, lam, best_alpha, snap=opts.kink_snap)
    if direct < res:
        res, cand = direct, best_alpha
    obj = _objective_alpha(loss, g, ys, w, lam, cand)
    return cand, opts.subgradient_budget, res, obj, res <= opts.tol


# -- public fit ---------------------------------------------------------


def fit(loss: Loss, kernel: Kernel, dataset: Dataset, lam: float,
        weights=None, opts: FitOptions | None = None, x0=None) -> FitResult:
    """Minimize the regularized (weighted) empirical risk.

    Returns a :class:`FitResult` whose ``stationarity_residual`` is the
    certified H-norm distance from stationarity.  Raises
    :class:`NonConvergence` when the budget is exhausted above ``tol``
    unless ``opts.allow_nonconverged`` is set (the best iterate is then
    attached to the exception and returned result alike).
    """
    lam = _check_lambda(lam)
    opts = opts or FitOptions()
    w = _weights(dataset, weights)
    g = kernel.gram(dataset.xs)
    alpha = (np.zeros(dataset.n) if x0 is None
             else np.asarray(x0, dtype=float).reshape(-1).copy())
    if alpha.shape[0] != dataset.n:
        raise DimensionMismatch(f"x0 has {alpha.shape[0]} entries for n={dataset.n}")

    if loss.smoothness == "C2":
        alpha, iters, res, obj, ok = _newton(loss, g, dataset.ys, w, lam, opts, alpha)
        kind = "newton"
    else:
        alpha, iters, res, obj, ok = _subgradient(loss, g, dataset.ys, w, lam, opts, alpha)
        kind = "subgradient"

    f_hat = RkhsFunction(kernel, dataset.xs, alpha)
    r0 = float(w @ loss.value(dataset.ys))
    result = FitResult(
        f_hat=f_hat, lam=lam, objective=obj, stationarity_residual=res,
        iterations=iters, solver_kind=kind, converged=ok,
        norm_h=f_hat.norm_h(), prop8_delta=float(np.sqrt(r0 / lam)),
    )
    if not ok and not opts.allow_nonconverged:
        raise NonConvergence(
            f"budget exhausted with stationarity residual {res:.3e} > tol {opts.tol:.1e}",
            residual=res, best=result,
        )
    return result
