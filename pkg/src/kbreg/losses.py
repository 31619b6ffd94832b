"""Convex loss catalogue for kernel-based regression.

Every loss here is *invariant*: L(y, t) = l(y - t) for a convex
l: R -> [0, inf) with l(0) = 0.  Besides point evaluation, each loss
carries the calculus the solver and the robustness bounds need:
derivatives, subdifferential intervals at kinks, the Lipschitz constant,
growth-envelope ("type") constants, and the slope function V(r) = the
Lipschitz constant of l restricted to [-r, r].

The catalogue:

=================  ==========================================  ==========
name               l(r)                                        smoothness
=================  ==========================================  ==========
least_squares      r^2                                         C2
eps_insensitive    max(|r| - eps, 0)                           C0
huber              r^2/2 if |r| <= c, c|r| - c^2/2 otherwise   C1
logistic           -log(4*s(r)*(1 - s(r))), s = sigmoid        C2
pinball            tau*max(r, 0) + (1 - tau)*max(-r, 0)        C0
=================  ==========================================  ==========

Huber's quadratic branch uses the 1/2 factor so that the two branches
join continuously with matching slopes; some texts print the quadratic
branch as r^2, which is inconsistent with the c|r| - c^2/2 tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KinkError, NotTwiceDifferentiable

_LOG4 = float(2.0 * np.log(2.0))

KINDS = ("least_squares", "eps_insensitive", "huber", "logistic", "pinball")


@dataclass(frozen=True)
class Loss:
    """An invariant convex loss with its robustness metadata.

    Instances are immutable values; all methods are pure and accept
    scalars or numpy arrays.  Use the module-level constructors
    (:func:`least_squares`, :func:`eps_insensitive`, ...) or
    :func:`parse_loss` rather than building instances directly.
    """

    kind: str
    param: float | None = None

    # -- metadata -----------------------------------------------------

    @property
    def smoothness(self) -> str:
        """One of "C2", "C1", "C0"."""
        return {
            "least_squares": "C2",
            "logistic": "C2",
            "huber": "C1",
            "eps_insensitive": "C0",
            "pinball": "C0",
        }[self.kind]

    @property
    def lipschitz_constant(self) -> float | None:
        """Global Lipschitz constant of l, or None (least squares is unbounded)."""
        if self.kind == "least_squares":
            return None
        if self.kind == "eps_insensitive":
            return 1.0
        if self.kind == "huber":
            return self.param
        if self.kind == "logistic":
            return 1.0
        return max(self.param, 1.0 - self.param)  # pinball

    @property
    def order_p(self) -> float:
        """Growth order p: 2 for least squares, 1 for the Lipschitz losses."""
        return 2.0 if self.kind == "least_squares" else 1.0

    @property
    def type_constant_c(self) -> float:
        """Upper-order constant: l(r) <= c*(|r|^p + 1) for all r.

        Least squares uses c = 2 (from (y - t)^2 <= 2y^2 + 2t^2, the same
        constant that makes L of type (a, p) jointly in (y, t)); Lipschitz
        losses use c = |L|_1 since l(r) <= |L|_1 * |r|.
        """
        if self.kind == "least_squares":
            return 2.0
        return self.lipschitz_constant

    @property
    def lower_order_constant(self) -> float | None:
        """Constant for the lower envelope l(r) >= c*(|r|^p - 1), or None.

        eps_insensitive admits no such constant when eps > 1 (the loss is
        identically zero on [-eps, eps] while |r| - 1 is already positive).
        """
        if self.kind == "least_squares":
            return 1.0
        if self.kind == "eps_insensitive":
            return 1.0 if self.param <= 1.0 else None
        if self.kind == "huber":
            return min(self.param, 2.0)
        if self.kind == "logistic":
            return 0.5
        return min(self.param, 1.0 - self.param)  # pinball

    @property
    def kinks(self) -> tuple[float, ...]:
        """Residual values where l is not differentiable."""
        if self.kind == "eps_insensitive":
            return (-self.param, self.param)
        if self.kind == "pinball":
            return (0.0,)
        return ()

    @property
    def spec(self) -> str:
        """Round-trippable selection string ("ls", "eps:0.1", ...)."""
        if self.kind == "least_squares":
            return "ls"
        if self.kind == "logistic":
            return "logistic"
        short = {"eps_insensitive": "eps", "huber": "huber", "pinball": "pinball"}
        return f"{short[self.kind]}:{self.param:g}"

    def __str__(self) -> str:
        return self.spec

    # -- calculus -----------------------------------------------------

    def value(self, r):
        """l(r).  Total on the reals, nonnegative, l(0) = 0."""
        r = np.asarray(r, dtype=float)
        if self.kind == "least_squares":
            out = r * r
        elif self.kind == "eps_insensitive":
            out = np.maximum(np.abs(r) - self.param, 0.0)
        elif self.kind == "huber":
            c = self.param
            a = np.abs(r)
            out = np.where(a <= c, 0.5 * r * r, c * a - 0.5 * c * c)
        elif self.kind == "logistic":
            a = np.abs(r)
            out = a + 2.0 * np.log1p(np.exp(-a)) - _LOG4
        else:  # pinball
            tau = self.param
            out = tau * np.maximum(r, 0.0) + (1.0 - tau) * np.maximum(-r, 0.0)
        return out if out.ndim else float(out)

    def derivative(self, r):
        """l'(r).

        Raises :class:`KinkError` when a C0 loss is evaluated exactly at a
        non-differentiable point; use :meth:`subdifferential` there.
        """
        r = np.asarray(r, dtype=float)
        if self.kinks:
            for kink in self.kinks:
                if np.any(r == kink):
                    raise KinkError(
                        f"{self.spec} is not differentiable at r={kink}; "
                        "use subdifferential()"
                    )
        out = self._derivative_choice(r)
        return out if out.ndim else float(out)

    def second_derivative(self, r):
        """l''(r) >= 0.  Only for C2 losses (least squares, logistic)."""
        if self.smoothness != "C2":
            raise NotTwiceDifferentiable(
                f"{self.spec} is not twice continuously differentiable"
            )
        r = np.asarray(r, dtype=float)
        if self.kind == "least_squares":
            out = np.full_like(r, 2.0)
        else:  # logistic: 2*s(r)*(1 - s(r)) in overflow-safe form
            e = np.exp(-np.abs(r))
            out = 2.0 * e / (1.0 + e) ** 2
        return out if out.ndim else float(out)

    def subdifferential(self, r: float) -> tuple[float, float]:
        """The closed interval [lo, hi] of subgradients of l at r.

        Degenerates to [l'(r), l'(r)] wherever l is differentiable.
        """
        lo, hi = self.subdifferential_bounds(np.asarray([r], dtype=float))
        return float(lo[0]), float(hi[0])

    def subdifferential_bounds(self, r: np.ndarray, snap: float = 0.0):
        """Vectorized subdifferential interval bounds.

        With ``snap > 0``, residuals within ``snap * (1 + |kink|)`` of a
        kink are treated as sitting on it, so the interval covers the
        kink's full subgradient range.  The certificate uses this to stay
        continuous under the solver's finite precision.
        """
        r = np.asarray(r, dtype=float)
        if self.kind == "eps_insensitive":
            eps = self.param
            tol = snap * (1.0 + eps)
            lo = np.where(r <= -eps + tol, -1.0, np.where(r <= eps + tol, 0.0, 1.0))
            hi = np.where(r < -eps - tol, -1.0, np.where(r < eps - tol, 0.0, 1.0))
            return lo, hi
        if self.kind == "pinball":
            tau = self.param
            lo = np.where(r <= snap, tau - 1.0, tau)
            hi = np.where(r < -snap, tau - 1.0, tau)
            return lo, hi
        d = self._derivative_choice(r)
        return d, d

    def midpoint_gradient(self, r):
        """l'(r) with the subdifferential midpoint substituted at kinks.

        Deterministic total selection used by the subgradient iteration;
        the stationarity certificate, not this choice, arbitrates
        optimality.
        """
        lo, hi = self.subdifferential_bounds(np.asarray(r, dtype=float))
        return 0.5 * (lo + hi)

    def _derivative_choice(self, r: np.ndarray) -> np.ndarray:
        if self.kind == "least_squares":
            return 2.0 * r
        if self.kind == "eps_insensitive":
            return np.sign(r) * (np.abs(r) > self.param)
        if self.kind == "huber":
            return np.clip(r, -self.param, self.param)
        if self.kind == "logistic":
            return np.tanh(0.5 * r)
        tau = self.param  # pinball; kink value is overridden by callers
        return np.where(r > 0, tau, np.where(r < 0, tau - 1.0, tau - 0.5))

    def slope_v(self, r):
        """Slope function V(r): Lipschitz constant of l restricted to [-r, r].

        Non-decreasing in r; V(0) = 0 for every loss in the catalogue.
        """
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("slope_v requires r >= 0")
        if self.kind == "least_squares":
            out = 2.0 * r
        elif self.kind == "eps_insensitive":
            out = (r > self.param).astype(float)
        elif self.kind == "huber":
            out = np.minimum(r, self.param)
        elif self.kind == "logistic":
            out = np.tanh(0.5 * r)
        else:  # pinball
            out = np.where(r > 0, max(self.param, 1.0 - self.param), 0.0)
        return out if out.ndim else float(out)

    def a_moment(self, y):
        """a(y) = |y|^p, the tail-weight function paired with the loss type."""
        y = np.asarray(y, dtype=float)
        out = np.abs(y) ** self.order_p
        return out if out.ndim else float(out)


# -- constructors ------------------------------------------------------


def least_squares() -> Loss:
    return Loss("least_squares")


def eps_insensitive(eps: float) -> Loss:
    if not eps > 0:
        raise ValueError(f"eps_insensitive needs eps > 0, got {eps}")
    return Loss("eps_insensitive", float(eps))


def huber(c: float) -> Loss:
    if not c > 0:
        raise ValueError(f"huber needs c > 0, got {c}")
    return Loss("huber", float(c))


def logistic() -> Loss:
    return Loss("logistic")


def pinball(tau: float) -> Loss:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"pinball needs tau in (0, 1), got {tau}")
    return Loss("pinball", float(tau))


def parse_loss(spec: str) -> Loss:
    """Parse a loss selection string: "ls", "eps:0.1", "huber:1.345",
    "logistic", "pinball:0.5"."""
    spec = spec.strip()
    name, _, arg = spec.partition(":")
    try:
        if name == "ls":
            return least_squares()
        if name == "logistic":
            return logistic()
        if name == "eps":
            return eps_insensitive(float(arg))
        if name == "huber":
            return huber(float(arg))
        if name == "pinball":
            return pinball(float(arg))
    except ValueError as exc:
        raise ValueError(f"bad loss spec {spec!r}: {exc}") from None
    raise ValueError(
        f"unknown loss {spec!r}; expected one of "
        "ls, eps:E, huber:C, logistic, pinball:T"
    )
