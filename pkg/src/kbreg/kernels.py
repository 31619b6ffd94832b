"""Kernels, Gram matrices and finite RKHS expansions.

The geometry every other module computes in: positive-definite kernels
with a known (or declared-compact) sup-norm, and functions represented
as finite kernel expansions f = sum_i c_i k(., u_i) whose H-norm is the
exact quadratic form sqrt(c' K c) over the centers' Gram matrix K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, KernelMismatch, SingularSystem


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Canonicalize to a (n, d) float array.

    1-D input is read as n samples in one dimension.  ``dim`` enforces a
    particular d and raises :class:`DimensionMismatch` otherwise.
    """
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise DimensionMismatch(f"points must be at most 2-D, got shape {a.shape}")
    if dim is not None and a.shape[1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {a.shape[1]}")
    return a


@dataclass(frozen=True)
class Kernel:
    """A positive-definite kernel: rbf(gamma), linear, or poly(c, m).

    ``domain_box`` optionally declares an axis-aligned compact box for
    the inputs; linear and polynomial kernels only have a finite
    sup-norm when such a box is declared.
    """

    kind: str
    gamma: float = 0.0
    coef: float = 0.0
    degree: int = 1
    domain_box: tuple[tuple[float, float], ...] | None = None

    @property
    def sup_norm(self) -> float | None:
        """sup_x sqrt(k(x, x)), or None when unbounded (no domain box)."""
        if self.kind == "rbf":
            return 1.0
        if self.domain_box is None:
            return None
        sq = sum(max(lo * lo, hi * hi) for lo, hi in self.domain_box)
        if self.kind == "linear":
            return float(np.sqrt(sq))
        return float((self.coef + sq) ** (self.degree / 2.0))

    @property
    def spec(self) -> str:
        if self.kind == "rbf":
            return f"rbf:{self.gamma:g}"
        if self.kind == "linear":
            return "linear"
        return f"poly:{self.coef:g},{self.degree:d}"

    def __str__(self) -> str:
        return self.spec

    def cross(self, a, b) -> np.ndarray:
        """Kernel matrix K[i, j] = k(a_i, b_j)."""
        a = as_points(a)
        b = as_points(b, dim=a.shape[1])
        if self.kind == "rbf":
            sq = (
                np.sum(a * a, axis=1)[:, None]
                + np.sum(b * b, axis=1)[None, :]
                - 2.0 * (a @ b.T)
            )
            np.maximum(sq, 0.0, out=sq)
            return np.exp(-self.gamma * sq)
        if self.kind == "linear":
            return a @ b.T
        return (self.coef + a @ b.T) ** self.degree

    def gram(self, points) -> np.ndarray:
        """Symmetric Gram matrix over a single point list."""
        p = as_points(points)
        if p.shape[0] == 0:
            return np.zeros((0, 0))
        g = self.cross(p, p)
        return 0.5 * (g + g.T)

    def __call__(self, x, xp) -> float:
        """k(x, x') for two single points."""
        a = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
        b = np.atleast_1d(np.asarray(xp, dtype=float)).reshape(1, -1)
        if a.shape[1] != b.shape[1]:
            raise DimensionMismatch(
                f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}"
            )
        return float(self.cross(a, b)[0, 0])


def rbf(gamma: float) -> Kernel:
    if not gamma > 0:
        raise ValueError(f"rbf needs gamma > 0, got {gamma}")
    return Kernel("rbf", gamma=float(gamma))


def linear(domain_box=None) -> Kernel:
    return Kernel("linear", domain_box=_box(domain_box))


def polynomial(coef: float, degree: int, domain_box=None) -> Kernel:
    if coef < 0 or degree < 1 or int(degree) != degree:
        raise ValueError(f"poly needs c >= 0 and integer m >= 1, got {coef}, {degree}")
    return Kernel("poly", coef=float(coef), degree=int(degree), domain_box=_box(domain_box))


def _box(domain_box):
    if domain_box is None:
        return None
    box = tuple((float(lo), float(hi)) for lo, hi in domain_box)
    for lo, hi in box:
        if not lo <= hi:
            raise ValueError(f"bad domain box interval ({lo}, {hi})")
    return box


def parse_kernel(spec: str, domain_box=None) -> Kernel:
    """Parse "rbf:0.1", "linear", or "poly:c,m"."""
    spec = spec.strip()
    name, _, arg = spec.partition(":")
    try:
        if name == "rbf":
            return rbf(float(arg))
        if name == "linear":
            return linear(domain_box)
        if name == "poly":
            c, m = arg.split(",")
            return polynomial(float(c), int(m), domain_box)
    except ValueError as exc:
        raise ValueError(f"bad kernel spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown kernel {spec!r}; expected rbf:G, linear, or poly:C,M")


def parse_domain_box(text: str):
    """Parse "lo1,hi1[,lo2,hi2,...]" into interval pairs."""
    vals = [float(v) for v in text.split(",")]
    if len(vals) % 2 != 0 or not vals:
        raise ValueError(f"domain box needs an even number of values, got {text!r}")
    return tuple(zip(vals[0::2], vals[1::2]))


@dataclass(frozen=True, eq=False)
class RkhsFunction:
    """Finite kernel expansion f = sum_i coefficients[i] * k(., centers[i]).

    Duplicate centers are permitted; the quadratic-form norm handles them
    exactly.  Instances are immutable and shareable across threads.
    """

    kernel: Kernel
    centers: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", as_points(self.centers))
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coef.shape[0] != self.centers.shape[0]:
            raise DimensionMismatch(
                f"{coef.shape[0]} coefficients for {self.centers.shape[0]} centers"
            )
        object.__setattr__(self, "coefficients", coef)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __call__(self, x) -> float:
        """Evaluate at a single point (a scalar when d=1, or a (d,) vector)."""
        pt = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
        if pt.shape[1] != self.dim:
            raise DimensionMismatch(f"expected dimension {self.dim}, got {pt.shape[1]}")
        return float(self.eval(pt)[0])

    def eval(self, points) -> np.ndarray:
        """Evaluate at a (n, d) batch; always returns an array."""
        pts = as_points(points, dim=self.dim)
        if self.centers.shape[0] == 0:
            return np.zeros(pts.shape[0])
        return self.kernel.cross(pts, self.centers) @ self.coefficients

    def norm_h(self) -> float:
        """Exact H-norm sqrt(c' K c), clamped at 0 for rounding."""
        if self.centers.shape[0] == 0:
            return 0.0
        g = self.kernel.gram(self.centers)
        q = float(self.coefficients @ g @ self.coefficients)
        return float(np.sqrt(max(q, 0.0)))


def zero_function(kernel: Kernel, dim: int) -> RkhsFunction:
    return RkhsFunction(kernel, np.zeros((0, dim)), np.zeros(0))


def combine(f: RkhsFunction, g: RkhsFunction, alpha: float, beta: float) -> RkhsFunction:
    """The expansion of alpha*f + beta*g.

    When both expansions share the identical center list the combination
    is done coefficient-wise (plain vector addition in coordinates, and
    numerically far better when alpha*f and beta*g nearly cancel);
    otherwise the center lists are concatenated.
    """
    if f.kernel != g.kernel:
        raise KernelMismatch(f"cannot combine {f.kernel} with {g.kernel}")
    if f.dim != g.dim:
        raise DimensionMismatch(f"dimensions differ: {f.dim} vs {g.dim}")
    if f.centers.shape == g.centers.shape and np.array_equal(f.centers, g.centers):
        return RkhsFunction(
            f.kernel, f.centers, alpha * f.coefficients + beta * g.coefficients
        )
    if g.centers.shape[0] == 0:
        return RkhsFunction(f.kernel, f.centers, alpha * f.coefficients)
    if f.centers.shape[0] == 0:
        return RkhsFunction(g.kernel, g.centers, beta * g.coefficients)
    centers = np.vstack([f.centers, g.centers])
    coefficients = np.concatenate([alpha * f.coefficients, beta * g.coefficients])
    return RkhsFunction(f.kernel, centers, coefficients)


def scale(f: RkhsFunction, alpha: float) -> RkhsFunction:
    return RkhsFunction(f.kernel, f.centers, alpha * f.coefficients)


def distance_h(f: RkhsFunction, g: RkhsFunction) -> float:
    """H-norm of f - g."""
    return combine(f, g, 1.0, -1.0).norm_h()


def solve_psd(a: np.ndarray, b: np.ndarray, max_decades: int = 3) -> np.ndarray:
    """Solve a symmetric PSD system, adding diagonal jitter on failure.

    Retries with jitter 1e-10 * trace/n growing by decades, as RBF Gram
    matrices of nearby points are routinely numerically singular.  Raises
    :class:`SingularSystem` when all retries fail.
    """
    n = a.shape[0]
    if n == 0:
        return np.zeros_like(np.asarray(b, dtype=float))
    base = 1e-10 * max(np.trace(a) / n, np.finfo(float).tiny)
    jitter = 0.0
    for attempt in range(max_decades + 1):
        try:
            chol = np.linalg.cholesky(a + jitter * np.eye(n) if jitter else a)
            y = np.linalg.solve(chol, b)
            return np.linalg.solve(chol.T, y)
        except np.linalg.LinAlgError:
            jitter = base * 10.0**attempt
    raise SingularSystem(
        f"Cholesky failed after {max_decades} jitter decades (n={n})"
    )
