"""Uniform ergodic-average decay rates for shift operators on the line.

Three related computations live here.  First, the weighted shift
generator -i w^{-1} d/dx with a twisted matching condition at infinity:
a tangent map compactifies the whole line onto one period of a smooth
variable-coefficient first-order operator, whose discrete eigenvalues
approach the arithmetic progression (beta + 2 pi k) / ||w||_1.  Second,
the time-averaged propagator filters: against the weighted generator the
average minus its kernel projection has norm max |sin(lambda T) /
(lambda T)| over the nonzero spectrum, which decays like 1/(gap T); on
the unweighted line the same sinc filter decays only when measured
between polynomially weighted spaces, and not at all in the plain norm.
Third, the tail projectors of an orthonormal basis, which converge to
zero strongly while every one of them keeps the full spectrum {0, 1}:
the standard witness that strong convergence controls no spectral gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import ConfigError, TruncationError


# ---------------------------------------------------------------------------
# weights and discretization


@dataclass(frozen=True)
class WeightSpec:
    """A positive integrable bounded weight on the line.

    gamma is the scale of the tangent map x = gamma tan(theta) used for
    all whole-line quadrature and for the compactified eigenproblem; the
    weight must decay at least like x^{-2} for that map to keep the
    transformed coefficient bounded.
    """

    w: Callable[[np.ndarray], np.ndarray]
    L1_norm: float
    sup_norm: float
    gamma: float = 2.0

    @classmethod
    def from_function(cls, w: Callable[[np.ndarray], np.ndarray], *,
                      gamma: float = 2.0, n_quad: int = 8192) -> "WeightSpec":
        """Build the spec, computing the integral on the compactified map."""
        if not gamma > 0.0:
            raise ConfigError(f"map scale must be positive, got {gamma}")
        theta, h = _centered_theta_grid(n_quad)
        x = gamma * np.tan(theta)
        vals = np.asarray(w(x), dtype=float)
        if not np.all(vals > 0.0):
            raise ConfigError("weight must be positive everywhere")
        jac = gamma / np.cos(theta) ** 2
        integrand = vals * jac
        if not np.all(np.isfinite(integrand)):
            raise ConfigError("weight must decay at least like x^-2 for "
                              "the tangent-map quadrature")
        l1 = float(np.sum(integrand) * h)
        sup = float(np.max(vals))
        if not (np.isfinite(l1) and l1 > 0.0 and np.isfinite(sup)):
            raise ConfigError("weight must have finite positive integral "
                              "and finite sup")
        return cls(w=w, L1_norm=l1, sup_norm=sup, gamma=gamma)

    def tail_mass(self, L: float, n_quad: int = 4097) -> float:
        """Integral of the weight over |x| > L, by the 1/x substitution."""
        if not L > 0.0:
            raise ConfigError(f"tail radius must be positive, got {L}")
        # int_{|x|>L} w dx = int_0^{1/L} (w(1/u) + w(-1/u)) / u^2 du; the
        # integrand extends continuously to u = 0 for x^-2-decaying w
        u = np.linspace(0.0, 1.0 / L, n_quad)
        du = u[1] - u[0]
        vals = np.empty_like(u)
        with np.errstate(divide="ignore"):
            inv = 1.0 / u[1:]
        vals[1:] = (self.w(inv) + self.w(-inv)) / u[1:] ** 2
        # continuous extension at u = 0 by one further halving
        vals[0] = 2.0 * vals[1] - vals[2]
        # composite trapezoid; the integrand is smooth on this segment
        return float(np.trapezoid(vals, dx=du))


def inverse_square_weight(gamma: float = 2.0) -> WeightSpec:
    """The catalog weight 1 / (1 + x^2), with integral pi."""
    return WeightSpec.from_function(lambda x: 1.0 / (1.0 + x * x),
                                    gamma=gamma)


@dataclass(frozen=True)
class LineDiscretization:
    """Resolution and declared domain of the line computations.

    L is the declared half-width the computation claims to represent: the
    weighted eigenproblem checks that the weight mass beyond L is below
    tail_tol of the whole integral and refuses otherwise.  N is the number
    of compactified grid points for the weighted problem and the base
    resolution for the filter-norm grids; sigma is the default weight
    exponent used by polynomially weighted filter norms.
    """

    L: float = 1e8
    N: int = 256
    sigma: float = 1.0
    tail_tol: float = 1e-8

    def __post_init__(self):
        if not self.L > 0.0:
            raise ConfigError(f"half-width must be positive, got {self.L}")
        if self.N < 16:
            raise ConfigError(f"need at least 16 grid points, got {self.N}")
        if self.sigma < 0.0:
            raise ConfigError(f"weight exponent must be nonnegative, "
                              f"got {self.sigma}")
        if not 0.0 < self.tail_tol < 1.0:
            raise ConfigError(f"tail tolerance must lie in (0, 1), "
                              f"got {self.tail_tol}")


def _centered_theta_grid(n: int) -> Tuple[np.ndarray, float]:
    # cell-centered uniform grid on (-pi/2, pi/2): stays clear of the
    # poles of the tangent map and keeps the periodic stencil symmetric
    h = np.pi / n
    theta = -0.5 * np.pi + (np.arange(n) + 0.5) * h
    return theta, h


def _spectral_derivative_matrix(n: int) -> np.ndarray:
    # matrix of -i d/dtheta for pi-periodic functions on the centered
    # grid: Fourier wavenumbers are the even integers
    kappa = 2.0 * np.fft.fftfreq(n, d=1.0 / n)
    f = np.fft.fft(np.eye(n), axis=0)
    mat = np.fft.ifft(kappa[:, None] * f, axis=0)
    return 0.5 * (mat + mat.conj().T)


# ---------------------------------------------------------------------------
# weighted eigenproblem


@dataclass(frozen=True)
class WeightedEigs:
    """Sorted spectrum of the compactified weighted shift generator.

    vectors holds one eigenfunction per column, sampled at x and
    orthonormal in the w-weighted inner product; beta is the twist angle
    of the matching condition at infinity.  metadata records the
    discretization choices.
    """

    values: np.ndarray
    vectors: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    weight_values: np.ndarray
    beta: float
    L1_norm: float
    metadata: dict


def weighted_eigs(w: WeightSpec, alpha: complex,
                  disc: LineDiscretization) -> WeightedEigs:
    """Discrete eigenproblem for -i w^{-1} d/dx with f(+inf) = alpha f(-inf).

    The tangent map x = gamma tan(theta) carries the operator to
    -i a(theta) d/dtheta with a = cos^2(theta) / (gamma w), a smooth
    pi-periodic coefficient whenever w decays like x^-2; the twist is
    peeled off as a phase, the remainder symmetrized by a similarity with
    sqrt(a), and the resulting Hermitian matrix solved directly.  The
    declared half-width must carry all but tail_tol of the weight mass,
    else TruncationError.
    """
    alpha = complex(alpha)
    if abs(abs(alpha) - 1.0) > 1e-12:
        raise ConfigError(f"twist must have unit modulus, got |alpha|="
                          f"{abs(alpha):.6g}")
    tail = w.tail_mass(disc.L)
    if tail > disc.tail_tol * w.L1_norm:
        raise TruncationError(tail / w.L1_norm, disc.tail_tol)
    beta = float(np.angle(alpha)) % (2.0 * np.pi)

    n = disc.N
    theta, h = _centered_theta_grid(n)
    x = w.gamma * np.tan(theta)
    wx = np.asarray(w.w(x), dtype=float)
    a = np.cos(theta) ** 2 / (w.gamma * wx)
    if not np.all(np.isfinite(a) & (a > 0.0)):
        raise ConfigError("transformed coefficient must be positive and "
                          "finite; weight decays too fast or too slow "
                          "for the tangent map")

    d0 = _spectral_derivative_matrix(n)
    sqrt_a = np.sqrt(a)
    # twist peeled off: eigenfunctions are e^{i beta theta / pi} times a
    # pi-periodic part, shifting the symmetrized operator by (beta/pi) a
    core = d0 + (beta / np.pi) * np.eye(n)
    hs = sqrt_a[:, None] * core * sqrt_a[None, :]
    hs = 0.5 * (hs + hs.conj().T)
    vals, vecs = np.linalg.eigh(hs)
    # the similarity was u = f / sqrt(a); back to function samples,
    # orthonormal in sum |f|^2 (h/a) = the w-weighted product carried
    # through the map
    funcs = sqrt_a[:, None] * vecs / np.sqrt(h)
    phase = np.exp(1j * (beta / np.pi) * theta)
    funcs = phase[:, None] * funcs
    meta = {"map": "tan", "gamma": w.gamma, "derivative": "spectral",
            "twist_beta": beta, "N": n, "declared_half_width": disc.L,
            "tail_fraction": tail / w.L1_norm}
    return WeightedEigs(values=vals, vectors=funcs, x=x, theta=theta,
                        weight_values=wx, beta=beta, L1_norm=w.L1_norm,
                        metadata=meta)


def predicted_eigs(w: WeightSpec, beta: float,
                   k_range: Sequence[int]) -> np.ndarray:
    """The arithmetic progression (beta + 2 pi k) / ||w||_1."""
    if not 0.0 <= beta < 2.0 * np.pi:
        raise ConfigError(f"twist angle must lie in [0, 2 pi), got {beta}")
    k = np.asarray(list(k_range), dtype=float)
    return (beta + 2.0 * np.pi * k) / w.L1_norm


# ---------------------------------------------------------------------------
# time-averaged propagator filters


@dataclass(frozen=True)
class FilterResult:
    """Norm of one time-averaged propagator filter.

    decay_fit_exponent is filled by the series helpers with the log-log
    slope fitted across the whole T-series the result belongs to; radius
    reports the domain truncation used by the bounded-interval surrogate.
    """

    T: float
    operator_norm: float
    decay_fit_exponent: Optional[float] = None
    radius: Optional[float] = None
    metadata: dict = field(default_factory=dict)


def _sinc(z: np.ndarray) -> np.ndarray:
    # sin(z)/z with the exact value 1 at z = 0
    return np.sinc(np.asarray(z) / np.pi)


def _filter_from_eigs(eig: WeightedEigs, T: float) -> FilterResult:
    if not (np.isfinite(T) and T > 0.0):
        raise ConfigError(f"averaging time must be positive and finite, "
                          f"got {T}")
    gap = 2.0 * np.pi / eig.L1_norm
    # a kernel exists only when the twisted progression contains zero;
    # otherwise the smallest magnitude is the distance of the twist
    # angle to the nearest multiple of 2 pi, and nothing is excluded
    dist0 = min(eig.beta, 2.0 * np.pi - eig.beta) / eig.L1_norm
    cut = 0.5 * gap if dist0 <= 1e-9 * gap else 0.5 * dist0
    nonzero = eig.values[np.abs(eig.values) > cut]
    norm = float(np.max(np.abs(_sinc(nonzero * T))))
    meta = dict(eig.metadata)
    meta["spectral_gap"] = gap
    meta["kernel_dim"] = int(eig.values.size - nonzero.size)
    return FilterResult(T=float(T), operator_norm=norm, metadata=meta)


def ergodic_norm_weighted(w: WeightSpec, alpha: complex, T: float,
                          disc: LineDiscretization) -> FilterResult:
    """Norm of the averaged weighted propagator minus its kernel projection.

    Diagonalizing the generator reduces the average to the multiplier
    sin(lambda T) / (lambda T) over the spectrum; the kernel eigenvalues
    (present only for twist angle zero) belong to the subtracted
    projection and are excluded.  The reported norm is the maximum of the
    multiplier over the remaining spectrum, which the spectral gap
    2 pi / ||w||_1 pins under 1 / (gap T).
    """
    return _filter_from_eigs(weighted_eigs(w, alpha, disc), T)


def _pow2_at_least(n: float) -> int:
    return int(2 ** np.ceil(np.log2(max(2.0, n))))


def ergodic_norm_L2sigma(sigma: float, T: float,
                         disc: LineDiscretization) -> FilterResult:
    """Norm of the averaged free propagator between polynomial weights.

    The average of e^{itH} for H = -i d/dx is the Fourier multiplier
    sin(xi T) / (xi T); measured from the (1+x^2)^{sigma/2}-weighted
    space into its dual the operator is conjugated by the weight, and its
    norm is the top eigenvalue of the resulting Hermitian map, computed
    matrix-free on a uniform grid of radius max(200, 2T).  sigma > 1/2
    gives uniform decay; sigma = 0 is the control without weights, whose
    norm stays at 1.
    """
    if sigma < 0.0:
        raise ConfigError(f"weight exponent must be nonnegative, "
                          f"got {sigma}")
    if not (np.isfinite(T) and T > 0.0):
        raise ConfigError(f"averaging time must be positive and finite, "
                          f"got {T}")
    radius = max(200.0, 2.0 * T)
    n = max(disc.N, _pow2_at_least(2.0 * radius))
    x = -radius + (2.0 * radius / n) * (np.arange(n) + 0.5)
    xi = 2.0 * np.pi * np.fft.fftfreq(n, d=2.0 * radius / n)
    filt = _sinc(xi * T)
    mw = (1.0 + x * x) ** (-0.5 * sigma)

    def apply(v):
        v = mw * np.asarray(v, dtype=complex).ravel()
        v = np.fft.ifft(filt * np.fft.fft(v))
        return mw * v

    op = LinearOperator((n, n), matvec=apply, dtype=complex)
    v0 = np.full(n, 1.0 / np.sqrt(n))
    vals = eigsh(op, k=1, which="LM", v0=v0, maxiter=400,
                 return_eigenvectors=False, tol=1e-10)
    norm = float(np.abs(vals[0]))
    meta = {"grid_points": n, "sigma": sigma}
    return FilterResult(T=float(T), operator_norm=norm, radius=radius,
                        metadata=meta)


def fit_decay_exponent(results: Sequence[FilterResult]) -> float:
    """Log-log slope of operator norm against T across a series."""
    if len(results) < 2:
        raise ConfigError("need at least two results to fit a slope")
    t = np.array([r.T for r in results])
    v = np.array([r.operator_norm for r in results])
    if np.any(v <= 0.0):
        raise ConfigError("cannot fit a log-log slope through zero norms")
    return float(np.polyfit(np.log(t), np.log(v), 1)[0])


def _with_exponent(results: List[FilterResult]) -> List[FilterResult]:
    slope = fit_decay_exponent(results)
    return [replace(r, decay_fit_exponent=slope) for r in results]


def weighted_norm_series(w: WeightSpec, alpha: complex,
                         T_list: Sequence[float],
                         disc: LineDiscretization) -> List[FilterResult]:
    """ergodic_norm_weighted along a T-series, with the fitted slope.

    The generator is diagonalized once and reused across the series.  The
    sinc maximum fluctuates around its 1/(gap T) envelope, so a slope fit
    needs a dense series; a couple of hundred points across the decades
    of interest stabilizes it.
    """
    eig = weighted_eigs(w, alpha, disc)
    return _with_exponent([_filter_from_eigs(eig, T) for T in T_list])


def l2sigma_norm_series(sigma: float, T_list: Sequence[float],
                        disc: LineDiscretization) -> List[FilterResult]:
    """ergodic_norm_L2sigma along a T-series, with the fitted slope."""
    return _with_exponent([ergodic_norm_L2sigma(sigma, T, disc)
                           for T in T_list])


# ---------------------------------------------------------------------------
# strong-versus-uniform projector demonstration


@dataclass(frozen=True)
class ProjectorRow:
    """One tail projector: its exact spectrum and its action on a vector."""

    N: int
    spectrum: Tuple[float, ...]
    operator_norm: float
    tail_norm_of_f: float


def projector_demo(N_list: Sequence[int], dim: int = 64,
                   f: Optional[np.ndarray] = None) -> List[ProjectorRow]:
    """Tail projectors onto coordinates N.. of an orthonormal basis.

    Against any fixed vector the tail norm dies out as N grows, yet every
    projector below full rank has spectrum exactly {0, 1} and norm one:
    strong convergence to zero with no uniform convergence at all.
    """
    ns = [int(n) for n in N_list]
    if any(n < 0 or n > dim for n in ns) or sorted(ns) != ns:
        raise ConfigError("projector indices must be ascending in "
                          f"[0, {dim}]")
    if f is None:
        j = np.arange(dim, dtype=float)
        f = 1.0 / (1.0 + j) ** 2
    f = np.asarray(f, dtype=float)
    if f.shape != (dim,):
        raise ConfigError(f"test vector must have length {dim}, "
                          f"got {f.shape}")
    rows = []
    for n in ns:
        diag = np.zeros(dim)
        diag[n:] = 1.0
        # the projector is diagonal, so its spectrum is read off exactly
        spectrum = tuple(sorted(set(diag)))
        rows.append(ProjectorRow(N=n, spectrum=spectrum,
                                 operator_norm=float(np.max(diag)),
                                 tail_norm_of_f=float(
                                     np.linalg.norm(f[n:]))))
    return rows
