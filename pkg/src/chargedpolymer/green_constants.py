"""Lattice Green's function and the limit constants built from it.

``G(x) = sum_{k>=1} P{S_k = x}`` is computed from its Fourier form

    G(x) = (2 pi)^-d  int_{[-pi,pi]^d} phi/(1-phi) cos(x.theta) dtheta.

The ``1/(1-phi)`` pole at the origin is removed by subtracting
``s(theta) = (2/q) exp(-beta q)`` with ``q = <theta, Gamma theta>``, whose
transform over R^d is an incomplete gamma function. The bounded remainder
is integrated with the midpoint rule on an ``N^d`` grid, one FFT giving all
``x`` at once, and N is doubled until two grids agree.

Return probabilities ``p_k(0)`` are also computed directly (binomial
convolutions for simple and lazy walks, dense convolution otherwise) and
summed with a fitted power-law tail as an independent check of ``G(0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import special, stats

from .lattice_walk import WalkModel

# E int L^2(1, x) dx for standard Brownian motion:
# 2 int_0^1 (1-u) (2 pi u)^(-1/2) du = 2 (2 pi)^(-1/2) (2 - 2/3) = 8 / (3 sqrt(2 pi))
E_INT_L2 = 8.0 / (3.0 * math.sqrt(2.0 * math.pi))

MAX_GRID_POINTS = 1 << 24


class GreenError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _grid_sizes(d: int) -> list[int]:
    base = {3: [32, 64, 128, 256], 4: [16, 32, 64], 5: [12, 16, 24, 32]}.get(d)
    if base is None:
        base = [6, 8, 12, 16]
    return [N for N in base if N ** d <= MAX_GRID_POINTS]


def _beta(model: WalkModel) -> float:
    lam_min = float(np.linalg.eigvalsh(model.covariance).min())
    return 40.0 / (math.pi ** 2 * lam_min)


def _axes(N: int) -> np.ndarray:
    return -math.pi + 2.0 * math.pi * (np.arange(N) + 0.5) / N


def _phi_and_q(model: WalkModel, N: int):
    """phi(theta) and <theta, Gamma theta> on the midpoint grid."""
    d = model.d
    t = _axes(N)
    shape = [1] * d

    def ax(i):
        s = list(shape)
        s[i] = N
        return t.reshape(s)

    if model.kind in ("simple", "lazy"):
        c = np.cos(t)
        phi = np.zeros((N,) * d)
        for i in range(d):
            s = list(shape)
            s[i] = N
            phi = phi + c.reshape(s)
        phi /= d
        if model.kind == "lazy":
            h = float(model.hold)
            phi = h + (1.0 - h) * phi
    else:
        phi = np.zeros((N,) * d)
        for v, p in zip(model.displacements, model.probabilities):
            arg = np.zeros((1,) * d)
            for i in range(d):
                if v[i]:
                    arg = arg + float(v[i]) * ax(i)
            phi = phi + p * np.cos(arg)
    cov = model.covariance
    q = np.zeros((N,) * d)
    for i in range(d):
        for j in range(d):
            if cov[i, j]:
                q = q + cov[i, j] * ax(i) * ax(j)
    return phi, q


def subtraction_transform(model: WalkModel, x: np.ndarray, beta: float) -> np.ndarray:
    """``(2 pi)^-d int_{R^d} (2/q) e^{-beta q} cos(x.theta) dtheta`` for rows of x."""
    d = model.d
    x = np.atleast_2d(np.asarray(x, dtype=float))
    inv = np.linalg.inv(model.covariance)
    rho2 = np.einsum("ij,jk,ik->i", x, inv, x)
    a = d / 2.0 - 1.0
    pref = 2.0 * (2 * math.pi) ** (-d) * math.pi ** (d / 2.0) / math.sqrt(model.det_covariance)
    out = np.empty(rho2.shape)
    zero = rho2 == 0
    out[zero] = pref * beta ** (-a) / a
    r = rho2[~zero]
    out[~zero] = pref * (4.0 / r) ** a * special.gamma(a) * special.gammainc(a, r / (4.0 * beta))
    return out


def _green_grid(model: WalkModel, N: int, beta: float) -> np.ndarray:
    """G on the periodic index set ``x mod N`` from an N^d midpoint grid."""
    d = model.d
    phi, q = _phi_and_q(model, N)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = 1.0 / (1.0 - phi) - 2.0 * np.exp(-beta * q) / q
    del phi, q
    # sum_j r_j exp(i x theta_j), theta_j = -pi + 2 pi (j + 1/2)/N along each axis
    F = sfft.ifftn(r, workers=-1)
    del r
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)  # x value of each FFT index
    phase1 = np.exp(1j * k * (-math.pi + math.pi / N))
    for i in range(d):
        s = [1] * d
        s[i] = N
        F = F * phase1.reshape(s)
    # ifftn divides by N^d; the quadrature weight is (2pi/N)^d/(2pi)^d = N^-d
    return F.real


@dataclass
class GreensTable:
    """Values of G on the box ``|x|_inf <= radius`` with error estimates."""

    model: WalkModel
    gamma: float
    values: dict
    truncation_radius: int
    error_estimate: dict
    grid: int
    tol: float

    def __call__(self, x) -> float:
        return self.values[tuple(int(c) for c in x)]

    def as_array(self):
        keys = sorted(self.values)
        return np.array(keys), np.array([self.values[k] for k in keys])


def _box(d: int, R: int) -> np.ndarray:
    rng = np.arange(-R, R + 1)
    return np.array(np.meshgrid(*([rng] * d), indexing="ij")).reshape(d, -1).T


def greens_table(model: WalkModel, radius: int = 5, tol: float = 1e-6,
                 grids: list[int] | None = None) -> GreensTable:
    """G on ``|x|_inf <= radius``.

    N is doubled until the Richardson correction between successive grids
    (the midpoint error is O(N^-d)) is below tol/2 everywhere on the box.
    """
    d = model.d
    if d <= 2:
        raise GreenError("the Green's function diverges for d <= 2")
    if tol <= 0:
        raise GreenError("tol must be positive")
    beta = _beta(model)
    pts = _box(d, radius)
    T = subtraction_transform(model, pts, beta)
    delta = np.all(pts == 0, axis=1).astype(float)
    prev = None
    prev_N = None
    grids = grids or _grid_sizes(d)
    for N in grids:
        if 2 * radius + 1 > N // 2:
            continue
        Gp = _green_grid(model, N, beta)
        vals = Gp[tuple((pts % N).T)] + T - delta
        if prev is not None:
            # the midpoint error is O(N^-d); extrapolate and keep the correction as the error
            corr = (vals - prev) / ((N / prev_N) ** d - 1)
            err = np.abs(corr)
            vals = vals + corr
            if err.max() <= tol / 2:
                return GreensTable(
                    model, float(vals[np.all(pts == 0, axis=1)][0]),
                    {tuple(int(c) for c in p): float(v) for p, v in zip(pts, vals)},
                    radius, {tuple(int(c) for c in p): float(e) for p, e in zip(pts, err)},
                    N, tol)
        prev = vals - corr if prev is not None else vals
        prev_N = N
    raise ConvergenceError(
        f"Green's function did not converge to {tol} on grids {grids}")


def green(model: WalkModel, x=None, tol: float = 1e-6) -> float:
    """G(x) within ``tol``."""
    if x is None:
        x = (0,) * model.d
    x = tuple(int(c) for c in np.atleast_1d(x))
    if len(x) != model.d:
        raise GreenError(f"x must have {model.d} coordinates")
    R = max(abs(c) for c in x)
    return greens_table(model, radius=max(R, 1), tol=tol)(x)


def green_residual(table: GreensTable, radius: int = 5) -> float:
    """max over ``|x|_inf <= radius`` of ``|G(x) - p1(x) - sum_v p1(v) G(x-v)|``."""
    m = table.model
    radius = min(radius, table.truncation_radius - m.max_step)
    steps = [(tuple(int(c) for c in v), float(p)) for v, p in m.steps]
    worst = 0.0
    for x in _box(m.d, radius):
        x = tuple(int(c) for c in x)
        rhs = sum(p for v, p in steps if v == x)
        for v, p in steps:
            rhs += p * table.values[tuple(a - b for a, b in zip(x, v))]
        worst = max(worst, abs(table.values[x] - rhs))
    return worst


def asymptotic_green(model: WalkModel, x) -> np.ndarray:
    """Leading term ``a_d det(Gamma)^-1/2 <x, Gamma^-1 x>^(1-d/2)``."""
    d = model.d
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rho2 = np.einsum("ij,jk,ik->i", x, np.linalg.inv(model.covariance), x)
    a_d = special.gamma(d / 2.0 - 1.0) / (2.0 * math.pi ** (d / 2.0))
    return a_d / math.sqrt(model.det_covariance) * rho2 ** (1.0 - d / 2.0)


# -------------------------------------------------------- return probabilities
def _u1(K: int) -> np.ndarray:
    """P{X_k = 0} for the +-1 walk, k = 0..K."""
    k = np.arange(K + 1)
    u = np.zeros(K + 1)
    even = k % 2 == 0
    u[even] = stats.binom.pmf(k[even] // 2, k[even], 0.5)
    return u


def _binomial_rows(K: int, a: float):
    """Yield ``(k, pmf of Binomial(k, a))`` for k = 0..K by the row recurrence."""
    w = np.zeros(K + 1)
    w[0] = 1.0
    yield 0, w[:1]
    for k in range(1, K + 1):
        w[1 : k + 1] = a * w[:k] + (1.0 - a) * w[1 : k + 1]
        w[0] *= 1.0 - a
        yield k, w[: k + 1]


def _thin(p: np.ndarray, keep: float) -> np.ndarray:
    """``sum_j C(k,j) keep^j (1-keep)^(k-j) p_j`` for every k."""
    K = len(p) - 1
    out = np.empty(K + 1)
    for k, w in _binomial_rows(K, keep):
        out[k] = np.dot(w, p[: k + 1])
    return out


def return_probabilities(model: WalkModel, K: int) -> np.ndarray:
    """``p_k(0)`` for k = 0..K."""
    if model.kind in ("simple", "lazy"):
        d = model.d
        u = _u1(K)
        R = u.copy()
        for m in range(2, d + 1):
            new = np.empty(K + 1)
            for k, w in _binomial_rows(K, (m - 1) / m):
                new[k] = np.dot(w, R[: k + 1] * u[k::-1])
            R = new
        if model.kind == "lazy":
            R = _thin(R, 1.0 - float(model.hold))
        return R
    return _dense_return_probabilities(model, K)


def _dense_return_probabilities(model: WalkModel, K: int) -> np.ndarray:
    d = model.d
    M = model.max_step * K
    if (2 * M + 1) ** d > 2 * 10**7:
        raise GreenError("dense convolution too large; lower K")
    p = np.zeros((2 * M + 1,) * d)
    origin = (M,) * d
    p[origin] = 1.0
    out = np.empty(K + 1)
    out[0] = 1.0
    steps = [(tuple(int(c) for c in v), float(q)) for v, q in model.steps]
    for k in range(1, K + 1):
        new = np.zeros_like(p)
        for v, q in steps:
            new += q * np.roll(p, v, axis=tuple(range(d)))
        p = new
        out[k] = p[origin]
    return out


def _periodic(model: WalkModel) -> bool:
    """True when the walk returns to 0 only at even times."""
    return all(sum(v) % 2 == 1 for v, _ in model.steps)


def gamma_by_convolution(model: WalkModel, K: int = 2000) -> tuple[float, float]:
    """``sum_k p_k(0)`` from direct summation to K plus a fitted tail.

    Partial sums over the last half of the range are fitted by
    ``gamma - A k^(1-d/2) - B k^(-d/2)``; returns ``(gamma, fit residual)``.
    """
    d = model.d
    if d <= 2:
        raise GreenError("return probabilities are not summable for d <= 2")
    p = return_probabilities(model, K)
    S = np.cumsum(p) - p[0]
    k = np.arange(K // 2, K + 1)
    if _periodic(model):
        k = k[k % 2 == 0]
    X = np.column_stack([np.ones(k.size), -(k ** (1.0 - d / 2.0)), -(k ** (-d / 2.0))])
    coef, *_ = np.linalg.lstsq(X, S[k], rcond=None)
    resid = float(np.abs(X @ coef - S[k]).max())
    return float(coef[0]), resid


def expected_Q(model: WalkModel, n: int, p: np.ndarray | None = None) -> float:
    """Exact finite-n ``E Q_n = sum_{k=1}^{n-1} (n-k) p_k(0)``."""
    if p is None:
        p = return_probabilities(model, n)
    k = np.arange(1, n)
    return float(np.dot(n - k, p[1:n]))


# ------------------------------------------------------------------ constants
@dataclass
class LimitConstants:
    """Limit-law constants for one walk.

    ``clt_variance`` is the variance of the Gaussian (or mixed Gaussian for
    d=1) limit of ``H_n`` under the normalisation in ``clt_normalisation``.
    ``var_Q_scale`` is lambda_1^2 (d=3) or lambda_2^2 (d>=4).
    """

    d: int
    clt_variance: float
    clt_scale: float
    clt_normalisation: str
    var_Q_scale: float | None
    var_Q_normalisation: str | None
    lil_constant: float
    lil_normalisation: str
    lil_constant_alt: float | None
    mean_Q_scale: float
    mean_Q_growth: str
    gamma: float | None
    errors: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def md_rate(self, lam: float) -> float:
        return self._md(lam)

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if not k.startswith("_")}
        return out


def lambda2_squared(model: WalkModel, tol: float = 1e-6, radius: int | None = None) -> tuple[float, float, dict]:
    """``3 G(0)^2 + G(0) + 2 sum_x G(x)^3`` with a fitted tail for the box sum.

    Box sums ``S(R)`` over ``|x|_inf <= R`` are fitted by
    ``S_inf - c R^(6-2d) - c' R^(5-2d)`` on the upper half of the radii.
    """
    d = model.d
    if d < 4:
        raise GreenError("lambda_2 applies to d >= 4")
    table = greens_table(model, radius=1, tol=tol)
    N = _grid_sizes(d)[-1]
    if radius is None:
        radius = N // 4 - 1
    radius = min(radius, N // 2 - 1)
    beta = _beta(model)
    pts = _box(d, radius)
    Gp = _green_grid(model, N, beta)
    vals = Gp[tuple((pts % N).T)] + subtraction_transform(model, pts, beta)
    vals[np.all(pts == 0, axis=1)] = table.gamma
    del Gp
    linf = np.abs(pts).max(axis=1)
    cube = vals ** 3
    Rs = np.arange(2, radius + 1)
    S = np.array([cube[linf <= R].sum() for R in Rs])
    sel = Rs >= max(2, radius // 2)
    e1, e2 = 6.0 - 2.0 * d, 5.0 - 2.0 * d
    X = np.column_stack([np.ones(sel.sum()), -(Rs[sel] + 0.5) ** e1, -(Rs[sel] + 0.5) ** e2])
    coef, *_ = np.linalg.lstsq(X, S[sel], rcond=None)
    s_inf = float(coef[0])
    tail = s_inf - float(S[-1])
    g0 = table.gamma
    value = 3 * g0 ** 2 + g0 + 2 * s_inf
    err = 2 * abs(tail) * 0.1 + 7 * table.error_estimate[(0,) * d]
    return value, err, {"box_radius": radius, "box_sum": float(S[-1]), "tail": tail,
                        "G0": g0, "grid": N}


def md_rate(model: WalkModel, d: int | None, lam: float, gamma: float | None = None) -> float:
    """Moderate-deviation rate ``lim b_n^-1 log P{+-H_n >= lam a_n}`` (a negative number)."""
    d = model.d if d is None else d
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if d == 1:
        sigma = math.sqrt(model.sigma2)
        return -0.5 * sigma ** (2.0 / 3.0) * (3.0 * lam) ** (4.0 / 3.0)
    if d == 2:
        return -math.pi * math.sqrt(model.det_covariance) * lam ** 2
    if gamma is None:
        gamma = green(model)
    return -lam ** 2 / (2.0 * gamma)


def limit_constants(model: WalkModel, tol: float = 1e-6) -> LimitConstants:
    d = model.d
    det = model.det_covariance
    if d == 1:
        sigma = math.sqrt(model.sigma2)
        var = E_INT_L2 / (2.0 * sigma)
        lc = LimitConstants(
            d, var, math.sqrt(var), "n^(3/4)", None, None,
            2 ** 0.75 / 3.0 / math.sqrt(sigma), "(n loglog n)^(3/4)", None,
            4.0 / (3.0 * sigma * math.sqrt(2 * math.pi)), "n^(3/2)", None,
            notes={"clt": "mixed Gaussian: sqrt(int L^2 / (2 sigma)) U",
                   "lil": "normalisation (n loglog n)^(3/4), loglog n being the moderate-deviation speed"})
    elif d == 2:
        var = 1.0 / (2.0 * math.pi * math.sqrt(det))
        lc = LimitConstants(
            d, var, math.sqrt(var), "sqrt(n log n)", None, None,
            1.0 / (math.sqrt(math.pi) * det ** 0.25), "sqrt(n log n loglog n)",
            1.0 / math.sqrt(math.pi * det ** 0.25),
            var, "n log n", None,
            notes={"lil": "primary reading 1/(sqrt(pi) det^(1/4)) matches the rate; "
                          "alt reading 1/sqrt(pi det^(1/4))"})
    else:
        table = greens_table(model, radius=1, tol=tol)
        g = table.gamma
        gerr = table.error_estimate[(0,) * d]
        if d == 3:
            vq, vq_norm, vq_err, extra = 1.0 / (2.0 * math.pi ** 2 * det), "n log n", 0.0, {}
        else:
            vq, vq_err, extra = lambda2_squared(model, tol=tol)
            vq_norm = "n"
        lc = LimitConstants(
            d, g, math.sqrt(g), "sqrt(n)", vq, vq_norm,
            math.sqrt(2 * g), "sqrt(n loglog n)", None, g, "n", g,
            errors={"gamma": gerr, "clt_variance": gerr, "var_Q_scale": vq_err,
                    "lil_constant": gerr / math.sqrt(2 * g)},
            notes={"lambda2": extra} if extra else {})
    lc._md = lambda lam, _m=model, _g=lc.gamma: md_rate(_m, None, lam, _g)
    return lc
