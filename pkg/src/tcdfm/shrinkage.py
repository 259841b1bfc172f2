"""
Normal-Gamma (double Gamma) global-local shrinkage on signed SV scales.

Each block shrinks a vector of signed standard deviations ``s_r = sqrt(theta_r)``
with ``s_r ~ N(0, B_r)``, ``B_r ~ G(kappa, kappa * xi / 2)`` and
``xi ~ G(c0, c1)`` (shape/rate).

GIG parameterization used throughout this package::

    p(x) ∝ x**(p - 1) * exp(-(a / x + b * x) / 2),   x > 0

so the local-scale conditional is ``GIG(kappa - 1/2, theta_r, xi * kappa)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "GIGParameterError",
    "ShrinkageBlock",
    "sample_gig",
    "sample_local_scales",
    "sample_global_scale",
    "gig_log_density",
]

# below this sqrt(a*b) the GIG is replaced by its Gamma / inverse-Gamma limit
_OMEGA_TOL = 10.0 * np.finfo(float).eps

# local-scale conditionals are improper at theta_r == 0; floor the data term
THETA_FLOOR = 1e-300


class GIGParameterError(ValueError):
    """Raised when (p, a, b) does not define a proper GIG distribution."""


def gig_log_density(x, p: float, a: float, b: float):
    """Unnormalized GIG log-density in the (p, a, b) parameterization."""
    x = np.asarray(x, dtype=float)
    return (p - 1.0) * np.log(x) - 0.5 * (a / x + b * x)


def _mode(lam: float, omega: float) -> float:
    # mode of x**(lam-1) exp(-omega/2 (x + 1/x)), stable for both lam regimes
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega**2) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega**2) + (1.0 - lam))


def _fill(n, propose):
    """Batch rejection loop: ``propose(k)`` returns accepted draws from k tries."""
    out = np.empty(n)
    filled = 0
    batch = max(16, int(1.3 * n))
    while filled < n:
        acc = propose(batch)
        take = min(acc.size, n - filled)
        out[filled:filled + take] = acc[:take]
        filled += take
    return out


def _rou_noshift(n, lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega**2)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)

    def propose(k):
        u = um * rng.random(k)
        v = rng.random(k)
        x = u / v
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = np.log(v) <= t * np.log(x) - s * (x + 1.0 / x) - nc
        return x[ok & (x > 0)]

    return _fill(n, propose)


def _rou_shift(n, lam, omega, rng):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)

    # extrema of (x - xm) sqrt(f(x)) are roots of a depressed cubic (Cardano)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a**3 / 27.0 - a * b / 3.0 + c
    arg = -q / (2.0 * math.sqrt(-(p**3) / 27.0))
    fi = math.acos(min(1.0, max(-1.0, arg)))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)

    def propose(k):
        u = uminus + rng.random(k) * (uplus - uminus)
        v = rng.random(k)
        x = u / v + xm
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (x > 0) & (np.log(v) <= t * np.log(x) - s * (x + 1.0 / x) - nc)
        return x[ok]

    return _fill(n, propose)


def _concave_hat(n, lam, omega, rng):
    # Hörmann & Leydold (2014): constant hat on [0, x0], power / exponential
    # hats beyond. Valid for 0 <= lam < 1 and 0 < omega <= 1.
    xm = _mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    a0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        a1 = 0.0
        k2 = x0 ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            a1 = k1 * math.log(2.0 / (omega * omega))
        else:
            a1 = k1 / lam * ((2.0 / omega) ** lam - x0**lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-1.0) / omega
    total = a0 + a1 + a2
    tail_start = max(x0, 2.0 / omega)

    def propose(k):
        v = total * rng.random(k)
        x = np.empty(k)
        hx = np.empty(k)
        r0 = v <= a0
        x[r0] = x0 * v[r0] / a0
        hx[r0] = k0
        r1 = (~r0) & (v <= a0 + a1)
        v1 = v[r1] - a0
        if lam == 0.0:
            x[r1] = omega * np.exp(math.exp(omega) * v1)
            hx[r1] = k1 / x[r1]
        else:
            x[r1] = (x0**lam + lam / k1 * v1) ** (1.0 / lam)
            hx[r1] = k1 * x[r1] ** (lam - 1.0)
        r2 = ~(r0 | r1)
        v2 = v[r2] - a0 - a1
        with np.errstate(divide="ignore", invalid="ignore"):
            x[r2] = -2.0 / omega * np.log(
                math.exp(-omega / 2.0 * tail_start) - omega / (2.0 * k2) * v2
            )
        hx[r2] = k2 * np.exp(-omega / 2.0 * x[r2])
        u = rng.random(k) * hx
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = np.log(u) <= (lam - 1.0) * np.log(x) - omega / 2.0 * (x + 1.0 / x)
        ok &= np.isfinite(x) & (x > 0)
        return x[ok]

    return _fill(n, propose)


def _standard_gig(n, lam, omega, rng):
    # draws from x**(lam-1) exp(-omega/2 (x + 1/x)) with lam >= 0
    if lam > 2.0 or omega > 3.0:
        return _rou_shift(n, lam, omega, rng)
    if lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        return _rou_noshift(n, lam, omega, rng)
    return _concave_hat(n, lam, omega, rng)


def sample_gig(p: float, a: float, b: float, rng: np.random.Generator, size=None):
    """
    Draw from GIG(p, a, b) with density ∝ x^(p-1) exp(-(a/x + b x)/2).

    Parameters
    ----------
    p : float
        Index parameter.
    a, b : float
        Non-negative weights on ``1/x`` and ``x``; not both zero.
    rng : numpy.random.Generator
    size : int or tuple of int, optional
        Output shape. ``None`` returns a float.

    Raises
    ------
    GIGParameterError
        If the combination is improper: ``a == 0`` needs ``p > 0, b > 0``;
        ``b == 0`` needs ``p < 0, a > 0``.
    """
    p = float(p)
    a = float(a)
    b = float(b)
    if not (np.isfinite(p) and np.isfinite(a) and np.isfinite(b)):
        raise GIGParameterError(f"non-finite GIG parameters (p={p}, a={a}, b={b})")
    if a < 0 or b < 0:
        raise GIGParameterError(f"GIG weights must be non-negative (a={a}, b={b})")
    shape = () if size is None else tuple(np.atleast_1d(size).astype(int))
    n = int(np.prod(shape)) if shape else 1

    omega = math.sqrt(a * b)
    if a == 0.0 or (omega < _OMEGA_TOL and p > 0):
        if p <= 0 or b <= 0:
            raise GIGParameterError(f"improper GIG: a=0 requires p>0 and b>0 (p={p}, b={b})")
        draws = rng.gamma(p, 2.0 / b, size=n)
    elif b == 0.0 or (omega < _OMEGA_TOL and p < 0):
        if p >= 0 or a <= 0:
            raise GIGParameterError(f"improper GIG: b=0 requires p<0 and a>0 (p={p}, a={a})")
        draws = (a / 2.0) / rng.gamma(-p, 1.0, size=n)
    else:
        lam = abs(p)
        scale = math.sqrt(a / b)
        y = _standard_gig(n, lam, omega, rng)
        draws = scale / y if p < 0 else scale * y

    return float(draws[0]) if size is None else draws.reshape(shape)


@dataclass(frozen=True)
class ShrinkageBlock:
    """
    One global-local shrinkage block.

    ``kind`` is ``"omega"`` (state equations), ``"upsilon"`` (trend factors)
    or ``"h"`` (measurement equations). ``shape0``/``rate0`` are the Gamma
    hyperparameters of the global scale: (c0, c1), (d0, d1) or (e0, e1).
    """

    kind: str
    kappa: float
    local_scales: np.ndarray
    global_scale: float
    shape0: float = 0.01
    rate0: float = 0.01

    def __post_init__(self):
        b = np.asarray(self.local_scales, dtype=float)
        object.__setattr__(self, "local_scales", b)
        if self.kappa <= 0:
            raise ValueError(f"{self.kind}: kappa must be positive")
        if np.any(b <= 0) or self.global_scale <= 0:
            raise ValueError(f"{self.kind}: shrinkage scales must be strictly positive")

    @property
    def size(self) -> int:
        return self.local_scales.size

    def posterior_shape(self) -> float:
        return self.shape0 + self.kappa * self.size

    def posterior_rate(self) -> float:
        return self.rate0 + 0.5 * self.kappa * float(np.sum(self.local_scales))


def sample_local_scales(block: ShrinkageBlock, sqrt_theta, rng: np.random.Generator) -> ShrinkageBlock:
    """Redraw every ``B_r`` from ``GIG(kappa - 1/2, theta_r, xi * kappa)``."""
    theta = np.asarray(sqrt_theta, dtype=float) ** 2
    if theta.shape != block.local_scales.shape:
        raise ValueError("sqrt_theta length does not match block size")
    b_param = block.global_scale * block.kappa
    new = np.empty_like(theta)
    for r, th in enumerate(theta):
        new[r] = sample_gig(block.kappa - 0.5, max(th, THETA_FLOOR), b_param, rng)
    new = np.maximum(new, np.finfo(float).tiny)
    return replace(block, local_scales=new)


def sample_global_scale(block: ShrinkageBlock, rng: np.random.Generator) -> ShrinkageBlock:
    """Redraw ``xi ~ G(shape0 + kappa R, rate0 + kappa/2 sum B_r)``."""
    xi = rng.gamma(block.posterior_shape(), 1.0 / block.posterior_rate())
    return replace(block, global_scale=max(float(xi), np.finfo(float).tiny))
