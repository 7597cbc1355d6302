"""Certified Chebyshev polynomials: a square root and a Gaussian on [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb, factorial, log

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import ive

from .errors import SpectrumOutOfRange

GRID_POINTS = 10_000


def certification_grid(n: int = GRID_POINTS) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


@dataclass(frozen=True)
class CertifiedPolynomial:
    coefficients: np.ndarray  # Chebyshev basis, already multiplied by ``scale``
    target: str
    eps: float
    grid_error: float
    scale: float = 1.0
    params: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def target_value(self, x):
        return self.scale * target_function(self.target, self.params)(np.asarray(x, dtype=float))

    def __call__(self, x):
        return evaluate(self, x)


def target_function(target: str, params: dict):
    if target == "sqrt1+x/2":
        return lambda x: np.sqrt(1 + x / 2)
    if target == "sqrt1-x/2":
        return lambda x: np.sqrt(1 - x / 2)
    if target == "gauss":
        w = params["w"]
        return lambda x: np.exp(-np.pi * x**2 / (2 * w**2))
    if target == "identity":
        return lambda x: x
    if target == "one":
        return lambda x: np.ones_like(x)
    raise ValueError(f"unknown target {target!r}")


def evaluate(p: CertifiedPolynomial, x):
    """Clenshaw evaluation of the stored Chebyshev series."""
    return C.chebval(x, p.coefficients)


def _certify(coeffs: np.ndarray, target: str, eps: float, params: dict) -> CertifiedPolynomial:
    x = certification_grid()
    err = float(np.max(np.abs(C.chebval(x, coeffs) - target_function(target, params)(x))))
    if err > eps:
        raise AssertionError(f"{target}: grid error {err:.3e} exceeds eps {eps:.3e}")
    return CertifiedPolynomial(np.asarray(coeffs, dtype=float), target, eps, err, 1.0, params)


def sqrt_tail_bound(K: int) -> float:
    """Bound on the series tail past degree K at |x| <= 1: 2^-K / (2K+1)."""
    return 2.0 ** (-K) / (2 * K + 1)


def sqrt_poly(eps: float, sign: int = 1) -> CertifiedPolynomial:
    """Truncated binomial series of sqrt(1 + sign*x/2) in Chebyshev form.

    The n-th term is C(2n, n)/(1-2n) (-sign*x/8)^n, whose size on [-1, 1]
    is at most 2^-n/(2n-1), so the tail after degree K is below 2^-K/(2K+1).
    """
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    K = 0
    while sqrt_tail_bound(K) > eps / 2:
        K += 1
    mono = np.array([comb(2 * n, n) / (1 - 2 * n) * (-sign / 8) ** n for n in range(K + 1)])
    target = "sqrt1+x/2" if sign > 0 else "sqrt1-x/2"
    return _certify(C.poly2cheb(mono), target, eps, {"K": K, "tail_bound": sqrt_tail_bound(K)})


def exp_tail_bound(z: float, K: int) -> float:
    """Bound on sum_{k>K} 2 e^-z I_k(z), using I_k(z) <= (z/2)^k/k! I_0(z)."""
    total, k = 0.0, K + 1
    term = (z / 2) ** k / factorial(k)
    while True:
        total += term
        k += 1
        term *= (z / 2) / k
        if k > z and term < 1e-18 * max(total, 1e-300):
            break
    return 2 * ive(0, z) * total


def gaussian_poly(w: float, eps: float) -> CertifiedPolynomial:
    """Chebyshev approximation of exp(-pi x^2 / (2 w^2)) on [-1, 1].

    Write y = Y x^2 with Y = pi/(2 w^2) and approximate exp(-y) on [0, Y] by
    its truncated Chebyshev series in t = 2y/Y - 1 (Bessel coefficients).
    Since t = T_2(x), coefficient k of that series lands on T_{2k}(x).
    """
    if not w > 0:
        raise ValueError("w must be positive")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    Y = np.pi / (2 * w**2)
    z = Y / 2
    K = 0
    while exp_tail_bound(z, K) > eps / 2:
        K += 1
    k = np.arange(K + 1)
    r = 2 * ive(k, z) * (-1.0) ** k  # e^{-z} I_k(z) (-1)^k, doubled for k >= 1
    r[0] /= 2
    coeffs = np.zeros(2 * K + 1)
    coeffs[::2] = r
    return _certify(coeffs, "gauss", eps, {"w": w, "K": K, "tail_bound": float(exp_tail_bound(z, K))})


def sup_bound(p: CertifiedPolynomial, n: int = GRID_POINTS) -> float:
    """Grid maximum of |p| inflated by a Markov-inequality allowance between grid points."""
    x = certification_grid(n)
    m = float(np.max(np.abs(evaluate(p, x))))
    slack = p.degree**2 / (n - 1)  # (h/2) deg^2 with h = 2/(n-1)
    if slack < 0.5:
        return m / (1 - slack)
    return float(np.sum(np.abs(p.coefficients)))


def rescale_half(p: CertifiedPolynomial, scale: float | None = None) -> CertifiedPolynomial:
    """Multiply by ``scale`` (default: largest one keeping sup|p| <= 1/2)."""
    sup = sup_bound(p)
    if scale is None:
        scale = 0.5 / sup if sup > 0 else 1.0
    elif scale * sup > 0.5 + 1e-15:
        raise ValueError(f"scale {scale} leaves sup|p| = {scale * sup} above 1/2")
    return replace(
        p,
        coefficients=p.coefficients * scale,
        eps=p.eps * scale,
        grid_error=p.grid_error * scale,
        scale=p.scale * scale,
    )


def unscale(p: CertifiedPolynomial) -> CertifiedPolynomial:
    s = p.scale
    return replace(p, coefficients=p.coefficients / s, eps=p.eps / s, grid_error=p.grid_error / s, scale=1.0)


def constant_one() -> CertifiedPolynomial:
    return CertifiedPolynomial(np.array([1.0]), "one", 0.0, 0.0)


def identity_poly() -> CertifiedPolynomial:
    return CertifiedPolynomial(np.array([0.0, 1.0]), "identity", 0.0, 0.0)


def _check_spectrum(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    lam = np.linalg.eigvalsh(M)
    if lam.size and (lam.min() < -1 - tol or lam.max() > 1 + tol):
        raise SpectrumOutOfRange(f"spectrum [{lam.min()}, {lam.max()}] leaves [-1, 1]")
    return lam


def matrix_apply(p: CertifiedPolynomial, M, method: str = "recurrence") -> np.ndarray:
    """p(M) for Hermitian M with spectrum in [-1, 1]."""
    M = np.asarray(M)
    if not np.allclose(M, M.conj().T, atol=1e-12):
        raise ValueError("matrix_apply needs a Hermitian matrix")
    _check_spectrum(M)
    c = p.coefficients
    n = M.shape[0]
    if method == "eigen":
        lam, V = np.linalg.eigh(M)
        return (V * C.chebval(np.clip(lam, -1, 1), c)) @ V.conj().T
    if method != "recurrence":
        raise ValueError(f"unknown method {method!r}")
    eye = np.eye(n, dtype=M.dtype)
    b1 = np.zeros_like(M)
    b2 = np.zeros_like(M)
    for ck in c[:0:-1]:
        b1, b2 = 2 * M @ b1 - b2 + ck * eye, b1
    return M @ b1 - b2 + c[0] * eye


def degree_ratio_sqrt(p: CertifiedPolynomial) -> float:
    return p.degree / log(1 / p.eps)


def degree_ratio_gauss(p: CertifiedPolynomial) -> float:
    L = log(1 / p.eps) if p.eps < 1 else 1.0
    return p.degree / (max(1 / p.params["w"], np.sqrt(L)) * np.sqrt(L))


def export_polynomial(p: CertifiedPolynomial) -> str:
    lines = [
        "basis chebyshev",
        f"target {p.target}",
        f"eps {float(p.eps)!r}",
        f"grid_error {float(p.grid_error)!r}",
        f"scale {float(p.scale)!r}",
    ]
    lines += [f"param {k} {v!r}" for k, v in sorted(p.params.items())]
    lines.append("coefficients " + " ".join(repr(float(c)) for c in p.coefficients))
    return "\n".join(lines) + "\n"


def import_polynomial(text: str) -> CertifiedPolynomial:
    f: dict = {"params": {}}
    for line in text.splitlines():
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "param":
            f["params"][tok[1]] = float(tok[2]) if "." in tok[2] or "e" in tok[2] else int(tok[2])
        elif tok[0] == "coefficients":
            f["coefficients"] = np.array([float(t) for t in tok[1:]])
        elif tok[0] == "basis":
            if tok[1] != "chebyshev":
                raise ValueError("only the chebyshev basis is supported")
        elif tok[0] == "target":
            f["target"] = tok[1]
        else:
            f[tok[0]] = float(tok[1])
    return CertifiedPolynomial(
        f["coefficients"], f["target"], f["eps"], f["grid_error"], f.get("scale", 1.0), f["params"]
    )
