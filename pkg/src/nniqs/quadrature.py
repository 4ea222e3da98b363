"""Adaptive Simpson quadrature and the thermal integral of the continuum condensate."""
from __future__ import annotations

import math

# integrand tail below exp(-46) ~ 1e-20 is dropped
TAIL_EXPONENT = 46.0


class QuadratureError(RuntimeError):
    pass


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 50,
                     pieces: int = 16) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    The interval is first split into ``pieces`` panels so a lucky agreement on
    a coarse panel cannot terminate the refinement early.
    """
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth, pieces)
    if a == b:
        return 0.0
    h = (b - a) / pieces
    total = 0.0
    for p in range(pieces):
        lo = a + p * h
        hi = b if p == pieces - 1 else lo + h
        flo, fhi = f(lo), f(hi)
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
        total += _refine(f, lo, hi, flo, fmid, fhi, whole, tol / pieces, max_depth)
    return total


def _refine(f, a, b, fa, fm, fb, whole, tol, depth_left):
    stack = [(a, b, fa, fm, fb, whole, tol, depth_left)]
    total = 0.0
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
        elif depth <= 0:
            raise QuadratureError(f"adaptive Simpson did not converge on [{a}, {b}]")
        else:
            stack.append((m, b, fm, frm, fb, right, tol / 2.0, depth - 1))
            stack.append((a, m, fa, flm, fm, left, tol / 2.0, depth - 1))
    return total


def thermal_integral(a: float, tol: float = 1e-10) -> float:
    """``I(a) = int_0^inf dt / (1 - exp(a cosh t))`` for ``a > 0``."""
    if not a > 0 or not math.isfinite(a):
        raise ValueError(f"I(a) needs finite a > 0, got {a}")
    if math.expm1(a) == 0.0:
        raise QuadratureError(f"integrand singular to working precision at a={a}")

    def integrand(t: float) -> float:
        x = a * math.cosh(t)
        if x > 700.0:
            return -math.exp(-x)
        return -1.0 / math.expm1(x)

    if a >= TAIL_EXPONENT:
        t_max = 0.0
    else:
        t_max = math.acosh(TAIL_EXPONENT / a)
    # beyond t_max the integrand is below exp(-46); a cosh t >= 46 there
    if t_max == 0.0:
        # the whole integrand is below the tail threshold; integrate a short
        # window anyway so the return value stays continuous in a
        t_max = 1.0
    return adaptive_simpson(integrand, 0.0, t_max, tol)
