"""Exact step length along a Gauss-Newton direction.

Along the ray (A + mu dA, Psi + mu dPsi) the residual is
E0 - mu B - mu^2 C with B = dA A^H + A dA^H + dPsi and C = dA dA^H, so the
cost is a real quartic in mu. Its minimizer is a real root of the cubic
derivative, found in closed form.
"""

import math

import numpy as np


def _rinner(X, Y):
    return float(np.vdot(X, Y).real)


def quartic_coefficients(E0, B, C):
    """Coefficients (c0..c4) of f(mu) = ||E0 - mu B - mu^2 C||_F^2."""
    return (
        _rinner(E0, E0),
        -2.0 * _rinner(E0, B),
        _rinner(B, B) - 2.0 * _rinner(E0, C),
        2.0 * _rinner(B, C),
        _rinner(C, C),
    )


def polyval_quartic(c, mu):
    c0, c1, c2, c3, c4 = c
    return c0 + mu * (c1 + mu * (c2 + mu * (c3 + mu * c4)))


def real_cubic_roots(a, b, c, d):
    """Real roots of a x^3 + b x^2 + c x + d, degrading to lower degree when a vanishes.

    The largest-magnitude root comes from the Cardano / trigonometric formula;
    the other two from the deflated quadratic, which avoids cancellation when
    the roots are far apart.
    """
    scale = max(abs(a), abs(b), abs(c), abs(d))
    if scale == 0.0:
        return []
    if abs(a) <= 1e-14 * scale:
        return _real_quadratic_roots(b, c, d, scale)
    b, c, d = b / a, c / a, d / a
    # rescale x = sigma y so the roots are O(1); keeps the discriminant in range
    sigma = max(abs(b), math.sqrt(abs(c)), abs(d) ** (1.0 / 3.0))
    if sigma == 0.0:
        return [0.0, 0.0, 0.0]
    b, c, d = b / sigma, c / sigma / sigma, d / sigma / sigma / sigma
    # depressed cubic t^3 + p t + q with y = t - b/3
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0 or p >= 0.0:
        s = math.sqrt(max(disc, 0.0))
        y1 = _cbrt(-q / 2.0 + s) + _cbrt(-q / 2.0 - s) - shift
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * r)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        y1 = max((r * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift for k in range(3)), key=abs)
    y1 = _polish(y1, 1.0, b, c, d, steps=3)
    if y1 == 0.0:
        rest = _real_quadratic_roots(1.0, b, c, 1.0)
    else:
        # deflate y^3 + b y^2 + c y + d = (y - y1)(y^2 + B y + C); pick the better-conditioned B
        C = -d / y1
        if abs(b) + abs(y1) <= (abs(C) + abs(c)) / abs(y1):
            B = b + y1
        else:
            B = (C - c) / y1
        rest = _real_quadratic_roots(1.0, B, C, 1.0)
    return [sigma * y for y in [y1] + [_polish(y, 1.0, b, c, d) for y in rest]]


def _cbrt(x):
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _real_quadratic_roots(a, b, c, scale):
    if abs(a) <= 1e-14 * scale:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sq = math.copysign(math.sqrt(disc), b)
    q = -0.5 * (b + sq)
    if q == 0.0:
        return [0.0, 0.0]
    return [q / a, c / q]


def _polish(x, a, b, c, d, steps=2):
    for _ in range(steps):
        f = ((a * x + b) * x + c) * x + d
        df = (3 * a * x + 2 * b) * x + c
        if df == 0.0:
            break
        x_new = x - f / df
        if not math.isfinite(x_new) or abs(((a * x_new + b) * x_new + c) * x_new + d) >= abs(f):
            break
        x = x_new
    return x


def quartic_change(c, mu):
    """f(mu) - f(0); avoids losing small decreases against a large constant term."""
    _, c1, c2, c3, c4 = c
    return mu * (c1 + mu * (c2 + mu * (c3 + mu * c4)))


def minimize_quartic(coef):
    """Global minimizer of the quartic among 0 and the stationary points."""
    c0, c1, c2, c3, c4 = coef
    candidates = [0.0] + [
        x for x in real_cubic_roots(4 * c4, 3 * c3, 2 * c2, c1) if math.isfinite(x)
    ]
    vals = [quartic_change(coef, x) for x in candidates]
    return candidates[int(np.argmin(vals))]


def step_terms(A, dA, dPsi):
    AdA = dA @ A.conj().T
    B = AdA + AdA.conj().T + dPsi
    C = dA @ dA.conj().T
    return B, C


def line_search_mu(E0, model, delta_A, delta_Psi):
    """Exact minimizing step for the quartic cost along the direction."""
    B, C = step_terms(model.A, delta_A, delta_Psi)
    if not np.any(B) and not np.any(C):
        return 0.0
    return minimize_quartic(quartic_coefficients(E0, B, C))


def ray_cost(E0, B, C, mu):
    R = E0 - mu * B - mu * mu * C
    return float(np.vdot(R, R).real)
