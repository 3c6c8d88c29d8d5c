"""Poincare-ball geometry at constant curvature c > 0.

Points live in the open ball of radius 1/sqrt(c); all functions accept
single points (shape ``(n,)``) or batches (shape ``(..., n)``) and broadcast
over leading axes. Everything here is pure and stateless.

Conventions:
  distance(x, y)   = (2/sqrt(c)) * atanh(sqrt(c) * ||(-x) (+) y||)
  norm(x)          = distance(0, x)
  lambda(x)        = 2 / (1 - c ||x||^2)          (conformal factor)
  exp_x(v)         = x (+) tanh(sqrt(c) lambda_x ||v|| / 2) v / (sqrt(c)||v||)
  log_x(z)         = (2 / (sqrt(c) lambda_x)) atanh(sqrt(c)||w||) w/||w||,
                     w = (-x) (+) z
where (+) is Mobius addition. atanh arguments are clamped to [0, 1 - 1e-12]
and near-zero direction vectors are replaced by their series limits, so no
function here raises on boundary drift; outputs that must stay in the ball
are re-projected instead.
"""

import numpy as np

ATANH_CLAMP = 1.0 - 1e-12
BALL_MARGIN = 1e-5
_TINY = 1e-15


def ball_radius(c: float = 1.0) -> float:
    """Euclidean radius of the ball: 1/sqrt(c)."""
    return 1.0 / np.sqrt(c)


def _sqnorm(x):
    return np.sum(x * x, axis=-1)


def _dot(x, y):
    return np.sum(x * y, axis=-1)


def in_ball(x, c: float = 1.0, margin: float = BALL_MARGIN) -> bool:
    """True when every point has Euclidean norm <= 1/sqrt(c) - margin."""
    x = np.asarray(x, dtype=np.float64)
    return bool(np.all(np.sqrt(_sqnorm(x)) <= ball_radius(c) - margin + 1e-12))


def project_to_ball(x, c: float = 1.0, margin: float = BALL_MARGIN):
    """Radially rescale points with norm >= 1/sqrt(c) - margin onto that shell.

    Interior points pass through unchanged; the operation is idempotent.
    """
    x = np.asarray(x, dtype=np.float64)
    bound = ball_radius(c) - margin
    norms = np.sqrt(_sqnorm(x))
    scale = np.where(norms >= bound, bound / np.maximum(norms, _TINY), 1.0)
    return x * scale[..., None]


def mobius_add(x, y, c: float = 1.0):
    """Mobius (gyrovector) addition x (+) y inside the ball.

    Result is re-projected whenever rounding pushes it onto the boundary.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}"
        )
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    xy = _dot(x, y)
    num = (1.0 + 2.0 * c * xy + c * y2)[..., None] * x \
        + (1.0 - c * x2)[..., None] * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    out = num / np.maximum(den, _TINY)[..., None]
    # guard against drift only; interior results are untouched
    norms = np.sqrt(_sqnorm(out))
    limit = ball_radius(c) * (1.0 - 1e-9)
    scale = np.where(norms > limit, limit / np.maximum(norms, _TINY), 1.0)
    return out * scale[..., None]


def poincare_distance(x, y, c: float = 1.0):
    """Geodesic distance (2/sqrt(c)) atanh(sqrt(c) ||(-x) (+) y||)."""
    w = mobius_add(-np.asarray(x, dtype=np.float64), y, c=c)
    arg = np.clip(np.sqrt(c) * np.sqrt(_sqnorm(w)), 0.0, ATANH_CLAMP)
    return (2.0 / np.sqrt(c)) * np.arctanh(arg)


def poincare_norm(x, c: float = 1.0):
    """Distance from the origin; equals poincare_distance(0, x)."""
    x = np.asarray(x, dtype=np.float64)
    arg = np.clip(np.sqrt(c) * np.sqrt(_sqnorm(x)), 0.0, ATANH_CLAMP)
    return (2.0 / np.sqrt(c)) * np.arctanh(arg)


def conformal_factor(x, c: float = 1.0):
    """lambda_x = 2 / (1 - c ||x||^2), the local metric scaling."""
    x = np.asarray(x, dtype=np.float64)
    return 2.0 / np.maximum(1.0 - c * _sqnorm(x), _TINY)


def exp_map(base, v, c: float = 1.0):
    """Exponential map of tangent vector v at base; inverse of log_map."""
    base = np.asarray(base, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sqc = np.sqrt(c)
    vnorm = np.sqrt(_sqnorm(v))
    lam = conformal_factor(base, c=c)
    t = np.tanh(sqc * lam * vnorm / 2.0)
    # v/||v|| -> series limit 0 as v -> 0, making exp_x(0) = x exactly
    direction = v / np.maximum(vnorm, _TINY)[..., None]
    second = (t / sqc)[..., None] * direction
    second = np.where(vnorm[..., None] < _TINY, np.zeros_like(second), second)
    return mobius_add(base, second, c=c)


def log_map(base, z, c: float = 1.0):
    """Logarithm map: the tangent vector at base pointing to z."""
    base = np.asarray(base, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    sqc = np.sqrt(c)
    w = mobius_add(-base, z, c=c)
    wnorm = np.sqrt(_sqnorm(w))
    lam = conformal_factor(base, c=c)
    coef = (2.0 / (sqc * lam)) * np.arctanh(
        np.clip(sqc * wnorm, 0.0, ATANH_CLAMP)
    )
    direction = w / np.maximum(wnorm, _TINY)[..., None]
    out = coef[..., None] * direction
    return np.where(wnorm[..., None] < _TINY, np.zeros_like(out), out)


def exp_map0(v, c: float = 1.0):
    """Exponential map at the origin."""
    v = np.asarray(v, dtype=np.float64)
    sqc = np.sqrt(c)
    vnorm = np.sqrt(_sqnorm(v))
    scale = np.tanh(sqc * vnorm) / (sqc * np.maximum(vnorm, _TINY))
    scale = np.where(vnorm < _TINY, 1.0, scale)
    return v * scale[..., None]


def log_map0(z, c: float = 1.0):
    """Logarithm map at the origin."""
    z = np.asarray(z, dtype=np.float64)
    sqc = np.sqrt(c)
    znorm = np.sqrt(_sqnorm(z))
    scale = np.arctanh(np.clip(sqc * znorm, 0.0, ATANH_CLAMP)) / (
        sqc * np.maximum(znorm, _TINY)
    )
    scale = np.where(znorm < _TINY, 1.0, scale)
    return z * scale[..., None]


def angle(u_embed, v_embed):
    """Cosine of the angle between two embedding vectors.

    The ball is conformal to Euclidean space, so this is the plain
    Euclidean cosine similarity, always in [-1, 1].
    """
    u = np.asarray(u_embed, dtype=np.float64)
    v = np.asarray(v_embed, dtype=np.float64)
    un = np.sqrt(_sqnorm(u))
    vn = np.sqrt(_sqnorm(v))
    if np.any(un < _TINY) or np.any(vn < _TINY):
        raise ValueError("undefined angle at origin")
    return np.clip(_dot(u, v) / (un * vn), -1.0, 1.0)
