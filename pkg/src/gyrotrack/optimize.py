"""First-order minimization used by every tracker variant.

``descend`` is gradient descent with a fast bracketing line search: the step
along the (normalized) search direction marches forward while the energy
keeps strictly decreasing and otherwise halves, for a fixed number of
refinements. It is deterministic and never returns a point with higher
energy than its start.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DescentConfig:
    """Iteration limits and line-search geometry.

    ``min_steps_coarsest`` applies on the lowest-resolution pyramid level,
    ``min_steps`` everywhere else. Descent stops early (after the minimum
    step count) once the direction magnitude drops below ``grad_eps`` or
    fails to shrink by at least the ``decay_ratio`` factor.
    """

    min_steps: int = 3
    min_steps_coarsest: int = 40
    max_steps: int = 40
    step_size: float = 2.0
    max_refinements: int = 10
    grad_eps: float = 0.00001
    decay_ratio: float = 0.9999

    def __post_init__(self):
        if min(self.min_steps, self.min_steps_coarsest, self.max_steps,
               self.max_refinements) <= 0 or self.step_size <= 0:
            raise ValueError("descent limits must be positive")
        if self.min_steps > self.max_steps or self.min_steps_coarsest > self.max_steps:
            raise ValueError("min_steps must not exceed max_steps")

    def min_steps_at(self, level, n_levels=4):
        return self.min_steps_coarsest if level == n_levels - 1 else self.min_steps


def descend(energy, gradient, p0, cfg, min_steps=None, direction=None):
    """Minimize ``energy`` from ``p0`` by descent with fast line search.

    ``gradient`` returns the energy gradient at a point; ``direction`` maps
    that gradient to a search direction (default: its negative). Errors from
    the energy oracle propagate with the failing iterate attached.
    """
    if min_steps is None:
        min_steps = cfg.min_steps
    p = np.asarray(p0, dtype=np.float64).copy()
    prev_norm = None

    try:
        for n in range(1, cfg.max_steps + 1):
            g = gradient(p)
            v = -np.asarray(g, dtype=np.float64) if direction is None else direction(g)
            vnorm = float(np.linalg.norm(v))
            if n > min_steps and (
                vnorm < cfg.grad_eps
                or (prev_norm is not None and vnorm > cfg.decay_ratio * prev_norm)
            ):
                break
            prev_norm = vnorm
            if vnorm < cfg.grad_eps:
                # direction too small to normalize; hold position this step
                continue
            v = (cfg.step_size / vnorm) * v

            x1 = p
            a = energy(x1)
            x2 = p + v
            b = energy(x2)
            x3 = p + 2.0 * v
            c = energy(x3)
            refinements = 1
            while refinements < cfg.max_refinements:
                if a > b > c:
                    x1, a = x2, b
                    x2, b = x3, c
                    x3 = x3 + v
                    c = energy(x3)
                else:
                    v = v / 2.0
                    x3, c = x2, b
                    x2 = x1 + v
                    b = energy(x2)
                    refinements += 1
            p = np.asarray(x1, dtype=np.float64)
        return p
    except Exception as exc:
        # attach the last accepted iterate so callers can report where the
        # oracle failed
        exc.descent_iterate = np.array(p, copy=True)
        raise


def multi_search_direction(grad, count=None):
    """Blend of the joint descent direction and per-feature unit directions.

    Half the weight goes to the normalized negative gradient of the joint
    energy, half to the per-feature normalization of that same vector, so a
    strong feature cannot stall the updates of weak ones. Zero per-feature
    blocks contribute nothing; an all-zero gradient yields the zero vector
    (the caller's signal to stop).
    """
    g = np.asarray(grad, dtype=np.float64).reshape(-1)
    if g.size % 2 != 0:
        raise ValueError("gradient must interleave (x, y) pairs")
    if count is not None and count * 2 != g.size:
        raise ValueError(f"gradient length {g.size} does not match {count} features")
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return np.zeros_like(g)
    a = -g / gnorm
    v = 0.5 * a
    for f in range(g.size // 2):
        y = a[2 * f:2 * f + 2]
        ynorm = float(np.linalg.norm(y))
        if ynorm > 0.0:
            v[2 * f:2 * f + 2] += 0.5 * (y / ynorm)
    return v


def coarse_to_fine(solve_at_level, x0, n_levels=4):
    """Drive a per-level solver from the coarsest pyramid level to the finest.

    ``x0`` is in full-resolution coordinates; each level's solution, doubled,
    seeds the next finer level. ``solve_at_level(level, positions)`` works in
    that level's pixel units.
    """
    p = np.asarray(x0, dtype=np.float64) / float(2 ** (n_levels - 1))
    for level in range(n_levels - 1, -1, -1):
        p = np.asarray(solve_at_level(level, p), dtype=np.float64)
        if level > 0:
            p = p * 2.0
    return p
