"""Finite-difference validation of analytic gradients.

Central differences around every parameter element, compared against the
gradients produced by a backward pass. Dropout layers are frozen for the
duration (masks would otherwise change between evaluations) and batch-norm
running statistics are snapshotted and restored, so the check leaves the
network as it found it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Dropout
from .network import Network


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    passed: bool
    checked: int
    block_errors: list[float] = field(default_factory=list)


def gradient_check(
    networks,
    loss_fn,
    grad_fn,
    tolerance: float = 1e-5,
    fd_step: float = 1e-4,
    abs_floor: float | None = None,
    max_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare ``grad_fn``'s analytic gradients to central differences.

    ``loss_fn()`` evaluates the scalar loss at the current parameters;
    ``grad_fn()`` returns ``(loss, grads)`` with one gradient array per
    parameter array of ``networks`` (a Network or list of Networks).
    Differences below ``abs_floor`` count as zero error; the default floor
    tracks the cancellation noise of the difference quotient at the loss's
    magnitude, so vanishing gradients do not blow up the relative measure.
    By default every element is checked; ``max_samples`` bounds the number
    of elements probed per parameter block for large networks.
    """
    if isinstance(networks, Network):
        networks = [networks]
    params = [p for net in networks for p in net.params()]

    dropouts = [l for net in networks for l in net.layers if isinstance(l, Dropout)]
    saved_rates = [d.rate for d in dropouts]
    bn_states = [a.copy() for net in networks for l in net.layers for a in l.state]
    try:
        for d in dropouts:
            d.rate = 0.0
        loss0, grads = grad_fn()
        if abs_floor is None:
            abs_floor = 100.0 * np.finfo(np.float64).eps * max(1.0, abs(loss0)) / fd_step
        grads = [g.copy() for g in grads]
        if len(grads) != len(params):
            raise ValueError("grad_fn returned a mismatched gradient list")

        if rng is None:
            rng = np.random.default_rng(0)
        max_rel = 0.0
        checked = 0
        block_errors = []
        for p, g in zip(params, grads):
            flat_p = p.reshape(-1)
            flat_g = g.reshape(-1)
            if max_samples is not None and flat_p.size > max_samples:
                indices = rng.choice(flat_p.size, size=max_samples, replace=False)
            else:
                indices = range(flat_p.size)
            block_max = 0.0
            for i in indices:
                orig = flat_p[i]
                flat_p[i] = orig + fd_step
                up = loss_fn()
                flat_p[i] = orig - fd_step
                down = loss_fn()
                flat_p[i] = orig
                fd = (up - down) / (2.0 * fd_step)
                err = abs(fd - flat_g[i])
                if err >= abs_floor:
                    rel = err / max(abs(fd), abs(flat_g[i]), 1e-12)
                    block_max = max(block_max, rel)
                checked += 1
            block_errors.append(block_max)
            max_rel = max(max_rel, block_max)
    finally:
        for d, r in zip(dropouts, saved_rates):
            d.rate = r
        states = [a for net in networks for l in net.layers for a in l.state]
        for a, saved in zip(states, bn_states):
            a[...] = saved
    return GradCheckReport(max_rel, tolerance, max_rel < tolerance, checked, block_errors)
