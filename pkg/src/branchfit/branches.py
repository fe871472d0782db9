"""Limit-cycle records, branches of them, and branch-to-branch comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory
from .errors import NoOverlapError

STABLE = "stable"
UNSTABLE = "unstable"
UNDETERMINED = "undetermined"


@dataclass
class LimitCycle:
    """One point on a bifurcation diagram.

    ``period_samples`` holds one period of the full plant state on a uniform
    grid, first sample repeated at the end.  ``a0``/``a1`` are the static
    offset and fundamental amplitude of the primary (heave or deformation)
    coordinate; ``control_residual`` is the RMS feedback force normalized by
    ``k_p * a1`` (zero means the traced orbit is an open-loop solution).
    """

    param_value: float
    a0: float
    a1: float
    omega: float
    period_samples: Trajectory
    stability: str = UNDETERMINED
    control_residual: float = 0.0
    floquet: np.ndarray | None = None

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    @property
    def initial_state(self) -> np.ndarray:
        return self.period_samples.samples[0].copy()


@dataclass
class Branch:
    """Ordered sequence of limit cycles along a continuation path."""

    points: list
    parameter_name: str = "V"
    provenance: str = "cbc"
    plant: str = ""
    sigma: float = 0.0
    complete: bool = True
    notes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def params(self) -> np.ndarray:
        return np.array([c.param_value for c in self.points])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([c.a1 for c in self.points])

    def subset(self, stability: str) -> list:
        return [c for c in self.points if c.stability == stability]


def _segments(branch: Branch):
    """Maximal runs of constant stability that are monotone in the parameter.

    Along a fold the parameter reverses direction, so splitting on both the
    stability label and the sweep direction yields pieces on which amplitude
    is a single-valued function of the parameter.
    """
    pts = branch.points
    segs = []
    start = 0
    direction = 0.0
    for i in range(1, len(pts) + 1):
        if i == len(pts):
            segs.append(pts[start:i])
            break
        step = pts[i].param_value - pts[i - 1].param_value
        new_dir = np.sign(step) if step != 0 else direction
        split = pts[i].stability != pts[start].stability or (
            direction != 0.0 and new_dir != 0.0 and new_dir != direction)
        if split:
            segs.append(pts[start:i])
            start = i
            direction = 0.0
        else:
            direction = new_dir if new_dir != 0.0 else direction
    return [s for s in segs if len(s) > 0]


def _interp_segment(seg, params):
    xs = np.array([c.param_value for c in seg])
    ys = np.array([c.a1 for c in seg])
    order = np.argsort(xs)
    return np.interp(params, xs[order], ys[order])


def compare_branches(truth: Branch, predicted: Branch) -> dict:
    """Amplitude RMS error of ``predicted`` against ``truth``.

    Branches are split into monotone constant-stability segments; each truth
    segment is matched to the same-stability predicted segment with the
    largest parameter overlap and the predicted amplitude is interpolated at
    the truth parameter values.  Errors are reported per stability class and
    overall.
    """
    truth_segs = _segments(truth)
    pred_segs = _segments(predicted)
    sq_errors = {}
    used_points = 0
    for tseg in truth_segs:
        label = tseg[0].stability
        t_lo = min(c.param_value for c in tseg)
        t_hi = max(c.param_value for c in tseg)
        best = None
        for pseg in pred_segs:
            if pseg[0].stability != label:
                continue
            p_lo = min(c.param_value for c in pseg)
            p_hi = max(c.param_value for c in pseg)
            overlap = min(t_hi, p_hi) - max(t_lo, p_lo)
            if overlap <= 0 and not (len(pseg) == 1 and p_lo == t_lo == t_hi):
                continue
            if best is None or overlap > best[0]:
                best = (overlap, pseg, max(t_lo, p_lo), min(t_hi, p_hi))
        if best is None:
            continue
        _, pseg, lo, hi = best
        inside = [c for c in tseg if lo - 1e-12 <= c.param_value <= hi + 1e-12]
        if not inside:
            continue
        params = np.array([c.param_value for c in inside])
        pred_amp = _interp_segment(pseg, params)
        true_amp = np.array([c.a1 for c in inside])
        sq_errors.setdefault(label, []).extend(((pred_amp - true_amp) ** 2).tolist())
        used_points += len(inside)
    if used_points == 0:
        raise NoOverlapError("branches share no comparable parameter range")
    all_sq = [e for errs in sq_errors.values() for e in errs]
    by_class = {label: float(np.sqrt(np.mean(errs))) for label, errs in sq_errors.items()}
    return {
        "rms_total": float(np.sqrt(np.mean(all_sq))),
        "rms_by_stability": by_class,
        "points_compared": used_points,
    }
