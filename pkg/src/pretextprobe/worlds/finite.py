"""Finite worlds where every risk term is an exact sum over the joint table.

``model_sat[x, k]`` says whether predicting label ``k`` at input ``x``
satisfies the knowledge; ``label_sat[x, y]`` whether the true label ``y`` at
``x`` does. Conditional rates over an empty event are 0.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from pretextprobe.errors import DataError, InvariantViolation

SLACK = 1e-12
MAX_HYPOTHESES = 10**7
KINDS = ("generic", "reliable_complete", "complete")


@dataclass
class FiniteWorld:
    joint: np.ndarray
    model_sat: np.ndarray
    label_sat: np.ndarray
    inputs: list | None = None
    labels: list | None = None

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=np.float64)
        self.model_sat = np.asarray(self.model_sat, dtype=bool)
        self.label_sat = np.asarray(self.label_sat, dtype=bool)
        if self.joint.ndim != 2:
            raise DataError("joint table must be |X| x |Y|")
        if self.model_sat.shape != self.joint.shape or self.label_sat.shape != self.joint.shape:
            raise DataError("relation tables must match the joint table's shape")
        if np.any(self.joint < 0) or abs(self.joint.sum() - 1.0) > SLACK:
            raise DataError("joint table must be non-negative and sum to 1")
        if self.inputs is None:
            self.inputs = [f"x{i}" for i in range(self.joint.shape[0])]
        if self.labels is None:
            self.labels = [f"y{j}" for j in range(self.joint.shape[1])]

    @property
    def n_inputs(self) -> int:
        return self.joint.shape[0]

    @property
    def n_labels(self) -> int:
        return self.joint.shape[1]

    def is_reliable(self) -> bool:
        """Every label with positive mass satisfies the knowledge."""
        return bool(np.all(self.label_sat | (self.joint == 0)))

    def is_complete(self) -> bool:
        """A knowledge-satisfying prediction is never wrong on a satisfying label."""
        for x in range(self.n_inputs):
            sat_labels = np.flatnonzero((self.joint[x] > 0) & self.label_sat[x])
            sat_preds = np.flatnonzero(self.model_sat[x])
            if any(k != y for y in sat_labels for k in sat_preds):
                return False
        return True

    def to_json(self) -> str:
        return json.dumps(
            {
                "inputs": self.inputs,
                "labels": self.labels,
                "joint": self.joint.tolist(),
                "model_sat": self.model_sat.astype(int).tolist(),
                "label_sat": self.label_sat.astype(int).tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FiniteWorld":
        d = json.loads(text)
        return cls(d["joint"], d["model_sat"], d["label_sat"], d.get("inputs"), d.get("labels"))


def _cond(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def risks_many(world: FiniteWorld, hyps: np.ndarray) -> np.ndarray:
    """Exact ``(target, unlearnable, unreliable, incomplete)`` for each row of
    ``hyps`` (H, |X|); returns (H, 4)."""
    hyps = np.asarray(hyps, dtype=np.intp)
    p = world.joint
    xs = np.arange(world.n_inputs)
    m = world.model_sat[xs, hyps]  # (H, X): prediction satisfies
    wrong = hyps[:, :, None] != np.arange(world.n_labels)[None, None, :]  # (H, X, Y)
    msat = m[:, :, None]
    lsat = world.label_sat[None]
    target = np.einsum("xy,hxy->h", p, wrong)
    p_m = np.einsum("xy,hxy->h", p, np.broadcast_to(msat, wrong.shape))
    p_m_notl = np.einsum("xy,hxy->h", p, msat & ~lsat)
    p_ml = np.einsum("xy,hxy->h", p, msat & lsat)
    p_ml_wrong = np.einsum("xy,hxy->h", p, msat & lsat & wrong)
    unlearnable = 1.0 - p_m
    unreliable = _cond(p_m_notl, p_m)
    incomplete = _cond(p_ml_wrong, p_ml)
    return np.clip(np.stack([target, unlearnable, unreliable, incomplete], axis=1), 0.0, 1.0)


def exact_risks(world: FiniteWorld, hypothesis) -> tuple[float, float, float, float]:
    """Exact ``(r_target, r_unlearnable, r_unreliable, r_incomplete)`` of one
    hypothesis (a label index per input)."""
    h = np.asarray(hypothesis, dtype=np.intp).reshape(1, -1)
    if h.shape[1] != world.n_inputs:
        raise DataError("hypothesis must assign a label to every input")
    return tuple(float(v) for v in risks_many(world, h)[0])


def bound_of(r_unlearnable, r_unreliable, r_incomplete):
    return 1.0 - (1.0 - r_unlearnable) * (1.0 - r_unreliable) * (1.0 - r_incomplete)


def sum_form(r_unlearnable, r_unreliable, r_incomplete):
    """The three-bucket sum that the product form rewrites."""
    return (
        r_unlearnable
        + (1.0 - r_unlearnable) * r_unreliable
        + (1.0 - r_unlearnable) * (1.0 - r_unreliable) * r_incomplete
    )


@dataclass
class BoundReport:
    hypotheses: int = 0
    violations: int = 0
    max_slack: float = float("-inf")
    min_slack: float = float("inf")
    reliable_complete_checked: int = 0
    reliable_complete_violations: int = 0
    complete_checked: int = 0
    complete_violations: int = 0

    @property
    def total_violations(self) -> int:
        return self.violations + self.reliable_complete_violations + self.complete_violations

    def merge(self, other: "BoundReport") -> "BoundReport":
        return BoundReport(
            self.hypotheses + other.hypotheses,
            self.violations + other.violations,
            max(self.max_slack, other.max_slack),
            min(self.min_slack, other.min_slack),
            self.reliable_complete_checked + other.reliable_complete_checked,
            self.reliable_complete_violations + other.reliable_complete_violations,
            self.complete_checked + other.complete_checked,
            self.complete_violations + other.complete_violations,
        )

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["total_violations"] = self.total_violations
        return d


def all_hypotheses(n_inputs: int, n_labels: int) -> np.ndarray:
    count = n_labels**n_inputs
    if count > MAX_HYPOTHESES:
        raise InvariantViolation(f"{count} hypotheses exceeds the enumeration limit {MAX_HYPOTHESES}")
    return np.array(list(itertools.product(range(n_labels), repeat=n_inputs)), dtype=np.intp).reshape(count, n_inputs)


def verify_bound(world: FiniteWorld, hypotheses=None, chunk: int = 65536) -> BoundReport:
    """Check ``r_target <= 1 - prod(1 - rate)`` for every hypothesis, plus the
    two-term bound on complete worlds and ``r_target <= r_unlearnable`` on
    reliable and complete worlds.

    Slack is ``bound - r_target``; a violation is slack below ``-1e-12``.
    """
    hyps = all_hypotheses(world.n_inputs, world.n_labels) if hypotheses is None else np.asarray(hypotheses)
    reliable, complete = world.is_reliable(), world.is_complete()
    report = BoundReport()
    for start in range(0, len(hyps), chunk):
        r = risks_many(world, hyps[start:start + chunk])
        target, unl, unr, inc = r.T
        slack = bound_of(unl, unr, inc) - target
        slack = np.where(np.abs(slack) < SLACK, 0.0, slack)  # rounding noise on tight cases
        part = BoundReport(
            hypotheses=len(r),
            violations=int(np.sum(slack < -SLACK)),
            max_slack=float(slack.max()),
            min_slack=float(slack.min()),
        )
        if complete:
            two_term = unl + (1.0 - unl) * unr
            part.complete_checked = len(r)
            part.complete_violations = int(np.sum(target > two_term + SLACK))
            if reliable:
                part.reliable_complete_checked = len(r)
                part.reliable_complete_violations = int(np.sum(target > unl + SLACK))
        report = report.merge(part)
    return report


def random_world(rng: np.random.Generator, n_inputs: int, n_labels: int, kind: str = "generic", sparsity: float = 0.3) -> FiniteWorld:
    """Random world of a given structural kind.

    ``generic``: random joint and relations. ``reliable_complete``: every
    input has one true label, only that label satisfies as a prediction, every
    label satisfies. ``complete``: stochastic labels, only the input's
    preferred label satisfies (as label and as prediction).
    """
    joint = rng.random((n_inputs, n_labels))
    joint[rng.random(joint.shape) < sparsity] = 0.0
    if kind == "generic":
        model_sat = rng.random(joint.shape) < 0.6
        label_sat = rng.random(joint.shape) < 0.7
    else:
        best = rng.integers(0, n_labels, size=n_inputs)
        onehot = np.zeros(joint.shape, dtype=bool)
        onehot[np.arange(n_inputs), best] = True
        if kind == "reliable_complete":
            joint = np.where(onehot, rng.random(n_inputs)[:, None] + 0.05, 0.0)
            label_sat = np.ones(joint.shape, dtype=bool)
        elif kind == "complete":
            label_sat = onehot
        else:
            raise ValueError(f"unknown world kind {kind!r}")
        model_sat = onehot & (rng.random(n_inputs) < 0.8)[:, None]
    if joint.sum() == 0:
        joint[0, 0] = 1.0
    return FiniteWorld(joint / joint.sum(), model_sat, label_sat)


@dataclass
class PosteriorFactors:
    """Chain factors for one ``(x, y)``; ``product`` is their product and
    ``direct`` is p(y | x) from the table."""

    learnability: float  # p[(x,K) sat | x]
    reliability: float  # p[(y,K) sat | (x,K) sat]
    completeness: float  # p[y | (y,K) sat]
    product: float
    direct: float

    @property
    def gap(self) -> float:
        return self.product - self.direct


def input_sat(world: FiniteWorld) -> np.ndarray:
    """An input is compatible with the knowledge when some output at it satisfies."""
    return world.model_sat.any(axis=1)


def decompose_posterior(world: FiniteWorld, x: int) -> list[PosteriorFactors]:
    """Factor p(y|x) through the knowledge events, one entry per label.

    The chain is not an identity in general; both sides are returned.
    """
    p = world.joint
    px = p[x].sum()
    if px <= 0:
        raise DataError(f"input {x} has zero probability")
    xs = input_sat(world)
    learn = float(xs[x])
    p_xsat = p[xs].sum()
    p_lsat_and_xsat = (p * world.label_sat)[xs].sum()
    reliab = float(p_lsat_and_xsat / p_xsat) if p_xsat > 0 else 0.0
    p_lsat = (p * world.label_sat).sum()
    out = []
    for y in range(world.n_labels):
        mass_y_sat = (p[:, y] * world.label_sat[:, y]).sum()
        compl = float(mass_y_sat / p_lsat) if p_lsat > 0 else 0.0
        out.append(PosteriorFactors(learn, reliab, compl, learn * reliab * compl, float(p[x, y] / px)))
    return out


def sweep(n_worlds: int, max_inputs: int, max_labels: int, seed: int, kind: str = "generic") -> BoundReport:
    """Exhaustive bound check over ``n_worlds`` random worlds of random size."""
    from pretextprobe.numerics import make_rng

    report = BoundReport()
    for i in range(n_worlds):
        rng = make_rng(seed, "world", kind, i)
        nx = int(rng.integers(1, max_inputs + 1))
        ny = int(rng.integers(2, max_labels + 1)) if max_labels >= 2 else 1
        report = report.merge(verify_bound(random_world(rng, nx, ny, kind)))
    return report
