"""Group-relative advantage computation with a transport-based refinement.

For a group of candidate responses to the same instance, the pipeline:

1. scores each response with a weighted outcome reward (format validity,
   class match, affinity-based localization),
2. standardizes rewards within the group (population statistics with an
   epsilon guard) into the main advantage,
3. measures each response's transport distance to the expert trace over
   token embeddings, maps it through exp(-W/tau) and standardizes the
   result into the reasoning advantage,
4. removes the reasoning advantage's component along the main advantage,
5. adds the remaining orthogonal part, scaled by alpha, on top of the
   main advantage.

The projection guarantees the refinement never changes the component
along the main update direction. A clipped surrogate objective over
externally supplied policy statistics completes the pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import AnomalyClass, LabeledInstance
from .embedding import TokenEmbeddingSequence
from .errors import ConfigError, DataError, ShapeError
from .metrics import affinity_scores, default_window, parse_response, tag_blocks
from .transport import TransportResult, cost_matrix, sinkhorn


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the format / classification / localization terms."""

    fmt: float = 0.1
    cls: float = 0.2
    loc: float = 0.7

    def __post_init__(self) -> None:
        if min(self.fmt, self.cls, self.loc) < 0:
            raise ConfigError("reward weights must be non-negative")
        if self.fmt + self.cls + self.loc <= 0:
            raise ConfigError("at least one reward weight must be positive")


@dataclass(frozen=True)
class RewardBreakdown:
    r_fmt: int
    r_cls: float
    r_loc: float
    total: float


def format_reward(text: str) -> int:
    """1 iff the response carries exactly one valid think/answer/class block.

    The answer block must parse as a (possibly empty) JSON list of
    [start, end] integer pairs and the class must come from the closed
    vocabulary. Anything malformed scores 0.
    """
    from .metrics import _parse_answer  # shared strict answer grammar

    thinks = tag_blocks(text, "think")
    answers = tag_blocks(text, "answer")
    classes = tag_blocks(text, "class")
    if len(thinks) != 1 or len(answers) != 1 or len(classes) != 1:
        return 0
    if _parse_answer(answers[0]) is None:
        return 0
    try:
        AnomalyClass.parse(classes[0])
    except DataError:
        return 0
    return 1


def class_reward(pred: Optional[str | AnomalyClass], gt: str | AnomalyClass) -> int:
    """1 iff the classes match after case/whitespace normalization."""
    gt_cls = gt if isinstance(gt, AnomalyClass) else AnomalyClass.parse(gt)
    if pred is None:
        return 0
    try:
        pred_cls = pred if isinstance(pred, AnomalyClass) else AnomalyClass.parse(pred)
    except DataError:
        return 0
    return int(pred_cls is gt_cls)


def location_reward(
    pred_intervals: Optional[Sequence[tuple[int, int]]],
    gt_intervals: Sequence[tuple[int, int]],
    length: int,
    window: Optional[int] = None,
) -> float:
    """Affinity F1 of the predicted intervals; unparseable answers score 0."""
    if pred_intervals is None:
        return 0.0
    w = window if window is not None else default_window(length)
    try:
        return affinity_scores(list(pred_intervals), list(gt_intervals), length, w).f1
    except DataError:
        return 0.0


def total_reward(
    r_fmt: float, r_cls: float, r_loc: float, weights: RewardWeights
) -> float:
    return weights.fmt * r_fmt + weights.cls * r_cls + weights.loc * r_loc


def response_reward(
    text: str,
    gt: LabeledInstance,
    weights: RewardWeights = RewardWeights(),
    window: Optional[int] = None,
) -> RewardBreakdown:
    """Score one response against the ground-truth instance."""
    parsed = parse_response(text)
    r_fmt = format_reward(text)
    r_cls = class_reward(parsed.anomaly_class, gt.anomaly_class)
    r_loc = location_reward(
        parsed.intervals,
        [(iv.start, iv.end) for iv in gt.intervals],
        gt.length,
        window,
    )
    return RewardBreakdown(r_fmt, float(r_cls), r_loc, total_reward(r_fmt, r_cls, r_loc, weights))


def group_normalize(values: Sequence[float], eps: float = 1e-8) -> np.ndarray:
    """Standardize within the group: (v - mean) / (population std + eps)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ConfigError(f"group normalization needs >= 2 values, got shape {arr.shape}")
    return (arr - arr.mean()) / (arr.std() + eps)


def reasoning_reward(distance: float, tau: float = 1.0) -> float:
    """exp(-W/tau): 1 at zero transport cost, strictly decreasing in W."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    return math.exp(-distance / tau)


def orthogonalize(
    a_tsr: Sequence[float], a_main: Sequence[float], eps: float = 1e-8
) -> np.ndarray:
    """Remove the component of a_tsr along a_main.

    Computes a_tsr - (<a_tsr, a_main> / (||a_main||^2 + eps)) a_main;
    with eps > 0 a zero main vector passes a_tsr through unchanged.
    """
    x = np.asarray(a_tsr, dtype=float)
    y = np.asarray(a_main, dtype=float)
    if x.shape != y.shape:
        raise ShapeError(f"advantage vectors differ in shape: {x.shape} vs {y.shape}")
    coeff = float(np.dot(x, y)) / (float(np.dot(y, y)) + eps)
    return x - coeff * y


def final_advantage(
    a_main: Sequence[float], a_perp: Sequence[float], alpha: float = 0.3
) -> np.ndarray:
    """Main advantage plus alpha times the orthogonal refinement."""
    x = np.asarray(a_main, dtype=float)
    y = np.asarray(a_perp, dtype=float)
    if x.shape != y.shape:
        raise ShapeError(f"advantage vectors differ in shape: {x.shape} vs {y.shape}")
    return x + alpha * y


def token_kl(
    logp_policy: Sequence[float], logp_ref: Sequence[float]
) -> np.ndarray:
    """Per-token KL estimate exp(d) - d - 1 with d = logp_ref - logp_policy.

    One admissible non-negative estimator of KL(policy || reference)
    from paired log-probabilities.
    """
    policy = np.asarray(logp_policy, dtype=float)
    ref = np.asarray(logp_ref, dtype=float)
    if policy.shape != ref.shape:
        raise ShapeError("log-probability arrays differ in shape")
    delta = ref - policy
    return np.exp(delta) - delta - 1.0


def clipped_objective(
    ratios: Sequence[Sequence[float]],
    advantages: Sequence[float],
    eps_clip: float = 0.2,
    kl: Optional[Sequence[Sequence[float]]] = None,
    beta: float = 0.001,
) -> float:
    """Token-level clipped surrogate minus a KL penalty; maximize it.

    Averages min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) per token,
    then per response, then over the group; the KL term is the matching
    per-response token mean, averaged over the group and scaled by beta.
    Callers minimizing a loss should negate the result.
    """
    if not 0 < eps_clip < 1:
        raise ConfigError(f"clip range must lie in (0, 1), got {eps_clip}")
    adv = np.asarray(advantages, dtype=float)
    if adv.ndim != 1 or len(ratios) != adv.size:
        raise ShapeError(
            f"{len(ratios)} ratio arrays for {adv.size} advantages"
        )
    if kl is not None and len(kl) != adv.size:
        raise ShapeError(f"{len(kl)} kl arrays for {adv.size} advantages")
    per_response = []
    kl_means = []
    for i, raw in enumerate(ratios):
        rho = np.asarray(raw, dtype=float)
        if rho.ndim != 1 or rho.size == 0:
            raise ShapeError(f"ratio array {i} must be a non-empty vector")
        clipped = np.clip(rho, 1.0 - eps_clip, 1.0 + eps_clip)
        term = np.minimum(rho * adv[i], clipped * adv[i])
        per_response.append(float(term.mean()))
        if kl is not None:
            k = np.asarray(kl[i], dtype=float)
            if k.shape != rho.shape:
                raise ShapeError(f"kl array {i} has shape {k.shape}, expected {rho.shape}")
            kl_means.append(float(k.mean()))
    objective = float(np.mean(per_response))
    if kl is not None:
        objective -= beta * float(np.mean(kl_means))
    return objective


@dataclass(frozen=True)
class AdvantageConfig:
    """Knobs of the advantage pipeline with their documented defaults."""

    weights: RewardWeights = RewardWeights()
    alpha: float = 0.3
    tau: float = 1.0
    eps: float = 1e-8
    sinkhorn_reg: float = 0.05
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 1000
    location_window: Optional[int] = None

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.eps < 0:
            raise ConfigError(f"eps must be >= 0, got {self.eps}")


@dataclass(frozen=True)
class GroupAdvantages:
    """All per-response vectors produced by the advantage pipeline."""

    group_size: int
    breakdowns: tuple[RewardBreakdown, ...]
    rewards: np.ndarray
    reasoning_rewards: np.ndarray
    a_main: np.ndarray
    a_tsr: np.ndarray
    a_perp: np.ndarray
    a_final: np.ndarray
    mu_r: float
    sigma_r: float
    mu_tsr: float
    sigma_tsr: float
    eps: float
    alpha: float
    transports: tuple[TransportResult, ...]


def compute_group_advantages(
    responses: Sequence[str],
    gt: LabeledInstance,
    expert: TokenEmbeddingSequence,
    embeddings: Sequence[TokenEmbeddingSequence],
    config: AdvantageConfig = AdvantageConfig(),
) -> GroupAdvantages:
    """Run the full reward -> normalize -> transport -> project chain."""
    if len(responses) < 2:
        raise ConfigError(f"group size must be >= 2, got {len(responses)}")
    if len(embeddings) != len(responses):
        raise ShapeError(
            f"{len(embeddings)} embeddings for {len(responses)} responses"
        )
    breakdowns = tuple(
        response_reward(text, gt, config.weights, config.location_window)
        for text in responses
    )
    rewards = np.asarray([b.total for b in breakdowns])
    a_main = group_normalize(rewards, config.eps)

    transports = []
    tsr = []
    for emb in embeddings:
        costs = cost_matrix(emb.vectors, expert.vectors)
        result = sinkhorn(
            costs,
            emb.weights,
            expert.weights,
            reg=config.sinkhorn_reg,
            max_iter=config.sinkhorn_max_iter,
            tol=config.sinkhorn_tol,
        )
        transports.append(result)
        tsr.append(reasoning_reward(result.distance, config.tau))
    tsr_arr = np.asarray(tsr)
    a_tsr = group_normalize(tsr_arr, config.eps)
    a_perp = orthogonalize(a_tsr, a_main, config.eps)
    a_final = final_advantage(a_main, a_perp, config.alpha)
    return GroupAdvantages(
        group_size=len(responses),
        breakdowns=breakdowns,
        rewards=rewards,
        reasoning_rewards=tsr_arr,
        a_main=a_main,
        a_tsr=a_tsr,
        a_perp=a_perp,
        a_final=a_final,
        mu_r=float(rewards.mean()),
        sigma_r=float(rewards.std()),
        mu_tsr=float(tsr_arr.mean()),
        sigma_tsr=float(tsr_arr.std()),
        eps=config.eps,
        alpha=config.alpha,
        transports=tuple(transports),
    )


def group_to_record(ident: str, group: GroupAdvantages) -> dict:
    """Serialize one group's advantage vectors to the report shape."""
    return {
        "id": ident,
        "rewards": [float(r) for r in group.rewards],
        "reward_breakdown": [
            {"fmt": b.r_fmt, "cls": b.r_cls, "loc": b.r_loc, "total": b.total}
            for b in group.breakdowns
        ],
        "reasoning_rewards": [float(r) for r in group.reasoning_rewards],
        "a_main": [float(x) for x in group.a_main],
        "a_tsr": [float(x) for x in group.a_tsr],
        "a_perp": [float(x) for x in group.a_perp],
        "a_final": [float(x) for x in group.a_final],
        "ot": [
            {
                "w": t.distance,
                "residual": t.marginal_residual,
                "iters": t.iterations,
                "converged": t.converged,
            }
            for t in group.transports
        ],
    }
