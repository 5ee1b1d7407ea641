"""Per-step logits transforms: strengthening, filtering, and the sampled
distribution.

Strengthening contrasts the original-prompt branch against the MASK-prompt
branch and scales the difference, amplifying tokens whose evidence comes
from the masked (question-aligned) path. Filtering then removes every token
the path automaton forbids at the current state, so no probability mass can
leave the legal language. All transforms are stateless pure functions, safe
to evaluate for all beam hypotheses concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .automaton import TokenAutomaton
from .errors import DeadEndError, LogitsShapeError, LogitsValueError

# Disallowed entries use the most-negative finite float64 rather than -inf,
# which keeps max-subtraction softmax free of NaNs while still underflowing
# to exactly zero probability.
NEG_INF = float(np.finfo(np.float64).min)

# Floor for probability-space combination: affine mixing with omega > 1 can
# drive combined probabilities negative, and their log must stay finite.
_PROB_FLOOR = 1e-300

LOGIT_SPACE = "logit"
PROBABILITY_SPACE = "probability"


@dataclass(frozen=True)
class PipelineConfig:
    """Strengthening coefficient and the space the combination runs in."""

    omega: float = 2.0
    space: str = LOGIT_SPACE

    def __post_init__(self) -> None:
        if not np.isfinite(self.omega):
            raise ValueError(f"omega must be finite, got {self.omega}")
        if self.space not in (LOGIT_SPACE, PROBABILITY_SPACE):
            raise ValueError(f"space must be 'logit' or 'probability', got {self.space!r}")


def _as_logits(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise LogitsShapeError(f"{name} must be one-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise LogitsValueError(f"{name} contains non-finite entries")
    return array


def softmax(values: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; sentinel entries get exactly zero mass."""
    shifted = values - np.max(values)
    exp = np.exp(shifted)
    return exp / np.sum(exp)


def strengthen(main, mask, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Combine the two branches: omega * main + (1 - omega) * mask.

    In logit space the combination applies to the raw vectors; in
    probability space both branches are softmaxed first, mixed with the same
    coefficients, floored, and returned as log-probabilities. omega=1 and
    omega=0 return the main/mask branch unchanged in either space.
    """
    main_arr = _as_logits(main, "main logits")
    mask_arr = _as_logits(mask, "mask logits")
    if main_arr.shape != mask_arr.shape:
        raise LogitsShapeError(
            f"branch length mismatch: {main_arr.shape[0]} vs {mask_arr.shape[0]}"
        )
    # identity laws hold exactly, independent of float rounding
    if cfg.omega == 1.0:
        return main_arr.copy()
    if cfg.omega == 0.0:
        return mask_arr.copy()
    if cfg.space == LOGIT_SPACE:
        return cfg.omega * main_arr + (1.0 - cfg.omega) * mask_arr
    combined = cfg.omega * softmax(main_arr) + (1.0 - cfg.omega) * softmax(mask_arr)
    return np.log(np.maximum(combined, _PROB_FLOOR))


def filter_logits(z, automaton: TokenAutomaton, state: int) -> np.ndarray:
    """Keep entries the automaton allows at `state`; sentinel out the rest.

    Raises DeadEndError when the state admits nothing, signalling that the
    hypothesis must be pruned rather than the decode aborted.
    """
    z_arr = _as_logits(z, "strengthened logits")
    allowed = automaton.mask_vector(state)
    if z_arr.shape[0] != allowed.shape[0]:
        raise LogitsShapeError(
            f"logits length {z_arr.shape[0]} != vocabulary size {allowed.shape[0]}"
        )
    if not allowed.any():
        raise DeadEndError(state)
    return np.where(allowed, z_arr, NEG_INF)


def step_distribution(
    main,
    mask,
    cfg: PipelineConfig,
    automaton: TokenAutomaton,
    state: int,
) -> np.ndarray:
    """softmax(filter(strengthen(main, mask))): the distribution sampled at
    one step. Its support is exactly the automaton's allowed set."""
    return softmax(filter_logits(strengthen(main, mask, cfg), automaton, state))
