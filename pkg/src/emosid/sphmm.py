"""Suprasegmental HMMs: an acoustic 9-state chain paired with a 3-state
prosodic chain, scored as a convex combination of the two log-likelihoods.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatVersionError, InsufficientData, InvalidAlpha
from .hmm import FORMAT_VERSION, GmmHmm, TrainingConfig, baum_welch, init_model, log_forward_batch

ACOUSTIC_STATES = 9
PROSODIC_STATES = 3
# acoustic states {0,1,2} -> 0, {3,4,5} -> 1, {6,7,8} -> 2
GROUPING = tuple(s // 3 for s in range(ACOUSTIC_STATES))


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidAlpha(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


@dataclass(eq=False)
class Sphmm:
    acoustic: GmmHmm
    suprasegmental: GmmHmm
    grouping: tuple[int, ...] = GROUPING

    def __post_init__(self):
        self.grouping = tuple(int(g) for g in self.grouping)
        n_sup = self.suprasegmental.n_states
        if len(self.grouping) != self.acoustic.n_states:
            raise ValueError("grouping must cover every acoustic state")
        if sorted(set(self.grouping)) != list(range(n_sup)):
            raise ValueError("grouping must map onto every suprasegmental state")
        if self.acoustic.n_states % n_sup or any(
                self.grouping.count(g) != self.acoustic.n_states // n_sup for g in range(n_sup)):
            raise ValueError("grouping must be many-to-one with equal group sizes")

    def to_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {f"{prefix}sphmm_format_version": np.array(FORMAT_VERSION),
               f"{prefix}grouping": np.array(self.grouping)}
        out.update(self.acoustic.to_arrays(prefix + "acoustic."))
        out.update(self.suprasegmental.to_arrays(prefix + "suprasegmental."))
        return out

    @classmethod
    def from_arrays(cls, arrays, prefix: str = "") -> "Sphmm":
        version = int(arrays[f"{prefix}sphmm_format_version"])
        if version != FORMAT_VERSION:
            raise FormatVersionError(f"sphmm format {version}, expected {FORMAT_VERSION}")
        return cls(GmmHmm.from_arrays(arrays, prefix + "acoustic."),
                   GmmHmm.from_arrays(arrays, prefix + "suprasegmental."),
                   tuple(np.asarray(arrays[f"{prefix}grouping"]).tolist()))


def train_sphmm(utterances: Sequence[tuple[np.ndarray, np.ndarray]],
                acoustic_config: TrainingConfig = TrainingConfig(),
                prosodic_config: TrainingConfig | None = None) -> Sphmm:
    """Train the acoustic chain, then the prosodic chain on the same utterances."""
    if len(utterances) == 0:
        raise InsufficientData("no training utterances")
    acoustic_obs = [np.asarray(a) for a, _ in utterances]
    prosodic_obs = [np.asarray(p) for _, p in utterances]
    prosodic_config = prosodic_config or acoustic_config
    acoustic, _ = baum_welch(init_model(acoustic_obs, ACOUSTIC_STATES, acoustic_config),
                             acoustic_obs, acoustic_config)
    prosodic, _ = baum_welch(init_model(prosodic_obs, PROSODIC_STATES, prosodic_config),
                             prosodic_obs, prosodic_config)
    return Sphmm(acoustic, prosodic)


def fuse(acoustic_ll: np.ndarray | float, prosodic_ll: np.ndarray | float, alpha: float):
    """(1 - alpha) * acoustic + alpha * prosodic, with exact endpoints."""
    alpha = check_alpha(alpha)
    if alpha == 0.0:
        return acoustic_ll
    if alpha == 1.0:
        return prosodic_ll
    return (1.0 - alpha) * acoustic_ll + alpha * prosodic_ll


def sub_scores(model: Sphmm, acoustic_obs: np.ndarray, pros_obs: np.ndarray,
               normalize: bool = True) -> tuple[float, float]:
    """Acoustic and prosodic log-likelihoods, optionally divided by sequence length."""
    a = float(log_forward_batch(model.acoustic, [acoustic_obs])[0])
    s = float(log_forward_batch(model.suprasegmental, [pros_obs])[0])
    if normalize:
        a /= len(acoustic_obs)
        s /= len(pros_obs)
    return a, s


def combined_log_prob(model: Sphmm, acoustic_obs: np.ndarray, pros_obs: np.ndarray,
                      alpha: float, normalize: bool = True) -> float:
    alpha = check_alpha(alpha)
    return float(fuse(*sub_scores(model, acoustic_obs, pros_obs, normalize), alpha))
