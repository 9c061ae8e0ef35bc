"""Ergodic HMMs with diagonal-covariance Gaussian-mixture emissions.

All recursions run in the log domain. Sequences are processed in padded
batches so a whole training set costs one Python loop over time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from .errors import (DimensionMismatch, EmptyObservation, FormatVersionError,
                     InsufficientData, NumericalFailure)

FORMAT_VERSION = 1
TRANSITION_FLOOR = 1e-6
WEIGHT_FLOOR = 1e-5
# keeps the floor positive on features that are constant in the training data
ABSOLUTE_VARIANCE_FLOOR = 1e-8
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TrainingConfig:
    max_iterations: int = 50
    rel_ll_tolerance: float = 1e-5
    n_mixtures: int = 3
    variance_floor_scale: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.n_mixtures < 1:
            raise ValueError("max_iterations and n_mixtures must be positive")
        if self.rel_ll_tolerance <= 0 or self.variance_floor_scale <= 0:
            raise ValueError("tolerance and variance floor scale must be positive")


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        comp = _component_logs(x, np.log(self.weights)[None], self.means[None], self.variances[None])
        return _logsumexp(comp[:, 0, :], axis=-1)


@dataclass(eq=False)
class GmmHmm:
    """Fully connected HMM; emission arrays are stacked per state.

    weights (S, K), means (S, K, D), variances (S, K, D).
    """

    initial_probs: np.ndarray
    transitions: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    variance_floor: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("initial_probs", "transitions", "weights", "means", "variances", "variance_floor"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            setattr(self, name, arr)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_mixtures(self) -> int:
        return self.weights.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.means.shape[2]

    @property
    def emissions(self) -> list[GaussianMixture]:
        return [GaussianMixture(self.weights[s], self.means[s], self.variances[s])
                for s in range(self.n_states)]

    def validate(self) -> None:
        s, k, d = self.means.shape
        if self.transitions.shape != (s, s) or self.initial_probs.shape != (s,):
            raise ValueError("transition / initial shapes disagree with the state count")
        if self.weights.shape != (s, k) or self.variances.shape != (s, k, d):
            raise ValueError("emission parameter shapes disagree")
        if self.variance_floor.shape != (d,):
            raise ValueError("variance floor must have one entry per dimension")
        if not np.all(self.transitions > 0.0):
            raise ValueError("ergodic model needs strictly positive transitions")
        if np.any(np.abs(self.transitions.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("transition rows must sum to 1")
        if np.any(self.initial_probs < 0.0) or abs(self.initial_probs.sum() - 1.0) > 1e-9:
            raise ValueError("initial probabilities must form a distribution")
        if np.any(self.weights <= 0.0) or np.any(np.abs(self.weights.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(self.variances < self.variance_floor * (1.0 - 1e-12)):
            raise ValueError("variances must respect the variance floor")
        if not all(np.all(np.isfinite(a)) for a in (self.means, self.variances)):
            raise ValueError("non-finite emission parameters")

    # -- serialization -------------------------------------------------

    def to_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            f"{prefix}format_version": np.array(FORMAT_VERSION),
            f"{prefix}initial_probs": self.initial_probs,
            f"{prefix}transitions": self.transitions,
            f"{prefix}weights": self.weights,
            f"{prefix}means": self.means,
            f"{prefix}variances": self.variances,
            f"{prefix}variance_floor": self.variance_floor,
        }

    @classmethod
    def from_arrays(cls, arrays, prefix: str = "") -> "GmmHmm":
        version = int(arrays[f"{prefix}format_version"])
        if version != FORMAT_VERSION:
            raise FormatVersionError(f"model format {version}, expected {FORMAT_VERSION}")
        return cls(**{name: np.asarray(arrays[prefix + name]) for name in
                      ("initial_probs", "transitions", "weights", "means", "variances", "variance_floor")})


def save_model(model: GmmHmm, path) -> None:
    np.savez(path, **model.to_arrays())


def load_model(path) -> GmmHmm:
    with np.load(path) as data:
        return GmmHmm.from_arrays(data)


# -- numerics ----------------------------------------------------------


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _component_logs(x, log_weights, means, variances):
    """log w_sk + log N(x_t; mu_sk, var_sk) for every frame, shape (T, S, K)."""
    s, k, d = means.shape
    inv = 1.0 / variances.reshape(s * k, d)
    mu = means.reshape(s * k, d)
    quad = (x * x) @ inv.T - 2.0 * x @ (mu * inv).T + np.sum(mu * mu * inv, axis=1)
    const = -0.5 * (d * LOG_2PI + np.sum(np.log(variances.reshape(s * k, d)), axis=1))
    return (const - 0.5 * quad).reshape(-1, s, k) + log_weights[None]


def _check_obs(model: GmmHmm, obs) -> np.ndarray:
    x = np.asarray(obs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :] if x.size else x.reshape(0, model.feature_dim)
    if x.shape[0] == 0:
        raise EmptyObservation("observation sequence is empty")
    if x.shape[1] != model.feature_dim:
        raise DimensionMismatch(f"observations have dim {x.shape[1]}, model expects {model.feature_dim}")
    return x


def component_log_densities(model: GmmHmm, obs) -> np.ndarray:
    x = _check_obs(model, obs)
    with np.errstate(divide="ignore"):
        return _component_logs(x, np.log(model.weights), model.means, model.variances)


def log_emission(model: GmmHmm, obs) -> np.ndarray:
    """Per-frame, per-state emission log-density, shape (T, S)."""
    return _logsumexp(component_log_densities(model, obs), axis=-1)


class _Batch:
    """Padded view of a list of sequences sharing one model."""

    def __init__(self, model: GmmHmm, obs_set: Sequence):
        seqs = [_check_obs(model, o) for o in obs_set]
        if not seqs:
            raise EmptyObservation("no observation sequences")
        self.lengths = np.array([len(x) for x in seqs])
        self.n = len(seqs)
        self.t_max = int(self.lengths.max())
        self.frames = np.concatenate(seqs)
        self.seq_index = np.repeat(np.arange(self.n), self.lengths)
        self.time_index = np.concatenate([np.arange(t) for t in self.lengths])
        self.mask = np.arange(self.t_max)[None, :] < self.lengths[:, None]

    def pad(self, flat: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n, self.t_max) + flat.shape[1:])
        out[self.seq_index, self.time_index] = flat
        return out


def _forward(log_b: np.ndarray, lengths: np.ndarray, log_pi: np.ndarray, trans: np.ndarray):
    """Padded forward pass. Returns log-alpha (N, T, S) and per-sequence log-likelihoods."""
    n, t_max, _ = log_b.shape
    la = np.empty_like(log_b)
    la[:, 0] = log_pi + log_b[:, 0]
    for t in range(1, t_max):
        prev = la[:, t - 1]
        m = prev.max(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            la[:, t] = np.log(np.exp(prev - m) @ trans) + m + log_b[:, t]
    last = la[np.arange(n), lengths - 1]
    return la, _logsumexp(last, axis=1)


def _backward(log_b: np.ndarray, lengths: np.ndarray, trans: np.ndarray) -> np.ndarray:
    n, t_max, s = log_b.shape
    lb = np.zeros_like(log_b)
    for t in range(t_max - 2, -1, -1):
        nxt = log_b[:, t + 1] + lb[:, t + 1]
        m = nxt.max(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            step = np.log(np.exp(nxt - m) @ trans.T) + m
        lb[:, t] = np.where((t < lengths - 1)[:, None], step, 0.0)
    return lb


def log_forward(model: GmmHmm, obs) -> float:
    """log P(obs | model), summed over all state paths."""
    return float(log_forward_batch(model, [obs])[0])


def log_forward_batch(model: GmmHmm, obs_set: Sequence) -> np.ndarray:
    batch = _Batch(model, obs_set)
    log_b = batch.pad(log_emission(model, batch.frames))
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial_probs)
    _, ll = _forward(log_b, batch.lengths, log_pi, model.transitions)
    if not np.all(np.isfinite(ll)):
        raise NumericalFailure("forward likelihood is not finite")
    return ll


def viterbi(model: GmmHmm, obs) -> tuple[np.ndarray, float]:
    log_b = log_emission(model, obs)
    t_max, s = log_b.shape
    with np.errstate(divide="ignore"):
        log_a = np.log(model.transitions)
        delta = np.log(model.initial_probs) + log_b[0]
    back = np.zeros((t_max, s), dtype=np.int64)
    for t in range(1, t_max):
        cand = delta[:, None] + log_a
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(s)] + log_b[t]
    path = np.empty(t_max, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(t_max - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def sample_sequence(model: GmmHmm, length: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw (states, observations) from the model's generative process."""
    states = np.empty(length, dtype=np.int64)
    obs = np.empty((length, model.feature_dim))
    s = rng.choice(model.n_states, p=model.initial_probs)
    for t in range(length):
        if t:
            s = rng.choice(model.n_states, p=model.transitions[s])
        k = rng.choice(model.n_mixtures, p=model.weights[s])
        states[t] = s
        obs[t] = rng.normal(model.means[s, k], np.sqrt(model.variances[s, k]))
    return states, obs


# -- training ----------------------------------------------------------


def project_to_floored_simplex(counts: np.ndarray, floor: float) -> np.ndarray:
    """Maximize sum c_j log p_j over the simplex subject to p_j >= floor.

    The maximizer is p_j = max(floor, c_j / lam) with lam fixing the sum;
    found by moving entries onto the floor until none remains below it.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
    out = np.empty_like(counts)
    for i, c in enumerate(counts):
        n = c.size
        if floor * n >= 1.0:
            raise ValueError("floor too large for the simplex dimension")
        if c.sum() <= 0.0:
            out[i] = 1.0 / n
            continue
        # rescale so denormal occupancy counts keep full precision
        c = c / c.max()
        pinned = np.zeros(n, dtype=bool)
        while True:
            free = ~pinned
            p = np.full(n, floor)
            p[free] = c[free] / c[free].sum() * (1.0 - floor * pinned.sum())
            newly = free & (p < floor)
            if not newly.any():
                break
            pinned |= newly
        out[i] = p
    return out


def _pooled(obs_set: Sequence) -> np.ndarray:
    seqs = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in obs_set]
    if not seqs or all(x.shape[0] == 0 for x in seqs):
        raise InsufficientData("no training frames")
    dims = {x.shape[1] for x in seqs if x.shape[0]}
    if len(dims) != 1:
        raise DimensionMismatch("training sequences disagree on feature dimension")
    return np.concatenate([x for x in seqs if x.shape[0]])


def _kmeans(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    if k == 1 or x.shape[0] <= k:
        return np.zeros(x.shape[0], dtype=np.int64) if k == 1 else np.arange(x.shape[0]) % k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(x, k, minit="++", missing="warn", rng=rng)
    return labels


def init_model(obs_set: Sequence, n_states: int, config: TrainingConfig = TrainingConfig()) -> GmmHmm:
    """Seeded k-means initialization: states first, then mixtures within each state."""
    x = _pooled(obs_set)
    k = config.n_mixtures
    if x.shape[0] < n_states * k:
        raise InsufficientData(f"{x.shape[0]} frames < {n_states} states x {k} mixtures")
    rng = np.random.default_rng(config.rng_seed)
    global_var = x.var(axis=0)
    floor = np.maximum(config.variance_floor_scale * global_var, ABSOLUTE_VARIANCE_FLOOR)

    means = np.empty((n_states, k, x.shape[1]))
    variances = np.empty_like(means)
    weights = np.empty((n_states, k))
    state_labels = _kmeans(x, n_states, rng)
    for s in range(n_states):
        members = x[state_labels == s]
        if members.shape[0] == 0:
            members = x
        comp_labels = _kmeans(members, k, rng)
        for j in range(k):
            pts = members[comp_labels == j]
            if pts.shape[0] == 0:
                pts = members
            means[s, j] = pts.mean(axis=0)
            variances[s, j] = np.maximum(pts.var(axis=0) if pts.shape[0] > 1 else global_var, floor)
            weights[s, j] = pts.shape[0]
    weights = project_to_floored_simplex(weights, WEIGHT_FLOOR)

    trans = 1.0 / n_states + rng.uniform(0.0, 0.01, size=(n_states, n_states))
    trans /= trans.sum(axis=1, keepdims=True)
    return GmmHmm(np.full(n_states, 1.0 / n_states), trans, weights, means, variances, floor)


@dataclass
class _Stats:
    log_likelihood: float
    initial: np.ndarray
    transitions: np.ndarray
    occupancy: np.ndarray  # (S, K)
    first: np.ndarray  # (S, K, D)
    second: np.ndarray  # (S, K, D)


def _e_step(model: GmmHmm, batch: _Batch) -> _Stats:
    comp = _component_logs(batch.frames, np.log(model.weights), model.means, model.variances)
    log_b_flat = _logsumexp(comp, axis=-1)
    log_b = batch.pad(log_b_flat)
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial_probs)
    la, ll = _forward(log_b, batch.lengths, log_pi, model.transitions)
    if not np.all(np.isfinite(ll)):
        raise NumericalFailure("training likelihood is not finite")
    lb = _backward(log_b, batch.lengths, model.transitions)

    post = la + lb
    post -= post.max(axis=2, keepdims=True)
    gamma = np.exp(post)
    gamma /= gamma.sum(axis=2, keepdims=True)
    gamma *= batch.mask[..., None]

    trans_counts = np.zeros_like(model.transitions)
    if batch.t_max > 1:
        a = la[:, :-1]
        b = log_b[:, 1:] + lb[:, 1:]
        ea = np.exp(a - a.max(axis=2, keepdims=True))
        eb = np.exp(b - b.max(axis=2, keepdims=True))
        norm = np.einsum("nti,ij,ntj->nt", ea, model.transitions, eb)
        valid = np.arange(batch.t_max - 1)[None, :] < (batch.lengths - 1)[:, None]
        if np.any(norm[valid] <= 0.0):
            raise NumericalFailure("transition posterior normalization underflowed")
        w = np.where(valid, 1.0 / np.where(valid, norm, 1.0), 0.0)
        trans_counts = model.transitions * np.einsum("nt,nti,ntj->ij", w, ea, eb)

    g = gamma[batch.seq_index, batch.time_index]  # (Ttot, S)
    resp = g[..., None] * np.exp(comp - log_b_flat[..., None])  # (Ttot, S, K)
    flat = resp.reshape(resp.shape[0], -1)
    x = batch.frames
    s, k, d = model.means.shape
    return _Stats(
        log_likelihood=float(ll.sum()),
        initial=gamma[:, 0].sum(axis=0),
        transitions=trans_counts,
        occupancy=resp.sum(axis=0),
        first=(flat.T @ x).reshape(s, k, d),
        second=(flat.T @ (x * x)).reshape(s, k, d),
    )


def _m_step(model: GmmHmm, st: _Stats) -> GmmHmm:
    occ = st.occupancy[..., None]
    live = occ > 1e-10
    safe = np.where(live, occ, 1.0)
    means = np.where(live, st.first / safe, model.means)
    var = np.where(live, st.second / safe - means * means, model.variances)
    var = np.maximum(var, model.variance_floor)
    return GmmHmm(
        initial_probs=project_to_floored_simplex(st.initial, TRANSITION_FLOOR)[0],
        transitions=project_to_floored_simplex(st.transitions, TRANSITION_FLOOR),
        weights=project_to_floored_simplex(st.occupancy, WEIGHT_FLOOR),
        means=means,
        variances=var,
        variance_floor=model.variance_floor,
    )


def baum_welch(initial: GmmHmm, obs_set: Sequence, config: TrainingConfig = TrainingConfig()
               ) -> tuple[GmmHmm, list[float]]:
    """EM re-estimation. Returns the trained model and the total
    log-likelihood of every visited model (the last entry is the returned one).
    """
    if len(obs_set) == 0:
        raise InsufficientData("no training sequences")
    batch = _Batch(initial, obs_set)
    model = initial
    history: list[float] = []
    stats = _e_step(model, batch)
    history.append(stats.log_likelihood)
    for _ in range(config.max_iterations):
        model = _m_step(model, stats)
        stats = _e_step(model, batch)
        prev, cur = history[-1], stats.log_likelihood
        history.append(cur)
        if (cur - prev) < config.rel_ll_tolerance * abs(prev):
            break
    return model, history


def train_hmm(obs_set: Sequence, n_states: int, config: TrainingConfig = TrainingConfig()) -> GmmHmm:
    model, _ = baum_welch(init_model(obs_set, n_states, config), obs_set, config)
    return model
