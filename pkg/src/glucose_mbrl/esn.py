"""
Leaky Echo State Networks and their ensemble.

Each member has a fixed random reservoir (W_in, W) and a linear readout W_out trained by ridge
regression on the normal equations:

    x~(t) = tanh(W_in u(t) + W x(t-1))
    x(t)  = (1 - a) x(t-1) + a x~(t)
    y(t)  = W_out [x(t); u(t)]

The ensemble keeps its members' matrices stacked so that every member and every candidate action
sequence is rolled out with one batched matmul per horizon step.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
import yaml
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator

from glucose_mbrl.errors import NotFittedError
from glucose_mbrl.risk import clamp_bg

logger = logging.getLogger(__name__)

DENSE_EIGEN_LIMIT = 2000
ARNOLDI_RITZ_VALUES = 6
ARNOLDI_BASIS = 64
RADIUS_TOLERANCE = 1e-6


class EsnHyper(BaseModel):
    """Reservoir hyperparameters shared by all ensemble members."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    reservoir_size: int = Field(default=200, ge=1)
    input_dim: int = Field(default=2, ge=1)
    output_dim: int = Field(default=1, ge=1)
    leak_rate: float = Field(default=0.3, gt=0, le=1)
    spectral_radius: float = Field(default=0.95, gt=0, lt=1)
    input_scale: float = Field(default=0.5, gt=0)
    connectivity: float = Field(default=0.1, gt=0, le=1)
    ridge: float = Field(default=1e-6, ge=0)
    washout: int = Field(default=24, ge=0)
    buffer_capacity: int = Field(default=100_000, ge=1)
    max_eigen_iterations: int = Field(default=10_000, ge=1)

    @model_validator(mode="after")
    def _check_sizes(self) -> "EsnHyper":
        if self.reservoir_size < self.input_dim:
            raise ValueError("reservoir_size must be at least input_dim")
        return self

    @property
    def feature_dim(self) -> int:
        return self.reservoir_size + self.input_dim


@dataclass(frozen=True, eq=False)
class EsnWeights:
    """Reservoir matrices of one network. W_in and W are read-only; W_out is None until fitted."""

    w_in: np.ndarray
    w: np.ndarray
    w_out: np.ndarray | None = None

    def __post_init__(self):
        self.w_in.setflags(write=False)
        self.w.setflags(write=False)

    def with_readout(self, w_out: np.ndarray | None) -> "EsnWeights":
        return replace(self, w_out=w_out)


@dataclass
class EsnState:
    x: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "EsnState":
        return cls(x=np.zeros(size))

    def copy(self) -> "EsnState":
        return EsnState(x=self.x.copy(), t=self.t)


@dataclass(frozen=True)
class Normalizer:
    """
    Scales raw (bolus, carbs) inputs to O(1) and glucose targets to a centred unit scale.

    The identity normalizer leaves everything unchanged.
    """

    bolus_scale: float = 1.0
    carb_scale: float = 1.0
    target_offset: float = 0.0
    target_scale: float = 1.0

    @classmethod
    def for_basal(cls, basal_rate: float) -> "Normalizer":
        return cls(bolus_scale=20.0 * basal_rate, carb_scale=100.0, target_offset=120.0, target_scale=100.0)

    def inputs(self, bolus: ArrayLike, carbs: ArrayLike) -> np.ndarray:
        return np.stack(np.broadcast_arrays(np.asarray(bolus, float) / self.bolus_scale, np.asarray(carbs, float) / self.carb_scale))

    def targets(self, bg: ArrayLike) -> np.ndarray:
        return (np.asarray(bg, dtype=float) - self.target_offset) / self.target_scale

    def to_bg(self, y: ArrayLike) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.target_scale + self.target_offset


IDENTITY = Normalizer()


# --- reservoir ------------------------------------------------------------------------------


def spectral_radius(w: np.ndarray, max_iter: int = 10_000, dense_limit: int = DENSE_EIGEN_LIMIT) -> float:
    """
    Largest absolute eigenvalue of a square matrix.

    Matrices up to dense_limit rows use a dense eigen-decomposition; larger ones use implicitly
    restarted Arnoldi iteration capped at max_iter, started from a fixed vector so repeated calls
    on the same matrix agree exactly. The largest of several largest-modulus Ritz values is returned.

    Raises:
        ValueError: If the iteration does not converge within max_iter.
    """
    n = w.shape[0]
    if n <= dense_limit:
        return float(np.max(np.abs(np.linalg.eigvals(w))))
    k = min(ARNOLDI_RITZ_VALUES, n - 2)
    start = np.random.default_rng(n).uniform(-1.0, 1.0, n)
    try:
        values = scipy.sparse.linalg.eigs(
            w, k=k, ncv=min(n, max(2 * k + 1, ARNOLDI_BASIS)), which="LM", v0=start, maxiter=max_iter, tol=1e-12, return_eigenvectors=False
        )
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise ValueError(f"spectral radius estimate did not converge within {max_iter} iterations") from exc
    return float(np.max(np.abs(values)))


def init_esn(hyper: EsnHyper, rng: np.random.Generator | int) -> EsnWeights:
    """
    Draw a reservoir satisfying the echo state property.

    W is sparse with the requested connectivity and uniform [-1, 1] weights, rescaled to the
    target spectral radius; W_in is dense uniform in [-input_scale, input_scale].

    Raises:
        ValueError: If the spectral radius cannot be estimated, the drawn reservoir is nilpotent, or the
            rescaled radius misses the target by more than 1e-6.

    Example:
        weights = init_esn(EsnHyper(reservoir_size=100), np.random.default_rng(0))
    """
    rng = np.random.default_rng(rng)
    n = hyper.reservoir_size
    w = scipy.sparse.random(
        n, n, density=hyper.connectivity, format="csr", random_state=rng, data_rvs=lambda size: rng.uniform(-1.0, 1.0, size)
    ).toarray()
    radius = spectral_radius(w, hyper.max_eigen_iterations)
    if radius <= 1e-12:
        raise ValueError("drawn reservoir has zero spectral radius; increase connectivity or reservoir_size")
    w *= hyper.spectral_radius / radius
    rescaled = spectral_radius(w, hyper.max_eigen_iterations)
    if abs(rescaled - hyper.spectral_radius) > RADIUS_TOLERANCE:
        raise ValueError(f"rescaled reservoir has spectral radius {rescaled}, expected {hyper.spectral_radius}")
    w_in = rng.uniform(-hyper.input_scale, hyper.input_scale, size=(n, hyper.input_dim))
    return EsnWeights(w_in=w_in, w=w)


def update_state(state: EsnState, weights: EsnWeights, u: ArrayLike, leak_rate: float) -> EsnState:
    """One leaky tanh update. Returns a new state; the input state is untouched."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError(f"ESN input must be finite, got {u}")
    candidate = np.tanh(weights.w_in @ u + weights.w @ state.x)
    return EsnState(x=(1.0 - leak_rate) * state.x + leak_rate * candidate, t=state.t + 1)


def features(state: EsnState, u: ArrayLike) -> np.ndarray:
    return np.concatenate([state.x, np.asarray(u, dtype=float)])


def readout(state: EsnState, u: ArrayLike, w_out: np.ndarray | None) -> np.ndarray:
    """
    Linear readout W_out [x; u], shape (L,).

    Raises:
        NotFittedError: If W_out has not been fitted.
    """
    if w_out is None:
        raise NotFittedError("readout weights are not fitted")
    return w_out @ features(state, u)


def rollout(
    weights: EsnWeights,
    state: EsnState,
    actions: ArrayLike,
    assumed_carbs: ArrayLike,
    leak_rate: float,
    normalizer: Normalizer = IDENTITY,
) -> np.ndarray:
    """
    Predict glucose over a sequence of (bolus, carbs) inputs from a copy of state.

    Returns T predictions in mg/dl, clamped to [1, 1000]. The caller's state is not modified.

    Raises:
        NotFittedError: If W_out has not been fitted.
        ValueError: If actions and assumed_carbs differ in length.
    """
    if weights.w_out is None:
        raise NotFittedError("cannot roll out an unfitted network")
    actions = np.asarray(actions, dtype=float)
    assumed_carbs = np.asarray(assumed_carbs, dtype=float)
    if actions.shape != assumed_carbs.shape:
        raise ValueError(f"actions {actions.shape} and assumed_carbs {assumed_carbs.shape} must match")

    current = state.copy()
    predictions = np.empty(actions.shape[0])
    inputs = normalizer.inputs(actions, assumed_carbs)
    for t in range(actions.shape[0]):
        current = update_state(current, weights, inputs[:, t], leak_rate)
        predictions[t] = normalizer.to_bg(readout(current, inputs[:, t], weights.w_out)[0])
    return clamp_bg(predictions)


# --- training -------------------------------------------------------------------------------


class TrainingBuffer:
    """
    Ring buffer of (features, target) rows with running normal-equation accumulators.

    Rows from the first `washout` steps of every episode are discarded. When full, the oldest
    row is evicted and its contribution removed from the accumulators.
    """

    def __init__(self, feature_dim: int, output_dim: int = 1, capacity: int = 100_000, washout: int = 0):
        self.feature_dim = feature_dim
        self.output_dim = output_dim
        self.capacity = capacity
        self.washout = washout
        self.gram = np.zeros((feature_dim, feature_dim))
        self.cross = np.zeros((feature_dim, output_dim))
        self._features = np.empty((min(capacity, 1024), feature_dim))
        self._targets = np.empty((min(capacity, 1024), output_dim))
        self._size = 0
        self._head = 0
        self._episode_step = 0

    def __len__(self) -> int:
        return self._size

    def start_episode(self) -> None:
        self._episode_step = 0

    def append(self, row: ArrayLike, target: ArrayLike) -> bool:
        """Add one row; returns False if it fell inside the episode washout."""
        step = self._episode_step
        self._episode_step += 1
        if step < self.washout:
            return False

        row = np.asarray(row, dtype=float).reshape(self.feature_dim)
        target = np.asarray(target, dtype=float).reshape(self.output_dim)
        if self._size == self.capacity:
            slot = self._head
            old_row, old_target = self._features[slot], self._targets[slot]
            self.gram -= np.outer(old_row, old_row)
            self.cross -= np.outer(old_row, old_target)
            self._head = (self._head + 1) % self.capacity
        else:
            if self._size == self._features.shape[0]:
                self._grow()
            slot = self._size
            self._size += 1
        self._features[slot] = row
        self._targets[slot] = target
        self.gram += np.outer(row, row)
        self.cross += np.outer(row, target)
        return True

    def _grow(self) -> None:
        rows = min(self.capacity, 2 * self._features.shape[0])
        self._features = np.resize(self._features, (rows, self.feature_dim))
        self._targets = np.resize(self._targets, (rows, self.output_dim))

    @property
    def features(self) -> np.ndarray:
        """Stored feature rows, oldest first."""
        return np.roll(self._features[: self._size], -self._head, axis=0)

    @property
    def targets(self) -> np.ndarray:
        return np.roll(self._targets[: self._size], -self._head, axis=0)


@dataclass(frozen=True)
class ReadoutFit:
    w_out: np.ndarray | None
    refitted: bool


def fit_readout(buffer: TrainingBuffer, ridge: float, previous: np.ndarray | None = None) -> ReadoutFit:
    """
    Ridge readout from the buffer's normal equations, W_out^T = (Phi^T Phi + ridge I)^-1 Phi^T Y.

    With fewer rows than features the previous readout is kept and the result is flagged
    as not refitted.

    Raises:
        ValueError: If the system is singular (typically ridge = 0 with degenerate features).
    """
    if len(buffer) < buffer.feature_dim:
        logger.warning("readout not refitted: %d rows < %d features", len(buffer), buffer.feature_dim)
        return ReadoutFit(w_out=previous, refitted=False)
    system = buffer.gram + ridge * np.eye(buffer.feature_dim)
    try:
        solution = scipy.linalg.solve(system, buffer.cross, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(f"normal equations are singular with ridge={ridge}; use a larger ridge") from exc
    return ReadoutFit(w_out=solution.T, refitted=True)


# --- ensemble -------------------------------------------------------------------------------


def member_seeds(seed: int, size: int) -> List[int]:
    """Distinct, reproducible member seeds spawned from one master seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(size)]


@dataclass(eq=False)
class EsnEnsemble:
    """
    M independently drawn reservoirs trained on the same targets.

    The live states follow the realized inputs of the current episode; rollouts always work on
    copies of them.
    """

    hyper: EsnHyper
    members: List[EsnWeights]
    seeds: List[int]
    normalizer: Normalizer = IDENTITY
    buffers: List[TrainingBuffer] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        n = self.hyper.reservoir_size
        self._w_in = np.stack([m.w_in for m in self.members])
        self._w = np.stack([m.w for m in self.members])
        self._states = np.zeros((len(self.members), n))
        self._pending: np.ndarray | None = None
        if not self.buffers:
            self.buffers = [
                TrainingBuffer(self.hyper.feature_dim, self.hyper.output_dim, self.hyper.buffer_capacity, self.hyper.washout)
                for _ in self.members
            ]
        self._sync_readouts()

    @classmethod
    def create(cls, hyper: EsnHyper, size: int = 5, seed: int = 0, normalizer: Normalizer = IDENTITY) -> "EsnEnsemble":
        """
        Draw `size` members with pairwise different seeds spawned from `seed`.

        Raises:
            ValueError: Propagated from member construction, prefixed with the member index.
        """
        seeds = member_seeds(seed, size)
        members = []
        for index, member_seed in enumerate(seeds):
            try:
                members.append(init_esn(hyper, np.random.default_rng(member_seed)))
            except ValueError as exc:
                raise ValueError(f"ensemble member {index}: {exc}") from exc
        return cls(hyper=hyper, members=members, seeds=seeds, normalizer=normalizer)

    def __len__(self) -> int:
        return len(self.members)

    def _sync_readouts(self) -> None:
        if all(m.w_out is not None for m in self.members):
            self._w_out = np.stack([m.w_out for m in self.members])  # type: ignore[misc]
        else:
            self._w_out = None

    @property
    def is_fitted(self) -> bool:
        return self._w_out is not None

    @property
    def states(self) -> np.ndarray:
        """Copy of the live hidden states, shape (M, N)."""
        return self._states.copy()

    def member_state(self, index: int) -> EsnState:
        return EsnState(x=self._states[index].copy())

    def start_episode(self) -> None:
        """Reset live states to zero and start the washout count of every buffer."""
        self._states[:] = 0.0
        self._pending = None
        for buffer in self.buffers:
            buffer.start_episode()

    def advance(self, bolus: float, carbs: float) -> None:
        """Advance every member's live state with the realized input of this step."""
        u = self.normalizer.inputs(bolus, carbs)
        if not np.all(np.isfinite(u)):
            raise ValueError(f"ESN input must be finite, got bolus={bolus}, carbs={carbs}")
        alpha = self.hyper.leak_rate
        candidate = np.tanh(self._w_in @ u + np.einsum("mij,mj->mi", self._w, self._states))
        self._states = (1.0 - alpha) * self._states + alpha * candidate
        self._pending = np.concatenate([self._states, np.broadcast_to(u, (len(self), u.shape[0]))], axis=1)

    def record_target(self, bg: float) -> None:
        """Pair the features of the last advance with the glucose observed after it."""
        if self._pending is None:
            return
        target = self.normalizer.targets(bg)
        for buffer, row in zip(self.buffers, self._pending):
            buffer.append(row, target)
        self._pending = None

    def fit(self) -> List[bool]:
        """Refit every member's readout on its own buffer. Returns which members were refitted."""
        refitted = []
        for index, (member, buffer) in enumerate(zip(self.members, self.buffers)):
            try:
                result = fit_readout(buffer, self.hyper.ridge, member.w_out)
            except ValueError as exc:
                raise ValueError(f"ensemble member {index}: {exc}") from exc
            self.members[index] = member.with_readout(result.w_out)
            refitted.append(result.refitted)
        self._sync_readouts()
        logger.info("refitted %d/%d readouts on %d rows", sum(refitted), len(refitted), len(self.buffers[0]))
        return refitted

    def rollout_batch(self, actions: ArrayLike, assumed_carbs: ArrayLike) -> np.ndarray:
        """
        Roll out S bolus sequences on every member at once.

        Args:
            actions: (S, T) bolus units per step.
            assumed_carbs: (T,) grams per step, shared by all sequences.

        Returns:
            (S, M, T) glucose predictions in mg/dl, clamped to [1, 1000].

        Raises:
            NotFittedError: If any member is unfitted.
        """
        if self._w_out is None:
            raise NotFittedError("ensemble readouts are not fitted")
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        assumed_carbs = np.asarray(assumed_carbs, dtype=float)
        sequences, horizon = actions.shape
        if assumed_carbs.shape != (horizon,):
            raise ValueError(f"assumed_carbs must have shape ({horizon},), got {assumed_carbs.shape}")

        alpha = self.hyper.leak_rate
        members = len(self)
        x = np.repeat(self._states[:, :, None], sequences, axis=2)
        predictions = np.empty((sequences, members, horizon))
        for t in range(horizon):
            u = self.normalizer.inputs(actions[:, t], np.full(sequences, assumed_carbs[t]))
            x = (1.0 - alpha) * x + alpha * np.tanh(self._w_in @ u + self._w @ x)
            feats = np.concatenate([x, np.broadcast_to(u, (members, *u.shape))], axis=1)
            predictions[:, :, t] = (self._w_out @ feats)[:, 0, :].T
        return clamp_bg(self.normalizer.to_bg(predictions))

    def rollout(self, actions: ArrayLike, assumed_carbs: ArrayLike) -> np.ndarray:
        """M x T prediction matrix for a single bolus sequence."""
        return self.rollout_batch(np.asarray(actions, dtype=float)[None, :], assumed_carbs)[0]

    def save(self, path: Path | str) -> None:
        """Write hyperparameters, member seeds, normalizer and readouts to a YAML file."""
        document = {
            "hyper": self.hyper.model_dump(),
            "seeds": self.seeds,
            "normalizer": {
                "bolus_scale": self.normalizer.bolus_scale,
                "carb_scale": self.normalizer.carb_scale,
                "target_offset": self.normalizer.target_offset,
                "target_scale": self.normalizer.target_scale,
            },
            "readouts": [None if m.w_out is None else m.w_out.tolist() for m in self.members],
        }
        Path(path).write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "EsnEnsemble":
        """Rebuild an ensemble saved with save(); reservoirs are regenerated from the seeds."""
        document = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        hyper = EsnHyper(**document["hyper"])
        seeds: Sequence[int] = document["seeds"]
        members = [
            init_esn(hyper, np.random.default_rng(seed)).with_readout(None if readout is None else np.asarray(readout, dtype=float))
            for seed, readout in zip(seeds, document["readouts"])
        ]
        return cls(hyper=hyper, members=members, seeds=list(seeds), normalizer=Normalizer(**document["normalizer"]))
