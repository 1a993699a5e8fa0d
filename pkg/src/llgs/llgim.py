"""
Anchor initialisation from dense point clouds: voxel candidates followed by
distance-adaptive stochastic pruning.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DataError
from .geometry import PointCloud

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class PruneRound:
    round: int
    tau: float
    before: int
    retained: int
    mean_distance: float


@dataclass(frozen=True, slots=True)
class AnchorSet:
    """
    Voxel-centred anchor candidates.

    Attributes:
        positions: (N, 3) voxel centres.
        resolution: voxel edge length ``r``; every anchor starts with scale ``l_v = r``.
        ids: (N,) identity of each anchor in the candidate set it came from.
        rounds: pruning provenance, one record per round.
    """

    positions: np.ndarray
    resolution: float
    ids: np.ndarray
    rounds: Tuple[PruneRound, ...] = ()

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=np.float64, copy=True).reshape(-1, 3)
        ids = np.array(self.ids, dtype=np.int64, copy=True).reshape(-1)
        if len(ids) != len(positions):
            raise DataError("Anchor ids and positions differ in length.")
        if self.resolution <= 0:
            raise DataError("Voxel resolution must be positive.")
        positions.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def scales(self) -> np.ndarray:
        return np.full(len(self), float(self.resolution))

    def voxel_indices(self) -> np.ndarray:
        return np.floor(self.positions / self.resolution).astype(np.int64)

    def subset(self, keep: np.ndarray, rounds: Tuple[PruneRound, ...] = ()) -> "AnchorSet":
        return AnchorSet(self.positions[keep], self.resolution, self.ids[keep], self.rounds + rounds)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "resolution": self.resolution,
            "count": len(self),
            "positions": self.positions.tolist(),
            "scales": self.scales.tolist(),
            "ids": [int(i) for i in self.ids],
            "pruning": [asdict(r) for r in self.rounds],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "AnchorSet":
        try:
            rounds = tuple(PruneRound(**r) for r in payload.get("pruning", []))
            positions = np.asarray(payload["positions"], dtype=np.float64).reshape(-1, 3)
            ids = payload.get("ids", list(range(len(positions))))
            return cls(positions, float(payload["resolution"]), np.asarray(ids), rounds)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Malformed anchor file: {exc}") from exc


@dataclass(frozen=True, slots=True)
class PruneConfig:
    tau0: float = 1.0
    beta: float = 1.0
    epsilon: float = 1e-6
    rounds: int = 3
    seed: int = 0
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.tau0 <= 0 or self.beta <= 0 or self.epsilon <= 0:
            raise ConfigError("tau0, beta and epsilon must be positive.")
        if self.rounds < 1:
            raise ConfigError("At least one pruning round is required.")
        if self.seed < 0:
            raise ConfigError("The pruning seed must be non-negative.")


def build_anchor_candidates(cloud: PointCloud, r: float) -> AnchorSet:
    """One anchor per occupied voxel, at the voxel centre, in lexicographic voxel order."""
    if len(cloud) == 0:
        raise DataError("Cannot build anchors from an empty point cloud.")
    if r <= 0:
        raise DataError("Voxel resolution must be positive.")
    voxels = np.unique(np.floor(cloud.points / r).astype(np.int64), axis=0)
    centres = (voxels + 0.5) * r
    logger.info("%d points -> %d voxel anchors (r=%g)", len(cloud), len(centres), r)
    return AnchorSet(centres, float(r), np.arange(len(centres)))


def preservation_probability(d_min: np.ndarray | float, tau: float, epsilon: float) -> np.ndarray | float:
    """min(1, d_min / tau + epsilon)."""
    value = np.minimum(1.0, np.asarray(d_min, dtype=np.float64) / tau + epsilon)
    return float(value) if np.ndim(value) == 0 else value


def update_threshold(tau: float, beta: float, retained: int, initial: int) -> float:
    """tau * exp(beta * retained / initial)."""
    if initial <= 0 or not 0 <= retained <= initial:
        raise ValueError("Need initial > 0 and 0 <= retained <= initial.")
    return tau * math.exp(beta * retained / initial)


def round_uniforms(seed: int, round_index: int, count: int) -> np.ndarray:
    """Uniform draws for one round, addressed by the anchor's position in the input set."""
    generator = np.random.Generator(np.random.Philox(key=[seed, round_index]))
    return generator.random(count)


def nearest_other_distance(points: np.ndarray) -> np.ndarray:
    """Distance from every point to its nearest other point (inf for a lone point)."""
    if len(points) < 2:
        return np.full(len(points), np.inf)
    distances, _ = cKDTree(points).query(points, k=2)
    return distances[:, 1]


@dataclass(slots=True)
class PruneReport:
    anchors: AnchorSet
    rounds: List[PruneRound] = field(default_factory=list)
    thresholds: List[float] = field(default_factory=list)


def stochastic_prune(anchors: AnchorSet, cfg: PruneConfig) -> AnchorSet:
    return stochastic_prune_report(anchors, cfg).anchors


def stochastic_prune_report(anchors: AnchorSet, cfg: PruneConfig) -> PruneReport:
    """
    Each round: nearest-neighbour distance among currently retained anchors, Bernoulli
    retention with the preservation probability, then the threshold update with the
    post-round count. Output keeps the input order.
    """
    if len(anchors) == 0:
        raise DataError("Cannot prune an empty anchor set.")
    initial = len(anchors)
    retained = np.ones(initial, dtype=bool)
    tau = cfg.tau0
    report = PruneReport(anchors=anchors, thresholds=[tau])
    if not cfg.enabled:
        logger.info("Pruning disabled: keeping all %d voxel anchors", initial)
        return report
    for round_index in range(cfg.rounds):
        alive = np.nonzero(retained)[0]
        d_min = nearest_other_distance(anchors.positions[alive])
        probability = preservation_probability(d_min, tau, cfg.epsilon)
        draws = round_uniforms(cfg.seed, round_index, initial)[alive]
        retained[alive[draws >= probability]] = False
        count = int(retained.sum())
        finite = d_min[np.isfinite(d_min)]
        report.rounds.append(
            PruneRound(
                round=round_index,
                tau=tau,
                before=len(alive),
                retained=count,
                mean_distance=float(finite.mean()) if len(finite) else math.inf,
            )
        )
        logger.info("Pruning round %d: tau=%.6g, %d -> %d anchors", round_index, tau, len(alive), count)
        tau = update_threshold(tau, cfg.beta, count, initial)
        report.thresholds.append(tau)
    report.anchors = anchors.subset(retained, tuple(report.rounds))
    return report
