"""Observability-matrix construction and unobservable-subspace verification.

The stacked matrix has rows H_k @ F_{k-1} @ ... @ F_0 (empty product for the
first block). Null spaces are extracted by SVD with a relative singular-value
threshold; the check functions compare the computed null space against the
analytic gauge bases (global rotation + translation).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .group import GroupState, pos_block, rot_block, tangent_dim
from .lie import skew

DEFAULT_RANK_TOL = 1e-8


@dataclass
class JacobianLog:
    """Per-step (F, H) Jacobians of one filter run plus evaluation metadata.

    mode is "estimated" or "ideal"; H_k stacks the Jacobians of every
    observation processed at step k (6 rows each) and may be absent for steps
    without observations. start_step records which filter step the first entry
    belongs to, and anchor optionally carries the true positions at that step
    (needed by the ideal-mode null-space basis).
    """

    filter_name: str
    mode: str
    num_features: int
    F: list = field(default_factory=list)
    H: list = field(default_factory=list)
    start_step: int = 0
    anchor: dict | None = None

    @property
    def state_dim(self) -> int:
        return tangent_dim(self.num_features)

    def append(self, f: np.ndarray, h: np.ndarray | None) -> None:
        d = self.state_dim
        if f.shape != (d, d):
            raise DimensionMismatchError(f"F shape {f.shape}, expected ({d},{d})")
        if h is not None and h.shape[1] != d:
            raise DimensionMismatchError(f"H has {h.shape[1]} columns, expected {d}")
        self.F.append(f)
        self.H.append(h)


@dataclass(frozen=True)
class SubspaceBasis:
    basis: np.ndarray

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]


def build_observability_matrix(log: JacobianLog) -> np.ndarray:
    if not log.F:
        raise DimensionMismatchError("empty Jacobian log")
    rows = []
    prod = np.eye(log.state_dim)
    for k, (f, h) in enumerate(zip(log.F, log.H)):
        if k > 0:
            prod = log.F[k - 1] @ prod
        if h is not None and h.size:
            rows.append(h @ prod)
    if not rows:
        raise DimensionMismatchError("Jacobian log contains no observations")
    return np.vstack(rows)


def null_space(m: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> SubspaceBasis:
    """Orthonormal basis of right singular vectors below tol * sigma_max * max(dim)."""
    _, sv, vt = np.linalg.svd(m)
    if sv.size == 0 or sv[0] == 0.0:
        return SubspaceBasis(np.eye(m.shape[1]))
    cutoff = tol * sv[0] * max(m.shape)
    n_null = m.shape[1] - int(np.sum(sv > cutoff))
    return SubspaceBasis(vt[m.shape[1] - n_null:].T.copy())


def subspace_contained(a: np.ndarray, b: np.ndarray) -> float:
    """Residual of span(a) within span(b): ||(I - B B^T) A|| after orthonormalizing."""
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    return float(np.linalg.norm(qa - qb @ (qb.T @ qa)))


def invariant_gauge_basis(num_features: int) -> np.ndarray:
    """Analytic unobservable directions of the invariant error: stacked identities."""
    k = num_features
    n = np.zeros((tangent_dim(k), 6))
    for i in range(k + 1):
        n[rot_block(i), 0:3] = np.eye(3)
        n[pos_block(i, k), 3:6] = np.eye(3)
    return n


def std_ideal_gauge_basis(robot_pos: np.ndarray,
                          feature_pos: np.ndarray) -> np.ndarray:
    """Gauge directions of the per-block error, anchored at the true positions
    of the first observability-matrix row.

    Translation columns are stacked identities on the position blocks; rotation
    columns carry delta_p = delta_theta x p, i.e. -skew(p) on each position
    block.
    """
    k = len(feature_pos)
    n = np.zeros((tangent_dim(k), 6))
    for i in range(k + 1):
        n[pos_block(i, k), 0:3] = np.eye(3)
        n[rot_block(i), 3:6] = np.eye(3)
    n[pos_block(0, k), 3:6] = -skew(robot_pos)
    for j in range(k):
        n[pos_block(j + 1, k), 3:6] = -skew(feature_pos[j])
    return n


def std_estimated_gauge_basis(num_features: int) -> np.ndarray:
    """Only the global translation survives estimate-based linearization."""
    k = num_features
    n = np.zeros((tangent_dim(k), 3))
    for i in range(k + 1):
        n[pos_block(i, k), 0:3] = np.eye(3)
    return n


@dataclass(frozen=True)
class ObservabilityReport:
    filter_name: str
    mode: str
    num_features: int
    steps: int
    state_dim: int
    null_dim: int
    expected_dim: int
    sigma_max: float
    singular_values: np.ndarray
    basis_residual: float
    containment_residual: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "filter": self.filter_name,
            "mode": self.mode,
            "num_features": self.num_features,
            "steps": self.steps,
            "state_dim": self.state_dim,
            "null_dim": self.null_dim,
            "expected_dim": self.expected_dim,
            "sigma_max": self.sigma_max,
            "singular_values": list(map(float, self.singular_values)),
            "basis_residual": self.basis_residual,
            "containment_residual": self.containment_residual,
            "passed": self.passed,
        }


def _make_report(log: JacobianLog, analytic: np.ndarray, expected_dim: int,
                 tol: float) -> ObservabilityReport:
    obs = build_observability_matrix(log)
    sv = np.linalg.svd(obs, compute_uv=False)
    ns = null_space(obs, tol=tol)
    residual = float(np.linalg.norm(obs @ analytic))
    contain = subspace_contained(analytic, ns.basis) if ns.dimension else np.inf
    passed = (ns.dimension == expected_dim
              and residual <= max(tol * sv[0], 1e-12) * max(1.0, analytic.shape[1]))
    n_obs_steps = sum(1 for h in log.H if h is not None and h.size)
    return ObservabilityReport(
        log.filter_name, log.mode, log.num_features, n_obs_steps,
        log.state_dim, ns.dimension, expected_dim, float(sv[0]), sv,
        residual, float(contain), bool(passed))


def check_invariant_null_space(log: JacobianLog,
                               tol: float = DEFAULT_RANK_TOL) -> ObservabilityReport:
    """Invariant filter: 6 unobservable directions regardless of linearization."""
    return _make_report(log, invariant_gauge_basis(log.num_features), 6, tol)


def check_standard_null_space(log: JacobianLog,
                              initial_state: GroupState | None = None,
                              tol: float = DEFAULT_RANK_TOL) -> ObservabilityReport:
    """Standard filter: 6 directions when linearized at truth, 3 in practice.

    The ideal basis is anchored at the true positions where logging started,
    taken from initial_state or from the log's stored anchor.
    """
    if log.mode == "ideal":
        if initial_state is not None:
            robot_pos = initial_state.robot_pos
            feature_pos = initial_state.feature_pos
        elif log.anchor is not None:
            robot_pos = np.asarray(log.anchor["robot_pos"], dtype=float)
            feature_pos = np.asarray(log.anchor["feature_pos"], dtype=float)
        else:
            raise ValueError("ideal-mode check needs the true anchor positions")
        return _make_report(log, std_ideal_gauge_basis(robot_pos, feature_pos),
                            6, tol)
    return _make_report(log, std_estimated_gauge_basis(log.num_features), 3, tol)
