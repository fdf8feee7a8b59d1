"""Right-invariant EKF on the product group: propagation, update, augmentation.

The error convention is X_true = exp(xi) (+) X_hat, which makes the state
transition Jacobian exactly the identity; only the noise Jacobian G depends on
the estimate.
"""

import numpy as np

from .errors import (DuplicateFeatureError, IllConditionedInnovationError,
                     UnknownFeatureError)
from .group import (GroupState, group_compose, group_exp, pos_block, rot_block,
                    tangent_dim)
from .lie import project_to_so3, skew, so3_log
from .types import FilterState, Innovation, Odometry, PoseObservation, symmetrize

COND_LIMIT = 1e12
_DRIFT_TOL = 1e-9


def propagate_mean(mean: GroupState, u: Odometry) -> GroupState:
    """Compose the odometry increment onto the robot pose; features are static.

    Long composition chains are re-orthonormalized by polar projection once
    the robot rotation drifts beyond _DRIFT_TOL.
    """
    rot = mean.robot_rot @ u.rot
    if np.linalg.norm(rot @ rot.T - np.eye(3)) > _DRIFT_TOL:
        rot = project_to_so3(rot)
    return GroupState(
        rot,
        mean.robot_rot @ u.pos + mean.robot_pos,
        mean.feature_rots,
        mean.feature_pos,
        mean.feature_ids,
    )


def propagation_jacobians(state: FilterState, u: Odometry):
    """State Jacobian (identity) and noise Jacobian G of the invariant error.

    G rows follow the tangent layout: the robot rotation block maps rotation
    noise through R_hat; each position block carries skew(predicted position)
    @ R_hat in the rotation-noise column, and only the robot position feels
    translation noise.
    """
    k = state.mean.num_features
    d = tangent_dim(k)
    r = state.mean.robot_rot
    g = np.zeros((d, 6))
    g[rot_block(0), 0:3] = r
    p_pred = state.mean.robot_pos + r @ u.pos
    g[pos_block(0, k), 0:3] = skew(p_pred) @ r
    g[pos_block(0, k), 3:6] = r
    for j in range(k):
        g[pos_block(j + 1, k), 0:3] = skew(state.mean.feature_pos[j]) @ r
    return np.eye(d), g


def propagate(state: FilterState, u: Odometry) -> FilterState:
    _, g = propagation_jacobians(state, u)
    cov = state.cov + g @ u.noise_cov @ g.T
    return FilterState(propagate_mean(state.mean, u), symmetrize(cov))


def observation_jacobian(mean: GroupState, feature_index: int) -> np.ndarray:
    """H with four nonzero 3x3 blocks, all +/- the transposed robot rotation."""
    k = mean.num_features
    rt = mean.robot_rot.T
    h = np.zeros((6, tangent_dim(k)))
    h[0:3, rot_block(0)] = -rt
    h[0:3, rot_block(feature_index + 1)] = rt
    h[3:6, pos_block(0, k)] = -rt
    h[3:6, pos_block(feature_index + 1, k)] = rt
    return h


def innovation(state: FilterState, z: PoseObservation) -> Innovation:
    """Innovation of a relative-pose observation of a tracked feature."""
    mean = state.mean
    try:
        j = mean.index_of(z.feature_id)
    except ValueError:
        raise UnknownFeatureError(f"feature {z.feature_id!r} not in state") from None
    y = np.empty(6)
    y[0:3] = so3_log(z.rot @ mean.feature_rots[j].T @ mean.robot_rot,
                     validate=False)
    y[3:6] = z.pos - mean.robot_rot.T @ (mean.feature_pos[j] - mean.robot_pos)
    h = observation_jacobian(mean, j)
    hp = h @ state.cov
    s = symmetrize(hp @ h.T) + z.noise_cov
    return Innovation(y, h, s, hp)


def _check_conditioning(s: np.ndarray) -> None:
    # Gershgorin bounds give a cheap sufficient pass; fall back to the exact
    # eigenvalue ratio only when the bounds cannot certify cond <= limit
    diag = s.diagonal()
    radius = np.abs(s).sum(axis=1) - np.abs(diag)
    lo = float((diag - radius).min())
    hi = float((diag + radius).max())
    if lo > 0.0 and hi / lo <= COND_LIMIT:
        return
    eig = np.linalg.eigvalsh(s)
    if eig[0] <= 0.0 or eig[-1] / eig[0] > COND_LIMIT:
        raise IllConditionedInnovationError(
            "innovation covariance condition number "
            f"{(eig[-1] / eig[0]) if eig[0] > 0.0 else np.inf:.3e}")


def apply_update(state: FilterState, inn: Innovation,
                 joseph: bool = False) -> FilterState:
    """Kalman correction: mean moved by exp(K y) (+) mean, cov by (I - K H) P.

    The covariance is formed as P - K (H P), which is (I - K H) P without the
    dense square product.
    """
    _check_conditioning(inn.S)
    hp = inn.HP if inn.HP is not None else inn.H @ state.cov
    gain = hp.T @ np.linalg.inv(inn.S)
    mean = group_compose(group_exp(gain @ inn.y, state.mean.feature_ids), state.mean)
    if joseph:
        ikh = np.eye(state.cov.shape[0]) - gain @ inn.H
        omega = inn.S - hp @ inn.H.T
        cov = ikh @ state.cov @ ikh.T + gain @ omega @ gain.T
    else:
        cov = state.cov - gain @ hp
    return FilterState(mean, symmetrize(cov))


def update(state: FilterState, z: PoseObservation, joseph: bool = False) -> FilterState:
    return apply_update(state, innovation(state, z), joseph=joseph)


def augmentation_jacobians(state: FilterState, z: PoseObservation):
    """Linear maps (A, B) with xi_aug = A xi + B v for a new feature.

    The new invariant error blocks copy the robot blocks (A) and absorb the
    observation noise rotated into the global frame (B).
    """
    k = state.mean.num_features
    d = tangent_dim(k)
    a = np.zeros((d + 6, d))
    b = np.zeros((d + 6, 6))
    new_rot = rot_block(k + 1)
    new_pos = pos_block(k + 1, k + 1)
    for i in range(k + 1):
        a[rot_block(i), rot_block(i)] = np.eye(3)
        a[pos_block(i, k + 1), pos_block(i, k)] = np.eye(3)
    a[new_rot, rot_block(0)] = np.eye(3)
    a[new_pos, pos_block(0, k)] = np.eye(3)
    r = state.mean.robot_rot
    b[new_rot, 0:3] = -r
    b[new_pos, 3:6] = -r
    return a, b


def initialize_feature(state: FilterState, z: PoseObservation) -> FilterState:
    """Augment the state with a first-seen feature (K -> K+1).

    The new mean is the observation moved into the global frame; the covariance
    is rebuilt so the new blocks inherit the robot blocks plus rotated
    observation noise.
    """
    mean = state.mean
    if z.feature_id in mean.feature_ids:
        raise DuplicateFeatureError(f"feature {z.feature_id!r} already initialized")
    new_rot = mean.robot_rot @ z.rot
    new_pos = mean.robot_pos + mean.robot_rot @ z.pos
    a, b = augmentation_jacobians(state, z)
    cov = a @ state.cov @ a.T + b @ z.noise_cov @ b.T
    aug_mean = GroupState(
        mean.robot_rot,
        mean.robot_pos,
        np.concatenate([mean.feature_rots, new_rot[None]], axis=0),
        np.concatenate([mean.feature_pos, new_pos[None]], axis=0),
        mean.feature_ids + (z.feature_id,),
    )
    return FilterState(aug_mean, symmetrize(cov))
