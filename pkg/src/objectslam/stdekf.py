"""Standard (per-block error) EKF baseline and its ground-truth-linearized variant.

The error convention is independent per block: left rotation errors
exp(eta_R) = R @ R_hat^T and additive position errors p - p_hat. The ideal
variant is the same code path with the Jacobian linearization state supplied
by a ground-truth hook instead of the estimate.
"""

import numpy as np

from .errors import DuplicateFeatureError, UnknownFeatureError
from .group import GroupState, pos_block, rot_block, tangent_dim
from .lie import batch_so3_exp, skew, so3_exp, so3_log
from .riekf import _check_conditioning, propagate_mean
from .types import FilterState, Innovation, Odometry, PoseObservation, symmetrize


def std_propagation_jacobians(state: FilterState, u: Odometry,
                              linearization: GroupState | None = None):
    """F couples robot position error to rotation error; G injects odometry noise."""
    lin = state.mean if linearization is None else linearization
    k = state.mean.num_features
    d = tangent_dim(k)
    r = lin.robot_rot
    f = np.eye(d)
    f[pos_block(0, k), rot_block(0)] = -skew(r @ u.pos)
    g = np.zeros((d, 6))
    g[rot_block(0), 0:3] = r
    g[pos_block(0, k), 3:6] = r
    return f, g


def std_propagate(state: FilterState, u: Odometry,
                  linearization: GroupState | None = None) -> FilterState:
    """Covariance propagation F P F^T + G Sigma G^T exploiting that F differs
    from the identity by a single block and G touches only the robot blocks."""
    lin = state.mean if linearization is None else linearization
    k = state.mean.num_features
    r0, p0 = rot_block(0), pos_block(0, k)
    b = -skew(lin.robot_rot @ u.pos)
    cov = state.cov.copy()
    bp = b @ state.cov[r0]
    cov[p0, :] += bp
    cov[:, p0] += bp.T
    cov[p0, p0] += b @ state.cov[r0, r0] @ b.T
    r = lin.robot_rot
    sig = u.noise_cov
    cov[r0, r0] += r @ sig[0:3, 0:3] @ r.T
    rs12 = r @ sig[0:3, 3:6] @ r.T
    cov[r0, p0] += rs12
    cov[p0, r0] += rs12.T
    cov[p0, p0] += r @ sig[3:6, 3:6] @ r.T
    return FilterState(propagate_mean(state.mean, u), symmetrize(cov))


def std_observation_jacobian(mean: GroupState, feature_index: int,
                             linearization: GroupState | None = None) -> np.ndarray:
    """Same block pattern as the invariant H plus the position-to-rotation block."""
    lin = mean if linearization is None else linearization
    k = mean.num_features
    rt = lin.robot_rot.T
    fid = mean.feature_ids[feature_index]
    lin_fpos = lin.feature_pos[lin.index_of(fid)]
    h = np.zeros((6, tangent_dim(k)))
    h[0:3, rot_block(0)] = -rt
    h[0:3, rot_block(feature_index + 1)] = rt
    h[3:6, pos_block(0, k)] = -rt
    h[3:6, pos_block(feature_index + 1, k)] = rt
    h[3:6, rot_block(0)] = rt @ skew(lin_fpos - lin.robot_pos)
    return h


def std_innovation(state: FilterState, z: PoseObservation,
                   linearization: GroupState | None = None) -> Innovation:
    """Residual from the estimate; Jacobian from the linearization state."""
    mean = state.mean
    try:
        j = mean.index_of(z.feature_id)
    except ValueError:
        raise UnknownFeatureError(f"feature {z.feature_id!r} not in state") from None
    y = np.empty(6)
    y[0:3] = so3_log(z.rot @ mean.feature_rots[j].T @ mean.robot_rot,
                     validate=False)
    y[3:6] = z.pos - mean.robot_rot.T @ (mean.feature_pos[j] - mean.robot_pos)
    h = std_observation_jacobian(mean, j, linearization)
    hp = h @ state.cov
    s = symmetrize(hp @ h.T) + z.noise_cov
    return Innovation(y, h, s, hp)


def apply_std_error(mean: GroupState, eta: np.ndarray) -> GroupState:
    """Perturb a state by a per-block error vector (left rotation, additive position)."""
    k = mean.num_features
    if k:
        frots = batch_so3_exp(eta[3:3 * (k + 1)].reshape(k, 3)) @ mean.feature_rots
        fpos = mean.feature_pos + eta[3 * (k + 1) + 3:].reshape(k, 3)
    else:
        frots, fpos = mean.feature_rots, mean.feature_pos
    return GroupState(
        so3_exp(eta[rot_block(0)]) @ mean.robot_rot,
        mean.robot_pos + eta[pos_block(0, k)],
        frots,
        fpos,
        mean.feature_ids,
    )


def std_apply_update(state: FilterState, inn: Innovation) -> FilterState:
    _check_conditioning(inn.S)
    hp = inn.HP if inn.HP is not None else inn.H @ state.cov
    gain = hp.T @ np.linalg.inv(inn.S)
    mean = apply_std_error(state.mean, gain @ inn.y)
    return FilterState(mean, symmetrize(state.cov - gain @ hp))


def std_update(state: FilterState, z: PoseObservation,
               linearization: GroupState | None = None) -> FilterState:
    return std_apply_update(state, std_innovation(state, z, linearization))


def std_augmentation_jacobians(state: FilterState, z: PoseObservation):
    """(A, B) with eta_aug = A eta + B v for a first-seen feature.

    Unlike the invariant filter, the new position error also couples to the
    robot rotation error through the lever arm R_hat @ p_z.
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
    r = state.mean.robot_rot
    a[new_rot, rot_block(0)] = np.eye(3)
    a[new_pos, pos_block(0, k)] = np.eye(3)
    a[new_pos, rot_block(0)] = -skew(r @ z.pos)
    b[new_rot, 0:3] = -r
    b[new_pos, 3:6] = -r
    return a, b


def std_initialize_feature(state: FilterState, z: PoseObservation) -> FilterState:
    mean = state.mean
    if z.feature_id in mean.feature_ids:
        raise DuplicateFeatureError(f"feature {z.feature_id!r} already initialized")
    a, b = std_augmentation_jacobians(state, z)
    cov = a @ state.cov @ a.T + b @ z.noise_cov @ b.T
    aug_mean = GroupState(
        mean.robot_rot,
        mean.robot_pos,
        np.concatenate([mean.feature_rots, (mean.robot_rot @ z.rot)[None]], axis=0),
        np.concatenate([mean.feature_pos,
                        (mean.robot_pos + mean.robot_rot @ z.pos)[None]], axis=0),
        mean.feature_ids + (z.feature_id,),
    )
    return FilterState(aug_mean, symmetrize(cov))
