"""Fuse per-receiver bistatic delays into 3D position fixes.

Each delay observation constrains the target to an ellipsoid with the tx
and rx at the foci; with three or more receivers the intersection is
solved by weighted Levenberg-Marquardt on the range-sum residuals, with an
analytic Jacobian and a coarse-grid fallback initializer. Doppler is used
upstream for detection and tracking only - the solver is delay-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import SPEED_OF_LIGHT, GeometryError, as_vec3

C = SPEED_OF_LIGHT


class UnderdeterminedError(ValueError):
    """Fewer than three usable observations at the fix epoch."""


@dataclass(frozen=True)
class BistaticObservation:
    tx_id: str
    rx_id: str
    time_s: float
    delay_s: float
    sigma_s: float

    def __post_init__(self):
        if self.sigma_s <= 0:
            raise ValueError("observation sigma must be positive")


@dataclass
class PositionFix:
    time_s: float
    position: np.ndarray  # (3,)
    covariance: np.ndarray  # (3, 3)
    rss_residual_s2: float  # unweighted delay-residual sum of squares
    n_obs: int
    converged: bool
    ill_conditioned: bool = False
    ambiguous: bool = False
    iterations: int = 0
    weighted_rss: float = 0.0


def bistatic_range_jacobian(p, p_tx, p_rx) -> tuple[float, np.ndarray]:
    """Range sum R(p) = |p - tx| + |p - rx| and its gradient.

    The gradient is the sum of the two unit vectors pointing from each
    endpoint toward p, so |grad| <= 2 with equality only on the extended
    baseline.
    """
    p, p_tx, p_rx = as_vec3(p), as_vec3(p_tx), as_vec3(p_rx)
    d1 = p - p_tx
    d2 = p - p_rx
    r1 = np.linalg.norm(d1)
    r2 = np.linalg.norm(d2)
    if r1 == 0 or r2 == 0:
        raise GeometryError("point coincides with an endpoint; gradient undefined")
    return float(r1 + r2), d1 / r1 + d2 / r2


def _residuals_jacobian(p, obs, tx_pos, rx_pos):
    """Weighted residual vector and Jacobian in (dimensionless) sigma units."""
    n = len(obs)
    r = np.empty(n)
    jac = np.empty((n, 3))
    for i, ob in enumerate(obs):
        rng, grad = bistatic_range_jacobian(p, tx_pos[i], rx_pos[i])
        w = 1.0 / (C * ob.sigma_s)
        r[i] = (C * ob.delay_s - rng) * w
        jac[i] = -grad * w
    return r, jac


def _grid_init(obs, tx_pos, rx_pos, bounds, step: float = 5.0,
               max_cells: int = 200_000, n_starts: int = 5) -> np.ndarray:
    """Best cells of a coarse grid over the search bounds (weighted RSS).

    The step widens on very large volumes to keep the grid bounded.
    Returns up to n_starts well-separated low-cost cells (best first): an
    ellipsoid intersection can have near-tie local minima, so the solver
    is restarted from each and keeps the lowest final cost.
    """
    spans = [max(hi - lo, step) for lo, hi in bounds]
    while (np.prod([s // step + 1 for s in spans])) > max_cells:
        step *= 1.5
    axes = [np.arange(lo, hi + step, step) for lo, hi in bounds]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    cost = np.zeros(len(pts))
    for i, ob in enumerate(obs):
        rng = (np.linalg.norm(pts - tx_pos[i], axis=1)
               + np.linalg.norm(pts - rx_pos[i], axis=1))
        cost += ((C * ob.delay_s - rng) / (C * ob.sigma_s)) ** 2
    order = np.argsort(cost)
    starts = []
    for idx in order:
        p = pts[idx]
        if all(np.linalg.norm(p - q) > 4 * step for q in starts):
            starts.append(p)
        if len(starts) == n_starts:
            break
    return np.array(starts)


def _default_bounds(tx_pos, rx_pos, margin: float = 40.0):
    nodes = np.vstack([tx_pos, rx_pos])
    lo = nodes.min(axis=0) - margin
    hi = nodes.max(axis=0) + margin
    return list(zip(lo, hi))


def _coplanarity(node_pts: np.ndarray):
    """(max out-of-plane distance, unit normal) of the node constellation."""
    centered = node_pts - node_pts.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=True)
    normal = vt[-1]
    dist = np.abs(centered @ normal)
    return float(dist.max()), normal, node_pts.mean(axis=0)


def localize(observations, node_positions: dict, init=None, bounds=None,
             max_iter: int = 50, step_tol_m: float = 1e-4,
             lm_lambda0: float = 1e-3,
             rescale_covariance: bool = False) -> PositionFix:
    """Weighted nonlinear least squares over bistatic delay observations.

    node_positions maps node id -> position at the common epoch. init may
    be a point or None for the coarse 5 m grid initializer over `bounds`
    (default: node bounding box plus margin). The covariance is the inverse
    Gauss-Newton Hessian; set rescale_covariance to scale it by the reduced
    chi-square when the observation sigmas are only trusted up to a common
    factor (needs n_obs comfortably above 3 to be meaningful).
    """
    obs = list(observations)
    if len(obs) < 3 or len({ob.rx_id for ob in obs}) < 3:
        raise UnderdeterminedError(
            f"3D fix needs >= 3 observations from distinct receivers, got "
            f"{len(obs)} from {len({ob.rx_id for ob in obs})} receivers")
    times = {ob.time_s for ob in obs}
    if max(times) - min(times) > 1e-6:
        raise ValueError("observations are not time-aligned")
    tx_pos = np.array([as_vec3(node_positions[ob.tx_id]) for ob in obs])
    rx_pos = np.array([as_vec3(node_positions[ob.rx_id]) for ob in obs])
    if bounds is None:
        bounds = _default_bounds(tx_pos, rx_pos)
    p = np.array(_grid_init(obs, tx_pos, rx_pos, bounds) if init is None
                 else as_vec3(init), dtype=float)

    lam = lm_lambda0
    r, jac = _residuals_jacobian(p, obs, tx_pos, rx_pos)
    cost = float(r @ r)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        hess = jac.T @ jac
        grad = jac.T @ r
        try:
            step = np.linalg.solve(hess + lam * np.eye(3), -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        r_new, jac_new = _residuals_jacobian(p + step, obs, tx_pos, rx_pos)
        cost_new = float(r_new @ r_new)
        if cost_new <= cost:
            p = p + step
            r, jac, cost = r_new, jac_new, cost_new
            lam = max(lam * 0.5, 1e-12)
            if np.linalg.norm(step) < step_tol_m:
                converged = True
                break
        else:
            lam *= 10.0

    hess = jac.T @ jac
    ill = False
    try:
        cond = np.linalg.cond(hess)
        ill = bool(cond > 1e8)
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        ill = True
        cov = np.full((3, 3), np.nan)
        converged = False
    if rescale_covariance and len(obs) > 3:
        cov = cov * cost / (len(obs) - 3)

    # mirror ambiguity: reflect the solution across the best-fit node plane
    # and see whether the reflected point explains the data just as well
    _, normal, centroid = _coplanarity(np.vstack([tx_pos, rx_pos]))
    p_mirror = p - 2.0 * float((p - centroid) @ normal) * normal
    ambiguous = False
    if np.linalg.norm(p_mirror - p) > 1.0:
        r_mirror, _ = _residuals_jacobian(p_mirror, obs, tx_pos, rx_pos)
        ambiguous = bool(float(r_mirror @ r_mirror) - cost < 9.0)

    resid_s2 = float(np.sum([(ob.delay_s - bistatic_range_jacobian(
        p, tx_pos[i], rx_pos[i])[0] / C) ** 2 for i, ob in enumerate(obs)]))
    return PositionFix(time_s=float(np.mean(list(times))), position=p,
                       covariance=cov, rss_residual_s2=resid_s2, n_obs=len(obs),
                       converged=converged, ill_conditioned=ill,
                       ambiguous=ambiguous, iterations=it, weighted_rss=cost)


def localize_track(per_rx_tracks: dict, tx_id, node_positions_at,
                   min_receivers: int = 3, sigma_floor_s: float = 0.02e-9,
                   bounds=None) -> list[PositionFix]:
    """Per-CPI single-target fusion of confirmed per-receiver tracks.

    per_rx_tracks maps rx_id -> track list from the tracker; tx_id is the
    illuminator id (or a cpi -> tx_id mapping for multi-window schedules);
    node_positions_at(t) returns the id -> position mapping at epoch t. At
    each CPI with confirmed coverage from at least min_receivers receivers
    the confirmed delays are fused, seeding the solver with the previous
    fix; among several confirmed tracks of one receiver the one nearest
    the delay predicted from the previous fix participates.
    """
    by_cpi: dict[int, dict[str, list]] = {}
    times: dict[int, float] = {}
    for rx_id, tracks in per_rx_tracks.items():
        for trk in tracks:
            for pt in trk.history:
                if pt.status not in ("confirmed", "coasting"):
                    continue
                by_cpi.setdefault(pt.cpi_index, {}).setdefault(rx_id, []).append(pt)
                times[pt.cpi_index] = pt.time_s
    fixes: list[PositionFix] = []
    prev = None
    for cpi in sorted(by_cpi):
        t = times[cpi]
        nodes = node_positions_at(t)
        tx = tx_id[cpi] if isinstance(tx_id, dict) else tx_id
        per_rx = by_cpi[cpi]
        if len(per_rx) < min_receivers:
            continue
        obs = []
        for rx_id, pts in per_rx.items():
            pick = pts[0]
            if len(pts) > 1 and prev is not None:
                pred, _ = bistatic_range_jacobian(prev.position, nodes[tx],
                                                  nodes[rx_id])
                pick = min(pts, key=lambda q: abs(q.delay_s - pred / C))
            sigma = max(float(np.sqrt(pick.cov[0, 0])), sigma_floor_s)
            obs.append(BistaticObservation(tx_id=tx, rx_id=rx_id, time_s=t,
                                           delay_s=pick.delay_s, sigma_s=sigma))
        try:
            fix = localize(obs, nodes,
                           init=None if prev is None else prev.position,
                           bounds=bounds)
        except (UnderdeterminedError, GeometryError):
            continue
        if fix.converged:
            fixes.append(fix)
            prev = fix
    return fixes
