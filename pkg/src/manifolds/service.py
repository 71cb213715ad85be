import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from src.dynamics.models import ModelDefinition
from src.dynamics.schemas import OscillatorParams
from src.exceptions import (
    AssumptionViolationError,
    CanardNotFoundError,
    ManifoldError,
    RangeError,
)
from src.manifolds.config import MANIFOLD_SETTINGS
from src.manifolds.newton import NewtonResult, damped_newton
from src.manifolds.schemas import (
    CanardPoint,
    ChartGrid,
    FastManifoldChart,
    FoldPoint,
    OscillatorGeometry,
    Region,
    SearchWindow,
    SlowManifoldChart,
)
from src.utils import FloatArray

logger = logging.getLogger(__name__)

# Manifolds belong to the singular limit: eps_ts = 0 for S, eps_ts = delta = 0 for M.
_EPS = 0.0
_DELTA = 0.0


def _det(jac: FloatArray) -> FloatArray:
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


def _is_attracting(jac: FloatArray) -> FloatArray:
    return np.all(np.linalg.eigvals(jac).real < 0.0, axis=-1)


def _det_tolerance(model: ModelDefinition) -> float:
    if model.has_analytic_fast_jacobian:
        return MANIFOLD_SETTINGS.ROOT_TOLERANCE
    return MANIFOLD_SETTINGS.FD_DET_TOLERANCE


def solve_fast_point(
    model: ModelDefinition,
    mu: FloatArray,
    x: float,
    y: float,
    z: float,
    seed: Tuple[float, float],
) -> NewtonResult:
    """Root of (h1, h2) in (v, u) at fixed (x, y, z)."""

    def residual(point: FloatArray) -> FloatArray:
        return np.array(
            [
                model.evaluate("h1", point[0], point[1], x, y, z, _EPS, _DELTA, mu),
                model.evaluate("h2", point[0], point[1], x, y, z, _EPS, _DELTA, mu),
            ]
        )

    def jacobian(point: FloatArray) -> FloatArray:
        return model.fast_jacobian(point[0], point[1], x, y, z, _EPS, _DELTA, mu)

    return damped_newton(residual, np.array(seed, dtype=np.float64), jac=jacobian)


def _continue_u(
    model: ModelDefinition,
    V: FloatArray,
    X: FloatArray,
    Y: FloatArray,
    Z: FloatArray,
    mu: FloatArray,
) -> FloatArray:
    """u(v) solving h2 = 0 at every node, continued along the voltage scan."""
    U = np.empty_like(V)
    u = np.zeros(V.shape[0])
    for column in range(V.shape[1]):
        v = V[:, column]
        for _ in range(20 if column == 0 else 8):
            value = model.evaluate("h2", v, u, X, Y, Z, _EPS, _DELTA, mu)
            slope = model.fast_jacobian(v, u, X, Y, Z, _EPS, _DELTA, mu)[..., 1, 1]
            safe = np.abs(slope) > 1e-14
            step = np.where(safe, value / np.where(safe, slope, 1.0), 0.0)
            u = u - step
            if np.all(np.abs(step) <= 1e-13 * (1.0 + np.abs(u))):
                break
        U[:, column] = u
    return U


def _bracket_roots(
    model: ModelDefinition,
    mu: FloatArray,
    X: FloatArray,
    Y: FloatArray,
    Z: FloatArray,
    scan: FloatArray,
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Seeds from sign changes of h1(v, u(v)) along the scan, in node blocks."""
    nodes: List[FloatArray] = []
    v_seeds: List[FloatArray] = []
    u_seeds: List[FloatArray] = []
    block = MANIFOLD_SETTINGS.SCAN_BLOCK_NODES
    for start in range(0, X.size, block):
        part = slice(start, min(start + block, X.size))
        V = np.broadcast_to(scan, (X[part].size, scan.size))
        U = _continue_u(model, V, X[part], Y[part], Z[part], mu)
        R = model.evaluate(
            "h1", V, U, X[part, None], Y[part, None], Z[part, None], _EPS, _DELTA, mu
        )
        bracket = np.isfinite(R[:, :-1]) & np.isfinite(R[:, 1:]) & (R[:, :-1] * R[:, 1:] <= 0.0)
        rows, columns = np.nonzero(bracket)
        r0, r1 = R[rows, columns], R[rows, columns + 1]
        weight = np.where(r1 != r0, -r0 / np.where(r1 != r0, r1 - r0, 1.0), 0.5)
        nodes.append(rows + start)
        v_seeds.append(V[rows, columns] + weight * (V[rows, columns + 1] - V[rows, columns]))
        u_seeds.append(U[rows, columns] + weight * (U[rows, columns + 1] - U[rows, columns]))
    return np.concatenate(nodes), np.concatenate(v_seeds), np.concatenate(u_seeds)


def _polish_roots(
    model: ModelDefinition,
    mu: FloatArray,
    v: FloatArray,
    u: FloatArray,
    X: FloatArray,
    Y: FloatArray,
    Z: FloatArray,
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Vectorised Newton on (h1, h2); returns (v, u, residual)."""
    tol = MANIFOLD_SETTINGS.ROOT_TOLERANCE
    residual = np.full(v.shape, np.inf)
    for _ in range(MANIFOLD_SETTINGS.NEWTON_MAX_ITER):
        F1 = model.evaluate("h1", v, u, X, Y, Z, _EPS, _DELTA, mu)
        F2 = model.evaluate("h2", v, u, X, Y, Z, _EPS, _DELTA, mu)
        residual = np.maximum(np.abs(F1), np.abs(F2))
        active = ~(residual <= tol)
        if not np.any(active):
            break
        jac = model.fast_jacobian(v, u, X, Y, Z, _EPS, _DELTA, mu)
        det = _det(jac)
        usable = active & (np.abs(det) > 1e-300) & np.isfinite(det)
        safe_det = np.where(usable, det, 1.0)
        dv = (jac[..., 1, 1] * F1 - jac[..., 0, 1] * F2) / safe_det
        du = (-jac[..., 1, 0] * F1 + jac[..., 0, 0] * F2) / safe_det
        v = np.where(usable, v - dv, v)
        u = np.where(usable, u - du, u)
    return v, u, residual


def solve_fast_manifold(
    model: ModelDefinition,
    params: OscillatorParams,
    region: Region,
    grid: ChartGrid,
    oscillator: int = 0,
) -> List[FastManifoldChart]:
    """Tabulate every sheet of {h1 = h2 = 0} over the (x, y, z) grid."""
    mu = params.as_array()
    xs, ys, zs = grid.axes(region)
    shape = (grid.nx, grid.ny, grid.nz)
    X, Y, Z = (axis.reshape(-1) for axis in np.meshgrid(xs, ys, zs, indexing="ij"))
    scan = np.linspace(
        MANIFOLD_SETTINGS.V_SCAN_MIN, MANIFOLD_SETTINGS.V_SCAN_MAX, MANIFOLD_SETTINGS.V_SCAN_POINTS
    )
    nodes, v_seed, u_seed = _bracket_roots(model, mu, X, Y, Z, scan)
    v_root, u_root, residual = _polish_roots(
        model, mu, v_seed, u_seed, X[nodes], Y[nodes], Z[nodes]
    )

    holes: set[Tuple[int, int, int]] = set()
    for index in np.flatnonzero(~(residual <= MANIFOLD_SETTINGS.ROOT_TOLERANCE)):
        node = int(nodes[index])
        fallback = solve_fast_point(
            model, mu, float(X[node]), float(Y[node]), float(Z[node]),
            (float(v_seed[index]), float(u_seed[index])),
        )
        if fallback.converged:
            v_root[index], u_root[index] = fallback.x
            residual[index] = fallback.residual
        else:
            holes.add(tuple(int(item) for item in np.unravel_index(node, shape)))  # type: ignore[arg-type]

    good = residual <= MANIFOLD_SETTINGS.ROOT_TOLERANCE
    if not np.any(good):
        raise ManifoldError(
            f"no root of (h1, h2) found anywhere in region {region.model_dump()} "
            f"for oscillator {oscillator}"
        )
    if holes:
        logger.warning(f"Fast manifold of oscillator {oscillator}: {len(holes)} unconverged nodes")

    root_node, root_v, root_u, root_res = _deduplicate(
        nodes[good], v_root[good], u_root[good], residual[good]
    )
    jac = model.fast_jacobian(
        root_v, root_u, X[root_node], Y[root_node], Z[root_node], _EPS, _DELTA, mu
    )
    root_sign = np.sign(_det(jac))
    root_attracting = _is_attracting(jac)

    labels = _link_sheets(root_node, root_v, root_sign, shape)
    sheet_ids = sorted(set(labels.tolist()), key=lambda label: float(np.mean(root_v[labels == label])))
    charts: List[FastManifoldChart] = []
    for sheet, label in enumerate(sheet_ids):
        phi_v = np.full(shape, np.nan)
        phi_u = np.full(shape, np.nan)
        attracting = np.zeros(shape, dtype=bool)
        res = np.full(shape, np.nan)
        for index in np.flatnonzero(labels == label):
            position = np.unravel_index(int(root_node[index]), shape)
            if np.isfinite(phi_v[position]):
                continue
            phi_v[position] = root_v[index]
            phi_u[position] = root_u[index]
            attracting[position] = bool(root_attracting[index])
            res[position] = root_res[index]
        charts.append(
            FastManifoldChart(
                oscillator=oscillator,
                sheet=sheet,
                xs=xs,
                ys=ys,
                zs=zs,
                phi_v=phi_v,
                phi_u=phi_u,
                attracting=attracting,
                residual=res,
                holes=sorted(holes),
            )
        )
    logger.info(
        f"Fast manifold of oscillator {oscillator}: {len(charts)} sheets, "
        f"{int(good.sum())} roots on {X.size} nodes"
    )
    return charts


def _deduplicate(
    nodes: FloatArray, v: FloatArray, u: FloatArray, residual: FloatArray
) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    order = np.lexsort((v, nodes))
    nodes, v, u, residual = nodes[order], v[order], u[order], residual[order]
    keep = np.ones(nodes.size, dtype=bool)
    keep[1:] = (nodes[1:] != nodes[:-1]) | (np.abs(v[1:] - v[:-1]) > 1e-7 * (1.0 + np.abs(v[1:])))
    return nodes[keep], v[keep], u[keep], residual[keep]


def _link_sheets(
    root_node: FloatArray,
    root_v: FloatArray,
    root_sign: FloatArray,
    shape: Tuple[int, int, int],
) -> FloatArray:
    """Connected components of roots linked across neighbouring grid nodes."""
    by_node: Dict[int, List[int]] = {}
    for index, node in enumerate(root_node.tolist()):
        by_node.setdefault(int(node), []).append(index)
    rows: List[int] = []
    cols: List[int] = []
    for node, members in by_node.items():
        position = np.unravel_index(node, shape)
        for axis in range(3):
            if position[axis] + 1 >= shape[axis]:
                continue
            neighbour_position = list(position)
            neighbour_position[axis] += 1
            neighbour = int(np.ravel_multi_index(tuple(neighbour_position), shape))
            candidates = by_node.get(neighbour, [])
            for member in members:
                matches = [
                    other
                    for other in candidates
                    if root_sign[other] == root_sign[member]
                    and abs(root_v[other] - root_v[member]) <= MANIFOLD_SETTINGS.SHEET_LINK_TOLERANCE
                ]
                if matches:
                    best = min(matches, key=lambda other: abs(root_v[other] - root_v[member]))
                    rows.append(member)
                    cols.append(best)
    size = root_node.size
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=False)
    return labels


def _fold_residual(
    model: ModelDefinition, mu: FloatArray, y: float, z: float
):
    def residual(point: FloatArray) -> FloatArray:
        v, u, x = point
        jac = model.fast_jacobian(v, u, x, y, z, _EPS, _DELTA, mu)
        return np.array(
            [
                model.evaluate("h1", v, u, x, y, z, _EPS, _DELTA, mu),
                model.evaluate("h2", v, u, x, y, z, _EPS, _DELTA, mu),
                _det(jac),
            ]
        )

    return residual


def _refine_fold(
    model: ModelDefinition,
    mu: FloatArray,
    y: float,
    z: float,
    seed: Tuple[float, float, float],
) -> Optional[NewtonResult]:
    tol = MANIFOLD_SETTINGS.ROOT_TOLERANCE
    result = damped_newton(
        _fold_residual(model, mu, y, z),
        np.array(seed, dtype=np.float64),
        residual_tol=np.array([tol, tol, _det_tolerance(model)]),
    )
    return result if result.converged else None


def _bisect_sheet_end(
    model: ModelDefinition,
    mu: FloatArray,
    chart: FastManifoldChart,
    inside: Tuple[int, int, int],
    outside: Tuple[int, int, int],
) -> Tuple[float, float, float]:
    """Shrink [inside, outside] in x while the sheet root still continues."""
    _, j, k = inside
    y, z = float(chart.ys[j]), float(chart.zs[k])
    x_in, x_out = float(chart.xs[inside[0]]), float(chart.xs[outside[0]])
    v, u = float(chart.phi_v[inside]), float(chart.phi_u[inside])
    reference = np.sign(_det(model.fast_jacobian(v, u, x_in, y, z, _EPS, _DELTA, mu)))
    for _ in range(MANIFOLD_SETTINGS.FOLD_BISECTION_STEPS):
        x_mid = 0.5 * (x_in + x_out)
        result = solve_fast_point(model, mu, x_mid, y, z, (v, u))
        if result.converged:
            v_mid, u_mid = (float(item) for item in result.x)
            sign = np.sign(_det(model.fast_jacobian(v_mid, u_mid, x_mid, y, z, _EPS, _DELTA, mu)))
            if sign == reference and abs(v_mid - v) <= MANIFOLD_SETTINGS.SHEET_LINK_TOLERANCE:
                x_in, v, u = x_mid, v_mid, u_mid
                continue
        x_out = x_mid
    return v, u, x_in


def find_fold_curve(
    chart: FastManifoldChart,
    model: ModelDefinition,
    params: OscillatorParams,
) -> List[FoldPoint]:
    """Fold points on one sheet: determinant sign changes and sheet ends along x."""
    mu = params.as_array()
    present = chart.present
    nx, ny, nz = present.shape
    X, Y, Z = np.meshgrid(chart.xs, chart.ys, chart.zs, indexing="ij")
    dets = np.where(
        present,
        _det(model.fast_jacobian(np.nan_to_num(chart.phi_v), np.nan_to_num(chart.phi_u), X, Y, Z, _EPS, _DELTA, mu)),
        np.nan,
    )
    dx = float(chart.xs[1] - chart.xs[0])
    found: Dict[Tuple[float, ...], FoldPoint] = {}
    for j in range(ny):
        for k in range(nz):
            y, z = float(chart.ys[j]), float(chart.zs[k])
            for i in range(nx - 1):
                a, b = (i, j, k), (i + 1, j, k)
                seed: Optional[Tuple[float, float, float]] = None
                if present[a] and present[b]:
                    if np.sign(dets[a]) != np.sign(dets[b]):
                        seed = (
                            0.5 * float(chart.phi_v[a] + chart.phi_v[b]),
                            0.5 * float(chart.phi_u[a] + chart.phi_u[b]),
                            0.5 * float(chart.xs[i] + chart.xs[i + 1]),
                        )
                elif present[a] != present[b]:
                    inside, outside = (a, b) if present[a] else (b, a)
                    seed = _bisect_sheet_end(model, mu, chart, inside, outside)
                if seed is None:
                    continue
                result = _refine_fold(model, mu, y, z, seed)
                if result is None:
                    logger.debug(f"Fold refinement failed near x={seed[2]:.6g}, y={y:.6g}, z={z:.6g}")
                    continue
                v, u, x = (float(item) for item in result.x)
                if not chart.xs[i] - dx <= x <= chart.xs[i + 1] + dx:
                    continue
                point = FoldPoint(v=v, u=u, x=x, y=y, z=z, oscillator=chart.oscillator)
                key = tuple(np.round(point.as_array(), MANIFOLD_SETTINGS.DEDUP_DECIMALS).tolist())
                found.setdefault(key, point)
    folds = sorted(found.values(), key=lambda point: (point.x, point.y, point.z))
    logger.info(f"Sheet {chart.sheet} of oscillator {chart.oscillator}: {len(folds)} fold points")
    return folds


def _slow_residual(model: ModelDefinition, mu: FloatArray, y: float, z: float):
    def residual(point: FloatArray) -> FloatArray:
        v, u, x = point
        return np.array(
            [
                model.evaluate("h1", v, u, x, y, z, _EPS, _DELTA, mu),
                model.evaluate("h2", v, u, x, y, z, _EPS, _DELTA, mu),
                model.evaluate("f", v, u, x, y, z, _EPS, _DELTA, mu),
            ]
        )

    return residual


def solve_slow_manifold(
    model: ModelDefinition,
    params: OscillatorParams,
    fast_chart: FastManifoldChart,
) -> SlowManifoldChart:
    """Solve f = 0 along each x-line of the sheet, giving psi(y, z)."""
    mu = params.as_array()
    ny, nz = fast_chart.ys.size, fast_chart.zs.size
    psi = np.full((3, ny, nz), np.nan)
    attracting = np.zeros((ny, nz), dtype=bool)
    residual = np.full((ny, nz), np.nan)
    min_abs_dfdx = np.inf
    for j in range(ny):
        for k in range(nz):
            y, z = float(fast_chart.ys[j]), float(fast_chart.zs[k])
            seed = _bracket_slow_root(model, mu, fast_chart, j, k)
            if seed is None:
                continue
            result = damped_newton(_slow_residual(model, mu, y, z), np.array(seed))
            if not result.converged:
                logger.warning(f"Slow manifold Newton failed at y={y:.6g}, z={z:.6g}")
                continue
            v, u, x = (float(item) for item in result.x)
            slope = float(model.df_dx(v, u, x, y, z, _EPS, _DELTA, mu))
            if abs(slope) < MANIFOLD_SETTINGS.ROOT_TOLERANCE:
                raise AssumptionViolationError(
                    "transversality",
                    f"df/dx vanishes on S at (v, u, x, y, z)=({v:.6g}, {u:.6g}, {x:.6g}, {y:.6g}, {z:.6g})",
                )
            min_abs_dfdx = min(min_abs_dfdx, abs(slope))
            psi[:, j, k] = (v, u, x)
            residual[j, k] = result.residual
            attracting[j, k] = bool(
                _is_attracting(model.fast_jacobian(v, u, x, y, z, _EPS, _DELTA, mu))
            )
    if not np.any(np.isfinite(psi[2])):
        raise AssumptionViolationError(
            "slow-manifold",
            f"f has no root on sheet {fast_chart.sheet} of oscillator {fast_chart.oscillator}",
        )
    return SlowManifoldChart(
        oscillator=fast_chart.oscillator,
        sheet=fast_chart.sheet,
        ys=fast_chart.ys,
        zs=fast_chart.zs,
        psi_v=psi[0],
        psi_u=psi[1],
        psi_x=psi[2],
        attracting=attracting,
        residual=residual,
        min_abs_dfdx=float(min_abs_dfdx),
    )


def _bracket_slow_root(
    model: ModelDefinition,
    mu: FloatArray,
    chart: FastManifoldChart,
    j: int,
    k: int,
) -> Optional[Tuple[float, float, float]]:
    y, z = float(chart.ys[j]), float(chart.zs[k])
    v, u, xs = chart.phi_v[:, j, k], chart.phi_u[:, j, k], chart.xs
    values = np.where(
        np.isfinite(v),
        model.evaluate("f", np.nan_to_num(v), np.nan_to_num(u), xs, y, z, _EPS, _DELTA, mu),
        np.nan,
    )
    for i in range(xs.size - 1):
        f0, f1 = values[i], values[i + 1]
        if not (np.isfinite(f0) and np.isfinite(f1)) or f0 * f1 > 0.0:
            continue
        weight = 0.5 if f1 == f0 else f0 / (f0 - f1)
        return (
            float(v[i] + weight * (v[i + 1] - v[i])),
            float(u[i] + weight * (u[i + 1] - u[i])),
            float(xs[i] + weight * (xs[i + 1] - xs[i])),
        )
    return None


def slow_point(
    model: ModelDefinition,
    params: OscillatorParams,
    chart: SlowManifoldChart,
    y: float,
    z: float,
) -> Tuple[float, float, float]:
    """psi(y, z) by Newton, seeded from the chart column nearest in z."""
    for value, (low, high), name in ((y, chart.y_range, "y"), (z, chart.z_range, "z")):
        slack = 1e-9 * (1.0 + abs(value))
        if not low - slack <= value <= high + slack:
            raise RangeError(name, value, low, high)
    k = int(np.argmin(np.abs(chart.zs - z)))
    column = np.isfinite(chart.psi_x[:, k])
    if not np.any(column):
        raise ManifoldError(f"slow chart has no points at z={chart.zs[k]:.6g}")
    ys = chart.ys[column]
    seed = np.array(
        [np.interp(y, ys, values[column, k]) for values in (chart.psi_v, chart.psi_u, chart.psi_x)]
    )
    result = damped_newton(_slow_residual(model, params.as_array(), y, z), seed)
    if not result.converged:
        raise ManifoldError(f"slow manifold point not found at y={y:.6g}, z={z:.6g}")
    v, u, x = (float(item) for item in result.x)
    return v, u, x


def find_canard_point(
    model: ModelDefinition,
    params: OscillatorParams,
    fast_chart: FastManifoldChart,
    slow_chart: SlowManifoldChart,
    folds: Optional[Sequence[FoldPoint]] = None,
    window: Optional[SearchWindow] = None,
    index: int = 0,
) -> CanardPoint:
    """Attracting point of S cap M nearest the fold curve (``index`` picks alternatives)."""
    if folds is None:
        folds = find_fold_curve(fast_chart, model, params)
    window = window or SearchWindow()
    fold_points = np.array([point.as_array() for point in folds]).reshape(-1, 5)
    candidates: List[Tuple[float, int, int, FloatArray]] = []
    for j, y in enumerate(slow_chart.ys):
        for k, z in enumerate(slow_chart.zs):
            if not (slow_chart.present[j, k] and slow_chart.attracting[j, k]):
                continue
            if not window.contains(float(y), float(z)):
                continue
            point = np.array(
                [slow_chart.psi_v[j, k], slow_chart.psi_u[j, k], slow_chart.psi_x[j, k], y, z]
            )
            distance = (
                float(np.min(np.linalg.norm(fold_points - point, axis=1)))
                if fold_points.size
                else float("inf")
            )
            candidates.append((round(distance, 12), j, k, point))
    if not candidates:
        raise CanardNotFoundError(
            slow_chart.oscillator, "no attracting intersection of S and M inside the search window"
        )
    candidates.sort(key=lambda item: (item[0], item[1], item[2]))
    if not 0 <= index < len(candidates):
        raise CanardNotFoundError(
            slow_chart.oscillator, f"candidate {index} requested, {len(candidates)} available"
        )
    distance, _, _, point = candidates[index]
    v, u, x = slow_point(model, params, slow_chart, float(point[3]), float(point[4]))
    canard = CanardPoint(
        v=v,
        u=u,
        x=x,
        y=float(point[3]),
        z=float(point[4]),
        oscillator=slow_chart.oscillator,
        fold_distance=distance,
    )
    logger.info(f"Canard point of oscillator {canard.oscillator}: {canard.as_array().round(6).tolist()}")
    return canard


def find_jump_point(
    model: ModelDefinition,
    params: OscillatorParams,
    folds: Sequence[FoldPoint],
    z: float,
    oscillator: int = 0,
) -> FoldPoint:
    """Fold point where M meets the fold: (h1, h2, det, f) = 0 at fixed z."""
    if not folds:
        raise AssumptionViolationError(
            "fold", f"oscillator {oscillator} has no fold on its attracting sheet"
        )
    mu = params.as_array()
    tol = MANIFOLD_SETTINGS.ROOT_TOLERANCE

    def residual(point: FloatArray) -> FloatArray:
        v, u, x, y = point
        jac = model.fast_jacobian(v, u, x, y, z, _EPS, _DELTA, mu)
        return np.array(
            [
                model.evaluate("h1", v, u, x, y, z, _EPS, _DELTA, mu),
                model.evaluate("h2", v, u, x, y, z, _EPS, _DELTA, mu),
                _det(jac),
                model.evaluate("f", v, u, x, y, z, _EPS, _DELTA, mu),
            ]
        )

    def mismatch(point: FoldPoint) -> float:
        f_value = float(model.evaluate("f", point.v, point.u, point.x, point.y, point.z, _EPS, _DELTA, mu))
        return abs(f_value) + abs(point.z - z)

    for seed in sorted(folds, key=mismatch)[:5]:
        result = damped_newton(
            residual,
            np.array([seed.v, seed.u, seed.x, seed.y]),
            residual_tol=np.array([tol, tol, _det_tolerance(model), tol]),
        )
        if result.converged:
            v, u, x, y = (float(item) for item in result.x)
            return FoldPoint(v=v, u=u, x=x, y=y, z=z, oscillator=oscillator)
    raise AssumptionViolationError(
        "fold", f"slow manifold of oscillator {oscillator} does not reach the fold at z={z:.6g}"
    )


class BranchClassifier:
    """Nearest-chart-node branch membership, one KD-tree per oscillator."""

    def __init__(self, charts: Sequence[Sequence[FastManifoldChart]]) -> None:
        self._trees: List[cKDTree] = []
        self._flags: List[FloatArray] = []
        for oscillator_charts in charts:
            pieces = [chart.nodes() for chart in oscillator_charts]
            points = np.vstack([piece[0] for piece in pieces])
            flags = np.concatenate([piece[1] for piece in pieces])
            self._trees.append(cKDTree(points))
            self._flags.append(flags)

    @property
    def n_oscillators(self) -> int:
        return len(self._trees)

    def attracting(self, states: FloatArray) -> FloatArray:
        """Flags with the leading shape of ``states`` (..., N, 5)."""
        states = np.asarray(states, dtype=np.float64)
        if states.shape[-2] != self.n_oscillators:
            raise ManifoldError(
                f"classifier covers {self.n_oscillators} oscillators, states have {states.shape[-2]}"
            )
        out = np.empty(states.shape[:-1], dtype=bool)
        for oscillator, (tree, flags) in enumerate(zip(self._trees, self._flags)):
            rows = states[..., oscillator, :].reshape(-1, 5)
            _, nearest = tree.query(rows)
            out[..., oscillator] = flags[nearest].reshape(states.shape[:-2])
        return out


def select_attracting_chart(
    model: ModelDefinition,
    params: OscillatorParams,
    charts: Sequence[FastManifoldChart],
) -> Tuple[int, SlowManifoldChart]:
    """First sheet, by attracting share, on which M has a transversal intersection."""
    order = sorted(
        range(len(charts)),
        key=lambda index: (-charts[index].attracting_fraction, float(np.nanmean(charts[index].phi_v))),
    )
    for index in order:
        if charts[index].attracting_fraction == 0.0:
            continue
        try:
            return index, solve_slow_manifold(model, params, charts[index])
        except AssumptionViolationError as exc:
            if exc.assumption != "slow-manifold":
                raise
    raise AssumptionViolationError(
        "slow-manifold", "M does not meet any attracting sheet inside the region"
    )


def analyze_oscillator(
    model: ModelDefinition,
    params: OscillatorParams,
    region: Region,
    grid: ChartGrid,
    oscillator: int = 0,
    window: Optional[SearchWindow] = None,
    index: int = 0,
) -> OscillatorGeometry:
    charts = solve_fast_manifold(model, params, region, grid, oscillator)
    chart_index, slow_chart = select_attracting_chart(model, params, charts)
    folds = find_fold_curve(charts[chart_index], model, params)
    canard = find_canard_point(
        model, params, charts[chart_index], slow_chart, folds=folds, window=window, index=index
    )
    jump = find_jump_point(model, params, folds, canard.z, oscillator)
    return OscillatorGeometry(
        oscillator=oscillator,
        charts=charts,
        chart_index=chart_index,
        folds=folds,
        slow_chart=slow_chart,
        canard=canard,
        jump=jump,
    )
