"""Non-rigid mesh registration via an embedded deformation graph, and
template surface fitting through a diffusion reparameterization.

A sparse set of nodes (a greedy epsilon-net over graph geodesic distance)
carries per-node rigid transforms; vertices move as normalized
cubic-falloff blends of their K nearest nodes.  Template fitting instead
optimizes the latent u = (I + alpha L) V so steps diffuse across the mesh.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.sparse import identity as sparse_identity
from scipy.sparse.linalg import splu

from .ddf import RefGenConfig, generate_reference_points
from .errors import InvalidInputError
from .geometry import (
    MeshIndex,
    TriangleMesh,
    combinatorial_laplacian,
    geodesic_distance_matrix,
    vertex_mean_incident_edge_length,
)
from .metric import MetricConfig, ddm_grad, evaluate_field
from .optim import OptimConfig, optimize
from .rotation import so3_exp, so3_left_jacobian


@dataclasses.dataclass(eq=False)
class DeformationGraph:
    """Deformation nodes, per-vertex blending weights, per-node transforms.

    Attributes:
        node_vertex_indices: (J,) source vertex index of each node.
        node_positions: (J, 3) node rest positions.
        epsilon: support radius of the cubic falloff.
        neighbor_ids: (V, K) node indices blended into each vertex.
        neighbor_weights: (V, K) raw (unnormalized) blending weights.
        omega, t: (J, 3) per-node axis-angle and translation parameters.
    """

    node_vertex_indices: np.ndarray
    node_positions: np.ndarray
    epsilon: float
    neighbor_ids: np.ndarray
    neighbor_weights: np.ndarray
    omega: np.ndarray
    t: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_vertex_indices)


def build_deformation_graph(
    mesh: TriangleMesh, epsilon: float, k: int = 5, rng=None
) -> DeformationGraph:
    """Greedy epsilon-net node selection with cubic-falloff vertex weights.

    Repeatedly picks a random remaining vertex as a node and deletes every
    vertex closer than epsilon (graph geodesic), so nodes end up pairwise
    >= epsilon apart while every vertex keeps a node strictly within
    epsilon.  Weights: w = max(0, (1 - d^2/eps^2)^3) over the K nearest
    nodes; identity transforms.
    """
    if epsilon <= 0:
        raise InvalidInputError("epsilon must be positive")
    if k < 1:
        raise InvalidInputError("node neighbor count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    n = mesh.n_vertices
    alive = np.ones(n, dtype=bool)
    nodes = []
    while alive.any():
        ids = np.flatnonzero(alive)
        v = int(ids[rng.integers(len(ids))])
        nodes.append(v)
        d = geodesic_distance_matrix(mesh, [v], cutoff=epsilon)[0]
        alive[d < epsilon] = False
        alive[v] = False

    nodes = np.asarray(nodes, dtype=np.int64)
    j = len(nodes)
    dist = geodesic_distance_matrix(mesh, nodes, cutoff=epsilon)  # (J, V)
    dist = np.where(np.isfinite(dist), dist, np.inf).T  # (V, J)

    kk = min(k, j)
    order = np.lexsort((np.broadcast_to(np.arange(j), (n, j)), dist), axis=-1)[:, :kk]
    rows = np.arange(n)[:, None]
    dsel = dist[rows, order]
    w = np.where(
        np.isfinite(dsel), np.maximum(0.0, (1.0 - dsel**2 / epsilon**2)) ** 3, 0.0
    )
    if not (w.sum(axis=1) > 0).all():
        raise InvalidInputError(
            "a vertex has no node within epsilon; the deletion rule should prevent this"
        )
    return DeformationGraph(
        node_vertex_indices=nodes,
        node_positions=mesh.vertices[nodes].copy(),
        epsilon=float(epsilon),
        neighbor_ids=order.astype(np.int64),
        neighbor_weights=w,
        omega=np.zeros((j, 3)),
        t=np.zeros((j, 3)),
    )


def _blend(graph: DeformationGraph, vertices: np.ndarray, rotations: np.ndarray):
    """Normalized blend; returns (deformed, rel_rotated, wbar) for reuse.

    The per-node target R(v - g) + g + t is accumulated as the displacement
    (R - I)(v - g) + t so identity parameters reproduce the input exactly.
    """
    wsum = graph.neighbor_weights.sum(axis=1)
    if not (wsum > 0).all():
        raise InvalidInputError("deformation graph leaves a vertex with zero weight")
    wbar = graph.neighbor_weights / wsum[:, None]
    nid = graph.neighbor_ids
    g = graph.node_positions[nid]  # (V, K, 3)
    rel = vertices[:, None, :] - g
    rot_minus = np.einsum("vkab,vkb->vka", (rotations - np.eye(3))[nid], rel)
    disp = rot_minus + graph.t[nid]
    deformed = vertices + (graph.neighbor_weights[:, :, None] * disp).sum(axis=1) / wsum[:, None]
    return deformed, rot_minus + rel, wbar


def deform_vertices(mesh: TriangleMesh, graph: DeformationGraph) -> np.ndarray:
    """Apply the graph's current transforms to the mesh vertices."""
    rotations = np.stack([so3_exp(w) for w in graph.omega])
    deformed, _, _ = _blend(graph, mesh.vertices, rotations)
    return deformed


def _blend_backward(graph, rot, wbar, g_vertices):
    """Chain vertex cotangents to (omega, t) node parameters."""
    j = graph.n_nodes
    nid = graph.neighbor_ids
    d_t = np.zeros((j, 3))
    d_omega_pre = np.zeros((j, 3))
    contrib_t = wbar[:, :, None] * g_vertices[:, None, :]
    np.add.at(d_t, nid.ravel(), contrib_t.reshape(-1, 3))
    cross = np.cross(rot, g_vertices[:, None, :])
    np.add.at(d_omega_pre, nid.ravel(), (wbar[:, :, None] * cross).reshape(-1, 3))
    d_omega = np.empty((j, 3))
    for a in range(j):
        d_omega[a] = so3_left_jacobian(graph.omega[a]).T @ d_omega_pre[a]
    return d_omega, d_t


def smooth_reg_mesh(mesh: TriangleMesh, deformed: np.ndarray) -> float:
    """Mean pairwise L2 difference of vertex offsets within each face."""
    value, _ = smooth_reg_mesh_grad(mesh, deformed)
    return value


def smooth_reg_mesh_grad(mesh: TriangleMesh, deformed: np.ndarray):
    """Value and gradient with respect to the deformed vertices.

    Offsets delta = deformed - rest; for each face the three pairwise
    offset differences contribute their norms, averaged over 3|F|.
    """
    delta = deformed - mesh.vertices
    f = mesh.faces
    scale = 1.0 / (3.0 * len(f))
    grad = np.zeros_like(delta)
    total = 0.0
    for a, b in ((0, 1), (0, 2), (1, 2)):
        e = delta[f[:, a]] - delta[f[:, b]]
        ln = np.linalg.norm(e, axis=1)
        total += ln.sum()
        u = e / np.where(ln == 0.0, 1.0, ln)[:, None]
        u[ln == 0.0] = 0.0
        np.add.at(grad, f[:, a], scale * u)
        np.add.at(grad, f[:, b], -scale * u)
    return float(scale * total), grad


@dataclasses.dataclass
class DeformRegConfig:
    metric: MetricConfig
    refgen: RefGenConfig
    optim: OptimConfig
    lam: float = 500.0
    k_nodes: int = 5
    epsilon: float = None  # default: 5 x mean edge length of the source
    graph_seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInputError("smoothness weight must be >= 0")


def register_nonrigid(src: TriangleMesh, tgt: TriangleMesh, cfg: DeformRegConfig,
                      workers: int = 1, backend=None):
    """Fit the source mesh to the target by optimizing all node transforms.

    Objective: metric(deformed src, tgt, Q) + lam * smooth_reg_mesh.
    Returns (graph with final parameters, deformed mesh, trace).
    """
    eps = cfg.epsilon if cfg.epsilon is not None else 5.0 * src.mean_edge_length
    graph = build_deformation_graph(
        src, eps, cfg.k_nodes, np.random.default_rng(cfg.graph_seed)
    )
    q = generate_reference_points(tgt, cfg.refgen)
    tgt_field = evaluate_field(tgt, q.points, cfg.metric, workers, backend)
    moving_index = MeshIndex(src, backend=backend)
    j = graph.n_nodes

    def objective(x):
        if not np.isfinite(x).all():
            return np.inf, np.zeros_like(x)
        graph.omega = x[: 3 * j].reshape(j, 3)
        graph.t = x[3 * j :].reshape(j, 3)
        rotations = np.stack([so3_exp(w) for w in graph.omega])
        deformed, rot, wbar = _blend(graph, src.vertices, rotations)
        # finite params can still overflow into non-finite geometry
        if not np.isfinite(deformed).all():
            return np.inf, np.zeros_like(x)
        moving_index.refit(deformed)
        value, grad = ddm_grad(
            None, moving_index, q, cfg.metric, workers, backend, fixed_field=tgt_field
        )
        sval, sgrad = smooth_reg_mesh_grad(src, deformed)
        g_vertices = grad.coords + cfg.lam * sgrad
        d_omega, d_t = _blend_backward(graph, rot, wbar, g_vertices)
        return value.value + cfg.lam * sval, np.concatenate(
            [d_omega.ravel(), d_t.ravel()]
        )

    trace = optimize(objective, np.zeros(6 * j), cfg.optim)
    graph.omega = trace.final_params[: 3 * j].reshape(j, 3)
    graph.t = trace.final_params[3 * j :].reshape(j, 3)
    deformed = deform_vertices(src, graph)
    return graph, src.with_vertices(deformed), trace


class DiffusionSystem:
    """Latent reparameterization u = (I + alpha L) V with a frozen factorization.

    L is the combinatorial Laplacian of the mesh edges, so the system is
    symmetric positive definite for alpha >= 0; the pullback of a vertex
    cotangent is a solve with the same matrix.
    """

    def __init__(self, mesh: TriangleMesh, alpha: float):
        if alpha < 0:
            raise InvalidInputError("alpha must be >= 0")
        self.alpha = float(alpha)
        n = mesh.n_vertices
        lap = combinatorial_laplacian(n, mesh.unique_edges)
        self.matrix = (sparse_identity(n, format="csr") + alpha * lap).tocsc()
        try:
            self._factor = splu(self.matrix)
        except RuntimeError as exc:
            raise InvalidInputError(f"diffusion system factorization failed: {exc}")

    def to_latent(self, vertices: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ vertices)

    def to_vertices(self, u: np.ndarray) -> np.ndarray:
        return self._factor.solve(u)

    def pullback(self, g_vertices: np.ndarray) -> np.ndarray:
        """dL/du given dL/dV'; the matrix is symmetric so one solve suffices."""
        return self._factor.solve(g_vertices)


def two_ring_edge_incidence(mesh: TriangleMesh):
    """(V, E) sparse 0/1 matrix: edge e is in vertex v's two-ring pool.

    An edge belongs to the pool when both its endpoints lie within two
    graph hops of v.  Rows are normalized on use, not here.
    """
    from scipy.sparse import csr_matrix

    n = mesh.n_vertices
    e = mesh.unique_edges
    ones = np.ones(len(e), dtype=np.int8)
    adj = csr_matrix(
        (
            np.concatenate([ones, ones]),
            (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]])),
        ),
        shape=(n, n),
        dtype=np.int8,
    )
    reach = sparse_identity(n, format="csr", dtype=np.int8) + adj + adj @ adj
    reach.data = np.ones_like(reach.data)
    both = reach[:, e[:, 0]].multiply(reach[:, e[:, 1]])
    both.data = np.ones_like(both.data)
    return both.tocsr()


def density_adaptation_reg(vertices, mesh: TriangleMesh, lbar_a, lbar_k,
                           lambda1: float, lambda2: float) -> float:
    """lambda1 * E(V, global target) + lambda2 * E(V, per-vertex target).

    E = mean over vertices of (l(v) - target)^2 with l(v) the mean incident
    edge length.  Targets are treated as constants.
    """
    value, _ = density_adaptation_reg_grad(vertices, mesh, lbar_a, lbar_k, lambda1, lambda2)
    return value


def density_adaptation_reg_grad(vertices, mesh: TriangleMesh, lbar_a, lbar_k,
                                lambda1: float, lambda2: float):
    """As density_adaptation_reg, returning (value, gradient w.r.t. vertices)."""
    edges = mesh.unique_edges
    n = vertices.shape[0]
    l_v = vertex_mean_incident_edge_length(vertices, edges)
    diff_a = l_v - lbar_a
    diff_k = l_v - lbar_k
    value = lambda1 * float(np.mean(diff_a**2)) + lambda2 * float(np.mean(diff_k**2))

    deg = np.zeros(n)
    np.add.at(deg, edges[:, 0], 1.0)
    np.add.at(deg, edges[:, 1], 1.0)
    deg = np.where(deg == 0.0, 1.0, deg)
    cv = (2.0 / n) * (lambda1 * diff_a + lambda2 * diff_k) / deg
    d = vertices[edges[:, 0]] - vertices[edges[:, 1]]
    ln = np.linalg.norm(d, axis=1)
    u = d / np.where(ln == 0.0, 1.0, ln)[:, None]
    u[ln == 0.0] = 0.0
    ce = (cv[edges[:, 0]] + cv[edges[:, 1]])[:, None] * u
    grad = np.zeros_like(vertices)
    np.add.at(grad, edges[:, 0], ce)
    np.add.at(grad, edges[:, 1], -ce)
    return value, grad


@dataclasses.dataclass
class TemplateFitConfig:
    metric: MetricConfig
    refgen: RefGenConfig
    optim: OptimConfig
    alpha: float = 1.0
    lambda1: float = 1.5
    lambda2: float = 4.5

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidInputError("density adaptation weights must be >= 0")


def fit_template(init: TriangleMesh, tgt: TriangleMesh, cfg: TemplateFitConfig,
                 workers: int = 1, backend=None):
    """Deform the template onto the target without changing connectivity.

    Optimizes the latent u of the diffusion system; per iteration the
    density-adaptation targets (global and two-ring mean edge lengths of
    the current deformed mesh) are refreshed but kept out of the gradient.
    Returns (fitted mesh, trace).
    """
    q = generate_reference_points(tgt, cfg.refgen)
    tgt_field = evaluate_field(tgt, q.points, cfg.metric, workers, backend)
    system = DiffusionSystem(init, cfg.alpha)
    moving_index = MeshIndex(init, backend=backend)
    incidence = two_ring_edge_incidence(init)
    pool_sizes = np.asarray(incidence.sum(axis=1)).ravel()
    pool_sizes = np.where(pool_sizes == 0, 1, pool_sizes)
    edges = init.unique_edges

    def objective(u):
        if not np.isfinite(u).all():
            return np.inf, np.zeros_like(u)
        vertices = system.to_vertices(u.reshape(-1, 3))
        if not np.isfinite(vertices).all():
            return np.inf, np.zeros_like(u)
        moving_index.refit(vertices)
        value, grad = ddm_grad(
            None, moving_index, q, cfg.metric, workers, backend, fixed_field=tgt_field
        )
        lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
        lbar_a = float(lengths.mean())
        lbar_k = np.asarray(incidence @ lengths).ravel() / pool_sizes
        rval, rgrad = density_adaptation_reg_grad(
            vertices, init, lbar_a, lbar_k, cfg.lambda1, cfg.lambda2
        )
        g_u = system.pullback(grad.coords + rgrad)
        return value.value + rval, g_u.ravel()

    u0 = system.to_latent(init.vertices).ravel()
    trace = optimize(objective, u0, cfg.optim)
    fitted = system.to_vertices(trace.final_params.reshape(-1, 3))
    return init.with_vertices(fitted), trace
