"""Per-timestep traffic scene graph and attention message passing.

Nodes are agents (indices 0..A-1) followed by static road entrance/exit
markers (A..A+R-1).  Agents within 20 m of each other get edges both ways;
a road node gets a single outgoing edge to every agent within 35 m.  Road
nodes never receive edges.  Both thresholds are inclusive.

Edge features are 8-wide: [v_src (2), v_dst (2), p_src - p_dst (2),
v_src - v_dst (2)], with road nodes treated as stationary.

Message passing is single-head scaled dot-product attention over each
node's in-neighborhood:

    x_i' = gamma(x_i) + sum_j a_ij * phi(x_j, e_ij)
    a_ij = softmax_j( psi(x_i)^T xi(x_j, e_ij) / sqrt(d) )

where gamma/psi are affine 80->80, phi/xi are affine on [x_j, edge-embed]
(96->80) and the raw edge vector is first embedded 8->16->16.  By default
d is the key width (80); ``scaling="degree"`` switches to the in-degree of
the receiving node for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import init_linear, init_mlp, linear, mlp_apply

AGENT_EDGE_RADIUS_M = 20.0
ROAD_EDGE_RADIUS_M = 35.0

HIDDEN_DIM = 80
EDGE_RAW_DIM = 8
EDGE_EMBED_DIM = 16

EDGE_EMBED_SPEC = [(EDGE_RAW_DIM, EDGE_EMBED_DIM, "relu"), (EDGE_EMBED_DIM, EDGE_EMBED_DIM, "none")]


def init_graph_params(store, rng: np.random.Generator, prefix: str = "graph") -> None:
    init_mlp(store, f"{prefix}.edge", EDGE_EMBED_SPEC, rng)
    init_linear(store, f"{prefix}.gamma", HIDDEN_DIM, HIDDEN_DIM, rng)
    init_linear(store, f"{prefix}.psi", HIDDEN_DIM, HIDDEN_DIM, rng)
    init_linear(store, f"{prefix}.phi", HIDDEN_DIM + EDGE_EMBED_DIM, HIDDEN_DIM, rng)
    init_linear(store, f"{prefix}.xi", HIDDEN_DIM + EDGE_EMBED_DIM, HIDDEN_DIM, rng)
    bound = 1.0 / np.sqrt(HIDDEN_DIM)
    store.add(f"{prefix}.road_entrance", rng.uniform(-bound, bound, size=(1, HIDDEN_DIM)))
    store.add(f"{prefix}.road_exit", rng.uniform(-bound, bound, size=(1, HIDDEN_DIM)))


def build_edges(agent_positions: np.ndarray, road_positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Edge index arrays (src, dst) under the 20 m / 35 m inclusive rules."""
    a = np.asarray(agent_positions, dtype=np.float64)
    n = a.shape[0]
    diff = a[:, None, :] - a[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    mask = d2 <= AGENT_EDGE_RADIUS_M**2
    np.fill_diagonal(mask, False)
    src, dst = np.nonzero(mask)
    r = np.asarray(road_positions, dtype=np.float64)
    if r.size:
        rdiff = r[:, None, :] - a[None, :, :]
        rd2 = (rdiff * rdiff).sum(axis=2)
        r_src, r_dst = np.nonzero(rd2 <= ROAD_EDGE_RADIUS_M**2)
        src = np.concatenate([src, r_src + n])
        dst = np.concatenate([dst, r_dst])
    return src.astype(np.intp), dst.astype(np.intp)


def compute_edge_features(src_pos, dst_pos, src_vel=(0.0, 0.0), dst_vel=(0.0, 0.0)) -> np.ndarray:
    """Raw 8-vector for one directed edge; road endpoints pass velocity 0."""
    sp, dp = np.asarray(src_pos, float), np.asarray(dst_pos, float)
    sv, dv = np.asarray(src_vel, float), np.asarray(dst_vel, float)
    return np.concatenate([sv, dv, sp - dp, sv - dv])


def edge_feature_matrix(positions: np.ndarray, velocities: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [velocities[src], velocities[dst], positions[src] - positions[dst], velocities[src] - velocities[dst]],
        axis=1,
    )


@dataclass
class SceneGraph:
    """A static snapshot: node layout, edges, raw edge features, node features."""

    n_agents: int
    n_roads: int
    src: np.ndarray
    dst: np.ndarray
    edge_feats: np.ndarray  # (E, 8)
    hiddens: Tensor  # (A, 80) agent node features
    road_roles: np.ndarray  # (R,) 0 entrance / 1 exit

    @property
    def n_nodes(self) -> int:
        return self.n_agents + self.n_roads


def build_scene_graph(
    positions: np.ndarray,
    velocities: np.ndarray,
    hiddens: Tensor,
    road_positions: np.ndarray,
    road_roles: np.ndarray,
) -> SceneGraph:
    positions = np.asarray(positions, dtype=np.float64)
    velocities = np.asarray(velocities, dtype=np.float64)
    road_positions = np.asarray(road_positions, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(positions)):
        raise ValueError("agent positions must be finite")
    src, dst = build_edges(positions, road_positions)
    all_pos = np.concatenate([positions, road_positions], axis=0)
    all_vel = np.concatenate([velocities, np.zeros_like(road_positions)], axis=0)
    feats = edge_feature_matrix(all_pos, all_vel, src, dst)
    return SceneGraph(
        n_agents=positions.shape[0],
        n_roads=road_positions.shape[0],
        src=src,
        dst=dst,
        edge_feats=feats,
        hiddens=hiddens,
        road_roles=np.asarray(road_roles, dtype=np.intp),
    )


def road_embeddings(params, roles: np.ndarray, prefix: str = "graph") -> Tensor:
    table = ad.concat_rows([params[f"{prefix}.road_entrance"], params[f"{prefix}.road_exit"]])
    return ad.gather_rows(table, roles)


def attention_aggregate(
    params,
    agent_feats: Tensor,
    road_feats: Tensor | None,
    edge_feats: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    scaling: str = "dim",
    prefix: str = "graph",
) -> tuple[Tensor, np.ndarray]:
    """Core attention update; returns updated agent features and edge coefficients.

    Differentiable in both feature matrices, the edge features, and all graph
    parameters.  Edges may originate anywhere but always terminate at agents
    (road nodes have no in-edges), so gamma/psi only ever run on agent rows;
    agents without in-edges come back as exactly gamma(x).
    """
    n_agents = agent_feats.shape[0]
    nodes = ad.concat_rows([agent_feats, road_feats]) if road_feats is not None else agent_feats
    emb = mlp_apply(params, f"{prefix}.edge", EDGE_EMBED_SPEC, edge_feats)
    src_cat = ad.concat_cols([ad.gather_rows(nodes, src), emb])
    phi = linear(params, f"{prefix}.phi", src_cat)
    xi = linear(params, f"{prefix}.xi", src_cat)
    query = ad.gather_rows(linear(params, f"{prefix}.psi", agent_feats), dst)
    scores = ad.rowdot(query, xi)
    if scaling == "dim":
        scores = ad.mul(scores, 1.0 / np.sqrt(HIDDEN_DIM))
    elif scaling == "degree":
        degree = np.bincount(dst, minlength=n_agents).astype(np.float64)
        scores = ad.mul(scores, (1.0 / np.sqrt(degree[dst]))[:, None])
    else:
        raise ValueError(f"unknown attention scaling {scaling!r}")
    alpha = ad.segment_softmax(scores, dst, n_agents)
    agg = ad.segment_sum(ad.mul(alpha, phi), dst, n_agents)
    out = ad.add(linear(params, f"{prefix}.gamma", agent_feats), agg)
    return out, alpha.values[:, 0]


def message_pass(params, g: SceneGraph, scaling: str = "dim", prefix: str = "graph") -> tuple[Tensor, np.ndarray]:
    """One attention round over a static SceneGraph; returns updated agent hiddens."""
    roads = road_embeddings(params, g.road_roles, prefix) if g.n_roads else None
    return attention_aggregate(
        params, g.hiddens, roads, ad.tensor(g.edge_feats), g.src, g.dst, scaling=scaling, prefix=prefix
    )


def dump_edges(g: SceneGraph, alpha: np.ndarray, path: str | Path) -> None:
    """Debug table of edges and attention coefficients."""
    lines = ["src\tdst\talpha"]
    for s, d, a in zip(g.src, g.dst, alpha):
        lines.append(f"{int(s)}\t{int(d)}\t{a:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
