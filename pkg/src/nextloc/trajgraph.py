"""Global trajectory graph and per-user subgraphs.

The global graph has one node per catalog location (isolated nodes are
legitimate). A directed edge i->j aggregates every consecutive pair inside a
single training sub-trajectory: a transition count, the great-circle
distance, and a 24-bin histogram of the arrival record's local hour.
Transitions never cross week boundaries. A user's subgraph is the global
graph restricted to that user's own training locations and transitions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0

EDGE_COLUMNS = ["src", "dst", "trans", "distance_km"] + [f"flow{h}" for h in range(24)]
NODE_COLUMNS = ["index", "latitude", "longitude", "category"]


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km; accepts scalars or numpy arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=np.float64))
                              for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))
    return d if d.ndim else float(d)


@dataclass
class GlobalTrajectoryGraph:
    num_nodes: int
    src: np.ndarray            # (E,) int64
    dst: np.ndarray            # (E,) int64
    trans: np.ndarray          # (E,) int64
    distance_km: np.ndarray    # (E,) float64
    flow: np.ndarray           # (E, 24) int64
    latitude: np.ndarray       # (M,) float64
    longitude: np.ndarray      # (M,) float64
    category: np.ndarray       # (M,) int64, -1 when absent

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def edge_features(self, log_scale: bool = False) -> np.ndarray:
        """(E, 26) matrix [trans, distance_km, flow0..flow23] fed to the network."""
        trans = self.trans.astype(np.float64)
        dist = self.distance_km.astype(np.float64)
        if log_scale:
            trans = np.log1p(trans)
            dist = np.log1p(dist)
        return np.column_stack([trans, dist, self.flow.astype(np.float64)])

    def edge_index(self) -> dict:
        return {(int(s), int(d)): i for i, (s, d) in enumerate(zip(self.src, self.dst))}


def build_global_graph(train_subtrajectories, catalogs) -> GlobalTrajectoryGraph:
    """Aggregate training transitions into the global graph.

    Flow bins use the local hour of the destination record of each
    transition. Self-loops (same location in consecutive records across
    hours) are kept. Edge order is (src, dst) ascending, so rebuilding from
    the same split is byte-identical.
    """
    counts = {}
    flows = {}
    for sub in train_subtrajectories:
        recs = sub.records
        for a, b in zip(recs[:-1], recs[1:]):
            key = (a.location_index, b.location_index)
            counts[key] = counts.get(key, 0) + 1
            flows.setdefault(key, np.zeros(24, dtype=np.int64))[b.hour] += 1

    keys = sorted(counts)
    src = np.array([k[0] for k in keys], dtype=np.int64)
    dst = np.array([k[1] for k in keys], dtype=np.int64)
    trans = np.array([counts[k] for k in keys], dtype=np.int64)
    flow = (np.stack([flows[k] for k in keys])
            if keys else np.zeros((0, 24), dtype=np.int64))

    lat = np.array([l.latitude for l in catalogs.locations], dtype=np.float64)
    lon = np.array([l.longitude for l in catalogs.locations], dtype=np.float64)
    cat = np.array(
        [l.category_index if l.category_index is not None else -1 for l in catalogs.locations],
        dtype=np.int64,
    )
    dist = (haversine_km(lat[src], lon[src], lat[dst], lon[dst])
            if len(keys) else np.zeros(0, dtype=np.float64))
    return GlobalTrajectoryGraph(
        num_nodes=catalogs.num_locations, src=src, dst=dst, trans=trans,
        distance_km=np.asarray(dist, dtype=np.float64), flow=flow,
        latitude=lat, longitude=lon, category=cat,
    )


@dataclass
class UserSubgraph:
    user_index: int
    nodes: np.ndarray          # (n,) global location indices, ascending
    src_local: np.ndarray      # (e,) indices into nodes
    dst_local: np.ndarray
    visit_counts: np.ndarray   # (n,) int64, aligned with nodes

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


def extract_user_subgraph(split, user_index: int) -> UserSubgraph:
    """Subgraph over the user's own training locations and transitions."""
    records = split.user_train_records(user_index)
    if not records:
        raise ValueError(f"user {user_index} has no training records")
    nodes = np.array(sorted({r.location_index for r in records}), dtype=np.int64)
    local = {int(g): i for i, g in enumerate(nodes)}

    counts = np.zeros(len(nodes), dtype=np.int64)
    for r in records:
        counts[local[r.location_index]] += 1

    pairs = set()
    n_train = split.train_counts[user_index]
    for sub in split.subtrajectories[user_index][:n_train]:
        recs = sub.records
        for a, b in zip(recs[:-1], recs[1:]):
            pairs.add((local[a.location_index], local[b.location_index]))
    pairs = sorted(pairs)
    src = np.array([p[0] for p in pairs], dtype=np.int64)
    dst = np.array([p[1] for p in pairs], dtype=np.int64)
    return UserSubgraph(user_index=user_index, nodes=nodes,
                        src_local=src, dst_local=dst, visit_counts=counts)


def visit_weights(subgraph: UserSubgraph) -> np.ndarray:
    """Visit-frequency weights, nonnegative and summing to 1."""
    total = subgraph.visit_counts.sum()
    if total <= 0:
        raise ValueError("subgraph has no visits")
    return subgraph.visit_counts.astype(np.float64) / float(total)


# ---------------------------------------------------------------------------
# flat-file export/import
# ---------------------------------------------------------------------------

def save_graph(graph: GlobalTrajectoryGraph, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "graph_nodes.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(NODE_COLUMNS) + "\n")
        for i in range(graph.num_nodes):
            fh.write(f"{i}\t{float(graph.latitude[i])!r}\t{float(graph.longitude[i])!r}"
                     f"\t{int(graph.category[i])}\n")
    with open(os.path.join(out_dir, "graph_edges.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(EDGE_COLUMNS) + "\n")
        for i in range(graph.num_edges):
            flow = "\t".join(str(int(x)) for x in graph.flow[i])
            fh.write(f"{int(graph.src[i])}\t{int(graph.dst[i])}\t{int(graph.trans[i])}"
                     f"\t{float(graph.distance_km[i])!r}\t{flow}\n")


def load_graph(graph_dir) -> GlobalTrajectoryGraph:
    nodes_path = os.path.join(graph_dir, "graph_nodes.tsv")
    edges_path = os.path.join(graph_dir, "graph_edges.tsv")
    for p in (nodes_path, edges_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"{p} not found (run the build-graph step first)")
    lat, lon, cat = [], [], []
    with open(nodes_path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            _, la, lo, c = line.rstrip("\n").split("\t")
            lat.append(float(la))
            lon.append(float(lo))
            cat.append(int(c))
    src, dst, trans, dist, flows = [], [], [], [], []
    with open(edges_path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
            trans.append(int(parts[2]))
            dist.append(float(parts[3]))
            flows.append([int(x) for x in parts[4:28]])
    return GlobalTrajectoryGraph(
        num_nodes=len(lat),
        src=np.array(src, dtype=np.int64),
        dst=np.array(dst, dtype=np.int64),
        trans=np.array(trans, dtype=np.int64),
        distance_km=np.array(dist, dtype=np.float64),
        flow=np.array(flows, dtype=np.int64).reshape(len(src), 24),
        latitude=np.array(lat, dtype=np.float64),
        longitude=np.array(lon, dtype=np.float64),
        category=np.array(cat, dtype=np.int64),
    )
