"""Structured meshes of 4-node quadrilaterals and 2-node lines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mesh:
    """Nodes, connectivity and named node sets.

    ``elements`` are counter-clockwise for quadrilaterals.  ``node_sets``
    maps a boundary name to sorted node indices.
    """

    nodes: np.ndarray
    elements: np.ndarray
    kind: str = "quad4"
    node_sets: dict = field(default_factory=dict)
    shape: tuple | None = None  # (nx, ny) for structured quads

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)


def rectangle(nx: int, ny: int, lx: float, ly: float, x0: float = 0.0, y0: float = 0.0) -> Mesh:
    """Structured ``nx x ny`` quad mesh of ``[x0, x0+lx] x [y0, y0+ly]``.

    Node sets: ``left``, ``right``, ``bottom``, ``top``.  Elements are
    numbered row by row from the bottom-left corner.
    """
    if nx < 1 or ny < 1:
        raise ValueError("need at least one element per direction")
    xs = np.linspace(x0, x0 + lx, nx + 1)
    ys = np.linspace(y0, y0 + ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    el = np.column_stack([idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(),
                          idx[1:, 1:].ravel(), idx[1:, :-1].ravel()])
    sets = {"left": idx[:, 0].copy(), "right": idx[:, -1].copy(),
            "bottom": idx[0, :].copy(), "top": idx[-1, :].copy()}
    return Mesh(nodes, el, "quad4", sets, (nx, ny))


def interval(n: int, length: float) -> Mesh:
    """Uniform 2-node line mesh of ``[0, length]``."""
    x = np.linspace(0.0, length, n + 1)
    el = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], el, "line2", {"left": np.array([0]), "right": np.array([n])}, (n,))


def distort_interior(mesh: Mesh, amplitude: float, seed: int = 0) -> Mesh:
    """Copy of ``mesh`` with interior nodes moved randomly.

    ``amplitude`` is a fraction of the smallest element edge; it must stay
    below 0.5 to keep all elements convex.
    """
    if not 0.0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    boundary = np.unique(np.concatenate(list(mesh.node_sets.values())))
    x = mesh.nodes[mesh.elements]
    edges = np.linalg.norm(x - np.roll(x, 1, axis=1), axis=-1)
    h = edges.min()
    nodes = mesh.nodes.copy()
    inner = np.setdiff1d(np.arange(mesh.n_nodes), boundary)
    nodes[inner] += amplitude * h * rng.uniform(-1.0, 1.0, (inner.size, 2))
    return Mesh(nodes, mesh.elements.copy(), mesh.kind, dict(mesh.node_sets), mesh.shape)
