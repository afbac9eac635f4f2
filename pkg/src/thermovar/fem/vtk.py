"""Legacy ASCII VTK output of quad and line meshes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh

_CELL_TYPE = {"quad4": 9, "line2": 3}


def _fmt(x, deterministic: bool) -> str:
    return f"{x:.10e}" if deterministic else repr(float(x))


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, cell_data: dict | None = None,
              title: str = "thermovar", deterministic: bool = True) -> Path:
    """Write an unstructured grid with scalar and 2-vector fields.

    With ``deterministic`` all floats use a fixed format so that repeated
    runs give byte-identical files.
    """
    path = Path(path)
    nn, ne = mesh.n_nodes, mesh.n_elements
    xyz = np.zeros((nn, 3))
    xyz[:, : mesh.nodes.shape[1]] = mesh.nodes
    npe = mesh.elements.shape[1]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nn} double"]
    lines += [" ".join(_fmt(v, deterministic) for v in row) for row in xyz]
    lines.append(f"CELLS {ne} {ne * (npe + 1)}")
    lines += [f"{npe} " + " ".join(str(int(i)) for i in row) for row in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += [str(_CELL_TYPE[mesh.kind])] * ne

    def block(data, n, header):
        if not data:
            return
        lines.append(f"{header} {n}")
        for name, arr in sorted(data.items()):
            arr = np.asarray(arr, float)
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v, deterministic) for v in arr)
            else:
                vec = np.zeros((n, 3))
                vec[:, : arr.shape[1]] = arr
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(_fmt(v, deterministic) for v in row) for row in vec)

    block(point_data, nn, "POINT_DATA")
    block(cell_data, ne, "CELL_DATA")
    path.write_text("\n".join(lines) + "\n")
    return path
