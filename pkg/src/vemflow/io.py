"""File emission: legacy VTK fields, run manifests, deterministic CSV tables.

The velocity written to VTK is the vertex-averaged L^2 projection: virtual
functions have no closed form, so each vertex takes the mean of the
projected values from its incident cells (convention recorded in the file
header).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import DiscreteState, Discretization, eddy_viscosity
from .basis import eval_scalar_monomials, n_monomials

MANIFEST_VERSION = 1

__all__ = [
    "RunManifest",
    "write_vtk",
    "write_manifest",
    "read_manifest",
    "write_convergence_csv",
    "write_profiles_csv",
    "save_state",
    "load_state",
]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_vtk(disc: Discretization, state: DiscreteState, path, smago=None) -> None:
    """Legacy ASCII unstructured grid with point velocity and cell pressure."""
    mesh = disc.mesh
    nk = n_monomials(disc.k)
    sums = np.zeros((mesh.n_vertices, 2))
    counts = np.zeros(mesh.n_vertices)
    pressures = np.empty(mesh.n_cells)
    for ci, op in enumerate(disc.ops):
        loop = mesh.cells[ci]
        c = op.l2_projector @ state.u[disc.dof_map.cell_velocity[ci]]
        m = eval_scalar_monomials(op.frame, disc.k, mesh.vertices[loop])
        sums[loop, 0] += c[:nk] @ m
        sums[loop, 1] += c[nk:] @ m
        counts[loop] += 1
        pc = state.p[disc.dof_map.cell_pressure[ci]]
        pressures[ci] = pc[0]  # scaled monomials vanish at the barycenter except 1
    velocity = sums / counts[:, None]
    nu_s = eddy_viscosity(disc, state.u, smago) if smago is not None else np.zeros(mesh.n_cells)

    lines = [
        "# vtk DataFile Version 3.0",
        "vemflow fields; velocity = vertex-averaged L2 projection of u_h",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    size = sum(len(loop) + 1 for loop in mesh.cells)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    lines += [f"{len(loop)} " + " ".join(str(int(v)) for v in loop) for loop in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += ["7"] * mesh.n_cells
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.append("VECTORS velocity double")
    lines += [f"{_fmt(u)} {_fmt(v)} 0" for u, v in velocity]
    lines.append(f"CELL_DATA {mesh.n_cells}")
    lines.append("SCALARS pressure double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [_fmt(p) for p in pressures]
    lines.append("SCALARS nu_s double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [_fmt(v) for v in nu_s]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class RunManifest:
    config: dict
    mesh_stats: dict
    outcome: str
    residuals: list[float]
    metrics: dict = field(default_factory=dict)
    conventions: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    format_version: int = MANIFEST_VERSION


def write_manifest(manifest: RunManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_convergence_csv(reports, path) -> None:
    with open(path, "w") as fh:
        fh.write("h,grad_err,grad_rate,l2_err,l2_rate,p_err,p_rate,dofs,outcome\n")
        for r in reports:
            def rate(v):
                return "" if v is None else _fmt(v)
            fh.write(
                f"{_fmt(r.h)},{_fmt(r.grad_err)},{rate(r.grad_rate)},"
                f"{_fmt(r.l2_err)},{rate(r.l2_rate)},{_fmt(r.p_err)},{rate(r.p_rate)},"
                f"{r.dofs},{r.outcome}\n"
            )


def write_profiles_csv(sample_y, ux, sample_x, uy, path) -> None:
    with open(path, "w") as fh:
        fh.write("axis,coord,value\n")
        for c, v in zip(sample_y, ux):
            fh.write(f"u,{_fmt(c)},{_fmt(v)}\n")
        for c, v in zip(sample_x, uy):
            fh.write(f"v,{_fmt(c)},{_fmt(v)}\n")


def save_state(state: DiscreteState, path) -> None:
    np.savez(path, u=state.u, p=state.p, lam=np.array([state.lam]))


def load_state(path) -> DiscreteState:
    data = np.load(path)
    return DiscreteState(data["u"], data["p"], float(data["lam"][0]))


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
