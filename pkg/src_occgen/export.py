"""ASCII PLY export of voxel grids: one colored cube per occupied voxel."""
from typing import Dict, Optional, Tuple

import numpy as np

from .constants import FREE_LABELS
from .semantics import OTHER_STABLE, ROAD, TRAFFIC_LINE, TRAFFIC_LINE_EDGE, WALL

Color = Tuple[int, int, int]

# Legend colors: wall yellow, road purple, traffic lines green / red, other stable features blue
PALETTE: Dict[int, Color] = {
    WALL: (255, 230, 0),
    ROAD: (128, 64, 160),
    TRAFFIC_LINE: (0, 190, 60),
    TRAFFIC_LINE_EDGE: (230, 30, 30),
    OTHER_STABLE: (40, 90, 230),
}
UNKNOWN_COLOR: Color = (160, 160, 160)
OCCUPIED_COLOR: Color = (200, 200, 200)

# Corner k of a unit cube sits at (k >> 2 & 1, k >> 1 & 1, k & 1)
CUBE_OFFSETS = np.array([[(k >> 2) & 1, (k >> 1) & 1, k & 1] for k in range(8)], dtype=np.float64)
# Two outward-facing triangles per face: -x, +x, -y, +y, -z, +z
CUBE_TRIANGLES = np.array([
    [0, 1, 3], [0, 3, 2],
    [4, 6, 7], [4, 7, 5],
    [0, 4, 5], [0, 5, 1],
    [2, 3, 7], [2, 7, 6],
    [0, 2, 6], [0, 6, 4],
    [1, 5, 7], [1, 7, 3],
], dtype=np.int64)


def color_for(label: int, palette: Optional[Dict[int, Color]] = None) -> Color:
    return (palette or PALETTE).get(int(label), UNKNOWN_COLOR)


def voxel_mesh(labels, spec, occupancy: bool = False, palette: Optional[Dict[int, Color]] = None):
    """
    Build cube geometry for every voxel whose label is not 0 or 255.

    Args:
        labels: (X, Y, Z) label or 0/1 occupancy array
        spec: GridSpec giving the origin and voxel size of labels
        occupancy: Color every cube with OCCUPIED_COLOR instead of by class

    Returns:
        (vertices (8n, 3) meters, faces (12n, 3) indices, colors (n, 3) uint8)
    """
    labels = np.asarray(labels)
    idx = np.argwhere(~np.isin(labels, FREE_LABELS))
    ids = labels[tuple(idx.T)] if len(idx) else np.zeros(0, dtype=labels.dtype)
    corners = np.asarray(spec.origin) + idx * spec.voxel_size
    vertices = (corners[:, None, :] + CUBE_OFFSETS[None, :, :] * spec.voxel_size).reshape(-1, 3)
    faces = (CUBE_TRIANGLES[None, :, :] + 8 * np.arange(len(idx))[:, None, None]).reshape(-1, 3)
    if occupancy:
        colors = np.tile(np.array(OCCUPIED_COLOR, dtype=np.uint8), (len(idx), 1))
    else:
        colors = np.array([color_for(i, palette) for i in ids], dtype=np.uint8).reshape(-1, 3)
    return vertices, faces, colors


def write_ply(path, labels, spec, occupancy: bool = False, palette: Optional[Dict[int, Color]] = None) -> Tuple[int, int]:
    """
    Write the voxel mesh as ASCII PLY with per-vertex and per-face colors.

    An all-free grid yields a valid header-only file. Returns (vertex count, face count).
    """
    vertices, faces, colors = voxel_mesh(labels, spec, occupancy, palette)
    vertex_colors = np.repeat(colors, 8, axis=0)
    face_colors = np.repeat(colors, 12, axis=0)

    with open(path, "w", encoding="ascii", newline="\n") as ply_file:
        ply_file.write("ply\n")
        ply_file.write("format ascii 1.0\n")
        ply_file.write("comment occupancy grid export\n")
        ply_file.write(f"element vertex {len(vertices)}\n")
        ply_file.write("property float x\n")
        ply_file.write("property float y\n")
        ply_file.write("property float z\n")
        ply_file.write("property uchar red\n")
        ply_file.write("property uchar green\n")
        ply_file.write("property uchar blue\n")
        ply_file.write(f"element face {len(faces)}\n")
        ply_file.write("property list uchar int vertex_indices\n")
        ply_file.write("property uchar red\n")
        ply_file.write("property uchar green\n")
        ply_file.write("property uchar blue\n")
        ply_file.write("end_header\n")
        for (x, y, z), (r, g, b) in zip(vertices.tolist(), vertex_colors.tolist()):
            ply_file.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
        for (a, b_, c), (r, g, b) in zip(faces.tolist(), face_colors.tolist()):
            ply_file.write(f"3 {a} {b_} {c} {r} {g} {b}\n")
    return len(vertices), len(faces)
