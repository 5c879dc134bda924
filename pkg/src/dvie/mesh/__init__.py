from .core import TetMesh, MeshTopologyError
from .io import load_mesh, save_mesh
from .generators import cube_mesh, ball_mesh, layered_ball_mesh

__all__ = [
    "TetMesh",
    "MeshTopologyError",
    "load_mesh",
    "save_mesh",
    "cube_mesh",
    "ball_mesh",
    "layered_ball_mesh",
]
