"""Example-based shape deformation by blended skinning transformations."""

from .dictionary import (
    Atom,
    BlendDictionary,
    ExampleSet,
    build_dictionary,
    change_dictionary,
    reduce_dictionary,
)
from .mesh import (
    CotanLaplacian,
    TriMesh,
    arap_precompute,
    cotangent_laplacian,
    geodesic_ball,
    load_mesh,
    save_mesh,
    vertex_normals,
)
from .pipeline import BlendModel, PipelineConfig
from .registration import (
    CorrespondenceMap,
    PartialScan,
    correspondence_search_features,
    evaluate_correspondence,
    evaluate_deformation,
    feature_constraints,
    nonrigid_icp,
)
from .skinning import (
    RotationClusters,
    WeightField,
    build_rotation_clusters,
    import_skeleton_weights,
    lbo_weight_field,
)
from .solver import (
    ConstraintSet,
    Deformer,
    SolveParams,
    SolveState,
    init_transformations,
    interpolate_poses,
    point_constraints,
    project_to_rotations,
    remove_constraints,
    solve,
    solve_with,
    sparse_init,
)
from .spectral import SpectralBasis, lbo_eigenpairs, smoothness_matrix

__version__ = "0.1.0"

__all__ = [
    "Atom", "BlendDictionary", "BlendModel", "ConstraintSet", "CorrespondenceMap",
    "CotanLaplacian", "Deformer", "ExampleSet", "PartialScan", "PipelineConfig",
    "RotationClusters", "SolveParams", "SolveState", "SpectralBasis", "TriMesh",
    "WeightField", "arap_precompute", "build_dictionary", "build_rotation_clusters",
    "change_dictionary", "correspondence_search_features", "cotangent_laplacian",
    "evaluate_correspondence", "evaluate_deformation", "feature_constraints",
    "geodesic_ball", "import_skeleton_weights", "init_transformations",
    "interpolate_poses", "lbo_eigenpairs", "lbo_weight_field", "load_mesh",
    "nonrigid_icp", "point_constraints", "project_to_rotations",
    "reduce_dictionary", "remove_constraints", "save_mesh", "smoothness_matrix",
    "solve", "solve_with", "sparse_init", "vertex_normals",
]
