"""Assembly of the solving pipeline from meshes plus a flat config."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .dictionary import BlendDictionary, ExampleSet, build_dictionary, reduce_dictionary
from .mesh import TriMesh, cotangent_laplacian
from .skinning import (
    SOURCE_SKELETON,
    WeightField,
    build_rotation_clusters,
    import_skeleton_weights,
    lbo_weight_field,
)
from .solver import ConstraintSet, Deformer, SolveParams, SolveState, solve_with
from .spectral import lbo_eigenpairs


@dataclass
class PipelineConfig:
    """Flat key/value configuration (see ``from_file``)."""

    beta_lc: float = 1e3
    beta_sm: float = 1e-6
    beta_sp: float = 0.1
    m_coarse: int = 4
    m_rich: int = 15
    r: int | None = None          # rotation clusters; bones if imported, else 20
    dict_reduce_ratio: float = 1.0
    max_iters: int = 100
    tol: float = 1e-6
    mode_schedule: str = "sparse,average,minimal,rich"

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        """Parse ``key value`` (or ``key=value`` / ``key: value``) lines."""
        known = {f.name: f for f in fields(cls)}
        cfg = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                for sep in ("=", ":"):
                    if sep in line:
                        key, _, val = line.partition(sep)
                        break
                else:
                    parts = line.split(None, 1)
                    if len(parts) != 2:
                        raise ValueError(f"{path}:{lineno}: expected 'key value'")
                    key, val = parts
                key, val = key.strip(), val.strip()
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                cfg = replace(cfg, **{key: _coerce(val, known[key].type)})
        return cfg

    def solve_params(self) -> SolveParams:
        return SolveParams(
            beta_lc=self.beta_lc,
            beta_sm=self.beta_sm,
            beta_sp=self.beta_sp,
            max_iters=self.max_iters,
            tol=self.tol,
        )

    def schedule(self) -> tuple:
        return tuple(s.strip() for s in self.mode_schedule.split(",") if s.strip())


def _coerce(val: str, annot):
    text = str(annot)
    if "int" in text:
        return int(float(val))
    if "float" in text:
        return float(val)
    return val


class BlendModel:
    """Everything precomputed for solving against one example set.

    Builds the spectral basis, weight fields, rotation clusters, both
    dictionaries and their solver contexts once; solves then share them.
    """

    def __init__(self, meshes, config: PipelineConfig | None = None,
                 skeleton_weights: np.ndarray | None = None):
        self.config = config or PipelineConfig()
        cfg = self.config
        rest = meshes[0]
        lap = cotangent_laplacian(rest)
        self.areas = lap.area_weights
        needs_lbo_rich = skeleton_weights is None
        m_basis = max(cfg.m_coarse, cfg.m_rich if needs_lbo_rich else cfg.m_coarse)
        self.basis = lbo_eigenpairs(lap, m_basis)
        if skeleton_weights is not None:
            field_rich = WeightField(weights=np.asarray(skeleton_weights, dtype=np.float64),
                                     source=SOURCE_SKELETON)
            r = field_rich.m if cfg.r is None else cfg.r
        else:
            field_rich = lbo_weight_field(self.basis, cfg.m_rich)
            r = 20 if cfg.r is None else cfg.r
        self.clusters = build_rotation_clusters(field_rich, rest, r)
        self.examples = ExampleSet(meshes, self.clusters, areas=self.areas)
        field_coarse = lbo_weight_field(self.basis, cfg.m_coarse)
        self.dict_coarse = build_dictionary(self.examples, field_coarse)
        rich = build_dictionary(self.examples, field_rich)
        if cfg.dict_reduce_ratio < 1.0:
            rich = reduce_dictionary(rich, max(1, int(rich.b * cfg.dict_reduce_ratio)))
        self.dict_rich = rich
        self.params = cfg.solve_params()
        self.deformer_coarse = Deformer(self.examples, self.dict_coarse, self.params)
        self.deformer_rich = Deformer(self.examples, self.dict_rich, self.params)

    @classmethod
    def from_files(cls, mesh_paths, config=None, weights_path=None):
        from .mesh import load_mesh

        meshes = [load_mesh(p) for p in mesh_paths]
        weights = None
        if weights_path is not None:
            weights = import_skeleton_weights(weights_path, meshes[0]).weights
        return cls(meshes, config, weights)

    @property
    def rest_mesh(self) -> TriMesh:
        return self.examples.meshes[0]

    @property
    def q(self) -> int:
        return self.examples.q

    def solve(self, cs: ConstraintSet) -> SolveState:
        return solve_with(
            self.deformer_coarse, self.deformer_rich, cs, schedule=self.config.schedule()
        )

    def solve_coarse(self, cs: ConstraintSet) -> SolveState:
        """The two-phase coarse solve (no dictionary upgrade)."""
        return solve_with(
            self.deformer_coarse, self.deformer_coarse, cs,
            schedule=("sparse", "average", "minimal"),
        )

    def refine(self, state: SolveState, cs: ConstraintSet, iters: int | None = None) -> SolveState:
        """Minimal-mode continuation under an updated constraint set."""
        if state.deformer is not self.deformer_rich:
            # migrate onto the shared rich context (same dictionary content)
            state.deformer = self.deformer_rich
        return self.deformer_rich.refine(state, cs, iters=iters)

    def surface(self, state: SolveState) -> np.ndarray:
        return state.surface()
