import numpy as np
import pytest

from blendforge import (
    ConstraintSet,
    Deformer,
    ExampleSet,
    SolveParams,
    build_dictionary,
    build_rotation_clusters,
    cotangent_laplacian,
    lbo_eigenpairs,
    lbo_weight_field,
    point_constraints,
)
from blendforge.skinning import SOURCE_SKELETON, WeightField
from blendforge import synthetic
from conftest import rand_rotation


def one_hot_field(mesh, groups):
    """Skeleton-style one-hot weights from a vertex partition."""
    m = int(groups.max()) + 1
    w = np.zeros((mesh.n_vertices, m))
    w[np.arange(mesh.n_vertices), groups] = 1.0
    return WeightField(weights=w, source=SOURCE_SKELETON)


def identity_coefficients(d, scale=1.0, example=0):
    """T with every bone transform = scale * identity for one example."""
    T = np.zeros((d.b, 3))
    for i, atom in enumerate(d.layout):
        if atom.block == "hat" and atom.example == example:
            T[i, atom.coord] = scale
    return T


@pytest.fixture(scope="module")
def tetra_rig(tetra):
    groups = np.array([0, 0, 1, 1])
    field = one_hot_field(tetra, groups)
    clusters = build_rotation_clusters(field, tetra, 2)
    posed = tetra.copy_with(tetra.vertices @ synthetic.rot_axis([0, 0, 1], 0.4).T)
    examples = ExampleSet([tetra, posed], clusters)
    d = build_dictionary(examples, field)
    dfm = Deformer(examples, d, SolveParams(beta_sm=0.0))
    return examples, d, dfm, field


def bound_for(dfm, idx, targets, n):
    return dfm.bind(point_constraints(idx, targets, n))


# ---------------------------------------------------------------------------
# linear constraints


def test_satisfied_constraints_zero(tetra, tetra_rig):
    examples, d, dfm, _ = tetra_rig
    T = identity_coefficients(d)
    bound = bound_for(dfm, [0, 2], tetra.vertices[[0, 2]], 4)
    assert dfm.constraint_energy(bound, T) == pytest.approx(0.0, abs=1e-24)


def test_shifted_row_quadratic(tetra, tetra_rig):
    examples, d, dfm, _ = tetra_rig
    T = identity_coefficients(d)
    u = np.array([0.3, -0.1, 0.2])
    base = tetra.vertices[[0, 2]].copy()
    shifted = base.copy()
    shifted[1] += u
    e0 = dfm.constraint_energy(bound_for(dfm, [0, 2], base, 4), T)
    e1 = dfm.constraint_energy(bound_for(dfm, [0, 2], shifted, 4), T)
    assert e1 - e0 == pytest.approx(0.5 * float(u @ u), rel=1e-12)


def test_random_against_direct_formula(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    rng = np.random.default_rng(0)
    T = rng.standard_normal((d.b, 3))
    idx = [0, 1, 3]
    Y = rng.standard_normal((3, 3))
    cs = point_constraints(idx, Y, 4)
    bound = dfm.bind(cs)
    direct = 0.5 * np.sum((np.asarray(cs.H @ d.atoms) @ T - Y) ** 2)
    assert dfm.constraint_energy(bound, T) == pytest.approx(direct, rel=1e-12)


def test_cached_product_matches_recompute(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    cs = point_constraints([1, 2], np.zeros((2, 3)), 4)
    dfm.bind(cs)
    assert np.abs(cs.X - np.asarray(cs.H @ d.atoms)).max() <= 1e-12


# ---------------------------------------------------------------------------
# smoothness


@pytest.fixture(scope="module")
def spectral_rig(cross_gen, cross_basis, cross_lap):
    field = lbo_weight_field(cross_basis, 5)
    clusters = build_rotation_clusters(field, cross_gen.mesh, 6)
    examples = ExampleSet([cross_gen.mesh], clusters, areas=cross_lap.area_weights)
    d = build_dictionary(examples, field)
    dfm = Deformer(examples, d, SolveParams(beta_sm=1.0))
    return examples, d, dfm, cross_basis


def test_constant_blend_atoms_cost_nothing(spectral_rig):
    _, d, dfm, _ = spectral_rig
    T = np.zeros((d.b, 3))
    for i, atom in enumerate(d.layout):
        if atom.weight is None:
            T[i] = [1.0, 2.0, 3.0]
    assert dfm.smoothness_energy(T) == 0.0


def test_smoothness_is_quadratic(spectral_rig):
    _, d, dfm, _ = spectral_rig
    rng = np.random.default_rng(1)
    T = rng.standard_normal((d.b, 3))
    assert dfm.smoothness_energy(2 * T) == pytest.approx(
        4 * dfm.smoothness_energy(T), rel=1e-12
    )


def test_smoothness_direct_sum_oracle(spectral_rig):
    _, d, dfm, basis = spectral_rig
    rng = np.random.default_rng(2)
    T = rng.standard_normal((d.b, 3))
    direct = 0.0
    for i, atom in enumerate(d.layout):
        lam = 0.0 if atom.weight is None else basis.eigenvalues[atom.weight + 1]
        direct += 0.5 * lam**2 * float(T[i] @ T[i])
    assert dfm.smoothness_energy(T) == pytest.approx(direct, rel=1e-12)


# ---------------------------------------------------------------------------
# scaled rigidity energy


def identity_rotations(dfm):
    return np.broadcast_to(np.eye(3), (dfm.q, dfm.r, 3, 3)).copy()


def test_rigid_identity_zero(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    T = identity_coefficients(d, scale=1.0, example=0)
    R = identity_rotations(dfm)
    e = dfm.arap_energy(T, R[0], 1.0, 0)
    assert abs(e) <= 1e-9 * examples.tr_vlv[0]


def test_global_rotation_invariance(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    rng = np.random.default_rng(3)
    Q = rand_rotation(rng)
    # surface = rotated example 0; correct rotations = Q for every cluster
    T = np.zeros((d.b, 3))
    for i, atom in enumerate(d.layout):
        if atom.block == "hat" and atom.example == 0:
            T[i] = Q[:, atom.coord]  # row convention: V @ Q.T
    R = np.broadcast_to(Q, (dfm.r, 3, 3)).copy()
    surface = d.atoms @ T
    assert np.abs(surface - examples.vertices(0) @ Q.T).max() <= 1e-12
    e = dfm.arap_energy(T, R, 1.0, 0)
    assert abs(e) <= 1e-9 * examples.tr_vlv[0]


def test_uniform_scale_energy(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    T = identity_coefficients(d, scale=2.0, example=0)
    R = identity_rotations(dfm)
    e_matched = dfm.arap_energy(T, R[0], 2.0, 0)
    assert abs(e_matched) <= 1e-9 * examples.tr_vlv[0]
    # alpha = 1 leaves the residual (2 - 1)^2 tr(V' L V) / 2
    e_unmatched = dfm.arap_energy(T, R[0], 1.0, 0)
    assert e_unmatched == pytest.approx(0.5 * examples.tr_vlv[0], rel=1e-9)


# ---------------------------------------------------------------------------
# average and minimal totals


def test_average_reduces_to_single(tetra):
    groups = np.array([0, 0, 1, 1])
    field = one_hot_field(tetra, groups)
    clusters = build_rotation_clusters(field, tetra, 2)
    examples = ExampleSet([tetra], clusters)
    d = build_dictionary(examples, field)
    dfm = Deformer(examples, d, SolveParams(beta_sm=0.0))
    rng = np.random.default_rng(4)
    T = rng.standard_normal((d.b, 3))
    R = identity_rotations(dfm)
    bound = bound_for(dfm, [0], tetra.vertices[[0]], 4)
    total = dfm.total_average(bound, T, R, 1.0)
    single = (
        dfm.arap_energy(T, R[0], 1.0, 0)
        + dfm.params.beta_lc * dfm.constraint_energy(bound, T)
        + dfm.params.beta_sm * dfm.smoothness_energy(T)
    )
    assert total == pytest.approx(single, rel=1e-12)


def test_identical_examples_average(tetra):
    groups = np.array([0, 0, 1, 1])
    field = one_hot_field(tetra, groups)
    clusters = build_rotation_clusters(field, tetra, 2)
    examples = ExampleSet([tetra, tetra, tetra], clusters)
    d = build_dictionary(examples, field)
    dfm = Deformer(examples, d, SolveParams(beta_sm=0.0))
    rng = np.random.default_rng(5)
    T = rng.standard_normal((d.b, 3))
    R = np.stack([np.stack([rand_rotation(rng) for _ in range(dfm.r)])] * 3)
    bound = bound_for(dfm, [2], tetra.vertices[[2]], 4)
    avg = dfm.total_average(bound, T, R, 1.3)
    one = (
        dfm.arap_energy(T, R[0], 1.3, 0)
        + dfm.params.beta_lc * dfm.constraint_energy(bound, T)
        + dfm.params.beta_sm * dfm.smoothness_energy(T)
    )
    assert avg == pytest.approx(one, rel=1e-12)


def test_average_term_by_term_oracle(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    rng = np.random.default_rng(6)
    T = rng.standard_normal((d.b, 3))
    R = np.stack(
        [np.stack([rand_rotation(rng) for _ in range(dfm.r)]) for _ in range(dfm.q)]
    )
    bound = bound_for(dfm, [0, 3], rng.standard_normal((2, 3)), 4)
    alpha = 0.8
    oracle = (
        sum(dfm.arap_energy(T, R[l], alpha, l) for l in range(dfm.q)) / dfm.q
        + dfm.params.beta_lc * dfm.constraint_energy(bound, T)
        + dfm.params.beta_sm * dfm.smoothness_energy(T)
    )
    assert dfm.total_average(bound, T, R, alpha) == pytest.approx(oracle, rel=1e-12)


def test_minimal_picks_generating_example(cross_gen, cross_basis, cross_lap):
    rng = np.random.default_rng(7)
    poses = [cross_gen.mesh] + [cross_gen.pose(rng.uniform(-0.4, 0.4, 4)) for _ in range(2)]
    field = lbo_weight_field(cross_basis, 10)
    clusters = build_rotation_clusters(field, cross_gen.mesh, 8)
    examples = ExampleSet(poses, clusters, areas=cross_lap.area_weights)
    d = build_dictionary(examples, field)
    dfm = Deformer(examples, d, SolveParams(beta_sm=1e-6))
    pins = cross_gen.anchor_pins()
    target = examples.vertices(2)
    bound = dfm.bind(point_constraints(pins, target[pins], examples.n))
    # all T equal to the projection of the target example
    T = d.projector().coefficients(target)
    T_all = np.repeat(T[None], 3, axis=0)
    R = identity_rotations(dfm)
    for l in range(3):
        R[l] = dfm.fit_rotations(T_all[l], R[l], l)
    energy, ell = dfm.minimal_energy(bound, T_all, R, np.ones(3))
    assert ell == 2


def test_minimal_single_example_trivial(tetra_rig):
    examples, d, dfm, _ = tetra_rig
    rng = np.random.default_rng(8)
    T_all = rng.standard_normal((dfm.q, d.b, 3))
    R = identity_rotations(dfm)
    bound = bound_for(dfm, [1], rng.standard_normal((1, 3)), 4)
    vals = [
        dfm.example_energy(bound, T_all[l], R[l], 1.0, l) for l in range(dfm.q)
    ]
    energy, ell = dfm.minimal_energy(bound, T_all, R, np.ones(dfm.q))
    assert ell == int(np.argmin(vals))
    assert energy == pytest.approx(min(vals), rel=1e-12)
    # adding a constant to every per-example energy keeps the argmin
    shifted = [v + 17.0 for v in vals]
    assert int(np.argmin(shifted)) == ell
