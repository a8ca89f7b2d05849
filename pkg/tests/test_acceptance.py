"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The suite is
self-contained: it builds its own desk-scale synthetic spaces (two
nonlinear generator families plus the linear closed-form oracle family)
and checks every criterion at its stated tolerance.
"""

import hashlib
import json
import time

import numpy as np
import pytest

from deformspace import pipeline
from deformspace import bundle as bio
from deformspace.deform import (
    compute_switch_point,
    deform_along,
    mesh_chamfer,
    rbf_eval,
    rbf_fit,
    remap_edge,
)
from deformspace.generator import (
    BumpEllipsoidGenerator,
    FrozenNetGenerator,
    LinearGenerator,
)
from deformspace.geodesic import GeodesicConfig, GeodesicPolyline, optimize_geodesic
from deformspace.geomcore import delaunay
from deformspace.smallnet import mlp_backward, mlp_forward, mlp_init
from deformspace.bundle import SpaceBundle
from deformspace.submanifold import (
    TAG_INTERIOR,
    TrainMapConfig,
    barycentric_latents,
    density_for_face_target,
    dirichlet_energy,
    dirichlet_energy_of_values,
    discretize,
    eval_map_many,
    infer,
    train_map,
)
from deformspace.synth import demo_latents, landmark_mesh


def report(name, ok, detail=""):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line, flush=True)
    assert ok, line


def build_space(gen, latents, trainmap_cfg, seed, subdivisions=2):
    meshes = [landmark_mesh(gen, z, subdivisions) for z in latents]
    space = SpaceBundle(
        generator=gen,
        mesh_names=[f"lm{i}" for i in range(len(latents))],
        meshes=meshes,
        config={"geodesics": {"iters": 400}, "trainmap": trainmap_cfg,
                "deform": {"smoothing": 1.0}},
        seed=seed,
    )
    space.latents = np.asarray(latents, dtype=np.float64)
    space.stages.append("project")
    pipeline.run_embed(space)
    pipeline.run_geodesics(space)
    pipeline.run_train_map(space)
    return space


@pytest.fixture(scope="module")
def bump_space():
    gen = BumpEllipsoidGenerator(8, 128, seed=11, amp=0.35, c_range=(6, 12), w_range=(3, 8))
    latents = demo_latents(gen, 8, seed=3, spread=0.8)
    return build_space(gen, latents,
                       {"iters": 6000, "width": 64, "face_target": 200,
                        "plateau_window": 0, "cosine_decay": True,
                        "pretrain_iters": 1000}, seed=3)


@pytest.fixture(scope="module")
def frozen_space():
    # High latent dimension + saturating gain: the regime where straight
    # latent chords dip through many narrow transition walls, the
    # fixed-budget geodesics only partially dodge them, and the trained
    # map's piecewise-primal discretization skips them.
    gen = FrozenNetGenerator.random(64, 128, seed=9, hidden=256, gain=16.0)
    latents = np.random.default_rng(5).normal(scale=1.0, size=(8, 64))
    return build_space(gen, latents,
                       {"iters": 10000, "width": 96, "face_target": 120,
                        "plateau_window": 0, "cosine_decay": True,
                        "pretrain_iters": 1500}, seed=4)


# -- Criterion 1: linear-generator exactness suite ---------------------------------


def test_linear_generator_exactness():
    t0 = time.monotonic()
    gen = LinearGenerator.random(8, 128, seed=5)
    rng = np.random.default_rng(0)
    worst_dev = 0.0
    for _ in range(3):
        z0, z1 = rng.normal(size=8), rng.normal(size=8)
        poly = optimize_geodesic(gen, z0, z1,
                                 GeodesicConfig(iters=2000, cosine_decay=True))
        d = z1 - z0
        dn = d / np.linalg.norm(d)
        for node in poly.nodes:
            w = node - z0
            worst_dev = max(worst_dev, float(np.linalg.norm(w - (w @ dn) * dn)))
    straighten_ok = worst_dev < 1e-4

    tri = delaunay([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]])
    latents = np.random.default_rng(1).normal(size=(3, 8))
    t = np.linspace(0, 1, 8)[:, None]
    table = [GeodesicPolyline((1 - t) * latents[u] + t * latents[v]) for u, v in tri.edges]
    fem = discretize(tri, density_for_face_target(tri, 300))
    x = np.stack([tri.sites[1] - tri.sites[0], tri.sites[2] - tri.sites[0]], axis=1)
    zd = np.stack([latents[1] - latents[0], latents[2] - latents[0]], axis=1)
    b_map = zd @ np.linalg.inv(x)
    area = 0.5 * abs(np.linalg.det(x))
    e_min = np.linalg.norm(gen.A @ b_map, "fro") ** 2 * area
    model, _ = train_map(gen, fem, table, latents,
                         TrainMapConfig(iters=1500, width=256, seed=0,
                                        plateau_window=0, cosine_decay=True,
                                        pretrain_iters=500))
    e_trained = dirichlet_energy(gen, model, fem)
    energy_ok = e_trained <= 1.05 * e_min
    elapsed = time.monotonic() - t0
    report("linear-exactness",
           straighten_ok and energy_ok and elapsed < 300,
           f"max node deviation {worst_dev:.2e}, energy ratio {e_trained / e_min:.4f}, "
           f"{elapsed:.0f}s")


# -- Criterion 2: Table 2 direction analog ------------------------------------------


@pytest.mark.parametrize("space_fixture", ["bump_space", "frozen_space"])
def test_energy_direction_analog(space_fixture, request):
    space = request.getfixturevalue(space_fixture)
    rep = pipeline.run_energy_report(space, n_paths=100, nodes=64, seed=123)
    ok = rep["mean_ours"] <= rep["mean_z_opt"] <= rep["mean_z_linear"]
    report(f"energy-direction[{space.generator.name}]", ok,
           f"ours {rep['mean_ours']:.4f} <= z-opt {rep['mean_z_opt']:.4f} "
           f"<= z-linear {rep['mean_z_linear']:.4f}")


# -- Criterion 3: Fig. 7 analog -------------------------------------------------------


@pytest.mark.parametrize("space_fixture", ["bump_space", "frozen_space"])
def test_trained_map_beats_barycentric_baseline(space_fixture, request):
    space = request.getfixturevalue(space_fixture)
    e_trained = dirichlet_energy(space.generator, space.model, space.fem)
    baseline = barycentric_latents(space.fem, space.latents)
    e_baseline = dirichlet_energy_of_values(space.generator, space.fem, baseline)
    report(f"fig7-direction[{space.generator.name}]", e_trained < e_baseline,
           f"trained {e_trained:.2f} < barycentric {e_baseline:.2f}")


# -- Criterion 4: RBF suite -----------------------------------------------------------


def test_rbf_suite():
    rng = np.random.default_rng(7)
    centers = rng.normal(size=(50, 3))
    values = rng.normal(size=(50, 3))

    interp0 = rbf_fit(centers, values, 0.0)
    center_err = np.abs(rbf_eval(interp0, centers) - values).max()

    m = rng.normal(size=(3, 3))
    c = rng.normal(size=3)
    affine_err = 0.0
    for lam in (0.0, 1.0, 1e6):
        interp = rbf_fit(centers, centers @ m.T + c, lam)
        q = rng.normal(size=(30, 3)) * 2
        affine_err = max(affine_err, float(np.abs(rbf_eval(interp, q) - (q @ m.T + c)).max()))

    big = rbf_fit(centers, values, 1e6)
    p = np.concatenate([np.ones((50, 1)), centers], axis=1)
    coef, *_ = np.linalg.lstsq(p, values, rcond=None)
    q = rng.normal(size=(40, 3))
    ls_err = float(np.abs(rbf_eval(big, q)
                          - np.concatenate([np.ones((40, 1)), q], axis=1) @ coef).max())

    # Residual invariants are enforced inside rbf_fit (raises above 1e-8
    # relative); fitting across the smoothing range is the check.
    ok = center_err < 1e-8 and affine_err < 1e-8 and ls_err < 1e-3
    report("rbf-suite", ok,
           f"center {center_err:.1e}, affine {affine_err:.1e}, lstsq {ls_err:.1e}")


# -- Criterion 5: gradient suite --------------------------------------------------------


def _kink_distance(params, x):
    """Smallest |pre-activation| across hidden layers (ReLU kink proximity).

    A central-difference stencil that straddles a ReLU kink approximates
    no derivative at all, so probes are only valid away from kinks.
    """
    h = np.asarray(x, dtype=np.float64)
    worst = np.inf
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = w @ h + b
        if i == n - 1:
            break
        worst = min(worst, float(np.abs(pre).min()))
        h = np.maximum(pre, 0.0)
    return worst


def test_gradient_suite():
    rng = np.random.default_rng(11)
    h = 1e-4

    worst = 0.0
    params = mlp_init([26, 64, 64, 8], seed=2)
    probes = 0
    while probes < 100:
        x = rng.normal(size=26) * 0.5
        if _kink_distance(params, x) < 1e-3:
            continue
        probes += 1
        cot = rng.normal(size=8)
        grads, gin = mlp_backward(params, x, cot)
        v = rng.normal(size=26)
        fd = (mlp_forward(params, x + h * v) - mlp_forward(params, x - h * v)) / (2 * h)
        num = float(fd @ cot)
        ana = float(gin @ v)
        worst = max(worst, abs(ana - num) / max(abs(num), 1e-8))
    mlp_ok = worst < 1e-4

    gens = [
        LinearGenerator.random(8, 64, seed=1),
        BumpEllipsoidGenerator(8, 64, seed=2),
        FrozenNetGenerator.random(8, 64, seed=3),
    ]
    worst_gen = 0.0
    for gen in gens:
        for _ in range(100):
            z = rng.normal(size=8) * 0.8
            cot = rng.normal(size=(64, 3))
            v = rng.normal(size=8)
            ana = float(gen.vjp(z, cot) @ v)
            fwd = gen.forward(z + h * v).points
            bwd = gen.forward(z - h * v).points
            num = float((cot * (fwd - bwd)).sum() / (2 * h))
            worst_gen = max(worst_gen, abs(ana - num) / max(abs(num), 1e-8))
    gen_ok = worst_gen < 1e-4
    report("gradient-suite", mlp_ok and gen_ok,
           f"mlp max rel err {worst:.2e}, generators {worst_gen:.2e}")


# -- Criterion 6: Table 3 direction analog (switch remapping) ----------------------------


def test_switch_remapping_direction(bump_space):
    space = bump_space
    tri = space.triangulation
    gen, fem, model = space.generator, space.fem, space.model
    smoothing = 1.0
    steps = 200
    with_remap = []
    without = []
    edges = [tuple(int(x) for x in e) for e in tri.edges]
    assert len(edges) >= 10
    for ei, (u, v) in enumerate(edges):
        meshes = (space.meshes[u], space.meshes[v])
        # Vertex-cloud Chamfer (chamfer_samples=0) keeps the search and
        # the evaluation on the same deterministic measurement.
        t_star = compute_switch_point(gen, model, fem, (u, v), meshes,
                                      grid=31, smoothing=smoothing, steps=steps,
                                      chamfer_samples=0, seed=space.seed)

        def switch_chamfer(warped):
            table = list(model.boundary_table)
            if warped:
                table[ei] = remap_edge(table[ei], t_star)
            else:
                table[ei] = table[ei].with_warp(np.array([[0.0, 0.0], [1.0, 1.0]]))
            saved = model.boundary_table
            model.boundary_table = table
            try:
                fwd = deform_along(gen, model, fem, meshes[0],
                                   [tri.sites[u], tri.sites[v]], steps, smoothing)
                bwd = deform_along(gen, model, fem, meshes[1],
                                   [tri.sites[v], tri.sites[u]], steps, smoothing)
            finally:
                model.boundary_table = saved
            return mesh_chamfer(fwd[steps // 2], bwd[steps // 2], 0, 0)

        with_remap.append(switch_chamfer(True))
        without.append(switch_chamfer(False))
    mean_with = float(np.mean(with_remap))
    mean_without = float(np.mean(without))
    report("switch-remap-direction", mean_with <= mean_without,
           f"mean CD with remap {mean_with:.5f} <= without {mean_without:.5f} "
           f"({len(edges)} edges)")


# -- Criterion 7: Euler convergence -------------------------------------------------------


def test_euler_convergence(bump_space):
    space = bump_space
    tri = space.triangulation
    rng = np.random.default_rng(17)
    sites = tri.sites
    ratios = []
    for k in range(5):
        a = sites[rng.integers(len(sites))]
        centroid = sites[tri.triangles[rng.integers(len(tri.triangles))]].mean(axis=0)
        path = [a, centroid]
        mesh = space.meshes[int(np.argmin(((sites - a) ** 2).sum(axis=1)))]

        def final(steps):
            return deform_along(space.generator, space.model, space.fem, mesh,
                                path, steps=steps, smoothing=1.0)[-1].vertices

        v180, v360, v720 = final(180), final(360), final(720)
        d1 = float(np.sqrt(np.mean((v180 - v360) ** 2)))
        d2 = float(np.sqrt(np.mean((v360 - v720) ** 2)))
        ratios.append(d1 / d2)
    ok = all(r >= 1.5 for r in ratios)
    report("euler-convergence", ok,
           "halving ratios " + ", ".join(f"{r:.2f}" for r in ratios))


# -- Criterion 8: continuity + stitching ----------------------------------------------------


def test_continuity_and_stitching(bump_space):
    space = bump_space
    tri = space.triangulation
    gen, fem, model = space.generator, space.fem, space.model
    rng = np.random.default_rng(23)
    interior_edges = [
        (ei, u, v) for ei, (u, v) in enumerate(tri.edges)
        if sum(1 for t in tri.triangles if {u, v} <= set(t.tolist())) == 2
    ]
    worst = 0.0
    checked = 0
    while checked < 1000:
        ei, u, v = interior_edges[rng.integers(len(interior_edges))]
        t = rng.uniform(0.05, 0.95)
        mid = (1 - t) * tri.sites[u] + t * tri.sites[v]
        d = tri.sites[v] - tri.sites[u]
        n = np.array([-d[1], d[0]])
        n /= np.linalg.norm(n)
        eps = 1e-9
        try:
            z1, _ = infer(gen, model, fem, mid + eps * n)
            z2, _ = infer(gen, model, fem, mid - eps * n)
        except Exception:
            continue
        worst = max(worst, float(np.linalg.norm(z1 - z2)))
        checked += 1
    continuity_ok = worst < 1e-6

    from scipy.spatial import cKDTree

    dup = cKDTree(fem.vertices).query_pairs(1e-12)
    tagged = np.nonzero(fem.tag_kind != TAG_INTERIOR)[0]
    vals_all = eval_map_many(model, fem, np.arange(len(fem.vertices)))[tagged]
    vals_tagged = eval_map_many(model, fem, tagged)
    stitching_ok = len(dup) == 0 and np.array_equal(vals_all, vals_tagged)
    report("continuity", continuity_ok and stitching_ok,
           f"worst straddle latent delta {worst:.2e}, duplicate verts {len(dup)}")


# -- Criterion 9: determinism ------------------------------------------------------------------


def test_pipeline_determinism(tmp_path):
    from deformspace.synth import write_demo_space

    overrides = {
        "projection": {"sample_counts": [128, 256], "iters_per_stage": 25, "lr": 0.02},
        "geodesics": {"iters": 60, "init_nodes": 4, "max_nodes": 16, "subdivide_every": 30},
        "trainmap": {"iters": 60, "width": 16, "hidden_layers": 2, "face_target": 80,
                     "plateau_window": 0, "pretrain_iters": 30},
        "switchpoints": {"steps": 60, "chamfer_samples": 128, "grid": 7},
    }
    cfg_path = write_demo_space(
        tmp_path / "demo",
        {"family": "bump-ellipsoid", "latent_dim": 6, "point_count": 64, "seed": 1},
        count=6, seed=7, subdivisions=2, config_overrides=overrides,
    )
    config = json.loads(cfg_path.read_text())

    def run(out):
        space = pipeline.create_space(config, base_dir=cfg_path.parent)
        pipeline.run_project(space)
        pipeline.run_embed(space)
        pipeline.run_geodesics(space)
        pipeline.run_train_map(space)
        pipeline.run_switchpoints(space)
        bio.save(space, out)
        return {
            str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.rglob("*")) if p.is_file()
        }

    h1 = run(tmp_path / "b1")
    h2 = run(tmp_path / "b2")
    report("determinism", h1 == h2, f"{len(h1)} files byte-identical")
