"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -s` to see the PASS/FAIL lines.
"""

import sys
import time

import numpy as np
import pytest
from scipy.spatial import cKDTree

from aros.config import IndexConfig, TrainConfig
from aros.descriptor import core_size_bytes, save_descriptor, train
from aros.detector import detect
from aros.fixtures import FixtureKind, FixtureSpec, make_fixture, make_mannequin
from aros.geometry.bvh import get_bvh
from aros.geometry.mesh import RigidTransform, TriangleMesh, box_mesh, grid_mesh
from aros.ibs import IbsConfig, build_ibs, equidistance_residuals
from aros.metrics import score_body, score_vertices
from aros.placement import (OptimizerConfig, optimize_downward, optimize_icp,
                            optimize_sdfgap, place)
from aros.scene import build_scene_index, generate_fillers

from tests.oracles import brute_closest_point, brute_raycast, brute_signed_distance

ACC_INDEX = IndexConfig(filler_radii=(0.07,), sdf_dims=(96, 96, 96))


def report(name, passed, detail=""):
    line = f"ACCEPTANCE {'PASS' if passed else 'FAIL'}: {name}"
    if detail:
        line += f" ({detail})"
    print(line, file=sys.__stdout__, flush=True)
    assert passed, line


# --- criterion 1: oracle equivalence ----------------------------------------


def test_c1_oracle_equivalence(bumpy_mesh):
    start = time.time()
    rng = np.random.default_rng(101)
    bvh = get_bvh(bumpy_mesh)

    origins = rng.uniform(-1.3, 1.3, size=(1000, 3))
    origins[:, 2] = rng.uniform(-1.0, 1.5, 1000)
    dirs = rng.normal(size=(1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, f = bvh.raycast(origins, dirs, np.full(1000, 4.0))
    ray_ok = True
    for i in range(1000):
        expected = brute_raycast(bumpy_mesh, origins[i], dirs[i], 4.0)
        if expected is None:
            ray_ok &= f[i] < 0
        else:
            ray_ok &= f[i] >= 0 and abs(t[i] - expected[0]) < 1e-9

    queries = rng.uniform(-1.5, 1.5, size=(1000, 3))
    d, _, _ = bvh.closest_point(queries)
    cp_ok = True
    for i in range(1000):
        _, expected, _ = brute_closest_point(bumpy_mesh, queries[i])
        cp_ok &= abs(d[i] - expected) < 1e-9

    elapsed = time.time() - start
    report("oracle equivalence (raycast + closest point, 1e-9, <10 s)",
           ray_ok and cp_ok and elapsed < 10.0, f"{elapsed:.1f} s")


# --- criterion 2: IBS correctness --------------------------------------------


def test_c2_ibs_correctness(parallel_squares):
    body, env = parallel_squares
    ibs = build_ibs(body, env, IbsConfig(ibs_ini=100, ibs_cs=2), seed=7)
    midplane_ok = np.abs(ibs.mesh.vertices[:, 2] - 0.5).max() < 1e-6

    from aros.geometry.mesh import icosphere
    s1 = icosphere(1.0, center=(0, 0, 0), subdivisions=3)
    s2 = icosphere(1.0, center=(4, 0, 0), subdivisions=3)
    ibs2 = build_ibs(s1, s2, IbsConfig(ibs_rf=2.5), seed=3)
    plane_dev = np.abs(ibs2.mesh.vertices[:, 0] - 2.0).max()
    spheres_ok = plane_dev <= 0.01 * ibs2.clip_radius

    equid_ok = True
    pierce_ok = True
    time_ok = True
    for kind in FixtureKind:
        scene, bod, _ = make_fixture(FixtureSpec(kind))
        t0 = time.time()
        surf = build_ibs(bod, scene, IbsConfig(), seed=3)  # ibs_ini=400, cs=4
        dt = time.time() - t0
        res = equidistance_residuals(surf, bod, scene)
        equid_ok &= res.max() <= 0.01 * surf.clip_radius
        if kind is FixtureKind.BOX_SEAT:
            pierce_ok = surf.pierce_count == 0
        time_ok &= dt < 60.0
    report("IBS correctness (midplane 1e-6, bisector <=1%, equidistance <=1%, "
           "no piercing, <60 s/interaction)",
           midplane_ok and spheres_ok and equid_ok and pierce_ok and time_ok)


# --- criterion 3: descriptor size --------------------------------------------


def test_c3_descriptor_size(tmp_path, sit_bundle):
    _, _, _, descriptor, _ = sit_bundle
    path = tmp_path / "sit.arosad"
    save_descriptor(descriptor, path)
    size = path.stat().st_size
    layout = core_size_bytes(512, 256, descriptor.label)
    report("descriptor size (512 pv + 256 cv < 40 KB, layout ~19 KB)",
           size < 40 * 1024 and size == layout and abs(layout - 19000) < 1500,
           f"{size} bytes")


# --- criterion 4: self-detection closure --------------------------------------


@pytest.fixture(scope="module")
def fixture_bundles():
    out = {}
    for kind in FixtureKind:
        scene, body, p_train = make_fixture(FixtureSpec(kind))
        descriptor = train(body, scene, p_train,
                           TrainConfig(label=kind.value), seed=3)
        index = build_scene_index(scene, ACC_INDEX, seed=5)
        out[kind] = (scene, body, p_train, descriptor, index)
    return out


def test_c4_self_detection_closure(fixture_bundles):
    ok = True
    details = []
    theta = 2 * np.pi / 8
    for kind, (scene, body, p_train, descriptor, index) in fixture_bundles.items():
        r = detect(descriptor, index, p_train)
        self_score = descriptor.thresholds.max_kappa / 3.0
        good = r.accepted and r.missing_count == 0 and r.kappa <= self_score + 1e-12
        # rotating the scene by 2*pi/8 shifts the best orientation accordingly
        xf = RigidTransform.rot_z(theta)
        index_r = build_scene_index(scene.transformed(xf), ACC_INDEX, seed=5)
        rr = detect(descriptor, index_r, xf.apply(p_train[None])[0])
        good &= rr.accepted and rr.missing_count == 0
        rotated = next(s for s in rr.per_phi if abs(s.phi - theta) < 1e-12)
        good &= abs(rotated.kappa - r.kappa) < 1e-6
        if kind is not FixtureKind.FLOOR_ONLY:
            # asymmetric scenes pin the best orientation exactly
            good &= abs(rr.best_phi - theta) < 1e-9
        ok &= good
        if not good:
            details.append(kind.value)
    report("self-detection closure (all fixtures, n_phi=8, rho_n=pi/3, "
           "missing=0, rotation shifts best_phi)", ok, ",".join(details))


# --- criterion 5: clearance gating -------------------------------------------


def test_c5_clearance_gating():
    strain, body, p_train = make_fixture(FixtureSpec(
        FixtureKind.CEILING_SLAB, dimensions={"slab_clearance": 1.0}))
    desc = train(body, strain, p_train,
                 TrainConfig(label="sit_headroom", d_max=0.4), seed=3)
    low, _, p_low = make_fixture(FixtureSpec(
        FixtureKind.CEILING_SLAB, dimensions={"slab_clearance": 0.10}))
    high, _, p_high = make_fixture(FixtureSpec(
        FixtureKind.CEILING_SLAB, dimensions={"slab_clearance": 1.0}))
    idx_low = build_scene_index(low, ACC_INDEX, seed=5)
    idx_high = build_scene_index(high, ACC_INDEX, seed=5)
    r_low = detect(desc, idx_low, p_low)
    r_high = detect(desc, idx_high, p_high)
    stripped = desc.without_clearance()
    flip = (not r_low.accepted) and r_high.accepted
    collision_cause = r_low.collision_count > desc.thresholds.max_collisions
    removed = detect(stripped, idx_low, p_low).accepted \
        and detect(stripped, idx_high, p_high).accepted
    report("clearance gating (slab at 10 cm rejects via collisions, 1 m "
           "accepts, stripped descriptor accepts both)",
           flip and collision_cause and removed,
           f"low={r_low.collision_count} high={r_high.collision_count} "
           f"budget={desc.thresholds.max_collisions}")


# --- criterion 6: ablation orderings ------------------------------------------

SEAT = 0.45
SIT_SCREEN_X = 0.33   # sparse screen crossing a seated body's knees and shins
SIT_HEAD_TOP = SEAT + 0.0005 + 0.14 + 0.16 + 0.50 + 0.02 + 0.22
STAND_HEAD_TOP = 0.0005 + 0.06 + 0.40 + 0.40 + 0.16 + 0.50 + 0.02 + 0.22


def _grate(x_plane, y0, y1, z0, z1, pitch=0.10, slat=0.03):
    """Sparse vertical slats: most rays slip through, a body cannot."""
    from aros.fixtures import _vertical_sheet
    panels = []
    y = y0
    while y < y1:
        panels.append(_vertical_sheet(x_plane, y, min(y + slat, y1), z0, z1,
                                      cell=0.05))
        y += pitch
    return TriangleMesh.concatenate(panels)


def _eval_scene(kind, seed, variants, spacing=1.35):
    """A jittered floor with local replicas of the training neighbourhood.

    Variants: "clean"; "slab" (thin board crossing the head: a penetration
    the clearance gate should veto); "grate" (sparse screen crossing the
    legs: rays slip through its holes unless fillers back them).
    """
    rng = np.random.default_rng(seed)
    anchors = []
    n = len(variants)
    cols = int(np.ceil(np.sqrt(n)))
    floor_size = spacing * cols + 2.4
    meshes = [grid_mesh(floor_size, floor_size, nx=int(floor_size / 0.1),
                        ny=int(floor_size / 0.1))]
    offset = np.array([0.10, 0.07, 0.0])
    for i, variant in enumerate(variants):
        cx = (i % cols - (cols - 1) / 2) * spacing
        cy = (i // cols - (cols - 1) / 2) * spacing
        base = np.array([cx, cy, 0.0])
        if kind == "sit":
            meshes.append(box_mesh((0.5, 0.5, SEAT),
                                   center=base + offset + (0, 0, SEAT / 2),
                                   segments=3, skip_bottom=True))
            anchor = base + offset + (0, 0, SEAT)
            head_top = SIT_HEAD_TOP
        else:
            anchor = base
            head_top = STAND_HEAD_TOP
        if variant == "slab":
            meshes.append(box_mesh(
                (1.0, 1.0, 0.04),
                center=base + offset * (kind == "sit")
                + (0, 0, head_top - 0.12 + 0.02),
                segments=2, skip_bottom=False))
        elif variant == "grate":
            ox = base[0] + offset[0] * (kind == "sit")
            oy = base[1] + offset[1] * (kind == "sit")
            meshes.append(_grate(ox + SIT_SCREEN_X, oy - 0.35, oy + 0.45,
                                 0.0, 0.85))
        anchors.append((anchor, variant))
    scene = TriangleMesh.concatenate(meshes)
    # scan-style jitter
    bump = rng.uniform(-0.004, 0.004, size=(scene.n_vertices, 1))
    scene = TriangleMesh.from_arrays(scene.vertices + bump * scene.vertex_normals,
                                     scene.faces)
    bvh = get_bvh(scene)
    snapped = []
    for anchor, variant in anchors:
        _, cp, _ = bvh.closest_point(anchor)
        snapped.append((cp[0], variant))
    return scene, snapped


def _local_score_grid(scene, fillers, center, cell=0.025):
    """Fine SDF over one placement neighbourhood (common scoring reference)."""
    from aros.geometry.sdf import SdfGrid, grid_nodes
    from aros.scene import _filler_min_sdf
    lo = np.asarray(center) + np.array([-1.0, -1.0, -0.55])
    hi = np.asarray(center) + np.array([1.0, 1.0, 1.95])
    dims = tuple(int(np.ceil((hi - lo)[k] / cell)) + 1 for k in range(3))
    nodes = grid_nodes(lo, cell, dims)
    vals = np.empty(len(nodes))
    bvh = get_bvh(scene)
    for start in range(0, len(nodes), 131072):
        vals[start:start + 131072] = bvh.signed_distance(nodes[start:start + 131072])
    vals = np.minimum(vals.astype(np.float32),
                      _filler_min_sdf(nodes, fillers).astype(np.float32))
    return SdfGrid(lo, cell, dims, vals.reshape(dims))


@pytest.fixture(scope="module")
def table1():
    """detect -> place -> optimize -> score across the ablation arms."""
    t_start = time.time()
    common = dict(max_kappa=25.0, max_missings=250)

    strain, sbody, sp = make_fixture(FixtureSpec(
        FixtureKind.CEILING_SLAB, dimensions={"slab_clearance": 1.0}))
    sit = train(sbody, strain, sp,
                TrainConfig(label="sit", d_max=0.4, max_collisions=32,
                            **common), seed=3)
    ftrain, fbody, fp = make_fixture(FixtureSpec(
        FixtureKind.FLOOR_ONLY, dimensions={"floor": 3.0}))
    stand = train(fbody, ftrain, fp,
                  TrainConfig(label="stand", d_max=0.4, max_collisions=14,
                              **common), seed=7)

    eval_index = IndexConfig(filler_radii=(0.07,), sdf_dims=(96, 96, 96))
    nofill_index = IndexConfig(use_fillers=False, sdf_dims=(96, 96, 96))

    depths = {"F+C": [], "F+NC": [], "NF+C": []}
    opt_metrics = {"none": [], "downward": [], "icp": [], "sdfgap": []}
    accepted_variants = {"F+C": [], "F+NC": [], "NF+C": []}
    total_scored = 0

    for seed in (0, 1, 2):
        for kind, descriptor in (("sit", sit), ("stand", stand)):
            if kind == "sit":
                variants = ["clean"] * 4 + ["slab"] * 3 + ["grate"] * 2
                scene, anchors = _eval_scene("sit", 100 + seed, variants)
            else:
                variants = ["clean"] * 6 + ["slab"] * 3
                scene, anchors = _eval_scene("stand", 200 + seed, variants)
            fill = build_scene_index(scene, eval_index, seed=50 + seed)
            nofill = build_scene_index(scene, nofill_index, seed=50 + seed)
            score_grids = {}

            def scoring_grid(point):
                key = tuple(np.round(point[:2], 3))
                if key not in score_grids:
                    score_grids[key] = _local_score_grid(scene, fill.fillers,
                                                         point)
                return score_grids[key]

            arms = (("F+C", descriptor, fill),
                    ("F+NC", descriptor.without_clearance(), fill),
                    ("NF+C", descriptor, nofill))
            for arm, desc_arm, det_index in arms:
                for point, variant in anchors:
                    r = detect(desc_arm, det_index, point)
                    if not r.accepted:
                        continue
                    body = place(desc_arm, r, point)
                    grid = scoring_grid(point)
                    m = score_body(body, fill, sdf=grid)
                    depths[arm].append(m.collision_depth)
                    accepted_variants[arm].append(variant)
                    total_scored += 1
                    if arm == "F+C":
                        opt_metrics["none"].append(m)
                        settled = optimize_downward(body, fill, step=0.02)
                        opt_metrics["downward"].append(
                            score_body(settled, fill, sdf=grid))
                        fitted = optimize_icp(body, fill,
                                              OptimizerConfig(kind="icp"))
                        opt_metrics["icp"].append(
                            score_body(fitted, fill, sdf=grid))
                        eased = optimize_sdfgap(body, fill, desc_arm,
                                                OptimizerConfig(kind="sdfgap",
                                                                max_iters=60))
                        opt_metrics["sdfgap"].append(
                            score_body(eased, fill, sdf=grid))
                        total_scored += 3
    return dict(depths=depths, opt_metrics=opt_metrics,
                accepted=accepted_variants, total=total_scored,
                runtime=time.time() - t_start)


def _bootstrap_confidence(a, b, relation, n=4000, seed=9):
    """P(relation(mean(A*), mean(B*))) over paired resamples."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a)
    b = np.asarray(b)
    wins = 0
    for _ in range(n):
        ma = a[rng.integers(0, len(a), len(a))].mean()
        mb = b[rng.integers(0, len(b), len(b))].mean()
        wins += relation(ma, mb)
    return wins / n


def test_c6_table1_orderings(table1):
    d = table1["depths"]
    m = table1["opt_metrics"]
    enough = table1["total"] >= 200

    conf_a = _bootstrap_confidence(d["F+NC"], d["F+C"], lambda x, y: x >= y)
    conf_b = _bootstrap_confidence(d["F+C"], d["NF+C"], lambda x, y: x <= y)

    icp_contact = np.array([x.contact for x in m["icp"]])
    c_ok = icp_contact.mean() == 1.0

    depth_icp = np.array([x.collision_depth for x in m["icp"]])
    depth_gap = np.array([x.collision_depth for x in m["sdfgap"]])
    depth_none = np.array([x.collision_depth for x in m["none"]])
    conf_d1 = _bootstrap_confidence(depth_icp, depth_gap, lambda x, y: x > y)
    conf_d2 = _bootstrap_confidence(depth_gap, depth_none, lambda x, y: x > y)

    in_time = table1["runtime"] < 600
    ok = enough and conf_a >= 0.95 and conf_b >= 0.95 and c_ok \
        and conf_d1 >= 0.95 and conf_d2 >= 0.95 and in_time
    report("ablation orderings (>=200 placements, clearance/filler/optimizer "
           "orderings at 95% bootstrap, ICP contact exactly 1.0, <10 min)", ok,
           f"n={table1['total']} a={conf_a:.3f} b={conf_b:.3f} "
           f"icp_contact={icp_contact.mean():.4f} d1={conf_d1:.3f} "
           f"d2={conf_d2:.3f} t={table1['runtime']:.0f}s "
           f"means: F+C={np.mean(d['F+C'])*100:.2f}cm "
           f"F+NC={np.mean(d['F+NC'])*100:.2f}cm "
           f"NF+C={np.mean(d['NF+C'])*100:.2f}cm "
           f"icp={depth_icp.mean()*100:.2f} gap={depth_gap.mean()*100:.2f} "
           f"none={depth_none.mean()*100:.2f}")


# --- criterion 7: metrics oracle ---------------------------------------------


def test_c7_metrics_oracle(sit_bundle):
    scene, body, p_train, descriptor, index = sit_bundle
    r = detect(descriptor, index, p_train)
    pb = place(descriptor, r, p_train)
    # a pose with clear sign margins: hover above the seat volume
    high = pb.apply(RigidTransform.translation_of((0.0, 0.0, 0.6)))
    assert high.mesh.n_vertices >= 350
    grid_m = score_body(high, index)
    sd_scene = np.array([brute_signed_distance(scene, v)
                         for v in high.mesh.vertices])
    centers = index.filler_centers
    radii = index.filler_radii
    d_fill = cKDTree(centers).query(high.mesh.vertices, k=1)[0] - radii[0]
    oracle = score_vertices(np.minimum(sd_scene, d_fill))
    ok = (grid_m.contact == oracle.contact
          and grid_m.non_collision == oracle.non_collision
          and abs(grid_m.collision_depth - oracle.collision_depth)
          <= index.sdf.cell_diagonal)
    report("metrics oracle (grid vs brute-force pseudonormal: contact and "
           "non-collision exact, depth within one cell diagonal)", ok)


# --- criterion 8: spherical fillers -------------------------------------------


def test_c8_spherical_fillers():
    # probe through the 5 cm hole hits a filler within 2r
    scene, _, _ = make_fixture(FixtureSpec(FixtureKind.HOLED_WALL,
                                           dimensions={"hole": 0.05}))
    index = build_scene_index(scene, IndexConfig(sdf_dims=(48, 48, 48)), seed=4)
    t_aug, f_aug = index.raycast(np.array([[0.0, 0.0, 1.0]]),
                                 np.array([[1.0, 0.0, 0.0]]), [5.0])
    t_raw, f_raw = index.raycast(np.array([[0.0, 0.0, 1.0]]),
                                 np.array([[1.0, 0.0, 0.0]]), [5.0], raw=True)
    wall_x = 0.7
    through = f_raw[0] < 0 or t_raw[0] > wall_x + 0.3
    caught = f_aug[0] >= 0 and t_aug[0] <= wall_x + 2 * 0.07 + 1e-9

    # step-4 geometry on a plain floor at the published radius
    floor = grid_mesh(1.0, 1.0, nx=10, ny=10)
    fillers = generate_fillers(floor, radius=0.07, seed=3)
    centers = np.array([f.center for f in fillers])
    depth_ok = np.abs(centers[:, 2] + 0.07).max() < 1e-6
    spacing = 6 * 0.07 / 9
    nn = cKDTree(centers).query(centers, k=2)[0][:, 1]
    spacing_ok = nn.min() >= spacing - 1e-6
    report("spherical fillers (hole probe caught within 2r; centers at depth "
           "r, spacing 6r/9)", through and caught and depth_ok and spacing_ok)


# --- criterion 9: property suites end-to-end -----------------------------------


def test_c9_property_suites(sit_bundle, stand_bundle):
    start = time.time()
    scene, body, p_train, descriptor, index = sit_bundle

    # determinism under a fixed seed
    d2 = train(body, scene, p_train, TrainConfig(label="sit"), seed=11)
    det_ok = np.array_equal(d2.provenance.origins, descriptor.provenance.origins)
    det_ok &= np.array_equal(d2.clearance.vectors, descriptor.clearance.vectors)

    # rigid invariance of training
    theta = 0.7
    xf = RigidTransform(RigidTransform.rot_z(theta).rotation,
                        np.array([0.4, -0.2, 0.0]))
    cfg = TrainConfig(label="sit", num_pv=96, num_cv=48)
    base = train(body, scene, p_train, cfg, seed=5)
    moved = train(body.transformed(xf), scene.transformed(xf),
                  xf.apply(p_train), cfg, seed=5)
    rot = xf.rotation
    inv_ok = np.abs(moved.provenance.deltas.astype(np.float64)
                    - base.provenance.deltas.astype(np.float64) @ rot.T).max() < 1e-5
    inv_ok &= np.abs(moved.clearance.vectors.astype(np.float64)
                     - base.clearance.vectors.astype(np.float64) @ rot.T).max() < 1e-5

    # monotone threshold gating
    r = detect(descriptor, index, p_train)
    tight = descriptor.with_thresholds(max_kappa=r.kappa * 0.1, max_missings=0,
                                       max_collisions=0)
    r_tight = detect(tight, index, p_train)
    mono_ok = not (r_tight.accepted and not r.accepted)

    # optimizer rigidity
    pb = place(descriptor, r, p_train)
    moved_body = optimize_downward(
        pb.apply(RigidTransform.translation_of((0, 0, 0.08))), index)
    rng = np.random.default_rng(0)
    idx = rng.choice(pb.mesh.n_vertices, 40, replace=False)
    before = np.linalg.norm(pb.mesh.vertices[idx][:, None]
                            - pb.mesh.vertices[idx][None, :], axis=2)
    after = np.linalg.norm(moved_body.mesh.vertices[idx][:, None]
                           - moved_body.mesh.vertices[idx][None, :], axis=2)
    rigid_ok = np.abs(before - after).max() <= 1e-9

    # sweep parallel equals serial
    from aros.detector import sweep
    pts = [(p_train + np.array([dx, 0, 0]), None)
           for dx in np.linspace(-0.2, 0.2, 8)]
    serial = sweep(descriptor, index, pts, threads=1)
    parallel = sweep(descriptor, index, pts, threads=4)
    par_ok = all(a.kappa == b.kappa and a.accepted == b.accepted
                 for a, b in zip(serial, parallel))

    elapsed = time.time() - start
    report("property suites (determinism, rigid invariance, monotone gating, "
           "optimizer rigidity, parallel sweep; <5 min)",
           det_ok and inv_ok and mono_ok and rigid_ok and par_ok
           and elapsed < 300, f"{elapsed:.0f} s")
