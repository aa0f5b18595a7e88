"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary)."""

import json
import math
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from qfflow import blaschke, cli, conjugacy as cj, dynamics as dy, harmonic as hm, qdiff
from qfflow.metrics import h_tensor, loop_shorten, mls_residuals
from qfflow.orbits import find_orbit

GENERATORS = list("abcdABCD")
LENGTH_TWO = ["ab", "aB", "bc", "dA"]
MLS_WORDS = ["a", "b", "ab"]
RES_KEYS = ("residual_14", "residual_15", "residual_mean", "residual_flip")


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def states(group, n, seed):
    rng = np.random.default_rng(seed)
    z = qdiff.octagon_samples(group, n, seed=seed)
    return [dy.UnitTangentState(complex(w), float(t)) for w, t in zip(z, rng.uniform(0, 2 * np.pi, n))]


def test_criterion_1_hyperbolic_oracle(group, mesh3, A0):
    t0 = time.perf_counter()
    B = blaschke.solve_vortex(mesh3, A0, smooth_degree=blaschke.default_degree(3))
    dT, ivl = 0.0, 0.0
    for w in GENERATORS + LENGTH_TWO:
        o = find_orbit(B, A0, w)
        ell = 2 * math.acosh(abs(group.eval(w).trace) / 2)
        dT = max(dT, abs(o.period - ell))
        ivl = max(ivl, abs(o.integral_v_lambda))
    elapsed = time.perf_counter() - t0
    report(1, dT <= 1e-7 and ivl <= 1e-9 and elapsed <= 60,
           f"max|T - l| = {dT:.2e} (<= 1e-7), max|int V lambda| = {ivl:.2e} (<= 1e-9), "
           f"runtime {elapsed:.1f} s (<= 60)")


def _mls_table(B, A, family, n_vertices):
    res = {}
    for w in MLS_WORDS:
        o = find_orbit(B, A, w, family=family)
        l1, _ = loop_shorten(h_tensor(B, A, 1), w, n_vertices)
        l2, _ = loop_shorten(h_tensor(B, A, -1), w, n_vertices)
        r = mls_residuals(w, o.period, o.integral_v_lambda, l1, l2)
        res[w] = [getattr(r, k) for k in RES_KEYS]
    return res


def test_criterion_2_mls(group, A03):
    t0 = time.perf_counter()
    mesh = blaschke.build_mesh(group, 3)
    fam = blaschke.MetricFamily(mesh, A03)
    coarse = _mls_table(fam.metric(0.3), A03, fam, 512)
    elapsed = time.perf_counter() - t0
    fam4 = blaschke.MetricFamily(blaschke.build_mesh(group, 4), A03)
    fine = _mls_table(fam4.metric(0.3), A03, fam4, 1024)
    worst = max(max(v) for v in coarse.values())
    orders = {w: math.log2(max(coarse[w]) / max(fine[w])) for w in MLS_WORDS}
    ok = worst <= 5e-3 and all(o >= 1 for o in orders.values()) and elapsed <= 600
    report(2, ok, f"max residual {worst:.2e} (<= 5e-3), refinement orders "
           + ", ".join(f"{w}: {o:.2f}" for w, o in orders.items()) + f" (>= 1), runtime {elapsed:.0f} s (<= 600)")


def test_criterion_3_vortex(mesh3, A03, A0):
    B = blaschke.solve_vortex(mesh3, A03)
    Bz = blaschke.solve_vortex(mesh3, A0)
    K = B.vertex_curvature()
    gb = abs(blaschke.gauss_bonnet(B) + 4 * np.pi) / (4 * np.pi)
    ok = (B.newton.residuals[-1] <= 1e-10 and B.newton.iterations <= 10 and K.min() >= -1 and K.max() < 0
          and gb <= 1e-3 and np.max(np.abs(Bz.u)) <= 1e-10)
    report(3, ok, f"Newton residual {B.newton.residuals[-1]:.1e} in {B.newton.iterations} iterations, "
           f"K in [{K.min():.6f}, {K.max():.4f}], Gauss-Bonnet rel. error {gb:.1e}, A=0 |u| {np.max(np.abs(Bz.u)):.1e}")


def test_criterion_4_frames(group, B03, A03):
    R = np.array([list(vars(dy.structure_residuals(B03, A03, s)).values()) for s in states(group, 100, 41)])
    st = states(group, 1000, 42)
    z = np.array([s.z for s in st])
    _, _, lam, vl, _ = dy.frames_many(B03, A03, z, np.array([s.theta for s in st]))
    d = dy.local_data(B03, A03, z)
    ident = np.max(np.abs(vl ** 2 / 4 + lam ** 2 - np.abs(d.a) ** 2 * np.exp(-4 * d.phi)))
    br, ho = R[:, :3].max(), R[:, 3:5].max()
    report(4, br <= 1e-4 and ho <= 1e-4 and ident <= 1e-12,
           f"brackets {br:.1e}, holomorphy {ho:.1e} (<= 1e-4, 100 states), norm identity {ident:.1e} (<= 1e-12, 1000 states)")


def test_criterion_5_weak_bundles(group, B03, A03):
    st = states(group, 20, 51)
    rs = [dy.weak_bundle_residual(B03, A03, s, 5.0) for s in st]
    stable = max(r.stable_residual for r in rs)
    rate = min(r.unstable_alignment_rate for r in rs)
    exact = all(dy.frames(B03, A03, s).r_u == -dy.frames(B03, A03.negated(), s).r_s for s in states(group, 100, 52))
    report(5, stable <= 1e-4 and rate > 0 and exact,
           f"stable residual {stable:.1e} (<= 1e-4), min alignment rate {rate:.2f} (> 0), r_u(A) = -r_s(-A) exact: {exact}")


def test_criterion_6_conjugacy(group, B03, A03):
    hn = max(abs(cj.i_map(B03, A03, s).h_norm - 1) for s in states(group, 1000, 61))
    C = [cj.coframe_residuals(B03, A03, s) for s in states(group, 100, 62)]
    ab = max(max(c.res_alpha, c.res_beta) for c in C)
    psi = max(c.res_psi for c in C)
    vol = max(c.res_volume for c in C)
    aF = max(abs(c.alpha_F - c.alpha_F_expected) for c in C)
    ok = hn <= 1e-12 and ab <= 1e-5 and psi <= 1e-4 and vol <= 1e-4 and aF <= 1e-5
    report(6, ok, f"h-norm {hn:.1e}, alpha/beta {ab:.1e}, psi {psi:.1e}, volume {vol:.1e}, I*alpha(F) {aF:.1e}")


def test_criterion_7_quadratic_differentials(group):
    seeds = [(1.0, 0.3, 0.1j), (0.2, -1.0, 0.5)]
    meds = qdiff.automorphy_study(seeds[0], (4, 5, 6, 7), 100, group=group)
    decreasing = all(b < a for a, b in zip(meds, meds[1:]))
    counts = [qdiff.zero_count(qdiff.project(qdiff.QuadraticDifferential(s, 6, 0.3))) for s in seeds]
    report(7, decreasing and counts == [4, 4],
           "medians N=4..7 " + ", ".join(f"{m:.1e}" for m in meds) + f", zero counts {counts}")


def test_criterion_8_volume_dichotomy(group, B03, A03, family3, B0, A0):
    big = 0.0
    flip = 0.0
    for w in "abcd":
        o = find_orbit(B03, A03, w, family=family3)
        om = find_orbit(B03, A03.negated(), w, family=family3)
        big = max(big, abs(o.integral_v_lambda))
        flip = max(flip, abs(o.period - om.period))
    zero = max(abs(find_orbit(B0, A0, w).integral_v_lambda) for w in "abcd")
    report(8, big > 1e-3 and zero <= 1e-9 and flip <= 1e-6,
           f"t=0.3 max|int V lambda| {big:.3f} (> 1e-3), t=0 max {zero:.1e} (<= 1e-9), +/-A period gap {flip:.1e} (<= 1e-6)")


def test_criterion_9_harmonic(group, A03):
    errs, mono = [], True
    for lev in (3, 4):
        mesh = blaschke.build_mesh(group, lev)
        B = blaschke.MetricFamily(mesh, A03).metric(0.3)
        h = h_tensor(B, A03, 1)
        r = hm.heat_flow(mesh, h, hm.DiscreteMap.identity(mesh).perturbed(0.25, 3))
        mono = mono and bool(np.all(np.diff(r.energies) <= 0))
        errs.append(hm.hopf_extract(mesh, r.map, h).relative_l2(A03))
        if lev == 3:
            err, coarse = cli.fem_error_estimate(mesh, A03)
            w = hm.wolf_identities(B, A03, mesh.vertices[mesh.representatives], solver_error=err,
                                   reference_u=coarse.u)
    ok = mono and errs[0] <= 0.05 and errs[1] < errs[0] and w.residual_HL <= 1e-8 and w.residual_H <= 2 * err
    report(9, ok, f"energy monotone {mono}, Hopf rel. L2 {errs[0]:.2%} (level 3, <= 5%) -> {errs[1]:.2%} (level 4), "
           f"HL {w.residual_HL:.1e} (<= 1e-8), H - e^2u {w.residual_H:.1e} (<= 2 x {err:.1e})")


def test_criterion_10_determinism(tmp_path):
    cfg = cli.build_config({"level": 2, "words": ["a", "b"], "loop_vertices": 256})
    reps = []
    for k in range(2):
        cli.run(cfg, "mls", tmp_path / f"r{k}")
        cli.run(cfg, "verify", tmp_path / f"v{k}")
        reps.append([json.loads((tmp_path / f"{d}{k}" / "report.json").read_text()) for d in "rv"])
    for pair in reps:
        for r in pair:
            r.pop("timing")
    same = reps[0] == reps[1]
    files = sorted(p.name for p in (tmp_path / "r0").iterdir() if p.name != "report.json")
    same_files = all((tmp_path / "r0" / f).read_bytes() == (tmp_path / "r1" / f).read_bytes() for f in files)
    report(10, same and same_files,
           f"reports identical modulo timing: {same}, {len(files)} artifact files byte-identical: {same_files}")
