"""Command line: configuration, pipelines, verification suites and export.

    qfflow <command> [--config PATH] [--out DIR] [--level K] [--cutoff N]
                     [--scale T] [--words LIST] [--seed RNGSEED]

Commands: build-surface, solve-vortex, find-orbits, lengths, mls, verify,
export.  Exit codes: 0 pass, 1 suite failure, 2 configuration error,
3 numerical failure.  Every command writes ``report.json`` to the output
directory; it is byte-identical across runs with the same configuration
except for the ``timing`` block.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalFailure, QFError

SCHEMA_VERSION = "1.0"
COMMANDS = ("build-surface", "solve-vortex", "find-orbits", "lengths", "mls", "verify", "export")
SUITES = ("bracket", "structure", "holomorphy", "weak_bundle", "conjugacy", "wolf", "gauss_bonnet",
          "qdiff", "harmonic")

DEFAULTS: Dict = {
    "seed_coefficients": [[1.0, 0.0], [0.3, 0.0], [0.0, 0.1]],
    "scale": 0.3,
    "cutoff": 6,
    "level": 3,
    "degree": None,
    "words": ["a", "b", "ab"],
    "rng_seed": 0,
    "loop_vertices": 512,
    "corrupt_rs": False,
    "formats": ["json", "csv", "svg"],
    "output": "qfflow-out",
    "tolerances": {
        "newton": 1e-11,
        "orbit": 1e-12,
        "ode": 1e-12,
        "shortening": 1e-10,
        "mls": 5e-3,
        "bracket": 1e-4,
        "holomorphy": 1e-4,
        "norm_identity": 1e-12,
        "curvature": 1e-6,
        "weak_bundle": 1e-4,
        "alpha_beta": 1e-5,
        "psi": 1e-4,
        "volume": 1e-4,
        "alpha_F": 1e-5,
        "kernel": 1e-4,
        "h_norm": 1e-12,
        "rotation": 1e-10,
        "wolf_HL": 1e-8,
        "gauss_bonnet": 1e-3,
        "automorphy": 1e-8,
        "hopf": 0.05,
        "volume_form": 1e-9,
        "period_flip": 1e-6,
    },
    "samples": {
        "bracket": 100,
        "norm_identity": 1000,
        "curvature": 200,
        "weak_bundle": 20,
        "weak_bundle_time": 5.0,
        "conjugacy": 100,
        "h_norm": 1000,
    },
    "suites": {name: name not in ("qdiff", "harmonic") for name in SUITES},
}

# documented ranges for tolerances: (lower, upper)
TOL_RANGE = (1e-14, 0.5)


# --- configuration -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed_coefficients: List[complex]
    scale: float
    cutoff: int
    level: int
    degree: Optional[int]
    words: List[str]
    rng_seed: int
    loop_vertices: int
    corrupt_rs: bool
    formats: List[str]
    output: str
    tolerances: Dict[str, float]
    samples: Dict[str, float]
    suites: Dict[str, bool]

    def as_dict(self) -> Dict:
        d = dict(self.__dict__)
        d["seed_coefficients"] = [[c.real, c.imag] for c in self.seed_coefficients]
        return d

    def canonical(self) -> str:
        """Configuration without the output location, as canonical JSON."""
        d = self.as_dict()
        d.pop("output")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _merge(base: Dict, over: Dict, path: str = "") -> Dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown configuration key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"configuration key {path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def _complex(c) -> complex:
    if isinstance(c, (int, float)):
        return complex(c)
    if isinstance(c, (list, tuple)) and len(c) == 2 and all(isinstance(x, (int, float)) for x in c):
        return complex(c[0], c[1])
    raise ConfigError(f"seed coefficient {c!r} must be a number or a [re, im] pair")


def build_config(raw: Optional[Dict] = None, **overrides) -> ExperimentConfig:
    """Merge ``raw`` and non-None ``overrides`` onto the defaults and validate."""
    from .fuchsian import Word, parse_words

    d = _merge(DEFAULTS, raw or {})
    for k, v in overrides.items():
        if v is not None:
            d[k] = v
    try:
        seeds = [_complex(c) for c in d["seed_coefficients"]]
    except TypeError as exc:
        raise ConfigError("seed_coefficients must be a list") from exc
    if len(seeds) != 3 or not any(seeds):
        raise ConfigError("seed_coefficients needs three entries, not all zero")
    if isinstance(d["words"], str):
        d["words"] = parse_words(d["words"])
    try:
        words = [str(Word(w)) for w in d["words"]]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not words or any(w == "" for w in words):
        raise ConfigError("words must be a non-empty list of non-trivial words")

    def integer(name, lo, hi):
        v = d[name]
        if isinstance(v, bool) or not isinstance(v, int) or not lo <= v <= hi:
            raise ConfigError(f"{name} must be an integer in [{lo}, {hi}]")
        return v

    level = integer("level", 0, 5)
    cutoff = integer("cutoff", 1, 8)
    vertices = integer("loop_vertices", 64, 8192)
    rng_seed = integer("rng_seed", 0, 2**32 - 1)
    degree = d["degree"]
    if degree is not None:
        degree = integer("degree", 10, 120)
    scale = d["scale"]
    if isinstance(scale, bool) or not isinstance(scale, (int, float)) or not math.isfinite(scale):
        raise ConfigError("scale must be a finite number")
    # pre-flight: u >= 0 for the Blaschke metric, so |A|_g <= |A|_sigma <= |scale|
    if abs(scale) >= 1:
        raise ConfigError("scale must satisfy |scale| < 1 (admissibility |A|_g < 1)")
    for k, v in d["tolerances"].items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not TOL_RANGE[0] <= v <= TOL_RANGE[1]:
            raise ConfigError(f"tolerance {k!r} outside the documented range {TOL_RANGE}")
    for k, v in d["samples"].items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"sample setting {k!r} must be positive")
    if not 1 <= d["samples"]["weak_bundle_time"] <= 10:
        raise ConfigError("samples.weak_bundle_time must lie in [1, 10]")
    for k, v in d["suites"].items():
        if not isinstance(v, bool):
            raise ConfigError(f"suite toggle {k!r} must be true or false")
    formats = list(d["formats"])
    if any(f not in ("json", "csv", "svg") for f in formats):
        raise ConfigError("formats must be a subset of json, csv, svg")
    if "json" not in formats:
        formats.append("json")
    if not isinstance(d["corrupt_rs"], bool):
        raise ConfigError("corrupt_rs must be true or false")
    return ExperimentConfig(seeds, float(scale), cutoff, level, degree, words, rng_seed, vertices,
                            d["corrupt_rs"], sorted(set(formats)), str(d["output"]), d["tolerances"],
                            d["samples"], d["suites"])


def load_config(path: Optional[str], **overrides) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    return build_config(raw, **overrides)


# --- report ------------------------------------------------------------------

def checked(value: float, tolerance: float, mode: str = "le") -> Dict:
    """A numeric entry with its tolerance and pass flag."""
    value = float(value)
    ok = {"le": value <= tolerance, "gt": value > tolerance}[mode]
    return {"value": value, "tolerance": float(tolerance), "pass": bool(ok) and math.isfinite(value)}


@dataclass
class Report:
    command: str
    config: ExperimentConfig
    results: Dict = field(default_factory=dict)
    suites: Dict = field(default_factory=dict)
    timing: Dict = field(default_factory=dict)
    error: Optional[Dict] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(s["pass"] for s in self.suites.values())

    def to_dict(self) -> Dict:
        import scipy

        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": json.loads(self.config.canonical()),
            "config_hash": self.config.hash,
            "provenance": {"package": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                           "python": platform.python_version()},
            "results": self.results,
            "suites": self.suites,
            "status": "error" if self.error else ("pass" if self.passed else "fail"),
            "error": self.error,
            "timing": self.timing,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


# --- pipeline ----------------------------------------------------------------

class Pipeline:
    """Lazily built objects shared by all stages, with per-stage timing."""

    def __init__(self, config: ExperimentConfig, report: Report):
        self.cfg, self.report = config, report
        self._cache: Dict = {}
        self.stage = "setup"

    def timed(self, name: str, fn: Callable):
        self.stage = name
        t0 = time.perf_counter()
        out = fn()
        self.report.timing[name] = self.report.timing.get(name, 0.0) + time.perf_counter() - t0
        return out

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = self.timed(key, fn)
        return self._cache[key]

    @property
    def group(self):
        from .fuchsian import build_octagon_group

        return self._get("build", build_octagon_group)

    @property
    def mesh(self):
        from .blaschke import build_mesh

        return self._get("mesh", lambda: build_mesh(self.group, self.cfg.level))

    @property
    def A(self):
        from .qdiff import QuadraticDifferential, project

        def make():
            raw = QuadraticDifferential(tuple(self.cfg.seed_coefficients), self.cfg.cutoff, self.cfg.scale,
                                        group=self.group)
            return project(raw)

        return self._get("qdiff", make)

    @property
    def family(self):
        from .blaschke import MetricFamily

        return self._get("family", lambda: MetricFamily(self.mesh, self.A, self.cfg.degree,
                                                        self.cfg.tolerances["newton"]))

    @property
    def B(self):
        return self._get("vortex", lambda: self.family.metric(self.cfg.scale))

    def orbit(self, word: str, sign: int = 1):
        from .orbits import find_orbit

        A = self.A if sign > 0 else self.A.negated()
        tol = self.cfg.tolerances
        return self._get(f"orbit:{word}:{sign}", lambda: find_orbit(
            self.B, A, word, tol=tol["orbit"], family=self.family, ode_tol=tol["ode"]))

    def length(self, word: str, sign: int):
        from .metrics import h_tensor, loop_shorten

        return self._get(f"length:{word}:{sign}", lambda: loop_shorten(
            h_tensor(self.B, self.A, sign), word, self.cfg.loop_vertices, self.cfg.tolerances["shortening"]))

    def states(self, n: int, salt: int):
        """Deterministic random states in the octagon."""
        from .dynamics import UnitTangentState
        from .qdiff import octagon_samples

        rng = np.random.default_rng([self.cfg.rng_seed, salt])
        z = octagon_samples(self.group, int(n), seed=int(rng.integers(2**31)))
        th = rng.uniform(0, 2 * np.pi, len(z))
        return [UnitTangentState(complex(zi), float(t)) for zi, t in zip(z, th)]


def _orbit_record(orb) -> Dict:
    ev = orb.transverse_eigenvalues()
    return {"word": str(orb.word), "T": orb.period, "integral_v_lambda": orb.integral_v_lambda,
            "residual": orb.residual, "newton_iterations": orb.newton_iterations,
            "transverse_eigenvalue_moduli": sorted(float(abs(e)) for e in ev), "samples": len(orb.t)}


# --- commands ----------------------------------------------------------------

def cmd_build_surface(p: Pipeline) -> None:
    from .fuchsian import interior_angle, is_torsion_free_sample, octagon_area
    from .geometry import classify

    g = p.group
    mesh = p.mesh
    gens = {}
    for c, m in sorted(g.generators.items()):
        cls = classify(m)
        gens[c] = {"trace_re": float(abs(m.trace.real)), "translation_length": cls.translation_length}
    angle_sum = sum(interior_angle(g, j) for j in range(8))
    p.report.results["surface"] = {
        "generators": gens,
        "angle_sum_minus_2pi": angle_sum - 2 * np.pi,
        "octagon_area": octagon_area(g),
        "torsion_free_sample": bool(is_torsion_free_sample(g)),
        "mesh": {"level": mesh.refinement_level, "vertex_ids": mesh.n_ids, "triangles": len(mesh.triangles),
                 "euler_characteristic": mesh.euler_characteristic(), "area": mesh.total_area()},
    }
    p.report.suites["surface_area"] = checked(abs(mesh.total_area() - 4 * np.pi) / (4 * np.pi), 1e-9)
    p.report.suites["euler_characteristic"] = checked(abs(mesh.euler_characteristic() + 2), 0)


def cmd_solve_vortex(p: Pipeline) -> None:
    from .blaschke import gauss_bonnet, spectral_pde_residual

    B = p.B
    K = B.vertex_curvature()
    gb = gauss_bonnet(B)
    rec = B.newton
    p.report.results["vortex"] = {
        "newton_iterations": rec.iterations,
        "newton_residuals": rec.residuals,
        "u_max": float(np.max(B.u)),
        "u_min": float(np.min(B.u)),
        "K_min": float(np.min(K)),
        "K_max": float(np.max(K)),
        "gauss_bonnet": gb,
        "spectral_degree": B.smooth.degree if B.smooth is not None else None,
        "spectral_pde_residual": spectral_pde_residual(B.smooth, p.A) if B.smooth is not None else None,
    }
    p.report.suites["newton_residual"] = checked(rec.residuals[-1], 1e-10)
    p.report.suites["newton_iterations"] = checked(rec.iterations, 10)
    p.report.suites["curvature_range"] = {"value": [float(np.min(K)), float(np.max(K))], "tolerance": [-1.0, 0.0],
                                          "pass": bool(np.min(K) >= -1 - 1e-12 and np.max(K) < 0)}


def cmd_find_orbits(p: Pipeline) -> None:
    tol = p.cfg.tolerances
    recs = []
    vol = []
    for w in p.cfg.words:
        o, om = p.orbit(w, 1), p.orbit(w, -1)
        r = _orbit_record(o)
        r["T_minus"] = om.period
        r["integral_v_lambda_minus"] = om.integral_v_lambda
        r["period_flip"] = checked(abs(o.period - om.period), tol["period_flip"])
        recs.append(r)
        vol.append(abs(o.integral_v_lambda))
        p.report.suites[f"period_flip:{w}"] = r["period_flip"]
    p.report.results["orbits"] = recs
    p.report.results["volume_form_preserved"] = bool(max(vol) <= tol["volume_form"])


def cmd_lengths(p: Pipeline) -> None:
    out = []
    for w in p.cfg.words:
        l1, loop1 = p.length(w, 1)
        l2, _ = p.length(w, -1)
        out.append({"word": w, "l_g1": l1, "l_g2": l2, "closure_residual": loop1.closure_residual()})
    p.report.results["lengths"] = out


def cmd_mls(p: Pipeline) -> None:
    from .metrics import mls_residuals

    tol = p.cfg.tolerances["mls"]
    cmd_find_orbits(p)
    recs = []
    for w in p.cfg.words:
        o = p.orbit(w, 1)
        l1, _ = p.length(w, 1)
        l2, _ = p.length(w, -1)
        m = mls_residuals(w, o.period, o.integral_v_lambda, l1, l2).as_dict()
        for k in ("residual_14", "residual_15", "residual_mean", "residual_flip"):
            m[k] = checked(m[k], tol)
            p.report.suites[f"mls:{w}:{k}"] = m[k]
        recs.append(m)
    p.report.results["mls"] = recs


# --- verification suites -------------------------------------------------------

def _suite(p: Pipeline, name: str, entries: Dict[str, Dict], extra: Optional[Dict] = None) -> None:
    ok = all(e["pass"] for e in entries.values())
    rec = {"pass": ok, "checks": entries}
    if extra:
        rec.update(extra)
    p.report.suites[name] = rec


def suite_bracket(p: Pipeline):
    from .dynamics import structure_residuals

    tol = p.cfg.tolerances
    R = np.array([[r.bracket_VX, r.bracket_XH, r.bracket_HV] for r in
                  (structure_residuals(p.B, p.A, s) for s in p.states(p.cfg.samples["bracket"], 1))])
    _suite(p, "bracket", {"[V,X]-H": checked(R[:, 0].max(), tol["bracket"]),
                          "[X,H]-KV": checked(R[:, 1].max(), tol["bracket"]),
                          "[H,V]-X": checked(R[:, 2].max(), tol["bracket"])})


def suite_holomorphy(p: Pipeline):
    from .dynamics import frames_many, local_data, structure_residuals

    tol = p.cfg.tolerances
    R = np.array([[r.holomorphy_1, r.holomorphy_2] for r in
                  (structure_residuals(p.B, p.A, s) for s in p.states(p.cfg.samples["bracket"], 2))])
    st = p.states(p.cfg.samples["norm_identity"], 3)
    z = np.array([s.z for s in st])
    th = np.array([s.theta for s in st])
    _, _, lam, vl, _ = frames_many(p.B, p.A, z, th)
    d = local_data(p.B, p.A, z)
    ident = np.abs(vl**2 / 4 + lam**2 - np.abs(d.a) ** 2 * np.exp(-4 * d.phi))
    _suite(p, "holomorphy", {"XVl-2Hl": checked(R[:, 0].max(), tol["holomorphy"]),
                             "HVl+2Xl": checked(R[:, 1].max(), tol["holomorphy"]),
                             "norm_identity": checked(ident.max(), tol["norm_identity"])})


def suite_structure(p: Pipeline):
    from .blaschke import curvature_residual
    from .qdiff import octagon_samples

    rng = np.random.default_rng([p.cfg.rng_seed, 4])
    z = octagon_samples(p.group, int(p.cfg.samples["curvature"]), seed=int(rng.integers(2**31)))
    res = curvature_residual(p.B, z)
    _suite(p, "structure", {"K_from_phi": checked(res.max(), p.cfg.tolerances["curvature"]),
                            "newton_residual": checked(p.B.newton.residuals[-1], 1e-10)})


def suite_weak_bundle(p: Pipeline):
    from .dynamics import frames, weak_bundle_residual

    tol = p.cfg.tolerances
    T = float(p.cfg.samples["weak_bundle_time"])
    stable, rates, flip = [], [], []
    Am = p.A.negated()
    for s in p.states(p.cfg.samples["weak_bundle"], 5):
        r = weak_bundle_residual(p.B, p.A, s, T, corrupt_rs=p.cfg.corrupt_rs)
        stable.append(r.stable_residual)
        rates.append(r.unstable_alignment_rate)
        flip.append(abs(frames(p.B, p.A, s).r_u + frames(p.B, Am, s).r_s))
    _suite(p, "weak_bundle", {"stable_residual": checked(max(stable), tol["weak_bundle"]),
                              "alignment_rate_min": checked(min(rates), 0.0, "gt"),
                              "ru_plus_rs_flip": checked(max(flip), 0.0)},
           {"corrupt_rs": p.cfg.corrupt_rs})


def suite_conjugacy(p: Pipeline):
    from .conjugacy import coframe_residuals, i_map, rotation_commutation

    tol = p.cfg.tolerances
    R = []
    for s in p.states(p.cfg.samples["conjugacy"], 6):
        c = coframe_residuals(p.B, p.A, s)
        R.append([c.res_alpha, c.res_beta, c.res_psi, c.res_volume, abs(c.alpha_F - c.alpha_F_expected),
                  max(c.kernel_F, c.kernel_stable), rotation_commutation(p.B, p.A, s, 0.7),
                  c.volume_factor])
    R = np.array(R)
    hn = []
    inv = []
    for s in p.states(p.cfg.samples["h_norm"], 7):
        b = i_map(p.B, p.A, s)
        hn.append(abs(b.h_norm - 1))
        inv.append(b.inverse_residual)
    _suite(p, "conjugacy", {"h_norm": checked(max(hn), tol["h_norm"]),
                            "inverse": checked(max(inv), tol["h_norm"]),
                            "alpha": checked(R[:, 0].max(), tol["alpha_beta"]),
                            "beta": checked(R[:, 1].max(), tol["alpha_beta"]),
                            "psi": checked(R[:, 2].max(), tol["psi"]),
                            "volume": checked(R[:, 3].max(), tol["volume"]),
                            "volume_positive": checked(R[:, 7].min(), 0.0, "gt"),
                            "alpha_F": checked(R[:, 4].max(), tol["alpha_F"]),
                            "kernel": checked(R[:, 5].max(), tol["kernel"]),
                            "rotation": checked(R[:, 6].max(), tol["rotation"])})


def fem_error_estimate(mesh, A, tol: float = 1e-11):
    """Max error of e^{2u} from the P1 solve at ``mesh``, estimated against one
    refinement (second order): (4/3) max |e^{2u_L} - e^{2u_{L+1}}| on the
    common vertices.  Returns (estimate, coarse metric)."""
    from .blaschke import build_mesh, solve_vortex

    coarse = solve_vortex(mesh, A, tol)
    fine_mesh = build_mesh(mesh.group, mesh.refinement_level + 1)
    fine = solve_vortex(fine_mesh, A, tol)
    zc = mesh.vertices[mesh.representatives]
    zf = fine_mesh.vertices[fine_mesh.representatives]
    idx = np.array([int(np.argmin(np.abs(zf - z))) for z in zc])
    diff = np.abs(np.exp(2 * coarse.u) - np.exp(2 * fine.u[idx]))
    return float(4.0 / 3.0 * diff.max()), coarse


def suite_wolf(p: Pipeline):
    from .harmonic import wolf_identities

    err, coarse = p.timed("wolf_reference", lambda: fem_error_estimate(p.mesh, p.A, p.cfg.tolerances["newton"]))
    z = p.mesh.vertices[p.mesh.representatives]
    w = wolf_identities(p.B, p.A, z, solver_error=err, reference_u=coarse.u)
    _suite(p, "wolf", {"HL_minus_A2": checked(w.residual_HL, p.cfg.tolerances["wolf_HL"]),
                       "H_minus_e2u": checked(w.residual_H, max(2 * err, 1e-12)),
                       "e_J_split": checked(w.densities.identity_residual(), 1e-14)},
           {"solver_error_estimate": err})


def suite_gauss_bonnet(p: Pipeline):
    from .blaschke import gauss_bonnet

    gb = gauss_bonnet(p.B)
    K = p.B.vertex_curvature()
    _suite(p, "gauss_bonnet", {"relative": checked(abs(gb + 4 * np.pi) / (4 * np.pi), p.cfg.tolerances["gauss_bonnet"]),
                               "K_min_plus_1": checked(-(K.min() + 1), 1e-12),
                               "K_max": checked(K.max(), 0.0, "le") if K.max() < 0 else
                               {"value": float(K.max()), "tolerance": 0.0, "pass": False}},
           {"integral": gb})


def suite_qdiff(p: Pipeline):
    from .qdiff import automorphy_residual, automorphy_study, octagon_samples, zero_count

    meds = automorphy_study(p.cfg.seed_coefficients, (4, 5, 6, 7), 100, p.cfg.rng_seed + 11, p.group)
    decreasing = all(b < a for a, b in zip(meds, meds[1:]))
    n0 = zero_count(p.A)
    z = octagon_samples(p.group, 100, seed=p.cfg.rng_seed + 12)
    exact = max(float(np.max(automorphy_residual(p.A, z, g))) for g in p.group.generators.values())
    _suite(p, "qdiff", {"median_decreasing": {"value": meds, "tolerance": "strictly decreasing", "pass": decreasing},
                        "zero_count": {"value": n0, "tolerance": 4, "pass": n0 == 4},
                        "projection_automorphy": checked(exact, p.cfg.tolerances["automorphy"])},
           {"projection_fit_residual": p.A.fit_residual})


def suite_harmonic(p: Pipeline):
    from .harmonic import DiscreteMap, heat_flow, hopf_extract
    from .metrics import h_tensor

    h = h_tensor(p.B, p.A, 1)
    f0 = DiscreteMap.identity(p.mesh).perturbed(0.25, p.cfg.rng_seed)
    r = heat_flow(p.mesh, h, f0)
    hs = hopf_extract(p.mesh, r.map, h)
    mono = bool(np.all(np.diff(r.energies) <= 0))
    _suite(p, "harmonic", {"energy_monotone": {"value": len(r.energies), "tolerance": "nonincreasing", "pass": mono},
                           "hopf_relative_l2": checked(hs.relative_l2(p.A), p.cfg.tolerances["hopf"])},
           {"dbar_residual": hs.dbar_residual, "steps": len(r.energies)})


SUITE_FUNCS = {"bracket": suite_bracket, "structure": suite_structure, "holomorphy": suite_holomorphy,
               "weak_bundle": suite_weak_bundle, "conjugacy": suite_conjugacy, "wolf": suite_wolf,
               "gauss_bonnet": suite_gauss_bonnet, "qdiff": suite_qdiff, "harmonic": suite_harmonic}


def cmd_verify(p: Pipeline) -> None:
    for name in SUITES:
        if p.cfg.suites.get(name, False):
            p.timed(f"suite:{name}", lambda f=SUITE_FUNCS[name]: f(p))


# --- export ------------------------------------------------------------------

def write_artifacts(p: Pipeline, out: Path, with_figures: bool) -> Dict[str, int]:
    """CSV tables and SVG figures for whatever the report already holds."""
    import csv

    from .blaschke import export_csv

    files: Dict[str, int] = {}
    fmts = p.cfg.formats
    if "csv" in fmts:
        if "vortex" in p._cache:
            files["mesh_fields.csv"] = export_csv(p.B, out / "mesh_fields.csv")
        for key, obj in sorted(p._cache.items()):
            if key.startswith("orbit:"):
                _, w, sgn = key.split(":")
                name = f"orbit_{w}_{'plus' if sgn == '1' else 'minus'}.csv"
                files[name] = _write_orbit_csv(obj, out / name)
            if key.startswith("length:"):
                _, w, sgn = key.split(":")
                name = f"loop_{w}_{'plus' if sgn == '1' else 'minus'}.csv"
                loop = obj[1]
                with open(out / name, "w", newline="") as fh:
                    wr = csv.writer(fh)
                    wr.writerow(["k", "x", "y"])
                    for k, zk in enumerate(loop.vertices):
                        wr.writerow([k, f"{zk.real:.15g}", f"{zk.imag:.15g}"])
                files[name] = len(loop.vertices)
        if "mls" in p.report.results:
            keys = ["word", "T", "int_v_lambda", "l_g1", "l_g2", "residual_14", "residual_15",
                    "residual_mean", "residual_flip"]
            with open(out / "mls.csv", "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(keys)
                for r in p.report.results["mls"]:
                    wr.writerow([r[k]["value"] if isinstance(r[k], dict) else r[k] for k in keys])
            files["mls.csv"] = len(p.report.results["mls"])
    if "svg" in fmts and with_figures:
        from .figures import octagon_svg, orbits_svg, zero_set_svg
        from .qdiff import zero_locations

        octagon_svg(p.group, out / "octagon.svg")
        files["octagon.svg"] = 1
        orbs = [obj for key, obj in sorted(p._cache.items()) if key.startswith("orbit:") and key.endswith(":1")]
        if orbs:
            orbits_svg(p.group, orbs, out / "orbits.svg")
            files["orbits.svg"] = 1
        if "qdiff" in p._cache:
            zeros = zero_locations(p.A) if not p.A.is_zero else np.array([])
            p.report.results["zeros"] = [[float(z.real), float(z.imag)] for z in zeros]
            zero_set_svg(p.group, p.A, zeros, out / "zeros.svg")
            files["zeros.svg"] = 1
    return files


def _write_orbit_csv(orbit, path) -> int:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "theta", "lambda", "v_lambda"])
        for t, y, l, v in zip(orbit.t, orbit.samples, orbit.lam, orbit.v_lambda):
            w.writerow([f"{t:.15g}", f"{y[0]:.15g}", f"{y[1]:.15g}", f"{y[2]:.15g}", f"{l:.15g}", f"{v:.15g}"])
    return len(orbit.t)


def cmd_export(p: Pipeline) -> None:
    cmd_mls(p)


COMMAND_FUNCS = {"build-surface": cmd_build_surface, "solve-vortex": cmd_solve_vortex,
                 "find-orbits": cmd_find_orbits, "lengths": cmd_lengths, "mls": cmd_mls,
                 "verify": cmd_verify, "export": cmd_export}


def run(config: ExperimentConfig, command: str = "mls", out: Optional[Path] = None) -> Report:
    """Execute ``command`` and write the report (and artifacts) to ``out``."""
    report = Report(command, config)
    p = Pipeline(config, report)
    t0 = time.perf_counter()
    try:
        COMMAND_FUNCS[command](p)
    except NumericalFailure as exc:
        report.error = {"stage": p.stage, "type": type(exc).__name__, "message": str(exc)}
    report.timing["total"] = time.perf_counter() - t0
    out = Path(out if out is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    figures = command in ("export", "build-surface", "find-orbits", "mls")
    files = write_artifacts(p, out, figures) if report.error is None else {}
    if files:
        report.results["files"] = files
    (out / "report.json").write_text(report.to_json())
    return report


def verify(config: ExperimentConfig, out: Optional[Path] = None) -> Report:
    return run(config, "verify", out)


def exit_code(report: Report) -> int:
    if report.error is not None:
        return 3
    return 0 if report.passed else 1


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="qfflow", description="Quasi-Fuchsian thermostat flow laboratory")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--level", type=int, help="mesh refinement level")
    ap.add_argument("--cutoff", type=int, help="Poincaré series cutoff N")
    ap.add_argument("--scale", type=float, help="scale t of the differential")
    ap.add_argument("--words", help="comma-separated words, e.g. a,b,ab")
    ap.add_argument("--seed", type=int, help="RNG seed of the sampling suites")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = load_config(args.config, level=args.level, cutoff=args.cutoff, scale=args.scale,
                          words=args.words, rng_seed=args.seed, output=args.out)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(cfg, args.command)
    except QFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    code = exit_code(report)
    status = {0: "pass", 1: "suite failure", 3: "numerical failure"}[code]
    print(f"{args.command}: {status} ({Path(cfg.output) / 'report.json'})")
    if report.error:
        print(f"  stage {report.error['stage']}: {report.error['type']}: {report.error['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
