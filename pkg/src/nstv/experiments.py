"""Experiment configuration, preset catalog and the artifact-writing runner.

A config is a plain JSON-compatible dict (see ``DEFAULT_CONFIG``); nested
keys are merged over the defaults.

``solver.scaling`` selects how ``alpha`` and ``beta`` are read.  With
``"absolute"`` they enter the functional as given (data misfit measured with
the boundary quadrature weight, so values are not comparable with figure
captions elsewhere).  With ``"relative"`` (the preset default) they are
multiplied by ``||d||^2 / TV(truth)`` and ``||d||^2 / ||W f_truth||_1`` for the
clean data ``d``, which makes one value usable across source sizes, weight
choices and grids.  Relative scaling uses the known truth and is meant for
synthetic reproduction runs only.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from .pde import assemble_forward, build_grid, conductivity_field, load_operator, save_operator
from .phantoms import add_noise, make_phantom, support_metrics
from .tv import tv_value
from .solver import (SolveReport, SolverConfig, TVProblem, admm_inner, basis_pursuit,
                     bregman_outer)
from .weights import (WeightField, column_norm_weights, project_out_constants, save_weights,
                      sparsity_weights, tv_weights_2d, weight_1d)

__all__ = [
    "DEFAULT_CONFIG",
    "PRESETS",
    "FIGURE_MANIFEST",
    "ExperimentError",
    "resolve_config",
    "preset",
    "build_weights",
    "effective_parameters",
    "run_experiment",
    "write_pgm",
    "write_field_csv",
]

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    """A stage of an experiment failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


DEFAULT_CONFIG = {
    "name": "experiment",
    "figure": None,
    "description": "",
    "kind": "reconstruction",   # reconstruction | weights
    "dim": 2,
    "n": 64,
    "conductivity": "isotropic",
    "phantom": {"kind": "square", "params": {"center": [0.5, 0.5], "size": 0.5}},
    "weights": {
        "tv": "greens",         # greens | unit | none
        "p": "inf",
        "bc": "dirichlet",
        "floor": 1e-6,
        "extended": True,
        "sparsity": None,       # None | projection | column
        "q": 120,
    },
    "solver": {
        "method": "bregman",    # bregman | penalized | basis_pursuit
        "mode": "tv",           # basis-pursuit regularizer: tv | l1 | hybrid
        "bp_method": "bregman",
        "gamma": 1.0,
        "scale": 1.0,
        "scaling": "relative",  # relative | absolute
        "alpha": 0.1,
        "beta": 0.0,
        "admm_penalty": 1.0,
        "max_admm_iters": 3000,
        "admm_tol": 1e-5,
        "max_bregman_iters": 50,
        "morozov_tau": 1.0,
        "constraint_tol": 1e-8,
        "adapt_penalty": True,
    },
    "noise_level": 0.01,
    "seed": 0,
    "threshold_frac": 0.5,
    "cache_dir": None,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _square(center, size):
    return {"kind": "square", "params": {"center": list(center), "size": size}}


_SMALL = _square((0.5, 0.5), 0.15)
_LARGE = _square((0.5, 0.5), 0.5)
_POSITIONS = {
    "a": _square((0.3, 0.3), 0.2),
    "b": _square((0.5, 0.7), 0.2),
    "c": _square((0.75, 0.5), 0.2),
}
_ADVANCED = {
    "two_sources": {"kind": "two_sources", "params": {"sources": [
        {"center": [0.3, 0.3], "size": 0.2}, {"center": [0.7, 0.65], "size": 0.2}]}},
    "l_shape": {"kind": "l_shape", "params": {"lo": [0.3, 0.3], "hi": [0.7, 0.7], "notch": 0.5}},
    "diamond": {"kind": "diamond", "params": {"center": [0.5, 0.5], "radius": 0.2}},
}
_ANISO_SOURCES = {
    "a": _square((0.3, 0.5), 0.2),
    "b": _square((0.5, 0.5), 0.2),
    "c": _square((0.7, 0.5), 0.2),
}

_TVW = {"weights": {"tv": "greens", "extended": True}, "solver": {"alpha": 0.1, "beta": 0.0}}
_TVI = {"weights": {"tv": "unit", "extended": False}, "solver": {"alpha": 1e-5, "beta": 0.0}}
_HYB_W = {"weights": {"tv": "greens", "extended": True, "sparsity": "projection"},
          "solver": {"alpha": 0.1, "beta": 1.0}}
_HYB_I = {"weights": {"tv": "unit", "extended": False, "sparsity": "projection"},
          "solver": {"alpha": 1e-5, "beta": 1.0}}


def _p(name, figure, description, *parts, **extra) -> dict:
    cfg = {"name": name, "figure": figure, "description": description}
    for part in parts:
        cfg = _merge(cfg, part)
    return _merge(cfg, extra)


def _build_presets() -> dict:
    out = {}

    def add(cfg):
        out[cfg["name"]] = cfg

    for key, src in {"a": _square((0.5, 0.5), 0.2), "b": _square((0.3, 0.65), 0.2),
                     "c": _LARGE, "d": _square((0.65, 0.35), 0.1)}.items():
        add(_p("motivation_unweighted" + ("" if key == "a" else f"_{key}"), "motivation",
               "standard TV on noiseless data: sources drift toward the boundary",
               _TVI, {"phantom": src, "noise_level": 0.0,
                      "solver": {"method": "basis_pursuit", "mode": "tv", "scale": 1e-6,
                                 "max_bregman_iters": 20, "constraint_tol": 1e-4}}))
    for p in ("1", "inf"):
        add(_p(f"tv_weights_p{p}", "TVweights", f"Green's-function TV weights, p = {p}",
               {"kind": "weights", "weights": {"p": p}}))
    for p in ("1", "inf"):
        add(_p(f"compare_p_{p}", "compare", f"weighted TV with p = {p} weights",
               _TVW, {"phantom": _SMALL, "weights": {"p": p}}))
    for tag, src in (("smallsource", _SMALL), ("largesource", _LARGE)):
        add(_p(f"{tag}_tvw", tag, "extended weighted TV", _TVW, {"phantom": src}))
        add(_p(f"{tag}_hybrid_w", tag, "weighted TV plus weighted l1", _HYB_W, {"phantom": src}))
        add(_p(f"{tag}_hybrid_unweighted", tag, "standard TV plus weighted l1", _HYB_I,
               {"phantom": src}))
    for key, src in _POSITIONS.items():
        add(_p(f"position_{key}_tvw", "position", "positional influence, weighted TV", _TVW,
               {"phantom": src}))
        add(_p(f"position_{key}_hybrid", "position", "positional influence, hybrid", _HYB_W,
               {"phantom": src}))
    for key, src in _ADVANCED.items():
        add(_p(f"advanced_{key}_tvw", "advancedsources", f"{key}, weighted TV", _TVW,
               {"phantom": src}))
        add(_p(f"advanced_{key}_hybrid", "advancedsources", f"{key}, hybrid", _HYB_W,
               {"phantom": src}))
    for cond, fig in (("D1", "anisotropic1"), ("D2", "anisotropic2")):
        for key, src in _ANISO_SOURCES.items():
            add(_p(f"{cond.lower()}_{key}_tvw", fig, f"conductivity {cond}, weighted TV", _TVW,
                   {"phantom": src, "conductivity": cond}))
            add(_p(f"{cond.lower()}_{key}_tvi", fig, f"conductivity {cond}, standard TV", _TVI,
                   {"phantom": src, "conductivity": cond}))
    add(_p("theorem_1d", "variational1d", "1D single jump, penalized weighted TV",
           {"dim": 1, "n": 200, "phantom": {"kind": "heaviside_1d",
                                           "params": {"x_star": 0.65, "rho": 1.5, "tau": 1.25}},
            "noise_level": 0.0,
            "weights": {"tv": "1d", "extended": False},
            "solver": {"method": "penalized", "scaling": "absolute", "alpha": 0.05472, "admm_tol": 1e-9,
                       "max_admm_iters": 20000}}))
    return out


PRESETS = _build_presets()

# figure label -> presets that reproduce it
FIGURE_MANIFEST = {
    "motivation": ["motivation_unweighted", "motivation_unweighted_b",
                   "motivation_unweighted_c", "motivation_unweighted_d"],
    "TVweights": ["tv_weights_p1", "tv_weights_pinf"],
    "compare": ["compare_p_1", "compare_p_inf"],
    "smallsource": ["smallsource_tvw", "smallsource_hybrid_w", "smallsource_hybrid_unweighted"],
    "largesource": ["largesource_tvw", "largesource_hybrid_w", "largesource_hybrid_unweighted"],
    "position": [f"position_{k}_{m}" for k in "abc" for m in ("tvw", "hybrid")],
    "advancedsources": [f"advanced_{k}_{m}" for k in _ADVANCED for m in ("tvw", "hybrid")],
    "anisotropic1": [f"d1_{k}_{m}" for k in "abc" for m in ("tvw", "tvi")],
    "anisotropic2": [f"d2_{k}_{m}" for k in "abc" for m in ("tvw", "tvi")],
    "variational1d": ["theorem_1d"],
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}")
    return resolve_config(PRESETS[name])


def resolve_config(config: Optional[dict]) -> dict:
    """Merge ``config`` over the defaults and validate it."""
    config = dict(config or {})
    if "preset" in config:
        base = PRESETS[config.pop("preset")]
        config = _merge(base, config)
    cfg = _merge(DEFAULT_CONFIG, config)
    if cfg["kind"] not in ("reconstruction", "weights"):
        raise ValueError(f"unknown experiment kind {cfg['kind']!r}")
    if cfg["dim"] not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if cfg["noise_level"] < 0:
        raise ValueError("noise_level must be nonnegative")
    if cfg["weights"]["tv"] not in ("greens", "unit", "1d", "none"):
        raise ValueError(f"unknown TV weight kind {cfg['weights']['tv']!r}")
    if cfg["solver"]["scaling"] not in ("relative", "absolute"):
        raise ValueError("solver.scaling must be 'relative' or 'absolute'")
    if cfg["solver"]["method"] not in ("bregman", "penalized", "basis_pursuit"):
        raise ValueError(f"unknown solver method {cfg['solver']['method']!r}")
    return cfg


def _p_value(p) -> float:
    return np.inf if str(p).lower() in ("inf", "infinity") else float(p)


def _operator(cfg: dict):
    grid = build_grid(cfg["dim"], cfg["n"])
    cache = cfg.get("cache_dir")
    if cache:
        path = Path(cache) / f"K_{cfg['dim']}d_{cfg['n']}_{cfg['conductivity']}"
        if path.with_suffix(".npy").exists():
            return load_operator(path)
        K = assemble_forward(grid, conductivity_field(cfg["conductivity"], grid))
        save_operator(K, path)
        return K
    return assemble_forward(grid, conductivity_field(cfg["conductivity"], grid))


def build_weights(K, cfg: dict) -> tuple:
    """TV weight field (or None) and sparsity weights (or None) for ``cfg``."""
    wcfg = cfg["weights"]
    grid = K.grid
    kind = wcfg["tv"]
    if kind == "none":
        tv = None
    elif kind == "unit":
        tv = WeightField.unit(grid, boundary=bool(wcfg["extended"]))
    elif kind == "1d" or grid.dim == 1:
        tv = weight_1d(project_out_constants(K))
        if wcfg.get("floor"):
            tv = tv.floored(wcfg["floor"])
    else:
        tv = tv_weights_2d(K, p=_p_value(wcfg["p"]), bc=wcfg["bc"], floor=wcfg.get("floor"))
        if not wcfg["extended"]:
            tv = tv.without_boundary()
    sparsity = None
    if wcfg.get("sparsity") == "projection":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sparsity = sparsity_weights(K, int(wcfg["q"])).values.ravel()
    elif wcfg.get("sparsity") == "column":
        sparsity = column_norm_weights(K).values.ravel()
    return tv, sparsity


def write_pgm(values: np.ndarray, path) -> Path:
    """Binary 8-bit PGM (P5) of a 2D array plus ``<name>.scale.json`` with min/max.

    Row 0 of the image is the top of the domain (largest ``x2``).
    """
    path = Path(path)
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    if arr.ndim != 2:
        raise ValueError("write_pgm expects a 2D array")
    img = arr.T[::-1] if arr.shape[0] > 1 else arr
    lo, hi = float(img.min()), float(img.max())
    span = hi - lo
    data = np.zeros(img.shape, dtype=np.uint8) if span == 0 else \
        np.round(255 * (img - lo) / span).astype(np.uint8)
    with path.open("wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    path.with_suffix(".scale.json").write_text(json.dumps({"min": lo, "max": hi}, indent=2))
    return path


def write_field_csv(grid, values: np.ndarray, path) -> Path:
    path = Path(path)
    values = grid.check(values)
    centers = grid.centers().reshape(grid.size, -1)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["index"] + [f"x{k + 1}" for k in range(grid.dim)] + ["value"])
        for i, (c, v) in enumerate(zip(centers, values.ravel())):
            out.writerow([i] + [repr(float(t)) for t in c] + [repr(float(v))])
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def effective_parameters(cfg: dict, tv, sparsity, truth: np.ndarray, d_clean: np.ndarray) -> tuple:
    """``(alpha, beta)`` as they enter the functional."""
    scfg = cfg["solver"]
    alpha = float(scfg["alpha"])
    beta = float(scfg["beta"]) if sparsity is not None else 0.0
    if scfg.get("scaling", "absolute") == "relative":
        energy = float(d_clean @ d_clean)
        if tv is not None and alpha > 0:
            alpha *= energy / tv_value(truth, tv)
        if beta > 0:
            beta *= energy / float(np.abs(sparsity * truth.ravel()).sum())
    return alpha, beta


def _solve(cfg: dict, K, tv, sparsity, d: np.ndarray, noise_norm: float, alpha: float,
           beta: float):
    scfg = cfg["solver"]
    fields = set(SolverConfig.__dataclass_fields__) - {"alpha", "beta"}
    config = SolverConfig(**{k: v for k, v in scfg.items() if k in fields}, alpha=alpha,
                          beta=beta, seed=cfg["seed"])
    A = K.weighted_matrix()
    method = scfg["method"]
    if method == "basis_pursuit":
        return basis_pursuit(A, d, tv, sparsity, mode=scfg["mode"], gamma=scfg["gamma"],
                             config=config, scale=scfg["scale"], method=scfg["bp_method"])
    prob = TVProblem(A, tv, sparsity if beta > 0 else None)
    if method == "penalized" or noise_norm == 0:
        res = admm_inner(A, d, alpha, beta, config=config, problem=prob)
        return SolveReport(res.x, [res.objective], [float(np.linalg.norm(A @ res.x - d))], 1,
                           "converged" if res.converged else "max_iters", [res.iterations],
                           [res.converged], config=dict(config.__dict__), noise_norm=noise_norm)
    return bregman_outer(A, d, alpha, beta, config=config, noise_norm=noise_norm, problem=prob)


def run_experiment(config: Optional[dict], out_dir=None, dry_run: bool = False) -> dict:
    """Run one experiment and write its artifacts into ``out_dir``.

    Artifacts: ``config.json``, ``report.json`` (solve report, metrics, noise
    ratios), ``reconstruction.csv``/``.pgm``, ``truth.pgm``, weight PGMs and
    ``metrics.csv``.  A failure writes ``error.json`` naming the stage and the
    artifacts already written, then raises :class:`ExperimentError`.
    Outputs depend only on the config (no timestamps), so reruns are
    byte-identical.
    """
    cfg = resolve_config(config)
    if dry_run:
        return {"config": cfg, "dry_run": True}
    out = Path(out_dir or Path("runs") / cfg["name"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    written = []

    def mark(p):
        written.append(str(Path(p).name))
        return p

    _dump(cfg, mark(out / "config.json"))
    stage = "operator"
    try:
        K = _operator(cfg)
        grid = K.grid
        stage = "weights"
        tv, sparsity = build_weights(K, cfg)
        if grid.dim == 2 and tv is not None and cfg["weights"]["tv"] == "greens" \
                and cfg["kind"] == "weights":
            for k, arr in enumerate(tv.axes):
                write_pgm(arr, mark(out / f"weights_w{k + 1}.pgm"))
        if cfg.get("kind") == "weights":
            if tv is not None:
                save_weights(tv, mark(out / "weights.csv"))
            return {"config": cfg, "artifacts": written, "out_dir": str(out)}
        stage = "phantom"
        truth = make_phantom(cfg["phantom"]["kind"], cfg["phantom"].get("params"), grid)
        stage = "data"
        A = K.weighted_matrix()
        d_clean = A @ truth.ravel()
        d, eps_norm = add_noise(d_clean, cfg["noise_level"], seed=cfg["seed"])
        stage = "solve"
        alpha, beta = effective_parameters(cfg, tv, sparsity, truth, d_clean)
        report = _solve(cfg, K, tv, sparsity, d, eps_norm, alpha, beta)
        x = report.reconstruction.reshape(grid.shape)
        stage = "metrics"
        metrics = support_metrics(x, truth, grid, cfg["threshold_frac"])
        stage = "write"
        write_field_csv(grid, x, mark(out / "reconstruction.csv"))
        write_pgm(x if grid.dim == 2 else x[None, :], mark(out / "reconstruction.pgm"))
        write_pgm(truth if grid.dim == 2 else truth[None, :], mark(out / "truth.pgm"))
        noise = {"level": cfg["noise_level"], "eps_norm": eps_norm,
                 "ratio_clean": eps_norm / float(np.linalg.norm(d_clean)),
                 "ratio_noisy": eps_norm / float(np.linalg.norm(d))}
        summary = {"solve": report.to_dict(), "metrics": metrics, "noise": noise,
                   "alpha_effective": alpha, "beta_effective": beta,
                   "name": cfg["name"], "figure": cfg["figure"]}
        _dump(summary, mark(out / "report.json"))
        with (out / "metrics.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            keys = ["name", "jaccard", "centroid_error", "rel_l2", "support_size",
                    "stop_reason", "bregman_iters", "final_residual", "noise_norm"]
            w.writerow(keys)
            w.writerow([cfg["name"], repr(metrics["jaccard"]), repr(metrics["centroid_error"]),
                        repr(metrics["rel_l2"]), metrics["support_size"], report.stop_reason,
                        report.bregman_iters_used, repr(report.final_residual), repr(eps_norm)])
        mark(out / "metrics.csv")
    except Exception as exc:
        _dump({"stage": stage, "error": f"{type(exc).__name__}: {exc}", "partial": written},
              out / "error.json")
        raise ExperimentError(stage, str(exc)) from exc
    return {"config": cfg, "metrics": metrics, "stop_reason": report.stop_reason,
            "artifacts": written, "out_dir": str(out), "reconstruction": x, "truth": truth}
