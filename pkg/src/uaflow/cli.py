"""Command line front end.

    uaflow <init|cluster|flow|uaf> --config PATH [--set key=value ...] --out DIR

Configs are flat ``key = value`` files; ``--set`` overrides win. Inputs are
PNG images, feature-field files, or synthetic sources ``synth:color``,
``synth:so3``, ``synth:orientation`` and ``synth:texture``.
Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 timeout.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import warnings
from importlib import resources

import numpy as np

from . import __version__, features
from . import io as uio
from .clustering import cluster, k_center
from .data import FeatureField, LabelDictionary
from .exceptions import ConfigError, UAFlowError
from .flow import FlowConfig, distance_matrix, run_supervised
from .manifolds import make_divergence
from .simplex import NeighborhoodGraph
from .uaf import label_stats, run_uaf

DEFAULTS = {
    "input": "synth:color",
    "manifold": "euclidean",
    "divergence": "canonical",
    "k": 8,
    "neighborhood": 3,
    "alpha": 1.0,
    "sigma": math.inf,
    "rho": 0.1,
    "h": 0.1,
    "renorm_eps": 1e-10,
    "entropy_tol": 1e-3,
    "max_steps": 10000,
    "inner_tol": 1e-10,
    "inner_max": 50,
    "seed": 0,
    "method": "soft-k-means",
    "eps": 0.1,
    "max_iters": 500,
    "tol": 1e-10,
    "dictionary": "",
    "ground_truth": "",
    # synthetic sources
    "height": 64,
    "width": 64,
    "regions": 4,
    "layout": "shapes",
    "noise": 0.1,
    "synth_seed": 0,
    # feature extraction
    "channels": 1,
    "descriptor_window": 5,
    "descriptor_eps": 1e-5,
    "scatter_window": 5,
    "verbose": False,
}

COMMANDS = ("init", "cluster", "flow", "uaf")


def _convert(key, text):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return math.inf if text.lower() == "inf" else float(text)
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {text!r}") from err
    return text


def parse_assignments(lines, origin):
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{origin}:{n}: expected key = value, got {raw.strip()!r}")
        if key not in DEFAULTS:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def load_config(path, overrides=()):
    """Defaults, then the file, then ``key=value`` overrides."""
    cfg = dict(DEFAULTS)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg.update(parse_assignments(fh.read().splitlines(), path))
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
    cfg.update(parse_assignments(overrides, "--set"))
    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    for key in ("input", "dictionary", "ground_truth"):
        v = cfg[key]
        if v and not v.startswith("synth:") and not os.path.isabs(v):
            cfg[key] = os.path.join(base, v)
    return cfg


def flow_config(cfg):
    fc = FlowConfig(**{k: cfg[k] for k in (
        "rho", "sigma", "alpha", "h", "renorm_eps", "entropy_tol", "max_steps",
        "inner_tol", "inner_max", "neighborhood")})
    return fc.validate()


def shipped_configs():
    """Paths of the experiment configs bundled with the package."""
    root = resources.files("uaflow") / "experiments"
    return sorted(str(p) for p in root.iterdir() if p.name.endswith(".cfg"))


# --- inputs ------------------------------------------------------------------

def _synthetic(cfg):
    kind = cfg["input"].split(":", 1)[1]
    H, W = cfg["height"], cfg["width"]
    if kind == "color":
        regions = features.region_map(cfg["layout"], H, W, cfg["regions"])
        img, truth = features.color_synthetic(regions, features.default_palette(cfg["regions"]),
                                              cfg["noise"], cfg["synth_seed"])
        return img, truth
    if kind == "so3":
        regions = features.region_map(cfg["layout"], H, W, cfg["regions"])
        truth = features.ground_truth_so3(regions, features.default_frames(cfg["regions"]))
        return features.so3_synthetic(truth, cfg["noise"], cfg["synth_seed"]), regions
    if kind == "orientation":
        regions = features.region_map(cfg["layout"], H, W, cfg["regions"])
        angles = np.pi * np.arange(cfg["regions"]) / cfg["regions"]
        img = features.orientation_texture(regions, angles)
        if cfg["noise"] > 0:
            img = img + cfg["noise"] * features.make_rng(cfg["synth_seed"]).standard_normal(img.shape)
        return img, regions
    if kind == "texture":
        img, regions = features.rotated_texture_image(H, W)
        if cfg["noise"] > 0:
            img = img + cfg["noise"] * features.make_rng(cfg["synth_seed"]).standard_normal(img.shape)
        return np.clip(img, 0.0, 1.0), regions
    raise ConfigError(f"unknown synthetic source {cfg['input']!r}")


def _image_features(img, cfg):
    manifold = cfg["manifold"]
    H, W = img.shape[:2]
    if manifold == "euclidean":
        pts = img.reshape(H * W, -1)
        return FeatureField(pts, "euclidean", H, W)
    if manifold == "spd":
        return features.covariance_field(img, cfg["descriptor_window"], cfg["descriptor_eps"])
    if manifold == "orientation":
        gray = img if img.ndim == 2 else img.mean(axis=2)
        return features.orientation_field(gray, cfg["scatter_window"])
    raise ConfigError(f"manifold {manifold!r} cannot be extracted from an image")


def load_input(cfg):
    """Feature field and optional ground-truth labeling for a config."""
    src = cfg["input"]
    truth = None
    if src.startswith("synth:"):
        data, truth = _synthetic(cfg)
    elif src.lower().endswith(".png"):
        data = uio.read_image(src)
    else:
        data = uio.read_field(src)
    field = data if isinstance(data, FeatureField) else _image_features(data, cfg)
    if field.manifold != cfg["manifold"]:
        raise ConfigError(f"input holds {field.manifold} data but manifold={cfg['manifold']}")
    if cfg["ground_truth"]:
        truth = uio.read_labeling(cfg["ground_truth"])
    return field, truth


def _divergence(cfg, field):
    channels = field.meta.get("channels", cfg["channels"])
    return make_divergence(cfg["manifold"], cfg["divergence"], channels=channels)


def _initial_labels(cfg, field, div):
    if cfg["dictionary"]:
        d = uio.read_dictionary(cfg["dictionary"])
        if d.manifold != field.manifold:
            raise ConfigError("dictionary and input live on different manifolds")
        return d.labels
    labels, _ = k_center(field.points, cfg["k"], div, seed=cfg["seed"])
    return labels


# --- outputs -----------------------------------------------------------------

def _fmt_value(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else format(v, ".17g")
    return str(v)


def write_manifest(out, command, cfg, notes=()):
    lines = [f"uaflow-manifest {__version__}", f"command = {command}"]
    lines += [f"{k} = {_fmt_value(cfg[k])}" for k in sorted(cfg)]
    lines += [f"# warning: {n}" for n in notes]
    with open(os.path.join(out, "manifest.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def accuracy(labeling, truth):
    """Pixel accuracy after mapping every label to its majority ground-truth region."""
    lab = np.asarray(labeling).ravel()
    truth = np.asarray(truth).ravel()
    conf = np.zeros((lab.max() + 1, truth.max() + 1))
    np.add.at(conf, (lab, truth), 1)
    mapping = conf.argmax(axis=1)
    return float(np.mean(mapping[lab] == truth)), mapping


def _write_stats(out, stats):
    with open(os.path.join(out, "stats.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for k, v in stats.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                v = " ".join(_fmt_value(float(x)) if isinstance(x, (float, np.floating))
                             else str(x) for x in v)
            else:
                v = _fmt_value(v)
            fh.write(f"{k} = {v}\n")


def _common_outputs(out, field, labeling, truth, stats):
    uio.write_labeling(os.path.join(out, "labeling.png"), labeling, field.height, field.width)
    if truth is not None:
        uio.write_labeling(os.path.join(out, "ground_truth.png"), truth, field.height, field.width)
        stats["accuracy"], _ = accuracy(labeling, truth)
    _write_stats(out, stats)


def _write_entropy(out, trace):
    uio.write_lines(os.path.join(out, "entropy.txt"),
                    [{"step": n, "entropy": float(e)} for n, e in enumerate(trace)])


# --- commands ----------------------------------------------------------------

def cmd_init(cfg, out):
    field, truth = load_input(cfg)
    div = _divergence(cfg, field)
    labels, idx = k_center(field.points, cfg["k"], div, seed=cfg["seed"])
    uio.write_dictionary(os.path.join(out, "dictionary.txt"), LabelDictionary(labels, field.manifold))
    labeling = np.argmin(distance_matrix(field.points, labels, div), axis=1)
    _common_outputs(out, field, labeling, truth, {"k": cfg["k"], "data_indices": idx.tolist()})
    return 0


def cmd_cluster(cfg, out):
    field, truth = load_input(cfg)
    div = _divergence(cfg, field)
    M0 = _initial_labels(cfg, field, div)
    res = cluster(field.points, M0, div, cfg["method"], cfg["eps"], cfg["max_iters"], cfg["tol"])
    uio.write_dictionary(os.path.join(out, "dictionary.txt"), LabelDictionary(res.labels, field.manifold))
    labeling = np.argmax(res.assignment.p, axis=1)
    stats = {"method": cfg["method"], "iterations": res.iterations, "converged": res.converged}
    if res.weights is not None:
        stats["weights"] = res.weights.tolist()
    _common_outputs(out, field, labeling, truth, stats)
    return 0


def cmd_flow(cfg, out):
    field, truth = load_input(cfg)
    div = _divergence(cfg, field)
    fc = flow_config(cfg)
    M = _initial_labels(cfg, field, div)
    graph = NeighborhoodGraph.grid(field.height, field.width, fc.neighborhood)
    res = run_supervised(field.points, M, graph, div, fc)
    _write_entropy(out, res.entropy)
    stats = {"steps": res.steps, "final_entropy": res.entropy[-1], "fallbacks": res.fallbacks}
    stats.update(label_stats(res.W))
    _common_outputs(out, field, res.labeling, truth, stats)
    return 0


def cmd_uaf(cfg, out):
    field, truth = load_input(cfg)
    div = _divergence(cfg, field)
    fc = flow_config(cfg)
    M0 = _initial_labels(cfg, field, div)
    graph = NeighborhoodGraph.grid(field.height, field.width, fc.neighborhood)
    res = run_uaf(field.points, M0, graph, div, fc, verbose=cfg["verbose"])
    uio.write_dictionary(os.path.join(out, "dictionary.txt"), LabelDictionary(res.labels, field.manifold))
    _write_entropy(out, res.entropy)
    if res.trace:
        uio.write_lines(os.path.join(out, "trace.txt"), res.trace)
    uio.write_histogram(os.path.join(out, "histogram.png"), res.stats["mass"],
                        title=f"{res.stats['n_surviving']} surviving labels")
    if field.manifold == "so3":
        uio.write_trihedra(os.path.join(out, "labels.png"), res.labels)
    stats = {"steps": res.steps, "final_entropy": res.entropy[-1], "fallbacks": res.fallbacks}
    stats.update({k: res.stats[k] for k in ("n_surviving", "surviving", "mass")})
    _common_outputs(out, field, res.labeling, truth, stats)
    return 0


HANDLERS = {"init": cmd_init, "cluster": cmd_cluster, "flow": cmd_flow, "uaf": cmd_uaf}


def build_parser():
    p = argparse.ArgumentParser(prog="uaflow", description="Unsupervised assignment flow experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--version", action="version", version=f"uaflow {__version__}")
    return p


def run(command, config_path, overrides, out):
    cfg = load_config(config_path, overrides)
    if cfg["verbose"]:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    flow_config(cfg)
    uio.ensure_dir(out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        code = HANDLERS[command](cfg, out)
    notes = sorted({str(w.message) for w in caught})
    write_manifest(out, command, cfg, notes)
    for n in notes:
        print(f"uaflow: warning: {n}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args.command, args.config, args.set, args.out)
    except UAFlowError as err:
        print(f"uaflow: error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
