"""Command-line driver.

Subcommands compose through files: `gen-data` writes clouds and a manifest,
`pipeline` runs the persistence / vectorize / train / predict stages over
them, `explain` produces attribution artifacts, and `render` turns any grid
CSV into a portable PGM/PPM image. Every command is deterministic given its
flags and seeds, and every run appends its effective configuration to a run
log next to the manifest.

Exit codes: 0 success, 1 usage error, 2 data error, 3 resource error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import explain as explain_mod
from . import forest as forest_mod
from . import geometry as geo
from . import persistence as ph
from . import vectorize as vec
from .xai import CohortSizeError, SimilaritySpec

FORMAT_VERSION = "1"
DEFAULT_MAX_RADIUS = ph.DEFAULT_MAX_RADIUS
DEFAULT_PROBE_RADIUS = 2.0


class DataError(ValueError):
    """Bad or missing input data; maps to exit code 2."""


# ---------------------------------------------------------------------------
# File helpers

def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_grid_csv(path: Path, grid: np.ndarray) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in grid]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_grid_csv(path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append([float(v) for v in line.split(",")])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise DataError(f"{path}: not a rectangular CSV grid")
    return np.array(rows)


def _append_run_log(out_dir: Path, record: dict) -> None:
    record = dict(record, format_version=FORMAT_VERSION)
    with open(out_dir / "run_log.jsonl", "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    m = json.loads(path.read_text())
    ids = [item["id"] for item in m["items"]]
    if len(set(ids)) != len(ids):
        raise DataError("manifest item ids are not unique")
    missing = [item["id"] for item in m["items"]
               if not (path.parent / item["cloud"]).exists()]
    if missing:
        raise DataError(f"manifest references missing cloud files: {missing[:3]}")
    m["_dir"] = path.parent
    m["_path"] = path
    return m


def _save_manifest(m: dict) -> None:
    clean = {k: v for k, v in m.items() if not k.startswith("_")}
    _write_json(m["_path"], clean)


def _manifest_specs(m: dict):
    h1 = vec.HistogramSpec.from_dict(m["histograms"]["h1"])
    h2 = vec.HistogramSpec.from_dict(m["histograms"]["h2"])
    return h1, h2


def _item_index(m: dict, item_id: str) -> int:
    for i, item in enumerate(m["items"]):
        if item["id"] == item_id:
            return i
    raise DataError(f"unknown item id {item_id!r}")


def _load_cloud(m: dict, item: dict) -> geo.PointCloud:
    return geo.load_xyz(m["_dir"] / item["cloud"])


def _load_features(m: dict) -> tuple[list[str], np.ndarray]:
    path = m["_dir"] / "features.csv"
    if not path.exists():
        raise DataError("features.csv not found; run `pipeline --stages vectorize` first")
    lines = path.read_text().splitlines()
    ids, rows = [], []
    for line in lines[1:]:
        parts = line.split(",")
        ids.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    return ids, np.array(rows)


def _load_model(m: dict) -> forest_mod.Forest:
    path = m["_dir"] / "model.json"
    if not path.exists():
        raise DataError("model.json not found; run `pipeline --stages train` first")
    return forest_mod.Forest.from_dict(json.loads(path.read_text()))


def _predictions(m: dict) -> np.ndarray:
    preds = [item.get("prediction") for item in m["items"]]
    if any(p is None for p in preds):
        raise DataError("manifest has no predictions; run `pipeline --stages predict` first")
    return np.array(preds, dtype=float)


# ---------------------------------------------------------------------------
# gen-data

def cmd_gen_data(args) -> int:
    if args.count < 1:
        raise DataError("--count must be >= 1")
    vocab = geo.iter_param_vectors()
    if args.count > len(vocab):
        raise DataError(f"--count {args.count} exceeds the {len(vocab)} distinct"
                        " parameter vectors")
    out = Path(args.out)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    chosen = rng.permutation(len(vocab))[:args.count]
    synth = geo.SyntheticSpec()
    items = []
    for k, vi in enumerate(chosen):
        params = vocab[int(vi)]
        cloud = geo.generate_structure(params, synth)
        item_id = f"item_{k:04d}"
        rel = f"clouds/{item_id}.xyz"
        geo.save_xyz(cloud, out / rel, comment=item_id)
        target = geo.synthetic_target(cloud, args.probe_radius, synth.grid)
        items.append({"id": item_id, "params": params.to_dict(), "cloud": rel,
                      "target": target, "prediction": None})
    manifest = {
        "format_version": FORMAT_VERSION,
        "dataset_id": f"synthetic-{args.seed}",
        "seed": args.seed,
        "probe_radius": args.probe_radius,
        "grid": synth.grid.to_dict(),
        "rips": {"max_dim": 3, "max_radius": args.max_radius},
        "histograms": {"h1": vec.default_spec(1).to_dict(),
                       "h2": vec.default_spec(2).to_dict()},
        "items": items,
    }
    _write_json(out / "manifest.json", manifest)
    _append_run_log(out, {"command": "gen-data", "count": args.count,
                          "seed": args.seed, "probe_radius": args.probe_radius,
                          "max_radius": args.max_radius})
    print(f"wrote {len(items)} items to {out}")
    return 0


# ---------------------------------------------------------------------------
# pipeline stages

def _stage_ph(m: dict, args) -> None:
    if args.max_radius is not None:
        m["rips"]["max_radius"] = args.max_radius
    out = m["_dir"] / "diagrams"
    out.mkdir(exist_ok=True)
    for item in m["items"]:
        cloud = _load_cloud(m, item)
        filtration = ph.build_rips(geo.pairwise_distances(cloud),
                                   m["rips"]["max_dim"], m["rips"]["max_radius"])
        pairs = ph.reduce(filtration)
        _write_json(out / f"{item['id']}.json", ph.diagrams_to_records(pairs))


def _diagram_from_records(records, dimension: int) -> ph.PersistenceDiagram:
    pairs = [ph.PersistencePair(r["dim"], r["birth"], r["death"], -1, -1)
             for r in records if r["dim"] == dimension]
    return ph.diagram(pairs, dimension)


def _stage_vectorize(m: dict, args) -> None:
    h1s, h2s = _manifest_specs(m)
    overrides = (args.bins, args.sigma, args.h1_birth_max, args.h1_pers_max,
                 args.h2_birth_max, args.h2_pers_max)
    if any(v is not None for v in overrides):
        def pick(flag, default):
            return flag if flag is not None else default
        bins = pick(args.bins, h1s.bins_per_axis)
        sigma = pick(args.sigma, h1s.blur_sigma)
        h1s = vec.HistogramSpec(1, pick(args.h1_birth_max, h1s.birth_max),
                                pick(args.h1_pers_max, h1s.persistence_max), bins, sigma)
        h2s = vec.HistogramSpec(2, pick(args.h2_birth_max, h2s.birth_max),
                                pick(args.h2_pers_max, h2s.persistence_max), bins, sigma)
        m["histograms"] = {"h1": h1s.to_dict(), "h2": h2s.to_dict()}
    land_dir = m["_dir"] / "landscapes"
    land_dir.mkdir(exist_ok=True)
    feature_rows = []
    for item in m["items"]:
        dg_path = m["_dir"] / "diagrams" / f"{item['id']}.json"
        if not dg_path.exists():
            raise DataError(f"diagram for {item['id']} not found; run --stages ph first")
        records = json.loads(dg_path.read_text())
        img1 = vec.gaussian_blur(vec.histogram(_diagram_from_records(records, 1), h1s))
        img2 = vec.gaussian_blur(vec.histogram(_diagram_from_records(records, 2), h2s))
        _write_grid_csv(land_dir / f"{item['id']}_h1.csv", img1.values)
        _write_grid_csv(land_dir / f"{item['id']}_h2.csv", img2.values)
        feature_rows.append((item["id"], vec.features(img1, img2)))
    header = "id," + ",".join(f"f{i}" for i in range(len(feature_rows[0][1])))
    lines = [header]
    for item_id, row in feature_rows:
        lines.append(item_id + "," + ",".join(repr(float(v)) for v in row))
    _atomic_write_text(m["_dir"] / "features.csv", "\n".join(lines) + "\n")


def _stage_train(m: dict, args) -> float | None:
    ids, X = _load_features(m)
    y = np.array([item["target"] for item in m["items"]], dtype=float)
    if ids != [item["id"] for item in m["items"]]:
        raise DataError("features.csv does not match the manifest item order")
    holdout = args.holdout
    if holdout >= len(ids) or holdout < 0:
        raise DataError("--holdout must be in [0, n_items)")
    n_train = len(ids) - holdout
    config = forest_mod.TrainConfig(n_trees=args.trees,
                                    max_features_fraction=args.max_features,
                                    min_samples_leaf=args.min_leaf,
                                    seed=args.seed)
    model = forest_mod.train(X[:n_train], y[:n_train], config)
    _write_json(m["_dir"] / "model.json", model.to_dict())
    if args.importance != "none":
        if args.importance == "impurity":
            imp = forest_mod.impurity_importance(model)
        else:
            imp = forest_mod.permutation_importance(model, X[:n_train], y[:n_train],
                                                    repeats=3, seed=args.seed)
        _atomic_write_text(m["_dir"] / f"importance_{args.importance}.csv",
                           "\n".join(repr(float(v)) for v in imp) + "\n")
    if holdout:
        score = forest_mod.r2(forest_mod.predict_batch(model, X[n_train:]), y[n_train:])
        print(f"holdout R^2 over {holdout} items: {score:.4f}")
        return score
    return None


def _stage_predict(m: dict, args) -> None:
    ids, X = _load_features(m)
    model = _load_model(m)
    preds = forest_mod.predict_batch(model, X)
    for item, p in zip(m["items"], preds):
        item["prediction"] = float(p)


def cmd_pipeline(args) -> int:
    m = load_manifest(args.manifest)
    stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    known = {"ph": _stage_ph, "vectorize": _stage_vectorize,
             "train": _stage_train, "predict": _stage_predict}
    for s in stages:
        if s not in known:
            raise DataError(f"unknown stage {s!r}; choose from ph,vectorize,train,predict")
    holdout_r2 = None
    for s in stages:
        result = known[s](m, args)
        if s == "train":
            holdout_r2 = result
    _save_manifest(m)
    log = {"command": "pipeline", "stages": stages, "trees": args.trees,
           "seed": args.seed, "holdout": args.holdout,
           "max_radius": m["rips"]["max_radius"],
           "histograms": m["histograms"]}
    if holdout_r2 is not None:
        log["holdout_r2"] = holdout_r2
    _append_run_log(m["_dir"], log)
    return 0


# ---------------------------------------------------------------------------
# explain

def _pipeline_scorer(m: dict, model: forest_mod.Forest):
    h1s, h2s = _manifest_specs(m)
    max_dim = m["rips"]["max_dim"]
    max_radius = m["rips"]["max_radius"]

    def score(cloud: geo.PointCloud) -> float:
        pairs = ph.reduce(ph.build_rips(geo.pairwise_distances(cloud), max_dim, max_radius))
        img1 = vec.gaussian_blur(vec.histogram(ph.diagram(pairs, 1), h1s))
        img2 = vec.gaussian_blur(vec.histogram(ph.diagram(pairs, 2), h2s))
        return forest_mod.predict(model, vec.features(img1, img2))

    return score


def _explain_pixels(m: dict, args, target_idx: int, out_dir: Path) -> None:
    ids, X = _load_features(m)
    model = _load_model(m)
    preds = forest_mod.predict_batch(model, X)
    amap = explain_mod.pixel_attribution(X, preds, target_idx,
                                         SimilaritySpec(ratio=args.ratio), args.steps)
    item_id = m["items"][target_idx]["id"]
    _write_grid_csv(out_dir / f"pixels_{item_id}_h1.csv", amap.h1)
    _write_grid_csv(out_dir / f"pixels_{item_id}_h2.csv", amap.h2)
    _write_json(out_dir / f"pixels_{item_id}.json",
                {"baseline": amap.baseline, "total": amap.total,
                 "sum": float(amap.flat().sum()), "steps": args.steps,
                 "ratio": args.ratio})

    # match influential pixels back to the target's diagram pairs and dump
    # a representative cycle for each matched pair
    cloud = _load_cloud(m, m["items"][target_idx])
    filtration = ph.build_rips(geo.pairwise_distances(cloud), m["rips"]["max_dim"],
                               m["rips"]["max_radius"])
    pairs = ph.reduce(filtration)
    h1s, h2s = _manifest_specs(m)
    cycles = []
    for dim, spec in ((1, h1s), (2, h2s)):
        matches = explain_mod.influential_cycles(amap, ph.diagram(pairs, dim),
                                                 args.top_k, spec)
        for match in matches:
            for pair in match.pairs:
                cyc = ph.representative_cycle(filtration, pair)
                cycles.append({"dim": pair.dimension, "birth": pair.birth,
                               "death": pair.death,
                               "attribution": match.value,
                               "birth_bin": match.birth_bin,
                               "persistence_bin": match.persistence_bin,
                               "vertices": sorted(cyc.vertex_set)})
            if not match.pairs:
                cycles.append({"dim": dim, "birth": None, "death": None,
                               "attribution": match.value,
                               "birth_bin": match.birth_bin,
                               "persistence_bin": match.persistence_bin,
                               "vertices": []})
    _write_json(out_dir / f"cycles_{item_id}.json", cycles)


def _explain_params(m: dict, args, target_idx: int, out_dir: Path) -> None:
    y = _predictions(m)
    table = [geo.ParamVector.from_dict(item["params"]) for item in m["items"]]
    att = explain_mod.param_attribution(table, y, target_idx)
    item_id = m["items"][target_idx]["id"]
    _write_json(out_dir / f"params_{item_id}.json", att.to_record())


def _explain_grid(m: dict, args, target_idx: int, out_dir: Path) -> None:
    model = _load_model(m)
    item = m["items"][target_idx]
    cloud = _load_cloud(m, item)
    cohort = [geo.perturb(cloud, args.perturb_length, seed=args.cohort_seed + k)
              for k in range(args.cohort_size)]
    spec = geo.GridSpec.from_dict(m["grid"])
    att = explain_mod.grid_based_explanation(cloud, cohort, _pipeline_scorer(m, model),
                                             spec, args.steps,
                                             SimilaritySpec(ratio=args.ratio))
    _write_json(out_dir / f"grid_{item['id']}.json", att.to_record())


def _explain_higher(m: dict, args, target_idx: int, out_dir: Path) -> None:
    ids, X = _load_features(m)
    model = _load_model(m)
    preds = forest_mod.predict_batch(model, X)
    table = [geo.ParamVector.from_dict(item["params"]) for item in m["items"]]
    maps = explain_mod.higher_order(table, X, preds, target_idx, steps=args.steps,
                                    quantile=args.pixel_quantile,
                                    similarity=SimilaritySpec(ratio=args.ratio))
    item_id = m["items"][target_idx]["id"]
    for name, amap in maps.maps.items():
        _write_grid_csv(out_dir / f"higher_{item_id}_{name}_h1.csv", amap.h1)
        _write_grid_csv(out_dir / f"higher_{item_id}_{name}_h2.csv", amap.h2)
    computed = np.flatnonzero(maps.computed)
    _write_json(out_dir / f"higher_{item_id}.json", {
        "computed_pixels": [int(p) for p in computed],
        "pixel_baseline": [float(maps.pixel_baseline[p]) for p in computed],
        "first_order_baseline": maps.first_order.baseline,
        "first_order_total": maps.first_order.total,
        "quantile": args.pixel_quantile, "steps": args.steps,
    })


def cmd_explain(args) -> int:
    m = load_manifest(args.manifest)
    target_idx = _item_index(m, args.target)
    out_dir = m["_dir"] / "attributions"
    out_dir.mkdir(exist_ok=True)
    handlers = {"pixels": _explain_pixels, "params": _explain_params,
                "grid": _explain_grid, "higher": _explain_higher}
    handlers[args.mode](m, args, target_idx, out_dir)
    _append_run_log(m["_dir"], {"command": "explain", "mode": args.mode,
                                "target": args.target, "steps": args.steps,
                                "ratio": args.ratio,
                                "perturb_length": args.perturb_length,
                                "cohort_size": args.cohort_size,
                                "cohort_seed": args.cohort_seed,
                                "pixel_quantile": args.pixel_quantile,
                                "top_k": args.top_k})
    return 0


# ---------------------------------------------------------------------------
# render

_DIVERGING_STOPS = np.array([[0, 48, 160], [255, 255, 255], [176, 16, 16]], dtype=float)


def _diverging_rgb(unit: np.ndarray) -> np.ndarray:
    """unit in [0,1] -> blue-white-red; 0.5 is white."""
    lo, mid, hi = _DIVERGING_STOPS
    t = np.clip(unit, 0.0, 1.0)[..., None]
    below = lo + (mid - lo) * (t / 0.5)
    above = mid + (hi - mid) * ((t - 0.5) / 0.5)
    return np.where(t < 0.5, below, above)


def cmd_render(args) -> int:
    grid = read_grid_csv(args.input)
    image = grid.T  # row 0 = lowest persistence bin, columns follow birth
    vmin, vmax = float(grid.min()), float(grid.max())
    if args.palette == "diverging":
        scale = max(abs(vmin), abs(vmax))
        unit = 0.5 if scale == 0 else (image / scale + 1.0) / 2.0
        unit = np.full_like(image, 0.5) if scale == 0 else unit
    else:
        span = vmax - vmin
        unit = np.zeros_like(image) if span == 0 else (image - vmin) / span
    h, w = image.shape
    out_path = Path(args.output)
    if args.color:
        rgb = np.round(_diverging_rgb(unit) if args.palette == "diverging"
                       else np.repeat((unit * 255.0)[..., None], 3, axis=2))
        payload = b"P6\n%d %d\n255\n" % (w, h) + rgb.astype(np.uint8).tobytes()
    else:
        gray = np.round(unit * 255.0).astype(np.uint8)
        payload = b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes()
    _atomic_write_bytes(out_path, payload)
    _write_json(out_path.with_suffix(out_path.suffix + ".json"),
                {"min": vmin, "max": vmax, "palette": args.palette,
                 "color": bool(args.color), "rows": "persistence",
                 "columns": "birth", "midpoint_gray": 128})
    return 0


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phxai", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--probe-radius", type=float, default=DEFAULT_PROBE_RADIUS,
                   dest="probe_radius")
    g.add_argument("--max-radius", type=float, default=DEFAULT_MAX_RADIUS,
                   dest="max_radius")
    g.set_defaults(func=cmd_gen_data)

    q = sub.add_parser("pipeline", help="run pipeline stages over a manifest")
    q.add_argument("manifest")
    q.add_argument("--stages", default="ph,vectorize,train,predict")
    q.add_argument("--max-radius", type=float, default=None, dest="max_radius")
    q.add_argument("--bins", type=int, default=None)
    q.add_argument("--sigma", type=float, default=None)
    q.add_argument("--h1-birth-max", type=float, default=None, dest="h1_birth_max")
    q.add_argument("--h1-pers-max", type=float, default=None, dest="h1_pers_max")
    q.add_argument("--h2-birth-max", type=float, default=None, dest="h2_birth_max")
    q.add_argument("--h2-pers-max", type=float, default=None, dest="h2_pers_max")
    q.add_argument("--trees", type=int, default=500)
    q.add_argument("--max-features", type=float, default=1.0, dest="max_features")
    q.add_argument("--min-leaf", type=int, default=1, dest="min_leaf")
    q.add_argument("--holdout", type=int, default=0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--importance", choices=("none", "impurity", "permutation"),
                   default="none")
    q.set_defaults(func=cmd_pipeline)

    e = sub.add_parser("explain", help="write attribution artifacts")
    e.add_argument("manifest")
    e.add_argument("--mode", choices=("pixels", "params", "grid", "higher"),
                   required=True)
    e.add_argument("--target", required=True)
    e.add_argument("--steps", type=int, default=50)
    e.add_argument("--ratio", type=float, default=0.01)
    e.add_argument("--perturb-length", type=float, default=1.0, dest="perturb_length")
    e.add_argument("--cohort-size", type=int, default=100, dest="cohort_size")
    e.add_argument("--cohort-seed", type=int, default=0, dest="cohort_seed")
    e.add_argument("--pixel-quantile", type=float, default=0.95, dest="pixel_quantile")
    e.add_argument("--top-k", type=int, default=5, dest="top_k")
    e.set_defaults(func=cmd_explain)

    r = sub.add_parser("render", help="render a grid CSV to PGM/PPM")
    r.add_argument("input")
    r.add_argument("output")
    r.add_argument("--palette", choices=("diverging", "sequential"),
                   default="diverging")
    r.add_argument("--color", action="store_true")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ph.SimplexBudgetError, CohortSizeError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
