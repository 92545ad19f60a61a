"""Command line for the surrogate pipeline.

Verbs: gen-data, simulate, train, predict, evaluate, biasadjust, aoc, bench.
Outputs are written atomically with a JSON manifest sidecar per file; reruns
with identical configuration and seeds reproduce byte-identical CSVs.

Option precedence is flag > config file > SECS_SEED (seeds only) > default.
"""

from __future__ import annotations

import os

# Pin BLAS pools before numpy loads anywhere: reproducibility is promised
# for a fixed thread count, and cell parallelism goes through --jobs instead.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .datamodel import (
    WEATHER_HEADER,
    CellId,
    EnsembleYield,
    YieldSeries,
    load_weather_table,
    load_yield_table,
    write_weather_table,
    write_yield_table,
)
from .errors import AlignmentError, ConfigError, SchemaError, SecsError
from .features import FeatureSpec, Scaler
from .metrics import (
    discrete_frechet,
    error_stats,
    hausdorff,
    kde_pair,
    ndi,
    normalize_curves,
    overlap,
)
from .network import init_model
from .qdm import DEFAULT_TRACE, adjust_weather
from .runio import Stopwatch, atomic_path, write_manifest
from .synthdata import (
    CropParams,
    PRESETS,
    ScenarioDelta,
    WeatherGenConfig,
    apply_scenario,
    crop_preset,
    generate_weather,
    simulate_crop,
)
from .training import (
    TrainConfig,
    load_checkpoint,
    predict_series,
    save_checkpoint,
    train,
)
from . import aoc as aoc_mod

CONFIG_SECTIONS = {
    "weather": set(WeatherGenConfig.__dataclass_fields__),
    "crop": {"preset"} | set(CropParams.__dataclass_fields__),
    "features": set(FeatureSpec.__dataclass_fields__),
    "train": set(TrainConfig.__dataclass_fields__),
    "qdm": {"n_quantiles", "tmax_kind", "tmin_kind", "precip_kind", "monthly", "trace"},
    "aoc": {"threshold_pct", "window"},
}


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=96)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: config must be a JSON object keyed by module name")
    for section, content in doc.items():
        if section not in CONFIG_SECTIONS:
            raise ConfigError(
                f"{p}: unknown config section {section!r}; known: {sorted(CONFIG_SECTIONS)}"
            )
        if not isinstance(content, dict):
            raise ConfigError(f"{p}: section {section!r} must be an object")
        unknown = set(content) - CONFIG_SECTIONS[section]
        if unknown:
            raise ConfigError(
                f"{p}: unknown keys in section {section!r}: {sorted(unknown)}"
            )
    return doc


def _build(cls, section: dict, **flag_overrides):
    kwargs = dict(section)
    for key, value in flag_overrides.items():
        if value is not None:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_seed(flag_seed, section: dict):
    if flag_seed is not None:
        return flag_seed
    if "seed" in section:
        return int(section["seed"])
    env = os.environ.get("SECS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"SECS_SEED must be an integer, got {env!r}") from exc
    return None


def _crop_from(args, config) -> tuple[str, CropParams]:
    section = dict(config.get("crop", {}))
    tag = args.crop or section.pop("preset", None) or "maizelike"
    params = crop_preset(tag)
    if section:
        try:
            params = replace(params, **section)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return tag, params


def _feature_spec(config) -> FeatureSpec:
    section = dict(config.get("features", {}))
    if "lags" in section:
        section["lags"] = tuple(section["lags"])
    return _build(FeatureSpec, section)


def _parallel_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_csv(path, header, rows):
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)


def _write_json(path, payload):
    with atomic_path(path) as tmp:
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    watch = Stopwatch()
    config = load_config(args.config)
    section = dict(config.get("weather", {}))
    seed = resolve_seed(args.seed, section)
    if seed is not None:
        section["seed"] = seed
    cfg = _build(
        WeatherGenConfig,
        section,
        n_cells=args.cells,
        n_years=args.years,
        start_year=args.start_year,
    )
    weather = generate_weather(cfg)
    delta = ScenarioDelta(warming=args.warming, precip_factor=args.precip_factor)
    if delta.warming != 0.0 or delta.precip_factor != 1.0:
        weather = [apply_scenario(w, delta) for w in weather]
    with atomic_path(args.out) as tmp:
        write_weather_table(weather, tmp)
    write_manifest(
        args.out,
        "gen-data",
        {
            "config": args.config,
            "cells": cfg.n_cells,
            "years": cfg.n_years,
            "seed": cfg.seed,
            "start_year": cfg.start_year,
            "warming": delta.warming,
            "precip_factor": delta.precip_factor,
        },
        inputs={},
        wall_seconds=watch.elapsed(),
    )
    print(f"gen-data: wrote {cfg.n_cells} cells x {cfg.n_years} years to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    watch = Stopwatch()
    config = load_config(args.config)
    tag, params = _crop_from(args, config)
    weather = load_weather_table(args.weather)
    yields = [
        EnsembleYield(member_id=args.member or 0, series=simulate_crop(w, params))
        for w in weather
    ]
    with atomic_path(args.out) as tmp:
        write_yield_table(yields, tmp, with_member=args.member is not None)
    write_manifest(
        args.out,
        "simulate",
        {"crop": tag, "member": args.member, "config": args.config},
        inputs={"weather": args.weather},
        wall_seconds=watch.elapsed(),
    )
    print(f"simulate: {tag} over {len(weather)} cells -> {args.out}")
    return 0


def cmd_train(args) -> int:
    watch = Stopwatch()
    config = load_config(args.config)
    section = dict(config.get("train", {}))
    seed = resolve_seed(args.seed, section)
    if seed is not None:
        section["seed"] = seed
    cfg = _build(
        TrainConfig,
        section,
        epochs=args.epochs,
        hidden=args.hidden,
        minibatch_size=args.minibatch_size,
        learning_rate=args.learning_rate,
        early_stop_patience=args.patience,
        split_ratio=args.split_ratio,
    )
    spec = _feature_spec(config)
    tag, _params = _crop_from(args, config)
    weather = load_weather_table(args.weather)
    yields = load_yield_table(args.yield_path)
    model, history = train(weather, yields, tag, cfg, spec=spec)
    save_checkpoint(
        model,
        args.out,
        crop_tag=tag,
        extra_hyper={
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "huber_delta": cfg.huber_delta,
            "split_ratio": cfg.split_ratio,
            "seed": cfg.seed,
        },
    )
    out = Path(args.out)
    history_path = out.with_name(out.stem + ".history.json")
    _write_json(
        history_path,
        {
            "train_loss": history.train_loss,
            "val_loss": history.val_loss,
            "seconds": history.seconds,
            "best_epoch": history.best_epoch,
        },
    )
    figures = []
    if not args.no_figures:
        from .report import save_training_history

        fig_path = out.with_name(out.stem + ".history.png")
        save_training_history(history.train_loss, history.val_loss, fig_path)
        figures.append(str(fig_path))
    write_manifest(
        args.out,
        "train",
        {
            "crop": tag,
            "seed": cfg.seed,
            "epochs_run": history.epochs_run,
            "best_epoch": history.best_epoch,
            "config": args.config,
        },
        inputs={"weather": args.weather, "yield": args.yield_path},
        wall_seconds=watch.elapsed(),
        extra={"history": str(history_path), "figures": figures},
    )
    print(
        f"train: {history.epochs_run} epochs, best validation "
        f"{min(history.val_loss):.6f} at epoch {history.best_epoch} -> {args.out}"
    )
    return 0


def _predict_one(model, weather_series):
    return weather_series.cell.id, predict_series(model, weather_series)


def cmd_predict(args) -> int:
    watch = Stopwatch()
    model = load_checkpoint(args.model)
    weather = sorted(load_weather_table(args.weather), key=lambda w: w.cell.id)
    results = _parallel_map(partial(_predict_one, model), weather, args.jobs)
    results.sort(key=lambda pair: pair[0])
    members = [
        EnsembleYield(member_id=args.member or 0, series=series)
        for _cid, series in results
    ]
    with atomic_path(args.out) as tmp:
        write_yield_table(members, tmp, with_member=args.member is not None)
    write_manifest(
        args.out,
        "predict",
        {"member": args.member, "jobs": args.jobs},
        inputs={"model": args.model, "weather": args.weather},
        wall_seconds=watch.elapsed(),
    )
    print(f"predict: {len(members)} cells -> {args.out}")
    return 0


def _single_member_map(members: list[EnsembleYield], what: str) -> dict[str, YieldSeries]:
    out: dict[str, YieldSeries] = {}
    for em in members:
        cid = em.series.cell.id
        if cid in out:
            raise AlignmentError(
                f"{what}: cell {cid} appears with multiple members; evaluate "
                "compares single-member collections"
            )
        out[cid] = em.series
    return out


def _evaluate_cell(pair):
    truth, pred = pair
    rows = []
    for y in range(truth.n_years):
        t_vals = truth.year_values(y)
        p_vals = pred.year_values(y)
        curve_t, curve_p = normalize_curves(t_vals, p_vals)
        fre = discrete_frechet(curve_t, curve_p)
        hau = hausdorff(curve_t, curve_p)
        mae, bias = error_stats(t_vals, p_vals)
        index = ndi(float(t_vals[-1]), float(p_vals[-1]))
        rows.append(
            (truth.cell.id, truth.start_year + y, fre, hau, mae, bias, index)
        )
    return rows


def _quantile_summary(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    qs = np.quantile(arr, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "p05": qs[0],
        "p25": qs[1],
        "median": qs[2],
        "p75": qs[3],
        "p95": qs[4],
        "mean": float(arr.mean()),
    }


def cmd_evaluate(args) -> int:
    watch = Stopwatch()
    truth = _single_member_map(load_yield_table(args.truth, require_monotone=False), "truth")
    pred = _single_member_map(load_yield_table(args.pred, require_monotone=False), "pred")
    if set(truth) != set(pred):
        raise AlignmentError(
            f"cell sets differ: truth-only={sorted(set(truth) - set(pred))} "
            f"pred-only={sorted(set(pred) - set(truth))}"
        )
    pairs = []
    for cid in sorted(truth):
        a, b = truth[cid], pred[cid]
        if (a.start_year, a.n_years) != (b.start_year, b.n_years):
            raise AlignmentError(f"cell {cid}: year ranges differ between truth and pred")
        pairs.append((a, b))
    per_cell = _parallel_map(_evaluate_cell, pairs, args.jobs)
    rows = [row for cell_rows in per_cell for row in cell_rows]
    rows.sort(key=lambda r: (r[0], r[1]))
    out = Path(args.out)
    _write_csv(
        out,
        ["cell_id", "year", "frechet", "hausdorff", "mae", "bias", "ndi"],
        [
            [cid, year] + [repr(float(v)) for v in rest]
            for cid, year, *rest in rows
        ],
    )

    fre = [r[2] for r in rows]
    hau = [r[3] for r in rows]
    pooled_truth = np.concatenate([s.twso for s in truth.values()])
    pooled_pred = np.concatenate([s.twso for s in pred.values()])
    try:
        density_truth, density_pred = kde_pair(pooled_truth, pooled_pred, args.n_grid)
        overlap_coeff = overlap(density_truth, density_pred)
    except SecsError:
        density_truth = density_pred = None
        overlap_coeff = None
    summary = {
        "n_cells": len(truth),
        "n_cell_years": len(rows),
        "frechet": _quantile_summary(fre),
        "hausdorff": _quantile_summary(hau),
        "mae": _quantile_summary([r[4] for r in rows]),
        "bias": _quantile_summary([r[5] for r in rows]),
        "ndi": _quantile_summary([r[6] for r in rows]),
        "density_overlap": overlap_coeff,
    }
    summary_path = out.with_name(out.stem + ".summary.json")
    _write_json(summary_path, summary)

    figures = []
    if not args.no_figures:
        from .report import save_density_overlay, save_distance_histograms

        hist_path = out.with_name(out.stem + ".distances.png")
        save_distance_histograms(np.asarray(fre), np.asarray(hau), hist_path)
        figures.append(str(hist_path))
        if density_truth is not None:
            dens_path = out.with_name(out.stem + ".density.png")
            save_density_overlay(density_truth, density_pred, dens_path)
            figures.append(str(dens_path))
    write_manifest(
        out,
        "evaluate",
        {"jobs": args.jobs, "n_grid": args.n_grid},
        inputs={"truth": args.truth, "pred": args.pred},
        wall_seconds=watch.elapsed(),
        extra={"summary": str(summary_path), "figures": figures},
    )
    print(
        f"evaluate: {len(rows)} cell-years, median frechet "
        f"{summary['frechet']['median']:.4f}, median hausdorff "
        f"{summary['hausdorff']['median']:.4f} -> {out}"
    )
    return 0


def cmd_biasadjust(args) -> int:
    watch = Stopwatch()
    config = load_config(args.config)
    section = dict(config.get("qdm", {}))

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return section.get(key, default)

    kinds = {
        "tmax": pick(args.tmax_kind, "tmax_kind", "additive"),
        "tmin": pick(args.tmin_kind, "tmin_kind", "additive"),
        "precip": pick(args.precip_kind, "precip_kind", "multiplicative"),
    }
    n_quantiles = int(pick(args.n_quantiles, "n_quantiles", 99))
    monthly = bool(pick(args.monthly or None, "monthly", False))
    trace = float(pick(args.trace, "trace", DEFAULT_TRACE))

    reference = load_weather_table(args.reference)
    historical = load_weather_table(args.historical)
    projected = load_weather_table(args.projected)
    adjusted, repaired = adjust_weather(
        reference, historical, projected,
        kinds=kinds, n_quantiles=n_quantiles, monthly=monthly, trace=trace,
    )
    with atomic_path(args.out) as tmp:
        write_weather_table(adjusted, tmp)
    write_manifest(
        args.out,
        "biasadjust",
        {
            "kinds": kinds,
            "n_quantiles": n_quantiles,
            "monthly": monthly,
            "trace": trace,
            "config": args.config,
        },
        inputs={
            "reference": args.reference,
            "historical": args.historical,
            "projected": args.projected,
        },
        wall_seconds=watch.elapsed(),
        extra={"tmin_days_floored_to_tmax": repaired},
    )
    print(f"biasadjust: {len(adjusted)} cells -> {args.out} ({repaired} tmin repairs)")
    return 0


def _load_cell_coords(path) -> dict[str, tuple[float, float]]:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"no such file: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{p}: empty file")
        if header == WEATHER_HEADER:
            idx = {"cell_id": 0, "lat": 1, "lon": 2}
        elif header == ["cell_id", "lat", "lon"]:
            idx = {"cell_id": 0, "lat": 1, "lon": 2}
        else:
            raise SchemaError(
                f"{p}: cells file must be a weather CSV or have header cell_id,lat,lon"
            )
        coords = {}
        for row in reader:
            if not row:
                continue
            coords[row[idx["cell_id"]]] = (
                float(row[idx["lat"]]),
                float(row[idx["lon"]]),
            )
    return coords


def _yearly_by_cell(members: list[EnsembleYield]) -> dict[str, dict[int, dict[int, float]]]:
    """cell -> member -> {year: end-of-year yield}."""
    table: dict[str, dict[int, dict[int, float]]] = {}
    for em in members:
        series = em.series
        cell_tab = table.setdefault(series.cell.id, {})
        if em.member_id in cell_tab:
            raise AlignmentError(
                f"cell {series.cell.id}: member {em.member_id} appears twice"
            )
        cell_tab[em.member_id] = {
            series.start_year + y: float(v)
            for y, v in enumerate(series.end_of_year())
        }
    return table


def cmd_aoc(args) -> int:
    watch = Stopwatch()
    config = load_config(args.config)
    section = dict(config.get("aoc", {}))
    threshold = float(
        args.threshold_pct
        if args.threshold_pct is not None
        else section.get("threshold_pct", aoc_mod.DEFAULT_THRESHOLD_PCT)
    )
    reference = _yearly_by_cell(load_yield_table(args.reference, require_monotone=False))
    ref_means = {
        cid: float(np.mean([v for member in tab.values() for v in member.values()]))
        for cid, tab in reference.items()
    }

    if args.mode == "probabilistic":
        if not args.forecast or args.year is None or not args.cells:
            raise ConfigError(
                "probabilistic mode needs --forecast, --year and --cells"
            )
        coords = _load_cell_coords(args.cells)
        forecast_members: list[EnsembleYield] = []
        for path in args.forecast:
            forecast_members.extend(load_yield_table(path, require_monotone=False))
        forecast = _yearly_by_cell(forecast_members)
        rows = []
        for cid in sorted(forecast):
            if cid not in reference:
                raise AlignmentError(f"cell {cid} missing from the reference ensemble")
            if cid not in coords:
                raise AlignmentError(f"cell {cid} missing from the cells file")
            ref_mean = ref_means[cid]
            ref_anoms = [
                aoc_mod.relative_anomaly(v, ref_mean)
                for member in reference[cid].values()
                for v in member.values()
            ]
            thresholds = aoc_mod.fit_terciles(ref_anoms)
            member_anoms = []
            for member_id, years in sorted(forecast[cid].items()):
                if args.year not in years:
                    raise AlignmentError(
                        f"cell {cid} member {member_id} has no year {args.year}"
                    )
                member_anoms.append(
                    aoc_mod.relative_anomaly(years[args.year], ref_mean)
                )
            probs = aoc_mod.category_probabilities(member_anoms, thresholds)
            decision = aoc_mod.decide_category(probs)
            lat, lon = coords[cid]
            rows.append(
                [
                    cid,
                    repr(lat),
                    repr(lon),
                    repr(probs.p_below),
                    repr(probs.p_normal),
                    repr(probs.p_above),
                    decision.category,
                    str(decision.is_aoc).lower(),
                ]
            )
        _write_csv(
            args.out,
            ["cell_id", "lat", "lon", "p_below", "p_normal", "p_above", "category", "is_aoc"],
            rows,
        )
        n_flagged = sum(1 for r in rows if r[-1] == "true")
        write_manifest(
            args.out,
            "aoc",
            {
                "mode": "probabilistic",
                "year": args.year,
                "threshold_pct": threshold,
                "jobs": args.jobs,
            },
            inputs={
                "reference": args.reference,
                "forecast": ",".join(args.forecast),
                "cells": args.cells,
            },
            wall_seconds=watch.elapsed(),
        )
        print(f"aoc: {len(rows)} cells, {n_flagged} flagged -> {args.out}")
        return 0

    # decadal mode
    if not args.projection:
        raise ConfigError("decadal mode needs --projection")
    window = int(
        args.window
        if args.window is not None
        else section.get("window", aoc_mod.DEFAULT_WINDOW_YEARS)
    )
    projection = _yearly_by_cell(load_yield_table(args.projection, require_monotone=False))
    rows = []
    for cid in sorted(projection):
        if cid not in reference:
            raise AlignmentError(f"cell {cid} missing from the reference ensemble")
        members = projection[cid]
        years = sorted(next(iter(members.values())))
        for member in members.values():
            if sorted(member) != years:
                raise AlignmentError(f"cell {cid}: projection members disagree on years")
        # ensemble-mean yearly yield when several members are present
        values = [
            float(np.mean([member[y] for member in members.values()])) for y in years
        ]
        for start, end, flag in aoc_mod.decadal_aoc(
            values, ref_means[cid], start_year=years[0],
            window=window, threshold_pct=threshold,
        ):
            rows.append([cid, start, end, str(flag).lower()])
    _write_csv(args.out, ["cell_id", "window_start", "window_end", "is_aoc"], rows)
    write_manifest(
        args.out,
        "aoc",
        {"mode": "decadal", "window": window, "threshold_pct": threshold},
        inputs={"reference": args.reference, "projection": args.projection},
        wall_seconds=watch.elapsed(),
    )
    print(f"aoc: {len(rows)} windows -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    watch = Stopwatch()
    from .training import predict_year

    cfg = WeatherGenConfig(n_cells=args.cells, n_years=args.years, seed=args.seed or 0)
    weather = generate_weather(cfg)
    spec = FeatureSpec()
    model = init_model(
        spec,
        hidden=args.hidden,
        seed=args.seed or 0,
        dropout_rate=0.0,
        scaler=Scaler(
            feature_mean=np.zeros(spec.n_features),
            feature_sd=np.ones(spec.n_features),
            target_scale=10000.0,
        ),
    )
    samples = [(w, y) for w in weather for y in range(w.n_years)]
    if len(samples) < 100:
        raise ConfigError(
            f"bench needs at least 100 cell-years, got {len(samples)}; raise --cells or --years"
        )
    for w, y in samples[:5]:
        predict_year(model, w, y)
    cpu, wall = [], []
    for w, y in samples:
        w0 = time.perf_counter()
        c0 = time.process_time()
        predict_year(model, w, y)
        cpu.append(time.process_time() - c0)
        wall.append(time.perf_counter() - w0)
    result = {
        "cell_years": len(samples),
        "hidden": args.hidden,
        "median_cpu_s": float(np.median(cpu)),
        "mean_cpu_s": float(np.mean(cpu)),
        "median_wall_s": float(np.median(wall)),
        "mean_wall_s": float(np.mean(wall)),
    }
    print(
        f"bench: {result['cell_years']} cell-years, median "
        f"{result['median_cpu_s']:.6f} s CPU ({result['median_wall_s']:.6f} s wall) per cell-year"
    )
    if args.out:
        _write_json(args.out, result)
        write_manifest(
            args.out,
            "bench",
            {"cells": args.cells, "years": args.years, "hidden": args.hidden},
            inputs={},
            wall_seconds=watch.elapsed(),
        )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secs",
        description="Surrogate crop-yield pipeline: synthetic data, nested "
        "recurrent training, evaluation metrics, bias adjustment and "
        "Areas-of-Concern maps.",
        formatter_class=_formatter,
    )
    parser.add_argument("--version", action="version", version=f"secs {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    def add(name, help_text, func):
        p = sub.add_parser(name, help=help_text, formatter_class=_formatter)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON config document keyed by module name")
        return p

    p = add("gen-data", "generate synthetic daily weather CSV", cmd_gen_data)
    p.add_argument("--out", required=True, help="output weather CSV path")
    p.add_argument("--cells", type=int, help="number of grid cells")
    p.add_argument("--years", type=int, help="number of years")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--start-year", type=int, help="first calendar year")
    p.add_argument("--warming", type=float, default=0.0, help="scenario warming in degC")
    p.add_argument(
        "--precip-factor", type=float, default=1.0, help="scenario precipitation factor"
    )

    p = add("simulate", "run the toy crop simulator over a weather CSV", cmd_simulate)
    p.add_argument("--weather", required=True, help="input weather CSV")
    p.add_argument("--crop", choices=sorted(PRESETS), help="crop preset tag")
    p.add_argument("--out", required=True, help="output yield CSV path")
    p.add_argument("--member", type=int, help="tag rows with this ensemble member id")

    p = add("train", "train the nested recurrent surrogate", cmd_train)
    p.add_argument("--weather", required=True, help="training weather CSV")
    p.add_argument("--yield", dest="yield_path", required=True, help="target yield CSV")
    p.add_argument("--crop", choices=sorted(PRESETS), help="crop preset tag")
    p.add_argument("--out", required=True, help="output checkpoint JSON path")
    p.add_argument("--seed", type=int, help="split/init/shuffle seed")
    p.add_argument("--epochs", type=int, help="maximum training epochs")
    p.add_argument("--hidden", type=int, help="LSTM units per layer")
    p.add_argument("--minibatch-size", type=int, help="cell-years per update")
    p.add_argument("--learning-rate", type=float, help="Adam learning rate")
    p.add_argument("--patience", type=int, help="early-stopping patience in epochs")
    p.add_argument("--split-ratio", type=float, help="train fraction of cells")
    p.add_argument("--no-figures", action="store_true", help="skip the history figure")

    p = add("predict", "emulate yields for a weather CSV with a checkpoint", cmd_predict)
    p.add_argument("--model", required=True, help="checkpoint JSON from train")
    p.add_argument("--weather", required=True, help="input weather CSV")
    p.add_argument("--out", required=True, help="output predictions CSV path")
    p.add_argument("--member", type=int, help="tag rows with this ensemble member id")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over cells")

    p = add("evaluate", "score predictions against reference yields", cmd_evaluate)
    p.add_argument("--truth", required=True, help="reference yield CSV")
    p.add_argument("--pred", required=True, help="predicted yield CSV")
    p.add_argument("--out", required=True, help="output metrics CSV path")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over cells")
    p.add_argument("--n-grid", type=int, default=256, help="density grid resolution")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    p = add("biasadjust", "quantile-delta-map a projected weather CSV", cmd_biasadjust)
    p.add_argument("--reference", required=True, help="reference weather CSV")
    p.add_argument("--historical", required=True, help="historical model weather CSV")
    p.add_argument("--projected", required=True, help="projected weather CSV to adjust")
    p.add_argument("--out", required=True, help="output adjusted weather CSV path")
    for var in ("tmax", "tmin", "precip"):
        p.add_argument(
            f"--{var}-kind",
            choices=["additive", "multiplicative"],
            help=f"QDM kind for {var}",
        )
    p.add_argument("--n-quantiles", type=int, help="quantile table size (default 99)")
    p.add_argument("--monthly", action="store_true", help="fit tables per calendar month")
    p.add_argument("--trace", type=float, help="multiplicative denominator floor in mm")

    p = add("aoc", "classify Areas of Concern from yield ensembles", cmd_aoc)
    p.add_argument(
        "--mode", choices=["probabilistic", "decadal"], default="probabilistic"
    )
    p.add_argument("--reference", required=True, help="reference-period yield CSV (ensemble)")
    p.add_argument("--forecast", nargs="+", help="forecast yield CSVs, one or more members")
    p.add_argument("--year", type=int, help="forecast year to classify")
    p.add_argument("--cells", help="weather CSV or cell_id,lat,lon CSV for coordinates")
    p.add_argument("--projection", help="projection yield CSV for decadal mode")
    p.add_argument("--window", type=int, help="window length in years (default 10)")
    p.add_argument("--threshold-pct", type=float, help="deterministic AoC threshold (default 5)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over cells")

    p = add("bench", "measure steady-state single-thread inference speed", cmd_bench)
    p.add_argument("--cells", type=int, default=120, help="synthetic cells to time")
    p.add_argument("--years", type=int, default=1, help="years per cell")
    p.add_argument("--seed", type=int, help="weather/model seed")
    p.add_argument("--hidden", type=int, default=128, help="LSTM units per layer")
    p.add_argument("--out", help="optional JSON result path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SecsError as exc:
        print(f"secs {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
