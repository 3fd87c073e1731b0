"""Command-line entry point: experiments, checks and single-scene recovery.

Every run writes its artifacts plus ``manifest.json`` into ``--output``; the
``rerun`` subcommand replays a manifest into a fresh directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import evaluation as ev
from .config import ConfigError, config_from_file_data, load_config_data
from .dictionaries import (
    DictionarySet,
    check_recovery_conditions,
    coherence_search,
    dictionary_coherence,
    lemma1_instances,
    peak_sidelobe_level,
    verify_lemma1,
)
from .recovery import estimate_params, omp_focus_3d
from .scene import SceneError, TargetScene
from .synthesis import add_noise, synthesize_coefficients

log = logging.getLogger("summer")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3

# experiment defaults per scale: SNR grid (dB), trials, target count
DEFAULTS = {
    "fig-time-compression": {
        "desk": (list(range(-36, -13, 2)), 50, 3),
        "paper": (list(range(-60, -35, 2)), 100, 10),
    },
    "fig-resolution": {"desk": (list(range(-30, 11, 5)), 50, 2), "paper": (list(range(-50, 1, 5)), 100, 2)},
    "fig-multicarrier": {"desk": (list(range(-40, -12, 3)), 50, 5), "paper": (list(range(-65, -30, 3)), 100, 5)},
}

PAPER_FILE_CONFIG = {
    "waveform": {"pri": 100e-6, "bandwidth": 5e6, "carrier": 10e9, "pulses": 10},
    "array": {"T": 20, "R": 20, "M": 10, "Q": 10},
    "sampling": {"K": 250},
}


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _parse_set(items) -> list[tuple[str, object]]:
    out = []
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        out.append((key.strip(), yaml.safe_load(raw)))
    return out


def _snr_list(text: str | None, default):
    if text is None:
        return [float(x) for x in default]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --snr-list {text!r}") from exc


def _resolved_data(args) -> dict:
    overrides = _parse_set(args.set)
    if args.scale == "paper" and args.config is None:
        preset = [
            (f"{section}.{key}", value) for section, values in PAPER_FILE_CONFIG.items() for key, value in values.items()
        ]
        overrides = preset + overrides
    data = load_config_data(args.config, overrides)
    if args.seed is not None:
        data = dict(data, seed=args.seed)
    config_from_file_data(data)  # validate before running anything
    return data


def _dims(data: dict) -> dict:
    wf, arr = data["waveform"], data["array"]
    return {
        "T": arr["T"],
        "R": arr["R"],
        "N": int(round(wf["pri"] * wf["bandwidth"])),
        "P": wf["pulses"],
        "pri": float(wf["pri"]),
        "carrier": float(wf["carrier"]),
    }


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(out: Path, name: str, text: str, written: list[str]) -> Path:
    path = out / name
    path.write_text(text)
    written.append(name)
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _failures(curves) -> list:
    return [[c.label or c.algorithm, list(f)] for c in curves for f in c.failed_trials]


# -- subcommands ------------------------------------------------------------


def cmd_time_compression(args, data, out, written):
    snrs, trials, L = DEFAULTS["fig-time-compression"][args.scale]
    curves = ev.time_compression_experiment(
        _snr_list(args.snr_list, snrs), args.trials or trials, data["seed"], dims=_dims(data), L=args.targets or L
    )
    _write(out, "time_compression.csv", ev.curves_to_csv(curves), written)
    summary = {c.label: ev.snr_at_rate(c) for c in curves}
    _write(out, "snr_at_half.json", _json(summary), written)
    return _failures(curves)


def cmd_resolution(args, data, out, written):
    snrs, trials, _ = DEFAULTS["fig-resolution"][args.scale]
    algos = ["summer", "classic"] if args.algorithm is None else [args.algorithm]
    curves = []
    for compressed in (False, True):
        res = ev.resolution_experiment(
            args.mode,
            algos,
            _snr_list(args.snr_list, snrs),
            args.trials or trials,
            data["seed"],
            dims=_dims(data),
            compressed=compressed,
        )
        curves += list(res.values())
    _write(out, f"resolution_{args.mode}.csv", ev.curves_to_csv(curves), written)
    return _failures(curves)


def cmd_multicarrier(args, data, out, written):
    snrs, trials, L = DEFAULTS["fig-multicarrier"][args.scale]
    res = ev.multicarrier_experiment(
        _snr_list(args.snr_list, snrs), args.trials or trials, data["seed"], dims=_dims(data), L=args.targets or L
    )
    _write(out, "multicarrier.csv", ev.curves_to_csv(list(res.values())), written)
    return _failures(res.values())


def cmd_fig5_map(args, data, out, written):
    dims = _dims(data)
    K = data["sampling"]["K"]
    report = {}
    for name, doppler, snr, L in (("range_azimuth", False, 0.0, 7), ("range_azimuth_doppler", True, -10.0, 6)):
        res = ev.map_experiment(dims, data["seed"], snr, L, doppler, K=min(K, dims["N"]))
        res.scene.save(out / f"{name}_truth.txt")
        written.append(f"{name}_truth.txt")
        _write(out, f"{name}_found.txt", estimate_params(res.found, res.config).to_text(), written)
        report[name] = {"snr_db": snr, "L": L, "hits": res.hits}
    _write(out, "fig5_map.json", _json(report), written)
    return []


def cmd_lemma1(args, data, out, written):
    random_cases, planted = lemma1_instances(data["seed"])
    rows = []
    for kind, cases in (("random", random_cases), ("planted", planted)):
        for i, (A, B) in enumerate(cases):
            rep = verify_lemma1(A, B)
            rows.append(dict(kind=kind, index=i, M=len(A), **rep.as_dict()))
    summary = {
        "random_equal": sum(r["equal"] for r in rows if r["kind"] == "random"),
        "random_total": len(random_cases),
        "planted_equal": sum(r["equal"] for r in rows if r["kind"] == "planted"),
        "planted_total": len(planted),
        "lower_bound_holds": all(r["lower_bound_holds"] for r in rows),
    }
    _write(out, "lemma1.json", _json({"summary": summary, "instances": rows}), written)
    print(
        f"lemma1: random {summary['random_equal']}/{summary['random_total']} equal, "
        f"planted {summary['planted_equal']}/{summary['planted_total']} equal, "
        f"lower bound {'holds' if summary['lower_bound_holds'] else 'VIOLATED'}"
    )
    return []


def cmd_coherence_search(args, data, out, written):
    cfg = config_from_file_data(data)
    res = coherence_search(cfg, args.trials or 200, data["seed"])
    trace = "draw,coherence_A,coherence_B\n" + "".join(
        f"{i},{a!r},{b!r}\n" for i, (a, b) in enumerate(res.trace.tolist())
    )
    _write(out, "coherence_trace.csv", trace, written)
    best = DictionarySet(res.best)
    typical = DictionarySet(cfg)
    report = {
        "best_index": res.best_index,
        "best_coherence": list(dictionary_coherence(best)),
        "median_score": float(np.median(res.scores)),
        "peak_sidelobe_range": {"best": peak_sidelobe_level(best, "range"), "initial": peak_sidelobe_level(typical, "range")},
        "peak_sidelobe_azimuth": {
            "best": peak_sidelobe_level(best, "azimuth"),
            "initial": peak_sidelobe_level(typical, "azimuth"),
        },
        "best_config": res.best.to_dict(),
    }
    _write(out, "coherence_search.json", _json(report), written)
    return []


def cmd_check_conditions(args, data, out, written):
    cfg = config_from_file_data(data)
    rep = check_recovery_conditions(cfg, args.targets or 1)
    _write(out, "conditions.json", _json(rep.as_dict()), written)
    print(json.dumps(rep.as_dict(), sort_keys=True))
    return []


def cmd_recover(args, data, out, written):
    cfg = config_from_file_data(data)
    if args.scene is None:
        raise UsageError("recover needs --scene")
    try:
        scene = TargetScene.load(args.scene)
    except (OSError, SceneError) as exc:
        raise UsageError(str(exc)) from exc
    if tuple(scene.dims) != cfg.grid_dims:
        raise ConfigError("scene", f"scene grid {scene.dims} does not match the configured grid {cfg.grid_dims}")
    snr = math.inf if args.snr in ("inf", "+inf") else float(args.snr)
    coeffs = add_noise(synthesize_coefficients(scene, cfg), snr, args.snr_definition, np.random.SeedSequence([data["seed"], 1]))
    found = omp_focus_3d(coeffs, DictionarySet(cfg), args.targets or len(scene))
    text = estimate_params(found, cfg).to_text()
    _write(out, "targets.txt", text, written)
    sys.stdout.write(text)
    return []


COMMANDS = {
    "fig5-map": cmd_fig5_map,
    "fig-time-compression": cmd_time_compression,
    "fig-resolution": cmd_resolution,
    "fig-multicarrier": cmd_multicarrier,
    "lemma1-check": cmd_lemma1,
    "coherence-search": cmd_coherence_search,
    "check-conditions": cmd_check_conditions,
    "recover": cmd_recover,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, repeatable")
    common.add_argument("--seed", type=int)
    common.add_argument("--snr-list", help="comma-separated SNR points in dB")
    common.add_argument("--trials", type=int)
    common.add_argument("--scale", choices=("desk", "paper"), default="desk")
    common.add_argument("--algorithm", choices=("summer", "classic"))
    common.add_argument("--targets", type=int, help="number of targets L")
    common.add_argument("--output", default="summer-out")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="summer", description="Sub-Nyquist MIMO radar simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "fig-resolution":
            p.add_argument("--mode", choices=("azimuth", "range"), default="azimuth")
        if name == "recover":
            p.add_argument("--scene")
            p.add_argument("--snr", default="inf")
            p.add_argument("--snr-definition", choices=("single_band", "cdma_equivalent"), default="single_band")
    rr = sub.add_parser("rerun", help="replay a manifest")
    rr.add_argument("manifest")
    rr.add_argument("--output", required=True)
    return parser


def _run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rerun":
        manifest = json.loads(Path(args.manifest).read_text())
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        cfg_path = out / "resolved_config.yaml"
        cfg_path.write_text(yaml.safe_dump(manifest["config"], sort_keys=True))
        return _run(list(manifest["argv"]) + ["--config", str(cfg_path), "--output", str(out)])
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    data = _resolved_data(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    failures = COMMANDS[args.command](args, data, out, written)
    _write(out, "resolved_config.yaml", yaml.safe_dump(data, sort_keys=True), written)
    manifest = {
        "tool": "summer",
        "version": _version(),
        "command": args.command,
        # replaying argv with the resolved config reproduces every artifact
        "argv": [args.command] + _replay_args(argv),
        "config": data,
        "config_fingerprint": config_from_file_data(data).fingerprint(),
        "seed": data["seed"],
        "outputs": {name: _sha(out / name) for name in written},
        "failed_trials": failures,
    }
    (out / "manifest.json").write_text(_json(manifest))
    if failures:
        log.error("failed trials (curve, [snr index, trial]): %s", failures)
        return EXIT_RUNTIME
    return EXIT_OK


def _replay_args(argv: list[str]) -> list[str]:
    """Original flags minus the ones the resolved config (or the rerun target) replaces."""
    skip = {"--config", "--set", "--seed", "--output"}
    out, i = [], 1
    while i < len(argv):
        a = argv[i]
        key = a.split("=", 1)[0]
        if key in skip:
            i += 1 if "=" in a else 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return _run(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except UsageError as exc:
        print(f"summer: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"summer: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.exception("experiment failed")
        print(f"summer: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
