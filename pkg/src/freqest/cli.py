"""Command-line entry point: ``freqest <command> [flags]``.

Exit status: 0 success, 2 usage error, 3 data/model integrity error,
4 numeric divergence during training.  Every run writes a JSON manifest
(``<out>.manifest.json`` unless ``--manifest`` says otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from freqest import classical, evaluation, io
from freqest.nets import (
    CounterConfig,
    FRNetConfig,
    FrequencyRepresentationNet,
    count_components,
    diagonal_ordering_score,
    fr_forward,
    inspect_encoder,
)
from freqest.signal import FreqRepresentation, GeneratorConfig, Grid, InfeasibleConfig, generate_dataset
from freqest.training import TrainConfig, TrainingDiverged, train_counter, train_fr

EXIT_OK, EXIT_USAGE, EXIT_INTEGRITY, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("freqest")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


# --- commands ----------------------------------------------------------------


def cmd_generate(args) -> dict:
    gen = GeneratorConfig(
        N=args.n_samples,
        m_max=args.m_max,
        sep_floor=args.min_sep,
        sigma_range=(args.sigma_min, args.sigma_max),
        seed=args.seed,
        circular=not args.absolute_distance,
    )
    records = generate_dataset(gen, args.n_signals, threads=args.threads)
    io.save_dataset(args.out, records, gen)
    if args.jsonl:
        Path(args.jsonl).write_text(io.records_to_jsonl(records))
    return {"generator": gen.to_dict(), "n_signals": args.n_signals}


def _train_config(args, header: dict) -> TrainConfig:
    gen_sigma = header["generator"]["sigma_range"]
    lo = args.sigma_min if args.sigma_min is not None else gen_sigma[0]
    hi = args.sigma_max if args.sigma_max is not None else gen_sigma[1]
    return TrainConfig(
        n_signals=header["n_records"],
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        sigma_range=(lo, hi),
        seed=args.seed,
        val_fraction=args.val_fraction,
        augment=args.augment,
    )


def _load_data(path):
    header, records = io.load_dataset(path)
    return header, records, GeneratorConfig(**header["generator"])


def _train_paths(args):
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    if not args.resume and log_path.exists():
        log_path.unlink()
    return log_path


def cmd_train_fr(args) -> dict:
    header, records, gen = _load_data(args.data)
    cfg = _train_config(args, header)
    net_cfg = FRNetConfig(
        n_samples=gen.N,
        variant=args.variant,
        conv_layers=args.conv_layers,
        **({"channels": args.channels, "conv_channels": args.channels} if args.channels else {}),
    )
    bundle = train_fr(
        cfg,
        gen,
        net_cfg,
        log_path=_train_paths(args),
        checkpoint_path=args.checkpoint,
        resume_from=args.resume,
        records=records,
    )
    io.save_model(args.out, bundle)
    return {"train": cfg.to_dict(), "net": net_cfg.to_dict(), "data": str(args.data)}


def cmd_train_counter(args) -> dict:
    if not args.fr_model:
        raise UsageError("train-counter requires --fr-model")
    fr_bundle = io.load_model(args.fr_model)
    if not isinstance(fr_bundle.config, FRNetConfig):
        raise UsageError("--fr-model is not a representation model")
    header, records, gen = _load_data(args.data)
    cfg = _train_config(args, header)
    net_cfg = CounterConfig(grid=fr_bundle.config.grid, conv_layers=args.conv_layers, m_max=gen.m_max)
    bundle = train_counter(
        cfg,
        fr_bundle,
        gen,
        net_cfg,
        log_path=_train_paths(args),
        checkpoint_path=args.checkpoint,
        resume_from=args.resume,
        records=records,
    )
    io.save_model(args.out, bundle)
    return {"train": cfg.to_dict(), "net": net_cfg.to_dict(), "data": str(args.data), "fr_model": str(args.fr_model)}


def _read_signals(path: str) -> tuple[np.ndarray, bool]:
    """Samples from a dataset file or JSON; returns ``([B, N], single)``."""
    p = Path(path)
    raw = p.read_bytes() if path != "-" else sys.stdin.buffer.read()
    if raw[:4] == io.DATASET_MAGIC:
        _, records = io.load_dataset(p)
        return np.stack([r.noisy for r in records]), False
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: neither a dataset file nor JSON") from exc

    def one(o):
        if isinstance(o, dict) and "re" in o:
            return np.asarray(o["re"], dtype=float) + 1j * np.asarray(o.get("im", np.zeros(len(o["re"]))), dtype=float)
        if isinstance(o, dict) and "samples" in o:
            o = o["samples"]
        arr = np.asarray(o, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise UsageError("samples must be [[re, im], ...] or {'re': [...], 'im': [...]}")
        return arr[:, 0] + 1j * arr[:, 1]

    if isinstance(obj, list) and obj and isinstance(obj[0], dict):
        return np.stack([one(o) for o in obj]), False
    return one(obj)[None, :], True


def cmd_estimate(args) -> dict:
    fr_bundle = io.load_model(args.fr_model)
    counter = io.load_model(args.counter_model) if args.counter_model else None
    if args.known_m is None and counter is None:
        raise UsageError("estimate needs --counter-model or --known-m")
    if args.known_m is not None and args.known_m < 1:
        raise UsageError("--known-m must be positive")
    Y, single = _read_signals(args.input)
    if Y.shape[1] != fr_bundle.config.n_samples:
        raise UsageError(f"model expects {fr_bundle.config.n_samples} samples, input has {Y.shape[1]}")
    grid = Grid(fr_bundle.config.grid)
    frs = fr_forward(fr_bundle.model, Y)
    if args.known_m is not None:
        counts = np.full(len(Y), args.known_m)
    else:
        counts = np.atleast_1d(count_components(counter.model, frs))
    results = []
    for fr, m in zip(frs, counts):
        peaks = classical.pick_peaks(FreqRepresentation(fr.astype(np.float64), grid), int(m))
        row = {"frequencies": np.sort(peaks.frequencies).tolist(), "count": int(m)}
        if args.representation:
            row["representation"] = fr.astype(np.float64).tolist()
        results.append(row)
    sys.stdout.write(json.dumps(results[0] if single else results) + "\n")
    return {"fr_model": str(args.fr_model), "counter_model": args.counter_model, "known_m": args.known_m}


METHOD_NAMES = ("periodogram", "music", "deepfreq", "psnet")


def _methods(args, protocols) -> list:
    names = METHOD_NAMES if args.methods == "all" else [m.strip() for m in args.methods.split(",")]
    need_count = "full" in protocols
    out = []
    for name in names:
        if name == "periodogram":
            out.append(evaluation.PeriodogramMethod(order_selector=args.order_selector, L=args.window))
        elif name == "music":
            out.append(evaluation.MusicMethod(order_selector=args.order_selector, L=args.window))
        elif name in ("deepfreq", "psnet"):
            fr_path = args.fr_model if name == "deepfreq" else args.psnet_model
            counter_path = args.counter_model if name == "deepfreq" else args.psnet_counter_model
            if not fr_path:
                if args.methods == "all":
                    log.warning("skipping %s: no model given", name)
                    continue
                raise UsageError(f"method {name} needs --{'fr' if name == 'deepfreq' else 'psnet'}-model")
            if need_count and not counter_path:
                raise UsageError(f"method {name} needs a counter model for the full protocol")
            counter = io.load_model(counter_path) if counter_path else None
            out.append(evaluation.LearnedMethod(io.load_model(fr_path), counter, name=name))
        else:
            raise UsageError(f"unknown method {name!r}")
    if not out:
        raise UsageError("no methods to run")
    return out


def cmd_benchmark(args) -> dict:
    protocols = evaluation.PROTOCOLS if args.protocol == "both" else (args.protocol,)
    methods = _methods(args, protocols)
    gen = GeneratorConfig(
        N=args.n_samples, m_max=args.m_max, sep_floor=args.min_sep, circular=not args.absolute_distance
    )
    reports = []
    for protocol in protocols:
        reports += evaluation.benchmark(
            methods,
            args.sigmas,
            protocol,
            args.n_signals,
            gen,
            args.seed,
            circular=gen.circular,
            pooled_fnr=not args.per_signal_fnr,
            threads=args.threads,
            timing=args.timing,
        )
    out = Path(args.out)
    Path(str(out) + ".csv").write_text(evaluation.reports_to_csv(reports, args.timing))
    Path(str(out) + ".long.csv").write_text(evaluation.reports_to_long_csv(reports))
    Path(str(out) + ".json").write_text(evaluation.reports_to_json(reports))
    return {"methods": [m.name for m in methods], "protocols": list(protocols), "generator": gen.to_dict()}


def cmd_inspect_encoder(args) -> dict:
    bundle = io.load_model(args.fr_model)
    if not isinstance(bundle.model, FrequencyRepresentationNet):
        raise UsageError("--fr-model is not a representation model")
    heat = inspect_encoder(bundle.model)
    if bundle.config.variant == "psnet":
        print("psnet variant: single encoder matrix", file=sys.stderr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c, mat in enumerate(heat):
        np.savetxt(out / f"channel_{c:03d}.csv", mat, delimiter=",", fmt="%.10g")
    score = diagonal_ordering_score(heat)
    (out / "summary.json").write_text(json.dumps({"channels": len(heat), "ordering_score": score}, indent=2) + "\n")
    return {"fr_model": str(args.fr_model), "channels": len(heat)}


def cmd_profile(args) -> dict:
    bundle = io.load_model(args.fr_model)
    if len(args.freqs) != len(args.magnitudes):
        raise UsageError("--freqs and --magnitudes differ in length")
    mean, se = evaluation.fr_profile(bundle.model, args.freqs, args.magnitudes, args.trials, args.sigma, args.seed)
    grid = Grid(bundle.config.grid).points
    lines = ["frequency,mean,std_err"] + [f"{g!r},{m!r},{s!r}" for g, m, s in zip(grid, mean.tolist(), se.tolist())]
    Path(args.out).write_text("\n".join(lines) + "\n")
    return {"fr_model": str(args.fr_model), "freqs": args.freqs, "magnitudes": args.magnitudes}


# --- parser ------------------------------------------------------------------


def _train_flags(p: argparse.ArgumentParser, counter: bool) -> None:
    p.add_argument("--data", required=True, help="dataset file from `generate`")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--sigma-min", type=float, help="defaults to the dataset's range")
    p.add_argument("--sigma-max", type=float)
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--augment", action="store_true", help="random frequency shift and phase per signal per epoch")
    p.add_argument("--conv-layers", type=int, default=20)
    if counter:
        p.add_argument("--fr-model", help="frozen representation model (required)")
    else:
        p.add_argument("--variant", choices=("deepfreq", "psnet"), default="deepfreq")
        p.add_argument("--channels", type=int, help="encoder and trunk channels (default 64)")
    p.add_argument("--log", help="JSON-lines training log (default <out>.log.jsonl)")
    p.add_argument("--checkpoint", help="training-state file rewritten after every epoch")
    p.add_argument("--resume", help="training-state file to continue from")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqest", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.add_argument("--n-signals", type=int, default=1000)
    p.add_argument("--n-samples", type=int, default=50)
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument("--sigma-min", type=float, default=0.0)
    p.add_argument("--sigma-max", type=float, default=1.0)
    p.add_argument("--min-sep", type=float, help="minimum separation (default 1/N)")
    p.add_argument("--absolute-distance", action="store_true", help="no wrap-around in separation")
    p.add_argument("--jsonl", help="also export records as JSON lines")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-fr", parents=[common], help="train a representation network")
    _train_flags(p, counter=False)
    p.set_defaults(func=cmd_train_fr)

    p = sub.add_parser("train-counter", parents=[common], help="train a counting network")
    _train_flags(p, counter=True)
    p.set_defaults(func=cmd_train_counter)

    p = sub.add_parser("estimate", parents=[common], help="estimate frequencies of given signals")
    p.add_argument("--fr-model", required=True)
    p.add_argument("--counter-model")
    p.add_argument("--input", required=True, help="dataset file, JSON signal(s), or - for stdin")
    p.add_argument("--known-m", type=int)
    p.add_argument("--representation", action="store_true", help="include the representation")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("benchmark", parents=[common], help="compare methods across noise levels")
    p.add_argument("--methods", default="periodogram,music", help="comma list or 'all'")
    p.add_argument("--protocol", choices=("known-m", "full", "both"), default="known-m")
    p.add_argument("--sigmas", type=_floats, default=[0.0, 0.1, 0.2, 0.5, 1.0])
    p.add_argument("--n-signals", type=int, default=1000)
    p.add_argument("--n-samples", type=int, default=50)
    p.add_argument("--m-max", type=int, default=10)
    p.add_argument("--min-sep", type=float)
    p.add_argument("--order-selector", choices=sorted(classical.ORDER_SELECTORS), default="mdl")
    p.add_argument("--window", type=int, default=25, help="covariance window length L")
    p.add_argument("--fr-model")
    p.add_argument("--counter-model")
    p.add_argument("--psnet-model")
    p.add_argument("--psnet-counter-model")
    p.add_argument("--per-signal-fnr", action="store_true", help="average FNR per signal instead of pooling")
    p.add_argument("--absolute-distance", action="store_true", help="plain |f - g| in metrics")
    p.add_argument("--timing", action="store_true", help="add a runtime_ms column (not reproducible)")
    p.add_argument("--out", required=True, help="output prefix for .csv, .long.csv and .json")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("inspect-encoder", parents=[common], help="write encoder heat maps as CSV")
    p.add_argument("--fr-model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_inspect_encoder)

    p = sub.add_parser("profile", parents=[common], help="averaged representation over random phases")
    p.add_argument("--fr-model", required=True)
    p.add_argument("--freqs", type=_floats, required=True)
    p.add_argument("--magnitudes", type=_floats, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)
    return parser


def _manifest_path(args):
    if args.manifest:
        return args.manifest
    out = getattr(args, "out", None)
    return str(out) + ".manifest.json" if out else None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "verbose")}
    manifest = io.RunManifest(["freqest", *argv], flags, args.seed)
    status = EXIT_OK
    try:
        manifest.record["config"]["resolved"] = args.func(args)
    except (UsageError, InfeasibleConfig, ValueError) as exc:
        status = EXIT_INTEGRITY if isinstance(exc, io.IntegrityError) else EXIT_USAGE
        print(f"freqest: error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        status = EXIT_INTEGRITY
        print(f"freqest: error: {exc}", file=sys.stderr)
    except TrainingDiverged as exc:
        status = EXIT_DIVERGED
        print(f"freqest: error: {exc}", file=sys.stderr)
    path = _manifest_path(args)
    text = manifest.finish(path, status)
    if not path:
        # commands that print to stdout report their manifest on stderr
        sys.stderr.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
