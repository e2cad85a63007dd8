"""Command-line entry point: ``ancbench <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 dataset error, 4 every run diverged.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import synth
from .adaptive import DEFAULT_STEP_SIZES, FxLmsConfig, run_fxlms, run_thf_fxlms
from .audio_io import read_wav
from .errors import ConfigurationError, DatasetError, DivergenceError, UndefinedReferenceError
from .harness import (
    ExperimentConfig,
    causality_report,
    emit_csv,
    emit_summary,
    emit_timeseries,
    run_experiment,
)
from .loudspeaker import LoudspeakerModel, parse_eta_sq
from .room import REFERENCE_GEOMETRY, TEST_T60, build_scene_paths, direct_arrival_peak, save_rir_json
from .signal import Signal, resample
from .system import AcousticScene

EXIT_OK, EXIT_CONFIG, EXIT_DATASET, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("ancbench")


def _scene(args) -> AcousticScene:
    P, S = build_scene_paths(REFERENCE_GEOMETRY, args.t60, strict=False)
    return AcousticScene(P, S, LoudspeakerModel.from_config(args.eta_sq))


def _input_signal(args) -> Signal:
    if args.input:
        x = resample(read_wav(args.input), 16000)
        n = int(round(args.seconds * 16000))
        return Signal(x.samples[:n], 16000) if n < len(x) else x
    return synth.GENERATORS[args.noise](args.seconds, seed=args.seed)


def _add_scene_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t60", type=float, default=TEST_T60, help="reverberation time in seconds")
    p.add_argument("--eta-sq", default="inf", help="loudspeaker saturation eta^2, or 'inf' for linear")


def _add_input_args(p: argparse.ArgumentParser, seconds: float) -> None:
    p.add_argument("--input", help="WAV file (resampled to 16 kHz); default is a synthetic noise")
    p.add_argument("--noise", choices=sorted(synth.GENERATORS), default="engine")
    p.add_argument("--seconds", type=float, default=seconds)
    p.add_argument("--seed", type=int, default=0)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate_rir(args) -> int:
    P, S = build_scene_paths(REFERENCE_GEOMETRY, args.t60, strict=not args.any_t60)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_rir_json(P, out / "primary.json")
    save_rir_json(S, out / "secondary.json")
    print(f"primary direct peak: {direct_arrival_peak(P)}; secondary direct peak: {direct_arrival_peak(S)}")
    print(f"wrote {out / 'primary.json'} and {out / 'secondary.json'}")
    return EXIT_OK


def cmd_run_fxlms(args) -> int:
    scene = _scene(args)
    x = _input_signal(args)
    step = args.step_size if args.step_size is not None else DEFAULT_STEP_SIZES.get(args.noise, 0.05)
    thf_eta = parse_eta_sq(args.eta_sq) if args.thf else None
    if args.thf and thf_eta is None:
        raise ConfigurationError("--thf needs a finite --eta-sq")
    cfg = FxLmsConfig(step_size=step, secondary_estimate=scene.secondary_path, filter_len=args.filter_len,
                      grad_clip=args.grad_clip, thf_eta_sq=thf_eta)
    trace = (run_thf_fxlms if args.thf else run_fxlms)(x, scene, cfg)
    print(f"status={trace.status} nmse_db={trace.nmse_db():.4f} final_second_nmse_db={trace.final_nmse_db():.4f}")
    if args.out:
        trace.export_csv(args.out)
    return EXIT_DIVERGED if trace.diverged else EXIT_OK


def cmd_noas(args) -> int:
    from .noas import NoasConfig, optimize, save_target

    scene = _scene(args)
    x = _input_signal(args)
    cfg = NoasConfig(learning_rate=args.lr, max_iters=args.max_iters, init=args.init, seed=args.seed)
    res = optimize(scene, x, cfg)
    print(f"objective_db={res.final_objective_db:.4f} iters={res.iters_used} stop={res.stop_reason}")
    if args.out:
        wav, meta = save_target(args.out, scene, res, cfg)
        print(f"wrote {wav} and {meta}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    from .masknet import MasknetConfig, TrainerConfig, init_params, save_checkpoint, train
    from .noas import NoasConfig, optimize

    scene = _scene(args)
    n = int(round(args.seconds * 16000))
    cfg = MasknetConfig.toy(n - (n - 16) % 8, channels_c=args.channels)
    data = [synth.GENERATORS[args.noise](args.seconds, seed=args.seed + i) for i in range(args.examples)]
    data = [Signal(x.samples[: cfg.signal_len_m], 16000) for x in data]
    params = init_params(cfg, args.seed)
    tcfg = TrainerConfig(learning_rate=args.lr, steps=args.steps, seed=args.seed)
    res = train(params, cfg, data, scene, "anc", tcfg)
    print(f"phase anc: first loss {res.loss_trace[0]:.3f} dB, best {res.best_loss:.3f} dB")
    params = res.params
    if args.noas_steps:
        targets = [optimize(scene, x, NoasConfig(max_iters=args.noas_iters)).y_star for x in data]
        t2 = TrainerConfig(learning_rate=args.lr, steps=args.noas_steps, seed=args.seed, monotone=True)
        res = train(params, cfg, data, scene, "noas", t2, targets)
        print(f"phase noas: first loss {res.loss_trace[0]:.3f} dB, best {res.best_loss:.3f} dB")
        params = res.params
    binary, manifest = save_checkpoint(args.out, params, cfg)
    if args.trace:
        res.export_csv(args.trace)
    print(f"wrote {binary} and {manifest}")
    return EXIT_OK


_BENCH_FIELDS = ("dataset_dir", "method", "eta_sq", "seed", "segment_seconds", "t60_policy", "t60_s", "metric",
                 "output_path", "step_size", "filter_len", "grad_clip", "noas_learning_rate", "noas_max_iters",
                 "checkpoint", "workers", "max_segments", "aggregate")


def cmd_bench(args) -> int:
    overrides = {f: getattr(args, f) for f in _BENCH_FIELDS}
    if args.inline_runtime:
        overrides["inline_runtime"] = True
    if args.config:
        cfg = ExperimentConfig.from_json(args.config, **overrides)
    else:
        cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    result = run_experiment(cfg)
    out = Path(cfg.output_path)
    emit_csv(result.rows, out, inline_runtime=cfg.inline_runtime)
    emit_summary(result.summary, out.with_name(out.name + ".summary.json"))
    if result.timeseries:
        emit_timeseries(result.timeseries, out.with_name(out.name + ".timeseries.csv"))
    for entry in result.summary.values():
        mean = entry["mean_nmse_db"]
        shown = "n/a" if mean is None else f"{mean:.4f}"
        print(f"{entry['method']} eta_sq={entry['eta_sq']}: mean NMSE {shown} dB over {entry['count']} segments "
              f"({entry['diverged']} diverged)")
    return EXIT_DIVERGED if result.all_diverged else EXIT_OK


def cmd_causality(args) -> int:
    runtimes = {}
    for item in args.runtime or []:
        method, _, value = item.partition("=")
        try:
            runtimes[method] = float(value)
        except ValueError:
            raise ConfigurationError(f"--runtime expects METHOD=SECONDS, got {item!r}") from None
    if not runtimes:
        runtimes = {"none": 0.0}
    report = causality_report(runtimes, segment_samples=int(round(args.segment_seconds * 16000)),
                              injected_latency_s=args.inject)
    for line in report.lines():
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ancbench", description="Active noise cancellation benchmark toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-rir", help="simulate primary and secondary room impulse responses")
    p.add_argument("--t60", type=float, default=TEST_T60)
    p.add_argument("--any-t60", action="store_true", help="allow t60 values outside the training set")
    p.add_argument("--out", default="rirs")
    p.set_defaults(func=cmd_simulate_rir)

    p = sub.add_parser("run-fxlms", help="run an FxLMS or THF-FxLMS controller")
    _add_scene_args(p)
    _add_input_args(p, 3.0)
    p.add_argument("--thf", action="store_true", help="use the tanh-model (THF) variant")
    p.add_argument("--step-size", type=float, default=None, help="default depends on --noise")
    p.add_argument("--filter-len", type=int, default=512)
    p.add_argument("--grad-clip", type=float, default=1e-4)
    p.add_argument("--out", help="per-sample trace CSV")
    p.set_defaults(func=cmd_run_fxlms)

    p = sub.add_parser("noas", help="compute a near-optimal anti-signal")
    _add_scene_args(p)
    _add_input_args(p, 0.5)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--init", choices=("zeros", "random_gaussian"), default="zeros")
    p.add_argument("--out", help="output stem for the WAV and JSON sidecar")
    p.set_defaults(func=cmd_noas)

    p = sub.add_parser("train-toy", help="train the toy masking network")
    _add_scene_args(p)
    p.add_argument("--noise", choices=sorted(synth.GENERATORS), default="engine")
    p.add_argument("--examples", type=int, default=4)
    p.add_argument("--seconds", type=float, default=0.5)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--noas-steps", type=int, default=0, help="phase-2 steps against NOAS targets")
    p.add_argument("--noas-iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="masknet_toy")
    p.add_argument("--trace", help="loss trace CSV")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("bench", help="run a benchmark over a WAV directory")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dataset-dir", dest="dataset_dir")
    p.add_argument("--method", choices=("fxlms", "thf_fxlms", "noas_oracle", "masknet_toy", "none"))
    p.add_argument("--eta-sq", dest="eta_sq")
    p.add_argument("--segment-seconds", dest="segment_seconds", type=float)
    p.add_argument("--t60-policy", dest="t60_policy", choices=("fixed", "sampled_set"))
    p.add_argument("--t60", dest="t60_s", type=float)
    p.add_argument("--metric", choices=("nmse", "vad_nmse", "nmse_over_time"))
    p.add_argument("--output", dest="output_path")
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--filter-len", dest="filter_len", type=int)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--noas-lr", dest="noas_learning_rate", type=float)
    p.add_argument("--noas-iters", dest="noas_max_iters", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--workers", type=int)
    p.add_argument("--max-segments", dest="max_segments", type=int)
    p.add_argument("--aggregate", choices=("segment", "file"))
    p.add_argument("--inline-runtime", action="store_true", help="write runtime_s into the main CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("causality", help="check method latencies against the geometric budget")
    p.add_argument("--runtime", action="append", metavar="METHOD=SECONDS",
                   help="mean per-segment runtime of a method (repeatable)")
    p.add_argument("--inject", type=float, default=0.0, help="extra latency added to every method, in seconds")
    p.add_argument("--segment-seconds", type=float, default=3.0)
    p.set_defaults(func=cmd_causality)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, UndefinedReferenceError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
