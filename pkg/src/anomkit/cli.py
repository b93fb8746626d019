"""Batch command-line front-end.

Subcommands: gen | trace | advantage | eval | render. Shared flags
(--config, --seed, --jobs, --input/--output) behave identically across
subcommands; every run is deterministic given its inputs, flags and
seed. Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .advantage import (
    AdvantageConfig,
    RewardWeights,
    compute_group_advantages,
    group_to_record,
)
from .analysis import AnalysisParams
from .core import AnomalyClass, record_to_instance, instance_to_record
from .embedding import hash_embedding, record_to_embedding, tokenize
from .errors import AnomkitError, ConfigError, DataError, InternalError
from .jsonl import read_jsonl, write_jsonl, write_text
from .metrics import evaluate_dataset, report_to_csv, report_to_dict, report_to_table
from .render import save_class_f1_chart, save_plot
from .synth import (
    BaseSignalConfig,
    DEFAULT_INJECTIONS,
    InjectionConfig,
    build_instance,
    plan_dataset,
    uniform_mix,
)
from .traces import audit_evidence, generate_trace, trace_to_record

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; remap to the documented code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config_file(path: str) -> dict:
    text = Path(path)
    try:
        raw = text.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    if text.suffix.lower() == ".toml":
        try:
            import tomllib  # Python 3.11+
        except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
            import tomli as tomllib
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except Exception as exc:
            raise DataError(f"invalid TOML in {path}: {exc}") from exc
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {path}: {exc.msg}") from exc


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Fill flag values from --config; unknown keys are rejected.

    Explicit command-line flags win over the config file.
    """
    if not getattr(args, "config", None):
        return
    data = _load_config_file(args.config)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a table of flag values")
    actions = {a.dest: a for a in parser._actions}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in {"help", "config", "command"}:
            raise ConfigError(f"unknown config key: {key!r}")
        if getattr(args, dest) != parser.get_default(dest):
            continue
        coerce = actions[dest].type
        if coerce is not None and value is not None and not isinstance(value, (dict, list)):
            try:
                value = coerce(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for config key {key!r}: {value!r}") from exc
        setattr(args, dest, value)


def _run_parallel(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, optionally across processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _parse_mix(text: str) -> dict[AnomalyClass, float]:
    mix: dict[AnomalyClass, float] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"mix entries must look like class=fraction, got {part!r}")
        name, _, frac = part.partition("=")
        try:
            cls = AnomalyClass.parse(name)
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            mix[cls] = float(frac)
        except ValueError as exc:
            raise ConfigError(f"bad fraction {frac!r} for class {name!r}") from exc
    if not mix:
        raise ConfigError("mix must name at least one class")
    return mix


def _injection_overrides(raw: Optional[dict]) -> dict[AnomalyClass, InjectionConfig]:
    overrides: dict[AnomalyClass, InjectionConfig] = {}
    if not raw:
        return overrides
    if not isinstance(raw, dict):
        raise ConfigError("'injections' must map class names to settings")
    for name, settings in raw.items():
        cls = AnomalyClass.parse(name)
        if cls is AnomalyClass.NORMAL:
            raise ConfigError("cannot configure injections for class 'normal'")
        base = DEFAULT_INJECTIONS[cls]
        if not isinstance(settings, dict):
            raise ConfigError(f"injection settings for {name!r} must be a table")
        allowed = {"interval_length_range", "magnitude", "count_range"}
        unknown = set(settings) - allowed
        if unknown:
            raise ConfigError(f"unknown injection keys for {name!r}: {sorted(unknown)}")
        kwargs = {}
        if "interval_length_range" in settings:
            lo, hi = settings["interval_length_range"]
            kwargs["interval_length_range"] = (int(lo), int(hi))
        if "count_range" in settings:
            lo, hi = settings["count_range"]
            kwargs["count_range"] = (int(lo), int(hi))
        if "magnitude" in settings:
            kwargs["magnitude"] = float(settings["magnitude"])
        overrides[cls] = replace(base, **kwargs)
    return overrides


def _analysis_params(args: argparse.Namespace) -> AnalysisParams:
    return AnalysisParams(
        k=args.k,
        smooth_window=args.smooth_window,
        mp_window=args.mp_window,
        period_window=args.period_window,
        period_stride=args.period_stride,
        k_band=args.k_band,
        discord_threshold=args.discord_threshold,
        hbos_bins=args.hbos_bins,
    )


def _gen_one(
    payload: tuple[int, AnomalyClass, int, BaseSignalConfig, dict]
) -> dict:
    index, cls, instance_seed, base, injections = payload
    return instance_to_record(build_instance(index, cls, instance_seed, base, injections))


def cmd_gen(args: argparse.Namespace) -> int:
    mix = _parse_mix(args.mix) if args.mix else uniform_mix()
    base = BaseSignalConfig(
        length=args.length,
        period=args.period,
        amplitude=args.amplitude,
        noise_std=args.noise_std,
        trend_slope=args.trend_slope,
    )
    injections = dict(DEFAULT_INJECTIONS) | _injection_overrides(args.injections)
    plan = plan_dataset(args.n, mix, args.seed)
    records = _run_parallel(
        _gen_one,
        [(index, cls, instance_seed, base, injections) for index, cls, instance_seed in plan],
        args.jobs,
    )
    count = write_jsonl(args.output, records)
    print(f"wrote {count} instances to {args.output}")
    return EXIT_OK


def _trace_one(payload: tuple[dict, AnalysisParams, bool]) -> tuple[dict, float]:
    record, params, audit = payload
    instance = record_to_instance(record)
    trace = generate_trace(instance, params)
    deviation = 0.0
    if audit:
        deviation = audit_evidence(instance, trace.evidence, params)
    return trace_to_record(trace), deviation


def cmd_trace(args: argparse.Namespace) -> int:
    params = _analysis_params(args)
    records = list(read_jsonl(args.input))
    results = _run_parallel(
        _trace_one, [(rec, params, args.audit) for rec in records], args.jobs
    )
    count = write_jsonl(args.output, (trace for trace, _ in results))
    print(f"wrote {count} traces to {args.output}")
    if args.audit:
        worst = max((dev for _, dev in results), default=0.0)
        print(f"audit: max evidence deviation {worst:.3e}")
        if worst > 1e-6:
            raise InternalError(
                f"evidence audit deviation {worst:.3e} exceeds 1e-6"
            )
    return EXIT_OK


def cmd_advantage(args: argparse.Namespace) -> int:
    config = AdvantageConfig(
        weights=RewardWeights(args.w_fmt, args.w_cls, args.w_loc),
        alpha=args.alpha,
        tau=args.tau,
        eps=args.eps,
        sinkhorn_reg=args.reg,
        sinkhorn_tol=args.tol,
        sinkhorn_max_iter=args.max_iter,
        location_window=args.window,
    )
    instances = {}
    for record in read_jsonl(args.gt):
        inst = record_to_instance(record)
        instances[inst.instance_id] = inst
    expert_texts = {}
    for record in read_jsonl(args.expert):
        try:
            expert_texts[str(record["id"])] = str(record["flat_text"])
        except KeyError as exc:
            raise DataError(f"expert trace record missing field {exc}") from exc
    embeddings = {}
    if args.embeddings:
        for record in read_jsonl(args.embeddings):
            ident, seq = record_to_embedding(record)
            embeddings[ident] = seq

    def embed(key: str, text: str):
        if key in embeddings:
            return embeddings[key]
        if args.embeddings:
            raise DataError(f"embeddings file lacks an entry for {key!r}")
        tokens = tokenize(text) or ["<empty>"]
        return hash_embedding(tokens, dim=args.embed_dim)

    groups = []
    for record in read_jsonl(args.input):
        try:
            ident = str(record["id"])
            responses = [str(r) for r in record["responses"]]
        except KeyError as exc:
            raise DataError(f"response record missing field {exc}") from exc
        if ident not in instances:
            raise DataError(f"no ground-truth instance for response id {ident!r}")
        if ident not in expert_texts:
            raise DataError(f"no expert trace for response id {ident!r}")
        expert_seq = embed(f"{ident}#expert", expert_texts[ident])
        response_seqs = [
            embed(f"{ident}#r{i}", text) for i, text in enumerate(responses)
        ]
        group = compute_group_advantages(
            responses, instances[ident], expert_seq, response_seqs, config
        )
        groups.append(group_to_record(ident, group))

    report = {
        "config": {
            "weights": {"fmt": args.w_fmt, "cls": args.w_cls, "loc": args.w_loc},
            "alpha": config.alpha,
            "tau": config.tau,
            "eps": config.eps,
            "reg": config.sinkhorn_reg,
            "tol": config.sinkhorn_tol,
            "max_iter": config.sinkhorn_max_iter,
            "window": config.location_window,
            "embedder": "file" if args.embeddings else "hash",
            "uniform_marginals": not args.embeddings,
        },
        "groups": groups,
    }
    write_text(args.output, json.dumps(report, indent=2) + "\n")
    print(f"wrote advantage report for {len(groups)} group(s) to {args.output}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_dataset(args.input, args.gt, args.window)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_text(outdir / "report.json", json.dumps(report_to_dict(report), indent=2) + "\n")
    write_text(outdir / "report.txt", report_to_table(report))
    write_text(outdir / "report.csv", report_to_csv(report))
    if report.missing_predictions:
        print(
            f"warning: {report.missing_predictions} instance(s) lacked predictions; "
            "scored as normal/empty",
            file=sys.stderr,
        )
    if not args.no_figures and report.per_class:
        labels = [cls.value for cls in report.per_class]
        scores = [cs.f1 for cs in report.per_class.values()]
        save_class_f1_chart(labels, scores, outdir / "f1_by_class.png")
    print(report_to_table(report), end="")
    return EXIT_OK


def _render_one(payload: tuple[dict, str, str]) -> str:
    record, outdir, fmt = payload
    instance = record_to_instance(record)
    target = Path(outdir) / f"{instance.instance_id}.{fmt}"
    save_plot(instance.values, target, fmt=fmt)
    return str(target)


def cmd_render(args: argparse.Namespace) -> int:
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    records = list(read_jsonl(args.input))
    paths = _run_parallel(
        _render_one, [(rec, str(outdir), args.format) for rec in records], args.jobs
    )
    print(f"rendered {len(paths)} plot(s) into {outdir}")
    return EXIT_OK


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON or TOML file of flag defaults")
    parser.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")


def _add_analysis_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=float, default=3.0, help="sigma multiplier (default 3)")
    parser.add_argument(
        "--smooth-window", type=int, default=21, help="gradient smoothing window (default 21)"
    )
    parser.add_argument(
        "--mp-window", type=int, default=50, help="matrix profile window (default 50)"
    )
    parser.add_argument(
        "--period-window", type=int, default=120, help="sliding period window (default 120)"
    )
    parser.add_argument(
        "--period-stride", type=int, default=10, help="sliding period stride (default 10)"
    )
    parser.add_argument(
        "--k-band", type=float, default=3.0, help="robust period band width (default 3)"
    )
    parser.add_argument(
        "--discord-threshold",
        type=float,
        default=3.5,
        help="discord z-score significance threshold (default 3.5)",
    )
    parser.add_argument(
        "--hbos-bins", type=int, default=0, help="histogram bins; 0 = round(sqrt(T))"
    )


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="anomkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"anomkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    gen = sub.add_parser("gen", help="generate a labeled synthetic corpus")
    gen.add_argument("--n", type=int, required=True, help="number of instances")
    gen.add_argument("--output", required=True, help="instances JSONL path")
    gen.add_argument(
        "--mix",
        default="",
        help="class mix 'seasonal=0.2,trend=0.2,...' (default: uniform over anomaly classes)",
    )
    gen.add_argument("--length", type=int, default=1000, help="series length (default 1000)")
    gen.add_argument("--period", type=float, default=50.0, help="base period (default 50)")
    gen.add_argument("--amplitude", type=float, default=1.0, help="base amplitude (default 1)")
    gen.add_argument("--noise-std", type=float, default=0.05, help="noise std (default 0.05)")
    gen.add_argument("--trend-slope", type=float, default=0.0, help="base slope (default 0)")
    gen.add_argument(
        "--injections",
        type=json.loads,
        default=None,
        help="JSON table of per-class injection overrides",
    )
    _add_shared(gen)
    gen.set_defaults(func=cmd_gen)
    commands["gen"] = gen

    trace = sub.add_parser("trace", help="generate expert reasoning traces")
    trace.add_argument("--input", required=True, help="instances JSONL path")
    trace.add_argument("--output", required=True, help="traces JSONL path")
    trace.add_argument(
        "--audit",
        action="store_true",
        help="recompute evidence and report the max deviation",
    )
    _add_analysis_flags(trace)
    _add_shared(trace)
    trace.set_defaults(func=cmd_trace)
    commands["trace"] = trace

    adv = sub.add_parser("advantage", help="compute group advantages for responses")
    adv.add_argument("--input", required=True, help="responses JSONL ({id, responses})")
    adv.add_argument("--gt", required=True, help="ground-truth instances JSONL")
    adv.add_argument("--expert", required=True, help="expert traces JSONL")
    adv.add_argument(
        "--embeddings",
        default=None,
        help="embeddings JSONL keyed '<id>#r<i>' / '<id>#expert' (default: hash embedder)",
    )
    adv.add_argument("--output", required=True, help="advantage report JSON path")
    adv.add_argument("--alpha", type=float, default=0.3, help="refinement weight (default 0.3)")
    adv.add_argument("--tau", type=float, default=1.0, help="reasoning temperature (default 1.0)")
    adv.add_argument("--reg", type=float, default=0.05, help="transport regularization (default 0.05)")
    adv.add_argument("--tol", type=float, default=1e-6, help="marginal tolerance (default 1e-6)")
    adv.add_argument("--max-iter", type=int, default=1000, help="max scaling iterations (default 1000)")
    adv.add_argument("--eps", type=float, default=1e-8, help="normalization guard (default 1e-8)")
    adv.add_argument("--w-fmt", type=float, default=0.1, help="format reward weight (default 0.1)")
    adv.add_argument("--w-cls", type=float, default=0.2, help="class reward weight (default 0.2)")
    adv.add_argument("--w-loc", type=float, default=0.7, help="localization reward weight (default 0.7)")
    adv.add_argument("--window", type=int, default=None, help="affinity window (default: 1%% of T)")
    adv.add_argument("--embed-dim", type=int, default=16, help="hash embedder dimension (default 16)")
    _add_shared(adv)
    adv.set_defaults(func=cmd_advantage)
    commands["advantage"] = adv

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--input", required=True, help="predictions JSONL path")
    ev.add_argument("--gt", required=True, help="ground-truth instances JSONL")
    ev.add_argument("--output-dir", required=True, help="directory for report files")
    ev.add_argument("--window", type=int, default=None, help="affinity window (default: 1%% of T)")
    ev.add_argument("--no-figures", action="store_true", help="skip the report figure")
    _add_shared(ev)
    ev.set_defaults(func=cmd_eval)
    commands["eval"] = ev

    ren = sub.add_parser("render", help="render instance plots")
    ren.add_argument("--input", required=True, help="instances JSONL path")
    ren.add_argument("--output-dir", required=True, help="directory for plot files")
    ren.add_argument(
        "--format", choices=("png", "svg"), default="png", help="output format (default png)"
    )
    _add_shared(ren)
    ren.set_defaults(func=cmd_render)
    commands["render"] = ren
    return parser, commands


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args, commands[args.command])
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"anomkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"anomkit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AnomkitError as exc:
        print(f"anomkit: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"anomkit: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
