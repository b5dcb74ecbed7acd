"""``dyadscan`` command line.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domain import Dataset, FileFormat, Provenance, load_dataset, load_trials, save_dataset, save_trials
from .dtw import backtrack, accumulated_cost, path_csv, similarity_samples
from .errors import DyadscanError, IoFailure, TooFewSamples
from .evaluation import Task, run_task, select
from .nn import Arch, NetConfig, TrainConfig, build_and_train, save_checkpoint
from .plots import alignment_svg, confusion_svg, panels_svg
from .preprocess import BandpassConfig, PreprocessConfig, preprocess_trials
from .stats import RT_TESTS, kde_eval, kde_fit, kde_grid, reaction_time_diffs, rt_tests
from .synth import SynthSpec, generate_trials

log = logging.getLogger("dyadscan")

SUBCOMMANDS = ("preprocess", "dtw", "train", "eval", "stats", "synth", "pipeline")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ----------------------------------------------------------------------------
# Manifest


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    duration_s: float = 0.0
    results: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "config": self.config, "seed": self.seed,
                "inputs": self.inputs, "outputs": self.outputs,
                "tool_version": self.tool_version, "duration_s": self.duration_s,
                "results": self.results}


def _write_json(path, doc) -> None:
    try:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _write_text(path, text) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ----------------------------------------------------------------------------
# Argument parsing


def _common(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default, help="random seed (default 7)")
    g.add_argument("--threads", type=int, default=default, help="worker threads for CV folds")
    g.add_argument("--quiet", action="store_true", default=default, help="only report errors")
    g.add_argument("--manifest-out", default=default, help="where to write the run manifest")
    g.add_argument("--config", default=default,
                   help="JSON file of option defaults (or a previous run manifest)")


def _train_options(p):
    p.add_argument("--arch", choices=[a.value for a in Arch], default="nopool")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--activation", choices=["relu", "tanh"], default="relu")
    p.add_argument("--layout", default=None,
                   help="input image HxW (default: channels x 1)")


def _tasks_arg(value):
    if value == "all":
        return [t.value for t in Task]
    names = value.split(",")
    for n in names:
        Task(n)
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyadscan",
                     description="fNIRS hyperscanning dyad classification from DTW similarity.")
    parser.add_argument("--version", action="version", version=f"dyadscan {__version__}")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                                parser_class=_Parser)

    p = sub.add_parser("preprocess", help="clean raw trials (band-pass, length gate, trim, unit norm)")
    _common(p, suppress=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--low", type=float, default=0.01)
    p.add_argument("--high", type=float, default=0.5)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--trim", type=int, default=50)
    p.add_argument("--min-len", type=int, default=50)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--clamp-mad", type=float, default=None)
    p.add_argument("--no-bandpass", action="store_true")

    p = sub.add_parser("dtw", help="channel-wise DTW similarity scores")
    _common(p, suppress=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--normalize-path", action="store_true")
    p.add_argument("--dump-path", type=int, default=None, metavar="CH",
                   help="write the warping path of channel CH (1-based) as CSV")
    p.add_argument("--dump-trial", type=int, default=0, help="trial (0-based) for --dump-path")
    p.add_argument("--dump-out", default=None)
    p.add_argument("--plot", default=None, help="alignment SVG for the dumped path")

    p = sub.add_parser("train", help="train one CNN on a task's samples")
    _common(p, suppress=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], required=True)
    _train_options(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="k-fold cross-validated evaluation of one task")
    _common(p, suppress=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], required=True)
    _train_options(p)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--group-by-dyad", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="confusion-matrix SVG")

    p = sub.add_parser("stats", help="reaction-time Mann-Whitney tests and KDEs")
    _common(p, suppress=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--tests", default="all")
    p.add_argument("--unit", choices=["dyad", "trial"], default="dyad")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="KDE SVG")

    p = sub.add_parser("synth", help="generate synthetic dyad trials and scores")
    _common(p, suppress=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--out-trials", required=True)
    p.add_argument("--out-scores", default=None)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")

    p = sub.add_parser("pipeline", help="synth -> preprocess -> dtw -> stats -> eval -> train")
    _common(p, suppress=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--out-dir", default="dyadscan-out")
    p.add_argument("--tasks", default="all")
    p.add_argument("--archs", default="pool,nopool")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--group-by-dyad", action="store_true")
    return parser


def _load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    if isinstance(doc, dict) and "subcommand" in doc and "config" in doc:
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise IoFailure(f"config {path} must be a JSON object")
    return doc


def _apply_config(parser, argv) -> dict:
    """Install ``--config`` values as subcommand defaults (flags still win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if a in SUBCOMMANDS), None)
    if not known.config or command is None:
        return {}
    sub = parser._subparsers._group_actions[0].choices[command]
    raw = {k.replace("-", "_"): v for k, v in _load_config(known.config).items()}
    if raw.get("resolved_spec") is not None:
        raw.pop("spec", None)  # the manifest carries the spec itself
    dests = {a.dest for a in sub._actions}
    cfg = {k: v for k, v in raw.items() if k in dests and k not in ("config", "help")}
    sub.set_defaults(**cfg)
    for action in sub._actions:
        if action.dest in cfg:
            action.required = False
    return raw


def parse_args(argv):
    parser = build_parser()
    raw = _apply_config(parser, argv)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("dyadscan: error: a subcommand is required")
    if args.command in ("synth", "pipeline") and args.spec is None:
        args.resolved_spec = raw.get("resolved_spec")
    for name, default in (("seed", 7), ("threads", 1), ("quiet", False), ("manifest_out", None),
                          ("config", None)):
        if getattr(args, name, None) is None:
            setattr(args, name, default)
    return args


def _resolved(args) -> dict:
    skip = ("manifest_out", "resolved_spec")
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _net_config(args, n_channels) -> NetConfig:
    if args.layout:
        h, w = (int(v) for v in args.layout.lower().split("x"))
    else:
        h, w = n_channels, 1
    return NetConfig(input_hw=(h, w), activation=args.activation)


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
                       optimizer=getattr(args, "optimizer", "adam"), seed=args.seed)


def _fmt_of(path, fallback="jsonl"):
    return FileFormat.CSV if str(path).endswith(".csv") else FileFormat(fallback)


# ----------------------------------------------------------------------------
# Subcommands


def cmd_preprocess(args, m: RunManifest):
    cfg = PreprocessConfig(
        bandpass=BandpassConfig(args.low, args.high, args.order),
        min_t=args.min_len, max_t=args.max_len, trim=args.trim,
        clamp_mad=args.clamp_mad, apply_bandpass=not args.no_bandpass)
    trials = load_trials(args.inp)
    clean = preprocess_trials(trials, cfg)
    save_trials(clean, args.out)
    m.inputs["trials"] = args.inp
    m.outputs["trials"] = args.out
    m.results = {"n_in": len(trials), "n_out": len(clean)}
    log.info("kept %d of %d trials", len(clean), len(trials))
    return args.out


def cmd_dtw(args, m: RunManifest):
    trials = load_trials(args.inp)
    samples = similarity_samples(trials, args.window, args.normalize_path)
    ds = Dataset(tuple(samples), Provenance.SYNTHETIC)
    save_dataset(ds, args.out, _fmt_of(args.out, args.format))
    m.inputs["trials"] = args.inp
    m.outputs["scores"] = args.out
    if args.dump_path is not None:
        t = trials[args.dump_trial]
        ch = args.dump_path - 1
        if not 0 <= ch < t.n_channels:
            raise TooFewSamples(f"channel {args.dump_path} out of range 1..{t.n_channels}")
        a, b = t.a.channels[ch], t.b.channels[ch]
        path = backtrack(accumulated_cost(a[None], b[None], args.window)[0])
        dump = args.dump_out or str(args.out) + f".ch{args.dump_path:02d}.path.csv"
        _write_text(dump, path_csv(a, b, path))
        m.outputs["path"] = dump
        if args.plot:
            _write_text(args.plot, alignment_svg(a, b, path, f"channel {args.dump_path}"))
            m.outputs["plot"] = args.plot
    m.results = {"n_samples": len(ds)}
    return args.out


def cmd_train(args, m: RunManifest):
    ds = load_dataset(args.data, _fmt_of(args.data))
    x, y, _ = select(ds, args.task)
    net_cfg = _net_config(args, ds.n_channels)
    res = build_and_train(args.arch, x.reshape((len(y), 1) + net_cfg.input_hw), y,
                          _train_config(args), net_cfg)
    save_checkpoint(res.net, args.out)
    m.inputs["data"] = args.data
    m.outputs["checkpoint"] = args.out
    m.results = {"n_train": int(len(y)), "loss_history": res.loss_history}
    return args.out


def _eval_one(ds, task, arch, args, group_by_dyad, stratify=True, layout_args=None):
    net_cfg = _net_config(layout_args or args, ds.n_channels)
    return run_task(ds, task, arch, _train_config(args), k=args.k, stratify=stratify,
                    group_by_dyad=group_by_dyad, net_config=net_cfg, threads=args.threads)


def cmd_eval(args, m: RunManifest):
    ds = load_dataset(args.data, _fmt_of(args.data))
    rep = _eval_one(ds, args.task, args.arch, args, args.group_by_dyad, not args.no_stratify)
    _write_json(args.out, rep.to_dict())
    m.inputs["data"] = args.data
    m.outputs["report"] = args.out
    if args.plot:
        _write_text(args.plot, confusion_svg(rep.confusion, rep.task.class_names,
                                             f"{rep.task.value} ({rep.arch.value})"))
        m.outputs["plot"] = args.plot
    m.results = {"mean_accuracy": rep.mean_accuracy, "pooled_accuracy": rep.pooled_accuracy}
    log.info("%s/%s mean accuracy %.4f", rep.task.value, rep.arch.value, rep.mean_accuracy)
    return args.out


def _stats(trials, unit, tests, out, plot, m: RunManifest):
    names = list(RT_TESTS) if tests == "all" else tests.split(",")
    for n in names:
        if n not in RT_TESTS:
            raise UsageError(f"unknown test {n!r}; choose from {', '.join(RT_TESTS)}")
    results = rt_tests(trials, unit, names)
    doc = {"unit": unit, "statistic": "U", "alternative": "two-sided",
           "tests": {name: r.to_dict() for name, r in results.items()}}
    _write_json(out, doc)
    m.outputs["stats"] = str(out)
    if plot:
        diffs = reaction_time_diffs(trials, "trial")
        panels = []
        for task in ("coop", "comp"):
            series = {}
            for (sex, t), values in diffs.items():
                if t.value == task and values.size >= 2 and np.ptp(values) > 0:
                    model = kde_fit(values)
                    grid = kde_grid(model, 256)
                    series[sex.value] = (grid, kde_eval(model, grid))
            if series:
                panels.append((f"{task} reaction-time difference KDE", series))
        if panels:
            _write_text(plot, panels_svg(panels, "|rt_A - rt_B| (s)", "density"))
            m.outputs["plot"] = str(plot)
    return doc


def cmd_stats(args, m: RunManifest):
    trials = load_trials(args.inp)
    m.inputs["trials"] = args.inp
    doc = _stats(trials, args.unit, args.tests, args.out, args.plot, m)
    m.results = doc["tests"]
    return args.out


def _spec(args) -> SynthSpec:
    if args.spec:
        spec = SynthSpec.load(args.spec)
    elif getattr(args, "resolved_spec", None):
        spec = SynthSpec.from_dict(args.resolved_spec)
    else:
        spec = SynthSpec()
    d = spec.to_dict()
    d["seed"] = args.seed
    return SynthSpec.from_dict(d)


def cmd_synth(args, m: RunManifest):
    spec = _spec(args)
    trials = generate_trials(spec)
    save_trials(trials, args.out_trials)
    m.outputs["trials"] = args.out_trials
    m.config["resolved_spec"] = spec.to_dict()
    if args.out_scores:
        clean = preprocess_trials(trials)
        ds = Dataset(tuple(similarity_samples(clean)), Provenance.SYNTHETIC, spec.seed)
        save_dataset(ds, args.out_scores, _fmt_of(args.out_scores, args.format))
        m.outputs["scores"] = args.out_scores
    m.results = {"n_trials": len(trials)}
    return args.out_trials


def cmd_pipeline(args, m: RunManifest):
    out = Path(args.out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(exist_ok=True)
    spec = _spec(args)
    m.config["resolved_spec"] = spec.to_dict()

    trials = generate_trials(spec)
    save_trials(trials, out / "raw_trials.jsonl")
    clean = preprocess_trials(trials)
    save_trials(clean, out / "trials.jsonl")
    ds = Dataset(tuple(similarity_samples(clean)), Provenance.SYNTHETIC, spec.seed)
    save_dataset(ds, out / "scores.jsonl")
    log.info("%d trials -> %d scored samples", len(trials), len(ds))
    _stats(trials, "dyad", "all", out / "stats.json", out / "plots" / "kde.svg", m)

    layout = argparse.Namespace(layout=None, activation="relu")
    report = {"seed": args.seed, "n_samples": len(ds), "results": []}
    for task in _tasks_arg(args.tasks):
        for arch in args.archs.split(","):
            arch = Arch(arch)
            rep = _eval_one(ds, task, arch, args, args.group_by_dyad, layout_args=layout)
            report["results"].append(rep.to_dict())
            _write_text(out / "plots" / f"confusion-{task}-{arch.value}.svg",
                        confusion_svg(rep.confusion, rep.task.class_names,
                                      f"{task} ({arch.value})"))
            x, y, _ = select(ds, task)
            net_cfg = _net_config(layout, ds.n_channels)
            final = build_and_train(arch, x.reshape((len(y), 1) + net_cfg.input_hw), y,
                                    _train_config(args), net_cfg)
            save_checkpoint(final.net, out / "models" / f"{task}-{arch.value}.ckpt")
            log.info("%s/%s mean accuracy %.4f", task, arch.value, rep.mean_accuracy)
    _write_json(out / "report.json", report)
    m.outputs.update({"dir": str(out), "report": str(out / "report.json"),
                      "scores": str(out / "scores.jsonl")})
    m.results = {f"{r['task']}/{r['arch']}": r["mean_accuracy"] for r in report["results"]}
    return str(out / "manifest.json")


COMMANDS = {"preprocess": cmd_preprocess, "dtw": cmd_dtw, "train": cmd_train, "eval": cmd_eval,
            "stats": cmd_stats, "synth": cmd_synth, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except DyadscanError as exc:
        print(f"dyadscan: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    manifest = RunManifest(args.command, _resolved(args), args.seed)
    start = time.perf_counter()
    try:
        primary = COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        print(f"dyadscan {args.command}: {exc}", file=sys.stderr)
        return 1
    except (DyadscanError, ValueError) as exc:
        print(f"dyadscan {args.command}: {exc}", file=sys.stderr)
        return 2
    manifest.duration_s = time.perf_counter() - start
    target = args.manifest_out or (primary if args.command == "pipeline"
                                   else f"{primary}.manifest.json")
    try:
        _write_json(target, manifest.to_dict())
    except DyadscanError as exc:
        print(f"dyadscan: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
