"""Command-line surface tying the toolkit into reproducible workflows.

Subcommands: make-data, train-sr, train-ensemble, infer, fuse, eval.
Options resolve as defaults < config file (--config) < command-line flags,
and every run prints the resolved configuration and seed before doing work.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .checkpoints import load_ensemble_checkpoint, load_sr_checkpoint
from .configfile import load_config, parse_bool
from .data import (MotionSpec, SplitConfig, assign_splits, degrade,
                   generate_toy_dataset, load_sequence_dir, load_split,
                   save_sequence)
from .ensemble import average_fuse, adaptive_fuse
from .errors import VsrError
from .metrics import clamp_unit, evaluate
from .models import ARCH_KINDS, SrConfig
from .serialize import write_ppm
from .temporal import build_super_image, temporal_window
from .tensor import no_grad
from .augment import self_ensemble_infer
from .train import (EnsembleTrainConfig, TrainConfig, precompute_candidates,
                    train_ensemble, train_sr, write_metric_log)

PROG = "vsrkit"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass(frozen=True)
class Opt:
    flag: str
    type: object = str
    default: object = None
    help: str = ""
    required: bool = False
    multi: bool = False  # accepts several values

    @property
    def key(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


_COMMON = [
    Opt("--config", str, None, "flat key = value config file; flags override it"),
    Opt("--seed", int, 0, "seed controlling every random choice"),
    Opt("--threads", int, 0, "worker threads (0 = VSR_THREADS env or logical cores)"),
]

_COMMANDS: "dict[str, tuple[str, list[Opt]]]" = {
    "make-data": ("generate a synthetic HR dataset, split it and write the 4x LR mirror", [
        Opt("--out", str, None, "output dataset root", required=True),
        Opt("--sequences", int, 8, "number of video sequences"),
        Opt("--frames", int, 32, "frames per sequence"),
        Opt("--hr-size", int, 96, "HR frame edge length (multiple of 4)"),
        Opt("--train-count", int, -1, "sequences for training (-1 = auto)"),
        Opt("--select-count", int, -1, "sequences for model selection (-1 = auto)"),
        Opt("--test-count", int, -1, "sequences held out for testing (-1 = auto)"),
        Opt("--patterns", int, 8, "number of drifting gratings per scene"),
        Opt("--speed-min", float, 0.5, "slowest pattern speed, HR px/frame"),
        Opt("--speed-max", float, 3.0, "fastest pattern speed, HR px/frame"),
    ]),
    "train-sr": ("train one adapted SR model on a dataset directory", [
        Opt("--data", str, None, "dataset root from make-data", required=True),
        Opt("--out", str, None, "checkpoint path to write", required=True),
        Opt("--arch", str, "rdn", f"backbone family, one of {ARCH_KINDS}"),
        Opt("--t", int, 2, "temporal radius T; input channels are 3(2T+1)"),
        Opt("--width", int, 32, "feature channels"),
        Opt("--blocks", int, 4, "number of body blocks"),
        Opt("--growth", int, 16, "dense-block growth channels"),
        Opt("--layers", int, 2, "conv layers per dense block"),
        Opt("--reduction", int, 4, "channel-attention bottleneck divisor"),
        Opt("--bicubic-residual", bool, False, "add bicubic 4x residual of the center frame"),
        Opt("--loss", str, "l1", "training loss: l1 or mse"),
        Opt("--lr", float, 1e-4, "initial Adam learning rate"),
        Opt("--steps", int, 500, "training steps"),
        Opt("--batch", int, 8, "patches per step"),
        Opt("--patch", int, 16, "LR patch size (HR patch is 4x)"),
        Opt("--eval-interval", int, 100, "steps between selection evaluations"),
        Opt("--eval-frames", int, 8, "frames scored per selection evaluation"),
        Opt("--grad-clip", float, 0.0, "global-norm gradient clip (0 = off)"),
        Opt("--log", str, None, "metric log CSV path (default <out>.log.csv)"),
        Opt("--resume", bool, False, "resume from the checkpoint at --out"),
    ]),
    "train-ensemble": ("train the adaptive fusion net on the selection split", [
        Opt("--data", str, None, "dataset root from make-data", required=True),
        Opt("--models", str, None, "two or more SR checkpoints", required=True, multi=True),
        Opt("--out", str, None, "ensemble checkpoint path", required=True),
        Opt("--passes", int, 60, "epochs over the fusion samples"),
        Opt("--lr", float, 0.1, "initial SGD learning rate"),
        Opt("--self-ensemble", bool, False, "build candidates with 16x self-ensemble"),
        Opt("--log", str, None, "metric log CSV path (default <out>.log.csv)"),
    ]),
    "infer": ("super-resolve one LR sequence directory with one model", [
        Opt("--model", str, None, "SR checkpoint", required=True),
        Opt("--input", str, None, "directory of LR frame_*.ppm files", required=True),
        Opt("--out", str, None, "output directory for HR frames", required=True),
        Opt("--self-ensemble", bool, False, "average over the 16 geometric transforms"),
        Opt("--t", str, "all", "frame index to process, or 'all'"),
    ]),
    "fuse": ("fuse aligned candidate frames from several models", [
        Opt("--mode", str, "adaptive", "fusion rule: adaptive or average"),
        Opt("--out", str, None, "output directory for fused frames", required=True),
        Opt("--candidates", str, None, "two or more directories of aligned HR frames",
            multi=True),
        Opt("--models", str, None, "SR checkpoints to run over --input", multi=True),
        Opt("--input", str, None, "LR sequence directory (with --models)"),
        Opt("--ensemble", str, None, "ensemble checkpoint (adaptive mode)"),
        Opt("--self-ensemble", bool, False, "16x self-ensemble when running --models"),
    ]),
    "eval": ("evaluate models and ensembles against ground truth", [
        Opt("--data", str, None, "dataset root from make-data", required=True),
        Opt("--split", str, "test", "dataset split to score: train, select or test"),
        Opt("--models", str, None, "SR checkpoints", required=True, multi=True),
        Opt("--names", str, None, "names for the models (default: file stems)", multi=True),
        Opt("--ensemble", str, None, "ensemble checkpoint; adds the adaptive row"),
        Opt("--average", bool, False, "also score the average-ensemble baseline"),
        Opt("--self-ensemble", bool, False, "score with 16x self-ensemble"),
        Opt("--report", str, None, "write the CSV report here"),
    ]),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (help_text, opts) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for opt in _COMMON + opts:
            kwargs = {"help": f"{opt.help} (default: {opt.default})",
                      "default": argparse.SUPPRESS, "dest": opt.key}
            if opt.type is bool:
                kwargs["action"] = "store_true"
            else:
                kwargs["type"] = opt.type
                if opt.multi:
                    kwargs["nargs"] = "+"
            p.add_argument(opt.flag, **kwargs)
    return parser


def _convert(opt: Opt, raw: str):
    if opt.type is bool:
        return parse_bool(raw, opt.key)
    if opt.multi:
        parts = [p for chunk in raw.split(",") for p in chunk.split() if p]
        return [opt.type(p) for p in parts]
    return opt.type(raw)


def _resolve_options(command: str, ns: argparse.Namespace) -> dict:
    opts = _COMMON + _COMMANDS[command][1]
    by_key = {o.key: o for o in opts}
    values = {o.key: o.default for o in opts}
    given = vars(ns)
    config_path = given.get("config")
    if config_path is not None:
        for key, raw in load_config(config_path).items():
            if key == "config":
                continue
            if key not in by_key:
                raise UsageError(f"{PROG} {command}: unknown config key {key!r} "
                                 f"in {config_path}")
            values[key] = _convert(by_key[key], raw)
    for key, val in given.items():
        if key != "command":
            values[key] = val
    missing = [o.flag for o in opts if o.required and values.get(o.key) in (None, [])]
    if missing:
        raise UsageError(f"{PROG} {command}: missing required option(s): "
                         + ", ".join(missing))
    if values.get("threads", 0) in (0, None):
        env = os.environ.get("VSR_THREADS")
        values["threads"] = int(env) if env else (os.cpu_count() or 1)
    return values


def _print_resolved(command: str, values: dict) -> None:
    print(f"{PROG} {command}: resolved configuration")
    for key in sorted(values):
        if key == "config" and values[key] is None:
            continue
        print(f"  {key} = {values[key]}")
    print(f"  (seed = {values.get('seed', 0)})")


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------

def _auto_splits(n: int, train: int, select: int, test: int) -> SplitConfig:
    if select < 0:
        select = max(1, n // 8) if n > 1 else 0
    if test < 0:
        test = max(1, n // 4) if n > 2 else 0
    if train < 0:
        train = n - select - test
    return SplitConfig(train=train, select=select, test=test)


def _cmd_make_data(o: dict) -> int:
    split = _auto_splits(o["sequences"], o["train_count"], o["select_count"],
                         o["test_count"])
    split = SplitConfig(split.train, split.select, split.test, seed=o["seed"])
    motion = MotionSpec(patterns=o["patterns"], speed_min=o["speed_min"],
                        speed_max=o["speed_max"])
    sequences = generate_toy_dataset(o["sequences"], o["frames"], o["hr_size"],
                                     motion, seed=o["seed"])
    labeled = assign_splits(sequences, split)
    root = Path(o["out"])

    def write_one(seq):
        save_sequence(root / "hr", seq)
        save_sequence(root / "lr", degrade(seq))
        return seq.role

    roles = _parallel_map(write_one, labeled, o["threads"])
    print(f"wrote {len(labeled)} sequences under {root} "
          f"(train={roles.count('train')}, select={roles.count('select')}, "
          f"test={roles.count('test')})")
    return 0


def _load_pairs(root, role: str) -> list:
    root = Path(root)
    hr = {s.id: s for s in load_split(root / "hr", role)}
    lr = {s.id: s for s in load_split(root / "lr", role)}
    if set(hr) != set(lr):
        raise VsrError(f"{root}: hr/lr sequence ids differ for split {role!r}")
    if not hr:
        raise VsrError(f"{root}: no sequences in split {role!r}")
    return [(lr[k], hr[k]) for k in sorted(hr)]


def _cmd_train_sr(o: dict) -> int:
    model_cfg = SrConfig(arch=o["arch"], temporal_radius=o["t"], width=o["width"],
                         num_blocks=o["blocks"], growth=o["growth"],
                         layers_per_block=o["layers"], ca_reduction=o["reduction"],
                         bicubic_residual=o["bicubic_residual"])
    config = TrainConfig(model=model_cfg, loss_kind=o["loss"],
                         learning_rate=o["lr"], steps=o["steps"],
                         batch_size=o["batch"], lr_patch=o["patch"],
                         eval_interval=min(o["eval_interval"], o["steps"]),
                         eval_frames=o["eval_frames"], grad_clip=o["grad_clip"],
                         seed=o["seed"])
    train_pairs = _load_pairs(o["data"], "train")
    select_pairs = _load_pairs(o["data"], "select")
    out = Path(o["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    result = train_sr(config, train_pairs, select_pairs, checkpoint_path=out,
                      resume_from=out if o["resume"] else None)
    log_path = Path(o["log"]) if o["log"] else Path(str(out) + ".log.csv")
    write_metric_log(log_path, result.log)
    print(f"trained {o['arch']} (T={o['t']}, {result.model.num_parameters} parameters)")
    print(f"best selection psnr: {result.best_psnr:.4f} dB")
    print(f"checkpoint: {out}; log: {log_path}")
    return 0


def _cmd_train_ensemble(o: dict) -> int:
    if len(o["models"]) < 2:
        raise UsageError(f"{PROG} train-ensemble: need at least two --models, "
                         f"got {len(o['models'])}")
    models = {Path(p).stem: load_sr_checkpoint(p) for p in o["models"]}
    select_pairs = _load_pairs(o["data"], "select")
    samples = precompute_candidates(models, select_pairs,
                                    self_ensemble=o["self_ensemble"])
    config = EnsembleTrainConfig(passes=o["passes"], learning_rate=o["lr"],
                                 seed=o["seed"])
    out = Path(o["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    result = train_ensemble(config, samples, checkpoint_path=out)
    log_path = Path(o["log"]) if o["log"] else Path(str(out) + ".log.csv")
    write_metric_log(log_path, result.log)
    print(f"trained ensemble over {len(models)} models on {len(samples)} frames")
    print(f"checkpoint: {out}; log: {log_path}")
    return 0


def _frame_indices(spec: str, length: int) -> list:
    if spec == "all":
        return list(range(length))
    try:
        t = int(spec)
    except ValueError:
        raise UsageError(f"{PROG}: --t must be a frame index or 'all', got {spec!r}")
    if not 0 <= t < length:
        raise UsageError(f"{PROG}: frame {t} outside sequence of length {length}")
    return [t]


def _cmd_infer(o: dict) -> int:
    model = load_sr_checkpoint(o["model"])
    seq = load_sequence_dir(o["input"])
    out_dir = Path(o["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    indices = _frame_indices(o["t"], len(seq))

    def run(t):
        window = temporal_window(len(seq), t, model.temporal_radius)
        s = build_super_image(seq.frames, window)
        if o["self_ensemble"]:
            out, info = self_ensemble_infer(model, s, return_info=True)
            note = f" ({info['transforms']}x self-ensemble)" if t == indices[0] else ""
        else:
            with no_grad():
                out = model(s)
            note = ""
        write_ppm(out_dir / f"frame_{t:03d}.ppm", clamp_unit(out))
        return note

    notes = _parallel_map(run, indices, o["threads"])
    print(f"wrote {len(indices)} frames to {out_dir}{notes[0] if notes else ''}")
    return 0


def _cmd_fuse(o: dict) -> int:
    if o["mode"] not in ("adaptive", "average"):
        raise UsageError(f"{PROG} fuse: --mode must be adaptive or average, got {o['mode']!r}")
    candidates_per_frame: list
    if o["candidates"]:
        if len(o["candidates"]) < 2:
            raise UsageError(f"{PROG} fuse: ensembling a single candidate set is vacuous; "
                             "give at least two --candidates")
        seqs = [load_sequence_dir(d) for d in o["candidates"]]
        length = len(seqs[0])
        if any(len(s) != length for s in seqs):
            raise VsrError("candidate directories hold different frame counts")
        candidates_per_frame = [[s.frames[t] for s in seqs] for t in range(length)]
    elif o["models"]:
        if len(o["models"]) < 2:
            raise UsageError(f"{PROG} fuse: ensembling a single model is vacuous; "
                             "give at least two --models")
        if not o["input"]:
            raise UsageError(f"{PROG} fuse: --models needs --input")
        models = [load_sr_checkpoint(p) for p in o["models"]]
        seq = load_sequence_dir(o["input"])

        def infer_all(t):
            outs = []
            for m in models:
                window = temporal_window(len(seq), t, m.temporal_radius)
                s = build_super_image(seq.frames, window)
                if o["self_ensemble"]:
                    outs.append(clamp_unit(self_ensemble_infer(m, s)))
                else:
                    with no_grad():
                        outs.append(clamp_unit(m(s)))
            return outs

        candidates_per_frame = _parallel_map(infer_all, list(range(len(seq))), o["threads"])
    else:
        raise UsageError(f"{PROG} fuse: give either --candidates or --models")

    net = None
    if o["mode"] == "adaptive":
        if not o["ensemble"]:
            raise UsageError(f"{PROG} fuse: adaptive mode needs --ensemble")
        net = load_ensemble_checkpoint(o["ensemble"])
    out_dir = Path(o["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, frames in enumerate(candidates_per_frame):
        fused = adaptive_fuse(net, frames) if net is not None else average_fuse(frames)
        write_ppm(out_dir / f"frame_{t:03d}.ppm", clamp_unit(fused))
    print(f"wrote {len(candidates_per_frame)} fused frames to {out_dir} ({o['mode']})")
    return 0


def _cmd_eval(o: dict) -> int:
    if o["split"] not in ("train", "select", "test"):
        raise UsageError(f"{PROG} eval: --split must be train, select or test")
    names = o["names"] or [Path(p).stem for p in o["models"]]
    if len(names) != len(o["models"]):
        raise UsageError(f"{PROG} eval: {len(o['models'])} models but {len(names)} names")
    models = {n: load_sr_checkpoint(p) for n, p in zip(names, o["models"])}
    pairs = _load_pairs(o["data"], o["split"])
    net = load_ensemble_checkpoint(o["ensemble"]) if o["ensemble"] else None
    report = evaluate(models, pairs, self_ensemble=o["self_ensemble"],
                      ensemble_net=net, include_average=o["average"],
                      threads=o["threads"])
    print(report.summary())
    if o["report"]:
        report.write_csv(o["report"])
        print(f"report: {o['report']}")
    return 0


_HANDLERS = {
    "make-data": _cmd_make_data,
    "train-sr": _cmd_train_sr,
    "train-ensemble": _cmd_train_ensemble,
    "infer": _cmd_infer,
    "fuse": _cmd_fuse,
    "eval": _cmd_eval,
}


def dispatch(argv) -> int:
    """Parse argv (without the program name) and run one subcommand."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help prints and exits 0
        return int(e.code or 0)
    if getattr(ns, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        values = _resolve_options(ns.command, ns)
        _print_resolved(ns.command, values)
        return _HANDLERS[ns.command](values)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (VsrError, OSError) as e:
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
