"""Command-line entry point: ``vidattn <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .align import best_transcript, framewise_ce
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DatasetError, SynthConfig, load_dataset, save_dataset, split, synth_generate
from .metrics import attention_score, evaluate, uniform_attention_score
from .net import ModelDims, forward
from .optim import DivergenceError, TrainConfig, parse_config_text, train
from .verify import check_instance, group_errors, tiny_instance


@dataclass
class CommandResult:
    exit_code: int
    files: list = field(default_factory=list)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vidattn", description="Weakly supervised video attention toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--recipes", type=int, default=10)
    g.add_argument("--actions", type=int, default=48)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--videos-per-recipe", type=int, default=10)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--noise-dims", type=int, default=0)
    g.add_argument("--background-prob", type=float, default=0.3)

    t = sub.add_parser("train", help="train and save the best checkpoint")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--dropout", type=float)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--lambda-act", type=float)
    t.add_argument("--lambda-div", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--optimizer", choices=("sgd", "adam"))
    t.add_argument("--eval-every", type=int)
    t.add_argument("--hidden", type=int, default=64)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "val", "test"), required=True)
    e.add_argument("--csv")

    a = sub.add_parser("attend", help="export one video's attention map")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--video", required=True)
    a.add_argument("--out", required=True)

    v = sub.add_parser("viterbi", help="grammar-constrained Viterbi labelling")
    v.add_argument("--data", required=True)
    v.add_argument("--ckpt")
    v.add_argument("--out", required=True)

    c = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--instances", type=int, default=20)

    k = sub.add_parser("curves", help="export loss/accuracy curves from a checkpoint")
    k.add_argument("--history", required=True)
    k.add_argument("--out", required=True)
    return p


def _splits(ds, config: TrainConfig):
    train_set, val_set, test_set = split(ds, config.train_fraction, config.seed)
    return {"train": train_set, "val": val_set, "test": test_set}


def cmd_gen(args) -> CommandResult:
    cfg = SynthConfig(
        num_recipes=args.recipes, num_actions=args.actions, feat_dim=args.dim,
        videos_per_recipe=args.videos_per_recipe, noise_std=args.noise,
        noise_dims=args.noise_dims, background_prob=args.background_prob, seed=args.seed,
    )
    ds = synth_generate(cfg)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} videos to {args.out}")
    return CommandResult(0, [args.out])


def cmd_train(args) -> CommandResult:
    ds = load_dataset(args.data)
    config = TrainConfig()
    if args.config:
        config = parse_config_text(Path(args.config).read_text(), config)
    overrides = {
        "epochs": args.epochs, "batch_size": args.batch, "learning_rate": args.lr,
        "dropout_p": args.dropout, "weight_decay": args.weight_decay,
        "lambda_act": args.lambda_act, "lambda_div": args.lambda_div, "seed": args.seed,
        "optimizer": args.optimizer, "eval_every": args.eval_every,
    }
    config = TrainConfig.from_mapping({k: v for k, v in overrides.items() if v is not None}, config)
    parts = _splits(ds, config)
    dims = ModelDims(ds.feat_dim, args.hidden, ds.num_actions, ds.num_recipes)
    best, history = train(parts["train"], parts["val"], dims, config)
    save_checkpoint(best, args.out)
    last = history[-1]
    print(f"best epoch {best.epoch}; final train loss {last.train_loss:.6f}; saved {args.out}")
    return CommandResult(0, [args.out])


def cmd_eval(args) -> CommandResult:
    ckpt = load_checkpoint(args.ckpt)
    ds = load_dataset(args.data)
    report = evaluate(ckpt, _splits(ds, ckpt.config)[args.split])
    text = report.csv_header() + "\n" + report.csv_row() + "\n"
    sys.stdout.write(text)
    files = []
    if args.csv:
        Path(args.csv).write_text(text)
        files.append(args.csv)
    return CommandResult(0, files)


def cmd_attend(args) -> CommandResult:
    ckpt = load_checkpoint(args.ckpt)
    ds = load_dataset(args.data)
    video = ds.by_id(args.video)
    out = forward(video, ckpt.params, "eval")
    acts = video.annotated_actions()
    if not acts:
        raise ValueError(f"video {video.id} has no annotated actions")
    P = out.attention[acts]
    path = Path(args.out)
    if path.suffix == ".csv":
        plots.attention_csv(P, path)
    elif path.suffix == ".svg":
        plots.attention_svg(P, acts, video.frame_labels, path, title=video.id)
    else:
        raise ValueError("--out must end in .csv or .svg")
    score = attention_score(P, video.frame_labels, acts)
    uniform = uniform_attention_score(video.frame_labels, acts)
    print(f"video={video.id} attention_score={score!r} normalized={score * video.num_frames!r} uniform={uniform!r}")
    return CommandResult(0, [str(path)])


def cmd_viterbi(args) -> CommandResult:
    ds = load_dataset(args.data)
    if not ds.grammar:
        raise ValueError(f"{args.data} has no grammar.txt")
    ckpt = load_checkpoint(args.ckpt) if args.ckpt else None
    rows = ["id,true_recipe,pred_recipe,transcript,log_score,framewise_ce,alignment_accuracy"]
    correct_frames = total_frames = 0
    for v in ds.videos:
        if ckpt is not None:
            lp = forward(v, ckpt.params, "eval").frame_log_probs()
        else:
            lp = np.full((v.num_frames, ds.num_actions), -np.log(ds.num_actions))
        recipe, tr, al = best_transcript(lp, ds.grammar)
        ce = framewise_ce(lp, al.frame_labels)
        acc = float(np.mean(al.frame_labels == v.frame_labels)) if v.frame_labels is not None else float("nan")
        if v.frame_labels is not None:
            correct_frames += int(np.sum(al.frame_labels == v.frame_labels))
            total_frames += v.num_frames
        rows.append(f"{v.id},{v.recipe},{recipe},{' '.join(map(str, tr))},{al.log_score!r},{ce!r},{acc!r}")
    Path(args.out).write_text("\n".join(rows) + "\n")
    if total_frames:
        print(f"alignment_accuracy={correct_frames / total_frames!r} videos={len(ds)}")
    return CommandResult(0, [args.out])


def cmd_gradcheck(args) -> CommandResult:
    ok = True
    worst_by_group: dict[str, float] = {}
    for i in range(args.instances):
        report = check_instance(tiny_instance(args.seed + i), args.eps, args.tol)
        for g, err in group_errors(report).items():
            worst_by_group[g] = max(worst_by_group.get(g, 0.0), err)
        if not report.passed:
            print(f"instance {args.seed + i}: {report}")
        ok &= report.passed
    for g, err in worst_by_group.items():
        print(f"{g:18s} max_rel_err={err:.3e} {'PASS' if err <= args.tol else 'FAIL'}")
    return CommandResult(0 if ok else 1)


def cmd_curves(args) -> CommandResult:
    ckpt = load_checkpoint(args.history)
    prefix = args.out
    loss = {"train_loss": ckpt.history_series("train", "loss")}
    acc = {
        "train_recipe_accuracy": ckpt.history_series("train", "recipe_accuracy"),
        "val_recipe_accuracy": ckpt.history_series("val", "recipe_accuracy"),
        "val_action_f1": ckpt.history_series("val", "action_f1"),
        "val_frame_accuracy": ckpt.history_series("val", "frame_action_accuracy"),
    }
    files = [f"{prefix}_loss.csv", f"{prefix}_loss.svg", f"{prefix}_accuracy.csv", f"{prefix}_accuracy.svg"]
    plots.curves_csv(loss, files[0])
    plots.curves_svg(loss, files[1], "loss")
    plots.curves_csv(acc, files[2])
    plots.curves_svg(acc, files[3], "accuracy")
    for f in files:
        print(f)
    return CommandResult(0, files)


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "attend": cmd_attend,
    "viterbi": cmd_viterbi, "gradcheck": cmd_gradcheck, "curves": cmd_curves,
}


def run(argv=None) -> CommandResult:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return CommandResult(2)
    except SystemExit as exc:  # --help
        return CommandResult(int(exc.code or 0))
    try:
        return COMMANDS[args.command](args)
    except (DatasetError, CheckpointError, DivergenceError, FileNotFoundError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"vidattn {args.command}: error: {msg}", file=sys.stderr)
        return CommandResult(1)


def main(argv=None) -> int:
    return run(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
