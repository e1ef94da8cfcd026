"""Command-line entry point for reproducible experiment runs.

Every command resolves its flags (optionally seeded from a config file),
does its work, and writes a JSON manifest with the resolved configuration,
input/output checksums, and timing.  `rerun --manifest FILE` re-executes a
run from the stored configuration; outputs are byte-identical.

Exit codes: 0 success, 1 runtime failure, 2 flag/usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, baseline, eval as evaluation, plots
from .dataset import Dataset, DatasetSpec, build_splits, load_dataset, save_dataset
from .dynamics import SimParams, GAIN_MODES
from .nn import Model, load_checkpoint, save_checkpoint
from .textheader import FormatError, read_block
from .train import (TrainConfig, fine_tune, train, write_history_csv)


# ---------------------------------------------------------------------------
# manifests

def _sha256_file(path: Path) -> str:
    import hashlib
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict,
                   inputs: list, outputs: list, started: float) -> Path:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": config,
        "inputs": {str(p): _sha256_file(Path(p)) for p in inputs},
        "outputs": {str(p): _sha256_file(Path(p)) for p in outputs},
        "duration_seconds": round(time.time() - started, 3),
    }
    path = out_dir / f"{command}.manifest.json"
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _resolved(ns: argparse.Namespace) -> dict:
    cfg = {}
    for key, value in sorted(vars(ns).items()):
        if key in ("func", "command", "config"):
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def _out_dir(ns) -> Path:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_gen(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    sim = SimParams(T=ns.T, tau=ns.tau, M=ns.M, gain_mode=ns.gain_mode)
    spec = DatasetSpec(
        L=ns.L, E=ns.E, N_L=ns.NL, sim=sim, seed=ns.seed,
        N_train=ns.N_train, n_train=ns.n_train, N_test=ns.n_test,
        N_L_gen=ns.NL_gen, N_gen=ns.n_gen)
    items = build_splits(spec)
    outputs = []
    for tag, fname in (("train", "train.dat"), ("test", "test.dat"),
                       ("generalization", "generalization.dat")):
        subset = [it for it in items if it.split == tag]
        if not subset and tag == "generalization":
            continue
        path = out / fname
        save_dataset(path, Dataset(spec, subset))
        outputs.append(path)
        print(f"wrote {path} ({len(subset)} instances)")
    outputs.append(write_manifest(out, "gen", _resolved(ns), [], outputs[:], started))
    return 0


def _load_pair(train_path, test_path):
    dtr = load_dataset(train_path)
    dte = load_dataset(test_path)
    return dtr, dte


def cmd_train(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    dtr, dte = _load_pair(ns.train, ns.test)
    ckpt = out / "model.ckpt"
    config = TrainConfig(epochs=ns.epochs, batch_size=ns.batch_size, lr=ns.lr,
                         seed=ns.seed, checkpoint_path=ckpt,
                         checkpoint_every=ns.checkpoint_every)
    model = Model(dtr.spec.L, dtr.spec.sim.M, seed=ns.seed)
    if ns.resume is not None:
        model, optimizer, meta = load_checkpoint(ns.resume)
        model, history = train(model, dtr, dte, config, optimizer=optimizer,
                               start_epoch=meta["epoch"])
    else:
        model, history = train(model, dtr, dte, config)
    hist_path = out / "history.csv"
    write_history_csv(history, hist_path)
    svg = out / "history.svg"
    epochs = [r.epoch for r in history]
    plots.line_plot(svg, epochs,
                    {"train": [r.train_gamma for r in history],
                     "test": [r.test_gamma for r in history]},
                    "epoch", "accuracy")
    final = history.records[-1]
    print(f"final: loss {final.loss:.6f} train_gamma {final.train_gamma:.4f} "
          f"test_gamma {final.test_gamma:.4f}")
    write_manifest(out, "train", _resolved(ns),
                   [ns.train, ns.test] + ([ns.resume] if ns.resume else []),
                   [hist_path, ckpt, svg], started)
    return 0


def cmd_finetune(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    pre_tr, pre_te = _load_pair(ns.pretrain, ns.pretrain_test)
    tgt_tr, tgt_te = _load_pair(ns.target, ns.target_test)
    config = TrainConfig(epochs=ns.epochs, batch_size=ns.batch_size,
                         lr=ns.lr, seed=ns.seed,
                         pretrain_epochs=ns.pretrain_epochs,
                         pretrain_lr=ns.pretrain_lr)
    model, hist_pre, hist_ft = fine_tune(pre_tr, pre_te, tgt_tr, tgt_te,
                                         config,
                                         carry_optimizer=ns.carry_optimizer)
    pre_csv = out / "pretrain_history.csv"
    ft_csv = out / "finetune_history.csv"
    write_history_csv(hist_pre, pre_csv)
    write_history_csv(hist_ft, ft_csv)
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, model, epoch=len(hist_pre) + len(hist_ft))
    svg = out / "finetune.svg"
    xs = list(range(len(hist_pre) + len(hist_ft)))
    gammas = [r.test_gamma for r in hist_pre] + [r.test_gamma for r in hist_ft]
    stage = [r.grad_norm for r in hist_pre] + [r.grad_norm for r in hist_ft]
    plots.line_plot(svg, xs, {"test accuracy": gammas}, "epoch", "accuracy")
    ft_gamma = hist_ft.final_test_gamma()
    print(f"fine-tuned test_gamma {ft_gamma:.4f} "
          f"(pretrain epochs {len(hist_pre)}, target epochs {len(hist_ft)})")
    write_manifest(out, "finetune", _resolved(ns),
                   [ns.pretrain, ns.pretrain_test, ns.target, ns.target_test],
                   [pre_csv, ft_csv, ckpt, svg], started)
    return 0


def cmd_eval(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    model, _, _ = load_checkpoint(ns.checkpoint)
    data = load_dataset(ns.data)
    if ns.split != "all":
        data = data.split(ns.split)
    if not data.items:
        raise ValueError(f"no instances with split {ns.split!r} in {ns.data}")
    report = evaluation.evaluate_dataset(model, data)
    csv_path = out / "report.csv"
    evaluation.write_report_csv(report, csv_path)
    split = evaluation.entropy_split(report)
    print(f"gamma {report.gamma:.6f} over {len(report)} connection predictions")
    fmt = lambda v: "undefined" if v is None else f"{v:.4f}"
    print(f"mean entropy: correct {fmt(split.mean_correct)}, "
          f"incorrect {fmt(split.mean_incorrect)}")
    svg = out / "entropy.svg"
    s_sorted = np.sort(report.entropy)
    plots.line_plot(svg, list(range(len(s_sorted))),
                    {"entropy (sorted)": s_sorted}, "rank", "S", markers=False)
    write_manifest(out, "eval", _resolved(ns), [ns.checkpoint, ns.data],
                   [csv_path, svg], started)
    return 0


def _parse_thresholds(text: str) -> list[float]:
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        if step <= 0 or hi < lo:
            raise ValueError("thresholds must be lo:hi:step with step > 0")
        count = int(round((hi - lo) / step)) + 1
        return [lo + k * step for k in range(count) if lo + k * step <= hi + 1e-12]
    return [float(v) for v in text.split(",")]


def cmd_sweep_entropy(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    report = evaluation.read_report_csv(ns.report)
    thresholds = _parse_thresholds(ns.thresholds)
    points = evaluation.confidence_sweep(report, thresholds)
    csv_path = out / "sweep.csv"
    evaluation.write_sweep_csv(points, csv_path)
    svg = out / "sweep.svg"
    xs = [p.threshold for p in points]
    plots.line_plot(svg, xs,
                    {"eta": [p.eta for p in points],
                     "filtered accuracy": [float("nan") if p.gamma_filtered is None
                                           else p.gamma_filtered for p in points]},
                    "S_c", "value")
    for p in points:
        gf = "undefined" if p.gamma_filtered is None else f"{p.gamma_filtered:.4f}"
        print(f"S_c {p.threshold:.4f}: eta {p.eta:.4f} gamma_filtered {gf}")
    write_manifest(out, "sweep-entropy", _resolved(ns), [ns.report],
                   [csv_path, svg], started)
    return 0


def _temperature_run(args: tuple) -> tuple:
    """One (T, cold, fine-tuned) measurement; runs in a worker process."""
    (T, base, out_root) = args
    ns = argparse.Namespace(**base)
    sim = SimParams(T=T, tau=ns.tau, M=ns.M, gain_mode=ns.gain_mode)
    spec = DatasetSpec(L=ns.L, E=ns.E, N_L=ns.NL, sim=sim, seed=ns.seed,
                       n_train=ns.n_train, N_test=ns.n_test)
    items = build_splits(spec)
    data = Dataset(spec, items)
    dtr, dte = data.split("train"), data.split("test")

    sim_low = SimParams(T=ns.pretrain_T, tau=ns.tau, M=ns.M,
                        gain_mode=ns.gain_mode)
    spec_low = DatasetSpec(L=ns.L, E=ns.E, N_L=ns.NL, sim=sim_low,
                           seed=ns.seed, n_train=ns.n_train, N_test=ns.n_test)
    low = Dataset(spec_low, build_splits(spec_low))

    config = TrainConfig(epochs=ns.epochs, batch_size=ns.batch_size,
                         lr=ns.lr, seed=ns.seed,
                         pretrain_epochs=ns.pretrain_epochs)
    cold_cfg = TrainConfig(epochs=(ns.pretrain_epochs or ns.epochs) + ns.epochs,
                           batch_size=ns.batch_size, lr=ns.lr, seed=ns.seed)
    model = Model(ns.L, ns.M, seed=ns.seed)
    _, hist_cold = train(model, dtr, dte, cold_cfg)
    _, _, hist_ft = fine_tune(low.split("train"), low.split("test"),
                              dtr, dte, config)
    return (T, hist_cold.final_test_gamma(), hist_ft.final_test_gamma())


def cmd_sweep_temperature(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    temps = [float(t) for t in ns.temps.split(",")]
    base = _resolved(ns)
    jobs = max(1, ns.jobs)
    rows = []
    if jobs == 1:
        for T in temps:
            rows.append(_temperature_run((T, base, str(out))))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_temperature_run,
                                 [(T, base, str(out)) for T in temps]))
    rows.sort(key=lambda r: r[0])
    csv_path = out / "temperature.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("T,gamma_cold,gamma_finetuned\n")
        for T, gc, gf in rows:
            fh.write(f"{T!r},{gc!r},{gf!r}\n")
    svg = out / "temperature.svg"
    plots.line_plot(svg, [r[0] for r in rows],
                    {"cold start": [r[1] for r in rows],
                     "fine-tuned": [r[2] for r in rows]},
                    "T", "test accuracy", logx=True)
    for T, gc, gf in rows:
        print(f"T {T}: cold {gc:.4f} fine-tuned {gf:.4f}")
    write_manifest(out, "sweep-temperature", _resolved(ns), [],
                   [csv_path, svg], started)
    return 0


def cmd_baseline(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    data = load_dataset(ns.data)
    if ns.split != "all":
        data = data.split(ns.split)
    if not data.items:
        raise ValueError(f"no instances with split {ns.split!r} in {ns.data}")
    by_lattice: dict[str, list] = {}
    labels = {}
    for it in data.items:
        lid = it.label.lattice_id
        by_lattice.setdefault(lid, []).append(it.instance)
        labels[lid] = it.label
    E = data.spec.E
    rows = []
    correct = total = 0
    for lid in sorted(by_lattice):
        insts = by_lattice[lid]
        if ns.pool == "lattice":
            groups = [insts]
        else:
            groups = [[inst] for inst in insts]
        truth = labels[lid].bits()
        lat_correct = lat_total = 0
        for group in groups:
            profile = baseline.correlation_scores(group, lag=ns.lag)
            pred = baseline.reconstruct_top_e(profile, E).bits()
            lat_correct += int((pred == truth).sum())
            lat_total += truth.size
        rows.append((lid, len(insts), lat_correct / lat_total))
        correct += lat_correct
        total += lat_total
    csv_path = out / "baseline.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("lattice_id,n_instances,gamma\n")
        for lid, n, g in rows:
            fh.write(f"{lid},{n},{g!r}\n")
    print(f"baseline gamma {correct / total:.4f} "
          f"({ns.pool}-pooled, lag {ns.lag}, {len(rows)} lattices)")
    svg = out / "baseline.svg"
    plots.line_plot(svg, list(range(len(rows))),
                    {"per-lattice accuracy": [r[2] for r in rows]},
                    "lattice", "gamma")
    write_manifest(out, "baseline", _resolved(ns), [ns.data],
                   [csv_path, svg], started)
    return 0


def cmd_fit(ns) -> int:
    out = _out_dir(ns)
    started = time.time()
    xs, ys = [], []
    with open(ns.points, newline="") as fh:
        import csv as _csv
        for row in _csv.reader(fh):
            try:
                x, y = float(row[ns.x_col]), float(row[ns.y_col])
            except (ValueError, IndexError):
                continue  # header or malformed line
            xs.append(x)
            ys.append(y)
    fit = evaluation.linear_fit(zip(xs, ys))
    print(f"a {fit.a!r}\nb {fit.b!r}\nR2 {fit.r2!r}")
    csv_path = out / "fit.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("a,b,r2\n")
        fh.write(f"{fit.a!r},{fit.b!r},{fit.r2!r}\n")
    svg = out / "fit.svg"
    plots.fit_plot(svg, xs, ys, fit, "x", "y")
    write_manifest(out, "fit", _resolved(ns), [ns.points],
                   [csv_path, svg], started)
    return 0


def cmd_rerun(ns) -> int:
    with open(ns.manifest) as fh:
        manifest = json.load(fh)
    command = manifest["command"]
    func = {
        "gen": cmd_gen, "train": cmd_train, "finetune": cmd_finetune,
        "eval": cmd_eval, "sweep-entropy": cmd_sweep_entropy,
        "sweep-temperature": cmd_sweep_temperature,
        "baseline": cmd_baseline, "fit": cmd_fit,
    }.get(command)
    if func is None:
        raise ValueError(f"manifest names unknown command {command!r}")
    replay = argparse.Namespace(**manifest["config"])
    return func(replay)


# ---------------------------------------------------------------------------
# parser

def _apply_config_file(parser: argparse.ArgumentParser, path: str) -> None:
    """Config files hold 'key value' lines in the shared header syntax;
    values become flag defaults (explicit flags still win)."""
    with open(path, "rb") as fh:
        fields = read_block(fh, "glaubernet-config", 1)
    converters = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in fields.items():
        action = converters.get(key)
        if action is None:
            raise ValueError(f"config key {key!r} is not a flag of this command")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
        action.required = False  # the config file satisfied it
    parser.set_defaults(**defaults)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glaubernet",
        description="Lattice-topology reconstruction experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None,
                       help="config file with 'key value' defaults")
        p.add_argument("--out", default="runs/" + name, help="output directory")
        return p

    p = add("gen", cmd_gen, "generate train/test/generalization datasets")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--E", type=int, required=True)
    p.add_argument("--NL", type=int, required=True, help="training lattices")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--gain-mode", dest="gain_mode", choices=GAIN_MODES,
                   default="beta-form")
    p.add_argument("--N-train", dest="N_train", type=int, default=None)
    p.add_argument("--n-train", dest="n_train", type=int, default=None,
                   help="training instances per lattice")
    p.add_argument("--n-test", dest="n_test", type=int, default=0)
    p.add_argument("--NL-gen", dest="NL_gen", type=int, default=0)
    p.add_argument("--n-gen", dest="n_gen", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)

    p = add("train", cmd_train, "train a model on a dataset pair")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                   default=0)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")

    p = add("finetune", cmd_finetune, "pretrain on one dataset, tune on another")
    p.add_argument("--pretrain", required=True)
    p.add_argument("--pretrain-test", dest="pretrain_test", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--target-test", dest="target_test", required=True)
    p.add_argument("--epochs", type=int, required=True,
                   help="fine-tune stage epochs")
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int,
                   default=None)
    p.add_argument("--pretrain-lr", dest="pretrain_lr", type=float,
                   default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--carry-optimizer", dest="carry_optimizer",
                   action="store_true")

    p = add("eval", cmd_eval, "evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="all",
                   choices=("all", "train", "test", "generalization"))

    p = add("sweep-entropy", cmd_sweep_entropy,
            "confidence filtering curve from a report CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--thresholds", default="0.05:0.7:0.05",
                   help="lo:hi:step or comma list")

    p = add("sweep-temperature", cmd_sweep_temperature,
            "cold vs fine-tuned accuracy across temperatures")
    p.add_argument("--temps", required=True, help="comma-separated list")
    p.add_argument("--L", type=int, default=12)
    p.add_argument("--E", type=int, default=25)
    p.add_argument("--NL", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--gain-mode", dest="gain_mode", choices=GAIN_MODES,
                   default="beta-form")
    p.add_argument("--n-train", dest="n_train", type=int, default=200)
    p.add_argument("--n-test", dest="n_test", type=int, default=40)
    p.add_argument("--pretrain-T", dest="pretrain_T", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int,
                   default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)

    p = add("baseline", cmd_baseline, "correlation reconstructor accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="all",
                   choices=("all", "train", "test", "generalization"))
    p.add_argument("--lag", type=int, default=1, choices=(0, 1))
    p.add_argument("--pool", default="lattice", choices=("lattice", "instance"),
                   help="score from all of a lattice's instances, or one at a time")

    p = add("fit", cmd_fit, "least-squares line through CSV points")
    p.add_argument("--points", required=True)
    p.add_argument("--x-col", dest="x_col", type=int, default=0)
    p.add_argument("--y-col", dest="y_col", type=int, default=1)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.set_defaults(func=cmd_rerun)
    p.add_argument("--manifest", required=True)
    return parser


def _peel_config(argv: list) -> tuple[list, str | None]:
    """Extract --config PATH (or --config=PATH) before argparse runs, since
    required flags may be satisfied by the file itself."""
    out, cfg, skip = [], None, False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok == "--config":
            cfg = argv[i + 1] if i + 1 < len(argv) else None
            skip = True
        elif tok.startswith("--config="):
            cfg = tok.split("=", 1)[1]
        else:
            out.append(tok)
    return out, cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    argv, config_path = _peel_config(argv)
    if config_path is not None:
        if not argv:
            parser.error("--config requires a command")
        sub = next(a for a in parser._actions
                   if isinstance(a, argparse._SubParsersAction))
        command_parser = sub.choices.get(argv[0])
        if command_parser is None:
            parser.error(f"unknown command {argv[0]!r}")
        try:
            _apply_config_file(command_parser, config_path)
        except (OSError, FormatError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    args = parser.parse_args(argv)
    args.config = config_path
    try:
        return args.func(args)
    except (OSError, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
