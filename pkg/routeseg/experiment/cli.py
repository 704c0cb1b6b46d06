"""Routing segmentation experiments.

Usage:
    routeseg gen-data --out=<dir> [--count=<n>] [--classes=<k>] [--size=<px>] [--seed=<seed>] [--fraction=<f>] [--threads=<t>]
    routeseg train [<config>] [--out=<dir>] [--seed=<seed>] [--threads=<t>] [--resume=<ckpt>] [--set=<kv>...]
    routeseg eval <checkpoint> <data_dir> [--out=<dir>] [--threads=<t>]
    routeseg gradcheck [--out=<dir>] [--seed=<seed>] [--rtol=<tol>]
    routeseg flops <checkpoint> [--shape=<shape>] [--tau=<tau>...] [--out=<dir>]
    routeseg (-h | --help)
    routeseg --version

Options:
    -h --help           Show this screen.
    --version           Show the version.
    --out=<dir>         Output directory (default: "results", or the config value for train).
    --count=<n>         Number of samples [default: 64].
    --classes=<k>       Number of classes, background included [default: 4].
    --size=<px>         Image side in pixels [default: 96].
    --seed=<seed>       Seed; falls back to the SELENE_SEED environment variable.
    --fraction=<f>      Labeled fraction (e.g. 1/8); gen-data also writes the split file.
    --threads=<t>       Worker threads; 1 is deterministic.
    --resume=<ckpt>     Checkpoint to resume training from.
    --set=<kv>          Override a configuration key, as key=value.
    --rtol=<tol>        Relative tolerance of the gradient checks [default: 1e-4].
    --shape=<shape>     Input shape B,3,H,W [default: 1,3,96,96].
    --tau=<tau>         Gate activation threshold(s); defaults to the checkpoint's.
"""

import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
import yaml
from docopt import docopt

import routeseg
from routeseg._version import __version__
from routeseg.autodiff import builtin_checks
from routeseg.data import gen_shapes_dataset, load_dataset, make_split, read_split, save_dataset, write_split
from routeseg.experiment.yaml_utils import parse_overrides, parse_run_config
from routeseg.metrics import evaluate
from routeseg.nets import count_flops, load_net
from routeseg.seeding import Seeder, resolve_seed
from routeseg.training import SegmentationTrainer

logger = routeseg.logger

EVAL_COLUMNS = ("checkpoint", "data_dir", "miou", "pixel_accuracy")
FLOPS_COLUMNS = ("checkpoint", "input_shape", "tau", "macs")
GRADCHECK_COLUMNS = ("name", "passed", "max_rel_error", "max_abs_error", "n_checked")


@contextmanager
def staged_output(out_dir):
    """
    Yield a temporary directory whose content is copied into ``out_dir``
    only if the block succeeds.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir.parent, prefix=f".{out_dir.name}-") as tmp:
        yield Path(tmp)
        shutil.copytree(tmp, out_dir, dirs_exist_ok=True)


def _int_option(value, name) -> Optional[int]:
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {value!r}") from None


def _float_option(value, name) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {value!r}") from None


def cmd_gen_data(
    out, count=64, num_classes=4, size=96, seed=None, fraction=None, threads=1
) -> Path:
    """Write a synthetic shapes dataset (and a split file if ``fraction`` is given) to ``out``."""
    seed = resolve_seed(seed)
    if seed is None and fraction is not None:
        seed = int(Seeder().rng.integers(2**31))
        logger.info(f"No seed given, the split uses seed {seed}.")
    samples = gen_shapes_dataset(count, num_classes=num_classes, size=size, seed=seed, threads=threads)
    with staged_output(out) as tmp:
        save_dataset(tmp, samples)
        if fraction is not None:
            split = make_split(samples, fraction, seed)
            write_split(tmp, split)
            logger.info(f"Split {split.file_name}: {len(split.labeled)} labeled, {len(split.unlabeled)} unlabeled.")
    logger.info(f"Wrote {count} samples to {out}.")
    return Path(out)


def _training_sets(run, seed):
    ids = sorted(path.stem for path in (Path(run.data_dir) / "images").glob("*.ppm"))
    if run.split_file is not None:
        split = read_split(run.split_file)
    elif run.fraction is not None:
        split_seed = run.split_seed if run.split_seed is not None else (seed if seed is not None else 0)
        split = make_split(ids, run.fraction, split_seed)
    else:
        return load_dataset(run.data_dir, ids), []
    missing = sorted(set(split.labeled + split.unlabeled) - set(ids))
    if missing:
        raise ValueError(f"split ids missing from {run.data_dir}: {missing[:5]}")
    labeled = load_dataset(run.data_dir, split.labeled)
    unlabeled = load_dataset(run.data_dir, split.unlabeled, labels=False)
    return labeled, unlabeled


def cmd_train(
    config_path=None,
    out=None,
    seed=None,
    threads=None,
    resume=None,
    overrides: Sequence[str] = (),
) -> SegmentationTrainer:
    """
    Train from a run config file; ``metrics.csv`` and ``checkpoints/`` go to the output directory.

    Flags win over ``--set`` values, which win over the file. The seed is
    ``seed``, else ``SELENE_SEED``, else the config value.
    """
    run, train, net = parse_run_config(config_path, parse_overrides(overrides))
    if out is not None:
        run = replace(run, out=out)
    if resume is not None:
        run = replace(run, resume=resume)
    run.validate()
    train = replace(train, seed=resolve_seed(seed, default=train.seed))
    if threads is not None:
        train = replace(train, threads=threads)

    labeled, unlabeled = _training_sets(run, train.seed)
    val = load_dataset(run.val_dir) if run.val_dir is not None else []
    logger.info(
        f"Training method '{train.method}' on {len(labeled)} labeled and "
        f"{len(unlabeled)} unlabeled samples, seed {train.seed}."
    )
    trainer = SegmentationTrainer(
        labeled,
        unlabeled,
        val,
        config=train,
        net_config=net,
        output_dir=run.out,
        writer_kwargs=dict(name=f"routeseg_{train.method}", style_log="progressbar"),
    )
    if run.resume is not None:
        trainer.resume(run.resume)
    trainer.fit()
    return trainer


def cmd_eval(checkpoint, data_dir, out="results", threads=1):
    """Evaluate a checkpoint on a labeled dataset; appends a row to ``<out>/eval.csv``."""
    if not Path(checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {checkpoint} does not exist")
    net, _ = load_net(checkpoint)
    samples = load_dataset(data_dir)
    miou, accuracy = evaluate(net, samples, threads=threads)
    print(f"miou={miou:.6f} pixel_accuracy={accuracy:.6f}")

    row = pd.DataFrame([[str(checkpoint), str(data_dir), miou, accuracy]], columns=list(EVAL_COLUMNS))
    previous = Path(out) / "eval.csv"
    if previous.exists():
        row = pd.concat([pd.read_csv(previous), row], ignore_index=True)
    with staged_output(out) as tmp:
        row.to_csv(tmp / "eval.csv", index=False, float_format="%.17g")
    return miou, accuracy


def cmd_gradcheck(out="results", seed=None, rtol=1e-4) -> bool:
    """Run the gradient suite; writes ``<out>/gradcheck.csv``. Returns True if every check passes."""
    results = builtin_checks(seed=resolve_seed(seed, default=42), rtol=rtol)
    report = pd.DataFrame([vars(result) for result in results], columns=list(GRADCHECK_COLUMNS))
    for result in results:
        status = "ok" if result.passed else "FAILED"
        print(f"{result.name:<28} {status:<6} max_rel_error={result.max_rel_error:.3e}")
    with staged_output(out) as tmp:
        report.to_csv(tmp / "gradcheck.csv", index=False, float_format="%.17g")
    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.error(f"Gradient check failed for {failed}.")
    return not failed


def cmd_flops(checkpoint, shape="1,3,96,96", taus: Sequence[Optional[float]] = (None,), out="results") -> List[int]:
    """Multiply-add count of a checkpoint for each threshold; writes ``<out>/flops.csv``."""
    if not Path(checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {checkpoint} does not exist")
    try:
        input_shape = tuple(int(s) for s in str(shape).split(","))
    except ValueError:
        raise ValueError(f"shape must be comma-separated integers, got {shape!r}") from None
    net, _ = load_net(checkpoint)
    rows = []
    for tau in taus or (None,):
        tau = net.config.gate_activation_threshold if tau is None else tau
        macs = count_flops(net, input_shape, tau)
        print(f"tau={tau:g} macs={macs}")
        rows.append([str(checkpoint), "x".join(map(str, input_shape)), tau, macs])
    with staged_output(out) as tmp:
        pd.DataFrame(rows, columns=list(FLOPS_COLUMNS)).to_csv(tmp / "flops.csv", index=False)
    return [row[-1] for row in rows]


def main(argv=None) -> int:
    """
    Parse command line arguments and run a subcommand.

    Returns the exit status: 0 on success, 1 on a configuration or data
    error, or when a gradient check fails.
    """
    args = docopt(__doc__, argv=argv, version=__version__)
    out = args["--out"]
    try:
        seed = _int_option(args["--seed"], "--seed")
        threads = _int_option(args["--threads"], "--threads")
        if args["gen-data"]:
            cmd_gen_data(
                out,
                count=_int_option(args["--count"], "--count"),
                num_classes=_int_option(args["--classes"], "--classes"),
                size=_int_option(args["--size"], "--size"),
                seed=seed,
                fraction=args["--fraction"],
                threads=threads or 1,
            )
        elif args["train"]:
            cmd_train(
                args["<config>"],
                out=out,
                seed=seed,
                threads=threads,
                resume=args["--resume"],
                overrides=args["--set"],
            )
        elif args["eval"]:
            cmd_eval(args["<checkpoint>"], args["<data_dir>"], out=out or "results", threads=threads or 1)
        elif args["gradcheck"]:
            if not cmd_gradcheck(out=out or "results", seed=seed, rtol=_float_option(args["--rtol"], "--rtol")):
                return 1
        elif args["flops"]:
            taus = [_float_option(tau, "--tau") for tau in args["--tau"]] or [None]
            cmd_flops(args["<checkpoint>"], shape=args["--shape"], taus=taus, out=out or "results")
    except (ValueError, OSError, yaml.YAMLError) as exc:
        logger.error(str(exc))
        return 1
    return 0
