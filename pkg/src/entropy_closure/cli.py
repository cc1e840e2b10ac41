"""Command line interface: ``entropy-closure {sample,train,closure,solve,bench}``.

Every option can also come from a ``key=value`` file given with ``--config``
(keys are the long option names with dashes or underscores). Flags on the
command line win over the file, the file wins over built-in defaults. Runs
that produce files write the fully resolved configuration next to them.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(non-convergence, realizability), 3 input/output error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import errors
from .icnn import IcnnModel, LossWeights, infer_normalized, load_model, save_model
from .metrics import POPULATIONS, accuracy, benchmark, format_accuracy, format_timings
from .newton import NewtonConfig, newton_batch
from .quadrature import MomentBasis, build_gauss_legendre, build_projected_sphere, rule_from_label
from .realizability import check
from .sampling import (
    SamplerConfig, dataset_basis, margin_histogram, read_dataset, sample_uniform_alpha,
    sample_uniform_moments, write_dataset,
)
from .solver import CASES, case_defaults, run_case, run_compare, write_diagnostics, write_fields
from .training import TrainConfig, TrainingDivergedError, default_layout, train

log = logging.getLogger("entropy_closure")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text):
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}")


def _ints(text):
    return [int(v) for v in _floats(text)]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _layout(text):
    try:
        w, d = str(text).lower().split("x")
        return int(w), int(d)
    except ValueError:
        raise argparse.ArgumentTypeError(f"layout must look like WIDTHxDEPTH, got {text!r}")


# option table per command: name -> (type, default, help)
SPECS = {
    "sample": {
        "alg": (str, "uniform-u", "uniform-u (Newton labelled) or uniform-alpha"),
        "order": (int, 1, "moment order N"),
        "dim": (int, 1, "velocity dimension (1 or 2)"),
        "count": (int, 1000, "number of samples"),
        "delta": (float, 0.01, "minimum distance to the realizable boundary"),
        "tau": (float, 1e-8, "Newton tolerance for labels"),
        "box": (_floats, [-50.0, 50.0], "alpha box bounds (uniform-alpha)"),
        "seed": (int, 0, "random seed"),
        "n_q": (int, 28, "1D Gauss-Legendre nodes"),
        "n_mu": (int, 10, "2D polar nodes"),
        "n_phi": (int, 20, "2D azimuthal nodes"),
        "out": (str, "dataset.csv", "output CSV"),
    },
    "train": {
        "data": (str, None, "training dataset CSV"),
        "test": (str, None, "optional held-out dataset CSV for the final metrics"),
        "layout": (_layout, None, "WIDTHxDEPTH; default depends on the basis"),
        "optimizer": (str, "lbfgs", "lbfgs (full batch) or adam (minibatch)"),
        "epochs": (int, 5000, "L-BFGS iterations or Adam epochs"),
        "batch_size": (int, 32, "Adam minibatch size"),
        "lr": (float, 1e-3, "initial Adam learning rate"),
        "schedule": (str, "plateau", "Adam learning-rate schedule: plateau or cosine"),
        "patience": (int, 1000, "Adam epochs without improvement before halving the rate"),
        "val_fraction": (float, 0.1, "validation share of the data"),
        "alpha_mode": (str, "full", "compare full alpha or reduced alpha_r"),
        "weights": (_floats, [1.0, 1.0, 1.0], "loss weights 'h,alpha,u'"),
        "seed": (int, 0, "initialization and shuffling seed"),
        "out": (str, "model.json", "output model file"),
    },
    "closure": {
        "backend": (str, "newton", "newton, icnn or both"),
        "u": (str, None, "moment vector(s), components by ',' and vectors by ';'"),
        "input": (str, None, "CSV file with one moment vector per row"),
        "model": (str, None, "model file (icnn, both)"),
        "order": (int, None, "moment order (taken from the model if given)"),
        "dim": (int, 1, "velocity dimension"),
        "n_q": (int, 28, "1D Gauss-Legendre nodes"),
        "n_mu": (int, 10, "2D polar nodes"),
        "n_phi": (int, 20, "2D azimuthal nodes"),
        "tau": (float, 1e-10, "Newton tolerance"),
        "out": (str, None, "write results as CSV instead of stdout"),
    },
    "solve": {
        "case": (str, "inflow-1d-m1", "one of " + ", ".join(CASES)),
        "backend": (str, "newton", "newton or icnn"),
        "compare": (_bool, False, "run Newton and ICNN side by side"),
        "model": (str, None, "model file (icnn, compare)"),
        "T": (float, None, "final time"),
        "n_x": (int, None, "cells per axis"),
        "n_v": (int, None, "velocity quadrature size"),
        "cfl": (float, None, "CFL number"),
        "sigma": (float, None, "scattering coefficient"),
        "reconstruct": (_bool, None, "replace u by <m f_u> before each step"),
        "newton_tol": (float, None, "Newton tolerance (normalized moments)"),
        "steps": (int, None, "stop after this many steps"),
        "out": (str, "run", "output directory"),
    },
    "bench": {
        "model": (str, None, "model file; without it only Newton is timed"),
        "order": (int, None, "moment order (taken from the model if given)"),
        "dim": (int, 1, "velocity dimension"),
        "n_q": (int, 28, "1D Gauss-Legendre nodes"),
        "n_mu": (int, 10, "2D polar nodes"),
        "n_phi": (int, 20, "2D azimuthal nodes"),
        "batches": (_ints, [1000], "batch sizes, comma separated"),
        "repeats": (int, 20, "timed repetitions"),
        "populations": (str, ",".join(POPULATIONS), "populations, comma separated"),
        "tau": (float, 1e-8, "Newton tolerance"),
        "seed": (int, 0, "population seed"),
        "out": (str, None, "write the timing table as CSV"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="entropy-closure", description="Minimal entropy closure toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, spec in SPECS.items():
        sp = sub.add_parser(cmd, help=COMMANDS[cmd].__doc__.splitlines()[0])
        sp.add_argument("--config", help="key=value configuration file")
        for name, (typ, default, helptext) in spec.items():
            flag = "--" + name.replace("_", "-")
            extra = {"nargs": 2, "type": float, "metavar": ("LO", "HI")} if name == "box" \
                else {"type": typ}
            sp.add_argument(flag, dest=name, default=None,
                            help=f"{helptext} (default: {default})", **extra)
    return p


def read_config(path) -> dict:
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{k}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(cmd: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags into one dict."""
    spec = SPECS[cmd]
    cfg = {k: v[1] for k, v in spec.items()}
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in spec:
                raise UsageError(f"unknown configuration key {key!r} for '{cmd}'")
            try:
                cfg[key] = spec[key][0](raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad value for {key!r}: {exc}") from None
    for key in spec:
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    return cfg


def write_config(cfg: dict, path) -> None:
    lines = []
    for k, v in cfg.items():
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = "x".join(map(str, v)) if k == "layout" else ",".join(map(repr, v))
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def _basis(order, dim, cfg) -> MomentBasis:
    if order is None:
        raise UsageError("--order is required without a model")
    if dim == 1:
        return MomentBasis(order, build_gauss_legendre(cfg["n_q"]))
    if dim == 2:
        return MomentBasis(order, build_projected_sphere(cfg["n_mu"], cfg["n_phi"]))
    raise UsageError(f"dimension must be 1 or 2, got {dim}")


def _model_basis(model: IcnnModel, cfg: dict) -> MomentBasis:
    if "quadrature" in model.meta and "order" in model.meta:
        return MomentBasis(int(model.meta["order"]), rule_from_label(model.meta["quadrature"]))
    return _basis(cfg.get("order"), cfg.get("dim", 1), cfg)


# -- commands ----------------------------------------------------------------

def cmd_sample(cfg: dict) -> int:
    """Generate a labelled dataset by uniform moment or uniform multiplier sampling."""
    if cfg["alg"] not in ("uniform-u", "uniform-alpha"):
        raise UsageError(f"--alg must be uniform-u or uniform-alpha, got {cfg['alg']!r}")
    if len(cfg["box"]) != 2:
        raise UsageError("--box takes two numbers LO HI")
    basis = _basis(cfg["order"], cfg["dim"], cfg)
    try:
        sc = SamplerConfig(order=cfg["order"], dimension=cfg["dim"], count=cfg["count"],
                           delta=cfg["delta"], tau=cfg["tau"], box=tuple(cfg["box"]),
                           seed=cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    ds = sample_uniform_moments(sc, basis) if cfg["alg"] == "uniform-u" \
        else sample_uniform_alpha(sc, basis)
    write_dataset(ds, cfg["out"])
    write_config(cfg, str(cfg["out"]) + ".config")
    counts, edges = margin_histogram(ds, basis)
    print(f"wrote {len(ds)} samples to {cfg['out']} in {time.perf_counter() - t0:.2f} s")
    if "acceptance" in ds.meta:
        print(f"acceptance rate {ds.meta['acceptance']:.4f}")
    print("margin histogram:")
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        print(f"  [{lo:.2f}, {hi:.2f})  {c}")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    """Train an input-convex network on a dataset and report validation metrics."""
    if not cfg["data"]:
        raise UsageError("--data is required")
    data = read_dataset(cfg["data"])
    basis = dataset_basis(data)
    width, depth = cfg["layout"] or default_layout(basis.dimension, basis.order)
    cfg["layout"] = (width, depth)
    if len(cfg["weights"]) != 3:
        raise UsageError("--weights takes three numbers 'h,alpha,u'")
    try:
        tc = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
                         patience=cfg["patience"], val_fraction=cfg["val_fraction"],
                         alpha_mode=cfg["alpha_mode"], weights=LossWeights(*cfg["weights"]),
                         seed=cfg["seed"], optimizer=cfg["optimizer"],
                         schedule=cfg["schedule"])
        model = IcnnModel(basis.reduced_size, width, depth, seed=cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_set, val_set = data.split(tc.val_fraction, seed=tc.seed) if tc.val_fraction else (data, None)
    t0 = time.perf_counter()
    try:
        best, hist = train(model, train_set, basis, tc, validation=val_set)
    except TrainingDivergedError as exc:
        if exc.model is not None:
            save_model(exc.model, cfg["out"])
            print(f"training diverged; last good model saved to {cfg['out']}", file=sys.stderr)
        raise
    best.meta["train_seconds"] = time.perf_counter() - t0
    best.meta["dataset"] = str(cfg["data"])
    save_model(best, cfg["out"])
    write_config(cfg, str(cfg["out"]) + ".config")
    with open(str(cfg["out"]) + ".history.csv", "w", newline="") as fh:
        rows = list(hist.as_rows())
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"trained {width}x{depth} model in {best.meta['train_seconds']:.1f} s, "
          f"best epoch {hist.best_epoch}; saved {cfg['out']}")
    held = read_dataset(cfg["test"]) if cfg["test"] else (val_set if val_set is not None else data)
    print("held-out metrics:" if cfg["test"] else "validation metrics:")
    print(format_accuracy(accuracy(best, held, basis)))
    return EXIT_OK


def _parse_moments(cfg, size) -> np.ndarray:
    rows = []
    if cfg["u"]:
        rows += [_floats(part) for part in cfg["u"].split(";") if part.strip()]
    if cfg["input"]:
        for line in Path(cfg["input"]).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#") or line[0].isalpha():
                continue
            rows.append(_floats(line))
    if not rows:
        raise UsageError("give moments with --u or --input")
    for r in rows:
        if len(r) != size:
            raise UsageError(f"moment {r} has {len(r)} entries, the basis has {size}")
    return np.array(rows)


def cmd_closure(cfg: dict) -> int:
    """Evaluate closures (alpha, h, reconstructed u) for given moment vectors."""
    backend = cfg["backend"]
    if backend not in ("newton", "icnn", "both"):
        raise UsageError("--backend must be newton, icnn or both")
    model = None
    if backend != "newton":
        if not cfg["model"]:
            raise UsageError(f"--model is required for backend {backend}")
        model = load_model(cfg["model"])
        basis = _model_basis(model, cfg)
    else:
        basis = _basis(cfg["order"], cfg["dim"], cfg)
    if model is not None and model.input_dim != basis.reduced_size:
        raise errors.ModelFormatError("model does not match the requested basis")
    U = _parse_moments(cfg, basis.size)
    status = EXIT_OK
    for k, u in enumerate(U):
        if not u[0] > 0:
            print(f"moment {k}: u0={u[0]} is not positive; not realizable", file=sys.stderr)
            status = EXIT_NUMERIC
            continue
        rep = check(u[1:] / u[0], basis)
        if not rep.realizable:
            print(f"moment {k}: {u.tolist()} is not realizable "
                  f"(margin {rep.margin:.4g}, violated {rep.binding_constraint})", file=sys.stderr)
            status = EXIT_NUMERIC
    if status:
        return status
    n = basis.size
    cols = [f"u{i}" for i in range(n)]
    table = [U]
    u0 = U[:, :1]
    if backend in ("newton", "both"):
        res = newton_batch(U, basis, NewtonConfig(tolerance=cfg["tau"]))
        if not res.converged.all():
            bad = int(np.flatnonzero(~res.converged)[0])
            print(f"Newton failed ({res.failure[bad]}) for moment {bad}", file=sys.stderr)
            return EXIT_NUMERIC
        cols += [f"newton_alpha{i}" for i in range(n)] + ["newton_h"]
        table += [res.alpha, res.h[:, None]]
    if model is not None:
        pred = infer_normalized(model, U[:, 1:] / u0, basis)
        alpha = pred.alpha.copy()
        alpha[:, 0] += np.log(u0[:, 0])
        cols += [f"icnn_alpha{i}" for i in range(n)] + ["icnn_h_normalized"] \
            + [f"icnn_u{i}" for i in range(n)]
        table += [alpha, pred.h[:, None], pred.u * u0]
        if backend == "both":
            cols += [f"delta_alpha{i}" for i in range(n)]
            table.append(alpha - res.alpha)
    data = np.concatenate(table, axis=1)
    lines = [",".join(cols)] + [",".join(repr(float(v)) for v in row) for row in data]
    if cfg["out"]:
        Path(cfg["out"]).write_text("\n".join(lines) + "\n")
        print(f"wrote {len(U)} closures to {cfg['out']}")
    else:
        print("\n".join(lines))
    return EXIT_OK


def cmd_solve(cfg: dict) -> int:
    """Run a kinetic test case with the Newton or neural closure."""
    if cfg["case"] not in CASES:
        raise UsageError(f"--case must be one of {', '.join(CASES)}")
    if cfg["backend"] not in ("newton", "icnn"):
        raise UsageError("--backend must be newton or icnn")
    overrides = {k: cfg[k] for k in ("T", "n_x", "n_v", "cfl", "sigma", "reconstruct", "newton_tol")
                 if cfg[k] is not None}
    try:
        case = case_defaults(cfg["case"], **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = None
    if cfg["backend"] == "icnn" or cfg["compare"]:
        if not cfg["model"]:
            raise UsageError("--model is required for the icnn backend and --compare")
        model = load_model(cfg["model"], case.basis())
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg["compare"]:
        res = run_compare(case, model, steps=cfg["steps"])
    else:
        res = run_case(case, cfg["backend"], model, steps=cfg["steps"])
    elapsed = time.perf_counter() - t0
    write_diagnostics(res.diagnostics, out / "diagnostics.csv")
    mesh = case.mesh()
    extra = None
    if res.error_field is not None:
        extra = {"rel_err_u0": res.error_field}
        write_fields(res.compare.final, mesh, out / "fields_icnn.csv")
    write_fields(res.final, mesh, out / "fields.csv", extra)
    write_config({**cfg, **{f"case_{k}": v for k, v in vars(case).items()}}, out / "config.txt")
    print(f"{cfg['case']}: {res.n_steps} steps of dt={res.dt:.6g} to t={res.final.t:.6g} "
          f"in {elapsed:.1f} s; outputs in {out}")
    if cfg["compare"]:
        mre = max(d["mean_rel_err_u0"] for d in res.diagnostics)
        print(f"max over steps of the mean relative error in u0: {mre:.4%}")
    return EXIT_OK


def cmd_bench(cfg: dict) -> int:
    """Time batched Newton and network closures on several moment populations."""
    model = load_model(cfg["model"]) if cfg["model"] else None
    basis = _model_basis(model, cfg) if model is not None else _basis(cfg["order"], cfg["dim"], cfg)
    pops = [p.strip() for p in cfg["populations"].split(",") if p.strip()]
    bad = [p for p in pops if p not in POPULATIONS]
    if bad:
        raise UsageError(f"unknown populations {bad}; choose from {', '.join(POPULATIONS)}")
    if cfg["repeats"] < 2:
        raise UsageError("--repeats must be at least 2")
    rows = benchmark(basis, model, cfg["batches"], cfg["repeats"], pops,
                     NewtonConfig(tolerance=cfg["tau"]), cfg["seed"])
    print(format_timings(rows))
    if cfg["out"]:
        with open(cfg["out"], "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].row()))
            w.writeheader()
            for r in rows:
                w.writerow(r.row())
        write_config(cfg, str(cfg["out"]) + ".config")
    return EXIT_OK


COMMANDS = {"sample": cmd_sample, "train": cmd_train, "closure": cmd_closure,
            "solve": cmd_solve, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (errors.DatasetFormatError, errors.ModelFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except errors.ClosureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
