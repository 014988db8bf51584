"""Command-line front end.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, fields

import numpy as np

from . import datasets, pqc
from .datasets import atomic_write_text
from .evaluation import compile_report, decoder_circuit, evaluate, uniform_baseline
from .experiments import Cell, grid_cells, sweep
from .models import TrainConfig, load_checkpoint, save_checkpoint, train

# keys accepted in a --config JSON file for `train`
CONFIG_KEYS = {
    "model", "latent", "feature_map", "ansatz_reps", "beta", "schedule", "lr_encoder", "lr_decoder",
    "batch", "patience", "max_epochs", "seed", "grad_method", "eval_z_samples",
}
DEFAULTS = {
    "model": "qevae", "latent": 2, "feature_map": "ZZ", "ansatz_reps": 2, "beta": 1.0, "schedule": "fixed",
    "lr_encoder": 0.005, "lr_decoder": 0.005, "batch": 32, "patience": 6,
    "max_epochs": None, "seed": 0, "grad_method": "adjoint", "eval_z_samples": 1000,
}


class UsageError(Exception):
    pass


def _report_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def cmd_gen_data(args) -> int:
    try:
        ds = datasets.generate(args.family, args.qubits, args.seed, shots=args.shots,
                               layers=args.layers, kappa=args.kappa, hbar_s=args.hbar,
                               kicks=args.kicks)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    datasets.save(ds, args.out)
    p = ds.exact_dist.probs
    print(f"wrote {len(ds.samples)} samples ({len(ds.train_idx)} train / "
          f"{len(ds.val_idx)} val) to {args.out}")
    print(f"exact entropy: {_entropy_bits(p):.6f} bits")
    print(f"uniform-baseline fidelity: {uniform_baseline(p):.6f}")
    return 0


def _merge_train_options(args) -> dict:
    opts = dict(DEFAULTS)
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        unknown = sorted(set(cfg) - CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        opts.update(cfg)
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if opts["model"] == "qcbm":
        requested = args.latent if args.latent is not None else cfg.get("latent", 0)
        if requested != 0:
            raise UsageError("a QCBM has latent size 0")
        opts["latent"] = 0
    return opts


def _build_config(opts) -> TrainConfig:
    try:
        return TrainConfig(
            lr_encoder=opts["lr_encoder"], lr_decoder=opts["lr_decoder"], batch=opts["batch"],
            beta=opts["beta"], beta_schedule=opts["schedule"], patience=opts["patience"],
            max_epochs=opts["max_epochs"], seed=opts["seed"],
            grad_method=opts["grad_method"], eval_z_samples=opts["eval_z_samples"])
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args) -> int:
    opts = _merge_train_options(args)
    config = _build_config(opts)
    ds = datasets.load(args.data)
    try:
        cell = Cell(model=opts["model"], latent=opts["latent"], feature_map=opts["feature_map"],
                    ansatz_reps=opts["ansatz_reps"], seed=opts["seed"])
        model = cell.build(ds.n_qubits)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model, history = train(model, ds, config)
    save_checkpoint(args.out, model, config, history)
    if args.history:
        atomic_write_text(args.history, history.to_csv())
    last = history.fidelity[history.best_epoch]
    print(f"stopped at epoch {history.stop_epoch}, best epoch {history.best_epoch}, "
          f"val loss {history.val_loss[history.best_epoch]:.6f}"
          + ("" if last is None else f", fidelity {last:.6f}"))
    return 0


def cmd_eval(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    if args.z_samples < 1 and model.latent_dim > 0:
        raise UsageError("--z-samples must be >= 1 for a model with a latent space")
    ds = datasets.load(args.data)
    if ds.exact_dist is None:
        print("dataset has no exact distribution to compare against", file=sys.stderr)
        return 1
    rep = evaluate(model, ds.exact_dist, max(args.z_samples, 1), args.seed,
                   dataset_id=f"{ds.family}-{ds.n_qubits}q-seed{ds.seed}")
    after = None
    if model.kind == "qevae":
        after = pqc.gate_counts(pqc.concat(*decoder_circuit(model)))
    report = {
        "fidelities": {rep.model_kind: rep.fidelity, "model": rep.fidelity,
                       "uniform": uniform_baseline(ds.exact_dist)},
        "gate_counts_before": None,
        "gate_counts_after": after,
        "n_z_samples": rep.n_latent_samples,
        "seeds": {"eval": args.seed, "dataset": ds.seed},
    }
    atomic_write_text(args.out, _report_json(report))
    print(f"{rep.model_kind} fidelity {rep.fidelity:.6f} "
          f"(uniform {report['fidelities']['uniform']:.6f})")
    return 0


def _split_list(text: str, cast):
    return [cast(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    ds = datasets.load(args.data)
    try:
        base = Cell(model=args.model, latent=0 if args.model == "qcbm" else 2, seed=args.seed,
                    max_epochs=args.max_epochs)
        axes = {
            "latent": _split_list(args.latent, int) if args.model != "qcbm" else [0],
            "feature_map": _split_list(args.feature_map, str),
            "ansatz_reps": _split_list(args.ansatz_reps, int),
            "beta": _split_list(args.beta, float),
            "schedule": _split_list(args.schedule, str),
        }
        cells = grid_cells(base, **axes)
        for c in cells:
            c.config()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    results, best = sweep(ds, cells, jobs=args.jobs, n_z_samples=args.z_samples,
                          eval_seed=args.seed)
    buf = io.StringIO()
    cols = ["latent", "feature_map", "ansatz_reps", "beta", "schedule", "stop_epoch", "best_val_loss",
            "fidelity", "uniform"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in results:
        row = r["row"]
        w.writerow([row["cell"]["latent"], row["cell"]["feature_map"],
                    row["cell"]["ansatz_reps"], repr(row["cell"]["beta"]),
                    row["cell"]["schedule"], row["stop_epoch"], repr(row["best_val_loss"]),
                    repr(row.get("fidelity")), repr(row.get("uniform"))])
    atomic_write_text(args.out, buf.getvalue())
    if args.best_checkpoint:
        save_checkpoint(args.best_checkpoint, best["model"], best["config"], best["history"])
    b = best["row"]
    print(f"{len(results)} cells; best latent={b['cell']['latent']} "
          f"feature_map={b['cell']['feature_map']} beta={b['cell']['beta']} "
          f"schedule={b['cell']['schedule']} fidelity={b.get('fidelity')}")
    return 0


def cmd_compile_report(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    if model.kind != "qevae":
        raise UsageError("compile reports need a quantum decoder (qevae or qcbm checkpoint)")
    original = pqc.build_random_layered_circuit(model.n_qubits, args.layers, args.circuit_seed)
    rep = compile_report(original, model, args.z_samples, args.seed)
    report = {
        "fidelities": {"model": rep["fidelity_model"], "model_at_zero": rep["fidelity_at_zero"],
                       "uniform": rep["fidelity_uniform"]},
        "gate_counts_before": rep["gate_counts_before"],
        "gate_counts_after": rep["gate_counts_after"],
        "gate_counts_ansatz": rep["gate_counts_ansatz"],
        "total_reduction": rep["total_reduction"],
        "cx_reduction": rep["cx_reduction"],
        "n_z_samples": rep["n_z_samples"],
        "seeds": {"eval": args.seed, "circuit": args.circuit_seed},
    }
    atomic_write_text(args.out, _report_json(report))
    print(f"gates {rep['total_gates_before']} -> {rep['total_gates_after']} "
          f"({rep['total_reduction']:.2f}x), CX {rep['cx_reduction']:.2f}x, "
          f"fidelity {rep['fidelity_model']:.6f}")
    return 0


def cmd_export_qasm(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    if model.kind != "qevae":
        raise UsageError("only quantum decoders can be exported")
    z = None
    if args.z:
        z = np.array(_split_list(args.z, float))
        if z.size != model.latent_dim:
            raise UsageError(f"--z needs {model.latent_dim} values")
    circuit = pqc.concat(*decoder_circuit(model, z))
    atomic_write_text(args.out, pqc.to_qasm(circuit))
    print(f"wrote {len(circuit)} gates to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qevae", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample a measurement dataset")
    g.add_argument("--family", required=True, choices=datasets.FAMILIES)
    g.add_argument("--qubits", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--shots", type=int, default=datasets.DEFAULT_SHOTS)
    g.add_argument("--layers", type=int, default=2, help="circuit family depth")
    g.add_argument("--kappa", type=float, default=6.0, help="QKR kick strength")
    g.add_argument("--hbar", type=float, default=1.0, help="QKR effective Planck constant")
    g.add_argument("--kicks", type=int, default=1000)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint JSON")
    t.add_argument("--history", help="per-epoch CSV")
    t.add_argument("--config", help="JSON file of training options (flags win)")
    t.add_argument("--model", choices=("qevae", "qcbm", "cvae"))
    t.add_argument("--latent", type=int)
    t.add_argument("--feature-map", dest="feature_map", choices=("Z", "ZZ", "z", "zz"))
    t.add_argument("--ansatz-reps", dest="ansatz_reps", type=int)
    t.add_argument("--beta", type=float)
    t.add_argument("--schedule", choices=("fixed", "anneal", "step"))
    t.add_argument("--lr-encoder", dest="lr_encoder", type=float)
    t.add_argument("--lr-decoder", dest="lr_decoder", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--max-epochs", dest="max_epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--grad-method", dest="grad_method", choices=("shift", "adjoint"))
    t.add_argument("--eval-z-samples", dest="eval_z_samples", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="fidelity of a checkpoint against a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--z-samples", dest="z_samples", type=int, default=5000)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="grid search, best cell by fidelity")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="summary CSV")
    s.add_argument("--best-checkpoint", dest="best_checkpoint")
    s.add_argument("--model", default="qevae", choices=("qevae", "qcbm", "cvae"))
    s.add_argument("--latent", default="0,2")
    s.add_argument("--feature-map", dest="feature_map", default="Z,ZZ")
    s.add_argument("--ansatz-reps", dest="ansatz_reps", default="2")
    s.add_argument("--beta", default="0.5")
    s.add_argument("--schedule", default="fixed")
    s.add_argument("--max-epochs", dest="max_epochs", type=int)
    s.add_argument("--z-samples", dest="z_samples", type=int, default=5000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compile-report", help="gate counts of a layered circuit vs the decoder")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--layers", type=int, default=20)
    c.add_argument("--circuit-seed", dest="circuit_seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--z-samples", dest="z_samples", type=int, default=5000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_compile_report)

    x = sub.add_parser("export-qasm", help="write the decoder as OpenQASM 2.0")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--z", help="comma-separated latent vector (default zeros)")
    x.set_defaults(func=cmd_export_qasm)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
