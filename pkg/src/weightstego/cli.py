"""Command-line entry point: ``weightstego <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import analyze, defend, evaluate, mininet
from .container import read_container, save_container
from .embed import Manifest, Payload, build_plan, capacity, embed_payload
from .exceptions import CapacityExceeded, ContainerError, ManifestError, WeightStegoError
from .extract import extract_payload, verify
from .floatcodec import EmbedMethod
from .trigger import MatchCounter, TriggerSpec, observe, trigger_condition

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CAPACITY = 3
EXIT_SHA_MISMATCH = 4
EXIT_PARSE = 5


def _split(values):
    out = []
    for v in values or []:
        out.extend(x for x in v.split(",") if x)
    return out


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def _emit(rows, header, fmt, out=None):
    out = sys.stdout if out is None else out
    if fmt == "json":
        out.write(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _dataset(args) -> mininet.Dataset:
    if args.data:
        X, y = mininet.load_csv_dataset(args.data)
        return mininet.split_dataset(X, y, seed=args.data_seed)
    return mininet.gen_dataset(args.data_seed)


# ---------------------------------------------------------------------------
# commands


def cmd_capacity(args):
    c = read_container(args.model)
    methods = [EmbedMethod.parse(args.method)] if args.method else list(EmbedMethod)
    names = _split(args.tensors) or c.names
    rows = []
    for m in methods:
        for n in names:
            rows.append([m.value, n, c.meta(n).size, capacity(c, m, [n])])
        rows.append([m.value, "<total>", sum(c.meta(n).size for n in names), capacity(c, m, names)])
    _emit(rows, ["method", "tensor", "params", "capacity_bytes"], args.format)
    return EXIT_OK


def cmd_embed(args):
    c = read_container(args.model)
    payload = Payload.from_file(args.payload)
    method = EmbedMethod.parse(args.method)
    tensors = _split(args.tensors) or None
    try:
        plan = build_plan(c, method, payload.length, tensors)
    except CapacityExceeded as e:
        print(f"capacity exceeded: available {e.available} bytes, required {e.required} bytes", file=sys.stderr)
        return EXIT_CAPACITY
    out, manifest = embed_payload(c, payload, plan)
    save_container(out, args.out)
    manifest.save(args.manifest)
    rate = analyze.embedding_rate(payload.length, c.file_size)
    print(f"embedded {payload.length} bytes with {method.value} into {plan.param_count} parameters "
          f"(embedding rate {rate:.4%}); sha256 {payload.sha256}")
    return EXIT_OK


def cmd_extract(args):
    c = read_container(args.model)
    manifest = Manifest.load(args.manifest)
    payload = extract_payload(c, manifest)
    Path(args.out).write_bytes(payload.data)
    if verify(payload, manifest.payload_sha256):
        print(f"sha256 match: {payload.sha256}")
        return EXIT_OK
    print(f"sha256 MISMATCH: expected {manifest.payload_sha256}, got {payload.sha256}", file=sys.stderr)
    return EXIT_SHA_MISMATCH


def cmd_entropy(args):
    entries = []
    for path in args.models:
        ent = analyze.container_entropy(read_container(path), per_tensor=args.per_tensor)
        if args.per_tensor:
            entries.extend((f"{path}:{k}", v) for k, v in ent.items())
        else:
            entries.append((path, ent["<file>"]))
    if len(entries) < 2 or args.baseline is None and len(args.models) < 2:
        _emit([[label, f"{h:.6f}", "", ""] for label, h in entries],
              ["label", "raw_entropy", "normalized", "scaled"], args.format)
        return EXIT_OK
    baseline = args.baseline or args.models[0]
    if args.per_tensor and baseline in args.models:
        baseline = f"{baseline}:<file>"
    reports = analyze.entropy_delta_report(entries, baseline, args.gain)
    print(f"# logistic gain {args.gain}", file=sys.stderr)
    rows = [[r.label, f"{r.raw_entropy:.6f}", f"{r.normalized:.6f}", f"{r.scaled:.6f}"] for r in reports]
    _emit(rows, ["label", "raw_entropy", "normalized", "scaled"], args.format)
    return EXIT_OK


def cmd_detect(args):
    c = read_container(args.model)
    payload = Payload.from_file(args.payload)
    report = defend.detect_overlap(c, payload, EmbedMethod.parse(args.method), args.q, _split(args.tensors) or None)
    rows = [[r.tensor, r.candidate_stream_len, r.matched_qgrams, r.total_qgrams, f"{r.overlap_rate:.6f}"]
            for r in report.rows]
    if args.format == "json":
        print(json.dumps({
            "argmax": report.argmax,
            "q": report.q,
            "method": report.method.value,
            "rows": [dict(zip(["tensor", "candidate_stream_len", "matched_qgrams", "total_qgrams", "overlap_rate"], r))
                     for r in rows],
        }, indent=2))
    else:
        _emit(rows, ["tensor", "candidate_stream_len", "matched_qgrams", "total_qgrams", "overlap_rate"], "csv")
        print(f"# argmax: {report.argmax} ({report.rate(report.argmax):.4f})")
    return EXIT_OK


def cmd_sanitize(args):
    c = read_container(args.model)
    out = defend.sanitize(c, _split(args.tensors) or None, args.mode, args.seed)
    save_container(out, args.out)
    print(f"sanitized {len(_split(args.tensors) or c.names)} tensor(s) with mode {args.mode}")
    return EXIT_OK


def cmd_evaluate(args):
    with open(args.cells, newline="") as f:
        cells = evaluate.read_cells_csv(f)
    penalties = dict(evaluate.DEFAULT_PENALTIES)
    if args.penalty is not None:
        penalties[evaluate.method_key(args.method)] = args.penalty
    params = evaluate.EvalParams(args.alpha, args.epsilon, penalties)
    avg_m, avg_q = evaluate.quality_table(cells, args.method, params)
    if args.format == "json":
        print(json.dumps({"method": args.method, "avg_q_m": avg_m, "avg_q": avg_q}, indent=2))
    else:
        evaluate.write_table_csv(avg_m, avg_q, sys.stdout, args.method)
    return EXIT_OK


def cmd_train(args):
    ds = _dataset(args)
    arch = _ints(args.arch) if args.arch else [ds.n_features, 256, 256, ds.n_classes]
    net = mininet.train(ds, arch, args.epochs, args.lr, args.momentum, args.seed, args.batch_size)
    save_container(net.to_container(), args.out)
    print(f"trained {arch} for {args.epochs} epoch(s): {net.n_parameters_} parameters, "
          f"test accuracy {net.base_accuracy_:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    c = read_container(args.model)
    ds = _dataset(args)
    layers = _split(args.layers)
    if args.grid:
        grid = _ints(args.grid)
    else:
        width = min(mininet.layer_width(c, layer) for layer in layers)
        grid = sorted({int(round(f * width)) for f in np.linspace(0, 1, 9)})
    points = mininet.sweep(c, layers, grid, args.method, ds.X_test, ds.y_test, seed=args.seed)
    if args.out:
        with open(args.out, "w", newline="") as f:
            mininet.write_sweep_csv(points, f)
    if args.format == "json":
        print(json.dumps([{"layer": p.layer, "k": p.neurons_replaced, "method": p.method.value,
                           "accuracy": p.accuracy} for p in points], indent=2))
    else:
        mininet.write_sweep_csv(points, sys.stdout)
    return EXIT_OK


def cmd_retrain(args):
    c = read_container(args.model)
    ds = _dataset(args)
    frozen = _split(args.freeze)
    before = mininet.accuracy(c, ds.X_test, ds.y_test)
    out, acc = mininet.freeze_retrain(c, frozen, ds, args.epochs, args.lr, args.momentum, args.seed)
    save_container(out, args.out)
    print(f"accuracy before {before:.4f}, after {acc:.4f} (frozen: {', '.join(frozen) or 'none'})")
    if args.manifest:
        m = Manifest.load(args.manifest)
        if not verify(extract_payload(out, m), m.payload_sha256):
            print("payload sha256 changed during retraining", file=sys.stderr)
            return EXIT_SHA_MISMATCH
        print("payload sha256 unchanged")
    return EXIT_OK


def _read_vectors(path):
    with open(path, newline="") as f:
        return [np.asarray([float(x) for x in row], dtype=np.float64) for row in csv.reader(f) if row]


def cmd_trigger_sim(args):
    spec = TriggerSpec(args.target, args.delta, args.bound)
    vectors = _read_vectors(args.vectors)
    if args.model:
        net = mininet.MiniNet.from_container(read_container(args.model))
        vectors = list(net.hidden_activations(np.asarray(vectors, dtype=np.float32)))
    counter = MatchCounter()
    log = []
    activated_at = None
    for step, v in enumerate(vectors):
        matched = trigger_condition(v, spec)
        counter, activated = observe(counter, matched, spec)
        log.append([step, int(matched), counter.count, int(activated)])
        if activated and activated_at is None:
            activated_at = step
            if args.stop_on_activation:
                break
    _emit(log, ["step", "match", "c", "activated"], args.format)
    if activated_at is None:
        print("# not activated", file=sys.stderr)
        return EXIT_OK
    print(f"# activated at step {activated_at}", file=sys.stderr)
    if args.carrier and args.manifest:
        m = Manifest.load(args.manifest)
        p = extract_payload(read_container(args.carrier), m)
        ok = verify(p, m.payload_sha256)
        print(f"# extraction {'verified' if ok else 'FAILED integrity check'}: {p.sha256}", file=sys.stderr)
        if args.extract_to:
            Path(args.extract_to).write_bytes(p.data)
        return EXIT_OK if ok else EXIT_SHA_MISMATCH
    return EXIT_OK


def cmd_demo(args):
    from .demo import build_trigger_demo, steps_to_activation

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ds = mininet.gen_dataset(args.data_seed)
    net = mininet.train(ds, seed=args.seed)
    c = net.to_container()
    save_container(c, outdir / "clean.st")
    print(f"[train] base accuracy {net.base_accuracy_:.4f}")

    payload = Payload(np.random.default_rng(args.payload_seed).bytes(args.payload_size))
    plan = build_plan(c, EmbedMethod.HALF, payload.length, ["fc1.weight"])
    stego, manifest = embed_payload(c, payload, plan)
    save_container(stego, outdir / "stego.st")
    manifest.save(outdir / "manifest.json")
    ok = verify(extract_payload(stego, manifest), manifest.payload_sha256)
    print(f"[embed] half, {payload.length} bytes into fc1.weight, accuracy "
          f"{mininet.accuracy(stego, ds.X_test, ds.y_test):.4f}, round trip {'ok' if ok else 'FAILED'}")

    grid = list(range(0, 257, 32))
    points = mininet.sweep(c, ["fc1", "fc0"], grid, EmbedMethod.FAST, ds.X_test, ds.y_test, seed=args.payload_seed)
    with open(outdir / "sweep_fast.csv", "w", newline="") as f:
        mininet.write_sweep_csv(points, f)
    print("[sweep] fast: " + "; ".join(
        f"{layer} " + " ".join(f"{p.accuracy:.3f}" for p in points if p.layer == layer) for layer in ("fc1", "fc0")))

    heavy_plan = mininet.neuron_plan(c, "fc0", mininet.layer_width(c, "fc0"), EmbedMethod.FAST)
    heavy_payload = np.random.default_rng(args.payload_seed).bytes(heavy_plan.capacity)
    heavy, heavy_manifest = embed_payload(c, Payload(heavy_payload), heavy_plan)
    lost = mininet.accuracy(heavy, ds.X_test, ds.y_test)
    restored, acc = mininet.freeze_retrain(heavy, "fc0", ds, seed=args.seed)
    intact = verify(extract_payload(restored, heavy_manifest), heavy_manifest.payload_sha256)
    print(f"[retrain] fast on fc0: {lost:.4f} -> {acc:.4f} after one frozen epoch, payload "
          f"{'intact' if intact else 'CHANGED'}")

    demo = build_trigger_demo(args.data_seed, args.seed)
    near = steps_to_activation(demo, demo.near_samples(20, seed=args.payload_seed))
    off = ds.X_test[ds.y_test != demo.target_class][:1000]
    off_steps = steps_to_activation(demo, off)
    print(f"[trigger] target {demo.spec.target_hex}; near-centroid activation after {near} observation(s); "
          f"off-class {'never activated' if off_steps is None else f'activated at {off_steps}'}")
    return EXIT_OK if ok and intact else EXIT_SHA_MISMATCH


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weightstego", description="Hide, recover, score and detect payloads in F32 model weights.")
    sub = p.add_subparsers(dest="command", required=True)
    methods = [m.value for m in EmbedMethod] + ["msb"]

    def fmt(sp):
        sp.add_argument("--format", choices=["csv", "json"], default="csv")

    def data(sp):
        sp.add_argument("--data", help="CSV dataset (features..., label); default: synthetic blobs")
        sp.add_argument("--data-seed", type=int, default=0, help="seed for synthetic data or the CSV split (default 0)")

    sp = sub.add_parser("capacity", help="payload bytes each tensor can carry")
    sp.add_argument("--model", required=True)
    sp.add_argument("--method", choices=methods)
    sp.add_argument("--tensors", action="append")
    fmt(sp)
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("embed", help="embed a payload and write a manifest")
    sp.add_argument("--model", required=True)
    sp.add_argument("--payload", required=True)
    sp.add_argument("--method", choices=methods, default="half")
    sp.add_argument("--tensors", action="append", help="fill order, comma separated or repeated")
    sp.add_argument("--out", required=True)
    sp.add_argument("--manifest", required=True)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("extract", help="recover a payload using its manifest")
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("entropy", help="byte entropy of model files")
    sp.add_argument("models", nargs="+")
    sp.add_argument("--baseline", help="label of the clean model (default: first file)")
    sp.add_argument("--gain", type=float, default=1.0, help="logistic gain (default 1.0)")
    sp.add_argument("--per-tensor", action="store_true")
    fmt(sp)
    sp.set_defaults(func=cmd_entropy)

    sp = sub.add_parser("detect", help="white-box overlap detection of a known payload")
    sp.add_argument("--model", required=True)
    sp.add_argument("--payload", required=True)
    sp.add_argument("--method", choices=methods, default="half")
    sp.add_argument("--q", type=int, default=16)
    sp.add_argument("--tensors", action="append")
    fmt(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("sanitize", help="overwrite the two low bytes of every parameter")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=defend.SANITIZE_MODES, default="randomize")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tensors", action="append")
    sp.set_defaults(func=cmd_sanitize)

    sp = sub.add_parser("evaluate", help="embedding quality table from a cells CSV")
    sp.add_argument("--cells", required=True)
    sp.add_argument("--method", default="half")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--penalty", type=float)
    fmt(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("train", help="train the mini-net and save it as a container")
    sp.add_argument("--out", required=True)
    sp.add_argument("--arch", help="comma separated layer widths (default in,256,256,classes)")
    sp.add_argument("--epochs", type=int, default=5)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--seed", type=int, default=7)
    data(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", help="accuracy vs. number of replaced neurons")
    sp.add_argument("--model", required=True)
    sp.add_argument("--layers", action="append", required=True)
    sp.add_argument("--grid", help="comma separated neuron counts (default: 9 evenly spaced fractions)")
    sp.add_argument("--method", choices=methods, default="fast")
    sp.add_argument("--seed", type=int, default=42, help="payload seed (default 42)")
    sp.add_argument("--out")
    data(sp)
    fmt(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("retrain", help="retrain with payload layers frozen")
    sp.add_argument("--model", required=True)
    sp.add_argument("--freeze", action="append", default=[])
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int, default=1)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--manifest", help="check the payload survives retraining")
    data(sp)
    sp.set_defaults(func=cmd_retrain)

    sp = sub.add_parser("trigger-sim", help="run feature vectors through the match counter")
    sp.add_argument("--target", required=True, help="target vector as hex")
    sp.add_argument("--vectors", required=True, help="CSV, one vector (or sample, with --model) per line")
    sp.add_argument("--model", help="mini-net container; rows of --vectors are inputs, penultimate outputs are used")
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--bound", type=int, default=5)
    sp.add_argument("--stop-on-activation", action="store_true")
    sp.add_argument("--carrier", help="container to extract from on activation")
    sp.add_argument("--manifest")
    sp.add_argument("--extract-to")
    fmt(sp)
    sp.set_defaults(func=cmd_trigger_sim)

    sp = sub.add_parser("demo", help="train, embed, sweep, retrain and trigger in one run")
    sp.add_argument("--outdir", default="demo_out")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--data-seed", type=int, default=0)
    sp.add_argument("--payload-seed", type=int, default=42)
    sp.add_argument("--payload-size", type=int, default=4096)
    sp.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except CapacityExceeded as e:
        print(f"capacity exceeded: available {e.available} bytes, required {e.required} bytes", file=sys.stderr)
        return EXIT_CAPACITY
    except (ContainerError, ManifestError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (WeightStegoError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
