"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line in the terminal summary."""

import time
from importlib.resources import files

import numpy as np
import pytest

from weightstego import mininet
from weightstego.container import ModelContainer
from weightstego.defend import detect_overlap, sanitize
from weightstego.embed import EmbedPlan, Payload, Segment, build_plan, capacity, embed_payload
from weightstego.evaluate import quality_table, read_cells_csv
from weightstego.exceptions import CapacityExceeded
from weightstego.extract import extract_payload, verify
from weightstego.floatcodec import EmbedMethod, bits_to_float, embed_bits, embed_into_param
from weightstego.trigger import MatchCounter, TriggerSpec, binarize, normalize_hex, observe

from gradcheck import max_relative_error

FAST, HALF = EmbedMethod.FAST, EmbedMethod.HALF


@pytest.mark.criterion(1, "reference bit patterns")
def test_reference_bit_patterns(criterion):
    cases = [
        (0xBC40B763, b"\xff\xff", HALF, 0xBC40FFFF, "-0.0117797842249"),
        (0xBC40B763, b"\x00\x00", HALF, 0xBC400000, "-0.01171875"),
        (0xBC40B763, b"\xff\xff\xff", EmbedMethod.MSB_RESERVATION, 0xBCFFFFFF, "-0.0312499981374"),
        (0xBC40B763, b"\x00\x00\x00", FAST, 0xBC000000, "-0.0078125"),
        (0x3C40B763, b"\x00\x00\x00", FAST, 0x3C000000, "0.0078125"),
        (0x3C40B763, b"\xff\xff\xff", FAST, 0x3CFFFFFF, "0.0312499981374"),
    ]
    t0 = time.perf_counter()
    got = []
    for carrier, chunk, method, pattern, decimal in cases:
        out = embed_into_param(carrier, chunk, method)
        got.append(out == pattern and f"{round(bits_to_float(out), 13)!r}" == decimal)
    elapsed = time.perf_counter() - t0
    ok = all(got) and elapsed < 1.0
    assert criterion.record(ok, f"{sum(got)}/6 cases bit-exact in {elapsed * 1000:.1f} ms")


@pytest.mark.criterion(2, "round-trip integrity")
def test_round_trip_200(criterion):
    rng = np.random.default_rng(2024)
    methods = list(EmbedMethod)
    failures, at_ceiling = 0, 0
    for case in range(200):
        sizes = rng.integers(1, 400, size=rng.integers(1, 5))
        c = ModelContainer.from_arrays(
            [(f"t{i}", rng.standard_normal(int(n)).astype(np.float32)) for i, n in enumerate(sizes)]
        )
        method = methods[case % 4]
        bpp = method.bytes_per_param
        if case % 2:
            # greedy plan over a shuffled tensor order, payload up to the full capacity
            order = [c.names[i] for i in rng.permutation(len(c.names))]
            cap = capacity(c, method, order)
            n = cap if case % 10 == 1 else int(rng.integers(1, cap + 1))
            plan = build_plan(c, method, n, order)
        else:
            # hand-made plan: one random window per tensor, random order
            segs = []
            for i in rng.permutation(len(c.names)):
                name = c.names[i]
                size = c.meta(name).size
                start = int(rng.integers(0, size))
                segs.append(Segment(name, start, int(rng.integers(1, size - start + 1))))
            plan = EmbedPlan(method, tuple(segs))
            n = int(rng.integers(max(1, plan.capacity - bpp + 1), plan.capacity + 1)) if case % 4 == 0 else \
                int(rng.integers(1, plan.capacity + 1))
        at_ceiling += n == plan.capacity
        payload = Payload(rng.bytes(n))
        stego, manifest = embed_payload(c, payload, plan)
        got = extract_payload(stego, manifest)
        if not (got.data == payload.data and verify(got, manifest.payload_sha256)):
            failures += 1
    ok = failures == 0 and at_ceiling > 0
    assert criterion.record(ok, f"{200 - failures}/200 SHA-equal, {at_ceiling} cases filled to capacity")


@pytest.mark.criterion(3, "perturbation bound")
def test_perturbation_bound(criterion):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(1_000_000).astype(np.float32)
    bits = x.view(np.uint32)
    normal = np.abs(x) >= np.finfo(np.float32).tiny
    assert normal.all()
    half = embed_bits(bits, rng.bytes(2 * x.size), HALF).view(np.float32)
    rel = np.abs(half.astype(np.float64) - x) / np.abs(x.astype(np.float64))
    half_bad = int((rel > 2.0 ** -7).sum())
    fast = embed_bits(bits, rng.bytes(3 * x.size), FAST).view(np.float32)
    mag = np.abs(fast)
    fast_bad = int(((mag < 0.0078125) | (mag >= 0.03125) | (np.signbit(fast) != np.signbit(x))).sum())
    ok = half_bad == 0 and fast_bad == 0
    assert criterion.record(
        ok, f"HALF max rel {rel.max():.3e} (bound {2 ** -7:.3e}), {half_bad} violations; "
            f"FAST |y| in [{mag.min():.7f}, {mag.max():.7f}], {fast_bad} violations over 1e6 carriers")


@pytest.mark.criterion(4, "capacity arithmetic")
def test_capacity_arithmetic(criterion):
    big = ModelContainer.from_arrays({"n": np.zeros(6400, dtype=np.float32)})
    fc1 = ModelContainer.from_arrays({"n": np.zeros(4096, dtype=np.float32)})
    kb = [capacity(big, m) / 1024 for m in (EmbedMethod.MSB_RESERVATION, FAST)]
    kb += [capacity(fc1, m) / 1024 for m in (EmbedMethod.MSB_RESERVATION, FAST)]
    ceiling = len(fc1.data) // 2
    fits = build_plan(fc1, HALF, ceiling).capacity == ceiling
    try:
        build_plan(fc1, HALF, ceiling + 1)
        raised = None
    except CapacityExceeded as e:
        raised = (e.available, e.required)
    ok = kb == [18.75, 18.75, 12.0, 12.0] and capacity(fc1, HALF) == ceiling and fits and raised == (ceiling, ceiling + 1)
    assert criterion.record(ok, f"6400 params -> {kb[0]} KB, 4096 params -> {kb[2]} KB; HALF ceiling {ceiling} B "
                                f"of {len(fc1.data)} B; +1 byte -> CapacityExceeded{raised}")


@pytest.mark.criterion(5, "Q-metric reproduction")
def test_q_metric(criterion):
    t0 = time.perf_counter()
    with (files("weightstego") / "data" / "cells_half.csv").open(newline="") as f:
        avg_m, avg_q = quality_table(read_cells_csv(f), "half")
    elapsed = time.perf_counter() - t0
    sq, inc = avg_m["Squeezenet"], avg_m["Inception"]
    ok = abs(sq - 2.0479) <= 0.05 and abs(inc - 1.4081) <= 0.05 and abs(avg_q - 1.6875) <= 0.05 and elapsed < 1
    assert criterion.record(ok, f"Squeezenet {sq:.4f} (2.0479), Inception {inc:.4f} (1.4081), "
                                f"AVG(Q) {avg_q:.4f} (1.6875), tol 0.05")


def max_rise(curve):
    """Largest amount any point sits above an earlier point of the curve."""
    running = np.minimum.accumulate(curve)
    return float(np.max(np.asarray(curve[1:]) - running[:-1], initial=0.0))


@pytest.mark.criterion(6, "desk-scale accuracy impact")
def test_accuracy_impact(criterion, dataset, trained, clean):
    t0 = time.perf_counter()
    X, y = dataset.X_test, dataset.y_test
    base = trained.base_accuracy_
    payload = np.random.default_rng(42).bytes(3 * 256 * 257)
    hidden = ["fc0", "fc1"]

    half_full = {layer: mininet.accuracy(mininet.replace_neurons(clean, layer, 256, HALF, payload), X, y)
                 for layer in hidden}
    fast_all = clean
    for layer in hidden:
        fast_all = mininet.replace_neurons(fast_all, layer, 256, FAST, payload)
    fast_all_acc = mininet.accuracy(fast_all, X, y)

    grid = list(range(0, 257, 32))
    fast_fc1 = [p.accuracy for p in mininet.sweep(clean, ["fc1"], grid, FAST, X, y, payload)]
    fast_fc0 = [p.accuracy for p in mininet.sweep(clean, ["fc0"], grid, FAST, X, y, payload)]
    half_sweeps = [p.accuracy for p in mininet.sweep(clean, hidden, grid, HALF, X, y, payload)]
    half_dev = max(abs(a - base) for a in half_sweeps)
    rise = max(max_rise(fast_fc1), max_rise(half_sweeps[:len(grid)]), max_rise(half_sweeps[len(grid):]))
    elapsed = time.perf_counter() - t0

    ok = (
        base >= 0.90
        and all(abs(a - base) <= 0.01 for a in half_full.values())
        and half_dev <= 0.01
        and base - fast_all_acc >= 0.30
        and rise <= 0.02
        and fast_fc1[-1] > fast_fc0[-1]
        and elapsed <= 120
    )
    assert criterion.record(
        ok, f"base {base:.4f}; HALF full layer fc0 {half_full['fc0']:.4f} fc1 {half_full['fc1']:.4f}, "
            f"sweep max dev {half_dev * 100:.2f} pt; FAST all hidden {fast_all_acc:.4f} "
            f"(drop {(base - fast_all_acc) * 100:.1f} pt); max rise fc1-FAST/HALF sweeps {rise * 100:.2f} pt; "
            f"100% point fc1 {fast_fc1[-1]:.3f} vs fc0 {fast_fc0[-1]:.3f} "
            f"(fc0 curve {' '.join(f'{a:.3f}' for a in fast_fc0)}, reported only); {elapsed:.1f} s")


@pytest.mark.criterion(7, "freeze-retrain")
def test_freeze_retrain(criterion, dataset, trained, clean):
    t0 = time.perf_counter()
    X, y = dataset.X_test, dataset.y_test
    base = trained.base_accuracy_
    ok, parts = True, []
    # last hidden layer barely notices full FAST replacement; the first hidden layer takes a real hit
    for layer in ("fc1", "fc0"):
        plan = mininet.neuron_plan(clean, layer, mininet.layer_width(clean, layer), FAST)
        payload = Payload(np.random.default_rng(42).bytes(plan.capacity))
        heavy, manifest = embed_payload(clean, payload, plan)
        hit = mininet.accuracy(heavy, X, y)
        restored, after = mininet.freeze_retrain(heavy, layer, dataset, epochs=1, seed=0)
        intact = verify(extract_payload(restored, manifest), payload.sha256)
        recovered = (after - hit) / (base - hit)
        ok &= base > hit and recovered >= 0.5 and intact
        parts.append(f"{layer}: {base:.4f} -> {hit:.4f} -> {after:.4f} ({recovered:.0%} recovered, "
                     f"SHA {'unchanged' if intact else 'CHANGED'})")
    ok &= base - hit > 0.05
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 60
    assert criterion.record(ok, "; ".join(parts) + f"; {elapsed:.1f} s")


@pytest.mark.criterion(8, "sanitize and overlap detection")
def test_defense(criterion, dataset, trained, clean):
    X, y = dataset.X_test, dataset.y_test
    base = trained.base_accuracy_
    # every weight tensor that holds 4 KB under each method
    combos = [(m, t) for m in EmbedMethod for t in ("fc0.weight", "fc1.weight", "fc2.weight")
              if capacity(clean, m, [t]) >= 4096]
    broken = {"randomize": 0, "truncate": 0}
    detect_ok, argmax_ok, worst_hit, worst_clean = 0, 0, 1.0, 0.0
    # accuracy cost of sanitizing, on the clean net and on every carrier
    worst_acc = abs(mininet.accuracy(sanitize(clean, mode="truncate"), X, y) - base)
    for trial in range(100):
        method, tensor = combos[trial % len(combos)]
        payload = Payload(np.random.default_rng(1000 + trial).bytes(4096))
        stego, manifest = embed_payload(clean, payload, build_plan(clean, method, 4096, [tensor]))
        stego_acc = mininet.accuracy(stego, X, y)
        worst_acc = max(worst_acc, abs(mininet.accuracy(sanitize(clean, mode="randomize", seed=trial), X, y) - base))
        for mode in broken:
            cleaned = sanitize(stego, mode=mode, seed=trial)
            broken[mode] += not verify(extract_payload(cleaned, manifest), payload.sha256)
            worst_acc = max(worst_acc, abs(mininet.accuracy(cleaned, X, y) - stego_acc))
        report = detect_overlap(stego, payload, method, q=16)
        hit = report.rate(tensor)
        others = max(r.overlap_rate for r in report.rows if r.tensor != tensor)
        worst_hit, worst_clean = min(worst_hit, hit), max(worst_clean, others)
        detect_ok += hit >= 0.9 and others <= 0.05
        argmax_ok += report.argmax == tensor
    ok = broken == {"randomize": 100, "truncate": 100} and worst_acc <= 0.01 and detect_ok == 100 and argmax_ok == 100
    assert criterion.record(
        ok, f"SHA broken randomize {broken['randomize']}/100, truncate {broken['truncate']}/100; "
            f"max |dacc| {worst_acc * 100:.2f} pt; carrier rate min {worst_hit:.3f}, "
            f"clean rate max {worst_clean:.3f}, argmax {argmax_ok}/100 over {len(combos)} (method, tensor) carriers")


@pytest.mark.criterion(9, "trigger")
def test_trigger(criterion):
    spec = TriggerSpec("5151e888a773f4675002a2a6a2c9b091")
    c = MatchCounter()
    for _ in range(6):
        c, six = observe(c, True, spec)
    c, ever = MatchCounter(), False
    for i in range(10_000):
        c, active = observe(c, i % 2 == 0, spec)
        ever |= active
    ones, zeros = binarize(np.full(128, 0.3)), binarize(np.concatenate([np.zeros(64), -np.ones(64)]))
    target = "5151e888a773f4675002a2a6a2c9b091"
    bits = [int(b) for b in bin(int(target, 16))[2:].zfill(128)]
    round_trip = binarize(np.array(bits, dtype=float)) == target == normalize_hex("0x" + target.upper())
    ok = six and not ever and ones == "f" * 32 and zeros == "0" * 32 and round_trip and spec.width == 128
    assert criterion.record(ok, f"6 matches -> activated={six}; alternating 1e4 steps -> activated={ever}; "
                                f"all-positive {ones[:4]}..., all-nonpositive {zeros[:4]}...; target round trip {round_trip}")


@pytest.mark.criterion(10, "gradient check")
def test_gradient_check(criterion, dataset):
    rng = np.random.default_rng(10)
    params = []
    for fan_in, fan_out in zip(mininet.DEFAULT_ARCHITECTURE[:-1], mininet.DEFAULT_ARCHITECTURE[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-limit, limit, (fan_out, fan_in)), rng.uniform(-0.1, 0.1, fan_out)))
    X = dataset.X_train[:3].astype(np.float64)
    y = dataset.y_train[:3]
    n = sum(W.size + b.size for W, b in params)
    err = max_relative_error(params, X, y)
    ok = err < 1e-4
    assert criterion.record(ok, f"max relative error {err:.2e} over all {n} parameters, 3-sample batch, float64")
