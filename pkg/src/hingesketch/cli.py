"""Command-line surface: stream generation, sketch build/query, optimization,
benchmarking, and self-verification.

Results go to stdout; errors go to stderr as one JSON object per line.
Exit codes: 0 ok, 2 config error, 3 data error, 4 verification failure.
The HSK_SEED environment variable overrides --seed everywhere.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import struct
import sys
import time

import numpy as np

from . import add1d, add2d, dyn1d, gen, mult1d, optimize, serialize
from .core import (
    LabeledPoint,
    SketchParams,
    distance_sums_1d,
    hinge_objective,
    HyperplaneQuery,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4

ALGORITHMS = ("offline1d", "mult1d", "dyn1d", "add1d", "add2d", "pegasos")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _err(kind: str, message: str, **extra) -> None:
    rec = {"error": kind, "message": message}
    rec.update(extra)
    print(json.dumps(rec), file=sys.stderr)


# ---------------------------------------------------------------------------
# Stream I/O
# ---------------------------------------------------------------------------


def ingest(path: str, fmt: str, fail_fast: bool = False, max_norm: float = 1.0):
    """Read a labeled stream; returns (points, row_errors).

    CSV rows are "y,x1[,x2]" with y in {-1, 1}; binary streams carry an
    8-byte header (magic "HSTR", u32 dimension) and records of one label
    byte plus d little-endian float64 coordinates.  ``max_norm`` relaxes the
    unit-ball check (the adversarial optimization instances deliberately
    place one cluster at norm 1+delta).
    """
    points: list[LabeledPoint] = []
    errors: list[str] = []
    dim = None

    def bad(lineno, msg):
        errors.append(f"line {lineno}: {msg}")
        if fail_fast:
            raise DataError(f"line {lineno}: {msg}")

    if fmt == "csv":
        stream = sys.stdin if path == "-" else open(path, "r")
        try:
            for lineno, line in enumerate(stream, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                try:
                    y = int(float(parts[0]))
                except ValueError:
                    bad(lineno, f"bad label {parts[0]!r}")
                    continue
                if y not in (-1, 1):
                    bad(lineno, "label must be -1 or 1")
                    continue
                try:
                    coords = tuple(float(v) for v in parts[1:])
                except ValueError:
                    bad(lineno, "bad coordinate")
                    continue
                if not coords:
                    bad(lineno, "missing coordinates")
                    continue
                if dim is None:
                    dim = len(coords)
                elif len(coords) != dim:
                    bad(lineno, f"dimension drift: {len(coords)} != {dim}")
                    continue
                try:
                    p = LabeledPoint(coords, y)
                except ValueError as e:
                    bad(lineno, str(e))
                    continue
                if p.norm() > max_norm + 1e-9:
                    bad(lineno, f"norm {p.norm():.6g} exceeds bound {max_norm:.6g}")
                    continue
                points.append(p)
        finally:
            if stream is not sys.stdin:
                stream.close()
    elif fmt == "bin":
        with open(path, "rb") as f:
            head = f.read(8)
            if len(head) < 8 or head[:4] != serialize.MAGIC_STREAM:
                raise DataError("bad stream header (expected HSTR magic)")
            dim = struct.unpack("<I", head[4:8])[0]
            rec = 1 + 8 * dim
            idx = 0
            while True:
                chunk = f.read(rec)
                if not chunk:
                    break
                idx += 1
                if len(chunk) < rec:
                    bad(idx, "truncated record")
                    break
                yb = struct.unpack("<b", chunk[:1])[0]
                if yb not in (-1, 1):
                    bad(idx, "label must be -1 or 1")
                    continue
                coords = struct.unpack(f"<{dim}d", chunk[1:])
                try:
                    p = LabeledPoint(coords, yb)
                except ValueError as e:
                    bad(idx, str(e))
                    continue
                if p.norm() > max_norm + 1e-9:
                    bad(idx, f"norm {p.norm():.6g} exceeds bound {max_norm:.6g}")
                    continue
                points.append(p)
    else:
        raise ConfigError(f"unknown stream format {fmt!r}")
    return points, errors


def write_stream(points, path: str, fmt: str) -> None:
    if fmt == "csv":
        with open(path, "w") as f:
            for p in points:
                f.write(f"{p.y}," + ",".join(repr(v) for v in p.x) + "\n")
    elif fmt == "bin":
        dim = points[0].dim if points else 1
        with open(path, "wb") as f:
            f.write(serialize.MAGIC_STREAM + struct.pack("<I", dim))
            for p in points:
                f.write(struct.pack("<b", p.y) + struct.pack(f"<{dim}d", *p.x))
    else:
        raise ConfigError(f"unknown stream format {fmt!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    seed = args.seed
    meta = {"kind": args.kind, "seed": seed, "n": args.n}
    if args.kind == "uniform":
        points = gen.gen_uniform(args.n, args.d, seed=seed, label_mode=args.labels)
    elif args.kind == "clustered":
        points = gen.gen_clustered(args.n, args.d, seed=seed, label_mode=args.labels)
    elif args.kind == "index1d":
        if not args.bits:
            raise ConfigError("--bits required for index1d")
        inst = gen.gen_index1d([int(c) for c in args.bits], args.epsilon, args.n)
        points = inst.points
        meta.update(
            bits=args.bits,
            per_bit=inst.per_bit,
            positions=list(inst.positions),
            queries=[
                {"bit": q.bit, "theta": list(q.theta), "b": q.b, "signal": q.signal}
                for q in inst.queries
            ],
            decode_threshold=(inst.queries[0].signal / 2.0) if inst.queries else None,
        )
    elif args.kind == "index2d":
        if not args.bits:
            raise ConfigError("--bits required for index2d")
        inst = gen.gen_index2d([int(c) for c in args.bits], args.s, args.r, args.n)
        points = inst.points
        meta.update(
            bits=args.bits,
            per_bit=inst.per_bit,
            positions=[list(p) for p in inst.positions],
            queries=[
                {"bit": q.bit, "theta": list(q.theta), "b": q.b, "signal": q.signal}
                for q in inst.queries
            ],
        )
    elif args.kind == "opthard":
        inst = gen.gen_opt_hard(args.delta, args.n, d=args.d, case=args.case, seed=seed)
        points = inst.points
        meta.update(
            delta=inst.delta,
            lam=inst.lam,
            case=inst.case,
            x_q=list(inst.x_q),
            theta_star_magnitude=inst.theta_star_magnitude,
            b_star=inst.b_star,
            n_total=inst.n_total,
            max_norm=1.0 + inst.delta,
        )
    else:
        raise ConfigError(f"unknown generator kind {args.kind!r}")
    write_stream(points, args.out, args.format)
    with open(args.out + ".meta.json", "w") as f:
        json.dump(meta, f, indent=2)
    print(json.dumps({"written": args.out, "points": len(points)}))
    return EXIT_OK


def _build_sketch(algorithm: str, points, args):
    xs = [p.x[0] for p in points]
    if algorithm == "offline1d":
        return mult1d.OfflineSketch1D.build(np.sort(np.asarray(xs)), args.epsilon)
    if algorithm == "mult1d":
        params = SketchParams(
            epsilon=args.epsilon, W=args.W, n_hint=args.n_hint or max(len(points), 1),
            seed=args.seed,
        )
        sk = mult1d.MultStream1D(params)
        sk.update_many(np.asarray(xs))
        sk.freeze()
        return sk
    if algorithm == "dyn1d":
        params = SketchParams(
            epsilon=args.epsilon, W=args.W, n_hint=args.n_hint or max(len(points), 1),
            seed=args.seed,
        )
        sk = dyn1d.DynSketch1D(params)
        for x in xs:
            sk.update(x)
        sk.freeze()
        return sk
    if algorithm == "add1d":
        tree = add1d.additive_tree_1d(
            args.epsilon, args.n_hint or max(len(points), 1), p=args.p
        )
        for x in xs:
            tree.update(x)
        return tree
    if algorithm == "add2d":
        tree = add2d.additive_quadtree(
            args.epsilon, args.n_hint or max(len(points), 1), p=args.p, seed=args.seed
        )
        for pt in points:
            tree.update((pt.x[0] + 1.0) / 2.0, (pt.x[1] + 1.0) / 2.0)
        return tree
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def cmd_build(args) -> int:
    points, errors = ingest(args.input, args.format, fail_fast=args.fail_fast,
                            max_norm=args.max_norm)
    for e in errors:
        _err("data", e)
    if not points:
        raise DataError("no valid points in stream")
    d = points[0].dim
    need = 2 if args.algorithm == "add2d" else 1
    if d != need:
        raise ConfigError(f"{args.algorithm} requires d={need}, stream has d={d}")
    if args.replicas > 1:
        # repeat-and-median boosting: independent replica per derived seed,
        # queried together via repeated --sketch flags
        base_seed = args.seed
        written = []
        for i in range(args.replicas):
            args.seed = int(np.uint64(base_seed) + np.uint64(i))
            sk = _build_sketch(args.algorithm, points, args)
            path = f"{args.out}.{i}"
            with open(path, "wb") as f:
                f.write(sk.to_bytes())
            written.append(path)
        args.seed = base_seed
        print(json.dumps({"written": written, "algorithm": args.algorithm,
                          "points": len(points), "replicas": args.replicas}))
        return EXIT_OK
    sk = _build_sketch(args.algorithm, points, args)
    with open(args.out, "wb") as f:
        f.write(sk.to_bytes())
    space = sk.space_words() if hasattr(sk, "space_words") else len(sk)
    print(json.dumps({"written": args.out, "algorithm": args.algorithm,
                      "points": len(points), "space_words": int(space)}))
    return EXIT_OK


def load_sketch(path: str):
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:4]
    if magic == serialize.MAGIC_MULT1D:
        return mult1d.MultStream1D.from_bytes(data)
    if magic == serialize.MAGIC_DYN1D:
        return dyn1d.DynSketch1D.from_bytes(data)
    if magic == serialize.MAGIC_BINTREE:
        return add1d.Tree1D.from_bytes(data)
    if magic == serialize.MAGIC_QUADTREE:
        return add2d.QuadTree2D.from_bytes(data)
    if magic == serialize.MAGIC_OFFLINE1D:
        return mult1d.OfflineSketch1D.from_bytes(data)
    raise DataError(f"unrecognized sketch magic {magic!r}")


def _single_estimate(sk, q=None, theta=None, b=None) -> float:
    if isinstance(sk, add2d.QuadTree2D):
        return sk.query(theta, b)
    if isinstance(sk, mult1d.MultStream1D):
        return sk.query(q)[0]
    return float(sk.query(q))


def cmd_query(args) -> int:
    sketches = [load_sketch(path) for path in args.sketch]
    if len(sketches) % 2 == 0:
        raise ConfigError("repeat-and-median needs an odd number of --sketch files")
    sk0 = sketches[0]
    out = []
    if isinstance(sk0, add2d.QuadTree2D):
        if args.theta is None or args.b is None:
            raise ConfigError("add2d queries need --theta tx,ty and --b")
        theta = tuple(float(v) for v in args.theta.split(","))
        vals = sorted(_single_estimate(sk, theta=theta, b=args.b) for sk in sketches)
        out.append({"theta": list(theta), "b": args.b,
                    "estimate": vals[len(vals) // 2], "replicas": len(sketches)})
    else:
        if not args.q:
            raise ConfigError("scalar queries need at least one --q")
        for q in args.q:
            vals = sorted(_single_estimate(sk, q=q) for sk in sketches)
            out.append({"q": q, "estimate": vals[len(vals) // 2],
                        "replicas": len(sketches)})
    for rec in out:
        print(json.dumps(rec))
    return EXIT_OK


def cmd_optimize(args) -> int:
    points, errors = ingest(args.input, args.format, fail_fast=args.fail_fast,
                            max_norm=args.max_norm)
    for e in errors:
        _err("data", e)
    if not points:
        raise DataError("no valid points in stream")
    if args.algorithm == "pegasos":
        theta, b = optimize.sgd_baseline(points, args.lam, args.epsilon, seed=args.seed)
        value = hinge_objective(points, HyperplaneQuery(theta, b), args.lam)
        rec = {"algorithm": "pegasos", "theta": list(theta), "b": b, "value": value,
               "space_words": optimize.sgd_space_words(args.lam, args.epsilon, points[0].dim)}
    else:
        res = optimize.optimize_via_sketch(
            points, args.lam, args.epsilon, family=args.algorithm,
            k=args.replicas, seed=args.seed,
        )
        rec = {"algorithm": args.algorithm, "theta": list(res.theta), "b": res.b,
               "value": res.value, "grid_size": res.grid_size, "k": res.k}
    print(json.dumps(rec))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

BENCH_HEADER = (
    "algorithm,epsilon,p,space_words,mean_rel_err,p95_err,max_err,success_rate,"
    "build_ns,query_ns"
)


def bench_rows(algorithms, epsilons, n, seeds, p, seed0) -> list[str]:
    rows = []
    for algorithm in algorithms:
        for eps in epsilons:
            errs = []
            space = 0
            build_ns = 0
            query_ns = 0
            succ = []
            for s in range(seeds):
                seed = seed0 + s
                if algorithm == "add2d":
                    pts = gen.gen_uniform(n, 2, seed=seed)
                    arr = np.array([pp.x for pp in pts])
                    target = eps
                    t0 = time.perf_counter_ns()
                    tree = add2d.additive_quadtree(eps, n, p=p, seed=seed)
                    for pp in pts:
                        tree.update((pp.x[0] + 1) / 2, (pp.x[1] + 1) / 2)
                    build_ns += time.perf_counter_ns() - t0
                    space = max(space, tree.space_words())
                    qrng = np.random.default_rng(seed + 777)
                    t0 = time.perf_counter_ns()
                    for _ in range(20):
                        ang = qrng.uniform(0, 2 * math.pi)
                        b = qrng.uniform(-1.5, 1.5)
                        theta = (math.cos(ang), math.sin(ang))
                        # query the mapped tree in ball coordinates
                        b2 = (b + theta[0] + theta[1]) / 2.0
                        est = 2.0 * tree.query(theta, b2)
                        oracle = float(np.mean(np.maximum(0.0, b - arr @ np.array(theta)) ** p))
                        errs.append(abs(est - oracle))
                        succ.append(abs(est - oracle) <= eps)
                    query_ns += time.perf_counter_ns() - t0
                    continue
                if algorithm == "pegasos":
                    lam = 0.1
                    pts = gen.gen_uniform(n, 1, seed=seed, low=-1.0, high=1.0,
                                          label_mode="random")
                    t0 = time.perf_counter_ns()
                    theta, b = optimize.sgd_baseline(pts, lam, eps, seed=seed)
                    build_ns += time.perf_counter_ns() - t0
                    space = optimize.sgd_space_words(lam, eps, 1)
                    from .core import exact_optimize

                    opt = exact_optimize(pts, lam, tol=1e-6)
                    val = hinge_objective(pts, HyperplaneQuery(theta, b), lam)
                    errs.append(max(0.0, val - opt.value))
                    succ.append(val - opt.value <= eps)
                    continue
                pts = gen.gen_uniform(n, 1, seed=seed)
                xs = np.array([pp.x[0] for pp in pts])
                qrng = np.random.default_rng(seed + 777)
                qs = qrng.uniform(0.0, 1.0, 50)
                oracle = distance_sums_1d(xs, qs, p=p)
                if algorithm == "offline1d":
                    t0 = time.perf_counter_ns()
                    sk = mult1d.OfflineSketch1D.build(np.sort(xs), eps)
                    build_ns += time.perf_counter_ns() - t0
                    space = max(space, 3 * len(sk))
                    t0 = time.perf_counter_ns()
                    ests = sk.query_many(qs)
                    query_ns += time.perf_counter_ns() - t0
                    rel = np.abs(ests - oracle) / np.maximum(oracle, 1e-300)
                    rel[oracle == 0] = 0.0
                    errs.extend(rel)
                    succ.extend(rel <= eps)
                elif algorithm in ("mult1d", "dyn1d"):
                    W = 2**16
                    u = 1.0 + xs * (W - 1)
                    params = SketchParams(epsilon=eps, W=W, n_hint=n, seed=seed)
                    t0 = time.perf_counter_ns()
                    if algorithm == "mult1d":
                        sk = mult1d.MultStream1D(params)
                        sk.update_many(u)
                    else:
                        sk = dyn1d.DynSketch1D(params)
                        for x in u:
                            sk.update(float(x))
                    sk.freeze()
                    build_ns += time.perf_counter_ns() - t0
                    space = max(space, sk.space_words())
                    t0 = time.perf_counter_ns()
                    kappa = mult1d.KAPPA if algorithm == "mult1d" else dyn1d.KAPPA_QUERY
                    for qi, q in enumerate(1.0 + qs * (W - 1)):
                        est = sk.query(q)
                        if algorithm == "mult1d":
                            est = est[0]
                        est /= W - 1
                        ex = oracle[qi]
                        rel = abs(est - ex) / ex if ex > 0 else 0.0
                        errs.append(rel)
                        succ.append(rel <= kappa * eps)
                    query_ns += time.perf_counter_ns() - t0
                elif algorithm == "add1d":
                    t0 = time.perf_counter_ns()
                    tree = add1d.additive_tree_1d(eps, n, p=p)
                    for x in xs:
                        tree.update(float(x))
                    build_ns += time.perf_counter_ns() - t0
                    space = max(space, tree.space_words())
                    t0 = time.perf_counter_ns()
                    ests = tree.query_many(qs) * len(xs)
                    query_ns += time.perf_counter_ns() - t0
                    add_err = np.abs(ests - oracle) / len(xs)
                    errs.extend(add_err)
                    succ.extend(add_err <= eps)
                else:
                    raise ConfigError(f"unknown algorithm {algorithm!r}")
            errs_a = np.asarray(errs, dtype=float)
            rows.append(
                f"{algorithm},{eps},{p},{space},{errs_a.mean():.6g},"
                f"{np.percentile(errs_a, 95):.6g},{errs_a.max():.6g},"
                f"{np.mean(np.asarray(succ, dtype=float)):.4f},{build_ns},{query_ns}"
            )
    return rows


def cmd_bench(args) -> int:
    algorithms = args.algorithms.split(",")
    epsilons = [float(e) for e in args.epsilons.split(",")]
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}")
    rows = bench_rows(algorithms, epsilons, args.n, args.seeds, args.p, args.seed)
    out = "\n".join([BENCH_HEADER] + rows)
    if args.out:
        with open(args.out, "w") as f:
            f.write(out + "\n")
        print(json.dumps({"written": args.out, "rows": len(rows)}))
    else:
        print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def run_verification(seed: int = 0, inject_fault: str | None = None) -> list[tuple[str, bool, str]]:
    """Small-n invariant suite; returns (check name, ok, detail) triples."""
    results = []
    rng = np.random.default_rng(seed)

    xs = np.sort(rng.integers(1, 2**12, 500).astype(float))
    sk = mult1d.OfflineSketch1D.build(xs, 0.5)
    qs = rng.uniform(1, 2**12, 200)
    t = sk.query_many(qs)
    exact = distance_sums_1d(xs, qs)
    ok = bool(np.all(t <= exact + 1e-9) and np.all(exact <= 1.5 * t + 1e-9))
    results.append(("offline1d sandwich T <= exact <= (1+eps)T", ok, ""))

    params = SketchParams(epsilon=0.25, W=2**12, n_hint=2000, seed=seed)
    sk2 = mult1d.MultStream1D(params)
    stream = rng.integers(1, 2**12, 2000).astype(float)
    sk2.update_many(stream)
    if inject_fault == "capacity":
        # test hook: force one buffer over its declared capacity
        sk2.S.buffers[0] = np.concatenate([sk2.S.buffers[0], np.zeros(sk2.m2 + 1)])
    sk2.freeze()
    cap_ok = all(b.size <= sk2.m1 for b in sk2.E.buffers) and all(
        b.size <= sk2.m2 for b in sk2.S.buffers
    )
    ok = cap_ok and sk2.space_words() <= sk2.space_bound_words()
    results.append(
        ("mult1d space invariant: per-level buffers within capacity", ok,
         f"{sk2.space_words()} vs bound {sk2.space_bound_words()}")
    )
    exact_all = distance_sums_1d(stream, qs)
    est_all = np.array([sk2.query(q)[0] for q in qs])
    ok = bool(np.all(np.abs(est_all - exact_all) <= 1e-6 * np.maximum(exact_all, 1.0)))
    results.append(("mult1d exact regime below retained max", ok, ""))

    dparams = SketchParams(epsilon=0.3, n_hint=3000, seed=seed)
    dsk = dyn1d.DynSketch1D(dparams)
    for x in rng.uniform(0, 1, 3000):
        dsk.update(float(x))
    viol = dsk.check_invariants()
    results.append(("dyn1d structural invariants", not viol, "; ".join(viol[:3])))

    tree = add1d.additive_tree_1d(0.1, 2000)
    data = rng.uniform(-1, 1, 2000)
    for x in data:
        tree.update(float(x))
    got = sum(node.c for node in tree._walk())
    results.append(("add1d conservation sum c_v = n", got == 2000, f"{got}"))
    qs1 = rng.uniform(-1, 1, 100)
    est = tree.query_many(qs1)
    orc = distance_sums_1d(data, qs1) / 2000
    results.append(("add1d additive error <= eps", bool(np.max(np.abs(est - orc)) <= 0.1),
                    f"max {np.max(np.abs(est - orc)):.4f}"))

    qt = add2d.additive_quadtree(0.1, 1000, seed=seed)
    pts2 = rng.uniform(0, 1, (1000, 2))
    for x, y in pts2:
        qt.update(float(x), float(y))
    est = qt.query((1.0, 0.0), 2.0)
    orc = float(np.mean(2.0 - pts2[:, 0]))
    results.append(("add2d exact when no cell crosses", abs(est - orc) < 1e-9,
                    f"{est:.6f} vs {orc:.6f}"))

    inst = gen.gen_index1d([1, 0, 1, 1], 0.01, 2000)
    bxs = np.array([p.x[0] for p in inst.points])
    tree1 = add1d.additive_tree_1d(0.003, max(len(bxs), 1), lo=0.0, hi=1.0)
    for x in bxs:
        tree1.update(float(x))
    dec = inst.decode(lambda q: tree1.query(q) * len(bxs))
    results.append(("index1d end-to-end decode", dec == list(inst.bits), f"{dec}"))

    th0, _ = gen.closed_form_opt(0.05, 0.0025, 2000, 0)
    th1, _ = gen.closed_form_opt(0.05, 0.0025, 2000, 1)
    sep_ok = (th1 - th0) >= 0.05 / (5 * 0.0025 * 2000)
    results.append(("hard-instance optimum separation >= delta/(5*lam*n)", sep_ok, ""))
    return results


def cmd_verify(args) -> int:
    results = run_verification(seed=args.seed, inject_fault=args.inject_fault)
    n_fail = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail and not ok:
            line += f" ({detail})"
        print(line)
        n_fail += not ok
    if n_fail:
        _err("verify", f"{n_fail} checks failed")
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hingesketch")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("csv", "bin"), default="csv")
        p.add_argument("--fail-fast", action="store_true")
        p.add_argument("--max-norm", type=float, default=1.0,
                       help="unit-ball relaxation for ingestion (opthard streams use 1+delta)")

    g = sub.add_parser("gen", help="generate a stream plus metadata sidecar")
    common(g)
    g.add_argument("--kind", required=True,
                   choices=("uniform", "clustered", "index1d", "index2d", "opthard"))
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--epsilon", type=float, default=0.01)
    g.add_argument("--bits", type=str, default="")
    g.add_argument("--s", type=int, default=6)
    g.add_argument("--r", type=int, default=2)
    g.add_argument("--delta", type=float, default=0.1)
    g.add_argument("--case", type=int, default=0, choices=(0, 1))
    g.add_argument("--labels", choices=("positive", "random"), default="positive")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    b = sub.add_parser("build", help="build a sketch from a stream file")
    common(b)
    b.add_argument("--algorithm", required=True, choices=ALGORITHMS[:-1])
    b.add_argument("--input", required=True)
    b.add_argument("--epsilon", type=float, required=True)
    b.add_argument("--W", type=int, default=2**20)
    b.add_argument("--n-hint", type=int, default=0)
    b.add_argument("--p", type=int, default=1, choices=(1, 2))
    b.add_argument("--replicas", type=int, default=1,
                   help="build k independently seeded replicas (files get .0..k-1 suffixes)")
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_build)

    q = sub.add_parser("query", help="query a serialized sketch")
    common(q)
    q.add_argument("--sketch", required=True, action="append",
                   help="sketch file; repeat for repeat-and-median boosting")
    q.add_argument("--q", type=float, action="append")
    q.add_argument("--theta", type=str)
    q.add_argument("--b", type=float)
    q.set_defaults(fn=cmd_query)

    o = sub.add_parser("optimize", help="approximately minimize the objective")
    common(o)
    o.add_argument("--algorithm", default="add1d",
                   choices=("add1d", "mult1d", "dyn1d", "add2d", "pegasos"))
    o.add_argument("--input", required=True)
    o.add_argument("--lam", "--lambda", dest="lam", type=float, required=True)
    o.add_argument("--epsilon", type=float, required=True)
    o.add_argument("--replicas", type=int, default=None)
    o.set_defaults(fn=cmd_optimize)

    be = sub.add_parser("bench", help="space/error/runtime table (CSV)")
    common(be)
    be.add_argument("--algorithms", default="offline1d,mult1d,add1d")
    be.add_argument("--epsilons", default="0.2,0.1")
    be.add_argument("--n", type=int, default=5000)
    be.add_argument("--seeds", type=int, default=3)
    be.add_argument("--p", type=int, default=1, choices=(1, 2))
    be.add_argument("--out", default="")
    be.set_defaults(fn=cmd_bench)

    v = sub.add_parser("verify", help="run the invariant self-checks")
    common(v)
    v.add_argument("--inject-fault", default=None, help="test hook: fault name")
    v.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else 0
    if "HSK_SEED" in os.environ:
        try:
            args.seed = int(os.environ["HSK_SEED"])
        except ValueError:
            _err("config", "HSK_SEED must be an integer")
            return EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as e:
        _err("config", str(e))
        return EXIT_CONFIG
    except (optimize.GridBudgetError, ValueError) as e:
        _err("config", str(e))
        return EXIT_CONFIG
    except DataError as e:
        _err("data", str(e))
        return EXIT_DATA
    except OSError as e:
        _err("data", str(e))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
