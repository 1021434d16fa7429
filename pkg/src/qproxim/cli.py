"""Batch experiment runner: metrics, bridges, the crossed-product pipeline
and the acceptance suite, with JSON/CSV reports.

Exit codes: 0 on success, 1 on usage or input errors, 2 when a certified
certified bound is violated (a failing suite criterion or composition assert).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"input file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _load_space(path):
    from .classical import FinitePointedMetricSpace
    obj = _load_json(path)
    try:
        return FinitePointedMetricSpace.from_json(obj)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad space file {path}: {exc}") from exc


def _write_report(path, payload):
    payload = _jsonable(dict(payload))
    payload["schema_version"] = SCHEMA_VERSION
    payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _space_algebra(space):
    from .algebra import function_algebra
    from .lipschitz import ClassicalLip
    alg = function_algebra(space.n, pin_index=space.base)
    return alg, ClassicalLip(space)


def cmd_bl(args):
    from .algebra import character_delta
    from .statemetrics import bl
    space = _load_space(args.space)
    alg, spec = _space_algebra(space)
    rows = []
    pairs = [(args.src, args.dst)] if args.pairs is None else [
        tuple(int(x) for x in pair.split(":")) for pair in args.pairs.split(",")]
    for i, j in pairs:
        if not (0 <= i < space.n and 0 <= j < space.n):
            raise UsageError(f"point index out of range: {i}:{j}")
        br = bl(alg, spec, args.M, character_delta(alg, i),
                character_delta(alg, j), gap=args.gap, method=args.method)
        rows.append({"pair": f"{i}:{j}", **br.to_json()})
        print(f"bl[{i},{j}] in [{br.lower:.9f}, {br.upper:.9f}] ({br.method})")
    if args.out:
        if args.out.endswith(".csv"):
            with open(args.out, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=["pair", "lower", "upper",
                                                   "method", "iterations"])
                w.writeheader()
                w.writerows(rows)
        else:
            _write_report(args.out, {"command": "bl", "M": args.M,
                                     "results": rows})
    return 0


def cmd_mk(args):
    from .algebra import character_delta
    from .statemetrics import mk
    space = _load_space(args.space)
    alg, spec = _space_algebra(space)
    val, hist = mk(alg, spec, character_delta(alg, args.src),
                   character_delta(alg, args.dst))
    if math.isinf(val):
        print("diverges")
    else:
        print(f"{val:.9f}")
    if args.out:
        _write_report(args.out, {
            "command": "mk", "from": args.src, "to": args.dst,
            "value": None if math.isinf(val) else val,
            "diverges": math.isinf(val),
            "history": [h.to_json() for h in hist]})
    return 0


def cmd_gh_bridge(args):
    from .classical import build_bridge, gh_pointed
    from .tunnels import ExtentConfig, build_bridge_tunnel, extent
    X = _load_space(args.space_x)
    Y = _load_space(args.space_y)
    gh, tag = gh_pointed(X, Y)
    print(f"gh_pointed = {gh:.9f} ({tag})")
    payload = {"command": "gh-bridge", "gh": gh, "tag": tag}
    if tag == "exact" and gh < 0.95:
        bridge = build_bridge(X, Y)
        t = build_bridge_tunnel(X, Y, bridge, M=args.M)
        rep = extent(t, ExtentConfig(gap=args.gap))
        print(f"bridge eps = {bridge.eps:.9f}, extent upper = "
              f"{rep.total.upper:.9f} (bound 2*GH = {2 * gh:.9f})")
        payload.update({"bridge_eps": bridge.eps, "extent": rep.to_json(),
                        "bound_2gh": 2 * gh,
                        "bound_holds": bool(rep.total.upper <= 2 * gh + 1e-3)})
        if not payload["bound_holds"]:
            if args.out:
                _write_report(args.out, payload)
            return 2
    if args.out:
        _write_report(args.out, payload)
    return 0


def cmd_extent(args):
    return cmd_gh_bridge(args)


def cmd_compose(args):
    from .classical import build_bridge
    from .tunnels import ExtentConfig, build_bridge_tunnel, compose
    X = _load_space(args.space_x)
    Y = _load_space(args.space_y)
    Z = _load_space(args.space_z)
    t1 = build_bridge_tunnel(X, Y, build_bridge(X, Y), M=args.M)
    t2 = build_bridge_tunnel(Y, Z, build_bridge(Y, Z), M=args.M)
    try:
        out = compose(t1, t2, args.eps, cfg=ExtentConfig(gap=args.gap))
    except AssertionError as exc:
        print(f"composition bound violated: {exc}", file=sys.stderr)
        return 2
    chk = out.composition_check
    print(f"measured = {chk['measured']:.9f} <= bound = {chk['bound']:.9f}")
    if args.out:
        _write_report(args.out, {"command": "compose", **chk})
    return 0


def cmd_crossed_product(args):
    from . import crossedprod as cp
    consts = cp.constants(args.eps, args.t)
    ps = args.p if args.p else [consts.N7]
    rows = []
    reports = {}
    worst_fail = None
    for p in ps:
        tp = cp.build_tunnel_p(args.eps, args.t, p=p, W=args.window,
                               consts=consts,
                               coupling_cutoff=args.coupling_cutoff)
        chain = cp.verify_chain(args.eps, args.t, tunnel=tp, seed=args.seed)
        if chain["pass"] and tp.coupling_cutoff == "h2":
            cert = cp.extent_certified(args.eps, args.t, tunnel=tp,
                                       chain=chain, seed=args.seed)
        else:
            cert = {"pass": False, "first_fail": chain["first_fail"],
                    "report": None, "total_upper": None}
        rows.append({"p": p, "chain_pass": chain["pass"],
                     "first_fail": chain["first_fail"] or "",
                     "cert_pass": cert["pass"],
                     "total_upper": cert.get("total_upper")})
        reports[str(p)] = {
            "chain": chain,
            "certificate": cert["report"].to_json() if cert.get("report") else None,
            "pass": cert["pass"]}
        status = "pass" if cert["pass"] else f"FAIL ({chain['first_fail']})"
        upper = cert.get("total_upper")
        upper_s = "n/a" if upper is None else f"{upper:.6f}"
        print(f"p = {p}: chain {'pass' if chain['pass'] else 'FAIL'}, "
              f"extent upper {upper_s} vs eps {args.eps} -> {status}")
    if args.out:
        _write_report(args.out, {
            "command": "crossed-product", "eps": args.eps, "t": args.t,
            "constants": consts.to_json(), "runs": reports})
        csv_path = args.out.rsplit(".", 1)[0] + ".csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["p", "chain_pass", "first_fail",
                                               "cert_pass", "total_upper"])
            w.writeheader()
            w.writerows(rows)
    if not all(r["cert_pass"] for r in rows):
        return 2
    return 0


def cmd_suite(args):
    from . import acceptance
    selection = None
    if args.only is not None:
        picks = [s for s in args.only.split(",") if s.strip()]
        if not picks:
            raise UsageError("empty suite selection")
        selection = {int(s) for s in picks}
        if not selection <= set(range(1, 11)):
            raise UsageError("criteria are numbered 1..10")
    results = acceptance.run_all(seed=args.seed, heavy=not args.light,
                                 selection=selection)
    for r in results:
        verdict = "PASS" if r["passed"] else "FAIL"
        print(f"[{r['index']:2d}] {verdict}  {r['name']}  ({r['seconds']}s)")
    if args.out:
        _write_report(args.out, {"command": "suite",
                                 "results": _jsonable(results)})
        csv_path = args.out.rsplit(".", 1)[0] + ".csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["criterion", "name", "passed", "seconds"])
            for r in results:
                w.writerow([r["index"], r["name"], r["passed"], r["seconds"]])
    return 0 if all(r["passed"] for r in results) else 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qproxim",
        description="metrics, tunnels and extent certificates on concrete "
                    "C*-algebras")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--M", type=float, default=1.0)
        p.add_argument("--gap", type=float, default=1e-4)
        p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("bl", help="Fortet-Mourier bracket between characters")
    p.add_argument("--space", required=True)
    p.add_argument("--from", dest="src", type=int, default=0)
    p.add_argument("--to", dest="dst", type=int, default=1)
    p.add_argument("--pairs", type=str, default=None,
                   help="comma-separated i:j pairs for batch CSV output")
    p.add_argument("--method", choices=("auto", "lp", "spectral"),
                   default="auto")
    common(p)
    p.set_defaults(fn=cmd_bl)

    p = sub.add_parser("mk", help="Monge-Kantorovich distance between characters")
    p.add_argument("--space", required=True)
    p.add_argument("--from", dest="src", type=int, default=0)
    p.add_argument("--to", dest="dst", type=int, default=1)
    common(p)
    p.set_defaults(fn=cmd_mk)

    for name in ("gh-bridge", "extent"):
        p = sub.add_parser(name, help="pointed GH distance, bridge tunnel "
                                      "and its extent")
        p.add_argument("--space-x", required=True)
        p.add_argument("--space-y", required=True)
        common(p)
        p.set_defaults(fn=cmd_gh_bridge)

    p = sub.add_parser("compose", help="compose two bridge tunnels and check "
                                       "the triangle bound")
    p.add_argument("--space-x", required=True)
    p.add_argument("--space-y", required=True)
    p.add_argument("--space-z", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    common(p)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("crossed-product", help="the finite approximation "
                                               "experiment with certificates")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--p", type=int, action="append", default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coupling-cutoff", choices=("h2", "h1"), default="h2")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(fn=cmd_crossed_product)

    p = sub.add_parser("suite", help="run the acceptance battery")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--light", action="store_true",
                   help="skip the long crossed-product criterion")
    p.add_argument("--only", type=str, default=None,
                   help="comma-separated criterion numbers (1..10)")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(fn=cmd_suite)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses code 2 for usage errors; the contract here is 1
        return 1 if exc.code not in (0, None) else 0
    if getattr(args, "seed", None) is None and args.command == "suite":
        from .acceptance import SEED
        args.seed = SEED
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
