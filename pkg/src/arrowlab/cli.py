"""Command-line experiment runner.

``arrowlab run CONFIG`` executes every analysis section of an INI config and
writes one artifact per section plus ``manifest.txt``.  The other
subcommands run a single analysis with flags named after the config keys.

Exit codes: 0 ok, 2 parse error, 3 validation error, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional


from . import __version__
from .analysis import (cataclysm_csv, coalescence_fraction, direction_estimate,
                       block_frequency, pairs_within, pn_density_profile, svg_line_chart,
                       walk_roots)
from .cutstack import CSV_HEADER as LEMMA_HEADER
from .cutstack import BudgetError, StackSpec, verify_reach_again, verify_reach_when
from .entropy import CSV_HEADER as ENTROPY_HEADER
from .entropy import block_entropy_2d
from .fields import FieldSpec, make_field
from .lattice import Direction, Window, format_arrows, parse_arrows, trace
from .percolation import (IIDWeights, constructed_weights, default_checkpoints,
                          geodesic_tree, hoffman_trace, tree_path)

EXIT_PARSE, EXIT_INVALID, EXIT_BUDGET = 2, 3, 4
DEFAULT_BUDGET = 2 * 10 ** 9


class ParseError(Exception):
    pass


class ValidationError(Exception):
    pass


# -- value converters ----------------------------------------------------------

def _int(v):
    return int(v)


def _ints(v):
    if isinstance(v, (tuple, list)):
        return tuple(int(x) for x in v)
    return tuple(int(x) for x in str(v).split(",") if x.strip())


def _window(v):
    hw = _ints(v)
    if len(hw) == 1:
        hw = hw * 2
    return Window((0,) * len(hw), hw)


def _word(v):
    letters = {"E": (0, 1), "W": (0, -1), "N": (1, 1), "S": (1, -1), "U": (2, 1), "D": (2, -1)}
    try:
        return tuple(Direction(*letters[c]) for c in str(v).strip())
    except KeyError as exc:
        raise ValueError(f"bad letter {exc.args[0]!r} in word") from None


def _choice(*options):
    def conv(v):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return conv


def _bool(v):
    s = str(v).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _fmt(v) -> str:
    if isinstance(v, Window):
        return ",".join(str(h) for h in v.halfwidths)
    if isinstance(v, tuple) and v and isinstance(v[0], Direction):
        return "".join(d.letter for d in v)
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


# -- analyses ------------------------------------------------------------------

@dataclass
class Context:
    spec: Optional[FieldSpec]
    seed: int
    threads: int = 1
    budget: int = DEFAULT_BUDGET
    arrows: Optional[str] = None

    def field(self, spec=None):
        if self.arrows is not None and spec is None:
            with open(self.arrows) as fh:
                return parse_arrows(fh.read())
        spec = spec or self.spec
        if spec is None:
            raise ValidationError("this analysis needs a field")
        return make_field(spec)

    def describe(self) -> str:
        if self.arrows is not None:
            return f"arrows={self.arrows}"
        return self.spec.to_text().strip().replace("\n", " ") if self.spec else "none"

    def charge(self, cost, what):
        if cost > self.budget:
            raise BudgetError(f"{what} needs ~{int(cost)} work units (budget {self.budget})")


def _traj(ctx, p):
    ctx.charge(p["steps"], "trace")
    f = ctx.field()
    start = p["start"] or (0,) * f.d
    return trace(f, start, p["steps"])


def run_gen(ctx, p):
    w = p["window"]
    ctx.charge(w.size, "gen")
    return format_arrows(ctx.field(), w)


def run_trace(ctx, p):
    t = _traj(ctx, p)
    s = t.sites()
    names = "xyz"[:s.shape[1]]
    rows = ["k," + ",".join(names)]
    rows += [f"{k}," + ",".join(str(int(c)) for c in s[k]) for k in range(len(s))]
    return "\n".join(rows) + "\n"


def run_pn(ctx, p):
    ctx.charge(p["window"].size, "pn_profile")
    return pn_density_profile(ctx.field(), p["window"], p["nmax"]).csv()


def run_cataclysm(ctx, p):
    ctx.charge(p["window"].size, "cataclysm")
    th = p["thresholds"] or (max(1, min(p["window"].halfwidths) // 2),)
    return cataclysm_csv(ctx.field(), p["window"], th)


def run_coalesce(ctx, p):
    w = p["window"]
    ctx.charge(w.size * p["seeds"], "coalesce")
    anchor = w.lo if p["anchor"] in (None, "corner") else _ints(p["anchor"])
    pairs = pairs_within(w, anchor, p["radius"])
    rows = ["seed,pairs,coalesced,fraction"]
    total = 0
    for k in range(p["seeds"]):
        if ctx.spec is not None and ctx.arrows is None:
            spec = FieldSpec(ctx.spec.kind, dict(ctx.spec.params), ctx.spec.seed + k)
            f = make_field(spec)
            s = spec.seed
        else:
            f, s = ctx.field(), ctx.seed
        fr = coalescence_fraction(f, w, pairs, walk_roots(f, w))
        hits = int(round(fr * len(pairs)))
        total += hits
        rows.append(f"{s},{len(pairs)},{hits},{float(fr)!r}")
    n = len(pairs) * p["seeds"]
    rows.append(f"all,{n},{total},{float((total / n if n else float('nan')))!r}")
    return "\n".join(rows) + "\n"


def run_direction(ctx, p):
    t = _traj(ctx, p)
    cps = default_checkpoints(len(t), p["per_decade"])
    return direction_estimate(t, cps).csv()


def run_blocks(ctx, p):
    t = _traj(ctx, p)
    freq = block_frequency(t, p["word"])
    cps = default_checkpoints(len(t), p["per_decade"])
    rows = ["n,frequency"] + [f"{int(n)},{float(freq[n - 1])!r}" for n in cps]
    return "\n".join(rows) + "\n"


def run_entropy(ctx, p):
    ctx.charge(p["window"].size + p["samples"] * len(p["L"]), "entropy")
    f = ctx.field()
    rows = [ENTROPY_HEADER]
    for L in p["L"]:
        rows.append(block_entropy_2d(f, p["window"], L, p["samples"], ctx.seed,
                                     ctx.threads).csv_row())
    return "\n".join(rows) + "\n"


def run_cutstack_verify(ctx, p):
    spec = StackSpec(p["n"])
    depth = p["depth"] or max(p["r"], (p["i"] or 0) + 1)
    ctx.charge(spec.height(depth), "cutstack-verify")
    rows = [LEMMA_HEADER, verify_reach_when(spec, p["r"], depth, ctx.budget).csv_row()]
    if p["i"]:
        rows.append(verify_reach_again(spec, p["i"], max(depth, p["i"] + 1), ctx.budget).csv_row())
    return "\n".join(rows) + "\n"


def run_lpp(ctx, p):
    w = p["window"]
    ctx.charge(w.size, "lpp")
    weights = IIDWeights(p["weights"], ctx.seed)
    target = p["target"] or w.hi
    tree = geodesic_tree(weights, w, target, p["mode"])
    t = tree.table
    rows = ["x,y,value,step"]
    for i in range(t.value.shape[0]):
        for j in range(t.value.shape[1]):
            c = int(t.step[i, j])
            rows.append(f"{t.lo[0] + i},{t.lo[1] + j},{float(t.value[i, j])!r},"
                        f"{Direction.from_code(c).letter if c >= 0 else '-'}")
    return "\n".join(rows) + "\n"


def run_hoffman(ctx, p):
    if p["source"] == "lpp":
        w = p["window"]
        ctx.charge(w.size, "hoffman")
        weights = IIDWeights(p["weights"], ctx.seed)
        tree = geodesic_tree(weights, w, w.hi, "max")
        t = tree_path(tree, w.lo)
    else:
        ctx.charge(p["steps"] // 1000, "hoffman")
        spec = ctx.spec
        if spec is None or spec.kind != "cutstack-product":
            spec = FieldSpec("cutstack-product", {}, ctx.seed)
        f = make_field(spec)
        weights = constructed_weights(field=f, variant=p["variant"])
        t = trace(f, p["start"] or (0, 0), p["steps"])
    cps = default_checkpoints(len(t), p["per_decade"])
    return hoffman_trace(weights, t, cps).csv()


_WEIGHTS = _choice("iid-exponential", "iid-uniform")

# name -> (runner, {key: (converter, default)}, artifact extension)
ANALYSES = {
    "gen": (run_gen, {"window": (_window, _window(8))}, "arrows"),
    "trace": (run_trace, {"start": (_ints, None), "steps": (_int, 100)}, "csv"),
    "pn_profile": (run_pn, {"window": (_window, _window(50)), "nmax": (_int, 40)}, "csv"),
    "cataclysm": (run_cataclysm, {"window": (_window, _window(50)),
                                  "thresholds": (_ints, ())}, "csv"),
    "coalesce": (run_coalesce, {"window": (_window, _window(100)), "radius": (_int, 10),
                                "seeds": (_int, 1), "anchor": (str, "corner")}, "csv"),
    "direction": (run_direction, {"start": (_ints, None), "steps": (_int, 10000),
                                  "per_decade": (_int, 10)}, "csv"),
    "blocks": (run_blocks, {"start": (_ints, None), "steps": (_int, 10000),
                            "word": (_word, _word("EN")), "per_decade": (_int, 10)}, "csv"),
    "entropy": (run_entropy, {"window": (_window, _window(200)), "L": (_ints, (1, 2, 3, 4)),
                              "samples": (_int, 100000)}, "csv"),
    "cutstack_verify": (run_cutstack_verify, {"n": (_ints, (2, 2)), "r": (_int, 2),
                                              "i": (_int, 0), "depth": (_int, 0)}, "csv"),
    "lpp": (run_lpp, {"window": (_window, _window(20)), "mode": (_choice("min", "max"), "max"),
                      "target": (_ints, None), "weights": (_WEIGHTS, "iid-exponential")}, "csv"),
    "hoffman": (run_hoffman, {"source": (_choice("cutstack", "lpp"), "cutstack"),
                              "variant": (_choice("w", "what", "w-or"), "what"),
                              "steps": (_int, 10 ** 6), "start": (_ints, None),
                              "window": (_window, _window(100)),
                              "weights": (_WEIGHTS, "iid-exponential"),
                              "per_decade": (_int, 10)}, "csv"),
}


def resolve(name: str, raw: dict) -> dict:
    """Convert raw string values and fill defaults; unknown keys are errors."""
    kind = name.split(":", 1)[0]
    if kind not in ANALYSES:
        raise ValidationError(f"unknown analysis section [{name}]")
    keys = ANALYSES[kind][1]
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise ValidationError(f"unknown key {unknown[0]!r} in [{name}]")
    out = {}
    for k, (conv, default) in keys.items():
        if k in raw and raw[k] is not None:
            try:
                out[k] = conv(raw[k])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad value for {k!r} in [{name}]: {exc}") from None
        else:
            out[k] = default
    return out


def provenance(name: str, ctx: Context, params: dict) -> str:
    ps = ";".join(f"{k}={_fmt(v)}" for k, v in params.items() if v is not None)
    return (f"# arrowlab {__version__} analysis={name.split(':', 1)[0]} seed={ctx.seed}\n"
            f"# field {ctx.describe()}\n# params {ps}\n")


def execute(name: str, ctx: Context, params: dict) -> str:
    body = ANALYSES[name.split(":", 1)[0]][0](ctx, params)
    return body + provenance(name, ctx, params) if name.startswith("gen") \
        else provenance(name, ctx, params) + body


# -- config files ----------------------------------------------------------------

EXPERIMENT_KEYS = {"seed", "out", "threads", "svg", "budget"}


def load_config(path: str):
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__",
                                   inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ParseError(str(exc)) from None
    sections = {s: dict(cp[s]) for s in cp.sections()}
    exp = sections.pop("experiment", {})
    unknown = sorted(set(exp) - EXPERIMENT_KEYS)
    if unknown:
        raise ValidationError(f"unknown key {unknown[0]!r} in [experiment]")
    try:
        seed = int(exp.get("seed", 0))
        threads = int(exp.get("threads", 1))
        budget = int(float(exp.get("budget", DEFAULT_BUDGET)))
        svg = _bool(exp.get("svg", "false"))
    except ValueError as exc:
        raise ValidationError(f"bad value in [experiment]: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    out = os.path.join(base, exp.get("out", "results"))
    fsec = sections.pop("field", None)
    spec, arrows = None, None
    if fsec is not None:
        fsec = dict(fsec)
        arrows = fsec.pop("arrows", None)
        if arrows is not None:
            if fsec:
                raise ValidationError(f"unknown key {sorted(fsec)[0]!r} next to arrows= in [field]")
            arrows = os.path.join(base, arrows)
        else:
            fsec.setdefault("seed", str(seed))
            try:
                spec = FieldSpec.from_pairs(fsec)
            except ValueError as exc:
                raise ValidationError(f"[field]: {exc}") from None
    analyses = []
    for name, raw in sections.items():
        analyses.append((name, resolve(name, raw)))
    if not analyses:
        raise ValidationError("config requests no analyses")
    ctx = Context(spec, seed, threads, budget, arrows)
    return ctx, analyses, out, svg


def manifest(ctx: Context, analyses, files) -> str:
    lines = [f"arrowlab {__version__}", "[experiment]", f"seed={ctx.seed}",
             f"threads={ctx.threads}", f"budget={ctx.budget}", "[field]"]
    lines += [f"arrows={ctx.arrows}"] if ctx.arrows else (
        ctx.spec.to_text().strip().splitlines() if ctx.spec else [])
    for name, params in analyses:
        lines.append(f"[{name}]")
        lines += [f"{k}={_fmt(v)}" for k, v in params.items() if v is not None]
    lines.append("[files]")
    lines += files
    return "\n".join(lines) + "\n"


def run_config(path: str) -> int:
    ctx, analyses, out, svg = load_config(path)
    os.makedirs(out, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, ctx.threads)) as ex:
        results = list(ex.map(lambda a: execute(a[0], ctx, a[1]), analyses))
    files = []
    for (name, _), text in zip(analyses, results):
        stem = name.replace(":", "_")
        fname = f"{stem}.{ANALYSES[name.split(':', 1)[0]][2]}"
        _write(os.path.join(out, fname), text)
        files.append(fname)
        if svg and fname.endswith(".csv"):
            _write(os.path.join(out, stem + ".svg"), svg_line_chart(text))
            files.append(stem + ".svg")
    _write(os.path.join(out, "manifest.txt"), manifest(ctx, analyses, files))
    return 0


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# -- argument parsing --------------------------------------------------------------

SUBCOMMANDS = {"gen": "gen", "trace": "trace", "pn": "pn_profile", "coalesce": "coalesce",
               "direction": "direction", "blocks": "blocks", "entropy": "entropy",
               "cutstack-verify": "cutstack_verify", "lpp": "lpp", "hoffman": "hoffman",
               "cataclysm": "cataclysm"}

FIELD_FLAGS = ("p", "phase", "arrow", "n", "m", "inner", "variant", "weights", "mode", "target")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="arrowlab", description="Arrow-field experiments.")
    ap.add_argument("--version", action="version", version=f"arrowlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run every analysis in a config file")
    r.add_argument("config")
    for cmd, name in SUBCOMMANDS.items():
        sp = sub.add_parser(cmd, help=f"single {name} analysis")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--window")
        sp.add_argument("--out", default="-")
        sp.add_argument("--svg")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--budget", type=float, default=DEFAULT_BUDGET)
        sp.add_argument("--field", help="field kind")
        sp.add_argument("--arrows", help="ARROWS v1 file to use as the field")
        for f in FIELD_FLAGS:
            sp.add_argument("--" + f)
        for key in ANALYSES[name][1]:
            if key not in ("window",) + FIELD_FLAGS:
                sp.add_argument("--" + key.replace("_", "-"), dest=key)
    return ap


def _subcommand_context(args, name):
    spec = None
    if args.field:
        pairs = {"kind": args.field, "seed": str(args.seed)}
        for f in FIELD_FLAGS:
            v = getattr(args, f)
            if v is not None and not (name in ("lpp", "hoffman") and f in ANALYSES[name][1]):
                pairs[f] = v
        if "inner" in pairs:
            inner = pairs.pop("inner")
            pairs.update({"inner." + k: v for k, v in
                          (kv.split("=", 1) for kv in inner.split(";") if kv)})
        try:
            spec = FieldSpec.from_pairs(pairs)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
    return Context(spec, args.seed, args.threads, int(args.budget), args.arrows)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.command == "run":
            return run_config(args.config)
        name = SUBCOMMANDS[args.command]
        raw = {k: getattr(args, k, None) for k in ANALYSES[name][1]}
        if "window" in ANALYSES[name][1]:
            raw["window"] = args.window
        params = resolve(name, raw)
        ctx = _subcommand_context(args, name)
        text = execute(name, ctx, params)
        if args.out == "-":
            sys.stdout.write(text)
        else:
            _write(args.out, text)
        if args.svg:
            _write(args.svg, svg_line_chart(text))
        return 0
    except ParseError as exc:
        print(f"arrowlab: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"arrowlab: cannot read or write: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, ValueError) as exc:
        print(f"arrowlab: invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetError as exc:
        print(f"arrowlab: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
