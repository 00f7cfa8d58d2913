"""Command line entry point: ``bopaudit {audit,bound,maxk,simulate,scenario}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .audit import TABLE_COLUMNS, AuditConfig, audit_dataset
from .core import AuditError
from .explain import IG_RULES
from .dataio import (
    SCHEMA_VERSION,
    DataError,
    load_model,
    read_dataset_csv,
    read_group_file,
    save_model,
    write_dataset_csv,
)
from .models import TrainingError
from .scenarios import (
    DEFAULT_GRID,
    AdditiveScenario,
    additive_mse_analytics,
    build_worst_case_pair,
    gen_additive,
    gen_thm41,
    simulate_pe,
)
from .stats import (
    Family,
    NeverReliableError,
    QuadratureError,
    equal_group_bound,
    first_unreliable_k,
    max_attributes,
    max_attributes_int,
    pe_bound,
)

log = logging.getLogger("bopaudit")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _scale(args) -> float | None:
    family = Family(args.family)
    if family is Family.CATEGORICAL:
        if args.sigma is not None or args.b is not None:
            raise UsageError("categorical BoP takes no --sigma/--b")
        return None
    if family is Family.GAUSSIAN:
        if args.sigma is None or args.b is not None:
            raise UsageError("gaussian BoP needs --sigma (and no --b)")
        return args.sigma
    if args.b is None or args.sigma is not None:
        raise UsageError("laplace BoP needs --b (and no --sigma)")
    return args.b


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------


def cmd_audit(args) -> int:
    dataset = read_dataset_csv(args.data, args.task)
    if dataset.k < 1:
        raise DataError("a personalized audit needs at least one s_ column")
    cfg = AuditConfig(
        model=args.model, lr=args.lr, epochs=args.epochs, hidden=args.hidden, l2=args.l2,
        seed=args.seed, r=args.r, steps=args.steps, ig_rule=args.ig_rule, epsilon=args.epsilon,
        prediction_cost=args.prediction_cost, pooled_scale=args.pooled_scale, test_frac=args.test_frac,
    )
    h0 = load_model(args.load_h0) if args.load_h0 else None
    hp = load_model(args.load_hp) if args.load_hp else None
    report, h0, hp = audit_dataset(dataset, cfg, h0, hp)
    if args.save_models:
        out = Path(args.save_models)
        out.mkdir(parents=True, exist_ok=True)
        save_model(h0, out / "h0.json")
        save_model(hp, out / "hp.json")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["Group", "n", *TABLE_COLUMNS.values()])
            w.writeheader()
            w.writerows(report["table"])
    _emit(_json(report), args.out)
    return 0


def _bound_rows(args, family, bound_at):
    rows = []
    if args.curve == "eps":
        if bound_at is None:
            raise UsageError("--curve eps needs --n/--k or --groups")
        for e in np.linspace(0.0, args.eps_max, args.points):
            rows.append((float(e), bound_at(float(e))))
    else:
        if args.n is None or args.epsilon is None:
            raise UsageError("--curve k needs --n and --epsilon")
        k = 0
        while k <= args.k_max and (args.n >> k) >= 1:
            rows.append((k, equal_group_bound(family, args.epsilon, args.n, k, args._scale, raw=True)))
            k += 1
    return rows


def cmd_bound(args) -> int:
    family = Family(args.family)
    scale = _scale(args)
    bound_at = None
    if args.groups:
        sizes, scales = read_group_file(args.groups)
        if scales is not None:
            if family is Family.CATEGORICAL:
                raise UsageError("categorical BoP takes no scales")
            scale = scales
        bound_at = lambda e: pe_bound(family, e, sizes, scale, raw=True)  # noqa: E731
    elif args.n is not None and args.k is not None:
        bound_at = lambda e: equal_group_bound(family, e, args.n, args.k, scale, raw=True)  # noqa: E731
    args._scale = scale
    if args.curve is None:
        if args.epsilon is None or (bound_at is None and args.epsilon != 0):
            raise UsageError("bound needs --epsilon and either --n/--k or --groups")
        raw = 1.0 if args.epsilon == 0 else bound_at(args.epsilon)
        _emit(f"{round(min(1.0, max(0.0, raw)), 6)!r}\n", args.out)
        return 0
    rows = _bound_rows(args, family, bound_at)
    lines = [f"{args.curve},pe_lower_bound_raw,pe_lower_bound_clamped"]
    for x, r in rows:
        lines.append(f"{x:.10g},{r:.10g},{min(1.0, max(0.0, r)):.10g}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_maxk(args) -> int:
    scale = _scale(args)
    k_real = max_attributes(args.family, args.epsilon, args.n, scale)
    k_int = max_attributes_int(args.family, args.epsilon, args.n, scale)
    if args.json:
        out = {
            "family": args.family, "epsilon": args.epsilon, "n": args.n, "scale": scale,
            "k_max": k_int, "k_max_real": k_real,
            "first_unreliable_k": first_unreliable_k(args.family, args.epsilon, int(args.n), scale),
        }
        _emit(_json(out), args.out)
    else:
        _emit(f"{k_int}\n", args.out)
    return 0


def _simulate_point(family, eps, d, m, scale, trials, seed, h1_shift=1.0) -> dict:
    pair = build_worst_case_pair(family, eps, d, m, scale, h1_shift)
    res = simulate_pe(pair, eps, trials, seed)
    return {"family": Family(family).value, "epsilon": eps, "d": d, "m": int(m), "scale": scale,
            "seed": seed, "h1_shift": h1_shift, **res.to_dict()}


def cmd_simulate(args) -> int:
    if args.trials < 100:
        raise UsageError("--trials must be at least 100")
    if args.grid:
        points = [_simulate_point(p["family"], p["epsilon"], p["d"], p["m"], p.get("scale"),
                                  args.trials, args.seed) for p in DEFAULT_GRID]
        out = {"schema_version": SCHEMA_VERSION, "points": points,
               "dominance_ok": all(p["dominance_ok"] for p in points)}
    else:
        if args.family is None or args.epsilon is None or args.d is None or args.m is None:
            raise UsageError("simulate needs --family --epsilon --d --m (or --grid)")
        scale = _scale(args)
        out = {"schema_version": SCHEMA_VERSION,
               **_simulate_point(args.family, args.epsilon, args.d, args.m, scale, args.trials,
                                 args.seed, args.h1_shift)}
    _emit(_json(out), args.out)
    return 0


def cmd_scenario(args) -> int:
    if args.name == "thm41":
        scn = gen_thm41(args.n, args.seed)
        dataset = scn.dataset
        analytics = {"scenario": "thm41", "n": args.n, "seed": args.seed, **scn.expected}
        if args.oracle_dir:
            out = Path(args.oracle_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_model(scn.h0, out / "h0.json")
            save_model(scn.hp, out / "hp.json")
    else:
        if args.alpha_x is None or args.alpha_s is None:
            raise UsageError("additive scenario needs --alpha-x and --alpha-s")
        scn = AdditiveScenario(
            alphas_x=args.alpha_x, alphas_s=args.alpha_s,
            var_x=args.var_x if args.var_x is not None else 1.0,
            var_s=args.var_s if args.var_s is not None else 1.0,
            var_eps=args.var_eps, seed=args.seed,
        )
        dataset = gen_additive(scn, args.n)
        mse_h0, mse_hp, bop = additive_mse_analytics(scn)
        analytics = {"scenario": "additive", "n": args.n, **asdict(scn),
                     "mse_h0": mse_h0, "mse_hp": mse_hp, "bop_prediction": bop}
    write_dataset_csv(dataset, args.out)
    text = _json(analytics)
    if args.analytics:
        Path(args.analytics).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------


def _family_args(p, required=True):
    p.add_argument("--family", choices=[f.value for f in Family], required=required)
    p.add_argument("--sigma", type=float, help="Gaussian BoP standard deviation")
    p.add_argument("--b", type=float, help="Laplace BoP scale")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bopaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bopaudit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="train/load h0 and hp and audit them on a 70/30 split")
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True, choices=["classification", "regression"])
    p.add_argument("--model", default="auto", choices=["auto", "linear", "logistic", "mlp"])
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r", type=int, help="number of important inputs (default: half of the arity, rounded up)")
    p.add_argument("--steps", type=int, default=64, help="integrated-gradients path steps")
    p.add_argument("--ig-rule", choices=IG_RULES, default="riemann_right", help="path integration rule")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--prediction-cost", choices=["zero_one", "squared_error", "neg_auc", "neg_r2"])
    p.add_argument("--pooled-scale", action="store_true")
    p.add_argument("--test-frac", type=float, default=0.3)
    p.add_argument("--load-h0")
    p.add_argument("--load-hp")
    p.add_argument("--save-models", metavar="DIR")
    p.add_argument("--csv", help="write the per-group table here")
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bound", help="P_e lower bound, or a curve over eps or k")
    _family_args(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--groups", help="file with one 'm' or 'm,scale' per group")
    p.add_argument("--curve", choices=["eps", "k"])
    p.add_argument("--eps-max", type=float, default=0.05)
    p.add_argument("--points", type=int, default=51)
    p.add_argument("--k-max", type=int, default=40)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("maxk", help="largest number of binary attributes keeping P_e <= 1/2")
    _family_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_maxk)

    p = sub.add_parser("simulate", help="Monte Carlo error rate of the threshold test")
    _family_args(p, required=False)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h1-shift", type=float, default=1.0)
    p.add_argument("--grid", action="store_true", help="run the built-in dominance grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario", help="write a synthetic dataset and its analytic answers")
    p.add_argument("--name", required=True, choices=["thm41", "additive"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha-x", type=_floats)
    p.add_argument("--alpha-s", type=_floats)
    p.add_argument("--var-x", type=_floats)
    p.add_argument("--var-s", type=_floats)
    p.add_argument("--var-eps", type=float, default=0.25)
    p.add_argument("--oracle-dir", help="thm41: also write the oracle models here")
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--analytics", help="analytics JSON path (default: stdout)")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bopaudit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, AuditError, OSError) as exc:
        print(f"bopaudit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, QuadratureError, NeverReliableError, FloatingPointError) as exc:
        print(f"bopaudit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"bopaudit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
