"""Command-line entry point: ``lrm collect | learn | export | rl``.

Settings come from built-in defaults, then an optional ``--config`` JSON
file, then explicit flags (later sources win).  Exit codes: 0 success,
2 configuration error, 3 budget refusal, 4 I/O error.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .rm import Alphabet, ContractError, dumps, estimate_delta_r, to_dot

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("1", "true", "yes", "on", "0", "false", "no", "off"):
        return v.lower() in ("1", "true", "yes", "on")
    raise ValueError(f"not a boolean: {v!r}")


def _opt_int(v):
    return None if v is None else int(v)


def _opt_float(v):
    return None if v is None else float(v)


# option name -> (type, default, help text); `out` and `traces` have no default
_SEARCH = {
    "method": (str, "ls", "search method: ls, ts or exact"),
    "u_max": (int, 10, "maximum number of machine states"),
    "t_max": (int, 100, "search iterations"),
    "tabu_size": (int, 100, "tabu list capacity"),
    "seed": (int, 0, "random seed"),
}

COMMANDS = {
    "collect": {
        "domain": (str, "cookie", "cookie, symbol, 2keys or gravity"),
        "steps": (int, 10_000, "environment steps to record"),
        "seed": (int, 0, "random seed"),
        "compress": (_bool, False, "store compressed traces"),
        "out": (str, None, "output trace file (JSON lines)"),
    },
    "learn": {
        "traces": (str, None, "input trace file"),
        **_SEARCH,
        "compress": (_bool, False, "compress traces and enforce self-loop closure"),
        "wall_clock_limit": (_opt_float, None, "seconds before the search stops early"),
        "budget": (int, 2_000_000, "largest enumeration the exact method accepts"),
        "out": (str, None, "output prefix (.json, .dot, .search.csv)"),
    },
    "export": {
        "traces": (str, None, "input trace file"),
        "format": (str, "milp", "milp (LP file) or cp"),
        "u_max": (int, 10, "maximum number of machine states"),
        "compress": (_bool, False, "compress traces and add closure constraints"),
        "m_cap": (_opt_int, None, "cap on prediction-set sizes (default: |Sigma|)"),
        "budget": (int, 2_000_000, "largest variable count accepted"),
        "seed": (int, 0, "recorded in the header"),
        "out": (str, None, "output model file"),
    },
    "rl": {
        "domain": (str, "cookie", "cookie, symbol, 2keys or gravity"),
        "t_w": (int, 200_000, "random warm-up steps"),
        "t_train": (int, 2_000_000, "training steps"),
        "epsilon": (float, 0.1, "exploration rate"),
        "gamma": (float, 0.9, "discount factor"),
        "alpha": (float, 0.1, "learning rate"),
        "q_init": (float, 1.0, "value of unseen Q entries"),
        **_SEARCH,
        "compress": (_bool, True, "learn from compressed traces"),
        "qrm": (_bool, True, "counterfactual updates for all machine states"),
        "relearn_budget": (int, 100, "maximum number of relearns"),
        "perfect_rm": (_bool, False, "use the hand-built machine (cookie, gravity) instead of learning"),
        "log_every": (int, 10_000, "steps per reward-log row"),
        "out": (str, None, "output prefix (.csv, .rm.json, .dot)"),
    },
}


SUMMARIES = {
    "collect": "record random-policy traces from a domain",
    "learn": "learn a reward machine from a trace file",
    "export": "write the MILP or CP model for a trace file",
    "rl": "learn a reward machine and a policy together",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrm", description="Learn reward machines from traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=SUMMARIES[name])
        p.add_argument("--config", help="JSON file with option values")
        for key, (typ, default, text) in opts.items():
            flag = "--" + key.replace("_", "-")
            shown = f"{text} (default: {default})"
            if typ is _bool:
                p.add_argument(flag, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS, help=shown)
            else:
                conv = {_opt_int: int, _opt_float: float}.get(typ, typ)
                p.add_argument(flag, type=conv, default=argparse.SUPPRESS, help=shown)
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags; validate."""
    opts = COMMANDS[command]
    cfg = {k: d for k, (_, d, _) in opts.items()}
    path = getattr(ns, "config", None)
    if path:
        try:
            with open(path) as fp:
                data = json.load(fp)
        except OSError as e:
            raise InputError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        unknown = sorted(set(data) - set(opts))
        if unknown:
            raise ConfigError(f"unknown config keys for '{command}': {', '.join(unknown)}")
        for k, v in data.items():
            try:
                cfg[k] = opts[k][0](v)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"config key {k!r}: {e}") from e
    for k in opts:
        if hasattr(ns, k):
            cfg[k] = getattr(ns, k)
    missing = [k for k in opts if cfg[k] is None and k in ("out", "traces")]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m for m in missing))
    return cfg


def metadata(command: str, cfg: dict) -> dict:
    from .traces import config_hash

    return {
        "command": command,
        # output locations do not change results, so they stay out of the hash
        "config_hash": config_hash({"command": command, **{k: v for k, v in cfg.items() if k != "out"}}),
        "seed": cfg.get("seed", 0),
        "tool_version": __version__,
    }


def _comment_header(meta: dict, prefix: str) -> str:
    return "".join(f"{prefix} {k}: {v}\n" for k, v in meta.items())


def _write(path, text: str):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fp:
            fp.write(text)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}") from e


def _read_traces(path):
    from .traces import read_traces

    try:
        return read_traces(path)
    except OSError as e:
        raise InputError(f"cannot read traces {path}: {e}") from e
    except (ValueError, KeyError) as e:
        raise InputError(f"malformed trace file {path}: {e}") from e


# ---------------------------------------------------------------- commands


def cmd_collect(cfg: dict, meta: dict) -> dict:
    from .envs.rollout import collect
    from .traces import dump_traces

    if cfg["steps"] < 0:
        raise ConfigError("--steps must be non-negative")
    try:
        ts = collect(cfg["domain"], cfg["steps"], cfg["seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if cfg["compress"]:
        ts = ts.compress()
    ts.meta.update(meta)
    buf = io.StringIO()
    dump_traces(ts, buf)
    _write(cfg["out"], buf.getvalue())
    return {"traces": len(ts), "observations": ts.num_observations}


def _tree(cfg):
    from .traces import build_prefix_tree

    ts = _read_traces(cfg["traces"])
    if cfg["compress"]:
        ts = ts.compress()
    return ts, build_prefix_tree(ts)


def cmd_learn(cfg: dict, meta: dict) -> dict:
    from .objective import check_selfloop_closure
    from .search import SearchConfig, run_search

    ts, tree = _tree(cfg)
    if not tree.observations:
        raise ConfigError(f"trace file {cfg['traces']} holds no observations")
    scfg = SearchConfig(
        u_max=cfg["u_max"],
        t_max=cfg["t_max"],
        tabu_size=cfg["tabu_size"],
        seed=cfg["seed"],
        compressed_mode=cfg["compress"],
        wall_clock_limit=cfg["wall_clock_limit"],
    )
    kw = {"budget": cfg["budget"]} if cfg["method"] == "exact" else {}
    res = run_search(cfg["method"], tree, scfg, **kw)
    assert not cfg["compress"] or not check_selfloop_closure(res.best_rm)
    rm = res.best_rm.with_rewards(estimate_delta_r(res.best_rm, ts))
    out = cfg["out"]
    record = {
        "meta": meta,
        "method": cfg["method"],
        "cost": res.best_cost,
        "iterations": res.iterations_used,
        "restarts": res.restarts,
        "evaluations": res.evaluations,
        "rm": json.loads(dumps(rm, ts.alphabet)),
    }
    _write(out + ".json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    _write(out + ".dot", _comment_header(meta, "//") + to_dot(rm, ts.alphabet))
    _write(out + ".search.csv", _comment_header(meta, "#") + res.trajectory_csv())
    return {"cost": res.best_cost, "states": res.best_rm.num_states}


def cmd_export(cfg: dict, meta: dict) -> dict:
    from .models import build_cp, build_milp, to_cp_text, to_lp

    ts, tree = _tree(cfg)
    fmt = cfg["format"]
    if fmt == "milp":
        model = build_milp(tree, cfg["u_max"], cfg["compress"], ts.alphabet, m_cap=cfg["m_cap"], budget=cfg["budget"])
    elif fmt == "cp":
        model = build_cp(tree, cfg["u_max"], cfg["compress"], ts.alphabet)
    else:
        raise ConfigError(f"unknown export format {fmt!r}")
    model.header.update(config_hash=meta["config_hash"], seed=meta["seed"])
    _write(cfg["out"], to_lp(model) if fmt == "milp" else to_cp_text(model))
    return {"format": fmt}


def cmd_rl(cfg: dict, meta: dict) -> dict:
    from .agent import LoopConfig, run_joint_loop
    from .envs import DOMAINS
    from .envs.fixtures import perfect_cookie_rm, perfect_gravity_rm

    domain = cfg["domain"]
    if domain not in DOMAINS:
        raise ConfigError(f"unknown domain {domain!r}")
    rm = None
    if cfg["perfect_rm"]:
        fixtures = {"cookie": perfect_cookie_rm, "gravity": perfect_gravity_rm}
        if domain not in fixtures:
            raise ConfigError(f"no hand-built machine for domain {domain!r}")
        rm = fixtures[domain]()
    loop = LoopConfig(
        domain=domain,
        u_max=cfg["u_max"],
        t_w=cfg["t_w"],
        t_train=cfg["t_train"],
        epsilon=cfg["epsilon"],
        gamma=cfg["gamma"],
        alpha=cfg["alpha"],
        q_init=cfg["q_init"],
        method=cfg["method"],
        t_max=cfg["t_max"],
        tabu_size=cfg["tabu_size"],
        compressed_mode=cfg["compress"],
        qrm_enabled=cfg["qrm"],
        relearn_budget=cfg["relearn_budget"],
        seed=cfg["seed"],
        log_every=cfg["log_every"],
    )
    res = run_joint_loop(domain, loop, rm=rm)
    alphabet = Alphabet(DOMAINS[domain].propositions)
    out = cfg["out"]
    _write(out + ".csv", _comment_header(meta, "#") + res.reward_csv())
    _write(out + ".rm.json", json.dumps({"meta": meta, "rm": json.loads(dumps(res.rm, alphabet))}, indent=2, sort_keys=True) + "\n")
    _write(out + ".dot", _comment_header(meta, "//") + to_dot(res.rm, alphabet))
    return {"relearns": res.relearns, "episodes": len(res.episode_rewards)}


HANDLERS = {"collect": cmd_collect, "learn": cmd_learn, "export": cmd_export, "rl": cmd_rl}


def main(argv=None) -> int:
    from .models import ModelBudgetExceeded
    from .search import BudgetExceeded
    from .traces import ConfigurationError

    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(ns.command, ns)
        summary = HANDLERS[ns.command](cfg, metadata(ns.command, cfg))
    except (BudgetExceeded, ModelBudgetExceeded) as e:
        print(f"lrm: budget refused: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except InputError as e:
        print(f"lrm: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"lrm: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ConfigurationError, ContractError, ValueError) as e:
        print(f"lrm: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
