"""MILP and CP formulations of the LRM problem as text exports.

The MILP goes out in CPLEX LP format; the CP model uses the line-oriented
grammar described in ``docs/cp_format.md``.  Both can be parsed back and
checked against a concrete machine with :func:`substitute_and_score`, which
rebuilds the full variable assignment the machine implies from the model
text alone (tree structure included) and reports the first violated
constraint.

Tree nodes, states and observation columns appear in names as integers:
``x_<node>_<state>``, ``d_<state>_<col>_<state>`` and so on, where ``<col>``
indexes the sorted corpus alphabet listed in the header.
"""
from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .objective import table_of
from .rm import RewardMachine
from .traces import PrefixTree

DEFAULT_VARIABLE_BUDGET = 2_000_000
FEAS_TOL = 1e-7


class ModelBudgetExceeded(RuntimeError):
    pass


@dataclass
class Constraint:
    name: str
    coeffs: dict
    sense: str  # "<=", ">=" or "="
    rhs: float

    @property
    def family(self) -> str:
        return family_of(self.name)

    def holds(self, values: dict, tol=FEAS_TOL) -> bool:
        lhs = sum(c * values[v] for v, c in self.coeffs.items())
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol


def family_of(name: str) -> str:
    """Constraint family, the name prefix before the first underscore."""
    return name.split("_", 1)[0]


@dataclass
class MilpModel:
    header: dict
    objective: dict
    constraints: list
    binaries: list
    continuous: list = field(default_factory=list)

    @property
    def sigma(self) -> list:
        return self.header["sigma"]

    def counts(self) -> dict:
        out = defaultdict(int)
        for c in self.constraints:
            out[c.family] += 1
        return dict(out)


@dataclass
class CpModel:
    header: dict
    domains: dict  # d variable -> (lo, hi)
    exprs: list  # (name, kind, args) in definition order
    if_then: list  # (name, (var, value), (var, value))
    objective: list  # (weight, node, col)

    @property
    def sigma(self) -> list:
        return self.header["sigma"]


def _header(tree: PrefixTree, u_max, compressed_mode, alphabet=None, **extra) -> dict:
    sigma = tree.observations
    names = [alphabet.label(s) if alphabet else str(s) for s in sigma]
    return {
        "tool_version": __version__,
        "sigma_size": len(sigma),
        "u_max": u_max,
        "nodes": len(tree),
        "compressed_mode": int(bool(compressed_mode)),
        "sigma": sigma,
        "sigma_names": names,
        **extra,
    }


def _inner_edges(tree: PrefixTree):
    """(node, child) for every non-root node with children."""
    for n in range(1, len(tree)):
        for c in tree.children[n].values():
            yield n, c


# ---------------------------------------------------------------- MILP


def build_milp(
    tree: PrefixTree,
    u_max: int,
    compressed_mode: bool = False,
    alphabet=None,
    m_cap: int | None = None,
    budget: int = DEFAULT_VARIABLE_BUDGET,
) -> MilpModel:
    """Assemble the MILP.

    ``m_cap`` bounds the prediction-set cardinalities m (and the big-M
    ``log K``).  By default it is |Sigma|, which is always enough; pass
    ``2 ** |Sigma|`` for the untightened model.
    """
    sigma = tree.observations
    S = len(sigma)
    col = {s: j for j, s in enumerate(sigma)}
    U = range(u_max)
    K = m_cap if m_cap is not None else max(S, 1)
    if K < max(S, 1):
        raise ValueError(f"m_cap={K} is below |Sigma|={S}; the model would cut feasible machines")
    n_vars = len(tree) * u_max + u_max * S * (u_max + S + K) + len(tree)
    if u_max * S * K > budget or n_vars > budget:
        raise ModelBudgetExceeded(
            f"{max(u_max * S * K, n_vars)} variables (K={K}) exceeds budget {budget}"
        )
    logK = math.log(K)
    nodes = range(1, len(tree))
    obs = [None] + [col[o] for o in tree.obs[1:]]
    cons = []

    def add(name, coeffs, sense, rhs):
        cons.append(Constraint(name, {k: v for k, v in coeffs}, sense, rhs))

    for n in nodes:
        j = obs[n]
        for u in U:
            terms = [(f"z_{n}", 1.0)]
            terms += [(f"y_{u}_{j}_{m}", -math.log(m)) for m in range(2, K + 1)]
            terms.append((f"x_{n}_{u}", -logK))
            add(f"cost_n{n}_u{u}", terms, ">=", -logK)
    for u in U:
        for j in range(S):
            add(f"size_u{u}_s{j}", [(f"y_{u}_{j}_{m}", 1.0) for m in range(1, K + 1)], "=", 1.0)
    for u in U:
        for j in range(S):
            terms = [(f"p_{u}_{j}_{k}", 1.0) for k in range(S)]
            terms += [(f"y_{u}_{j}_{m}", -float(m)) for m in range(1, K + 1)]
            add(f"count_u{u}_s{j}", terms, "=", 0.0)
    for n, c in _inner_edges(tree):
        for u in U:
            add(f"witness_n{n}_c{c}_u{u}", [(f"p_{u}_{obs[n]}_{obs[c]}", 1.0), (f"x_{n}_{u}", -1.0)], ">=", 0.0)
    for u in U:
        for j in range(S):
            add(f"delta_u{u}_s{j}", [(f"d_{u}_{j}_{v}", 1.0) for v in U], "=", 1.0)
    for n in range(len(tree)):
        add(f"state_n{n}", [(f"x_{n}_{u}", 1.0) for u in U], "=", 1.0)
    add("root_state", [(f"x_{tree.root}_0", 1.0)], "=", 1.0)
    for n in nodes:
        p = tree.parent[n]
        if p == tree.root:
            # the first observation of a trace does not move the machine
            add(f"first_n{n}", [(f"x_{n}_0", 1.0)], "=", 1.0)
            continue
        for u in U:
            for v in U:
                add(
                    f"step_n{n}_u{u}_v{v}",
                    [(f"x_{p}_{u}", 1.0), (f"x_{n}_{v}", 1.0), (f"d_{u}_{obs[n]}_{v}", -1.0)],
                    "<=",
                    1.0,
                )
    if compressed_mode:
        for u in U:
            for v in U:
                if u == v:
                    continue
                for j in range(S):
                    add(f"closure_u{u}_v{v}_s{j}", [(f"d_{u}_{j}_{v}", 1.0), (f"d_{v}_{j}_{v}", -1.0)], "<=", 0.0)

    binaries = [f"x_{n}_{u}" for n in range(len(tree)) for u in U]
    binaries += [f"d_{u}_{j}_{v}" for u in U for j in range(S) for v in U]
    binaries += [f"p_{u}_{j}_{k}" for u in U for j in range(S) for k in range(S)]
    binaries += [f"y_{u}_{j}_{m}" for u in U for j in range(S) for m in range(1, K + 1)]
    objective = {f"z_{n}": float(tree.weight[n]) for n in nodes if tree.weight[n]}
    header = _header(tree, u_max, compressed_mode, alphabet, m_cap=K)
    return MilpModel(header, objective, cons, binaries, [f"z_{n}" for n in nodes])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _expr(coeffs: dict, width=200) -> list[str]:
    lines, cur = [], ""
    for i, (v, c) in enumerate(coeffs.items()):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        term = f"{sign} {v}" if mag == 1 else f"{sign} {_num(mag)} {v}"
        if i == 0 and sign == "+":
            term = term[2:]
        if cur and len(cur) + len(term) > width:
            lines.append(cur)
            cur = "   " + term
        else:
            cur = f"{cur} {term}" if cur else term
    lines.append(cur or "0 x_0_0")
    return lines


def _header_lines(header: dict, prefix: str) -> list[str]:
    out = []
    for k, v in header.items():
        if k in ("sigma", "sigma_names"):
            continue
        out.append(f"{prefix} {k}: {v}")
    for j, (s, name) in enumerate(zip(header["sigma"], header["sigma_names"])):
        out.append(f"{prefix} sigma[{j}]: {s} {name}")
    return out


def to_lp(model: MilpModel) -> str:
    out = ["\\ LRM MILP model"] + _header_lines(model.header, "\\")
    out.append("Minimize")
    obj = _expr(model.objective) if model.objective else ["0 z_dummy"]
    obj[0] = " obj: " + obj[0]
    out += obj
    out.append("Subject To")
    for c in model.constraints:
        body = _expr(c.coeffs)
        body[0] = f" {c.name}: " + body[0]
        body[-1] += f" {c.sense} {_num(c.rhs)}"
        out += body
    out.append("Bounds")
    out += [f" {v} >= 0" for v in model.continuous]
    out.append("Binaries")
    for i in range(0, len(model.binaries), 10):
        out.append(" " + " ".join(model.binaries[i : i + 10]))
    out.append("End")
    return "\n".join(out) + "\n"


def export_milp(tree: PrefixTree, u_max: int, compressed_mode=False, alphabet=None, **kw) -> str:
    return to_lp(build_milp(tree, u_max, compressed_mode, alphabet, **kw))


def _parse_header(lines, prefix) -> dict:
    header = {"sigma": [], "sigma_names": []}
    for ln in lines:
        body = ln[len(prefix):].strip()
        m = re.match(r"sigma\[(\d+)\]: (\d+) (.*)", body)
        if m:
            header["sigma"].append(int(m.group(2)))
            header["sigma_names"].append(m.group(3))
            continue
        if ": " in body:
            k, v = body.split(": ", 1)
            header[k] = int(v) if re.fullmatch(r"-?\d+", v) else v
    return header


def _parse_terms(tokens) -> dict:
    coeffs = {}
    sign, coef = 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
        elif re.fullmatch(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?", tok):
            coef = float(tok)
        else:
            coeffs[tok] = coeffs.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
    return coeffs


def parse_lp(text: str) -> MilpModel:
    """Parse the LP subset written by :func:`to_lp`."""
    lines = text.splitlines()
    header = _parse_header([ln for ln in lines if ln.startswith("\\")], "\\")
    section = None
    obj_text, pending = [], []
    constraints, binaries, continuous = [], [], []
    for raw in lines:
        ln = raw.strip()
        if not ln or ln.startswith("\\"):
            continue
        key = ln.lower()
        if key in ("minimize", "subject to", "bounds", "binaries", "end"):
            section = key
            continue
        if section == "minimize":
            obj_text.append(ln)
        elif section == "subject to":
            pending.append(ln)
            m = re.search(r"(<=|>=|=)\s*(\S+)$", ln)
            if m:
                name, body = " ".join(pending).split(":", 1)
                pending = []
                lhs = body[: body.rindex(m.group(1))]
                constraints.append(
                    Constraint(name.strip(), _parse_terms(lhs.split()), m.group(1), float(m.group(2)))
                )
        elif section == "bounds":
            continuous.append(ln.split()[0])
        elif section == "binaries":
            binaries += ln.split()
    body = " ".join(obj_text).split(":", 1)[1]
    objective = {v: c for v, c in _parse_terms(body.split()).items() if v != "z_dummy"}
    return MilpModel(header, objective, constraints, binaries, continuous)


# ---------------------------------------------------------------- CP


def build_cp(tree: PrefixTree, u_max: int, compressed_mode=False, alphabet=None) -> CpModel:
    sigma = tree.observations
    S = len(sigma)
    col = {s: j for j, s in enumerate(sigma)}
    obs = [None] + [col[o] for o in tree.obs[1:]]
    domains = {f"d_{u}_{j}": (0, u_max - 1) for u in range(u_max) for j in range(S)}
    exprs = [(f"x_{tree.root}", "const", 0)]
    for n in range(1, len(tree)):
        p = tree.parent[n]
        if p == tree.root:
            exprs.append((f"x_{n}", "const", 0))
        else:
            exprs.append((f"x_{n}", "element", (obs[n], p)))
    witnesses = defaultdict(list)
    for n, c in _inner_edges(tree):
        witnesses[obs[n], obs[c]].append(n)
    for u in range(u_max):
        for j in range(S):
            for k in range(S):
                exprs.append((f"p_{u}_{j}_{k}", "or", (u, tuple(sorted(set(witnesses[j, k]))))))
    for u in range(u_max):
        for j in range(S):
            exprs.append((f"y_{u}_{j}", "sum", tuple(f"p_{u}_{j}_{k}" for k in range(S))))
    if_then = []
    if compressed_mode:
        for u in range(u_max):
            for v in range(u_max):
                if u != v:
                    for j in range(S):
                        if_then.append((f"closure_u{u}_v{v}_s{j}", (f"d_{u}_{j}", v), (f"d_{v}_{j}", v)))
    objective = [(tree.weight[n], n, obs[n]) for n in range(1, len(tree)) if tree.weight[n]]
    return CpModel(_header(tree, u_max, compressed_mode, alphabet), domains, exprs, if_then, objective)


def to_cp_text(model: CpModel) -> str:
    out = ["# LRM CP model"] + _header_lines(model.header, "#")
    out.append("CPMODEL 1")
    for v, (lo, hi) in model.domains.items():
        out.append(f"var {v} int {lo} {hi}")
    for name, kind, args in model.exprs:
        if kind == "const":
            out.append(f"expr {name} = {args}")
        elif kind == "element":
            j, p = args
            out.append(f"expr {name} = element(d_*_{j}, x_{p})")
        elif kind == "or":
            u, ns = args
            out.append(f"expr {name} = or(" + ", ".join(f"x_{n} == {u}" for n in ns) + ")")
        elif kind == "sum":
            out.append(f"expr {name} = sum(" + ", ".join(args) + ")")
    for name, (a, av), (b, bv) in model.if_then:
        out.append(f"constraint {name}: if_then({a} == {av}, {b} == {bv})")
    out.append("minimize")
    for w, n, j in model.objective:
        out.append(f"term {_num(w)} log(element(y_*_{j}, x_{n}))")
    out.append("end")
    return "\n".join(out) + "\n"


def export_cp(tree: PrefixTree, u_max: int, compressed_mode=False, alphabet=None) -> str:
    return to_cp_text(build_cp(tree, u_max, compressed_mode, alphabet))


def parse_cp(text: str) -> CpModel:
    lines = text.splitlines()
    header = _parse_header([ln for ln in lines if ln.startswith("#")], "#")
    domains, exprs, if_then, objective = {}, [], [], []
    for ln in lines:
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("var "):
            _, v, _, lo, hi = ln.split()
            domains[v] = (int(lo), int(hi))
        elif ln.startswith("expr "):
            name, rhs = ln[5:].split(" = ", 1)
            if m := re.fullmatch(r"-?\d+", rhs):
                exprs.append((name, "const", int(rhs)))
            elif m := re.fullmatch(r"element\(d_\*_(\d+), x_(\d+)\)", rhs):
                exprs.append((name, "element", (int(m.group(1)), int(m.group(2)))))
            elif m := re.fullmatch(r"or\((.*)\)", rhs):
                conds = re.findall(r"x_(\d+) == (\d+)", m.group(1))
                u = int(name.split("_")[1])
                if any(int(c[1]) != u for c in conds):
                    raise ValueError(f"malformed or-expression: {ln}")
                exprs.append((name, "or", (u, tuple(int(c[0]) for c in conds))))
            elif m := re.fullmatch(r"sum\((.*)\)", rhs):
                exprs.append((name, "sum", tuple(a.strip() for a in m.group(1).split(",") if a.strip())))
            else:
                raise ValueError(f"cannot parse expression: {ln}")
        elif ln.startswith("constraint "):
            m = re.fullmatch(r"constraint (\S+): if_then\((\S+) == (\d+), (\S+) == (\d+)\)", ln)
            if_then.append((m.group(1), (m.group(2), int(m.group(3))), (m.group(4), int(m.group(5)))))
        elif ln.startswith("term "):
            m = re.fullmatch(r"term (\S+) log\(element\(y_\*_(\d+), x_(\d+)\)\)", ln)
            objective.append((float(m.group(1)), int(m.group(3)), int(m.group(2))))
    return CpModel(header, domains, exprs, if_then, objective)


# ---------------------------------------------------------------- substitution


@dataclass
class Substitution:
    feasible: bool
    objective: float
    violated: str | None = None

    def __iter__(self):
        return iter((self.feasible, self.objective))


def substitute_and_score(model, rm: RewardMachine) -> Substitution:
    """Plug the assignment implied by ``rm`` into ``model`` and score it.

    ``model`` may be a MilpModel/CpModel or the exported text of either.
    """
    if isinstance(model, str):
        model = parse_cp(model) if "CPMODEL" in model else parse_lp(model)
    if isinstance(model, CpModel):
        return _score_cp(model, rm)
    return _score_milp(model, rm)


def _score_cp(model: CpModel, rm: RewardMachine) -> Substitution:
    u_max = int(model.header["u_max"])
    delta = table_of(rm, model.sigma, u_max)
    val = {}
    for v, (lo, hi) in model.domains.items():
        _, u, j = v.split("_")
        val[v] = int(delta[int(u), int(j)])
        if not lo <= val[v] <= hi:
            return Substitution(False, math.nan, "domain")
    for name, kind, args in model.exprs:
        if kind == "const":
            val[name] = args
        elif kind == "element":
            j, p = args
            val[name] = val[f"d_{val[f'x_{p}']}_{j}"]
        elif kind == "or":
            u, ns = args
            val[name] = int(any(val[f"x_{n}"] == u for n in ns))
        elif kind == "sum":
            val[name] = sum(val[a] for a in args)
    for name, (a, av), (b, bv) in model.if_then:
        if val[a] == av and val[b] != bv:
            return Substitution(False, math.nan, family_of(name))
    total = 0.0
    for w, n, j in model.objective:
        y = val[f"y_{val[f'x_{n}']}_{j}"]
        if y == 0:
            return Substitution(False, math.nan, "objective")
        total += w * math.log(y)
    return Substitution(True, total)


def _milp_tree(model: MilpModel) -> dict:
    """Recover (parent, column) per non-root node from the first-step and
    step rows."""
    nodes = {}
    for c in model.constraints:
        if c.name.startswith("first_"):
            nodes[int(c.name.split("_")[1][1:])] = (None, None)
        elif c.name.startswith("step_") and c.name.endswith("_u0_v0"):
            n = int(c.name.split("_")[1][1:])
            parent = col = None
            for v in c.coeffs:
                parts = v.split("_")
                if parts[0] == "x" and int(parts[1]) != n:
                    parent = int(parts[1])
                elif parts[0] == "d":
                    col = int(parts[2])
            nodes[n] = (parent, col)
    return nodes


def _score_milp(model: MilpModel, rm: RewardMachine) -> Substitution:
    h = model.header
    U, S, K = int(h["u_max"]), int(h["sigma_size"]), int(h["m_cap"])
    delta = table_of(rm, model.sigma, U) if S else np.zeros((U, 1), dtype=int)
    node_obs = {}
    for c in model.constraints:
        if c.name.startswith("witness_"):
            # witness_n{n}_c{c}_u{u}: p_{u}_{o(n)}_{o(c)} >= x_{n}_{u}
            _, n, ch, _ = c.name.split("_")
            pvar = next(v for v in c.coeffs if v.startswith("p_"))
            _, _, j, k = pvar.split("_")
            node_obs[int(n[1:])] = int(j)
            node_obs[int(ch[1:])] = int(k)
    structure = _milp_tree(model)
    for n, (_, col) in structure.items():
        if col is not None:
            node_obs[n] = col
    state = {0: 0}
    for n in sorted(structure):
        parent, col = structure[n]
        state[n] = 0 if parent is None else int(delta[state[parent], col])
    N = defaultdict(set)
    for c in model.constraints:
        if c.name.startswith("witness_"):
            _, n, ch, u = c.name.split("_")
            n, ch = int(n[1:]), int(ch[1:])
            if u == "u0":
                N[state[n], node_obs[n]].add(node_obs[ch])

    val = defaultdict(float)
    for n, u in state.items():
        val[f"x_{n}_{u}"] = 1.0
    for u in range(U):
        for j in range(S):
            val[f"d_{u}_{j}_{int(delta[u, j])}"] = 1.0
            preds = N.get((u, j)) or {0}
            for k in preds:
                val[f"p_{u}_{j}_{k}"] = 1.0
            if len(preds) > K:
                return Substitution(False, math.nan, "size")
            val[f"y_{u}_{j}_{len(preds)}"] = 1.0
    # smallest z satisfying its cost rows and z >= 0
    for c in model.constraints:
        if c.name.startswith("cost_"):
            z = next(v for v in c.coeffs if v.startswith("z_"))
            rest = sum(co * val[v] for v, co in c.coeffs.items() if v != z)
            val[z] = max(val[z], (c.rhs - rest) / c.coeffs[z])
    for c in model.constraints:
        if not c.holds(val):
            return Substitution(False, math.nan, c.family)
    return Substitution(True, sum(co * val[v] for v, co in model.objective.items()))
