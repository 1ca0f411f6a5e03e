"""CPLEX-LP export of the two-index MIP formulations, and ingestion of external solutions.

Naming: ``x_i_j`` arc binaries where node ``n+1`` is the return copy of the
depot; ``u_i`` (deterministic) or ``u_i_g`` (robust) loads; ``w_i`` service
start times. Depot loads and the depot start time are constants (0 and the
depot ready time), so they never appear as variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .routing import DETERMINISTIC, RoutingProblem, Solution, big_m_time


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _term(coef: float, var: str, first: bool) -> str:
    if coef == 1:
        body = var
        sign = "+"
    elif coef == -1:
        body = var
        sign = "-"
    else:
        sign = "-" if coef < 0 else "+"
        body = f"{_num(abs(coef))} {var}"
    if first:
        return body if sign == "+" else f"- {body}"
    return f"{sign} {body}"


MAX_LINE = 255


def _expr(terms) -> str:
    """Join terms, wrapping onto indented continuation lines to keep rows short."""
    lines, cur = [], ""
    for k, (c, v) in enumerate(terms):
        piece = _term(c, v, k == 0)
        if cur and len(cur) + len(piece) + 1 > MAX_LINE:
            lines.append(cur)
            cur = "   " + piece
        else:
            cur = f"{cur} {piece}" if cur else piece
    lines.append(cur)
    return "\n".join(lines)


def arcs(n: int) -> list[tuple[int, int]]:
    """Arc set: depot->customer, customer->customer, customer->return depot."""
    out = [(0, j) for j in range(1, n + 1)]
    out += [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    out += [(i, n + 1) for i in range(1, n + 1)]
    return out


@dataclass(frozen=True)
class LpCounts:
    binaries: int
    continuous: int
    constraints: dict


def expected_counts(n: int, mode: str, gamma: int = 0) -> LpCounts:
    """Variable and per-family constraint counts implied by the formulations."""
    n_arcs = n + n * (n - 1) + n
    into_customer = n * n  # arcs whose head is a customer
    fam = {"visit": n, "balance": n, "fleet": 1}
    if mode == DETERMINISTIC:
        fam["load"] = into_customer
        cont = 2 * n
    else:
        fam["load"] = (gamma + 1) * into_customer
        fam["load_dev"] = gamma * into_customer
        cont = (gamma + 1) * n + n
    fam["time"] = into_customer
    fam["return"] = n
    return LpCounts(n_arcs, cont, fam)


def export_lp(problem: RoutingProblem) -> str:
    n = problem.n_customers
    C = range(1, n + 1)
    end = n + 1
    t = problem.travel
    d = problem.demand
    Q = problem.capacity
    T = big_m_time(problem)
    s = problem.service
    robust = problem.mode != DETERMINISTIC
    G = problem.gamma if robust else 0
    worst = d + problem.deviation if robust else d
    A = arcs(n)

    def x(i, j):
        return f"x_{i}_{j}"

    def u(i, g=None):
        return f"u_{i}" if g is None else f"u_{i}_{g}"

    def node(j):
        return 0 if j == end else j

    lines = [f"\\ {problem.mode} CVRPTW, {n} customers" + (f", budget {G}" if robust else ""), "Minimize"]
    obj = [(float(t[i][node(j)]), x(i, j)) for i, j in A]
    lines.append(" obj: " + _expr(obj))
    lines.append("Subject To")

    for j in C:
        lines.append(f" visit_{j}: " + _expr([(1, x(i, jj)) for i, jj in A if jj == j]) + " = 1")
    for i in C:
        terms = [(1, x(a, b)) for a, b in A if b == i] + [(-1, x(a, b)) for a, b in A if a == i]
        lines.append(f" balance_{i}: " + _expr(terms) + " = 0")
    terms = [(1, x(0, j)) for j in C] + [(-1, x(i, end)) for i in C]
    lines.append(" fleet: " + _expr(terms) + " = 0")

    into = [(i, j) for i, j in A if j != end]
    gammas = [None] if not robust else list(range(G + 1))
    # u_j - u_i - (d_j + Q) x_ij >= -Q ; depot load is the constant 0
    for g in gammas:
        for i, j in into:
            terms = [(1, u(j, g))]
            if i != 0:
                terms.append((-1, u(i, g)))
            terms.append((-(float(d[j]) + Q), x(i, j)))
            tag = f"load_{i}_{j}" + ("" if g is None else f"_{g}")
            lines.append(f" {tag}: " + _expr(terms) + f" >= {_num(-Q)}")
    if robust:
        for g in range(1, G + 1):
            for i, j in into:
                terms = [(1, u(j, g))]
                if i != 0:
                    terms.append((-1, u(i, g - 1)))
                terms.append((-(float(worst[j]) + Q), x(i, j)))
                lines.append(f" load_dev_{i}_{j}_{g}: " + _expr(terms) + f" >= {_num(-Q)}")
    # w_j - w_i - (s_i + t_ij + T) x_ij >= -T ; the depot start time is a constant
    w0 = float(problem.tw_open[0])
    for i, j in into:
        if i == 0:
            rhs = w0 - T
            terms = [(1, f"w_{j}"), (-(float(t[0][j]) + T), x(0, j))]
        else:
            rhs = -T
            terms = [(1, f"w_{j}"), (-1, f"w_{i}"), (-(float(s[i]) + float(t[i][j]) + T), x(i, j))]
        lines.append(f" time_{i}_{j}: " + _expr(terms) + f" >= {_num(rhs)}")
    # return to the depot before it closes
    for i in C:
        terms = [(1, f"w_{i}"), (float(s[i]) + float(t[i][0]) + T, x(i, end))]
        lines.append(f" return_{i}: " + _expr(terms) + f" <= {_num(float(problem.tw_close[0]) + T)}")

    lines.append("Bounds")
    for g in gammas:
        for i in C:
            lines.append(f" {_num(d[i])} <= {u(i, g)} <= {_num(Q)}")
    for i in C:
        lines.append(f" {_num(problem.tw_open[i])} <= w_{i} <= {_num(problem.tw_close[i])}")
    lines.append("Binaries")
    lines.extend(f" {x(i, j)}" for i, j in A)
    lines.append("End")
    return "\n".join(lines) + "\n"


_ROW = re.compile(r"^\s*(?P<name>[A-Za-z_][\w.]*)\s*:")


def count_lp(text: str) -> dict:
    """Re-parse exported text: per-family constraint counts plus variable counts."""
    section = None
    fam: dict[str, int] = {}
    binaries = 0
    bounded = 0
    for line in text.splitlines():
        head = line.strip()
        if head in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            section = head
            continue
        if not head or head.startswith("\\"):
            continue
        if section == "Subject To":
            m = _ROW.match(line)
            if m is None:  # continuation line
                continue
            name = m.group("name")
            family = re.sub(r"(_\d+)+$", "", name)
            fam[family] = fam.get(family, 0) + 1
        elif section == "Bounds":
            bounded += 1
        elif section == "Binaries":
            binaries += len(head.split())
    return {"constraints": fam, "binaries": binaries, "continuous": bounded}


def read_external_solution(text: str, problem: RoutingProblem) -> Solution:
    """Solution from an external solver's text output.

    Expected layout: an ``objective <value>`` line, then one ``x_i_j <value>``
    line per arc (zero-valued arcs may be omitted). Arcs with value above 0.5
    are used to walk the routes from the depot.
    """
    n = problem.n_customers
    succ: dict[int, list[int]] = {}
    objective = None
    for raw in text.splitlines():
        toks = raw.replace("=", " ").split()
        if not toks or toks[0].startswith("#"):
            continue
        if toks[0].lower() == "objective":
            objective = float(toks[-1])
            continue
        m = re.fullmatch(r"x_(\d+)_(\d+)", toks[0])
        if m and len(toks) >= 2 and float(toks[1]) > 0.5:
            i, j = int(m.group(1)), int(m.group(2))
            succ.setdefault(i, []).append(0 if j == n + 1 else j)
    if objective is None:
        raise ValueError("external solution has no objective line")
    routes = []
    for first in sorted(succ.get(0, [])):
        route, cur = [], first
        while cur != 0:
            if cur in route or len(route) > n:
                raise ValueError("external solution contains a cycle")
            route.append(cur)
            nxt = succ.get(cur)
            if not nxt or len(nxt) != 1:
                raise ValueError(f"customer {cur} has {len(nxt or [])} outgoing arcs")
            cur = nxt[0]
        routes.append(tuple(route))
    return Solution.of(routes, problem)
