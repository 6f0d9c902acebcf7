"""LP text export/import and solution value maps.

The writer emits CPLEX-style LP text (Minimize / Subject To / Bounds /
Generals / Binaries / End) with full float precision, so a third-party
solver sees exactly the assembled model. The reader handles what the writer
produces and little more.
"""
from __future__ import annotations

import io
import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .energy_accounting import node_traffic

__all__ = ["export_lp", "read_lp", "LpText", "model_values", "write_values", "read_values",
           "row_violations"]

_WRAP = 200


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _terms(coefs: dict, names) -> list:
    out = []
    for j, c in sorted(coefs.items()):
        sign = "-" if c < 0 else "+"
        out.append(f"{sign} {_num(abs(c))} {names[j]}")
    if out and out[0].startswith("+ "):
        out[0] = out[0][2:]
    return out


def _emit(fh, head: str, parts: list) -> None:
    line = head
    for p in parts:
        if len(line) + len(p) + 1 > _WRAP:
            fh.write(line + "\n")
            line = "   "
        line += " " + p
    fh.write(line + "\n")


def export_lp(model, sink) -> str:
    """Write ``model`` as LP text to a path or text stream; returns the text."""
    buf = io.StringIO()
    buf.write("\\ fogplace placement model\n")
    buf.write(f"\\ {model.n_vars} variables, {model.n_rows} constraints\n")
    buf.write("Minimize\n")
    _emit(buf, " obj:", _terms(model.obj, model.names))
    buf.write("Subject To\n")
    ops = {"<=": "<=", ">=": ">=", "=": "="}
    for name, coefs, sense, rhs in model.rows:
        parts = _terms(coefs, model.names) or ["0", model.names[0] if model.names else ""]
        _emit(buf, f" {name}:", parts + [ops[sense], _num(rhs)])
    buf.write("Bounds\n")
    for j, n in enumerate(model.names):
        lo, hi = model.lb[j], model.ub[j]
        if model.vtype[j] == "B" and lo == 0 and hi == 1:
            continue
        if math.isinf(hi):
            if lo != 0:
                buf.write(f" {n} >= {_num(lo)}\n")
        else:
            buf.write(f" {_num(lo)} <= {n} <= {_num(hi)}\n")
    gens = [n for n, t in zip(model.names, model.vtype) if t == "I"]
    bins = [n for n, t in zip(model.names, model.vtype) if t == "B"]
    buf.write("Generals\n")
    for i in range(0, len(gens), 8):
        buf.write(" " + " ".join(gens[i:i + 8]) + "\n")
    buf.write("Binaries\n")
    for i in range(0, len(bins), 8):
        buf.write(" " + " ".join(bins[i:i + 8]) + "\n")
    buf.write("End\n")
    text = buf.getvalue()
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    elif sink is not None:
        sink.write(text)
    return text


@dataclass
class LpText:
    objective: dict = field(default_factory=dict)     # name -> coef
    rows: list = field(default_factory=list)          # (name, {var: coef}, sense, rhs)
    bounds: dict = field(default_factory=dict)        # name -> (lo, hi)
    generals: list = field(default_factory=list)
    binaries: list = field(default_factory=list)

    def evaluate(self, values: dict) -> float:
        return sum(c * values.get(n, 0.0) for n, c in self.objective.items())


_SECTIONS = {"minimize": "obj", "subject to": "rows", "bounds": "bounds",
             "generals": "gen", "binaries": "bin", "end": "end"}


def _linear(expr: str) -> dict:
    out = defaultdict(float)
    toks = expr.split()
    sign, coef = 1.0, None
    for t in toks:
        if t in "+-":
            sign = -1.0 if t == "-" else 1.0
            continue
        try:
            coef = float(t)
            continue
        except ValueError:
            pass
        out[t] += sign * (1.0 if coef is None else coef)
        sign, coef = 1.0, None
    return dict(out)


def read_lp(source) -> LpText:
    """Parse LP text (path, stream or string holding the text)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = source
    lp = LpText()
    section = None
    stmt = []

    def flush():
        if not stmt:
            return
        body = " ".join(stmt)
        stmt.clear()
        name, _, expr = body.partition(":")
        m = re.search(r"(<=|>=|=)\s*(\S+)\s*$", expr)
        lhs = expr[: m.start()]
        coefs = {k: v for k, v in _linear(lhs).items() if k != "0"}
        lp.rows.append((name.strip(), coefs, m.group(1), float(m.group(2))))

    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in _SECTIONS:
            if section == "rows":
                flush()
            section = _SECTIONS[key]
            continue
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            for k, v in _linear(body).items():
                lp.objective[k] = lp.objective.get(k, 0.0) + v
        elif section == "rows":
            if ":" in line and not line.startswith("    "):
                flush()
            stmt.append(line.strip())
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 5:
                lp.bounds[parts[2]] = (float(parts[0]), float(parts[4]))
            elif len(parts) == 3 and parts[1] == ">=":
                lp.bounds[parts[0]] = (float(parts[2]), math.inf)
        elif section == "gen":
            lp.generals += line.split()
        elif section == "bin":
            lp.binaries += line.split()
    if section == "rows":
        flush()
    return lp


def model_values(model, sol) -> dict:
    """Values of every model variable implied by a flow-level solution."""
    inst = model.inst
    ph = inst.phases
    vals = {}
    col = model.col

    def put(key, v):
        if key in col:
            vals[model.names[col[key]]] = float(v)

    for d in inst.candidates:
        n = sol.phi.get(d, 0)
        put(("Y", d), 1 if n > 0 else 0)
        put(("phi", d), n)
        put(("taup", d), sol.tau_p.get(d, 0.0) if n > 0 else 0.0)
    for (s, d), n in sol.omega.items():
        put(("omega", s, d), n)
    pa, pb = defaultdict(int), defaultdict(int)
    for (s, j, d), n in sol.raw_bs.items():
        put(("xa", s, j, d), n)
        pa[(s, j)] += n
    for (s, j, d), n in sol.fb_bs.items():
        put(("xb", s, j, d), n)
        pb[(s, j)] += n
    ba, bb = defaultdict(int), defaultdict(int)
    for (s, j), n in pa.items():
        put(("Pa", s, j), n)
        ba[j] += n * ph.ra
    for (s, j), n in pb.items():
        put(("Pb", s, j), n)
        bb[j] += n * ph.rb
    for j, v in ba.items():
        put(("betaa", j), v)
    for j, v in bb.items():
        put(("betab", j), v)
    P, F, S = node_traffic(sol)
    out_st, in_st = defaultdict(float), defaultdict(float)
    for (_, _, u, v), f in sol.flows.get("storage", {}).items():
        out_st[u] += f
        in_st[v] += f
    for v in inst.network_nodes:
        put(("P", v), P.get(v, 0.0))
        put(("za", v), 1 if P.get(v, 0.0) > 0 else 0)
        put(("F", v), F.get(v, 0.0))
        put(("zb", v), 1 if F.get(v, 0.0) > 0 else 0)
        put(("S", v), S.get(v, 0.0))
        th = 1 if out_st[v] > 0 else 0
        vt = 1 if in_st[v] > 0 else 0
        put(("thc", v), th)
        put(("vthc", v), vt)
        put(("zc", v), th | vt)
        put(("nu", v), th ^ vt)
    return vals


def row_violations(lp: LpText, values: dict, tol: float = 1e-6) -> list:
    """Rows of ``lp`` violated by ``values`` (relative tolerance)."""
    bad = []
    for name, coefs, sense, rhs in lp.rows:
        lhs = sum(c * values.get(n, 0.0) for n, c in coefs.items())
        scale = max(1.0, abs(rhs), *(abs(c * values.get(n, 0.0)) for n, c in coefs.items()))
        slack = tol * scale
        ok = (lhs <= rhs + slack if sense == "<=" else
              lhs >= rhs - slack if sense == ">=" else abs(lhs - rhs) <= slack)
        if not ok:
            bad.append((name, lhs, sense, rhs))
    for n, (lo, hi) in lp.bounds.items():
        v = values.get(n, 0.0)
        if v < lo - tol or v > hi + tol:
            bad.append((n, v, "in", (lo, hi)))
    return bad


def write_values(values: dict, sink) -> str:
    text = json.dumps(dict(sorted(values.items())), indent=1)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    elif sink is not None:
        sink.write(text)
    return text


def read_values(source) -> dict:
    if isinstance(source, (str, Path)):
        source = Path(source).read_text()
    elif hasattr(source, "read"):
        source = source.read()
    return {k: float(v) for k, v in json.loads(source).items()}
