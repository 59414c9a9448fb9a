#!/usr/bin/env python3
"""Re-solve dumped conic programs with cvxpy and freeze the objectives.

Usage:
    cargo test -p conic write_dumps -- --ignored
    python3 tools/crosscheck_conic.py

Reads crates/conic/tests/fixtures/dumps/*.txt and writes the minimized
quadratic objective of each instance to
crates/conic/tests/fixtures/robust_qcqp_expected.json.
"""

import glob
import json
import os

import cvxpy as cp
import numpy as np


def parse(path):
    n_vars = 0
    obj_lin = []       # (var, coeff), maximize
    obj_quad = []      # (i, j, coeff), objective -= c * x_i * x_j
    blocks = []        # (kind, rows, dim) with rows = [(const, [(var, c)])]
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "vars":
                n_vars = int(parts[1])
            elif parts[0] == "obj":
                obj_lin.append((int(parts[1]), float(parts[2])))
            elif parts[0] == "quad":
                obj_quad.append((int(parts[1]), int(parts[2]), float(parts[3])))
            elif parts[0] == "cone":
                kind, rows = parts[1], int(parts[2])
                dim = int(parts[3]) if len(parts) > 3 else None
                blocks.append((kind, [(0.0, []) for _ in range(rows)], dim))
            elif parts[0] == "row":
                k = int(parts[1])
                kind, rows, dim = blocks[-1]
                const, terms = rows[k]
                if parts[2] == "const":
                    rows[k] = (const + float(parts[3]), terms)
                else:
                    terms.append((int(parts[3]), float(parts[4])))
    return n_vars, obj_lin, obj_quad, blocks


def solve(path):
    n, obj_lin, obj_quad, blocks = parse(path)
    x = cp.Variable(n)

    def expr(row):
        const, terms = row
        e = const
        for var, c in terms:
            e = e + c * x[var]
        return e

    objective = sum(c * x[i] for i, c in obj_lin)
    if obj_quad:
        P = np.zeros((n, n))
        for i, j, c in obj_quad:
            if i == j:
                P[i, i] += c
            else:
                P[i, j] += c / 2
                P[j, i] += c / 2
        objective = objective - cp.quad_form(x, cp.psd_wrap(P))

    cons = []
    for kind, rows, dim in blocks:
        exprs = [expr(r) for r in rows]
        if kind == "zero":
            cons += [e == 0 for e in exprs]
        elif kind == "nonneg":
            cons += [e >= 0 for e in exprs]
        elif kind == "soc":
            cons.append(cp.SOC(exprs[0], cp.hstack(exprs[1:])))
        elif kind == "psd":
            # upper triangle, column-major
            mat = [[None] * dim for _ in range(dim)]
            it = iter(exprs)
            for j in range(dim):
                for i in range(j + 1):
                    e = next(it)
                    mat[i][j] = e
                    mat[j][i] = e
            m = cp.bmat(mat)
            cons.append(m >> 0)
        else:
            raise ValueError(kind)

    prob = cp.Problem(cp.Maximize(objective), cons)
    prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200000)
    assert prob.status == "optimal", (path, prob.status)
    return prob.value


def main():
    root = os.path.join(os.path.dirname(__file__), "..", "crates", "conic", "tests", "fixtures")
    values = []
    for path in sorted(glob.glob(os.path.join(root, "dumps", "*.txt"))):
        v = solve(path)
        values.append(-v)  # stored as the minimized ||x||^2
        print(f"{os.path.basename(path)}: {-v:.12f}")
    out = os.path.join(root, "robust_qcqp_expected.json")
    with open(out, "w") as f:
        json.dump(values, f, indent=1)
    print("wrote", out)


if __name__ == "__main__":
    main()
