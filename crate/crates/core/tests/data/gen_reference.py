"""Regenerates the reference voltage and generation tables with PYPOWER
(Newton, no Q limits).

    pip install pypower numpy
    python gen_reference.py
"""
import re
import sys
from pathlib import Path

import numpy as np
from pypower.api import ppoption, runpf

HERE = Path(__file__).resolve().parent
CASES = HERE.parent.parent / "data"


def load(path):
    txt = path.read_text(errors="replace")
    txt = re.sub(r"%[^\n]*", "", txt)
    ppc = {"version": "2"}
    ppc["baseMVA"] = float(re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", txt).group(1))
    for name in ["bus", "gen", "branch"]:
        m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, txt, re.S)
        rows = [r for r in re.split(r"[;\n]", m.group(1)) if r.strip()]
        ppc[name] = np.array([[float(x) for x in r.split()] for r in rows])
    return ppc


def main(names):
    opt = ppoption(PF_ALG=1, PF_TOL=1e-10, PF_MAX_IT=30, ENFORCE_Q_LIMS=0, VERBOSE=0, OUT_ALL=0)
    for name in names:
        res, ok = runpf(load(CASES / f"{name}.m"), opt)
        if not ok:
            sys.exit(f"{name}: PYPOWER did not converge")
        out = HERE / f"{name}_reference.csv"
        with out.open("w") as f:
            f.write("bus,vm,va_rad\n")
            for row in res["bus"]:
                f.write(f"{int(row[0])},{row[7]:.12f},{np.deg2rad(row[8]):.12f}\n")
        print("wrote", out)
        # real power per generator bus (in-service units summed), pu
        base = res["baseMVA"]
        pg = {}
        for row in res["gen"]:
            if row[7] > 0:
                pg[int(row[0])] = pg.get(int(row[0]), 0.0) + row[1] / base
        out = HERE / f"{name}_gen_reference.csv"
        with out.open("w") as f:
            f.write("bus,p_pu\n")
            for bus, p in sorted(pg.items()):
                f.write(f"{bus},{p:.12f}\n")
        print("wrote", out)


if __name__ == "__main__":
    main(sys.argv[1:] or ["case14", "case30", "case118", "case145"])
