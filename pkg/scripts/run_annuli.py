"""Generate the 18 cached 4D Lindstedt point-series for the annulus table.

For each (lambda row) x (frequency vector) pair, compute the order-127
double-double Lindstedt series at gamma=0.01, evaluate each torus component
at psibar=(1,1), and store the scalar eps-series (full precision strings)
plus a quick Pade annulus readout under data/annuli/.
"""
import json, os, sys, time
sys.path.insert(0, "/root/pkg/src")
from torusbreak.numerics import Context
from torusbreak.maps import MapSpec, PotentialSpec, COUPLED_W_4D
from torusbreak.frequencies import NAMED_VECTORS
from torusbreak import lindstedt as L
from torusbreak import pade as P

OUT = "/root/pkg/data/annuli"
ROWS = [("symplectic", (1.0, 1.0)), ("mixed", (1.0, 0.8)), ("dissipative", (0.8, 0.7))]
ORDER = 127
GAMMA = 0.01
PSIBAR = (1.0, 1.0)

os.makedirs(OUT, exist_ok=True)
ctx = Context(60)
for row, lam in ROWS:
    for name in ("omega_s", "omega_u", "omega_tau", "omega_g", "omega_a", "omega_c"):
        path = os.path.join(OUT, f"{row}_{name}.json")
        if os.path.exists(path):
            print(f"{row} {name}: cached", flush=True)
            continue
        om = NAMED_VECTORS[name].value(ctx)
        spec = MapSpec(dim=4, lam=lam, mu=(0.0, 0.0), epsilon=0.0,
                       potential=PotentialSpec(COUPLED_W_4D, gamma=GAMMA))
        t0 = time.time()
        ser = L.lindstedt_series(spec, om, ORDER, ctx=ctx, backend="dd")
        t1 = time.time()
        comps = []
        for i in range(2):
            vals = [ser.P[j - 1][i].value(PSIBAR) for j in range(1, ORDER + 1)]
            comps.append([[ctx.to_str(v.real), ctx.to_str(v.imag)] for v in vals])
        doc = {"row": row, "lam": list(lam), "gamma": GAMMA, "omega": name,
               "order": ORDER, "digits": 60, "psibar": list(PSIBAR),
               "coeffs": comps,
               "mu": [[ctx.to_str(m[i]) for m in ser.mu] for i in range(2)]}
        with open(path + ".tmp", "w") as f:
            json.dump(doc, f)
        os.replace(path + ".tmp", path)
        # quick readout (comp 1 only) for monitoring
        ss = P.ScalarSeries(coeffs=[ser.P[j - 1][0].value(PSIBAR)
                                    for j in range(1, ORDER + 1)], ctx=ctx)
        est = P.threshold_estimate(P.pole_analysis(ss)[0])
        print(f"{row} {name}: series {t1 - t0:.0f}s annulus "
              f"[{est.inner:.4f},{est.outer:.4f}] n={est.n_genuine} "
              f"pade {time.time() - t1:.0f}s", flush=True)
print("done", flush=True)
