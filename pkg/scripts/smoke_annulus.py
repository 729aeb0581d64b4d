import time, json, sys
sys.path.insert(0, "/root/pkg/src")
from torusbreak.numerics import Context
from torusbreak.maps import MapSpec, PotentialSpec, COUPLED_W_4D
from torusbreak.frequencies import NAMED_VECTORS
from torusbreak import lindstedt as L
from torusbreak import pade as P

ctx = Context(60)
om = NAMED_VECTORS["omega_s"].value(ctx)
spec = MapSpec(dim=4, lam=(1.0, 1.0), mu=(0.0, 0.0), epsilon=0.0,
               potential=PotentialSpec(COUPLED_W_4D, gamma=0.01))
t0 = time.time()
ser = L.lindstedt_series(spec, om, 127, ctx=ctx, backend="dd")
t1 = time.time()
print("series 127 in %.1fs" % (t1 - t0), flush=True)
psibar = (1.0, 1.0)
coeffs = [ser.P[j-1][0].value(psibar) for j in range(1, ser.order+1)]
ss = P.ScalarSeries(coeffs=coeffs, ctx=ctx, provenance="smoke")
poles, apx = P.pole_analysis(ss)
est = P.threshold_estimate(poles)
print("comp1 annulus [%.4f, %.4f] crossing %s genuine %d in %.1fs" %
      (est.inner, est.outer, est.crossing, est.n_genuine, time.time()-t1), flush=True)
