"""Smoke test for the gepsim Python bindings.

Build first:  maturin develop -m crates/py/Cargo.toml --release
"""

import os
import tempfile

import gepsim

EPS = 0.1

inst = gepsim.Instance.standard("symmetric", 4, 7)
print(inst, "kappa_B=%.3g rho=%.3g" % (inst.kappa_b(), inst.rho()))

params = gepsim.choose_params(EPS, inst.rho())
assert params["p"] % 2 == 1 and abs(params["tau"] - params["p"] * params["h"]) < 1e-12

for j, lam, est, err, mass in gepsim.recover_modes(inst, EPS):
    print("mode %d lambda=%+.5f estimate=%+.5f err=%.2e mass=%.3f" % (j, lam, est, err, mass))
    assert err <= EPS

ode = gepsim.run(inst, EPS, phi0="eigvec:0")
qpe = gepsim.run(inst, EPS, method="qpe", phi0="eigvec:0")
print("ode", ode["estimates"], "qpe", qpe["estimates"])
assert abs(sum(ode["probs"]) - 1.0) < 1e-9

pencil = gepsim.Instance.from_matrices([[2, 0], [0, -1]], [[1, 0], [0, 2]])
assert max(abs(a - b) for a, b in zip(pencil.truth, [-0.5, 2.0])) < 1e-12, pencil.truth
values, _, _ = gepsim.gen_eig(pencil.a, pencil.b)
assert max(abs(a - b) for a, b in zip(sorted(v.real for v in values), [-0.5, 2.0])) < 1e-12

gamma, theta = gepsim.crawford(pencil.a, pencil.b)
print("crawford gamma=%.4f theta=%s" % (gamma, theta))
assert abs(gepsim.chord(1.0, 1.0)) < 1e-15

cond = gepsim.check_cond_m(inst, EPS)
print("kappa_M=%.3g hard_pass=%s" % (cond["kappa_m"], cond["hard_pass"]))

be = gepsim.verify_be(pencil, 0.5, p=3)
print("block-encoding alpha=%.4f q=%d defects=%.1e %.1e"
      % (be["alpha"], be["q"], be["unitarity_defect"], be["extraction_defect"]))
assert be["extraction_defect"] < 1e-8

with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "inst.json")
    inst.save(path)
    again = gepsim.Instance.load(path)
    assert again.n == inst.n and max(abs(a - b) for a, b in zip(again.truth, inst.truth)) < 1e-12

try:
    gepsim.Instance.load("/nonexistent/instance.json")
except OSError:
    pass
else:
    raise AssertionError("expected OSError")

print("smoke ok")
