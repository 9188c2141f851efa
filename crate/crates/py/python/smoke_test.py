"""Smoke test for the qstab_py extension module.

Build and install first, e.g. `maturin develop --release` from crates/py,
then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import qstab_py as q


def main():
    assert "fig1" in q.presets()

    eig = q.eigenvalues("zero", 4)
    for k, lam in enumerate(eig, start=1):
        assert abs(lam - (k * math.pi) ** 2) < 1e-9 * lam, (k, lam)

    cfg = q.Config.preset("fig1")
    cfg.set("t_final", 1.0)
    model = q.Model(cfg)
    assert len(model.eigenvalues) == 5
    x0 = model.initial_state()
    assert abs(model.lyapunov(x0) - 0.75) < 1e-12

    fb = model.feedback(x0)
    assert fb["beta"] >= 0.0
    assert abs(fb["alpha"] + model.k * fb["i1"]) < 1e-15
    ground = [1.0 + 0j] + [0j] * 4
    assert model.dist_to_target(ground) == 0.0

    hyp = model.check_hypotheses()
    assert hyp["coupling_ok"] and hyp["resonance_ok"]

    run = q.simulate(cfg)
    assert not run["aborted"]
    assert len(run["t"]) == 11
    assert run["L_av"][-1] < run["L_av"][0]

    with tempfile.TemporaryDirectory() as tmp:
        cfg.set("output", os.path.join(tmp, "smoke.csv"))
        written = q.run_experiment(cfg)
        assert os.path.exists(written["path"])
        plots = q.export_plotdata(written["path"])
        assert len(plots) == 4 and all(os.path.exists(p) for p in plots)

    sweep_cfg = q.Config.preset("fig3-4")
    sweep_cfg.set("t_final", 0.2)
    sweep_cfg.set("epsilons", "1e-2, 1e-3")
    sweep = q.run_sweep(sweep_cfg)
    assert len(sweep["entries"]) == 2 and len(sweep["ratios"]) == 1

    try:
        cfg.set("dt", 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("dt > epsilon must be rejected")

    print("qstab_py smoke test passed")


if __name__ == "__main__":
    main()
