"""End-to-end smoke checks for the python bindings."""

import math
import os
import sys

sys.path.insert(0, os.getcwd())

import _sagin  # noqa: E402


def main() -> int:
    scen = _sagin.generate_scenario("", 1)
    assert scen.n_nodes == 6
    assert scen.n_users == 10
    assert scen.node_operator(0) == 0
    assert scen.node_operator(2) == 1
    assert scen.user_operator(0) == 0
    assert scen.user_operator(9) == 1
    assert abs(scen.delta_g - 0.6) < 1e-12

    chans = _sagin.draw_channels(scen, 1)
    assert chans.sigma2_ground > 0.0
    assert chans.sigma2_sat > chans.sigma2_ground

    # deterministic redraw
    again = _sagin.draw_channels(scen, 1)
    assert again.sigma2_ground == chans.sigma2_ground

    state = _sagin.baseline_era(scen, chans)
    total = _sagin.wsr(scen, chans, state)
    assert total > 0.0, "baseline weighted sum rate should be positive"

    rev = _sagin.revenue(scen, chans, state)
    assert abs(rev["u_g"] + rev["u_s"] - rev["rate_sum"]) <= 1e-9 * max(
        1.0, rev["rate_sum"]
    ), "operator revenues must partition the served rate"
    assert abs(rev["wsr"] - total) <= 1e-9 * max(1.0, total)

    res = _sagin.constraint_residuals(scen, chans, state)
    assert "backhaul" in res and "node_power" in res
    assert res["node_power"] <= 1e-6
    assert res["association"] <= 1e-9

    # frozen reference value guards the physics chain end to end
    pl = _sagin.ground_path_loss_db(1.0, 3.0)
    assert math.isclose(pl, 41.942425094393, rel_tol=0, abs_tol=1e-9)
    sat = _sagin.sat_path_loss_db(600.0, 20.0)
    assert math.isclose(sat, 174.023624920952, rel_tol=0, abs_tol=1e-9)

    # tiny experiment through the same entry point the CLI uses
    out = _sagin.run_experiment("single", seeds=1, mbc_enabled=False, format="csv")
    lines = [ln for ln in out.strip().splitlines() if ln]
    assert lines[0].startswith("spec_hash,seed,"), lines[0]
    assert len(lines) >= 2

    print("python smoke checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
