"""Smoke test for the gridfactor extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`.
"""

import math
import pathlib
import sys

import gridfactor as gf

DATA = pathlib.Path(__file__).resolve().parents[3] / "data"


def close(a, b, tol=1e-12):
    return abs(a - b) < tol


def main():
    tri = gf.Network([(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)], injections=[1.0, -1.0, 0.0])
    assert (tri.n, tri.m, tri.reference) == (3, 3, 3)

    flow = tri.flow()
    assert close(flow["flows"][0], 2 / 3)

    d = tri.ptdf()
    assert all(close(d[l][l], 2 / 3) for l in range(3))

    k = tri.lodf(1)
    assert close(k[3], 1.0) and close(k[2], -1.0)
    assert close(tri.lodf_via_forests(3, 1), 1.0)
    assert close(tri.effective_reactance(1)["effective"], 2 / 3)
    assert tri.matrix_tree_check()["pass"]

    res = tri.glodf([1], method="cross_check")
    assert max(res["residuals"].values()) < 1e-12
    try:
        tri.glodf([1, 3])
    except gf.CutSetError:
        pass
    else:
        raise AssertionError("expected CutSetError")
    assert tri.detect_islanding([1, 3]) and tri.is_cut_set([1, 3])

    inst = tri.adversarial_capacity(1, 3)
    trace = tri.with_capacities(inst["capacities"]).cascade([1], injections=inst["injections"])
    assert [s["tripped"] for s in trace["stages"]] == [[1], [3]]
    assert trace["status"] == {"kind": "islanded", "stage": 1}

    seven = gf.Network.load(str(DATA / "seven_node"))
    blocks = seven.blocks()
    assert blocks["bridges"] == [4, 5] and blocks["cut_vertices"] == [2, 3, 7]
    try:
        seven.lodf(4)
    except gf.BridgeOutageError:
        pass
    else:
        raise AssertionError("expected BridgeOutageError")
    assert seven.simple_cycle_criterion(6, 1) == "zero"
    assert seven.localize([1, 7])["localized"]
    block_of = {line: i for i, block in enumerate(blocks["blocks"]) for line in block}
    pairs = seven.influence_graph()
    assert len(pairs) == 6 and all(block_of[a] == block_of[b] for a, b, _ in pairs)

    k4 = gf.Network.load(str(DATA / "k4.json"))
    stats = k4.perturbation_test([1], trials=20, seed=42)
    assert stats["min_nonzero_fraction"] == 1.0
    assert stats == k4.perturbation_test([1], trials=20, seed=42)

    again = gf.Network.from_json(tri.to_json())
    assert again.edges == tri.edges and again.injections == tri.injections

    try:
        gf.Network([(1, 2, -1.0)])
    except gf.InputError:
        pass
    else:
        raise AssertionError("expected InputError")
    assert math.isinf(tri.edges[0][4])

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
