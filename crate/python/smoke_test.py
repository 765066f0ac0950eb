"""Smoke test for the pybingham extension module."""

import math

import pybingham


def main():
    prob = pybingham.Problem.poiseuille(16)
    print("ndof", prob.ndof, "params", prob.params)

    res = prob.solve("ep")
    print(res)
    assert res.converged, res.stop_reason
    assert res.history[0]["k"] == 0
    assert res.last["div_l2"] < 1e-8

    l2, h1 = prob.poiseuille_errors(res.u)
    print("errors l2 %.3e h1 %.3e" % (l2, h1))
    assert h1 < 5e-3

    s0 = prob.sigma0_estimate(res.u)
    print("sigma0 estimate %.3f" % s0)
    assert 0.0 < s0 < prob.params["sigma"]

    lam = prob.recover_multiplier(res.u)
    assert len(lam) == len(prob.vertices())

    qp = prob.solve("qp")
    ssn = prob.solve("ssn")
    print(qp)
    print(ssn)
    assert qp.last["div_l2"] > res.last["div_l2"]

    assert math.isclose(pybingham.poiseuille_exact(0.5, 0.0), 0.125)
    assert pybingham.huber_norm(2.0, 1.0, 1.0) == 1.5

    try:
        prob.energy([0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch not reported")

    print("smoke test passed")


if __name__ == "__main__":
    main()
