"""A map with a jump that still admits a weak certificate.

``h(x) = x - 1/2`` for ``x <= 0`` and ``x + 1/2`` otherwise has no preimage
for targets in ``(-1/2, 1/2)``; the auxiliary map has no fixed point and the
grid oracle shows how far it stays from having one.
"""


from localinv import certify
from localinv.cert import build_tilde
from localinv.fixedpoint import grid_min_residual
from localinv.maps import LinearMap
from localinv.spaces import interval
from localinv.suite import get_problem


def main():
    f = get_problem("ha_weakA", a=0.0, c=1.0).map
    body, A = interval(-1, 1), LinearMap([[1.0]])
    cert = certify(f, [0.0], A, body, 0.49, seed=42, target_center=[0.0])
    print(f"certificate: {cert.classification} (min residual {cert.min_residual:.4f})")
    for y in (-0.45, -0.1, 0.3):
        r, x = grid_min_residual(build_tilde(f, [0.0], [y], A, body), body, 1e-3)
        print(f"  y={y:+.2f}: smallest |T(x) - x| = {r:.4f} at x = {x[0]:+.3f}, "
              f"closed form {0.5 - abs(y):.4f}")


if __name__ == "__main__":
    main()
